//! Tiled alpha-compositing of projected Gaussians, plus a brute-force
//! reference path.
//!
//! Determinism contract: splats are globally sorted front-to-back with an
//! index tie-break, every pixel belongs to exactly one 16x16 tile, and each
//! tile accumulates sequentially in the sorted order. Tiles are independent,
//! so parallelizing over tiles is bitwise reproducible at any thread count.
//! The brute-force path walks the same sorted list per pixel with identical
//! arithmetic; with early exit disabled the two agree bit-for-bit, since the
//! shared Mahalanobis cutoff defines where a splat's footprint ends.

use nalgebra::{Matrix2, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::splat::camera::{Camera, ZNEAR};

/// Tile edge in pixels.
pub const TILE: usize = 16;

/// Low-pass dilation added to projected covariances (pixel^2).
pub const DEFAULT_DILATION: f64 = 0.3;

/// Footprint cutoff: contributions beyond this Mahalanobis distance are
/// defined to be zero (both compositing paths apply it identically).
pub const MAHALANOBIS_CUTOFF: f64 = 3.0;

/// Transmittance threshold at which a pixel stops accepting splats. Low
/// enough that truncation stays far below the tiled-vs-reference tolerance.
pub const DEFAULT_EARLY_EXIT: f64 = 1e-9;

/// A projected Gaussian ready for compositing.
#[derive(Clone, Copy, Debug)]
pub struct Splat2D {
    pub mean: [f64; 2],
    /// Packed inverse 2D covariance (a, b, c) for q = a dx^2 + 2b dx dy + c dy^2.
    pub cov_inv: [f64; 3],
    pub depth: f64,
    pub opacity: f64,
    /// Conservative footprint radius (3 sigma of the major axis), pixels.
    pub radius: f64,
    /// Caller's identifier (e.g. primitive slot); preserved through sorting.
    pub index: u32,
}

/// Projects a world-space Gaussian into pixel space: mean by perspective
/// projection, covariance by the local affine (Jacobian) approximation, plus
/// `dilation` on the diagonal. Returns `None` when behind the camera,
/// degenerate, or entirely off-screen.
pub fn project_gaussian(
    cam: &Camera,
    mean: &Vector3<f64>,
    cov_world: &nalgebra::Matrix3<f64>,
    opacity: f64,
    index: u32,
    dilation: f64,
) -> Option<Splat2D> {
    let t = cam.world_to_cam.transform_point(&nalgebra::Point3::from(*mean)).coords;
    if t.z <= ZNEAR {
        return None;
    }
    let j = cam.projection_jacobian(mean)?;
    let cov2: Matrix2<f64> = j * cov_world * j.transpose();
    let a = cov2[(0, 0)] + dilation;
    let b = cov2[(0, 1)];
    let c = cov2[(1, 1)] + dilation;
    let det = a * c - b * b;
    if !(det > 1e-300) || !(a > 0.0) || !(c > 0.0) {
        return None;
    }
    let mid = 0.5 * (a + c);
    let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
    let radius = MAHALANOBIS_CUTOFF * lambda_max.sqrt();

    let inv_z = 1.0 / t.z;
    let mx = cam.fx * t.x * inv_z + cam.cx;
    let my = cam.fy * t.y * inv_z + cam.cy;
    if mx + radius < 0.0
        || mx - radius > cam.width as f64
        || my + radius < 0.0
        || my - radius > cam.height as f64
    {
        return None;
    }
    Some(Splat2D {
        mean: [mx, my],
        cov_inv: [c / det, -b / det, a / det],
        depth: t.z,
        opacity,
        radius,
        index,
    })
}

/// Sorts front-to-back by (depth, index); the unique index makes the order a
/// strict total order, which the compositor requires.
pub fn sort_splats(splats: &mut [Splat2D]) {
    splats.sort_by(|p, q| {
        p.depth
            .partial_cmp(&q.depth)
            .expect("splat depths are finite")
            .then(p.index.cmp(&q.index))
    });
}

fn check_sorted(splats: &[Splat2D]) -> Result<()> {
    for w in splats.windows(2) {
        let ord = w[0]
            .depth
            .partial_cmp(&w[1].depth)
            .ok_or(Error::UnsortedSplats)?
            .then(w[0].index.cmp(&w[1].index));
        if ord != std::cmp::Ordering::Less {
            return Err(Error::UnsortedSplats);
        }
    }
    Ok(())
}

/// One recorded contribution to a pixel: the splat-list position and the
/// composite weight w = alpha * transmittance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub splat: u32,
    pub weight: f64,
}

#[derive(Clone, Debug)]
#[derive(PartialEq)]
pub struct CompositeOptions {
    /// Stop a pixel once transmittance drops below this; <= 0 disables.
    pub early_exit: f64,
    /// Record per-pixel hit lists (front-to-back) for gradient passes.
    pub record_hits: bool,
}

impl Default for CompositeOptions {
    fn default() -> Self {
        CompositeOptions { early_exit: DEFAULT_EARLY_EXIT, record_hits: false }
    }
}

#[derive(Clone, Debug)]
pub struct CompositeOutput {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Premultiplied accumulation, `channels` per pixel, row-major.
    pub accum: Vec<f64>,
    /// Coverage 1 - final transmittance per pixel.
    pub alpha: Vec<f64>,
    /// Front-to-back contributions per pixel when requested.
    pub hits: Option<Vec<Vec<Hit>>>,
}

/// Pixel-range of a splat's footprint along one axis: centers i + 0.5 with
/// |i + 0.5 - m| <= r. Outside it the cutoff guarantees zero contribution.
fn pixel_span(m: f64, r: f64, limit: usize) -> Option<(usize, usize)> {
    let lo = (m - r - 0.5).ceil().max(0.0);
    let hi = (m + r - 0.5).floor().min(limit as f64 - 1.0);
    if lo > hi {
        return None;
    }
    Some((lo as usize, hi as usize))
}

struct PixelState {
    transmittance: f64,
    done: bool,
}

/// Tiled front-to-back compositor. `values` holds `channels` attribute
/// scalars per splat (same order as `splats`, which must be sorted).
pub fn composite(
    width: usize,
    height: usize,
    splats: &[Splat2D],
    values: &[f64],
    channels: usize,
    opts: &CompositeOptions,
) -> Result<CompositeOutput> {
    if values.len() != splats.len() * channels {
        return Err(Error::LayoutMismatch(format!(
            "{} attribute scalars for {} splats x {} channels",
            values.len(),
            splats.len(),
            channels
        )));
    }
    check_sorted(splats)?;

    let tiles_x = width.div_ceil(TILE);
    let tiles_y = height.div_ceil(TILE);

    // Conservative per-tile splat lists from footprint boxes.
    let tile_lists: Vec<Vec<u32>> = (0..tiles_x * tiles_y)
        .into_par_iter()
        .map(|ti| {
            let tx = (ti % tiles_x) * TILE;
            let ty = (ti / tiles_x) * TILE;
            let (x0, x1) = (tx as f64, (tx + TILE) as f64);
            let (y0, y1) = (ty as f64, (ty + TILE) as f64);
            splats
                .iter()
                .enumerate()
                .filter(|(_, s)| {
                    s.mean[0] + s.radius >= x0
                        && s.mean[0] - s.radius <= x1
                        && s.mean[1] + s.radius >= y0
                        && s.mean[1] - s.radius <= y1
                })
                .map(|(i, _)| i as u32)
                .collect()
        })
        .collect();

    struct TileResult {
        ti: usize,
        accum: Vec<f64>,
        alpha: Vec<f64>,
        hits: Option<Vec<Vec<Hit>>>,
    }

    let results: Vec<TileResult> = (0..tiles_x * tiles_y)
        .into_par_iter()
        .map(|ti| {
            let tx = (ti % tiles_x) * TILE;
            let ty = (ti / tiles_x) * TILE;
            let tw = TILE.min(width - tx);
            let th = TILE.min(height - ty);
            let npx = tw * th;
            let mut accum = vec![0.0f64; npx * channels];
            let mut state: Vec<PixelState> = (0..npx)
                .map(|_| PixelState { transmittance: 1.0, done: false })
                .collect();
            let mut hits: Option<Vec<Vec<Hit>>> =
                opts.record_hits.then(|| vec![Vec::new(); npx]);
            let mut done_count = 0usize;

            for &si in &tile_lists[ti] {
                if done_count == npx {
                    break;
                }
                let s = &splats[si as usize];
                let vals = &values[si as usize * channels..(si as usize + 1) * channels];
                let Some((gx0, gx1)) = pixel_span(s.mean[0], s.radius, width) else {
                    continue;
                };
                let Some((gy0, gy1)) = pixel_span(s.mean[1], s.radius, height) else {
                    continue;
                };
                let x_lo = gx0.max(tx);
                let x_hi = gx1.min(tx + tw - 1);
                let y_lo = gy0.max(ty);
                let y_hi = gy1.min(ty + th - 1);
                if x_lo > x_hi || y_lo > y_hi {
                    continue;
                }
                let [ia, ib, ic] = s.cov_inv;
                for py in y_lo..=y_hi {
                    for px in x_lo..=x_hi {
                        let local = (py - ty) * tw + (px - tx);
                        let st = &mut state[local];
                        if st.done {
                            continue;
                        }
                        let dx = px as f64 + 0.5 - s.mean[0];
                        let dy = py as f64 + 0.5 - s.mean[1];
                        let q = ia * dx * dx + 2.0 * ib * dx * dy + ic * dy * dy;
                        if q > MAHALANOBIS_CUTOFF * MAHALANOBIS_CUTOFF {
                            continue;
                        }
                        let alpha = s.opacity * (-0.5 * q).exp();
                        let w = alpha * st.transmittance;
                        let out = &mut accum[local * channels..(local + 1) * channels];
                        for (o, v) in out.iter_mut().zip(vals) {
                            *o += w * v;
                        }
                        if let Some(h) = hits.as_mut() {
                            h[local].push(Hit { splat: si, weight: w });
                        }
                        st.transmittance *= 1.0 - alpha;
                        if opts.early_exit > 0.0 && st.transmittance < opts.early_exit {
                            st.done = true;
                            done_count += 1;
                        }
                    }
                }
            }

            let alpha = state.iter().map(|s| 1.0 - s.transmittance).collect();
            TileResult { ti, accum, alpha, hits }
        })
        .collect();

    let mut out = CompositeOutput {
        width,
        height,
        channels,
        accum: vec![0.0; width * height * channels],
        alpha: vec![0.0; width * height],
        hits: opts.record_hits.then(|| vec![Vec::new(); width * height]),
    };
    for r in results {
        let tx = (r.ti % tiles_x) * TILE;
        let ty = (r.ti / tiles_x) * TILE;
        let tw = TILE.min(width - tx);
        let th = TILE.min(height - ty);
        for ly in 0..th {
            for lx in 0..tw {
                let local = ly * tw + lx;
                let global = (ty + ly) * width + (tx + lx);
                out.alpha[global] = r.alpha[local];
                out.accum[global * channels..(global + 1) * channels]
                    .copy_from_slice(&r.accum[local * channels..(local + 1) * channels]);
            }
        }
        if let (Some(dst), Some(src)) = (out.hits.as_mut(), r.hits) {
            for (local, list) in src.into_iter().enumerate() {
                let (ly, lx) = (local / tw, local % tw);
                dst[(ty + ly) * width + (tx + lx)] = list;
            }
        }
    }
    Ok(out)
}

/// Reference compositor: per pixel, walks the full sorted splat list with
/// the same cutoff and blending arithmetic, no tiling and no early exit.
pub fn composite_bruteforce(
    width: usize,
    height: usize,
    splats: &[Splat2D],
    values: &[f64],
    channels: usize,
) -> Result<CompositeOutput> {
    if values.len() != splats.len() * channels {
        return Err(Error::LayoutMismatch(format!(
            "{} attribute scalars for {} splats x {} channels",
            values.len(),
            splats.len(),
            channels
        )));
    }
    check_sorted(splats)?;

    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..height)
        .into_par_iter()
        .map(|py| {
            let mut accum = vec![0.0f64; width * channels];
            let mut alpha = vec![0.0f64; width];
            for px in 0..width {
                let mut transmittance = 1.0f64;
                for (si, s) in splats.iter().enumerate() {
                    let dx = px as f64 + 0.5 - s.mean[0];
                    let dy = py as f64 + 0.5 - s.mean[1];
                    let [ia, ib, ic] = s.cov_inv;
                    let q = ia * dx * dx + 2.0 * ib * dx * dy + ic * dy * dy;
                    if q > MAHALANOBIS_CUTOFF * MAHALANOBIS_CUTOFF {
                        continue;
                    }
                    let a = s.opacity * (-0.5 * q).exp();
                    let w = a * transmittance;
                    let vals = &values[si * channels..(si + 1) * channels];
                    let out = &mut accum[px * channels..(px + 1) * channels];
                    for (o, v) in out.iter_mut().zip(vals) {
                        *o += w * v;
                    }
                    transmittance *= 1.0 - a;
                }
                alpha[px] = 1.0 - transmittance;
            }
            (accum, alpha)
        })
        .collect();

    let mut out = CompositeOutput {
        width,
        height,
        channels,
        accum: vec![0.0; width * height * channels],
        alpha: vec![0.0; width * height],
        hits: None,
    };
    for (py, (accum, alpha)) in rows.into_iter().enumerate() {
        out.accum[py * width * channels..(py + 1) * width * channels].copy_from_slice(&accum);
        out.alpha[py * width..(py + 1) * width].copy_from_slice(&alpha);
    }
    Ok(out)
}
