//! Deferred-shading geometry buffer assembled by one multi-channel
//! composite pass.
//!
//! Channel layout per splat / per pixel: diffuse RGB (premultiplied), world
//! normal xyz (renormalized per pixel at read time), specular visibility and
//! roughness (premultiplied), camera depth (weight-normalized), shadow
//! (weight-normalized, background 1), and a constant-1 weight channel that
//! serves as the normalizer.
//!
//! Normalizing shadow by the accumulated weight rather than by coverage is
//! deliberate: when every splat carries shadow exactly 1.0 the numerator is
//! bit-identical to the weight channel, so the ratio is exactly 1.0 and a
//! shadowed render composes bit-identically to an unshadowed one.

use nalgebra::Vector3;

use crate::error::Result;
use crate::img::Image;
use crate::splat::raster::{composite, CompositeOptions, CompositeOutput, Splat2D};

pub const GB_DIFFUSE: usize = 0; // 3 channels
pub const GB_NORMAL: usize = 3; // 3 channels
pub const GB_SPEC_VIS: usize = 6;
pub const GB_ROUGHNESS: usize = 7;
pub const GB_DEPTH: usize = 8;
pub const GB_SHADOW: usize = 9;
pub const GB_WEIGHT: usize = 10;
pub const GB_CHANNELS: usize = 11;

/// Per-splat attribute row for the G-buffer composite.
#[derive(Clone, Copy, Debug)]
pub struct SplatAttributes {
    pub diffuse: [f64; 3],
    pub normal: Vector3<f64>,
    pub spec_vis: f64,
    pub roughness: f64,
    pub depth: f64,
    pub shadow: f64,
}

impl SplatAttributes {
    pub fn write_row(&self, row: &mut [f64]) {
        row[GB_DIFFUSE] = self.diffuse[0];
        row[GB_DIFFUSE + 1] = self.diffuse[1];
        row[GB_DIFFUSE + 2] = self.diffuse[2];
        row[GB_NORMAL] = self.normal.x;
        row[GB_NORMAL + 1] = self.normal.y;
        row[GB_NORMAL + 2] = self.normal.z;
        row[GB_SPEC_VIS] = self.spec_vis;
        row[GB_ROUGHNESS] = self.roughness;
        row[GB_DEPTH] = self.depth;
        row[GB_SHADOW] = self.shadow;
        row[GB_WEIGHT] = 1.0;
    }
}

/// Raw accumulated G-buffer plus coverage; derived quantities are computed
/// at read time so gradient passes can reuse the raw sums.
#[derive(Clone, Debug)]
pub struct GBuffer {
    pub width: usize,
    pub height: usize,
    /// `GB_CHANNELS` premultiplied scalars per pixel.
    pub accum: Vec<f64>,
    /// Coverage (1 - transmittance) per pixel.
    pub alpha: Vec<f64>,
    /// Per-pixel front-to-back hits when the composite recorded them.
    pub hits: Option<Vec<Vec<crate::splat::raster::Hit>>>,
}

/// Composites per-splat attribute rows into a G-buffer.
pub fn render_gbuffer(
    width: usize,
    height: usize,
    splats: &[Splat2D],
    attributes: &[SplatAttributes],
    opts: &CompositeOptions,
) -> Result<GBuffer> {
    let mut values = vec![0.0f64; attributes.len() * GB_CHANNELS];
    for (row, a) in values.chunks_mut(GB_CHANNELS).zip(attributes) {
        a.write_row(row);
    }
    let CompositeOutput { accum, alpha, hits, .. } =
        composite(width, height, splats, &values, GB_CHANNELS, opts)?;
    Ok(GBuffer { width, height, accum, alpha, hits })
}

impl GBuffer {
    pub fn pixel(&self, px: usize) -> &[f64] {
        &self.accum[px * GB_CHANNELS..(px + 1) * GB_CHANNELS]
    }

    /// Premultiplied diffuse color.
    pub fn diffuse(&self, px: usize) -> [f64; 3] {
        let p = self.pixel(px);
        [p[GB_DIFFUSE], p[GB_DIFFUSE + 1], p[GB_DIFFUSE + 2]]
    }

    /// Accumulated (unnormalized) world normal.
    pub fn normal_raw(&self, px: usize) -> Vector3<f64> {
        let p = self.pixel(px);
        Vector3::new(p[GB_NORMAL], p[GB_NORMAL + 1], p[GB_NORMAL + 2])
    }

    /// Unit world normal, `None` for effectively empty pixels.
    pub fn normal_unit(&self, px: usize) -> Option<Vector3<f64>> {
        let n = self.normal_raw(px);
        let len = n.norm();
        (len > 1e-12).then(|| n / len)
    }

    pub fn spec_vis(&self, px: usize) -> f64 {
        self.pixel(px)[GB_SPEC_VIS]
    }

    pub fn roughness(&self, px: usize) -> f64 {
        self.pixel(px)[GB_ROUGHNESS]
    }

    /// Accumulated splat weight (the normalizer channel).
    pub fn weight(&self, px: usize) -> f64 {
        self.pixel(px)[GB_WEIGHT]
    }

    /// Weight-normalized camera depth; `None` where nothing landed.
    pub fn depth(&self, px: usize) -> Option<f64> {
        let w = self.weight(px);
        (w > 1e-12).then(|| self.pixel(px)[GB_DEPTH] / w)
    }

    /// Weight-normalized shadow factor; empty pixels are unshadowed (1.0).
    pub fn shadow(&self, px: usize) -> f64 {
        let w = self.weight(px);
        if w > 0.0 {
            self.pixel(px)[GB_SHADOW] / w
        } else {
            1.0
        }
    }

    /// Named planar images for inspection/export.
    pub fn to_images(&self) -> Vec<(&'static str, Image)> {
        let npx = self.width * self.height;
        let mut diffuse = Image::new(self.width, self.height, 3);
        let mut normal = Image::new(self.width, self.height, 3);
        let mut scalars = [
            Image::new(self.width, self.height, 1), // spec_vis
            Image::new(self.width, self.height, 1), // roughness
            Image::new(self.width, self.height, 1), // depth
            Image::new(self.width, self.height, 1), // shadow
            Image::new(self.width, self.height, 1), // alpha
        ];
        for px in 0..npx {
            let d = self.diffuse(px);
            let n = self.normal_unit(px).unwrap_or_else(Vector3::zeros);
            for c in 0..3 {
                diffuse.data_mut()[px * 3 + c] = d[c];
                normal.data_mut()[px * 3 + c] = n[c];
            }
            scalars[0].data_mut()[px] = self.spec_vis(px);
            scalars[1].data_mut()[px] = self.roughness(px);
            scalars[2].data_mut()[px] = self.depth(px).unwrap_or(0.0);
            scalars[3].data_mut()[px] = self.shadow(px);
            scalars[4].data_mut()[px] = self.alpha[px];
        }
        let [sv, rg, dp, sh, al] = scalars;
        vec![
            ("diffuse", diffuse),
            ("normal", normal),
            ("spec_vis", sv),
            ("roughness", rg),
            ("depth", dp),
            ("shadow", sh),
            ("alpha", al),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splat::raster::{sort_splats, MAHALANOBIS_CUTOFF};

    fn isotropic(mx: f64, my: f64, sigma: f64, depth: f64, opacity: f64, index: u32) -> Splat2D {
        let inv = 1.0 / (sigma * sigma);
        Splat2D {
            mean: [mx, my],
            cov_inv: [inv, 0.0, inv],
            depth,
            opacity,
            radius: MAHALANOBIS_CUTOFF * sigma,
            index,
        }
    }

    fn attrs(shadow: f64, depth: f64, n: Vector3<f64>) -> SplatAttributes {
        SplatAttributes {
            diffuse: [0.4, 0.5, 0.6],
            normal: n,
            spec_vis: 0.7,
            roughness: 0.1,
            depth,
            shadow,
        }
    }

    #[test]
    fn unit_shadow_normalizes_to_exactly_one() {
        let mut splats = vec![
            isotropic(7.0, 9.0, 2.5, 1.0, 0.9, 0),
            isotropic(9.0, 7.0, 3.0, 1.5, 0.8, 1),
            isotropic(8.0, 8.0, 2.0, 2.0, 0.7, 2),
        ];
        sort_splats(&mut splats);
        let a = vec![attrs(1.0, 1.0, Vector3::z()); 3];
        let gb = render_gbuffer(16, 16, &splats, &a, &CompositeOptions::default()).unwrap();
        for px in 0..16 * 16 {
            // Bitwise: w * 1.0 accumulates identically to the weight
            // channel, and x / x is exactly 1.0.
            assert_eq!(gb.shadow(px), 1.0, "pixel {px}");
        }
    }

    #[test]
    fn empty_pixels_read_as_background() {
        let gb = render_gbuffer(8, 8, &[], &[], &CompositeOptions::default()).unwrap();
        for px in 0..64 {
            assert_eq!(gb.shadow(px), 1.0);
            assert!(gb.depth(px).is_none());
            assert!(gb.normal_unit(px).is_none());
            assert_eq!(gb.alpha[px], 0.0);
        }
    }

    #[test]
    fn normals_renormalize_per_pixel() {
        let mut splats = vec![
            isotropic(8.0, 8.0, 3.0, 1.0, 0.6, 0),
            isotropic(8.0, 8.0, 3.0, 2.0, 0.6, 1),
        ];
        sort_splats(&mut splats);
        let a = vec![
            attrs(1.0, 1.0, Vector3::new(1.0, 0.0, 0.0)),
            attrs(1.0, 2.0, Vector3::new(0.0, 1.0, 0.0)),
        ];
        let gb = render_gbuffer(16, 16, &splats, &a, &CompositeOptions::default()).unwrap();
        let n = gb.normal_unit(8 * 16 + 8).unwrap();
        assert!((n.norm() - 1.0).abs() < 1e-12);
        // Front (x-facing) splat carries more weight.
        assert!(n.x > n.y && n.y > 0.0);
    }

    #[test]
    fn depth_is_weight_normalized_mean() {
        let mut splats = vec![isotropic(8.0, 8.0, 2.0, 3.25, 0.9, 0)];
        sort_splats(&mut splats);
        let a = vec![attrs(1.0, 3.25, Vector3::z())];
        let gb = render_gbuffer(16, 16, &splats, &a, &CompositeOptions::default()).unwrap();
        // Single splat: sum(w * d) / sum(w) = d exactly.
        assert_eq!(gb.depth(8 * 16 + 8), Some(3.25));
    }
}
