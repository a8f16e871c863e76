//! Normalized irradiance over the texel atlas: per-point ratio of received
//! to unoccluded light-stage energy, estimated exactly or by Monte-Carlo
//! shadow rays, with optional chart-space smoothing.

pub mod bvh;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use self::bvh::Bvh;
use crate::error::{Error, Result};
use crate::lights::LightRig;
use crate::scene::mesh::{TexelFrame, TexelTable};

/// Lower ray-parameter bound for shadow rays; origins are already offset off
/// the surface, this only rejects exact-origin degeneracies.
pub const RAY_T_MIN: f64 = 1e-12;

/// Chart-space smoothing applied to the raw per-texel shadow values.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ShadowOperator {
    Identity,
    /// Gaussian blur with radius in texels, renormalized over occupied
    /// texels so chart borders do not darken.
    GaussianBlur { sigma: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IrradianceOptions {
    /// Shadow rays per texel; 0 enumerates every active light exactly.
    pub spp: usize,
    pub seed: u64,
    /// Ray origin offset along the surface normal, in world units.
    pub ray_offset: f64,
    pub operator: ShadowOperator,
}

impl Default for IrradianceOptions {
    fn default() -> Self {
        IrradianceOptions {
            spp: 64,
            seed: 0,
            ray_offset: 1e-4,
            operator: ShadowOperator::Identity,
        }
    }
}

/// Exact normalized irradiance at a point: sum of visible light weights over
/// the sum of all active weights. Unoccluded points return exactly 1.0.
pub fn normalized_irradiance(point: &Vector3<f64>, rig: &LightRig, bvh: &Bvh) -> Result<f64> {
    let mut total = 0.0;
    let mut received = 0.0;
    for (_, light) in rig.active_lights() {
        let w = LightRig::scalar_intensity(light);
        total += w;
        let delta = light.position - point;
        let dist = delta.norm();
        if dist < RAY_T_MIN || !bvh.any_hit(point, &(delta / dist), RAY_T_MIN, dist) {
            received += w;
        }
    }
    if !(total > 0.0) {
        return Err(Error::UndefinedNormalization);
    }
    Ok(received / total)
}

/// Monte-Carlo normalized irradiance: draws `spp` lights with probability
/// proportional to their scalar intensity and averages their visibility.
/// The expectation equals [`normalized_irradiance`].
pub fn sampled_irradiance<R: Rng>(
    point: &Vector3<f64>,
    rig: &LightRig,
    bvh: &Bvh,
    spp: usize,
    rng: &mut R,
) -> Result<f64> {
    assert!(spp > 0, "sampled irradiance needs at least one ray");
    let mut cumulative = Vec::new();
    let mut total = 0.0;
    for (_, light) in rig.active_lights() {
        let w = LightRig::scalar_intensity(light);
        if w > 0.0 {
            total += w;
            cumulative.push((light.position, total));
        }
    }
    if !(total > 0.0) {
        return Err(Error::UndefinedNormalization);
    }
    let mut visible = 0usize;
    for _ in 0..spp {
        let u = rng.gen::<f64>() * total;
        let k = cumulative
            .partition_point(|&(_, c)| c <= u)
            .min(cumulative.len() - 1);
        let delta = cumulative[k].0 - point;
        let dist = delta.norm();
        if dist < RAY_T_MIN || !bvh.any_hit(point, &(delta / dist), RAY_T_MIN, dist) {
            visible += 1;
        }
    }
    Ok(visible as f64 / spp as f64)
}

/// Shadow factors over the full texel raster of an atlas.
#[derive(Clone, Debug, PartialEq)]
pub struct IrradianceMap {
    pub grid: usize,
    pub part_count: usize,
    /// `part_count * grid * grid` values indexed by texel id; unoccupied
    /// texels hold 1.0 (unshadowed).
    pub values: Vec<f64>,
    pub occupied: Vec<bool>,
    pub seed: u64,
    pub spp: usize,
}

impl IrradianceMap {
    pub fn value(&self, texel_id: u32) -> f64 {
        self.values[texel_id as usize]
    }
}

/// Computes per-texel normalized irradiance for every occupied texel, in
/// parallel, then applies the configured smoothing operator. Each texel draws
/// from its own counter-mode RNG stream, so results are independent of
/// evaluation order and thread count.
pub fn irradiance_uv_map(
    table: &TexelTable,
    frames: &[TexelFrame],
    rig: &LightRig,
    bvh: &Bvh,
    opts: &IrradianceOptions,
) -> Result<IrradianceMap> {
    if frames.len() != table.len() {
        return Err(Error::malformed(format!(
            "{} texel frames for {} occupied texels",
            frames.len(),
            table.len()
        )));
    }
    let per_texel: Vec<(u32, f64)> = table
        .entries
        .par_iter()
        .zip(frames.par_iter())
        .map(|(entry, frame)| {
            let normal: Vector3<f64> = frame.tbn.column(2).into_owned();
            let origin = frame.position + opts.ray_offset * normal;
            let value = if opts.spp == 0 {
                normalized_irradiance(&origin, rig, bvh)?
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(entry.id as u64);
                sampled_irradiance(&origin, rig, bvh, opts.spp, &mut rng)?
            };
            Ok((entry.id, value))
        })
        .collect::<Result<_>>()?;

    let n = table.part_count * table.grid * table.grid;
    let mut map = IrradianceMap {
        grid: table.grid,
        part_count: table.part_count,
        values: vec![1.0; n],
        occupied: vec![false; n],
        seed: opts.seed,
        spp: opts.spp,
    };
    for (id, v) in per_texel {
        map.values[id as usize] = v;
        map.occupied[id as usize] = true;
    }
    apply_shadow_operator(&mut map, &opts.operator);
    Ok(map)
}

/// Applies chart-space smoothing in place. The blur renormalizes its kernel
/// over occupied texels, so isolated texels and constant fields are fixed
/// points; unoccupied texels are untouched.
pub fn apply_shadow_operator(map: &mut IrradianceMap, op: &ShadowOperator) {
    let sigma = match op {
        ShadowOperator::Identity => return,
        ShadowOperator::GaussianBlur { sigma } => *sigma,
    };
    if !(sigma > 0.0) {
        return;
    }
    let g = map.grid;
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (0..=radius)
        .map(|d| (-0.5 * (d as f64 / sigma).powi(2)).exp())
        .collect();
    let src = map.values.clone();
    for part in 0..map.part_count {
        let base = part * g * g;
        for ty in 0..g as i64 {
            for tx in 0..g as i64 {
                let id = base + ty as usize * g + tx as usize;
                if !map.occupied[id] {
                    continue;
                }
                let mut num = 0.0;
                let mut den = 0.0;
                for dy in -radius..=radius {
                    let ny = ty + dy;
                    if ny < 0 || ny >= g as i64 {
                        continue;
                    }
                    for dx in -radius..=radius {
                        let nx = tx + dx;
                        if nx < 0 || nx >= g as i64 {
                            continue;
                        }
                        let nid = base + ny as usize * g + nx as usize;
                        if !map.occupied[nid] {
                            continue;
                        }
                        let w = kernel[dx.unsigned_abs() as usize]
                            * kernel[dy.unsigned_abs() as usize];
                        num += w * src[nid];
                        den += w;
                    }
                }
                map.values[id] = num / den;
            }
        }
    }
}
