//! Loss terms for appearance fitting: masked reconstruction, bound
//! penalties, normal-orientation, and the auxiliary regularizer suite.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::img::Image;

/// Weights of the individual loss terms.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// Perceptual term placeholder; no perceptual network ships here, the
    /// weight exists for config compatibility and is never applied.
    pub lambda_lpips: f64,
    pub lambda_offset: f64,
    pub lambda_mask: f64,
    /// Base weight of the normal-offset L2 term; annealed linearly to zero
    /// over the first [`NORMAL_ANNEAL_STEPS`] steps.
    pub lambda_normal: f64,
    pub lambda_normal_orient: f64,
    pub lambda_alpha_sparsity: f64,
    pub lambda_bound: f64,
    pub lambda_albedo: f64,
    pub lambda_neg_color: f64,
    pub lambda_scale: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_lpips: 0.1,
            lambda_offset: 0.05,
            lambda_mask: 0.1,
            lambda_normal: 1.0,
            lambda_normal_orient: 0.1,
            lambda_alpha_sparsity: 0.1,
            lambda_bound: 0.01,
            lambda_albedo: 0.01,
            lambda_neg_color: 0.01,
            lambda_scale: 0.05,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_lpips,
            self.lambda_offset,
            self.lambda_mask,
            self.lambda_normal,
            self.lambda_normal_orient,
            self.lambda_alpha_sparsity,
            self.lambda_bound,
            self.lambda_albedo,
            self.lambda_neg_color,
            self.lambda_scale,
        ];
        if all.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::malformed("loss weights must be non-negative"));
        }
        Ok(())
    }

    /// All regularizers off; reconstruction only.
    pub fn reconstruction_only() -> Self {
        LossWeights {
            lambda_lpips: 0.0,
            lambda_offset: 0.0,
            lambda_mask: 0.0,
            lambda_normal: 0.0,
            lambda_normal_orient: 0.0,
            lambda_alpha_sparsity: 0.0,
            lambda_bound: 0.0,
            lambda_albedo: 0.0,
            lambda_neg_color: 0.0,
            lambda_scale: 0.0,
        }
    }
}

/// The normal-offset weight decays to zero across this many steps.
pub const NORMAL_ANNEAL_STEPS: u64 = 20_000;

/// Linear 1 -> 0 over the annealing window, exactly zero afterwards.
pub fn normal_anneal(step: u64) -> f64 {
    if step >= NORMAL_ANNEAL_STEPS {
        0.0
    } else {
        1.0 - step as f64 / NORMAL_ANNEAL_STEPS as f64
    }
}

/// Box constraints used by the bound penalty.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct Bounds {
    pub scale_lb: f64,
    pub scale_ub: f64,
    pub roughness_lb: f64,
    pub roughness_ub: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { scale_lb: 1e-4, scale_ub: 1e-2, roughness_lb: 0.01, roughness_ub: 0.25 }
    }
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        if self.scale_lb >= self.scale_ub || self.roughness_lb >= self.roughness_ub {
            return Err(Error::malformed("bounds need lb < ub"));
        }
        Ok(())
    }
}

/// Piecewise out-of-range penalty: reciprocal barrier below the lower bound
/// (floored at 1e-7), quadratic above the upper bound, zero inside.
pub fn bound_penalty(v: f64, lb: f64, ub: f64) -> f64 {
    if v < lb {
        1.0 / v.max(1e-7)
    } else if v > ub {
        (v - ub) * (v - ub)
    } else {
        0.0
    }
}

/// d/dv of [`bound_penalty`]; zero on the barrier floor and inside bounds.
pub fn bound_penalty_grad(v: f64, lb: f64, ub: f64) -> f64 {
    if v < lb {
        if v > 1e-7 {
            -1.0 / (v * v)
        } else {
            0.0
        }
    } else if v > ub {
        2.0 * (v - ub)
    } else {
        0.0
    }
}

/// Mean of the piecewise penalty over a value list.
pub fn loss_bound(values: &[f64], lb: f64, ub: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|v| bound_penalty(*v, lb, ub)).sum::<f64>() / values.len() as f64
}

/// Mean absolute error over foreground pixels and channels.
pub fn loss_rec(rendered: &Image, target: &Image, mask: &[bool]) -> Result<f64> {
    if rendered.width() != target.width()
        || rendered.height() != target.height()
        || rendered.channels() != target.channels()
        || mask.len() != rendered.width() * rendered.height()
    {
        return Err(Error::LayoutMismatch("reconstruction loss image shapes differ".into()));
    }
    let c = rendered.channels();
    let mut sum = 0.0;
    let mut n = 0usize;
    for (px, m) in mask.iter().enumerate() {
        if !m {
            continue;
        }
        for ch in 0..c {
            let a = rendered.data()[px * c + ch];
            let b = target.data()[px * c + ch];
            sum += (a - b).abs();
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Mean squared positive part of normal-dot-view over the foreground; view
/// directions follow the convention where a positive dot means the normal
/// faces away from the camera.
pub fn loss_normal_orient(
    normals: &[Vector3<f64>],
    view_dirs: &[Vector3<f64>],
    mask: &[bool],
) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((nrm, v), m) in normals.iter().zip(view_dirs).zip(mask) {
        if !m {
            continue;
        }
        let d = nrm.dot(v).max(0.0);
        sum += d * d;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean of min(v, 1-v): zero exactly when every value saturates to 0 or 1.
pub fn loss_alpha_sparsity(opacities: &[f64]) -> f64 {
    if opacities.is_empty() {
        return 0.0;
    }
    opacities.iter().map(|o| o.min(1.0 - o)).sum::<f64>() / opacities.len() as f64
}

/// Mean squared negative part, elementwise.
pub fn loss_negative_sq(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        let neg = v.min(0.0);
        sum += neg * neg;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean squared norm over vectors (normal-offset and translation L2 terms).
pub fn loss_l2_mean(vs: impl Iterator<Item = Vector3<f64>>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in vs {
        sum += v.norm_squared();
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean absolute value over scalars (scale L1 term).
pub fn loss_l1_mean(vs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in vs {
        sum += v.abs();
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Coverage-vs-mask L1 with pixels within `exclude` (Chebyshev) of a mask
/// boundary skipped.
pub fn loss_mask(
    alpha: &[f64],
    target_mask: &[bool],
    width: usize,
    height: usize,
    exclude: usize,
) -> f64 {
    assert_eq!(alpha.len(), width * height);
    assert_eq!(target_mask.len(), width * height);
    let e = exclude as i64;
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            let here = target_mask[y as usize * width + x as usize];
            let mut boundary = false;
            'scan: for dy in -e..=e {
                for dx in -e..=e {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                        continue;
                    }
                    if target_mask[ny as usize * width + nx as usize] != here {
                        boundary = true;
                        break 'scan;
                    }
                }
            }
            if boundary {
                continue;
            }
            let m = if here { 1.0 } else { 0.0 };
            sum += (alpha[y as usize * width + x as usize] - m).abs();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Individual loss terms of one evaluation; weighted total assembled by
/// [`LossBreakdown::total`].
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    pub rec: f64,
    pub offset: f64,
    pub mask: f64,
    pub normal: f64,
    pub normal_orient: f64,
    pub alpha_sparsity: f64,
    pub bound: f64,
    pub albedo_neg: f64,
    pub neg_color: f64,
    pub scale: f64,
}

impl LossBreakdown {
    /// Weighted sum; the normal-offset term uses the annealed weight.
    pub fn total(&self, w: &LossWeights, step: u64) -> f64 {
        self.rec
            + w.lambda_offset * self.offset
            + w.lambda_mask * self.mask
            + w.lambda_normal * normal_anneal(step) * self.normal
            + w.lambda_normal_orient * self.normal_orient
            + w.lambda_alpha_sparsity * self.alpha_sparsity
            + w.lambda_bound * self.bound
            + w.lambda_albedo * self.albedo_neg
            + w.lambda_neg_color * self.neg_color
            + w.lambda_scale * self.scale
    }
}
