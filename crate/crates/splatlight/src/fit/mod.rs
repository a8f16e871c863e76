//! Gradient-descent appearance fitting: a differentiable replica of the
//! deferred renderer, analytic gradients for every appearance parameter
//! class, masked Adam, and the loss/metric catalog.

pub mod adam;
pub mod data;
pub mod loss;
pub mod metrics;
pub mod params;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pipeline::{light_expansion, render_prepared, zh_transports, Condition, RenderSettings};
use crate::scene::Scene;
use crate::shading::DiffuseBasis;
use crate::splat::Camera;

pub use adam::Adam;
pub use data::{
    backward_condition, compute_dots, compute_normals, forward_image, prepare_condition,
    prepare_pose_from_parts, prepare_pose_from_scene, CondEval, ConditionData, PoseData,
};
pub use loss::{
    bound_penalty, bound_penalty_grad, loss_alpha_sparsity, loss_bound, loss_l1_mean,
    loss_l2_mean, loss_mask, loss_negative_sq, loss_normal_orient, loss_rec, normal_anneal,
    Bounds, LossBreakdown, LossWeights, NORMAL_ANNEAL_STEPS,
};
pub use metrics::{metric_psnr, metric_ssim};
pub use params::{basis_len, FitParams, ParamClass};

/// Loss terms that depend only on frozen geometry; computed once when the
/// training set is built and carried as constants in every breakdown.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FrozenTerms {
    /// Mean squared translation offset.
    pub offset: f64,
    /// Mean absolute scale component.
    pub scale: f64,
    /// Mean min(opacity, 1 - opacity).
    pub alpha_sparsity: f64,
    /// Boundary-excluded coverage-vs-mask L1, averaged over conditions.
    pub mask: f64,
    /// Out-of-range penalty on the (frozen) scales.
    pub scale_bound: f64,
}

/// The full training set: prepared poses, lighting conditions with targets,
/// and the frozen loss constants.
#[derive(Clone, Debug)]
pub struct FitData {
    pub poses: Vec<PoseData>,
    pub conditions: Vec<ConditionData>,
    pub frozen: FrozenTerms,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub basis: DiffuseBasis,
    pub steps: usize,
    pub lr: f64,
    /// Conditions per optimization step, taken round-robin.
    pub batch: usize,
    pub weights: LossWeights,
    pub bounds: Bounds,
    /// Also optimize the specular lobe width (kept frozen by default).
    pub optimize_roughness: bool,
    /// Record a trace row every this many steps.
    pub trace_every: usize,
    pub settings: RenderSettings,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            basis: DiffuseBasis::Zh,
            steps: 2000,
            lr: 1e-2,
            batch: 4,
            weights: LossWeights::default(),
            bounds: Bounds::default(),
            optimize_roughness: false,
            trace_every: 50,
            settings: RenderSettings::default(),
        }
    }
}

/// One objective evaluation: the term values, the weighted total, and the
/// gradient of the total with respect to every appearance parameter.
pub fn eval_objective(
    data: &FitData,
    params: &FitParams,
    cfg: &FitConfig,
    batch: &[usize],
    step: u64,
) -> Result<(LossBreakdown, f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::malformed("empty condition batch"));
    }
    let b = batch.len() as f64;
    let w = &cfg.weights;

    // Per-condition backward passes run in parallel; the reduction walks the
    // batch in index order so results are thread-count independent.
    let per_cond: Vec<Result<(CondEval, Vec<f64>)>> = batch
        .par_iter()
        .map(|ci| {
            let cond = data
                .conditions
                .get(*ci)
                .ok_or_else(|| Error::malformed(format!("condition index {ci} out of range")))?;
            let pose = &data.poses[cond.pose];
            let mut grads = vec![0.0f64; params.data.len()];
            let eval = backward_condition(
                pose,
                cond,
                params,
                1.0 / b,
                w.lambda_normal_orient / b,
                w.lambda_neg_color / b,
                &mut grads,
            )?;
            Ok((eval, grads))
        })
        .collect();

    let mut grads = vec![0.0f64; params.data.len()];
    let mut rec = 0.0;
    let mut orient = 0.0;
    let mut neg_color = 0.0;
    for r in per_cond {
        let (eval, g) = r?;
        rec += eval.rec / b;
        orient += eval.orient / b;
        neg_color += eval.neg_color / b;
        for (a, v) in grads.iter_mut().zip(&g) {
            *a += v;
        }
    }

    // Parameter-space regularizers.
    let stride = params.stride();
    let bl = params.basis_len();
    let n = params.count as f64;
    let anneal = normal_anneal(step);
    let mut normal_term = 0.0;
    let mut albedo_neg = 0.0;
    let mut rough_bound = 0.0;
    for i in 0..params.count {
        let base = i * stride;
        for c in 0..3 {
            let rho = params.data[base + c];
            let m = rho.min(0.0);
            albedo_neg += m * m / (3.0 * n);
            grads[base + c] += w.lambda_albedo * 2.0 * m / (3.0 * n);

            let dn = params.data[base + 5 + bl + c];
            normal_term += dn * dn / n;
            grads[base + 5 + bl + c] += w.lambda_normal * anneal * 2.0 * dn / n;
        }
        let sigma = params.data[base + 4 + bl];
        rough_bound += bound_penalty(sigma, cfg.bounds.roughness_lb, cfg.bounds.roughness_ub) / n;
        grads[base + 4 + bl] += w.lambda_bound
            * bound_penalty_grad(sigma, cfg.bounds.roughness_lb, cfg.bounds.roughness_ub)
            / n;
    }

    let breakdown = LossBreakdown {
        rec,
        offset: data.frozen.offset,
        mask: data.frozen.mask,
        normal: normal_term,
        normal_orient: orient,
        alpha_sparsity: data.frozen.alpha_sparsity,
        bound: rough_bound + data.frozen.scale_bound,
        albedo_neg,
        neg_color,
        scale: data.frozen.scale,
    };
    let total = breakdown.total(w, step);
    Ok((breakdown, total, grads))
}

/// Gradients restricted to the requested parameter classes. Requesting a
/// geometry class is an error: those parameters are frozen in this fit.
pub fn class_gradients(
    data: &FitData,
    params: &FitParams,
    cfg: &FitConfig,
    batch: &[usize],
    step: u64,
    classes: &[ParamClass],
) -> Result<Vec<f64>> {
    for class in classes {
        if !class.is_appearance() {
            return Err(Error::FrozenParameter { class: format!("{class:?}") });
        }
    }
    let (_, _, mut grads) = eval_objective(data, params, cfg, batch, step)?;
    let stride = params.stride();
    for (idx, g) in grads.iter_mut().enumerate() {
        let class = index_class(params, idx % stride);
        if !classes.contains(&class) {
            *g = 0.0;
        }
    }
    Ok(grads)
}

/// Parameter class of an offset within one primitive block.
pub fn index_class(params: &FitParams, offset: usize) -> ParamClass {
    let bl = params.basis_len();
    if offset < 3 {
        ParamClass::Albedo
    } else if offset < 3 + bl {
        ParamClass::Basis
    } else if offset == 3 + bl {
        ParamClass::SpecVis
    } else if offset == 4 + bl {
        ParamClass::Roughness
    } else {
        ParamClass::DeltaNormal
    }
}

/// One probe of the finite-difference oracle.
#[derive(Clone, Copy, Debug)]
pub struct FdReport {
    pub class: ParamClass,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
    pub rel: f64,
}

/// Central-difference validation of the analytic gradient at the probed
/// flat parameter indices.
pub fn finite_difference_check(
    data: &FitData,
    params: &FitParams,
    cfg: &FitConfig,
    batch: &[usize],
    step: u64,
    probes: &[usize],
    h: f64,
) -> Result<Vec<FdReport>> {
    let (_, _, grads) = eval_objective(data, params, cfg, batch, step)?;
    let mut reports = Vec::with_capacity(probes.len());
    for &idx in probes {
        let mut plus = params.clone();
        plus.data[idx] += h;
        let (_, fp, _) = eval_objective(data, &plus, cfg, batch, step)?;
        let mut minus = params.clone();
        minus.data[idx] -= h;
        let (_, fm, _) = eval_objective(data, &minus, cfg, batch, step)?;
        let numeric = (fp - fm) / (2.0 * h);
        let analytic = grads[idx];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        reports.push(FdReport {
            class: index_class(params, idx % params.stride()),
            index: idx,
            analytic,
            numeric,
            rel,
        });
    }
    Ok(reports)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub total: f64,
    pub breakdown: LossBreakdown,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub params: FitParams,
    pub trace: Vec<TraceRow>,
    /// Objective over the full condition set after the last step.
    pub final_total: f64,
    pub final_breakdown: LossBreakdown,
}

/// Runs the appearance fit: round-robin batches, masked Adam, trace rows at
/// the configured cadence, and a final full-set evaluation.
pub fn fit_appearance(data: &FitData, init: FitParams, cfg: &FitConfig) -> Result<FitOutcome> {
    cfg.weights.validate()?;
    cfg.bounds.validate()?;
    if data.conditions.is_empty() {
        return Err(Error::malformed("no training conditions"));
    }
    if cfg.batch == 0 || cfg.steps == 0 {
        return Err(Error::malformed("batch size and step count must be positive"));
    }
    if init.basis != cfg.basis {
        return Err(Error::LayoutMismatch("initial parameters use a different basis".into()));
    }
    let n_cond = data.conditions.len();
    let mut params = init;
    let mask = params.active_mask(cfg.optimize_roughness);
    let mut adam = Adam::new(params.data.len(), cfg.lr);
    let mut trace = Vec::new();

    for step in 0..cfg.steps {
        let batch: Vec<usize> =
            (0..cfg.batch).map(|j| (step * cfg.batch + j) % n_cond).collect();
        let (breakdown, total, grads) =
            eval_objective(data, &params, cfg, &batch, step as u64)?;
        if step % cfg.trace_every == 0 {
            trace.push(TraceRow { step: step as u64, total, breakdown });
        }
        adam.step(&mut params.data, &grads, &mask);
    }

    let all: Vec<usize> = (0..n_cond).collect();
    let (final_breakdown, final_total, _) =
        eval_objective(data, &params, cfg, &all, cfg.steps as u64)?;
    trace.push(TraceRow { step: cfg.steps as u64, total: final_total, breakdown: final_breakdown });
    Ok(FitOutcome { params, trace, final_total, final_breakdown })
}

/// Image-quality scores of fitted parameters on held-out conditions.
#[derive(Clone, Copy, Debug)]
pub struct HoldoutEval {
    pub psnr: f64,
    pub ssim: f64,
}

pub fn evaluate_conditions(
    poses: &[PoseData],
    conditions: &[ConditionData],
    params: &FitParams,
) -> Result<Vec<HoldoutEval>> {
    conditions
        .iter()
        .map(|cond| {
            let img = forward_image(&poses[cond.pose], cond, params)?;
            let psnr = metric_psnr(&img, &cond.target, Some(&cond.mask))?;
            let ssim = metric_ssim(&img, &cond.target, Some(&cond.mask))?;
            Ok(HoldoutEval { psnr, ssim })
        })
        .collect()
}

/// Renders ground-truth targets for every condition and prepares the frozen
/// training data against them. Targets always come from the stored zonal
/// appearance through the real deferred pipeline; `fit_basis` only selects
/// the representation being optimized.
pub fn build_training_data(
    scene: &Scene,
    cam: &Camera,
    conditions: &[Condition],
    fit_basis: DiffuseBasis,
    cfg: &FitConfig,
) -> Result<FitData> {
    let settings = &cfg.settings;
    if !settings.shading.deferred {
        return Err(Error::malformed("appearance fitting replicates the deferred pipeline"));
    }
    let mut fit_settings = settings.clone();
    fit_settings.shading.diffuse_basis = fit_basis;

    let mut poses: Vec<PoseData> = Vec::new();
    let mut geoms = Vec::new();
    let mut transports = Vec::new();
    let mut keys: Vec<Vec<f64>> = Vec::new();
    let mut out_conditions = Vec::new();
    let mut mask_terms = Vec::new();

    for cond in conditions {
        let pi = match keys.iter().position(|k| k == &cond.angles) {
            Some(pi) => pi,
            None => {
                let (pose, geom) = prepare_pose_from_scene(scene, cam, &cond.angles, &fit_settings)?;
                transports.push(zh_transports(scene, &geom)?);
                poses.push(pose);
                geoms.push(geom);
                keys.push(cond.angles.clone());
                keys.len() - 1
            }
        };
        let light_sh = light_expansion(&cond.lights, cond.env.as_ref())?;
        let out = render_prepared(scene, cam, cond, settings, &geoms[pi], &light_sh, &transports[pi])?;
        let gb = out
            .gbuffer
            .as_ref()
            .ok_or_else(|| Error::malformed("deferred render produced no buffers"))?;
        let mask: Vec<bool> = gb.alpha.iter().map(|a| *a > 0.01).collect();
        mask_terms.push(loss_mask(&gb.alpha, &mask, cam.width, cam.height, 2));
        let prim_shadow: Option<Vec<f64>> = out
            .shadow_map
            .as_ref()
            .map(|m| scene.primitives.iter().map(|p| m.value(p.texel_id)).collect());
        out_conditions.push(prepare_condition(
            &poses[pi],
            pi,
            &cond.lights,
            cond.env.as_ref(),
            prim_shadow.as_deref(),
            out.image,
            mask,
        )?);
    }

    let scale_comps: Vec<f64> =
        scene.primitives.iter().flat_map(|p| [p.scale.x, p.scale.y, p.scale.z]).collect();
    let opacities: Vec<f64> = scene.primitives.iter().map(|p| p.opacity).collect();
    let frozen = FrozenTerms {
        offset: loss_l2_mean(scene.primitives.iter().map(|p| p.delta_t)),
        scale: loss_l1_mean(scale_comps.iter().copied()),
        alpha_sparsity: loss_alpha_sparsity(&opacities),
        mask: mask_terms.iter().sum::<f64>() / mask_terms.len().max(1) as f64,
        scale_bound: loss_bound(&scale_comps, cfg.bounds.scale_lb, cfg.bounds.scale_ub),
    };
    Ok(FitData { poses, conditions: out_conditions, frozen })
}
