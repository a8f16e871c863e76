//! Frozen training data and the differentiable render for appearance fits.
//!
//! Geometry is not optimized, so everything it determines — splat projection,
//! rasterization hit lists, per-pixel view rays, shadow factors, lighting
//! coefficients — is prepared once per pose / per condition. The forward pass
//! then reproduces the deferred renderer's arithmetic bit-for-bit from the
//! recorded hits, and the backward pass walks the same chains analytically.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::harmonics::{coeff_count, sh_basis_into, COLORED_ORDER, MAX_ORDER};
use crate::img::Image;
use crate::lights::{EnvironmentMap, LightRig, PointLight};
use crate::pipeline::{light_expansion, pose_geometry, PoseGeometry, RenderSettings};
use crate::scene::{covariance, specular_normal_world, Scene, WorldSplat};
use crate::shading::{
    reflect, sg_eval, specular_point, DiffuseBasis, NormalSource, ShadingConfig, MAX_ROUGHNESS,
};
use crate::splat::{composite, project_gaussian, sort_splats, Camera, CompositeOptions};

use super::params::FitParams;

/// Harmonic coefficients per channel at the full order.
const NB: usize = 81;

/// Fixed geometry of one camera/pose pair: sorted-hit lists, per-pixel view
/// reconstruction, splat frames, and cached basis evaluations.
#[derive(Clone, Debug)]
pub struct PoseData {
    pub cam: Camera,
    pub cfg: ShadingConfig,
    pub prim_count: usize,
    /// World principal frame per primitive (column 2 = flat axis).
    pub rots: Vec<Matrix3<f64>>,
    /// Frozen normals when the mesh normal source is selected.
    pub mesh_normals: Option<Vec<Vector3<f64>>>,
    /// Zonal mode only: per primitive, three lobes x 81 basis values
    /// evaluated at the posed frame axes.
    pub basis_y: Option<Vec<f64>>,
    /// CSR-style per-pixel hit lists over primitive indices.
    pub hit_off: Vec<u32>,
    pub hit_prim: Vec<u32>,
    pub hit_w: Vec<f64>,
    /// Coverage per pixel (1 - transmittance).
    pub alpha: Vec<f64>,
    /// Accumulated splat weight per pixel (the G-buffer normalizer).
    pub weight: Vec<f64>,
    /// Shaded world point per pixel (valid where `view_valid`).
    pub x_world: Vec<Vector3<f64>>,
    /// Unit direction surface -> eye per pixel (valid where `view_valid`).
    pub omega_o: Vec<Vector3<f64>>,
    /// Depth and view ray are well defined at this pixel.
    pub view_valid: Vec<bool>,
    /// `view_valid` and coverage above the specular floor.
    pub spec_geom: Vec<bool>,
}

/// One lighting condition at a pose: expanded lighting, gradient caches,
/// frozen per-pixel shadow factors, and the target image.
#[derive(Clone, Debug)]
pub struct ConditionData {
    /// Index of the pose this condition was prepared against.
    pub pose: usize,
    pub lights: Vec<PointLight>,
    /// Lighting coefficients, 81 per channel.
    pub light_l: [Vec<f64>; 3],
    /// Zonal mode: per primitive, (lobe, band, channel)-indexed reductions
    /// sum_m Y_lm(axis) * L_ch[l,m]; the gradient of the transport dot.
    pub p_cache: Option<Vec<f64>>,
    /// Weight-normalized shadow factor per pixel; `None` = shadows off.
    pub shadow_px: Option<Vec<f64>>,
    pub target: Image,
    pub mask: Vec<bool>,
    pub mask_count: usize,
}

/// Condition-dependent loss terms produced by the backward pass,
/// unweighted.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CondEval {
    /// Masked mean absolute reconstruction error.
    pub rec: f64,
    /// Mean squared away-facing normal dot over the foreground.
    pub orient: f64,
    /// Mean squared negative transport dot over primitives and channels.
    pub neg_color: f64,
}

/// Prepares pose geometry from raw parts: world placements, per-primitive
/// shapes, and the lobe frames the zonal basis rides on. `lobe_frames` must
/// be orthonormal with unit determinant.
#[allow(clippy::too_many_arguments)]
pub fn prepare_pose_from_parts(
    cam: &Camera,
    worlds: &[WorldSplat],
    scales: &[Vector3<f64>],
    opacities: &[f64],
    lobe_frames: &[Matrix3<f64>],
    settings: &RenderSettings,
) -> Result<PoseData> {
    let n = worlds.len();
    if scales.len() != n || opacities.len() != n || lobe_frames.len() != n {
        return Err(Error::LayoutMismatch(format!(
            "{n} placements vs {} scales, {} opacities, {} frames",
            scales.len(),
            opacities.len(),
            lobe_frames.len()
        )));
    }
    debug_assert_eq!(coeff_count(MAX_ORDER), NB);
    let cfg = settings.shading;

    // Project and sort exactly like the render pass.
    let mut splats = Vec::new();
    for (i, ws) in worlds.iter().enumerate() {
        let cov = covariance(&ws.rot, &scales[i]);
        if let Some(s) =
            project_gaussian(cam, &ws.mean, &cov, opacities[i], i as u32, settings.dilation)
        {
            splats.push(s);
        }
    }
    sort_splats(&mut splats);

    // One composite records the hit lists plus the frozen depth channel.
    let depths: Vec<f64> = splats.iter().map(|s| s.depth).collect();
    let opts = CompositeOptions { record_hits: true, ..settings.composite.clone() };
    let out = composite(cam.width, cam.height, &splats, &depths, 1, &opts)?;
    let hits = out.hits.expect("hits were requested");

    let npx = cam.width * cam.height;
    let mut pose = PoseData {
        cam: cam.clone(),
        cfg,
        prim_count: n,
        rots: worlds.iter().map(|w| w.rot).collect(),
        mesh_normals: match cfg.normal_source {
            NormalSource::Mesh => {
                Some(lobe_frames.iter().map(|f| f.column(2).into_owned()).collect())
            }
            NormalSource::Gaussian => None,
        },
        basis_y: match cfg.diffuse_basis {
            DiffuseBasis::Zh => {
                let mut y = vec![0.0f64; n * 3 * NB];
                for (i, frame) in lobe_frames.iter().enumerate() {
                    for a in 0..3 {
                        let axis = frame.column(a).into_owned();
                        let dst = &mut y[(i * 3 + a) * NB..(i * 3 + a + 1) * NB];
                        sh_basis_into(&axis, MAX_ORDER, dst);
                    }
                }
                Some(y)
            }
            DiffuseBasis::ShUnrotated => None,
        },
        hit_off: Vec::with_capacity(npx + 1),
        hit_prim: Vec::new(),
        hit_w: Vec::new(),
        alpha: out.alpha,
        weight: vec![0.0; npx],
        x_world: vec![Vector3::zeros(); npx],
        omega_o: vec![Vector3::zeros(); npx],
        view_valid: vec![false; npx],
        spec_geom: vec![false; npx],
    };

    let eye = cam.center();
    pose.hit_off.push(0);
    for p in 0..npx {
        // Weight and depth accumulate in recorded hit order, matching the
        // G-buffer channel sums bit for bit (the weight attribute is 1.0).
        let mut w_acc = 0.0f64;
        let mut d_acc = 0.0f64;
        for h in &hits[p] {
            let s = &splats[h.splat as usize];
            pose.hit_prim.push(s.index);
            pose.hit_w.push(h.weight);
            w_acc += h.weight * 1.0;
            d_acc += h.weight * s.depth;
        }
        pose.hit_off.push(pose.hit_prim.len() as u32);
        pose.weight[p] = w_acc;
        if w_acc > 1e-12 {
            let z = d_acc / w_acc;
            let (px, py) = (p % cam.width, p / cam.width);
            let x = cam.point_at_depth(px as f64 + 0.5, py as f64 + 0.5, z);
            let view = eye - x;
            let vn = view.norm();
            if vn > 1e-12 {
                pose.x_world[p] = x;
                pose.omega_o[p] = view / vn;
                pose.view_valid[p] = true;
                pose.spec_geom[p] = pose.alpha[p] >= cfg.specular_alpha_floor;
            }
        }
    }
    Ok(pose)
}

/// [`prepare_pose_from_parts`] driven by a scene and joint angles; also
/// returns the posed geometry for shadow-map construction.
pub fn prepare_pose_from_scene(
    scene: &Scene,
    cam: &Camera,
    angles: &[f64],
    settings: &RenderSettings,
) -> Result<(PoseData, PoseGeometry)> {
    let geom = pose_geometry(scene, angles)?;
    let scales: Vec<Vector3<f64>> = scene.primitives.iter().map(|p| p.scale).collect();
    let opac: Vec<f64> = scene.primitives.iter().map(|p| p.opacity).collect();
    let frames: Vec<Matrix3<f64>> = geom.frames.iter().map(|f| f.tbn).collect();
    let pose = prepare_pose_from_parts(cam, &geom.world, &scales, &opac, &frames, settings)?;
    Ok((pose, geom))
}

/// Expands one lighting condition against prepared pose geometry.
/// `prim_shadow` carries the frozen per-primitive shadow factors (shadows
/// off when `None`); `target`/`mask` define the reconstruction objective.
#[allow(clippy::too_many_arguments)]
pub fn prepare_condition(
    pose: &PoseData,
    pose_index: usize,
    rig: &LightRig,
    env: Option<&EnvironmentMap>,
    prim_shadow: Option<&[f64]>,
    target: Image,
    mask: Vec<bool>,
) -> Result<ConditionData> {
    let npx = pose.cam.width * pose.cam.height;
    if target.width() != pose.cam.width
        || target.height() != pose.cam.height
        || target.channels() != 3
        || mask.len() != npx
    {
        return Err(Error::LayoutMismatch("condition target does not match the camera".into()));
    }
    if let Some(s) = prim_shadow {
        if s.len() != pose.prim_count {
            return Err(Error::LayoutMismatch(format!(
                "{} shadow factors for {} primitives",
                s.len(),
                pose.prim_count
            )));
        }
    }

    let sh = light_expansion(rig, env)?;
    let light_l = [sh.channel(0).to_vec(), sh.channel(1).to_vec(), sh.channel(2).to_vec()];

    let p_cache = pose.basis_y.as_ref().map(|y| {
        let mut pc = vec![0.0f64; pose.prim_count * NB];
        for i in 0..pose.prim_count {
            for a in 0..3 {
                let ya = &y[(i * 3 + a) * NB..(i * 3 + a + 1) * NB];
                for l in 0..=MAX_ORDER {
                    for ch in 0..3 {
                        let mut acc = 0.0;
                        for j in l * l..(l + 1) * (l + 1) {
                            acc += ya[j] * light_l[ch][j];
                        }
                        pc[i * NB + (a * 9 + l) * 3 + ch] = acc;
                    }
                }
            }
        }
        pc
    });

    let shadow_px = prim_shadow.map(|s| {
        let mut out = vec![1.0f64; npx];
        for p in 0..npx {
            let (lo, hi) = (pose.hit_off[p] as usize, pose.hit_off[p + 1] as usize);
            let mut acc = 0.0;
            for h in lo..hi {
                acc += pose.hit_w[h] * s[pose.hit_prim[h] as usize];
            }
            if pose.weight[p] > 0.0 {
                out[p] = acc / pose.weight[p];
            }
        }
        out
    });

    let mask_count = mask.iter().filter(|m| **m).count();
    Ok(ConditionData {
        pose: pose_index,
        lights: rig.active_lights().map(|(_, l)| l.clone()).collect(),
        light_l,
        p_cache,
        shadow_px,
        target,
        mask,
        mask_count,
    })
}

/// Transport-lighting dot per channel for one primitive block, zonal mode.
/// Reproduces the renderer's expansion exactly: lobes accumulate into the
/// 81-coefficient transport in lobe order, then a left fold dots it with
/// the lighting.
fn transport_dot_zh(p: &[f64], y: &[f64], light: &[Vec<f64>; 3]) -> [f64; 3] {
    let mut t = [[0.0f64; NB]; 3];
    for a in 0..3 {
        let ya = &y[a * NB..(a + 1) * NB];
        for l in 0..=MAX_ORDER {
            for j in l * l..(l + 1) * (l + 1) {
                if l <= COLORED_ORDER {
                    for (ch, tc) in t.iter_mut().enumerate() {
                        tc[j] += p[3 + (a * 3 + ch) * 4 + l] * ya[j];
                    }
                } else {
                    let zl = p[3 + 36 + a * 5 + (l - COLORED_ORDER - 1)];
                    for tc in t.iter_mut() {
                        tc[j] += zl * ya[j];
                    }
                }
            }
        }
    }
    let mut out = [0.0; 3];
    for ch in 0..3 {
        out[ch] = t[ch].iter().zip(light[ch].iter()).map(|(a, b)| a * b).sum();
    }
    out
}

/// Parameter value of dense-mode transport coefficient `j` on channel `ch`.
fn sh_coeff(p: &[f64], ch: usize, j: usize) -> f64 {
    if j < 16 {
        p[3 + ch * 16 + j]
    } else {
        p[3 + 48 + (j - 16)]
    }
}

fn transport_dot_sh(p: &[f64], light: &[Vec<f64>; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for ch in 0..3 {
        out[ch] = (0..NB).map(|j| sh_coeff(p, ch, j) * light[ch][j]).sum();
    }
    out
}

/// Per-primitive transport dots under this condition's lighting.
pub fn compute_dots(
    pose: &PoseData,
    cond: &ConditionData,
    params: &FitParams,
) -> Result<Vec<[f64; 3]>> {
    check_compat(pose, params)?;
    let mut dots = Vec::with_capacity(pose.prim_count);
    for i in 0..pose.prim_count {
        let p = params.prim(i);
        dots.push(match pose.cfg.diffuse_basis {
            DiffuseBasis::Zh => {
                let y = pose.basis_y.as_ref().expect("zonal pose carries basis values");
                transport_dot_zh(p, &y[i * 3 * NB..(i + 1) * 3 * NB], &cond.light_l)
            }
            DiffuseBasis::ShUnrotated => transport_dot_sh(p, &cond.light_l),
        });
    }
    Ok(dots)
}

/// Unit specular normal per primitive plus the pre-normalization length
/// (needed by the backward chain).
pub fn compute_normals(pose: &PoseData, params: &FitParams) -> Result<(Vec<Vector3<f64>>, Vec<f64>)> {
    check_compat(pose, params)?;
    let mut normals = Vec::with_capacity(pose.prim_count);
    let mut raw_norms = Vec::with_capacity(pose.prim_count);
    match (&pose.mesh_normals, pose.cfg.normal_source) {
        (Some(frozen), NormalSource::Mesh) => {
            normals.extend_from_slice(frozen);
            raw_norms.resize(pose.prim_count, 1.0);
        }
        (_, NormalSource::Gaussian) => {
            for i in 0..pose.prim_count {
                let dn = params.delta_normal(i);
                normals.push(specular_normal_world(&pose.rots[i], &dn)?);
                raw_norms.push((pose.rots[i] * (Vector3::z() + dn)).norm());
            }
        }
        (None, NormalSource::Mesh) => {
            return Err(Error::LayoutMismatch(
                "mesh normal source requested but no mesh normals prepared".into(),
            ));
        }
    }
    Ok((normals, raw_norms))
}

fn check_compat(pose: &PoseData, params: &FitParams) -> Result<()> {
    if params.count != pose.prim_count {
        return Err(Error::LayoutMismatch(format!(
            "{} parameter blocks for {} primitives",
            params.count, pose.prim_count
        )));
    }
    if params.basis != pose.cfg.diffuse_basis {
        return Err(Error::LayoutMismatch("parameter basis differs from pose basis".into()));
    }
    Ok(())
}

struct PixelAccum {
    diffuse: [f64; 3],
    normal_raw: Vector3<f64>,
    spec_vis: f64,
    roughness: f64,
}

fn fold_pixel(
    pose: &PoseData,
    p: usize,
    colors: &[[f64; 3]],
    normals: &[Vector3<f64>],
    spec_vis: &[f64],
    roughness: &[f64],
) -> PixelAccum {
    let mut acc = PixelAccum {
        diffuse: [0.0; 3],
        normal_raw: Vector3::zeros(),
        spec_vis: 0.0,
        roughness: 0.0,
    };
    let (lo, hi) = (pose.hit_off[p] as usize, pose.hit_off[p + 1] as usize);
    for h in lo..hi {
        let k = pose.hit_prim[h] as usize;
        let w = pose.hit_w[h];
        for ch in 0..3 {
            acc.diffuse[ch] += w * colors[k][ch];
        }
        acc.normal_raw += w * normals[k];
        acc.spec_vis += w * spec_vis[k];
        acc.roughness += w * roughness[k];
    }
    acc
}

/// Differentiable forward render of one condition; bit-identical to the
/// deferred pipeline on matching inputs.
pub fn forward_image(pose: &PoseData, cond: &ConditionData, params: &FitParams) -> Result<Image> {
    let dots = compute_dots(pose, cond, params)?;
    let (normals, _) = compute_normals(pose, params)?;
    let colors: Vec<[f64; 3]> = (0..pose.prim_count)
        .map(|i| crate::shading::diffuse_color(&params.albedo(i), &dots[i]))
        .collect();
    let spec_vis: Vec<f64> = (0..pose.prim_count).map(|i| params.spec_vis(i)).collect();
    let roughness: Vec<f64> = (0..pose.prim_count).map(|i| params.roughness(i)).collect();

    let npx = pose.cam.width * pose.cam.height;
    let mut img = Image::new(pose.cam.width, pose.cam.height, 3);
    let apply_shadow = cond.shadow_px.is_some();
    for p in 0..npx {
        let acc = fold_pixel(pose, p, &colors, &normals, &spec_vis, &roughness);
        let mut spec = [0.0; 3];
        if pose.spec_geom[p] {
            let len = acc.normal_raw.norm();
            if len > 1e-12 {
                let n = acc.normal_raw / len;
                spec = specular_point(
                    &n,
                    &pose.omega_o[p],
                    &pose.x_world[p],
                    acc.spec_vis,
                    acc.roughness / pose.weight[p],
                    &cond.lights,
                    pose.cfg.sg_normalization,
                )?;
            }
        }
        let shadow = cond.shadow_px.as_ref().map_or(1.0, |s| s[p]);
        let c = crate::shading::final_compose(&acc.diffuse, &spec, shadow, apply_shadow);
        for ch in 0..3 {
            img.data_mut()[p * 3 + ch] = c[ch];
        }
    }
    Ok(img)
}

#[derive(Clone, Copy, Default)]
struct PrimGrad {
    albedo: [f64; 3],
    dot: [f64; 3],
    spec_vis: f64,
    roughness: f64,
    normal: Vector3<f64>,
}

struct LightEval {
    wi: Vector3<f64>,
    cos: f64,
    g: f64,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Backward pass of one condition. Accumulates the gradients of
/// `w_rec * rec + w_orient * orient + w_neg_color * neg_color` into `grads`
/// (laid out like `params.data`) and returns the unweighted term values.
pub fn backward_condition(
    pose: &PoseData,
    cond: &ConditionData,
    params: &FitParams,
    w_rec: f64,
    w_orient: f64,
    w_neg_color: f64,
    grads: &mut [f64],
) -> Result<CondEval> {
    if grads.len() != params.data.len() {
        return Err(Error::LayoutMismatch(format!(
            "{} gradient slots for {} parameters",
            grads.len(),
            params.data.len()
        )));
    }
    let dots = compute_dots(pose, cond, params)?;
    let (normals, raw_norms) = compute_normals(pose, params)?;
    let spec_vis: Vec<f64> = (0..pose.prim_count).map(|i| params.spec_vis(i)).collect();
    let roughness: Vec<f64> = (0..pose.prim_count).map(|i| params.roughness(i)).collect();
    let colors: Vec<[f64; 3]> = (0..pose.prim_count)
        .map(|i| crate::shading::diffuse_color(&params.albedo(i), &dots[i]))
        .collect();

    let mut pg = vec![PrimGrad::default(); pose.prim_count];
    let npx = pose.cam.width * pose.cam.height;
    let apply_shadow = cond.shadow_px.is_some();
    let inv_n = if cond.mask_count > 0 { 1.0 / (3.0 * cond.mask_count as f64) } else { 0.0 };
    let orient_active = w_orient != 0.0;

    let mut rec_sum = 0.0;
    let mut orient_sum = 0.0;
    let mut light_cache: Vec<LightEval> = Vec::with_capacity(cond.lights.len());

    for p in 0..npx {
        if !cond.mask[p] {
            continue;
        }
        let acc = fold_pixel(pose, p, &colors, &normals, &spec_vis, &roughness);
        let len = acc.normal_raw.norm();
        let normal_ok = len > 1e-12;
        let n = if normal_ok { acc.normal_raw / len } else { Vector3::zeros() };
        let spec_on = pose.spec_geom[p] && normal_ok;

        // Specular forward, renderer arithmetic, with per-light caching.
        let mut spec = [0.0; 3];
        let mut sigma = 0.0;
        light_cache.clear();
        if spec_on {
            sigma = acc.roughness / pose.weight[p];
            if !(sigma > 0.0) || sigma > MAX_ROUGHNESS {
                return Err(Error::InvalidRoughness { value: sigma, max: MAX_ROUGHNESS });
            }
            let q = reflect(&n, &pose.omega_o[p]);
            for light in &cond.lights {
                let to = light.position - pose.x_world[p];
                let dist = to.norm();
                if dist < 1e-12 {
                    continue;
                }
                let wi = to / dist;
                let cos = q.dot(&wi);
                let g = sg_eval(cos, sigma, pose.cfg.sg_normalization);
                for ch in 0..3 {
                    spec[ch] += acc.spec_vis * light.intensity[ch] * g;
                }
                light_cache.push(LightEval { wi, cos, g });
            }
        }

        let shadow = cond.shadow_px.as_ref().map_or(1.0, |s| s[p]);
        let final_c = crate::shading::final_compose(&acc.diffuse, &spec, shadow, apply_shadow);

        // Reconstruction residual and its gradient through the shadow
        // multiply.
        let mut g_pix = [0.0; 3];
        for ch in 0..3 {
            let e = final_c[ch] - cond.target.data()[p * 3 + ch];
            rec_sum += e.abs();
            let g0 = sign(e) * w_rec * inv_n;
            g_pix[ch] = if apply_shadow { g0 * shadow } else { g0 };
        }

        let (lo, hi) = (pose.hit_off[p] as usize, pose.hit_off[p + 1] as usize);

        // Diffuse chain: d = sum_k w_k albedo_k max(0, dot_k).
        for h in lo..hi {
            let k = pose.hit_prim[h] as usize;
            let w = pose.hit_w[h];
            let a = params.albedo(k);
            let g = &mut pg[k];
            for ch in 0..3 {
                let dpos = dots[k][ch].max(0.0);
                g.albedo[ch] += g_pix[ch] * w * dpos;
                if dots[k][ch] > 0.0 {
                    g.dot[ch] += g_pix[ch] * w * a[ch];
                }
            }
        }

        // Specular and orientation chains share the normalize-through-r
        // projection.
        let mut d_n = Vector3::zeros();
        let mut any_dn = false;
        if spec_on {
            let q = reflect(&n, &pose.omega_o[p]);
            let mut d_v = 0.0;
            let mut d_sigma = 0.0;
            let mut d_q = Vector3::zeros();
            for (li, le) in light_cache.iter().enumerate() {
                let light = &cond.lights[li];
                let gi: f64 = (0..3).map(|ch| g_pix[ch] * light.intensity[ch]).sum();
                d_v += gi * le.g;
                let c = le.cos.clamp(-1.0, 1.0);
                let theta = c.acos();
                d_sigma += gi
                    * acc.spec_vis
                    * le.g
                    * (theta * theta / (sigma * sigma * sigma) - 1.0 / sigma);
                let one_m = 1.0 - c * c;
                if one_m >= 1e-12 {
                    let dg_dc = le.g * theta / (sigma * sigma * one_m.sqrt());
                    d_q += acc.spec_vis * gi * dg_dc * le.wi;
                }
            }
            // q = 2 (n.wo) n - wo.
            let wo = pose.omega_o[p];
            d_n = 2.0 * d_q.dot(&n) * wo + 2.0 * n.dot(&wo) * d_q;
            any_dn = true;

            for h in lo..hi {
                let k = pose.hit_prim[h] as usize;
                let w = pose.hit_w[h];
                pg[k].spec_vis += d_v * w;
                pg[k].roughness += d_sigma * w / pose.weight[p];
            }
            let _ = q;
        }

        // Orientation penalty on the composited normal: positive dot with
        // the camera->surface direction means facing away.
        if normal_ok && pose.view_valid[p] {
            let v = -pose.omega_o[p];
            let d = n.dot(&v);
            if d > 0.0 {
                orient_sum += d * d;
                if orient_active {
                    d_n += (2.0 * d * w_orient / cond.mask_count as f64) * v;
                    any_dn = true;
                }
            }
        }

        if any_dn && normal_ok {
            let d_r = (d_n - n * n.dot(&d_n)) / len;
            for h in lo..hi {
                let k = pose.hit_prim[h] as usize;
                pg[k].normal += pose.hit_w[h] * d_r;
            }
        }
    }

    // Negative-transport penalty over all primitives and channels.
    let mut nc_sum = 0.0;
    let nc_scale = w_neg_color * 2.0 / (3.0 * pose.prim_count as f64);
    for (i, d) in dots.iter().enumerate() {
        for ch in 0..3 {
            let m = d[ch].min(0.0);
            nc_sum += m * m;
            pg[i].dot[ch] += nc_scale * m;
        }
    }

    // Project per-primitive accumulators into the flat gradient vector.
    let stride = params.stride();
    let bl = params.basis_len();
    for i in 0..pose.prim_count {
        let b = i * stride;
        let g = &pg[i];
        for ch in 0..3 {
            grads[b + ch] += g.albedo[ch];
        }
        match params.basis {
            DiffuseBasis::Zh => {
                let pc = cond.p_cache.as_ref().expect("zonal condition carries dot reductions");
                let pci = &pc[i * NB..(i + 1) * NB];
                for a in 0..3 {
                    for l in 0..=COLORED_ORDER {
                        for ch in 0..3 {
                            grads[b + 3 + (a * 3 + ch) * 4 + l] +=
                                g.dot[ch] * pci[(a * 9 + l) * 3 + ch];
                        }
                    }
                    for l in COLORED_ORDER + 1..=MAX_ORDER {
                        let mut acc = 0.0;
                        for ch in 0..3 {
                            acc += g.dot[ch] * pci[(a * 9 + l) * 3 + ch];
                        }
                        grads[b + 3 + 36 + a * 5 + (l - COLORED_ORDER - 1)] += acc;
                    }
                }
            }
            DiffuseBasis::ShUnrotated => {
                for j in 0..NB {
                    if j < 16 {
                        for ch in 0..3 {
                            grads[b + 3 + ch * 16 + j] += g.dot[ch] * cond.light_l[ch][j];
                        }
                    } else {
                        let mut acc = 0.0;
                        for ch in 0..3 {
                            acc += g.dot[ch] * cond.light_l[ch][j];
                        }
                        grads[b + 3 + 48 + (j - 16)] += acc;
                    }
                }
            }
        }
        grads[b + 3 + bl] += g.spec_vis;
        grads[b + 4 + bl] += g.roughness;
        if matches!(pose.cfg.normal_source, NormalSource::Gaussian) {
            // n = u / |u| with u = R (z + dn); pull the gradient back
            // through the normalization and the frame rotation.
            let n = normals[i];
            let du = (g.normal - n * n.dot(&g.normal)) / raw_norms[i];
            let ddn = pose.rots[i].transpose() * du;
            for c in 0..3 {
                grads[b + 5 + bl + c] += ddn[c];
            }
        }
    }

    Ok(CondEval {
        rec: rec_sum * inv_n,
        orient: if cond.mask_count > 0 { orient_sum / cond.mask_count as f64 } else { 0.0 },
        neg_color: nc_sum / (3.0 * pose.prim_count as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::loss::loss_rec;
    use crate::pipeline::{render_condition, shadow_map, Condition, RAY_OFFSET_FRACTION};
    use crate::scene::generate_ground_truth;
    use crate::scene::rig::{HeadSpec, RigSpec};
    use crate::irradiance::IrradianceOptions;

    fn head_scene() -> Scene {
        generate_ground_truth(&RigSpec::Head(HeadSpec::default()), 11).unwrap()
    }

    fn head_camera(px: usize) -> Camera {
        Camera::look_at(
            px,
            px,
            0.9,
            Vector3::new(0.1, -0.9, 0.45),
            Vector3::new(0.0, 0.0, 0.3),
            Vector3::z(),
        )
        .unwrap()
    }

    fn prepare_all(
        scene: &Scene,
        cam: &Camera,
        angles: &[f64],
        rig: &LightRig,
        settings: &RenderSettings,
    ) -> (PoseData, ConditionData, Image) {
        let cond = Condition { angles: angles.to_vec(), lights: rig.clone(), env: None };
        let out = render_condition(scene, cam, &cond, settings).unwrap();
        let (pose, geom) = prepare_pose_from_scene(scene, cam, angles, settings).unwrap();
        let prim_shadow: Option<Vec<f64>> = if settings.shading.shadow {
            let opts = IrradianceOptions {
                ray_offset: RAY_OFFSET_FRACTION * geom.bounding_radius.max(1e-9),
                ..settings.irradiance
            };
            let map = shadow_map(scene, &geom, rig, &opts).unwrap();
            Some(scene.primitives.iter().map(|p| map.value(p.texel_id)).collect())
        } else {
            None
        };
        let mask = vec![true; cam.width * cam.height];
        let data = prepare_condition(
            &pose,
            0,
            rig,
            None,
            prim_shadow.as_deref(),
            out.image.clone(),
            mask,
        )
        .unwrap();
        (pose, data, out.image)
    }

    #[test]
    fn forward_matches_renderer_bitwise_without_shadow() {
        let scene = head_scene();
        let cam = head_camera(48);
        let mut settings = RenderSettings::default();
        settings.shading.shadow = false;
        let rig = LightRig::dome(12, 3.0, [2.0; 3]);
        let (pose, cond, reference) = prepare_all(&scene, &cam, &[0.25], &rig, &settings);
        let params = FitParams::from_scene(&scene).unwrap();
        let img = forward_image(&pose, &cond, &params).unwrap();
        assert_eq!(img.data(), reference.data());
    }

    #[test]
    fn forward_matches_renderer_bitwise_with_shadow() {
        let scene = head_scene();
        let cam = head_camera(40);
        let mut settings = RenderSettings::default();
        settings.irradiance.spp = 4;
        settings.irradiance.seed = 9;
        let rig = LightRig::dome(10, 3.0, [1.5; 3]);
        let (pose, cond, reference) = prepare_all(&scene, &cam, &[-0.3], &rig, &settings);
        let params = FitParams::from_scene(&scene).unwrap();
        let img = forward_image(&pose, &cond, &params).unwrap();
        assert_eq!(img.data(), reference.data());
    }

    #[test]
    fn zero_residual_means_zero_gradient() {
        let scene = head_scene();
        let cam = head_camera(32);
        let mut settings = RenderSettings::default();
        settings.shading.shadow = false;
        let rig = LightRig::dome(8, 3.0, [1.5; 3]);
        let (pose, mut cond, _) = prepare_all(&scene, &cam, &[0.1], &rig, &settings);
        let params = FitParams::from_scene(&scene).unwrap();
        // Target = own forward render => every residual is exactly zero.
        cond.target = forward_image(&pose, &cond, &params).unwrap();
        let mut grads = vec![0.0; params.data.len()];
        let eval = backward_condition(&pose, &cond, &params, 1.0, 0.0, 0.0, &mut grads).unwrap();
        assert_eq!(eval.rec, 0.0);
        assert!(grads.iter().all(|g| *g == 0.0), "all gradients vanish at the optimum");
    }

    #[test]
    fn backward_rec_value_matches_forward_loss() {
        let scene = head_scene();
        let cam = head_camera(32);
        let mut settings = RenderSettings::default();
        settings.shading.shadow = false;
        let rig = LightRig::dome(8, 3.0, [1.5; 3]);
        let (pose, cond, target) = prepare_all(&scene, &cam, &[0.4], &rig, &settings);
        // Perturbed parameters: nonzero residuals everywhere.
        let mut params = FitParams::from_scene(&scene).unwrap();
        for (i, v) in params.data.iter_mut().enumerate() {
            *v += 1e-3 * ((i % 7) as f64 - 3.0);
        }
        let img = forward_image(&pose, &cond, &params).unwrap();
        let expect = loss_rec(&img, &target, &cond.mask).unwrap();
        let mut grads = vec![0.0; params.data.len()];
        let eval = backward_condition(&pose, &cond, &params, 1.0, 0.0, 0.0, &mut grads).unwrap();
        assert_eq!(eval.rec, expect, "backward recomputes the same reconstruction loss");
        assert!(grads.iter().any(|g| *g != 0.0));
    }

    #[test]
    fn condition_rejects_mismatched_target() {
        let scene = head_scene();
        let cam = head_camera(24);
        let settings = RenderSettings::default();
        let (pose, _) = prepare_pose_from_scene(&scene, &cam, &[0.0], &settings).unwrap();
        let rig = LightRig::dome(4, 3.0, [1.0; 3]);
        let bad = Image::new(10, 10, 3);
        let err =
            prepare_condition(&pose, 0, &rig, None, None, bad, vec![true; 24 * 24]).unwrap_err();
        assert!(matches!(err, Error::LayoutMismatch(_)));
    }
}
