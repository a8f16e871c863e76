//! End-to-end rendering: pose the rig, place the splats, project lighting
//! onto the harmonic basis, trace per-texel shadows, rasterize the deferred
//! buffers, and shade.

use nalgebra::Vector3;

use crate::error::Result;
use crate::harmonics::{
    sh_project_env, sh_project_point_lights, transport_from_zh, ShVector, MAX_ORDER,
};
use crate::img::Image;
use crate::irradiance::bvh::Bvh;
use crate::irradiance::{irradiance_uv_map, IrradianceMap, IrradianceOptions};
use crate::lights::{EnvironmentMap, LightRig, PointLight};
use crate::scene::mesh::{texel_frames, TexelFrame};
use crate::scene::{covariance, specular_normal_world, Scene, WorldSplat};
use crate::shading::{
    diffuse_color, diffuse_dot, final_compose, shade_deferred, specular_point, NormalSource,
    ShadingConfig,
};
use crate::splat::{
    composite, project_gaussian, render_gbuffer, sort_splats, Camera, CompositeOptions, GBuffer,
    Splat2D, SplatAttributes, DEFAULT_DILATION,
};

/// Shadow-ray origins step off the surface by this fraction of the posed
/// bounding radius.
pub const RAY_OFFSET_FRACTION: f64 = 1e-4;

/// One render condition: a pose plus its lighting.
#[derive(Clone, Debug)]
pub struct Condition {
    pub angles: Vec<f64>,
    pub lights: LightRig,
    /// Optional environment light; contributes to diffuse transport only,
    /// the specular lobes respond to the point lights.
    pub env: Option<EnvironmentMap>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderSettings {
    pub shading: ShadingConfig,
    pub irradiance: IrradianceOptions,
    pub composite: CompositeOptions,
    /// Screen-space covariance dilation in pixels squared.
    pub dilation: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            shading: ShadingConfig::default(),
            irradiance: IrradianceOptions::default(),
            composite: CompositeOptions::default(),
            dilation: DEFAULT_DILATION,
        }
    }
}

/// Pose-dependent geometry shared by every condition rendered at that pose.
#[derive(Clone, Debug)]
pub struct PoseGeometry {
    pub posed: Vec<Vector3<f64>>,
    pub frames: Vec<TexelFrame>,
    pub world: Vec<WorldSplat>,
    pub bounding_radius: f64,
}

pub fn pose_geometry(scene: &Scene, angles: &[f64]) -> Result<PoseGeometry> {
    let pose = scene.rig.pose(angles)?;
    let posed = scene.posed_vertices(&pose)?;
    let frames = texel_frames(&scene.rig.mesh, &posed, &scene.table)?;
    let world = scene.place_splats(&frames);
    let bounding_radius = Scene::bounding_radius(&posed);
    Ok(PoseGeometry { posed, frames, world, bounding_radius })
}

/// Combined lighting expansion: active point lights plus the environment.
pub fn light_expansion(lights: &LightRig, env: Option<&EnvironmentMap>) -> Result<ShVector> {
    let mut sh = sh_project_point_lights(lights, MAX_ORDER)?;
    if let Some(env) = env {
        let e = sh_project_env(env, MAX_ORDER)?;
        for (a, b) in sh.coeffs_mut().iter_mut().zip(e.coeffs()) {
            *a += b;
        }
    }
    Ok(sh)
}

/// Per-primitive diffuse transport for a pose: each primitive's zonal lobes
/// ride its posed texel frame.
pub fn zh_transports(scene: &Scene, geom: &PoseGeometry) -> Result<Vec<ShVector>> {
    scene
        .primitives
        .iter()
        .zip(&geom.frames)
        .map(|(p, f)| transport_from_zh(&p.zh, &f.tbn))
        .collect()
}

/// Per-texel shadow factors for a pose under a light rig.
pub fn shadow_map(
    scene: &Scene,
    geom: &PoseGeometry,
    lights: &LightRig,
    opts: &IrradianceOptions,
) -> Result<IrradianceMap> {
    let bvh = Bvh::build(&geom.posed, &scene.rig.mesh.triangles);
    irradiance_uv_map(&scene.table, &geom.frames, lights, &bvh, opts)
}

/// Projects every primitive and assembles attribute rows aligned with the
/// sorted splat list (the compositor reads attributes by slice position).
#[allow(clippy::too_many_arguments)]
pub fn build_splat_pass(
    scene: &Scene,
    geom: &PoseGeometry,
    cam: &Camera,
    light_sh: &ShVector,
    transports: &[ShVector],
    shadows: Option<&IrradianceMap>,
    cfg: &ShadingConfig,
    dilation: f64,
) -> Result<(Vec<Splat2D>, Vec<SplatAttributes>)> {
    let mut splats = Vec::new();
    for (i, (prim, ws)) in scene.primitives.iter().zip(&geom.world).enumerate() {
        let cov = covariance(&ws.rot, &prim.scale);
        if let Some(s) = project_gaussian(cam, &ws.mean, &cov, prim.opacity, i as u32, dilation) {
            splats.push(s);
        }
    }
    sort_splats(&mut splats);

    let mut attrs = Vec::with_capacity(splats.len());
    for s in &splats {
        let i = s.index as usize;
        let prim = &scene.primitives[i];
        let dot = diffuse_dot(&transports[i], light_sh)?;
        let normal = match cfg.normal_source {
            NormalSource::Gaussian => {
                specular_normal_world(&geom.world[i].rot, &prim.delta_normal)?
            }
            NormalSource::Mesh => geom.frames[i].tbn.column(2).into_owned(),
        };
        attrs.push(SplatAttributes {
            diffuse: diffuse_color(&prim.albedo, &dot),
            normal,
            spec_vis: prim.specular_visibility,
            roughness: prim.roughness,
            depth: s.depth,
            shadow: shadows.map_or(1.0, |m| m.value(prim.texel_id)),
        });
    }
    Ok((splats, attrs))
}

#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub image: Image,
    /// Present in deferred mode.
    pub gbuffer: Option<GBuffer>,
    pub shadow_map: Option<IrradianceMap>,
}

/// Renders one condition end to end with fresh pose caches.
pub fn render_condition(
    scene: &Scene,
    cam: &Camera,
    cond: &Condition,
    settings: &RenderSettings,
) -> Result<RenderOutput> {
    let geom = pose_geometry(scene, &cond.angles)?;
    let light_sh = light_expansion(&cond.lights, cond.env.as_ref())?;
    let transports = zh_transports(scene, &geom)?;
    render_prepared(scene, cam, cond, settings, &geom, &light_sh, &transports)
}

/// [`render_condition`] with caller-supplied pose caches; the fitter reuses
/// geometry and transports across many lighting conditions.
pub fn render_prepared(
    scene: &Scene,
    cam: &Camera,
    cond: &Condition,
    settings: &RenderSettings,
    geom: &PoseGeometry,
    light_sh: &ShVector,
    transports: &[ShVector],
) -> Result<RenderOutput> {
    let shadows = if settings.shading.shadow {
        let opts = IrradianceOptions {
            ray_offset: RAY_OFFSET_FRACTION * geom.bounding_radius.max(1e-9),
            ..settings.irradiance
        };
        Some(shadow_map(scene, geom, &cond.lights, &opts)?)
    } else {
        None
    };
    let (splats, attrs) = build_splat_pass(
        scene,
        geom,
        cam,
        light_sh,
        transports,
        shadows.as_ref(),
        &settings.shading,
        settings.dilation,
    )?;
    let lights: Vec<PointLight> =
        cond.lights.active_lights().map(|(_, l)| l.clone()).collect();

    if settings.shading.deferred {
        let gb = render_gbuffer(cam.width, cam.height, &splats, &attrs, &settings.composite)?;
        let image = shade_deferred(&gb, cam, &lights, &settings.shading)?;
        Ok(RenderOutput { image, gbuffer: Some(gb), shadow_map: shadows })
    } else {
        // Forward mode: shade each splat at its mean, then composite RGB.
        let eye = cam.center();
        let mut values = vec![0.0f64; splats.len() * 3];
        for (row, (s, a)) in values.chunks_mut(3).zip(splats.iter().zip(&attrs)) {
            let mean = geom.world[s.index as usize].mean;
            let view = eye - mean;
            let vn = view.norm();
            let spec = if vn > 1e-12 {
                specular_point(
                    &a.normal,
                    &(view / vn),
                    &mean,
                    a.spec_vis,
                    a.roughness,
                    &lights,
                    settings.shading.sg_normalization,
                )?
            } else {
                [0.0; 3]
            };
            row.copy_from_slice(&final_compose(
                &a.diffuse,
                &spec,
                a.shadow,
                settings.shading.shadow,
            ));
        }
        let out = composite(cam.width, cam.height, &splats, &values, 3, &settings.composite)?;
        let mut image = Image::new(cam.width, cam.height, 3);
        image.data_mut().copy_from_slice(&out.accum);
        Ok(RenderOutput { image, gbuffer: None, shadow_map: shadows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::generate_ground_truth;
    use crate::scene::rig::{HeadSpec, RigSpec};

    fn head_scene() -> Scene {
        generate_ground_truth(&RigSpec::Head(HeadSpec::default()), 1).unwrap()
    }

    fn head_camera(px: usize) -> Camera {
        Camera::look_at(
            px,
            px,
            0.9,
            Vector3::new(0.0, -0.9, 0.4),
            Vector3::new(0.0, 0.0, 0.3),
            Vector3::z(),
        )
        .unwrap()
    }

    fn fast_settings() -> RenderSettings {
        let mut s = RenderSettings::default();
        s.irradiance.spp = 4;
        s
    }

    #[test]
    fn deferred_render_covers_the_subject() {
        let scene = head_scene();
        let cam = head_camera(64);
        let cond = Condition {
            angles: vec![0.2],
            lights: LightRig::dome(24, 3.0, [2.5; 3]),
            env: None,
        };
        let out = render_condition(&scene, &cam, &cond, &fast_settings()).unwrap();
        assert_eq!(out.image.width(), 64);
        let gb = out.gbuffer.as_ref().unwrap();
        let covered = gb.alpha.iter().filter(|a| **a > 0.5).count();
        assert!(covered > 200, "covered {covered}");
        let lit = (0..64 * 64)
            .filter(|p| out.image.luminance(p % 64, p / 64) > 1e-3)
            .count();
        assert!(lit > 200, "lit {lit}");
        assert!(out.image.data().iter().all(|v| v.is_finite()));
        assert!(out.shadow_map.is_some());
    }

    #[test]
    fn repeat_renders_are_bitwise_identical() {
        let scene = head_scene();
        let cam = head_camera(48);
        let cond = Condition {
            angles: vec![-0.3],
            lights: LightRig::dome(16, 3.0, [2.0; 3]),
            env: None,
        };
        let a = render_condition(&scene, &cam, &cond, &fast_settings()).unwrap();
        let b = render_condition(&scene, &cam, &cond, &fast_settings()).unwrap();
        assert_eq!(a.image.data(), b.image.data());
    }

    #[test]
    fn environment_light_brightens_the_diffuse_term() {
        let scene = head_scene();
        let cam = head_camera(48);
        let mut settings = fast_settings();
        settings.shading.shadow = false;
        let dark = Condition {
            angles: vec![0.0],
            lights: LightRig::dome(8, 3.0, [0.5; 3]),
            env: None,
        };
        let lit = Condition {
            env: Some(EnvironmentMap::constant(32, 16, [1.0; 3])),
            ..dark.clone()
        };
        let a = render_condition(&scene, &cam, &dark, &settings).unwrap();
        let b = render_condition(&scene, &cam, &lit, &settings).unwrap();
        let mean = |img: &Image| img.data().iter().sum::<f64>() / img.data().len() as f64;
        assert!(mean(&b.image) > mean(&a.image) * 1.2, "{} vs {}", mean(&b.image), mean(&a.image));
    }

    #[test]
    fn forward_mode_renders_without_a_gbuffer() {
        let scene = head_scene();
        let cam = head_camera(48);
        let mut settings = fast_settings();
        settings.shading.deferred = false;
        let cond = Condition {
            angles: vec![0.1],
            lights: LightRig::dome(16, 3.0, [2.0; 3]),
            env: None,
        };
        let out = render_condition(&scene, &cam, &cond, &settings).unwrap();
        assert!(out.gbuffer.is_none());
        let bright = out.image.data().iter().filter(|v| **v > 1e-3).count();
        assert!(bright > 200, "bright {bright}");
    }
}
