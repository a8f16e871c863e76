//! Shading math: diffuse radiance-transfer dot products, the
//! spherical-Gaussian specular kernel, and deferred per-pixel shading of a
//! G-buffer.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::harmonics::ShVector;
use crate::img::Image;
use crate::lights::PointLight;
use crate::splat::camera::Camera;
use crate::splat::gbuffer::GBuffer;

/// How per-texel diffuse transport is parameterized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffuseBasis {
    /// Three zonal lobes evaluated on the posed frame axes (default).
    Zh,
    /// Dense harmonic coefficients on fixed global axes (no rotation).
    ShUnrotated,
}

/// Which per-splat normal feeds the specular term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalSource {
    /// Splat flat axis plus the learned offset (default).
    Gaussian,
    /// Interpolated base-mesh normal.
    Mesh,
}

/// Amplitude convention of the spherical-Gaussian kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SgNormalization {
    /// 1 / (sqrt(2) pi^(2/3) sigma) (default).
    TwoThirds,
    /// 1 / (sqrt(2) pi^(3/2) sigma).
    ThreeHalves,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShadingConfig {
    pub diffuse_basis: DiffuseBasis,
    /// Deferred (G-buffer) specular versus per-splat forward shading.
    pub deferred: bool,
    /// Multiply the composed color by the screen-space shadow factor.
    pub shadow: bool,
    pub normal_source: NormalSource,
    pub sg_normalization: SgNormalization,
    /// Pixels with coverage below this skip the specular term.
    pub specular_alpha_floor: f64,
}

impl Default for ShadingConfig {
    fn default() -> Self {
        ShadingConfig {
            diffuse_basis: DiffuseBasis::Zh,
            deferred: true,
            shadow: true,
            normal_source: NormalSource::Gaussian,
            sg_normalization: SgNormalization::TwoThirds,
            specular_alpha_floor: 0.01,
        }
    }
}

/// Upper validity bound for the spherical-Gaussian width.
pub const MAX_ROUGHNESS: f64 = 1.0;

/// Per-channel transport-lighting dot products, unclamped.
pub fn diffuse_dot(transport: &ShVector, light: &ShVector) -> Result<[f64; 3]> {
    if transport.order() != light.order() || light.channels() != 3 || transport.channels() != 3 {
        return Err(Error::LayoutMismatch(format!(
            "transport order {} x{} vs lighting order {} x{}",
            transport.order(),
            transport.channels(),
            light.order(),
            light.channels()
        )));
    }
    let mut out = [0.0; 3];
    for ch in 0..3 {
        out[ch] = transport
            .channel(ch)
            .iter()
            .zip(light.channel(ch))
            .map(|(a, b)| a * b)
            .sum();
    }
    Ok(out)
}

/// Diffuse color: albedo times the non-negative part of the transport dot.
pub fn diffuse_color(albedo: &[f64; 3], dot: &[f64; 3]) -> [f64; 3] {
    [
        albedo[0] * dot[0].max(0.0),
        albedo[1] * dot[1].max(0.0),
        albedo[2] * dot[2].max(0.0),
    ]
}

/// Mirror reflection of `wo` about unit normal `n`: 2 (n.wo) n - wo.
pub fn reflect(n: &Vector3<f64>, wo: &Vector3<f64>) -> Vector3<f64> {
    2.0 * n.dot(wo) * n - wo
}

fn sg_amplitude(sigma: f64, norm: SgNormalization) -> f64 {
    let p = match norm {
        SgNormalization::TwoThirds => std::f64::consts::PI.powf(2.0 / 3.0),
        SgNormalization::ThreeHalves => std::f64::consts::PI.powf(1.5),
    };
    1.0 / (std::f64::consts::SQRT_2 * p * sigma)
}

/// Spherical-Gaussian lobe value at angular distance arccos(cos_angle) from
/// the lobe axis. `sigma` must be positive; callers gate the upper bound.
pub fn sg_eval(cos_angle: f64, sigma: f64, norm: SgNormalization) -> f64 {
    assert!(sigma > 0.0, "sg_eval needs positive sigma, got {sigma}");
    let theta = cos_angle.clamp(-1.0, 1.0).acos();
    let t = theta / sigma;
    sg_amplitude(sigma, norm) * (-0.5 * t * t).exp()
}

/// Specular radiance toward the viewer for one shaded point: the reflected
/// view lobe evaluated against each light, scaled by specular visibility.
/// Enforces the roughness validity range (0, MAX_ROUGHNESS].
pub fn specular_point(
    normal: &Vector3<f64>,
    omega_o: &Vector3<f64>,
    position: &Vector3<f64>,
    spec_vis: f64,
    sigma: f64,
    lights: &[PointLight],
    norm: SgNormalization,
) -> Result<[f64; 3]> {
    if !(sigma > 0.0) || sigma > MAX_ROUGHNESS {
        return Err(Error::InvalidRoughness { value: sigma, max: MAX_ROUGHNESS });
    }
    let q = reflect(normal, omega_o);
    let mut out = [0.0; 3];
    for light in lights {
        let to_light = light.position - position;
        let dist = to_light.norm();
        if dist < 1e-12 {
            continue;
        }
        let wi = to_light / dist;
        let g = sg_eval(q.dot(&wi), sigma, norm);
        for ch in 0..3 {
            out[ch] += spec_vis * light.intensity[ch] * g;
        }
    }
    Ok(out)
}

/// Composes the final pixel: (diffuse + specular) * shadow, or without the
/// shadow factor when disabled. A shadow factor of exactly 1.0 leaves the
/// sum bit-identical.
pub fn final_compose(diffuse: &[f64; 3], specular: &[f64; 3], shadow: f64, apply: bool) -> [f64; 3] {
    let mut out = [0.0; 3];
    for ch in 0..3 {
        let c = diffuse[ch] + specular[ch];
        out[ch] = if apply { c * shadow } else { c };
    }
    out
}

/// Deferred shading: walks the G-buffer, reconstructs the shaded point from
/// depth, evaluates the specular lobe against the active lights, and
/// composes with the screen-space shadow factor.
pub fn shade_deferred(
    gb: &GBuffer,
    cam: &Camera,
    lights: &[PointLight],
    config: &ShadingConfig,
) -> Result<Image> {
    let mut img = Image::new(gb.width, gb.height, 3);
    let eye = cam.center();
    for py in 0..gb.height {
        for px in 0..gb.width {
            let p = py * gb.width + px;
            let diffuse = gb.diffuse(p);
            let mut specular = [0.0; 3];
            if gb.alpha[p] >= config.specular_alpha_floor {
                let w = gb.weight(p);
                if let (Some(n), Some(z), true) =
                    (gb.normal_unit(p), gb.depth(p), w > 1e-12)
                {
                    let x = cam.point_at_depth(px as f64 + 0.5, py as f64 + 0.5, z);
                    let view = eye - x;
                    let vn = view.norm();
                    if vn > 1e-12 {
                        let wo = view / vn;
                        // Premultiplied visibility carries the coverage
                        // weighting into the specular term; the lobe width is
                        // the weight-normalized mean of the splat widths.
                        specular = specular_point(
                            &n,
                            &wo,
                            &x,
                            gb.spec_vis(p),
                            gb.roughness(p) / w,
                            lights,
                            config.sg_normalization,
                        )?;
                    }
                }
            }
            let shadow = if config.shadow { gb.shadow(p) } else { 1.0 };
            let c = final_compose(&diffuse, &specular, shadow, config.shadow);
            for ch in 0..3 {
                img.set(px, py, ch, c[ch]);
            }
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::{sh_project_point_lights, transport_from_zh, ZhLobes};
    use crate::lights::LightRig;
    use nalgebra::Matrix3;

    /// Frozen: 1 / (sqrt(2) pi^(2/3) 0.5).
    const SG_PEAK_HALF: f64 = 0.6592979864414865;
    /// Frozen: 1 / (sqrt(2) pi^(3/2) 0.5).
    const SG_PEAK_HALF_ALT: f64 = 0.2539745437369639;

    #[test]
    fn sg_peak_matches_frozen_constants() {
        assert!((sg_eval(1.0, 0.5, SgNormalization::TwoThirds) - SG_PEAK_HALF).abs() < 1e-12);
        assert!(
            (sg_eval(1.0, 0.5, SgNormalization::ThreeHalves) - SG_PEAK_HALF_ALT).abs() < 1e-12
        );
    }

    #[test]
    fn sg_decays_with_angle_and_width_controls_falloff() {
        let g0 = sg_eval(1.0, 0.3, SgNormalization::TwoThirds);
        let g1 = sg_eval(0.9, 0.3, SgNormalization::TwoThirds);
        let g2 = sg_eval(0.0, 0.3, SgNormalization::TwoThirds);
        assert!(g0 > g1 && g1 > g2);
        // Wider lobe decays slower relative to its peak.
        let narrow = sg_eval(0.9, 0.1, SgNormalization::TwoThirds)
            / sg_eval(1.0, 0.1, SgNormalization::TwoThirds);
        let wide = sg_eval(0.9, 0.8, SgNormalization::TwoThirds)
            / sg_eval(1.0, 0.8, SgNormalization::TwoThirds);
        assert!(wide > narrow);
    }

    #[test]
    #[should_panic(expected = "positive sigma")]
    fn sg_rejects_non_positive_sigma() {
        sg_eval(1.0, 0.0, SgNormalization::TwoThirds);
    }

    #[test]
    fn reflection_mirrors_about_the_normal() {
        let n = Vector3::z();
        let wo = Vector3::new(0.6, 0.0, 0.8);
        let q = reflect(&n, &wo);
        assert!((q - Vector3::new(-0.6, 0.0, 0.8)).norm() < 1e-15);
        assert!((reflect(&n, &n) - n).norm() < 1e-15);
        assert!((q.norm() - 1.0).abs() < 1e-12, "reflection preserves length");
    }

    #[test]
    fn specular_peaks_at_mirror_alignment() {
        let n = Vector3::z();
        let wo = Vector3::new(0.6, 0.0, 0.8);
        let pos = Vector3::zeros();
        let mirror = reflect(&n, &wo);
        let aligned = [PointLight { position: 3.0 * mirror, intensity: [1.0; 3] }];
        let offset_dir = (mirror + Vector3::new(0.4, 0.3, 0.0)).normalize();
        let offset = [PointLight { position: 3.0 * offset_dir, intensity: [1.0; 3] }];
        let ca = specular_point(&n, &wo, &pos, 1.0, 0.3, &aligned, SgNormalization::TwoThirds)
            .unwrap();
        let co = specular_point(&n, &wo, &pos, 1.0, 0.3, &offset, SgNormalization::TwoThirds)
            .unwrap();
        assert!(ca[0] > co[0]);
    }

    #[test]
    fn specular_rejects_out_of_range_roughness() {
        let n = Vector3::z();
        let wo = Vector3::z();
        for bad in [0.0, -0.1, 1.5] {
            let err = specular_point(&n, &wo, &Vector3::zeros(), 1.0, bad, &[], SgNormalization::TwoThirds)
                .unwrap_err();
            assert!(matches!(err, Error::InvalidRoughness { .. }), "sigma {bad}");
        }
    }

    #[test]
    fn diffuse_dot_is_bilinear_and_clamped_in_color_only() {
        // Ambient-only: transport band 0 times lighting band 0.
        let mut z = ZhLobes::zeros();
        z.colored[2][0][0] = -2.0; // negative on red
        z.colored[2][1][0] = 1.5;
        z.colored[2][2][0] = 0.5;
        let t = transport_from_zh(&z, &Matrix3::identity()).unwrap();

        let rig = LightRig {
            dome_radius: 1.0,
            lights: vec![PointLight { position: Vector3::z(), intensity: [1.0; 3] }],
            active: vec![true],
        };
        let light = sh_project_point_lights(&rig, 8).unwrap();

        let d = diffuse_dot(&t, &light).unwrap();
        assert!(d[0] < 0.0, "raw dot keeps sign");
        let c = diffuse_color(&[1.0, 1.0, 1.0], &d);
        assert_eq!(c[0], 0.0, "negative part clamps to zero");
        assert!(c[1] > 0.0 && c[1] > c[2]);
    }

    #[test]
    fn compose_applies_shadow_only_when_enabled() {
        let d = [0.2, 0.3, 0.4];
        let s = [0.1, 0.0, 0.05];
        let lit = final_compose(&d, &s, 0.5, true);
        assert!((lit[0] - 0.15).abs() < 1e-15);
        let no = final_compose(&d, &s, 0.5, false);
        assert_eq!(no[0], 0.2 + 0.1);
        // Shadow exactly 1.0 is a bitwise no-op.
        let unit = final_compose(&d, &s, 1.0, true);
        assert_eq!(unit, no);
    }
}
