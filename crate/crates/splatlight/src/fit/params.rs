//! Flat appearance-parameter storage for the optimizer: per primitive
//! [albedo rgb | diffuse basis | specular visibility | roughness | normal
//! offset xyz], concatenated over primitives.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::harmonics::{texel_param_count, TexelRepr, ZhLobes};
use crate::scene::Scene;
use crate::shading::DiffuseBasis;

/// Parameter families of a primitive. Geometry classes exist so callers can
/// be told explicitly that they are frozen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamClass {
    Albedo,
    Basis,
    SpecVis,
    Roughness,
    DeltaNormal,
    Translation,
    Rotation,
    Scale,
    Opacity,
}

impl ParamClass {
    /// Appearance classes are optimizable; the rest are frozen at ground
    /// truth in this fit.
    pub fn is_appearance(&self) -> bool {
        matches!(
            self,
            ParamClass::Albedo
                | ParamClass::Basis
                | ParamClass::SpecVis
                | ParamClass::Roughness
                | ParamClass::DeltaNormal
        )
    }
}

pub fn basis_len(basis: DiffuseBasis) -> usize {
    match basis {
        DiffuseBasis::Zh => texel_param_count(TexelRepr::Zh),
        DiffuseBasis::ShUnrotated => texel_param_count(TexelRepr::Sh),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitParams {
    pub basis: DiffuseBasis,
    pub count: usize,
    pub data: Vec<f64>,
}

impl FitParams {
    pub fn basis_len(&self) -> usize {
        basis_len(self.basis)
    }

    /// Scalars per primitive: 3 albedo + basis + visibility + roughness +
    /// 3 normal offset.
    pub fn stride(&self) -> usize {
        self.basis_len() + 8
    }

    pub fn prim(&self, i: usize) -> &[f64] {
        let s = self.stride();
        &self.data[i * s..(i + 1) * s]
    }

    pub fn prim_mut(&mut self, i: usize) -> &mut [f64] {
        let s = self.stride();
        &mut self.data[i * s..(i + 1) * s]
    }

    pub fn albedo(&self, i: usize) -> [f64; 3] {
        let p = self.prim(i);
        [p[0], p[1], p[2]]
    }

    pub fn basis_block(&self, i: usize) -> &[f64] {
        &self.prim(i)[3..3 + self.basis_len()]
    }

    pub fn spec_vis(&self, i: usize) -> f64 {
        self.prim(i)[3 + self.basis_len()]
    }

    pub fn roughness(&self, i: usize) -> f64 {
        self.prim(i)[4 + self.basis_len()]
    }

    pub fn delta_normal(&self, i: usize) -> Vector3<f64> {
        let p = self.prim(i);
        let o = 5 + self.basis_len();
        Vector3::new(p[o], p[o + 1], p[o + 2])
    }

    /// Offsets of each class inside a primitive block.
    pub fn offset_of(&self, class: ParamClass) -> Result<(usize, usize)> {
        let bl = self.basis_len();
        match class {
            ParamClass::Albedo => Ok((0, 3)),
            ParamClass::Basis => Ok((3, bl)),
            ParamClass::SpecVis => Ok((3 + bl, 1)),
            ParamClass::Roughness => Ok((4 + bl, 1)),
            ParamClass::DeltaNormal => Ok((5 + bl, 3)),
            frozen => Err(Error::FrozenParameter { class: format!("{frozen:?}") }),
        }
    }

    /// Packs the scene's stored appearance (three-lobe zonal scenes only).
    pub fn from_scene(scene: &Scene) -> Result<Self> {
        let mut out = FitParams {
            basis: DiffuseBasis::Zh,
            count: scene.primitives.len(),
            data: Vec::new(),
        };
        out.data = vec![0.0; out.count * out.stride()];
        for (i, prim) in scene.primitives.iter().enumerate() {
            let bl = out.basis_len();
            let p = out.prim_mut(i);
            p[..3].copy_from_slice(&prim.albedo);
            p[3..3 + bl].copy_from_slice(&prim.zh.to_flat());
            p[3 + bl] = prim.specular_visibility;
            p[4 + bl] = prim.roughness;
            p[5 + bl] = prim.delta_normal.x;
            p[6 + bl] = prim.delta_normal.y;
            p[7 + bl] = prim.delta_normal.z;
        }
        Ok(out)
    }

    /// Default initialization: gray albedo, a band-0 normal lobe whose
    /// expansion is the unit-constant transport, small visibility, mid-range
    /// roughness, zero normal offset.
    pub fn init_default(count: usize, basis: DiffuseBasis) -> Self {
        let mut out = FitParams { basis, count, data: Vec::new() };
        out.data = vec![0.0; count * out.stride()];
        let bl = out.basis_len();
        for i in 0..count {
            let p = out.prim_mut(i);
            p[0] = 0.5;
            p[1] = 0.5;
            p[2] = 0.5;
            match basis {
                // Normal lobe (index 2) band 0: value z with z * Y00 = Y00^-1
                // * Y00... the constant transport needs coeff sqrt(4 pi), and
                // the lobe expansion multiplies by Y00 = 1/(2 sqrt(pi)), so
                // z = 4 pi.
                DiffuseBasis::Zh => {
                    for ch in 0..3 {
                        p[3 + (2 * 3 + ch) * 4] = 4.0 * PI;
                    }
                }
                // Dense form stores the transport directly: coeff 0 of each
                // channel = sqrt(4 pi).
                DiffuseBasis::ShUnrotated => {
                    for ch in 0..3 {
                        p[3 + ch * 16] = (4.0 * PI).sqrt();
                    }
                }
            }
            p[3 + bl] = 0.1;
            p[4 + bl] = 0.1;
        }
        out
    }

    /// Writes fitted appearance back into the scene (zonal scenes only; the
    /// dense representation has no scene storage).
    pub fn apply_to_scene(&self, scene: &mut Scene) -> Result<()> {
        if self.basis != DiffuseBasis::Zh {
            return Err(Error::LayoutMismatch(
                "only the three-lobe zonal representation round-trips into a scene".into(),
            ));
        }
        if scene.primitives.len() != self.count {
            return Err(Error::LayoutMismatch(format!(
                "{} primitives vs {} parameter blocks",
                scene.primitives.len(),
                self.count
            )));
        }
        let bl = self.basis_len();
        for (i, prim) in scene.primitives.iter_mut().enumerate() {
            let p = self.prim(i);
            prim.albedo = [p[0], p[1], p[2]];
            prim.zh = ZhLobes::from_flat(&p[3..3 + bl])?;
            prim.specular_visibility = p[3 + bl];
            prim.roughness = p[4 + bl];
            prim.delta_normal = Vector3::new(p[5 + bl], p[6 + bl], p[7 + bl]);
        }
        Ok(())
    }

    /// Per-scalar update mask: appearance classes on, roughness gated by the
    /// extended mode.
    pub fn active_mask(&self, optimize_roughness: bool) -> Vec<bool> {
        let s = self.stride();
        let bl = self.basis_len();
        let mut mask = vec![true; self.count * s];
        if !optimize_roughness {
            for i in 0..self.count {
                mask[i * s + 4 + bl] = false;
            }
        }
        mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts_match_representations() {
        let zh = FitParams::init_default(2, DiffuseBasis::Zh);
        assert_eq!(zh.basis_len(), 51);
        assert_eq!(zh.stride(), 59);
        assert_eq!(zh.data.len(), 2 * 59);
        let sh = FitParams::init_default(2, DiffuseBasis::ShUnrotated);
        assert_eq!(sh.basis_len(), 113);
        assert_eq!(sh.stride(), 121);
    }

    #[test]
    fn default_init_expands_to_the_constant_transport() {
        use crate::harmonics::transport_from_zh;
        use nalgebra::Matrix3;
        let params = FitParams::init_default(1, DiffuseBasis::Zh);
        let z = ZhLobes::from_flat(params.basis_block(0)).unwrap();
        let t = transport_from_zh(&z, &Matrix3::identity()).unwrap();
        let expect = (4.0 * PI).sqrt();
        assert!((t.channel(0)[0] - expect).abs() < 1e-12);
        for (i, c) in t.channel(1).iter().enumerate().skip(1) {
            assert!(c.abs() < 1e-12, "coeff {i} = {c}");
        }
        assert_eq!(params.spec_vis(0), 0.1);
        assert_eq!(params.roughness(0), 0.1);
        assert_eq!(params.delta_normal(0), Vector3::zeros());
    }

    #[test]
    fn scene_roundtrip_preserves_appearance() {
        use crate::scene::generate_ground_truth;
        use crate::scene::rig::{HeadSpec, RigSpec};
        let scene = generate_ground_truth(&RigSpec::Head(HeadSpec::default()), 7).unwrap();
        let params = FitParams::from_scene(&scene).unwrap();
        let mut copy = scene.clone();
        // Perturb then restore.
        copy.primitives[0].albedo = [0.0; 3];
        params.apply_to_scene(&mut copy).unwrap();
        for (a, b) in scene.primitives.iter().zip(&copy.primitives) {
            assert_eq!(a.albedo, b.albedo);
            assert_eq!(a.zh, b.zh);
            assert_eq!(a.specular_visibility, b.specular_visibility);
            assert_eq!(a.roughness, b.roughness);
            assert_eq!(a.delta_normal, b.delta_normal);
        }
    }

    #[test]
    fn frozen_classes_are_rejected() {
        let params = FitParams::init_default(1, DiffuseBasis::Zh);
        for class in [
            ParamClass::Translation,
            ParamClass::Rotation,
            ParamClass::Scale,
            ParamClass::Opacity,
        ] {
            assert!(!class.is_appearance());
            let err = params.offset_of(class).unwrap_err();
            assert!(matches!(err, Error::FrozenParameter { .. }));
        }
        assert!(ParamClass::Basis.is_appearance());
        assert_eq!(params.offset_of(ParamClass::Roughness).unwrap(), (4 + 51, 1));
    }

    #[test]
    fn roughness_mask_gates_extended_mode() {
        let params = FitParams::init_default(3, DiffuseBasis::Zh);
        let frozen = params.active_mask(false);
        let open = params.active_mask(true);
        assert!(open.iter().all(|m| *m));
        let s = params.stride();
        for i in 0..3 {
            assert!(!frozen[i * s + 4 + 51]);
        }
        assert_eq!(frozen.iter().filter(|m| !*m).count(), 3);
    }
}
