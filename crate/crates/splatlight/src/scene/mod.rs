//! Scenes: an articulated rig whose occupied texels each carry one oriented
//! 3D Gaussian primitive with appearance parameters.
//!
//! Primitives live in their texel's tangent frame, so posing the mesh moves
//! and reorients them rigidly. Ground-truth generation draws per-texel
//! parameters from a seeded, stream-per-texel RNG; every stored value is
//! f32-representable so the binary sidecar round-trips bit-exactly.

pub mod mesh;
pub mod rig;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::harmonics::ZhLobes;
use mesh::{build_texel_table, texel_frames, texel_spacings, Pose, TexelFrame, TexelTable};
use rig::{build_toy_rig, Rig, RigSpec};

/// One Gaussian primitive, anchored to a texel frame.
///
/// `delta_t` (frame units) and `delta_rot` place the splat relative to its
/// texel; `scale` holds the principal standard deviations (local z is the
/// flat direction). Appearance: `albedo` (diffuse RGB), `zh` (diffuse
/// radiance-transfer lobes), `delta_normal` (specular normal offset in the
/// splat frame), `specular_visibility`, and `roughness` (spherical-Gaussian
/// width).
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrimitive {
    pub texel_id: u32,
    pub delta_t: Vector3<f64>,
    pub delta_rot: UnitQuaternion<f64>,
    pub scale: Vector3<f64>,
    pub opacity: f64,
    pub albedo: [f64; 3],
    pub zh: ZhLobes,
    pub delta_normal: Vector3<f64>,
    pub specular_visibility: f64,
    pub roughness: f64,
}

/// World placement of a primitive under some pose.
#[derive(Clone, Copy, Debug)]
pub struct WorldSplat {
    pub mean: Vector3<f64>,
    /// World principal frame; column 2 is the splat's flat axis.
    pub rot: Matrix3<f64>,
}

/// Mean and principal frame of a primitive in world space.
pub fn world_from_local(frame: &TexelFrame, prim: &GaussianPrimitive) -> WorldSplat {
    WorldSplat {
        mean: frame.position + frame.tbn * prim.delta_t,
        rot: frame.tbn * prim.delta_rot.to_rotation_matrix().into_inner(),
    }
}

/// Covariance R diag(s^2) R^T of a placed splat.
pub fn covariance(rot: &Matrix3<f64>, scale: &Vector3<f64>) -> Matrix3<f64> {
    let d = Matrix3::from_diagonal(&scale.component_mul(scale));
    rot * d * rot.transpose()
}

/// World shading normal: the splat's flat axis nudged by `delta_normal`
/// (expressed in the splat frame), renormalized.
pub fn specular_normal_world(rot: &Matrix3<f64>, delta_normal: &Vector3<f64>) -> Result<Vector3<f64>> {
    let raw = rot * (Vector3::z() + delta_normal);
    let norm = raw.norm();
    if norm < 1e-8 {
        return Err(Error::DegenerateNormal { norm });
    }
    Ok(raw / norm)
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub rig: Rig,
    pub table: TexelTable,
    /// One primitive per occupied texel, in table order.
    pub primitives: Vec<GaussianPrimitive>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if self.primitives.len() != self.table.len() {
            return Err(Error::malformed(format!(
                "{} primitives for {} occupied texels",
                self.primitives.len(),
                self.table.len()
            )));
        }
        for (p, e) in self.primitives.iter().zip(&self.table.entries) {
            if p.texel_id != e.id {
                return Err(Error::malformed(format!(
                    "primitive texel id {} out of order (expected {})",
                    p.texel_id, e.id
                )));
            }
            if !(p.opacity > 0.0 && p.opacity <= 1.0) {
                return Err(Error::malformed(format!(
                    "opacity {} outside (0, 1] at texel {}",
                    p.opacity, p.texel_id
                )));
            }
            if p.scale.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::malformed(format!(
                    "non-positive scale at texel {}",
                    p.texel_id
                )));
            }
        }
        Ok(())
    }

    pub fn posed_vertices(&self, pose: &Pose) -> Result<Vec<Vector3<f64>>> {
        self.rig.mesh.pose_vertices(pose)
    }

    /// Texel frames for a pose, in table order.
    pub fn frames_for_pose(&self, pose: &Pose) -> Result<Vec<TexelFrame>> {
        let posed = self.rig.mesh.pose_vertices(pose)?;
        texel_frames(&self.rig.mesh, &posed, &self.table)
    }

    /// World splats for precomputed frames, in table order.
    pub fn place_splats(&self, frames: &[TexelFrame]) -> Vec<WorldSplat> {
        self.primitives
            .iter()
            .zip(frames)
            .map(|(p, f)| world_from_local(f, p))
            .collect()
    }

    /// Radius of the posed mesh about its vertex centroid; ray-offset
    /// epsilons scale with this.
    pub fn bounding_radius(posed: &[Vector3<f64>]) -> f64 {
        if posed.is_empty() {
            return 0.0;
        }
        let centroid = posed.iter().sum::<Vector3<f64>>() / posed.len() as f64;
        posed
            .iter()
            .map(|v| (v - centroid).norm())
            .fold(0.0, f64::max)
    }
}

/// Rounds through f32 so the value survives the binary sidecar bit-exactly.
pub fn q32(x: f64) -> f64 {
    x as f32 as f64
}

/// Quantizes quaternion coordinates through f32 (renormalizing once in
/// between) so stored rotations round-trip bit-exactly. The post-quantize
/// norm error is O(1e-7) and is deliberately left in place.
pub fn quantize_rotation(q: &UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let c = q.coords.map(q32);
    let renorm = c / c.norm();
    UnitQuaternion::new_unchecked(Quaternion::from_vector(renorm.map(q32)))
}

const PART_TINTS: [[f64; 3]; 4] = [
    [0.78, 0.42, 0.30],
    [0.32, 0.55, 0.78],
    [0.80, 0.72, 0.34],
    [0.45, 0.70, 0.45],
];

/// Builds a rig and populates every occupied texel with ground-truth
/// appearance. Deterministic in `seed`; each texel draws from its own RNG
/// stream, so values do not depend on iteration order.
///
/// The diffuse lobes put a decaying band spectrum on the normal lobe with
/// weaker tangential lobes; roughness is a constant 0.1 and the specular
/// normal offset starts at zero.
pub fn generate_ground_truth(spec: &RigSpec, seed: u64) -> Result<Scene> {
    let rig = build_toy_rig(spec)?;
    let table = build_texel_table(&rig.mesh)?;
    let rest = rig.mesh.pose_vertices(&rig.rest_pose())?;
    texel_frames(&rig.mesh, &rest, &table)?; // fail early on bad geometry
    let spacings = texel_spacings(&rig.mesh, &rest, &table);

    let mut primitives = Vec::with_capacity(table.len());
    for (slot, entry) in table.entries.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(entry.id as u64 + 1);
        let (part, _, _) = rig.mesh.texel_coords(entry.id);
        let tint = PART_TINTS[part as usize % PART_TINTS.len()];

        let sym = |r: &mut ChaCha8Rng| r.gen_range(-1.0..1.0);

        let spacing = spacings[slot].max(1e-4);
        let s_t = q32((0.55 * spacing).clamp(1e-4, 0.01));
        let s_b = q32((0.55 * spacing).clamp(1e-4, 0.01));
        let s_n = q32((0.18 * spacing).clamp(1e-4, 0.01));

        let delta_t = Vector3::new(
            q32(0.2 * spacing * sym(&mut rng)),
            q32(0.2 * spacing * sym(&mut rng)),
            q32(0.1 * spacing * rng.gen_range(0.0..1.0)),
        );
        let twist = rng.gen_range(-0.3..0.3);
        let delta_rot = quantize_rotation(&UnitQuaternion::from_axis_angle(
            &Vector3::z_axis(),
            twist,
        ));
        let opacity = q32(rng.gen_range(0.75..0.98));

        let albedo = [
            q32((tint[0] * (1.0 + 0.25 * sym(&mut rng))).clamp(0.05, 0.95)),
            q32((tint[1] * (1.0 + 0.25 * sym(&mut rng))).clamp(0.05, 0.95)),
            q32((tint[2] * (1.0 + 0.25 * sym(&mut rng))).clamp(0.05, 0.95)),
        ];

        let mut zh = ZhLobes::zeros();
        // Unit transport scale: a band-0 coefficient of 4 pi expands to the
        // constant function 1, so these lobes describe order-one received
        // fractions, the same scale the fit initializes at.
        let unit = 4.0 * std::f64::consts::PI;
        let base: [f64; 3] = [
            unit * rng.gen_range(0.8..1.2),
            unit * rng.gen_range(0.8..1.2),
            unit * rng.gen_range(0.8..1.2),
        ];
        for ch in 0..3 {
            // Normal lobe: bright, positive band 0 with a decaying spectrum.
            zh.colored[2][ch][0] = q32(base[ch]);
            zh.colored[2][ch][1] = q32(0.35 * base[ch] * (1.0 + 0.2 * sym(&mut rng)));
            zh.colored[2][ch][2] = q32(0.15 * base[ch] * (1.0 + 0.3 * sym(&mut rng)));
            zh.colored[2][ch][3] = q32(0.06 * base[ch] * (1.0 + 0.3 * sym(&mut rng)));
            // Tangential lobes: no band 0 (it is degenerate with the normal
            // lobe's), smaller higher bands.
            for lobe in 0..2 {
                zh.colored[lobe][ch][0] = 0.0;
                for l in 1..4 {
                    zh.colored[lobe][ch][l] = q32(0.12 * base[ch] * sym(&mut rng));
                }
            }
        }
        let mean_base = (base[0] + base[1] + base[2]) / 3.0;
        for lobe in 0..3 {
            for b in 0..5 {
                zh.mono[lobe][b] =
                    q32(0.04 * mean_base * 0.6_f64.powi(b as i32) * sym(&mut rng));
            }
        }

        let specular_visibility = q32(rng.gen_range(0.2..0.95));
        let roughness = q32(0.1);

        primitives.push(GaussianPrimitive {
            texel_id: entry.id,
            delta_t,
            delta_rot,
            scale: Vector3::new(s_t, s_b, s_n),
            opacity,
            albedo,
            zh,
            delta_normal: Vector3::zeros(),
            specular_visibility,
            roughness,
        });
    }

    let scene = Scene { rig, table, primitives };
    scene.validate()?;
    Ok(scene)
}
