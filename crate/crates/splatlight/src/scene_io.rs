//! Disk formats: scene documents with a binary parameter sidecar, job
//! configuration JSON, and CSV optimization traces.
//!
//! A scene on disk is a JSON document plus a little-endian 32-bit float
//! sidecar holding the per-primitive parameters. The mesh is never stored:
//! the document carries the rig spec, the rig is rebuilt on load, and a
//! SHA-256 digest of the rebuilt geometry guards against drift. Every stored
//! parameter is quantized through f32, so generated scenes (which are
//! f32-clean by construction) round-trip bit-exactly.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion, Vector3, Vector4};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fit::{FitConfig, LossBreakdown, TraceRow};
use crate::fit::{Bounds, LossWeights};
use crate::harmonics::{ZhLobes, ZH_PARAMS};
use crate::lights::{EnvironmentMap, LightRig};
use crate::pipeline::{Condition, RenderSettings};
use crate::scene::rig::{build_toy_rig, Rig, RigSpec};
use crate::scene::{mesh::build_texel_table, q32, GaussianPrimitive, Scene};
use crate::shading::DiffuseBasis;
use crate::splat::Camera;

pub const SCENE_FORMAT: &str = "splatlight-scene";
pub const SCENE_VERSION: u32 = 1;

/// Sidecar floats per primitive: translation offset (3), rotation quaternion
/// (4, i j k w), scale (3), opacity (1), albedo (3), zonal lobe block (51),
/// specular normal offset (3), specular visibility (1), roughness (1).
pub const FLOATS_PER_PRIM: usize = 18 + ZH_PARAMS + 1;

const _: () = assert!(FLOATS_PER_PRIM == 70);

/// JSON half of a scene file; primitive parameters live in the sidecar.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneDoc {
    pub format: String,
    pub version: u32,
    pub rig: RigSpec,
    /// SHA-256 (hex) of the canonical rig geometry; checked after rebuild.
    pub rig_sha256: String,
    pub primitive_count: usize,
    pub floats_per_primitive: usize,
    /// Sidecar file name, resolved relative to the document.
    pub sidecar: String,
    /// Texel id per primitive, in sidecar order.
    pub texel_ids: Vec<u32>,
}

/// Reads a JSON value from disk.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes a JSON value, pretty-printed with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn push_f32(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&(v as f32).to_le_bytes());
}

fn push_u32s(hasher: &mut Sha256, vals: impl IntoIterator<Item = u32>) {
    for v in vals {
        hasher.update(v.to_le_bytes());
    }
}

fn push_f64s(hasher: &mut Sha256, vals: impl IntoIterator<Item = f64>) {
    for v in vals {
        hasher.update(v.to_le_bytes());
    }
}

/// SHA-256 over a canonical encoding of the rig's joints and mesh.
pub fn rig_hash_hex(rig: &Rig) -> String {
    let mut h = Sha256::new();
    let mesh = &rig.mesh;
    push_u32s(
        &mut h,
        [
            mesh.grid as u32,
            mesh.part_count as u32,
            mesh.vertices.len() as u32,
            mesh.triangles.len() as u32,
            rig.joints.len() as u32,
        ],
    );
    for v in &mesh.vertices {
        push_f64s(&mut h, [v.x, v.y, v.z]);
    }
    for t in &mesh.triangles {
        push_u32s(&mut h, t.iter().copied());
    }
    for uv in &mesh.uvs {
        push_f64s(&mut h, uv.iter().copied());
    }
    for p in &mesh.part {
        push_u32s(&mut h, [*p as u32]);
    }
    for s in &mesh.skin {
        push_u32s(&mut h, s.bones.iter().map(|b| *b as u32));
        push_f64s(&mut h, s.weights.iter().copied());
    }
    for j in &rig.joints {
        push_u32s(&mut h, [j.parent.map_or(u32::MAX, |p| p as u32)]);
        push_f64s(&mut h, [j.pivot.x, j.pivot.y, j.pivot.z]);
        push_f64s(&mut h, [j.axis.x, j.axis.y, j.axis.z]);
    }
    for lim in &rig.limits {
        push_f64s(&mut h, lim.iter().copied());
    }
    let digest = h.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

fn encode_primitives(prims: &[GaussianPrimitive]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(prims.len() * FLOATS_PER_PRIM * 4);
    for p in prims {
        for c in 0..3 {
            push_f32(&mut buf, p.delta_t[c]);
        }
        for c in 0..4 {
            push_f32(&mut buf, p.delta_rot.coords[c]);
        }
        for c in 0..3 {
            push_f32(&mut buf, p.scale[c]);
        }
        push_f32(&mut buf, p.opacity);
        for c in 0..3 {
            push_f32(&mut buf, p.albedo[c]);
        }
        for v in p.zh.to_flat() {
            push_f32(&mut buf, v);
        }
        for c in 0..3 {
            push_f32(&mut buf, p.delta_normal[c]);
        }
        push_f32(&mut buf, p.specular_visibility);
        push_f32(&mut buf, p.roughness);
    }
    buf
}

fn decode_primitives(bytes: &[u8], texel_ids: &[u32]) -> Result<Vec<GaussianPrimitive>> {
    let expect = texel_ids.len() * FLOATS_PER_PRIM * 4;
    if bytes.len() != expect {
        return Err(Error::malformed(format!(
            "sidecar holds {} bytes, expected {expect} for {} primitives",
            bytes.len(),
            texel_ids.len()
        )));
    }
    let floats: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let mut prims = Vec::with_capacity(texel_ids.len());
    for (i, &texel_id) in texel_ids.iter().enumerate() {
        let f = &floats[i * FLOATS_PER_PRIM..(i + 1) * FLOATS_PER_PRIM];
        let zh = ZhLobes::from_flat(&f[14..14 + ZH_PARAMS])?;
        let tail = 14 + ZH_PARAMS;
        prims.push(GaussianPrimitive {
            texel_id,
            delta_t: Vector3::new(f[0], f[1], f[2]),
            delta_rot: UnitQuaternion::new_unchecked(Quaternion::from_vector(
                Vector4::new(f[3], f[4], f[5], f[6]),
            )),
            scale: Vector3::new(f[7], f[8], f[9]),
            opacity: f[10],
            albedo: [f[11], f[12], f[13]],
            zh,
            delta_normal: Vector3::new(f[tail], f[tail + 1], f[tail + 2]),
            specular_visibility: f[tail + 3],
            roughness: f[tail + 4],
        });
    }
    Ok(prims)
}

fn sidecar_name(json_path: &Path) -> String {
    let stem = json_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("scene");
    format!("{stem}.bin")
}

/// Writes `scene.json` plus its binary sidecar next to it; returns the
/// sidecar path. Parameters are quantized through f32 on the way out.
pub fn save_scene(scene: &Scene, json_path: &Path) -> Result<PathBuf> {
    scene.validate()?;
    let sidecar = sidecar_name(json_path);
    let doc = SceneDoc {
        format: SCENE_FORMAT.to_string(),
        version: SCENE_VERSION,
        rig: scene.rig.spec.clone(),
        rig_sha256: rig_hash_hex(&scene.rig),
        primitive_count: scene.primitives.len(),
        floats_per_primitive: FLOATS_PER_PRIM,
        sidecar: sidecar.clone(),
        texel_ids: scene.primitives.iter().map(|p| p.texel_id).collect(),
    };
    write_json(json_path, &doc)?;
    let sidecar_path = json_path.with_file_name(sidecar);
    let mut file = fs::File::create(&sidecar_path)?;
    file.write_all(&encode_primitives(&scene.primitives))?;
    Ok(sidecar_path)
}

/// Loads a scene document, rebuilds its rig, verifies the geometry digest
/// and texel layout, and decodes the primitive sidecar.
pub fn load_scene(json_path: &Path) -> Result<Scene> {
    let doc: SceneDoc = read_json(json_path)?;
    if doc.format != SCENE_FORMAT {
        return Err(Error::malformed(format!("not a scene document: format {:?}", doc.format)));
    }
    if doc.version != SCENE_VERSION {
        return Err(Error::malformed(format!(
            "scene version {} unsupported (expected {SCENE_VERSION})",
            doc.version
        )));
    }
    if doc.floats_per_primitive != FLOATS_PER_PRIM {
        return Err(Error::malformed(format!(
            "scene stores {} floats per primitive, expected {FLOATS_PER_PRIM}",
            doc.floats_per_primitive
        )));
    }
    if doc.texel_ids.len() != doc.primitive_count {
        return Err(Error::malformed(format!(
            "{} texel ids for {} primitives",
            doc.texel_ids.len(),
            doc.primitive_count
        )));
    }
    let rig = build_toy_rig(&doc.rig)?;
    let hash = rig_hash_hex(&rig);
    if hash != doc.rig_sha256 {
        return Err(Error::malformed(format!(
            "rebuilt rig geometry digest {hash} does not match stored {}",
            doc.rig_sha256
        )));
    }
    let table = build_texel_table(&rig.mesh)?;
    if table.len() != doc.primitive_count {
        return Err(Error::malformed(format!(
            "rig yields {} occupied texels but the scene stores {}",
            table.len(),
            doc.primitive_count
        )));
    }
    for (e, &id) in table.entries.iter().zip(&doc.texel_ids) {
        if e.id != id {
            return Err(Error::malformed(format!(
                "texel id {id} does not match rebuilt occupancy (expected {})",
                e.id
            )));
        }
    }
    let sidecar_path = json_path.with_file_name(&doc.sidecar);
    let bytes = fs::read(&sidecar_path)?;
    let primitives = decode_primitives(&bytes, &doc.texel_ids)?;
    let scene = Scene { rig, table, primitives };
    scene.validate()?;
    Ok(scene)
}

/// Camera description: a look-at pose plus a vertical field of view in
/// degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub width: usize,
    pub height: usize,
    pub fov_y_deg: f64,
    pub eye: [f64; 3],
    pub target: [f64; 3],
    pub up: [f64; 3],
}

impl CameraSpec {
    pub fn build(&self) -> Result<Camera> {
        Camera::look_at(
            self.width,
            self.height,
            self.fov_y_deg.to_radians(),
            Vector3::from(self.eye),
            Vector3::from(self.target),
            Vector3::from(self.up),
        )
    }
}

/// Joint angles for one pose, in rig joint order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoseSpec {
    pub angles: Vec<f64>,
}

/// One training or evaluation condition: a pose and, optionally, a subset of
/// the light rig to activate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConditionSpec {
    pub angles: Vec<f64>,
    /// Light indices to activate; absent means the rig's own mask.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub light_indices: Option<Vec<usize>>,
}

impl ConditionSpec {
    pub fn to_condition(
        &self,
        rig: &LightRig,
        env: Option<&EnvironmentMap>,
    ) -> Result<Condition> {
        let lights = match &self.light_indices {
            Some(idx) => {
                for &i in idx {
                    if i >= rig.len() {
                        return Err(Error::malformed(format!(
                            "light index {i} out of range for a rig of {}",
                            rig.len()
                        )));
                    }
                }
                rig.with_active_subset(idx)
            }
            None => rig.clone(),
        };
        Ok(Condition { angles: self.angles.clone(), lights, env: env.cloned() })
    }
}

/// Appearance-fit job description, as read from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitJobSpec {
    pub basis: DiffuseBasis,
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub weights: LossWeights,
    pub bounds: Bounds,
    pub optimize_roughness: bool,
    pub trace_every: usize,
    pub train: Vec<ConditionSpec>,
    pub holdout: Vec<ConditionSpec>,
}

impl Default for FitJobSpec {
    fn default() -> Self {
        let cfg = FitConfig::default();
        FitJobSpec {
            basis: cfg.basis,
            steps: cfg.steps,
            lr: cfg.lr,
            batch: cfg.batch,
            weights: cfg.weights,
            bounds: cfg.bounds,
            optimize_roughness: cfg.optimize_roughness,
            trace_every: cfg.trace_every,
            train: Vec::new(),
            holdout: Vec::new(),
        }
    }
}

impl FitJobSpec {
    pub fn to_config(&self, settings: RenderSettings) -> FitConfig {
        FitConfig {
            basis: self.basis,
            steps: self.steps,
            lr: self.lr,
            batch: self.batch,
            weights: self.weights,
            bounds: self.bounds,
            optimize_roughness: self.optimize_roughness,
            trace_every: self.trace_every.max(1),
            settings,
        }
    }
}

const TRACE_HEADER: &str = "step,total,rec,offset,mask,normal,normal_orient,alpha_sparsity,bound,albedo_neg,neg_color,scale";

/// Writes an optimization trace as CSV. Floats use the shortest decimal form
/// that parses back to the same bits, so the file is lossless.
pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for row in trace {
        let b = &row.breakdown;
        out.push_str(&format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            row.step,
            row.total,
            b.rec,
            b.offset,
            b.mask,
            b.normal,
            b.normal_orient,
            b.alpha_sparsity,
            b.bound,
            b.albedo_neg,
            b.neg_color,
            b.scale,
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a trace CSV written by [`write_trace_csv`].
pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == TRACE_HEADER => {}
        other => {
            return Err(Error::malformed(format!("unexpected trace header {other:?}")));
        }
    }
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 12 {
            return Err(Error::malformed(format!(
                "trace line {} has {} cells, expected 12",
                ln + 2,
                cells.len()
            )));
        }
        let field = |i: usize| -> Result<f64> {
            cells[i]
                .parse::<f64>()
                .map_err(|e| Error::malformed(format!("trace line {}: {e}", ln + 2)))
        };
        rows.push(TraceRow {
            step: cells[0]
                .parse::<u64>()
                .map_err(|e| Error::malformed(format!("trace line {}: {e}", ln + 2)))?,
            total: field(1)?,
            breakdown: LossBreakdown {
                rec: field(2)?,
                offset: field(3)?,
                mask: field(4)?,
                normal: field(5)?,
                normal_orient: field(6)?,
                alpha_sparsity: field(7)?,
                bound: field(8)?,
                albedo_neg: field(9)?,
                neg_color: field(10)?,
                scale: field(11)?,
            },
        });
    }
    Ok(rows)
}

/// Quantizes every appearance parameter of a scene through f32, matching
/// what a save/load cycle stores. Fitted parameters pass through this before
/// being compared against or written to disk.
pub fn quantize_scene(scene: &mut Scene) {
    for p in &mut scene.primitives {
        p.delta_t = p.delta_t.map(q32);
        p.delta_rot = crate::scene::quantize_rotation(&p.delta_rot);
        p.scale = p.scale.map(q32);
        p.opacity = q32(p.opacity);
        for c in &mut p.albedo {
            *c = q32(*c);
        }
        let flat: Vec<f64> = p.zh.to_flat().iter().map(|v| q32(*v)).collect();
        p.zh = ZhLobes::from_flat(&flat).expect("flat layout is fixed");
        p.delta_normal = p.delta_normal.map(q32);
        p.specular_visibility = q32(p.specular_visibility);
        p.roughness = q32(p.roughness);
    }
}
