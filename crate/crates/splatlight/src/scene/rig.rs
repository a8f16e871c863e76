//! Deterministic articulated toy rigs.
//!
//! Two families: a two-bone capsule arm hinged over a box torso, and a
//! sphere head nodding over a planar shoulder. Parts are watertight where
//! they can be (box, capsule, sphere), charts never overlap in UV, and cap
//! boundary rings reuse the cylinder ring generator so position-welding
//! closes the seams bit-exactly.

use std::f64::consts::PI;

use nalgebra::{Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::mesh::{BaseMesh, Pose, SkinWeights};

/// Hinge joint: rotation about `axis` through `pivot`, composed onto the
/// parent's transform. Joint 0 is the fixed root.
#[derive(Clone, Debug)]
pub struct Joint {
    pub parent: Option<usize>,
    pub pivot: Vector3<f64>,
    pub axis: Unit<Vector3<f64>>,
}

#[derive(Clone, Debug)]
pub struct Rig {
    pub spec: RigSpec,
    pub joints: Vec<Joint>,
    /// Hinge limits (radians) for joints 1.., matching `angle_count`.
    pub limits: Vec<[f64; 2]>,
    pub mesh: BaseMesh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RigSpec {
    Arm(ArmSpec),
    Head(HeadSpec),
}

/// Capsule arm (shoulder + elbow hinges about +y) hovering over a box torso.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub torso_half_extents: [f64; 3],
    /// Shoulder pivot; the rest arm runs along +x from here.
    pub shoulder: [f64; 3],
    pub upper_len: f64,
    pub fore_len: f64,
    pub radius: f64,
    /// Texels per UV-square side, per part.
    pub grid: usize,
    pub circ_segments: usize,
    pub axial_segments: usize,
    pub cap_rings: usize,
    pub face_segments: usize,
    /// Half-width of the skin blend band around the elbow.
    pub blend_halfwidth: f64,
    pub joint_limits: [[f64; 2]; 2],
}

impl Default for ArmSpec {
    fn default() -> Self {
        ArmSpec {
            torso_half_extents: [0.2, 0.1, 0.06],
            shoulder: [-0.28, 0.0, 0.16],
            upper_len: 0.26,
            fore_len: 0.24,
            radius: 0.04,
            grid: 64,
            circ_segments: 28,
            axial_segments: 20,
            cap_rings: 6,
            face_segments: 4,
            blend_halfwidth: 0.04,
            joint_limits: [[-1.2, 1.2], [-0.4, 1.3]],
        }
    }
}

impl ArmSpec {
    pub fn expected_vertex_count(&self) -> usize {
        let fs = self.face_segments;
        let box_v = 6 * (fs + 1) * (fs + 1);
        let cyl_v = (self.axial_segments + 1) * (self.circ_segments + 1);
        let cap_v = 1 + self.cap_rings * self.circ_segments;
        box_v + cyl_v + 2 * cap_v
    }

    pub fn expected_triangle_count(&self) -> usize {
        let fs = self.face_segments;
        let box_t = 12 * fs * fs;
        let cyl_t = 2 * self.axial_segments * self.circ_segments;
        let cap_t = self.circ_segments * (2 * self.cap_rings - 1);
        box_t + cyl_t + 2 * cap_t
    }
}

/// Sphere head on a neck hinge over an optional planar shoulder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub head_radius: f64,
    pub head_center: [f64; 3],
    pub neck_pivot: [f64; 3],
    pub shoulder_size: [f64; 2],
    pub shoulder_z: f64,
    pub shoulder_segments: usize,
    pub sphere_rings: usize,
    pub grid: usize,
    pub with_shoulder: bool,
    pub joint_limits: [f64; 2],
}

impl Default for HeadSpec {
    fn default() -> Self {
        HeadSpec {
            head_radius: 0.09,
            head_center: [0.0, 0.0, 0.32],
            neck_pivot: [0.0, 0.0, 0.22],
            shoulder_size: [0.36, 0.24],
            shoulder_z: 0.18,
            shoulder_segments: 10,
            sphere_rings: 12,
            grid: 64,
            with_shoulder: true,
            joint_limits: [-0.8, 0.8],
        }
    }
}

impl RigSpec {
    pub fn grid(&self) -> usize {
        match self {
            RigSpec::Arm(a) => a.grid,
            RigSpec::Head(h) => h.grid,
        }
    }
}

impl Rig {
    pub fn bone_count(&self) -> usize {
        self.joints.len()
    }

    /// Hinge angles accepted by [`Rig::pose`]; the root is fixed.
    pub fn angle_count(&self) -> usize {
        self.joints.len() - 1
    }

    pub fn rest_pose(&self) -> Pose {
        Pose::identity(self.bone_count())
    }

    /// Forward kinematics: world transform per bone for the given hinge
    /// angles (joint order, root excluded).
    pub fn pose(&self, angles: &[f64]) -> Result<Pose> {
        if angles.len() != self.angle_count() {
            return Err(Error::malformed(format!(
                "rig takes {} joint angles, got {}",
                self.angle_count(),
                angles.len()
            )));
        }
        for (i, (&a, lim)) in angles.iter().zip(&self.limits).enumerate() {
            if !a.is_finite() || a < lim[0] || a > lim[1] {
                return Err(Error::malformed(format!(
                    "angle {i} = {a} outside joint limits [{}, {}]",
                    lim[0], lim[1]
                )));
            }
        }
        let mut transforms = vec![Isometry3::identity(); self.joints.len()];
        for (j, joint) in self.joints.iter().enumerate().skip(1) {
            let theta = angles[j - 1];
            let rot = UnitQuaternion::from_axis_angle(&joint.axis, theta);
            let local = Translation3::from(joint.pivot)
                * rot
                * Translation3::from(-joint.pivot);
            let parent = joint.parent.expect("non-root joint has a parent");
            transforms[j] = transforms[parent] * local;
        }
        Ok(Pose { transforms })
    }
}

pub fn build_toy_rig(spec: &RigSpec) -> Result<Rig> {
    match spec {
        RigSpec::Arm(a) => build_arm(a, spec.clone()),
        RigSpec::Head(h) => build_head(h, spec.clone()),
    }
}

// ---------------------------------------------------------------------------
// chart packing

/// Shelf-packs world-sized rectangles into the unit square at one shared
/// scale, keeping `margin` between charts and the border. Returns the scale
/// and the chart rects [u0, v0, u1, v1] in input order.
fn pack_charts(dims: &[(f64, f64)], margin: f64) -> (f64, Vec<[f64; 4]>) {
    let try_pack = |s: f64| -> Option<Vec<[f64; 4]>> {
        let mut order: Vec<usize> = (0..dims.len()).collect();
        order.sort_by(|&a, &b| dims[b].1.partial_cmp(&dims[a].1).unwrap().then(a.cmp(&b)));
        let mut rects = vec![[0.0; 4]; dims.len()];
        let (mut x, mut y, mut shelf) = (margin, margin, 0.0f64);
        for &i in &order {
            let (w, h) = (dims[i].0 * s, dims[i].1 * s);
            if x + w + margin > 1.0 {
                y += shelf + margin;
                x = margin;
                shelf = 0.0;
            }
            if x + w + margin > 1.0 || y + h + margin > 1.0 {
                return None;
            }
            rects[i] = [x, y, x + w, y + h];
            x += w + margin;
            shelf = shelf.max(h);
        }
        Some(rects)
    };
    let (mut lo, mut hi) = (1e-3, 64.0);
    while try_pack(hi).is_some() {
        hi *= 2.0;
    }
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if try_pack(mid).is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = lo * 0.999;
    (s, try_pack(s).expect("scale below feasible bound"))
}

// ---------------------------------------------------------------------------
// mesh accumulation

struct MeshAccum {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[u32; 3]>,
    uvs: Vec<[f64; 2]>,
    part: Vec<u16>,
    skin: Vec<SkinWeights>,
}

impl MeshAccum {
    fn new() -> Self {
        MeshAccum {
            vertices: Vec::new(),
            triangles: Vec::new(),
            uvs: Vec::new(),
            part: Vec::new(),
            skin: Vec::new(),
        }
    }

    fn vertex(&mut self, pos: Vector3<f64>, uv: [f64; 2], part: u16, skin: SkinWeights) -> u32 {
        self.vertices.push(pos);
        self.uvs.push(uv);
        self.part.push(part);
        self.skin.push(skin);
        (self.vertices.len() - 1) as u32
    }

    fn tri(&mut self, a: u32, b: u32, c: u32) {
        self.triangles.push([a, b, c]);
    }

    fn finish(self, part_count: usize, grid: usize) -> Result<BaseMesh> {
        BaseMesh::new(
            self.vertices,
            self.triangles,
            self.uvs,
            self.part,
            self.skin,
            part_count,
            grid,
        )
    }
}

fn lerp_rect(rect: &[f64; 4], fu: f64, fv: f64) -> [f64; 2] {
    [rect[0] + fu * (rect[2] - rect[0]), rect[1] + fv * (rect[3] - rect[1])]
}

/// Grid face over integer lattice (i, j) in 0..=segs, positions from a
/// caller-supplied generator. Sharing one generator between faces makes
/// common edge vertices bit-identical, which the position-weld relies on.
/// Triangles wind so the normal follows d(pos)/di x d(pos)/dj.
fn add_face_with(
    acc: &mut MeshAccum,
    position: &dyn Fn(usize, usize) -> Vector3<f64>,
    segs: usize,
    rect: &[f64; 4],
    part: u16,
    skin: SkinWeights,
) {
    let mut ids = vec![0u32; (segs + 1) * (segs + 1)];
    for j in 0..=segs {
        for i in 0..=segs {
            let (fu, fv) = (i as f64 / segs as f64, j as f64 / segs as f64);
            ids[j * (segs + 1) + i] =
                acc.vertex(position(i, j), lerp_rect(rect, fu, fv), part, skin);
        }
    }
    for j in 0..segs {
        for i in 0..segs {
            let a = ids[j * (segs + 1) + i];
            let b = ids[j * (segs + 1) + i + 1];
            let c = ids[(j + 1) * (segs + 1) + i + 1];
            let d = ids[(j + 1) * (segs + 1) + i];
            acc.tri(a, b, c);
            acc.tri(a, c, d);
        }
    }
}

/// Point on the circle of radius `r` around `center` in the (n1, n2) plane.
/// Shared by cylinder rows and cap boundary rings so welding is bit-exact.
fn ring_point(center: Vector3<f64>, r: f64, phi: f64, n1: Vector3<f64>, n2: Vector3<f64>) -> Vector3<f64> {
    center + r * (phi.cos() * n1 + phi.sin() * n2)
}

struct CapsuleFrame {
    axis: Vector3<f64>,
    n1: Vector3<f64>,
    n2: Vector3<f64>,
}

fn axis_frame(axis: Vector3<f64>) -> CapsuleFrame {
    let axis = axis.normalize();
    let helper = if axis.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
    let n1 = axis.cross(&helper).normalize();
    let n2 = axis.cross(&n1);
    CapsuleFrame { axis, n1, n2 }
}

/// Hemispherical cap as a polar disk chart: rings of constant polar angle
/// map to concentric UV circles, the apex to the chart center. The boundary
/// ring (theta = pi/2) reuses [`ring_point`].
#[allow(clippy::too_many_arguments)]
fn add_cap(
    acc: &mut MeshAccum,
    center: Vector3<f64>,
    apex_dir: Vector3<f64>,
    r: f64,
    frame: &CapsuleFrame,
    rings: usize,
    circ: usize,
    rect: &[f64; 4],
    part: u16,
    skin_of: &dyn Fn(Vector3<f64>) -> SkinWeights,
    flip: bool,
) {
    let cu = 0.5 * (rect[0] + rect[2]);
    let cv = 0.5 * (rect[1] + rect[3]);
    let ru = 0.5 * (rect[2] - rect[0]);
    let rv = 0.5 * (rect[3] - rect[1]);
    let apex_pos = center + r * apex_dir;
    let apex = acc.vertex(apex_pos, [cu, cv], part, skin_of(apex_pos));
    let mut rows: Vec<Vec<u32>> = Vec::with_capacity(rings);
    for i in 1..=rings {
        let theta = 0.5 * PI * i as f64 / rings as f64;
        let frac = i as f64 / rings as f64;
        let mut row = Vec::with_capacity(circ);
        for j in 0..circ {
            let phi = 2.0 * PI * j as f64 / circ as f64;
            let pos = if i == rings {
                ring_point(center, r, phi, frame.n1, frame.n2)
            } else {
                center
                    + r * (theta.cos() * apex_dir
                        + theta.sin() * (phi.cos() * frame.n1 + phi.sin() * frame.n2))
            };
            let uv = [cu + frac * ru * phi.cos(), cv + frac * rv * phi.sin()];
            row.push(acc.vertex(pos, uv, part, skin_of(pos)));
        }
        rows.push(row);
    }
    let mut tri = |a: u32, b: u32, c: u32| {
        if flip {
            acc.tri(a, c, b);
        } else {
            acc.tri(a, b, c);
        }
    };
    for j in 0..circ {
        let jn = (j + 1) % circ;
        tri(apex, rows[0][j], rows[0][jn]);
    }
    for i in 0..rings - 1 {
        for j in 0..circ {
            let jn = (j + 1) % circ;
            tri(rows[i][j], rows[i + 1][j], rows[i + 1][jn]);
            tri(rows[i][j], rows[i + 1][jn], rows[i][jn]);
        }
    }
}

/// Capsule: open cylinder (u along the axis, v around) plus two caps.
#[allow(clippy::too_many_arguments)]
fn add_capsule(
    acc: &mut MeshAccum,
    a: Vector3<f64>,
    b: Vector3<f64>,
    r: f64,
    circ: usize,
    axial: usize,
    cap_rings: usize,
    rects: &[[f64; 4]; 3],
    part: u16,
    skin_of: &dyn Fn(Vector3<f64>) -> SkinWeights,
) {
    let frame = axis_frame(b - a);
    let len = (b - a).norm();
    let mut ids = vec![0u32; (axial + 1) * (circ + 1)];
    for i in 0..=axial {
        let center = a + (len * i as f64 / axial as f64) * frame.axis;
        for j in 0..=circ {
            let phi = 2.0 * PI * ((j % circ) as f64) / circ as f64;
            let pos = ring_point(center, r, phi, frame.n1, frame.n2);
            let uv = lerp_rect(&rects[0], i as f64 / axial as f64, j as f64 / circ as f64);
            ids[i * (circ + 1) + j] = acc.vertex(pos, uv, part, skin_of(pos));
        }
    }
    for i in 0..axial {
        for j in 0..circ {
            let p = ids[i * (circ + 1) + j];
            let q = ids[i * (circ + 1) + j + 1];
            let s = ids[(i + 1) * (circ + 1) + j + 1];
            let t = ids[(i + 1) * (circ + 1) + j];
            acc.tri(p, q, s);
            acc.tri(p, s, t);
        }
    }
    // Apex points away from the cylinder on both ends; the A cap needs its
    // winding mirrored to stay outward.
    add_cap(acc, a, -frame.axis, r, &frame, cap_rings, circ, &rects[1], part, skin_of, true);
    add_cap(acc, b, frame.axis, r, &frame, cap_rings, circ, &rects[2], part, skin_of, false);
}

// ---------------------------------------------------------------------------
// rigs

fn build_arm(a: &ArmSpec, spec: RigSpec) -> Result<Rig> {
    let [hx, hy, hz] = a.torso_half_extents;
    let shoulder = Vector3::from(a.shoulder);
    let elbow = shoulder + Vector3::new(a.upper_len, 0.0, 0.0);
    let tip = elbow + Vector3::new(a.fore_len, 0.0, 0.0);

    let mut acc = MeshAccum::new();

    // Part 0: torso box, rigid to the root bone.
    let face_dims = [
        (2.0 * hy, 2.0 * hz),
        (2.0 * hy, 2.0 * hz),
        (2.0 * hx, 2.0 * hz),
        (2.0 * hx, 2.0 * hz),
        (2.0 * hx, 2.0 * hy),
        (2.0 * hx, 2.0 * hy),
    ];
    let (_, box_rects) = pack_charts(&face_dims, 2.5 / a.grid as f64);
    // Canonical per-axis lattice coordinates: every face evaluates shared
    // edge points through the same expressions, so they weld bit-exactly.
    let fs = a.face_segments;
    let cx = move |k: usize| -hx + (k as f64 / fs as f64) * (2.0 * hx);
    let cy = move |k: usize| -hy + (k as f64 / fs as f64) * (2.0 * hy);
    let cz = move |k: usize| -hz + (k as f64 / fs as f64) * (2.0 * hz);
    // +x, -x, +y, -y, +z, -z; index maps chosen so di x dj points outward.
    let faces: [Box<dyn Fn(usize, usize) -> Vector3<f64>>; 6] = [
        Box::new(move |i, j| Vector3::new(cx(fs), cy(i), cz(j))),
        Box::new(move |i, j| Vector3::new(cx(0), cy(fs - i), cz(j))),
        Box::new(move |i, j| Vector3::new(cx(fs - i), cy(fs), cz(j))),
        Box::new(move |i, j| Vector3::new(cx(i), cy(0), cz(j))),
        Box::new(move |i, j| Vector3::new(cx(i), cy(j), cz(fs))),
        Box::new(move |i, j| Vector3::new(cx(i), cy(fs - j), cz(0))),
    ];
    for (k, face) in faces.iter().enumerate() {
        add_face_with(&mut acc, face, fs, &box_rects[k], 0, SkinWeights::rigid(0));
    }

    // Part 1: arm capsule skinned to upper/fore bones with a blend band at
    // the elbow.
    let total_len = a.upper_len + a.fore_len;
    let circumference = 2.0 * PI * a.radius;
    let cap_d = PI * a.radius; // geodesic diameter of a hemisphere chart
    let (_, arm_rects) = pack_charts(
        &[(total_len, circumference), (cap_d, cap_d), (cap_d, cap_d)],
        2.5 / a.grid as f64,
    );
    let bw = a.blend_halfwidth;
    let upper_len = a.upper_len;
    let skin_of = move |pos: Vector3<f64>| -> SkinWeights {
        let x_along = pos.x - shoulder.x;
        let t = ((x_along - (upper_len - bw)) / (2.0 * bw)).clamp(0.0, 1.0);
        if t == 0.0 {
            SkinWeights::rigid(1)
        } else if t == 1.0 {
            SkinWeights::rigid(2)
        } else {
            SkinWeights::blend(1, 2, t)
        }
    };
    add_capsule(
        &mut acc,
        shoulder,
        tip,
        a.radius,
        a.circ_segments,
        a.axial_segments,
        a.cap_rings,
        &[arm_rects[0], arm_rects[1], arm_rects[2]],
        1,
        &skin_of,
    );

    let mesh = acc.finish(2, a.grid)?;
    let joints = vec![
        Joint { parent: None, pivot: Vector3::zeros(), axis: Vector3::y_axis() },
        Joint { parent: Some(0), pivot: shoulder, axis: Vector3::y_axis() },
        Joint { parent: Some(1), pivot: elbow, axis: Vector3::y_axis() },
    ];
    Ok(Rig { spec, joints, limits: a.joint_limits.to_vec(), mesh })
}

fn build_head(h: &HeadSpec, spec: RigSpec) -> Result<Rig> {
    let center = Vector3::from(h.head_center);
    let mut acc = MeshAccum::new();
    let mut part_count = 0u16;

    if h.with_shoulder {
        let [sx, sy] = h.shoulder_size;
        let (_, rects) = pack_charts(&[(sx, sy)], 2.5 / h.grid as f64);
        let segs = h.shoulder_segments;
        let z = h.shoulder_z;
        let plane = move |i: usize, j: usize| {
            Vector3::new(
                -0.5 * sx + (i as f64 / segs as f64) * sx,
                -0.5 * sy + (j as f64 / segs as f64) * sy,
                z,
            )
        };
        add_face_with(&mut acc, &plane, segs, &rects[0], part_count, SkinWeights::rigid(0));
        part_count += 1;
    }

    // Sphere: two hemisphere disk charts sharing the equator ring.
    let cap_d = PI * h.head_radius;
    let (_, rects) = pack_charts(&[(cap_d, cap_d), (cap_d, cap_d)], 2.5 / h.grid as f64);
    let frame = axis_frame(Vector3::z());
    let circ = 4 * h.sphere_rings;
    let skin_of = |_: Vector3<f64>| SkinWeights::rigid(1);
    add_cap(&mut acc, center, Vector3::z(), h.head_radius, &frame, h.sphere_rings, circ, &rects[0], part_count, &skin_of, false);
    add_cap(&mut acc, center, -Vector3::z(), h.head_radius, &frame, h.sphere_rings, circ, &rects[1], part_count, &skin_of, true);
    part_count += 1;

    let mesh = acc.finish(part_count as usize, h.grid)?;
    let joints = vec![
        Joint { parent: None, pivot: Vector3::zeros(), axis: Vector3::y_axis() },
        Joint { parent: Some(0), pivot: Vector3::from(h.neck_pivot), axis: Vector3::y_axis() },
    ];
    Ok(Rig { spec, joints, limits: vec![h.joint_limits], mesh })
}
