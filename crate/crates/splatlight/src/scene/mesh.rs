//! Skinned base meshes and the texel-to-surface mapping.
//!
//! Each part of a mesh owns a unit UV square sampled by a `grid x grid`
//! texel lattice. A texel is "occupied" when its center falls inside some
//! triangle's UV footprint; occupied texels get a surface point and a
//! tangent/bitangent/normal frame, and later exactly one Gaussian primitive.

use nalgebra::{Isometry3, Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};

/// Linear-blend skinning weights; at most two bones influence a vertex.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkinWeights {
    pub bones: [u16; 2],
    pub weights: [f64; 2],
}

impl SkinWeights {
    pub fn rigid(bone: u16) -> Self {
        SkinWeights { bones: [bone, 0], weights: [1.0, 0.0] }
    }

    pub fn blend(a: u16, b: u16, wb: f64) -> Self {
        SkinWeights { bones: [a, b], weights: [1.0 - wb, wb] }
    }
}

/// Triangle mesh with per-vertex UVs (one unit square per part) and skinning.
#[derive(Clone, Debug)]
pub struct BaseMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    pub uvs: Vec<[f64; 2]>,
    /// Part id per vertex; triangles never straddle parts.
    pub part: Vec<u16>,
    pub skin: Vec<SkinWeights>,
    pub part_count: usize,
    /// Texels per UV-square side, per part.
    pub grid: usize,
    /// Vertex -> position-weld group, for smooth normals across UV seams.
    weld: Vec<u32>,
    weld_count: usize,
}

/// Per-bone world transforms of a posed skeleton.
#[derive(Clone, Debug)]
pub struct Pose {
    pub transforms: Vec<Isometry3<f64>>,
}

impl Pose {
    pub fn identity(bones: usize) -> Self {
        Pose { transforms: vec![Isometry3::identity(); bones] }
    }

    pub fn is_identity(&self) -> bool {
        self.transforms.iter().all(|t| {
            t.translation.vector == Vector3::zeros() && t.rotation.angle() == 0.0
        })
    }
}

/// Orthonormal right-handed texel frame; columns are tangent, bitangent,
/// normal.
#[derive(Clone, Copy, Debug)]
pub struct TexelFrame {
    pub position: Vector3<f64>,
    pub tbn: Matrix3<f64>,
}

impl TexelFrame {
    pub fn tangent(&self) -> Vector3<f64> {
        self.tbn.column(0).into_owned()
    }

    pub fn bitangent(&self) -> Vector3<f64> {
        self.tbn.column(1).into_owned()
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.tbn.column(2).into_owned()
    }
}

/// One occupied texel: its id, covering triangle, and barycentrics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TexelEntry {
    pub id: u32,
    pub tri: u32,
    pub bary: [f64; 3],
}

/// Occupied-texel index, sorted by id; pose-independent.
#[derive(Clone, Debug)]
pub struct TexelTable {
    pub grid: usize,
    pub part_count: usize,
    pub entries: Vec<TexelEntry>,
}

impl TexelTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Slot of a texel id, if occupied.
    pub fn slot_of(&self, id: u32) -> Option<usize> {
        self.entries.binary_search_by_key(&id, |e| e.id).ok()
    }
}

impl BaseMesh {
    pub fn new(
        vertices: Vec<Vector3<f64>>,
        triangles: Vec<[u32; 3]>,
        uvs: Vec<[f64; 2]>,
        part: Vec<u16>,
        skin: Vec<SkinWeights>,
        part_count: usize,
        grid: usize,
    ) -> Result<Self> {
        let n = vertices.len();
        if uvs.len() != n || part.len() != n || skin.len() != n {
            return Err(Error::malformed("mesh attribute arrays disagree in length"));
        }
        for t in &triangles {
            for &v in t {
                if v as usize >= n {
                    return Err(Error::malformed(format!("triangle references vertex {v}")));
                }
            }
            if part[t[0] as usize] != part[t[1] as usize]
                || part[t[0] as usize] != part[t[2] as usize]
            {
                return Err(Error::malformed("triangle straddles parts"));
            }
        }
        for s in &skin {
            let sum = s.weights[0] + s.weights[1];
            if (sum - 1.0).abs() > 1e-9 || s.weights.iter().any(|w| *w < -1e-12) {
                return Err(Error::malformed("skin weights must be convex"));
            }
        }
        let (weld, weld_count) = build_weld_groups(&vertices);
        Ok(BaseMesh { vertices, triangles, uvs, part, skin, part_count, grid, weld, weld_count })
    }

    pub fn texel_id(&self, part: u16, col: usize, row: usize) -> u32 {
        (part as usize * self.grid * self.grid + row * self.grid + col) as u32
    }

    /// Decomposes a texel id into (part, col, row).
    pub fn texel_coords(&self, id: u32) -> (u16, usize, usize) {
        let g2 = self.grid * self.grid;
        let part = id as usize / g2;
        let rem = id as usize % g2;
        (part as u16, rem % self.grid, rem / self.grid)
    }

    /// Applies linear-blend skinning. The identity pose returns the rest
    /// vertices bit-exactly (displacements are accumulated as deltas).
    pub fn pose_vertices(&self, pose: &Pose) -> Result<Vec<Vector3<f64>>> {
        let bones = pose.transforms.len();
        for s in &self.skin {
            for k in 0..2 {
                if s.weights[k] > 0.0 && s.bones[k] as usize >= bones {
                    return Err(Error::malformed(format!(
                        "skin references bone {} but pose has {bones}",
                        s.bones[k]
                    )));
                }
            }
        }
        Ok(self
            .vertices
            .iter()
            .zip(&self.skin)
            .map(|(v, s)| {
                let mut out = *v;
                for k in 0..2 {
                    let w = s.weights[k];
                    if w > 0.0 {
                        let t = &pose.transforms[s.bones[k] as usize];
                        let moved = t.transform_point(&Point3::from(*v)).coords;
                        out += w * (moved - v);
                    }
                }
                out
            })
            .collect())
    }

    /// Area-weighted vertex normals of a posed mesh, smoothed across UV
    /// seams by position-welding on the rest vertices.
    pub fn vertex_normals(&self, posed: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        let mut group_accum = vec![Vector3::zeros(); self.weld_count];
        for t in &self.triangles {
            let [a, b, c] = [t[0] as usize, t[1] as usize, t[2] as usize];
            let n = (posed[b] - posed[a]).cross(&(posed[c] - posed[a]));
            for &v in &[a, b, c] {
                group_accum[self.weld[v] as usize] += n;
            }
        }
        for g in group_accum.iter_mut() {
            let len = g.norm();
            if len > 1e-18 {
                *g /= len;
            }
        }
        self.weld.iter().map(|&g| group_accum[g as usize]).collect()
    }

    /// Edge audit: true when every position-welded edge of the part is shared
    /// by exactly two triangles.
    pub fn part_is_watertight(&self, part: u16) -> bool {
        let mut edges: HashMap<(u32, u32), usize> = HashMap::new();
        for t in &self.triangles {
            if self.part[t[0] as usize] != part {
                continue;
            }
            for k in 0..3 {
                let a = self.weld[t[k] as usize];
                let b = self.weld[t[(k + 1) % 3] as usize];
                let key = (a.min(b), a.max(b));
                *edges.entry(key).or_insert(0) += 1;
            }
        }
        !edges.is_empty() && edges.values().all(|&c| c == 2)
    }
}

fn build_weld_groups(vertices: &[Vector3<f64>]) -> (Vec<u32>, usize) {
    let mut map: HashMap<[u64; 3], u32> = HashMap::new();
    let mut weld = Vec::with_capacity(vertices.len());
    for v in vertices {
        let key = [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
        let next = map.len() as u32;
        let g = *map.entry(key).or_insert(next);
        weld.push(g);
    }
    let count = map.len();
    (weld, count)
}

/// Rasterizes triangle UV footprints over each part's texel lattice. Every
/// texel center inside a footprint maps to exactly one surface point; centers
/// on shared chart edges resolve to the first triangle in index order.
pub fn build_texel_table(mesh: &BaseMesh) -> Result<TexelTable> {
    let g = mesh.grid as f64;
    let mut map: HashMap<u32, TexelEntry> = HashMap::new();
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let part = mesh.part[t[0] as usize];
        let uv0 = mesh.uvs[t[0] as usize];
        let uv1 = mesh.uvs[t[1] as usize];
        let uv2 = mesh.uvs[t[2] as usize];
        let area2 = (uv1[0] - uv0[0]) * (uv2[1] - uv0[1]) - (uv2[0] - uv0[0]) * (uv1[1] - uv0[1]);
        if area2.abs() < 1e-14 {
            continue; // zero UV footprint covers no texel centers
        }
        let umin = uv0[0].min(uv1[0]).min(uv2[0]);
        let umax = uv0[0].max(uv1[0]).max(uv2[0]);
        let vmin = uv0[1].min(uv1[1]).min(uv2[1]);
        let vmax = uv0[1].max(uv1[1]).max(uv2[1]);
        let c0 = ((umin * g - 0.5).ceil().max(0.0)) as usize;
        let c1 = ((umax * g - 0.5).floor().min(g - 1.0)).max(0.0) as usize;
        let r0 = ((vmin * g - 0.5).ceil().max(0.0)) as usize;
        let r1 = ((vmax * g - 0.5).floor().min(g - 1.0)).max(0.0) as usize;
        for row in r0..=r1 {
            for col in c0..=c1 {
                let u = (col as f64 + 0.5) / g;
                let v = (row as f64 + 0.5) / g;
                let w1 = ((u - uv0[0]) * (uv2[1] - uv0[1]) - (uv2[0] - uv0[0]) * (v - uv0[1]))
                    / area2;
                let w2 = ((uv1[0] - uv0[0]) * (v - uv0[1]) - (u - uv0[0]) * (uv1[1] - uv0[1]))
                    / area2;
                let w0 = 1.0 - w1 - w2;
                let eps = -1e-12;
                if w0 >= eps && w1 >= eps && w2 >= eps {
                    let id = mesh.texel_id(part, col, row);
                    map.entry(id).or_insert(TexelEntry {
                        id,
                        tri: ti as u32,
                        bary: [w0, w1, w2],
                    });
                }
            }
        }
    }
    let mut entries: Vec<TexelEntry> = map.into_values().collect();
    entries.sort_by_key(|e| e.id);
    Ok(TexelTable { grid: mesh.grid, part_count: mesh.part_count, entries })
}

/// Per-triangle dP/du of a posed mesh (the UV-gradient tangent direction).
fn triangle_tangent(
    mesh: &BaseMesh,
    posed: &[Vector3<f64>],
    tri: usize,
) -> Option<Vector3<f64>> {
    let t = mesh.triangles[tri];
    let [a, b, c] = [t[0] as usize, t[1] as usize, t[2] as usize];
    let e1 = posed[b] - posed[a];
    let e2 = posed[c] - posed[a];
    let du1 = mesh.uvs[b][0] - mesh.uvs[a][0];
    let dv1 = mesh.uvs[b][1] - mesh.uvs[a][1];
    let du2 = mesh.uvs[c][0] - mesh.uvs[a][0];
    let dv2 = mesh.uvs[c][1] - mesh.uvs[a][1];
    let denom = du1 * dv2 - du2 * dv1;
    if denom.abs() < 1e-14 {
        return None;
    }
    Some((dv2 * e1 - dv1 * e2) / denom)
}

/// World-space texel footprint size per occupied texel: the geometric mean
/// of the posed UV-derivative lengths divided by the lattice resolution.
/// Degenerate triangles report 0.0; callers clamp.
pub fn texel_spacings(
    mesh: &BaseMesh,
    posed: &[Vector3<f64>],
    table: &TexelTable,
) -> Vec<f64> {
    table
        .entries
        .iter()
        .map(|e| {
            let t = mesh.triangles[e.tri as usize];
            let [a, b, c] = [t[0] as usize, t[1] as usize, t[2] as usize];
            let e1 = posed[b] - posed[a];
            let e2 = posed[c] - posed[a];
            let du1 = mesh.uvs[b][0] - mesh.uvs[a][0];
            let dv1 = mesh.uvs[b][1] - mesh.uvs[a][1];
            let du2 = mesh.uvs[c][0] - mesh.uvs[a][0];
            let dv2 = mesh.uvs[c][1] - mesh.uvs[a][1];
            let denom = du1 * dv2 - du2 * dv1;
            if denom.abs() < 1e-14 {
                return 0.0;
            }
            let dpdu = (dv2 * e1 - dv1 * e2) / denom;
            let dpdv = (du1 * e2 - du2 * e1) / denom;
            (dpdu.norm() * dpdv.norm()).sqrt() / mesh.grid as f64
        })
        .collect()
}

/// Builds frames for every occupied texel of a posed mesh: interpolated
/// smooth normal, the triangle's dP/du orthogonalized against it, and
/// bitangent = normal x tangent, giving det(TBN) = +1.
pub fn texel_frames(
    mesh: &BaseMesh,
    posed: &[Vector3<f64>],
    table: &TexelTable,
) -> Result<Vec<TexelFrame>> {
    let normals = mesh.vertex_normals(posed);
    let mut frames = Vec::with_capacity(table.len());
    let mut degenerate: Vec<u32> = Vec::new();
    for e in &table.entries {
        let t = mesh.triangles[e.tri as usize];
        let [a, b, c] = [t[0] as usize, t[1] as usize, t[2] as usize];
        let position =
            e.bary[0] * posed[a] + e.bary[1] * posed[b] + e.bary[2] * posed[c];
        let n_raw = e.bary[0] * normals[a] + e.bary[1] * normals[b] + e.bary[2] * normals[c];
        let n_len = n_raw.norm();
        let tangent_raw = triangle_tangent(mesh, posed, e.tri as usize);
        let (n, t_unit) = match (n_len > 1e-9, tangent_raw) {
            (true, Some(tr)) if tr.norm() > 1e-12 => {
                let n = n_raw / n_len;
                let t_perp = tr - tr.dot(&n) * n;
                let t_len = t_perp.norm();
                if t_len < 1e-9 * tr.norm().max(1.0) {
                    degenerate.push(e.id);
                    continue;
                }
                (n, t_perp / t_len)
            }
            _ => {
                degenerate.push(e.id);
                continue;
            }
        };
        let bitangent = n.cross(&t_unit);
        let tbn = Matrix3::from_columns(&[t_unit, bitangent, n]);
        frames.push(TexelFrame { position, tbn });
    }
    if !degenerate.is_empty() {
        let count = degenerate.len();
        degenerate.truncate(8);
        return Err(Error::DegenerateTexels { count, first: degenerate });
    }
    Ok(frames)
}
