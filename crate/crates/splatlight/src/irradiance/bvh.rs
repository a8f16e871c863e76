//! Bounding-volume hierarchy over posed mesh triangles for shadow-ray
//! occlusion queries, plus the exhaustive reference used to validate it.

use nalgebra::Vector3;

/// Two-sided ray/triangle intersection (Moller-Trumbore). Returns the ray
/// parameter for hits with `t` strictly inside `(t_min, t_max)`.
pub fn ray_triangle(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    v0: &Vector3<f64>,
    v1: &Vector3<f64>,
    v2: &Vector3<f64>,
    t_min: f64,
    t_max: f64,
) -> Option<f64> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - v0;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > t_min && t < t_max).then_some(t)
}

#[derive(Clone, Debug)]
struct Node {
    min: Vector3<f64>,
    max: Vector3<f64>,
    /// Leaf when `count > 0`: triangles `start..start + count`.
    start: u32,
    count: u32,
    /// Inner node: left child is `self + 1`, right child is this index.
    right: u32,
}

/// Binary BVH with median splits on the widest centroid axis.
#[derive(Clone, Debug)]
pub struct Bvh {
    verts: Vec<Vector3<f64>>,
    tris: Vec<[u32; 3]>,
    nodes: Vec<Node>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn build(verts: &[Vector3<f64>], tris: &[[u32; 3]]) -> Self {
        let mut bvh = Bvh { verts: verts.to_vec(), tris: Vec::new(), nodes: Vec::new() };
        if tris.is_empty() {
            return bvh;
        }
        let centroids: Vec<Vector3<f64>> = tris
            .iter()
            .map(|t| {
                (verts[t[0] as usize] + verts[t[1] as usize] + verts[t[2] as usize]) / 3.0
            })
            .collect();
        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        bvh.split(tris, &centroids, &mut order);
        bvh
    }

    fn tri_bounds(
        verts: &[Vector3<f64>],
        tri: &[u32; 3],
    ) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = verts[tri[0] as usize];
        let mut hi = lo;
        for &vi in &tri[1..] {
            let v = verts[vi as usize];
            lo = lo.inf(&v);
            hi = hi.sup(&v);
        }
        (lo, hi)
    }

    /// Recursively builds the subtree for `order` and returns its node index.
    fn split(&mut self, tris: &[[u32; 3]], centroids: &[Vector3<f64>], order: &mut [u32]) -> u32 {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        let mut clo = lo;
        let mut chi = hi;
        for &i in order.iter() {
            let (tlo, thi) = Self::tri_bounds(&self.verts, &tris[i as usize]);
            lo = lo.inf(&tlo);
            hi = hi.sup(&thi);
            clo = clo.inf(&centroids[i as usize]);
            chi = chi.sup(&centroids[i as usize]);
        }
        let node = self.nodes.len() as u32;
        self.nodes.push(Node { min: lo, max: hi, start: 0, count: 0, right: 0 });

        let extent = chi - clo;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        if order.len() <= LEAF_SIZE || extent[axis] <= 0.0 {
            let start = self.tris.len() as u32;
            for &i in order.iter() {
                self.tris.push(tris[i as usize]);
            }
            self.nodes[node as usize].start = start;
            self.nodes[node as usize].count = order.len() as u32;
            return node;
        }
        // Deterministic median split: sort by (centroid coordinate, index).
        order.sort_by(|&a, &b| {
            centroids[a as usize][axis]
                .partial_cmp(&centroids[b as usize][axis])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mid = order.len() / 2;
        let (left, right) = order.split_at_mut(mid);
        self.split(tris, centroids, left);
        let right_node = self.split(tris, centroids, right);
        self.nodes[node as usize].right = right_node;
        node
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }

    fn slab_hit(
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
        min: &Vector3<f64>,
        max: &Vector3<f64>,
        t_max: f64,
    ) -> bool {
        let mut lo = 0.0f64;
        let mut hi = t_max;
        for a in 0..3 {
            if dir[a].abs() < 1e-300 {
                if origin[a] < min[a] || origin[a] > max[a] {
                    return false;
                }
            } else {
                let inv = 1.0 / dir[a];
                let mut t0 = (min[a] - origin[a]) * inv;
                let mut t1 = (max[a] - origin[a]) * inv;
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                lo = lo.max(t0);
                hi = hi.min(t1);
                if lo > hi {
                    return false;
                }
            }
        }
        true
    }

    /// Whether any triangle blocks the ray within `(t_min, t_max)`.
    pub fn any_hit(
        &self,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
        t_min: f64,
        t_max: f64,
    ) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let mut stack: Vec<u32> = vec![0];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if !Self::slab_hit(origin, dir, &node.min, &node.max, t_max) {
                continue;
            }
            if node.count > 0 {
                for tri in &self.tris[node.start as usize..(node.start + node.count) as usize] {
                    let v0 = &self.verts[tri[0] as usize];
                    let v1 = &self.verts[tri[1] as usize];
                    let v2 = &self.verts[tri[2] as usize];
                    if ray_triangle(origin, dir, v0, v1, v2, t_min, t_max).is_some() {
                        return true;
                    }
                }
            } else {
                stack.push(id + 1);
                stack.push(node.right);
            }
        }
        false
    }

    /// Reference query walking every triangle; used to validate traversal.
    pub fn any_hit_bruteforce(
        &self,
        origin: &Vector3<f64>,
        dir: &Vector3<f64>,
        t_min: f64,
        t_max: f64,
    ) -> bool {
        self.tris.iter().any(|tri| {
            ray_triangle(
                origin,
                dir,
                &self.verts[tri[0] as usize],
                &self.verts[tri[1] as usize],
                &self.verts[tri[2] as usize],
                t_min,
                t_max,
            )
            .is_some()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn triangle_hit_matches_closed_form() {
        let v0 = Vector3::new(-1.0, -1.0, 1.0);
        let v1 = Vector3::new(3.0, -1.0, 1.0);
        let v2 = Vector3::new(-1.0, 3.0, 1.0);
        let o = Vector3::zeros();
        let d = Vector3::z();
        let t = ray_triangle(&o, &d, &v0, &v1, &v2, 1e-12, 10.0).unwrap();
        assert_eq!(t, 1.0);
        // Two-sided: reversed winding still hits.
        assert!(ray_triangle(&o, &d, &v0, &v2, &v1, 1e-12, 10.0).is_some());
        // Range limits are strict.
        assert!(ray_triangle(&o, &d, &v0, &v1, &v2, 1e-12, 1.0).is_none());
        assert!(ray_triangle(&o, &d, &v0, &v1, &v2, 1.0, 10.0).is_none());
        // Outside the triangle.
        let o2 = Vector3::new(5.0, 5.0, 0.0);
        assert!(ray_triangle(&o2, &d, &v0, &v1, &v2, 1e-12, 10.0).is_none());
        // Parallel to the plane.
        assert!(ray_triangle(&o, &Vector3::x(), &v0, &v1, &v2, 1e-12, 10.0).is_none());
    }

    fn random_soup(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Vector3<f64>>, Vec<[u32; 3]>) {
        let mut verts = Vec::new();
        let mut tris = Vec::new();
        for i in 0..n {
            let c = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            for _ in 0..3 {
                verts.push(
                    c + 0.3
                        * Vector3::new(
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                        ),
                );
            }
            let b = (3 * i) as u32;
            tris.push([b, b + 1, b + 2]);
        }
        (verts, tris)
    }

    #[test]
    fn traversal_matches_exhaustive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (verts, tris) = random_soup(&mut rng, 200);
        let bvh = Bvh::build(&verts, &tris);
        assert_eq!(bvh.triangle_count(), 200);
        let mut hits = 0;
        for _ in 0..500 {
            let o = Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let d = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalize();
            let t_max = rng.gen_range(0.5..6.0);
            let fast = bvh.any_hit(&o, &d, 1e-12, t_max);
            let slow = bvh.any_hit_bruteforce(&o, &d, 1e-12, t_max);
            assert_eq!(fast, slow);
            hits += fast as usize;
        }
        assert!(hits > 50, "want a mix of hits and misses, got {hits}");
    }

    #[test]
    fn axis_aligned_rays_hit_axis_aligned_boxes() {
        // Degenerate direction components exercise the parallel-slab path.
        let verts = vec![
            Vector3::new(-1.0, -1.0, 2.0),
            Vector3::new(1.0, -1.0, 2.0),
            Vector3::new(0.0, 1.0, 2.0),
        ];
        let tris = vec![[0u32, 1, 2]];
        let bvh = Bvh::build(&verts, &tris);
        assert!(bvh.any_hit(&Vector3::zeros(), &Vector3::z(), 1e-12, 10.0));
        assert!(!bvh.any_hit(&Vector3::new(5.0, 0.0, 0.0), &Vector3::z(), 1e-12, 10.0));
        assert!(!bvh.any_hit(&Vector3::zeros(), &-Vector3::z(), 1e-12, 10.0));
    }

    #[test]
    fn empty_scene_never_hits() {
        let bvh = Bvh::build(&[], &[]);
        assert!(!bvh.any_hit(&Vector3::zeros(), &Vector3::z(), 1e-12, f64::INFINITY));
    }
}
