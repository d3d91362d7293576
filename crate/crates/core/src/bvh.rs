//! Bounding volume hierarchy over mesh triangles for nearest-point and ray queries.

use crate::geom::{Aabb, Vec3};
use crate::mesh::TriangleMesh;
use crate::real::Real;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct Node<T> {
    bounds: Aabb<T>,
    /// Leaf: `start..start + count` in `order`. Inner: children at `start` and `start + 1`.
    start: u32,
    count: u32,
}

#[derive(Debug, Clone)]
pub struct Bvh<T> {
    tris: Vec<[Vec3<T>; 3]>,
    nodes: Vec<Node<T>>,
    order: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nearest<T> {
    pub face: u32,
    pub point: Vec3<T>,
    pub dist2: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit<T> {
    pub face: u32,
    pub t: T,
}

/// Closest point on triangle `abc` to `p`.
pub fn closest_point_on_triangle<T: Real>(p: Vec3<T>, a: Vec3<T>, b: Vec3<T>, c: Vec3<T>) -> Vec3<T> {
    let zero = T::zero();
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= zero && d2 <= zero {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= zero && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= zero && d1 >= zero && d3 <= zero {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= zero && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= zero && d2 >= zero && d6 <= zero {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= zero && d4 - d3 >= zero && d5 - d6 >= zero {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = T::one() / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Moller-Trumbore; two-sided, returns the ray parameter.
pub fn ray_triangle<T: Real>(o: Vec3<T>, d: Vec3<T>, tri: &[Vec3<T>; 3]) -> Option<T> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pv = d.cross(e2);
    let det = e1.dot(pv);
    if det.abs() <= T::epsilon() * e1.norm() * e2.norm() * d.norm() {
        return None;
    }
    let inv = T::one() / det;
    let tv = o - tri[0];
    let u = tv.dot(pv) * inv;
    if u < T::zero() || u > T::one() {
        return None;
    }
    let qv = tv.cross(e1);
    let v = d.dot(qv) * inv;
    if v < T::zero() || u + v > T::one() {
        return None;
    }
    Some(e2.dot(qv) * inv)
}

fn ray_box<T: Real>(o: Vec3<T>, inv: Vec3<T>, b: &Aabb<T>, tmax: T) -> bool {
    let (mut lo, mut hi) = (T::zero(), tmax);
    for k in 0..3 {
        if inv[k].is_infinite() {
            if o[k] < b.min[k] || o[k] > b.max[k] {
                return false;
            }
            continue;
        }
        let t0 = (b.min[k] - o[k]) * inv[k];
        let t1 = (b.max[k] - o[k]) * inv[k];
        let (t0, t1) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        lo = lo.max(t0);
        hi = hi.min(t1);
        if lo > hi {
            return false;
        }
    }
    true
}

impl<T: Real> Bvh<T> {
    pub fn new(mesh: &TriangleMesh<T>) -> Self {
        let tris: Vec<[Vec3<T>; 3]> = (0..mesh.faces.len()).map(|f| mesh.tri(f)).collect();
        let mut bvh = Self {
            nodes: Vec::with_capacity(2 * tris.len() / LEAF_SIZE + 1),
            order: (0..tris.len() as u32).collect(),
            tris,
        };
        if !bvh.tris.is_empty() {
            let centroids: Vec<Vec3<T>> = bvh
                .tris
                .iter()
                .map(|t| (t[0] + t[1] + t[2]) / T::lit(3.0))
                .collect();
            bvh.nodes.push(Node {
                bounds: Aabb::empty(),
                start: 0,
                count: 0,
            });
            bvh.build(0, 0, bvh.tris.len(), &centroids);
        }
        bvh
    }

    fn build(&mut self, node: usize, lo: usize, hi: usize, centroids: &[Vec3<T>]) {
        let mut bounds = Aabb::empty();
        let mut cb = Aabb::empty();
        for &f in &self.order[lo..hi] {
            for p in &self.tris[f as usize] {
                bounds.grow(*p);
            }
            cb.grow(centroids[f as usize]);
        }
        self.nodes[node].bounds = bounds;
        if hi - lo <= LEAF_SIZE {
            self.nodes[node].start = lo as u32;
            self.nodes[node].count = (hi - lo) as u32;
            return;
        }
        let ext = cb.extent();
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = (lo + hi) / 2;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            centroids[a as usize][axis]
                .partial_cmp(&centroids[b as usize][axis])
                .unwrap()
                .then(a.cmp(&b))
        });
        let left = self.nodes.len();
        let blank = Node {
            bounds: Aabb::empty(),
            start: 0,
            count: 0,
        };
        self.nodes.push(blank.clone());
        self.nodes.push(blank);
        self.nodes[node].start = left as u32;
        self.build(left, lo, mid, centroids);
        self.build(left + 1, mid, hi, centroids);
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    /// Nearest surface point; `None` only for an empty mesh.
    pub fn nearest(&self, p: Vec3<T>) -> Option<Nearest<T>> {
        if self.is_empty() {
            return None;
        }
        let mut best = Nearest {
            face: u32::MAX,
            point: p,
            dist2: T::infinity(),
        };
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.bounds.dist2(p) >= best.dist2 {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let t = &self.tris[f as usize];
                    let q = closest_point_on_triangle(p, t[0], t[1], t[2]);
                    let d2 = (q - p).norm2();
                    if d2 < best.dist2 || (d2 == best.dist2 && f < best.face) {
                        best = Nearest { face: f, point: q, dist2: d2 };
                    }
                }
            } else {
                let (l, r) = (node.start as usize, node.start as usize + 1);
                let (dl, dr) = (self.nodes[l].bounds.dist2(p), self.nodes[r].bounds.dist2(p));
                // visit the closer child first
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        Some(best)
    }

    /// All faces whose distance to `p` is within `tol` (squared units) of the minimum.
    pub fn nearest_ties(&self, p: Vec3<T>, tol: T) -> Vec<u32> {
        let Some(best) = self.nearest(p) else {
            return Vec::new();
        };
        let limit = best.dist2 + tol;
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.bounds.dist2(p) > limit {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let t = &self.tris[f as usize];
                    if (closest_point_on_triangle(p, t[0], t[1], t[2]) - p).norm2() <= limit {
                        out.push(f);
                    }
                }
            } else {
                stack.push(node.start as usize);
                stack.push(node.start as usize + 1);
            }
        }
        out.sort_unstable();
        out
    }

    /// First hit with parameter in `(t_min, t_max)` along `o + t d`.
    pub fn first_hit(&self, o: Vec3<T>, d: Vec3<T>, t_min: T, t_max: T) -> Option<RayHit<T>> {
        if self.is_empty() {
            return None;
        }
        let inv = Vec3 {
            x: T::one() / d.x,
            y: T::one() / d.y,
            z: T::one() / d.z,
        };
        let mut best: Option<RayHit<T>> = None;
        let mut limit = t_max;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if !ray_box(o, inv, &node.bounds, limit) {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    if let Some(t) = ray_triangle(o, d, &self.tris[f as usize]) {
                        if t > t_min && t < limit {
                            limit = t;
                            best = Some(RayHit { face: f, t });
                        }
                    }
                }
            } else {
                stack.push(node.start as usize);
                stack.push(node.start as usize + 1);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vec3;
    use crate::shapes::{icosphere, torus};
    use proptest::prelude::*;

    fn brute_nearest(mesh: &TriangleMesh<f64>, p: Vec3<f64>) -> f64 {
        (0..mesh.faces.len())
            .map(|f| {
                let [a, b, c] = mesh.tri(f);
                (closest_point_on_triangle(p, a, b, c) - p).norm2()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn closest_point_regions() {
        let (a, b, c) = (vec3(0.0, 0.0, 0.0), vec3(1.0, 0.0, 0.0), vec3(0.0, 1.0, 0.0));
        assert!((closest_point_on_triangle(vec3(0.2, 0.2, 3.0), a, b, c) - vec3(0.2, 0.2, 0.0)).norm() < 1e-15);
        assert_eq!(closest_point_on_triangle(vec3(-1.0, -1.0, 0.0), a, b, c), a);
        assert_eq!(closest_point_on_triangle(vec3(2.0, -0.5, 0.0), a, b, c), b);
        assert!((closest_point_on_triangle(vec3(0.5, -2.0, 1.0), a, b, c) - vec3(0.5, 0.0, 0.0)).norm() < 1e-15);
        let q = closest_point_on_triangle(vec3(1.0, 1.0, 0.0), a, b, c);
        assert!((q - vec3(0.5, 0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn ray_hits_sphere_front() {
        let m: TriangleMesh<f64> = icosphere(1.0, 3);
        let bvh = Bvh::new(&m);
        let hit = bvh
            .first_hit(vec3(0.013, 0.021, 5.0), vec3(0.0, 0.0, -1.0), 0.0, f64::INFINITY)
            .unwrap();
        assert!((hit.t - 4.0).abs() < 0.01, "{}", hit.t);
        assert!(bvh.first_hit(vec3(0.0, 0.0, 5.0), vec3(0.0, 1.0, 0.0), 0.0, 10.0).is_none());
        assert!(bvh.first_hit(vec3(0.013, 0.021, 5.0), vec3(0.0, 0.0, -1.0), 0.0, 3.9).is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn nearest_matches_brute_force(x in -2.0f64..2.0, y in -2.0f64..2.0, z in -2.0f64..2.0) {
            let m: TriangleMesh<f64> = torus(0.7, 0.25, 24, 12);
            let bvh = Bvh::new(&m);
            let p = vec3(x, y, z);
            let got = bvh.nearest(p).unwrap();
            prop_assert!((got.dist2 - brute_nearest(&m, p)).abs() < 1e-14);
            prop_assert!(((got.point - p).norm2() - got.dist2).abs() < 1e-14);
        }

        #[test]
        fn first_hit_matches_brute_force(
            ox in -2.0f64..2.0, oy in -2.0f64..2.0, dx in -1.0f64..1.0, dy in -1.0f64..1.0, dz in -1.0f64..1.0
        ) {
            let m: TriangleMesh<f64> = torus(0.7, 0.25, 24, 12);
            let bvh = Bvh::new(&m);
            let (o, d) = (vec3(ox, oy, 2.5), vec3(dx, dy, dz));
            prop_assume!(d.norm() > 0.1);
            let brute = (0..m.faces.len())
                .filter_map(|f| ray_triangle(o, d, &m.tri(f)).filter(|&t| t > 0.0))
                .fold(f64::INFINITY, f64::min);
            match bvh.first_hit(o, d, 0.0, f64::INFINITY) {
                Some(h) => prop_assert!((h.t - brute).abs() < 1e-12),
                None => prop_assert!(brute.is_infinite()),
            }
        }
    }
}
