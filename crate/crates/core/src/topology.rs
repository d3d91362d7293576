//! Mutable half-indexed mesh used by simplification and remeshing.

use crate::geom::Vec3;
use crate::mesh::TriangleMesh;
use crate::real::Real;

#[derive(Debug, Clone)]
pub(crate) struct EditMesh<T> {
    pub pos: Vec<Vec3<T>>,
    pub faces: Vec<[u32; 3]>,
    pub face_alive: Vec<bool>,
    pub vert_alive: Vec<bool>,
    /// Live incident faces per vertex.
    pub vfaces: Vec<Vec<u32>>,
    pub live_faces: usize,
}

/// Rotates `f` so that it starts with `v`.
#[inline]
pub(crate) fn rotate_to(f: [u32; 3], v: u32) -> [u32; 3] {
    if f[0] == v {
        f
    } else if f[1] == v {
        [f[1], f[2], f[0]]
    } else {
        [f[2], f[0], f[1]]
    }
}

impl<T: Real> EditMesh<T> {
    pub fn from_mesh(m: &TriangleMesh<T>) -> Self {
        let mut vfaces = vec![Vec::new(); m.vertices.len()];
        for (f, face) in m.faces.iter().enumerate() {
            for &v in face {
                vfaces[v as usize].push(f as u32);
            }
        }
        Self {
            pos: m.vertices.clone(),
            faces: m.faces.clone(),
            face_alive: vec![true; m.faces.len()],
            vert_alive: vec![true; m.vertices.len()],
            vfaces,
            live_faces: m.faces.len(),
        }
    }

    /// Compacts live elements into a fresh mesh (UVs are dropped).
    pub fn to_mesh(&self) -> TriangleMesh<T> {
        self.to_mesh_with_map().0
    }

    /// Compacted mesh plus, for every output vertex, its index in `pos`.
    pub fn to_mesh_with_map(&self) -> (TriangleMesh<T>, Vec<u32>) {
        let mut used = vec![false; self.pos.len()];
        for (f, face) in self.faces.iter().enumerate() {
            if self.face_alive[f] {
                for &v in face {
                    used[v as usize] = true;
                }
            }
        }
        let mut remap = vec![u32::MAX; self.pos.len()];
        let mut vertices = Vec::new();
        let mut source = Vec::new();
        for (v, _) in used.iter().enumerate().filter(|(_, &u)| u) {
            remap[v] = vertices.len() as u32;
            vertices.push(self.pos[v]);
            source.push(v as u32);
        }
        let faces = self
            .faces
            .iter()
            .zip(&self.face_alive)
            .filter(|(_, &alive)| alive)
            .map(|(face, _)| face.map(|v| remap[v as usize]))
            .collect();
        (TriangleMesh::new(vertices, faces), source)
    }

    pub fn face_cross(&self, f: u32) -> Vec3<T> {
        let [a, b, c] = self.faces[f as usize];
        let (a, b, c) = (self.pos[a as usize], self.pos[b as usize], self.pos[c as usize]);
        (b - a).cross(c - a)
    }

    /// Sorted distinct one-ring of `v`.
    pub fn neighbors(&self, v: u32) -> Vec<u32> {
        let mut out = Vec::with_capacity(8);
        for &f in &self.vfaces[v as usize] {
            for &w in &self.faces[f as usize] {
                if w != v {
                    out.push(w);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn valence(&self, v: u32) -> usize {
        self.neighbors(v).len()
    }

    /// Faces `(f1, f2)` where `f1` traverses `a -> b` and `f2` traverses `b -> a`.
    pub fn edge_faces(&self, a: u32, b: u32) -> Option<(u32, u32)> {
        let mut f1 = None;
        let mut f2 = None;
        for &f in &self.vfaces[a as usize] {
            let r = rotate_to(self.faces[f as usize], a);
            if r[1] == b {
                f1 = Some(f);
            } else if r[2] == b {
                f2 = Some(f);
            }
        }
        Some((f1?, f2?))
    }

    fn opposite(&self, f: u32, a: u32, b: u32) -> u32 {
        *self.faces[f as usize].iter().find(|&&v| v != a && v != b).unwrap()
    }

    /// Live undirected edges with `a < b`, in face order.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.live_faces * 3 / 2);
        for (f, face) in self.faces.iter().enumerate() {
            if !self.face_alive[f] {
                continue;
            }
            for e in 0..3 {
                let (a, b) = (face[e], face[(e + 1) % 3]);
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Topological test for collapsing `b` into `a`; returns the two opposite vertices.
    pub fn collapse_allowed(&self, a: u32, b: u32) -> Option<(u32, u32)> {
        // a closed surface never drops below the triangular bipyramid
        if self.live_faces <= 6 {
            return None;
        }
        let (f1, f2) = self.edge_faces(a, b)?;
        let c = self.opposite(f1, a, b);
        let d = self.opposite(f2, a, b);
        if c == d {
            return None;
        }
        let na = self.neighbors(a);
        let nb = self.neighbors(b);
        let shared = na.iter().filter(|v| nb.binary_search(v).is_ok()).count();
        if shared != 2 || self.valence(c) <= 3 || self.valence(d) <= 3 {
            return None;
        }
        Some((c, d))
    }

    /// True when moving the merged vertex to `p` would flip or crush a surviving face.
    pub fn collapse_folds(&self, a: u32, b: u32, p: Vec3<T>) -> bool {
        for &v in &[a, b] {
            for &f in &self.vfaces[v as usize] {
                let face = self.faces[f as usize];
                if face.contains(&a) && face.contains(&b) {
                    continue;
                }
                let before = self.face_cross(f);
                let pts = face.map(|w| if w == a || w == b { p } else { self.pos[w as usize] });
                let after = (pts[1] - pts[0]).cross(pts[2] - pts[0]);
                let (nb, na) = (before.norm(), after.norm());
                if na <= T::epsilon() * nb.max(T::min_positive_value())
                    || before.dot(after) <= T::lit(0.2) * nb * na
                {
                    return true;
                }
            }
        }
        false
    }

    /// Merges `b` into `a` at position `p`. The caller checks `collapse_allowed`.
    pub fn collapse(&mut self, a: u32, b: u32, p: Vec3<T>) {
        let bf = std::mem::take(&mut self.vfaces[b as usize]);
        for f in bf {
            let face = &mut self.faces[f as usize];
            if face.contains(&a) {
                self.face_alive[f as usize] = false;
                self.live_faces -= 1;
                let face = *face;
                for v in face {
                    if v != b {
                        self.vfaces[v as usize].retain(|&g| g != f);
                    }
                }
            } else {
                for v in face.iter_mut() {
                    if *v == b {
                        *v = a;
                    }
                }
                self.vfaces[a as usize].push(f);
            }
        }
        self.vert_alive[b as usize] = false;
        self.pos[a as usize] = p;
    }

    /// Splits edge `a-b` at its midpoint; returns the new vertex.
    pub fn split(&mut self, a: u32, b: u32) -> Option<u32> {
        let (f1, f2) = self.edge_faces(a, b)?;
        let c = self.opposite(f1, a, b);
        let d = self.opposite(f2, a, b);
        let m = self.pos.len() as u32;
        self.pos.push((self.pos[a as usize] + self.pos[b as usize]) * T::lit(0.5));
        self.vert_alive.push(true);
        self.vfaces.push(Vec::new());
        // f1 = (a, b, c) -> (a, m, c) + (m, b, c); f2 = (b, a, d) -> (b, m, d) + (m, a, d)
        self.faces[f1 as usize] = [a, m, c];
        self.faces[f2 as usize] = [b, m, d];
        let g1 = self.faces.len() as u32;
        self.faces.push([m, b, c]);
        let g2 = g1 + 1;
        self.faces.push([m, a, d]);
        self.face_alive.extend([true, true]);
        self.live_faces += 2;
        self.vfaces[b as usize].retain(|&f| f != f1);
        self.vfaces[a as usize].retain(|&f| f != f2);
        self.vfaces[b as usize].push(g1);
        self.vfaces[a as usize].push(g2);
        self.vfaces[c as usize].push(g1);
        self.vfaces[d as usize].push(g2);
        self.vfaces[m as usize].extend([f1, f2, g1, g2]);
        Some(m)
    }

    /// Opposite vertices of edge `a-b` if flipping it keeps the mesh manifold and unfolded.
    pub fn flip_allowed(&self, a: u32, b: u32) -> Option<(u32, u32, u32, u32)> {
        let (f1, f2) = self.edge_faces(a, b)?;
        let c = self.opposite(f1, a, b);
        let d = self.opposite(f2, a, b);
        if c == d || self.valence(a) <= 3 || self.valence(b) <= 3 {
            return None;
        }
        if self.neighbors(c).binary_search(&d).is_ok() {
            return None;
        }
        let p = |v: u32| self.pos[v as usize];
        let n1 = (p(d) - p(a)).cross(p(c) - p(a));
        let n2 = (p(b) - p(d)).cross(p(c) - p(d));
        let old = self.face_cross(f1) + self.face_cross(f2);
        if n1.dot(old) <= T::zero() || n2.dot(old) <= T::zero() || n1.dot(n2) <= T::zero() {
            return None;
        }
        Some((f1, f2, c, d))
    }

    /// Replaces edge `a-b` by `c-d`. The caller checks `flip_allowed`.
    pub fn flip(&mut self, a: u32, b: u32, (f1, f2, c, d): (u32, u32, u32, u32)) {
        // (a, b, c) + (b, a, d) -> (a, d, c) + (d, b, c)
        self.faces[f1 as usize] = [a, d, c];
        self.faces[f2 as usize] = [d, b, c];
        self.vfaces[a as usize].retain(|&f| f != f2);
        self.vfaces[b as usize].retain(|&f| f != f1);
        self.vfaces[c as usize].push(f2);
        self.vfaces[d as usize].push(f1);
    }

    /// Area-weighted unit normal at `v`.
    pub fn vertex_normal(&self, v: u32) -> Vec3<T> {
        let mut n = Vec3::zero();
        for &f in &self.vfaces[v as usize] {
            n += self.face_cross(f);
        }
        n.normalized()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::icosphere;

    #[test]
    fn split_flip_collapse_keep_manifold() {
        let base: TriangleMesh<f64> = icosphere(1.0, 1);
        let mut m = EditMesh::from_mesh(&base);
        let (a, b) = m.edges()[0];
        let s = m.split(a, b).unwrap();
        assert_eq!(m.live_faces, base.faces.len() + 2);
        let out = m.to_mesh();
        assert!(out.check_manifold().is_watertight_manifold());
        assert!(out.signed_volume() > 0.0);
        assert_eq!(m.valence(s), 4);

        let mut flipped = 0;
        for (a, b) in m.edges() {
            if let Some(info) = m.flip_allowed(a, b) {
                m.flip(a, b, info);
                flipped += 1;
                break;
            }
        }
        assert_eq!(flipped, 1);
        assert!(m.to_mesh().check_manifold().is_watertight_manifold());

        let (a, b) = (s, m.neighbors(s)[0]);
        assert!(m.collapse_allowed(a, b).is_some());
        let p = m.pos[a as usize];
        m.collapse(a, b, p);
        let out = m.to_mesh();
        assert!(out.check_manifold().is_watertight_manifold());
        assert_eq!(out.faces.len(), base.faces.len());
    }
}
