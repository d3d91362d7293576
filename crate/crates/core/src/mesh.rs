//! Indexed triangle meshes and their topology queries.

use std::collections::HashMap;

use crate::geom::{Aabb, Vec3};
use crate::real::Real;

/// Per-corner texture coordinates, indexed like OBJ `vt` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct UvLayer<T> {
    pub coords: Vec<[T; 2]>,
    /// One uv-index triple per mesh face.
    pub faces: Vec<[u32; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh<T> {
    pub vertices: Vec<Vec3<T>>,
    pub faces: Vec<[u32; 3]>,
    pub uv: Option<UvLayer<T>>,
}

impl<T: Real> Default for TriangleMesh<T> {
    fn default() -> Self {
        Self::new(Vec::new(), Vec::new())
    }
}

#[inline]
pub(crate) fn edge_key(a: u32, b: u32) -> u64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    ((lo as u64) << 32) | hi as u64
}

#[inline]
pub(crate) fn unpack_edge(k: u64) -> (u32, u32) {
    ((k >> 32) as u32, k as u32)
}

impl<T: Real> TriangleMesh<T> {
    pub fn new(vertices: Vec<Vec3<T>>, faces: Vec<[u32; 3]>) -> Self {
        Self {
            vertices,
            faces,
            uv: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn tri(&self, f: usize) -> [Vec3<T>; 3] {
        let [a, b, c] = self.faces[f];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Unnormalized face normal (twice the area vector).
    pub fn face_cross(&self, f: usize) -> Vec3<T> {
        let [a, b, c] = self.tri(f);
        (b - a).cross(c - a)
    }

    pub fn face_normal(&self, f: usize) -> Vec3<T> {
        self.face_cross(f).normalized()
    }

    pub fn face_area(&self, f: usize) -> T {
        self.face_cross(f).norm() * T::lit(0.5)
    }

    pub fn area(&self) -> T {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Signed enclosed volume; positive for outward-oriented closed meshes.
    pub fn signed_volume(&self) -> T {
        let six = T::lit(6.0);
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.tri(f);
                a.dot(b.cross(c)) / six
            })
            .sum()
    }

    /// Area-weighted vertex normals, unit length (zero for isolated vertices).
    pub fn vertex_normals(&self) -> Vec<Vec3<T>> {
        let mut acc = vec![Vec3::zero(); self.vertices.len()];
        for (f, face) in self.faces.iter().enumerate() {
            let n = self.face_cross(f);
            for &v in face {
                acc[v as usize] += n;
            }
        }
        acc.into_iter().map(Vec3::normalized).collect()
    }

    pub fn bounds(&self) -> Aabb<T> {
        Aabb::from_points(&self.vertices)
    }

    /// Undirected edges with their incident faces, sorted by key.
    pub fn edge_faces(&self) -> Vec<(u32, u32, Vec<u32>)> {
        let mut map: HashMap<u64, Vec<u32>> = HashMap::new();
        for (f, face) in self.faces.iter().enumerate() {
            for k in 0..3 {
                map.entry(edge_key(face[k], face[(k + 1) % 3]))
                    .or_default()
                    .push(f as u32);
            }
        }
        let mut out: Vec<_> = map
            .into_iter()
            .map(|(k, fs)| {
                let (a, b) = unpack_edge(k);
                (a, b, fs)
            })
            .collect();
        out.sort_unstable_by_key(|e| (e.0, e.1));
        out
    }

    pub fn edges(&self) -> Vec<(u32, u32)> {
        self.edge_faces().into_iter().map(|(a, b, _)| (a, b)).collect()
    }

    pub fn mean_edge_length(&self) -> T {
        let edges = self.edges();
        if edges.is_empty() {
            return T::zero();
        }
        let total: T = edges
            .iter()
            .map(|&(a, b)| (self.vertices[a as usize] - self.vertices[b as usize]).norm())
            .sum();
        total / T::from_usize_(edges.len())
    }

    /// Drops vertices no face references, remapping indices. Uvs are kept as is.
    pub fn remove_unreferenced(&mut self) {
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut verts = Vec::new();
        for face in &mut self.faces {
            for v in face.iter_mut() {
                let r = &mut remap[*v as usize];
                if *r == u32::MAX {
                    *r = verts.len() as u32;
                    verts.push(self.vertices[*v as usize]);
                }
                *v = *r;
            }
        }
        self.vertices = verts;
    }

    pub fn translate(&mut self, d: Vec3<T>) {
        for v in &mut self.vertices {
            *v += d;
        }
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.vertices {
            *v = *v * s;
        }
    }

    /// Recenters on the bounding-box center and scales the farthest vertex to `radius`.
    pub fn normalize_to_ball(&mut self, radius: T) {
        if self.vertices.is_empty() {
            return;
        }
        let c = self.bounds().center();
        self.translate(-c);
        let r = self
            .vertices
            .iter()
            .map(|v| v.norm())
            .fold(T::zero(), T::max);
        if r > T::zero() {
            self.scale(radius / r);
        }
    }

    pub fn cast<U: Real>(&self) -> TriangleMesh<U> {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| v.cast()).collect(),
            faces: self.faces.clone(),
            uv: self.uv.as_ref().map(|uv| UvLayer {
                coords: uv
                    .coords
                    .iter()
                    .map(|c| [U::lit(c[0].as_f64()), U::lit(c[1].as_f64())])
                    .collect(),
                faces: uv.faces.clone(),
            }),
        }
    }

    pub fn check_manifold(&self) -> ManifoldReport {
        check_manifold(self.vertices.len(), &self.faces)
    }
}

/// Outcome of the watertight / 2-manifold check.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ManifoldReport {
    pub out_of_range: usize,
    pub repeated_vertex_faces: usize,
    /// Edges with a single incident face.
    pub boundary_edges: usize,
    /// Edges with more than two incident faces.
    pub nonmanifold_edges: usize,
    /// Edges whose two faces traverse them in the same direction.
    pub misoriented_edges: usize,
    /// Vertices whose incident faces do not form one closed fan.
    pub nonmanifold_vertices: usize,
}

impl ManifoldReport {
    pub fn is_watertight_manifold(&self) -> bool {
        *self == ManifoldReport::default()
    }

    pub fn violations(&self) -> usize {
        self.out_of_range
            + self.repeated_vertex_faces
            + self.boundary_edges
            + self.nonmanifold_edges
            + self.misoriented_edges
            + self.nonmanifold_vertices
    }
}

pub fn check_manifold(vertex_count: usize, faces: &[[u32; 3]]) -> ManifoldReport {
    let mut rep = ManifoldReport::default();
    let mut directed: HashMap<(u32, u32), u32> = HashMap::with_capacity(faces.len() * 3);
    let mut undirected: HashMap<u64, u32> = HashMap::with_capacity(faces.len() * 3 / 2);
    let mut valid = Vec::with_capacity(faces.len());
    for face in faces {
        if face.iter().any(|&v| v as usize >= vertex_count) {
            rep.out_of_range += 1;
            continue;
        }
        if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
            rep.repeated_vertex_faces += 1;
            continue;
        }
        valid.push(*face);
        for k in 0..3 {
            let (a, b) = (face[k], face[(k + 1) % 3]);
            *directed.entry((a, b)).or_default() += 1;
            *undirected.entry(edge_key(a, b)).or_default() += 1;
        }
    }
    for (&k, &n) in &undirected {
        match n {
            1 => rep.boundary_edges += 1,
            2 => {
                let (a, b) = unpack_edge(k);
                if directed.get(&(a, b)).copied().unwrap_or(0) != 1 {
                    rep.misoriented_edges += 1;
                }
            }
            _ => rep.nonmanifold_edges += 1,
        }
    }
    // Each vertex's fan: follow "next" pointers (a -> b for corner at v) and
    // require a single cycle covering all incident faces.
    let mut fans: Vec<Vec<(u32, u32)>> = vec![Vec::new(); vertex_count];
    for face in &valid {
        for k in 0..3 {
            let v = face[k];
            fans[v as usize].push((face[(k + 1) % 3], face[(k + 2) % 3]));
        }
    }
    for fan in &fans {
        if fan.is_empty() {
            continue;
        }
        let next: HashMap<u32, u32> = fan.iter().copied().collect();
        if next.len() != fan.len() {
            rep.nonmanifold_vertices += 1;
            continue;
        }
        let start = fan[0].0;
        let mut cur = start;
        let mut steps = 0;
        loop {
            match next.get(&cur) {
                Some(&n) => {
                    cur = n;
                    steps += 1;
                }
                None => break,
            }
            if cur == start || steps > fan.len() {
                break;
            }
        }
        if cur != start || steps != fan.len() {
            rep.nonmanifold_vertices += 1;
        }
    }
    rep
}
