//! Procedural meshes used by tests, examples and the benchmark suite.

use std::collections::HashMap;

use crate::geom::{vec3, Vec3};
use crate::mesh::{edge_key, TriangleMesh};
use crate::real::Real;

fn quads_to_tris(quads: &[[u32; 4]]) -> Vec<[u32; 3]> {
    quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect()
}

/// Axis-aligned cube `[0,1]^3`; vertex `i` sits at `(i&1, (i>>1)&1, (i>>2)&1)`.
pub fn unit_cube<T: Real>() -> TriangleMesh<T> {
    let vertices = (0..8)
        .map(|i| {
            Vec3::from_f64([(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64])
        })
        .collect();
    let quads = [
        [0, 4, 6, 2],
        [1, 3, 7, 5],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 2, 3, 1],
        [4, 5, 7, 6],
    ];
    TriangleMesh::new(vertices, quads_to_tris(&quads))
}

/// Orients every face of a star-shaped mesh around the origin outward.
fn orient_outward<T: Real>(m: &mut TriangleMesh<T>) {
    for f in 0..m.faces.len() {
        let [a, b, c] = m.tri(f);
        if (b - a).cross(c - a).dot(a + b + c) < T::zero() {
            m.faces[f].swap(1, 2);
        }
    }
}

pub fn icosahedron<T: Real>(radius: T) -> TriangleMesh<T> {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, p, 0.0],
        [1.0, p, 0.0],
        [-1.0, -p, 0.0],
        [1.0, -p, 0.0],
        [0.0, -1.0, p],
        [0.0, 1.0, p],
        [0.0, -1.0, -p],
        [0.0, 1.0, -p],
        [p, 0.0, -1.0],
        [p, 0.0, 1.0],
        [-p, 0.0, -1.0],
        [-p, 0.0, 1.0],
    ];
    let vertices = raw
        .iter()
        .map(|v| Vec3::from_f64(*v).normalized() * radius)
        .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let mut m = TriangleMesh::new(vertices, faces);
    orient_outward(&mut m);
    m
}

/// Loop-style midpoint subdivision of an icosahedron, projected onto the sphere.
pub fn icosphere<T: Real>(radius: T, subdivisions: usize) -> TriangleMesh<T> {
    let mut m = icosahedron(T::one());
    for _ in 0..subdivisions {
        let mut mid: HashMap<u64, u32> = HashMap::new();
        let mut faces = Vec::with_capacity(m.faces.len() * 4);
        let mut verts = m.vertices.clone();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vec3<T>>| -> u32 {
            *mid.entry(edge_key(a, b)).or_insert_with(|| {
                let p = (verts[a as usize] + verts[b as usize]).normalized();
                verts.push(p);
                (verts.len() - 1) as u32
            })
        };
        for &[a, b, c] in &m.faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            faces.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        m = TriangleMesh::new(verts, faces);
    }
    m.scale(radius);
    m
}

/// Regular octahedron inscribed in the sphere of the given radius.
pub fn octahedron<T: Real>(radius: T) -> TriangleMesh<T> {
    let r = radius;
    let z = T::zero();
    let vertices = vec![
        vec3(r, z, z),
        vec3(-r, z, z),
        vec3(z, r, z),
        vec3(z, -r, z),
        vec3(z, z, r),
        vec3(z, z, -r),
    ];
    let faces = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    let mut m = TriangleMesh::new(vertices, faces);
    orient_outward(&mut m);
    m
}

/// Torus around the Y axis, `major`/`minor` radii, `nu x nv` quads.
pub fn torus<T: Real>(major: T, minor: T, nu: usize, nv: usize) -> TriangleMesh<T> {
    let mut vertices = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = T::TAU() * T::from_usize_(i) / T::from_usize_(nu);
        for j in 0..nv {
            let v = T::TAU() * T::from_usize_(j) / T::from_usize_(nv);
            let r = major + minor * v.cos();
            vertices.push(vec3(r * u.cos(), minor * v.sin(), r * u.sin()));
        }
    }
    let idx = |i: usize, j: usize| ((i % nu) * nv + (j % nv)) as u32;
    let mut quads = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            quads.push([idx(i, j), idx(i, j + 1), idx(i + 1, j + 1), idx(i + 1, j)]);
        }
    }
    let mut m = TriangleMesh::new(vertices, quads_to_tris(&quads));
    if m.signed_volume() < T::zero() {
        for f in &mut m.faces {
            f.swap(1, 2);
        }
    }
    m
}

/// Two triangles covering the square `[-h,h]^2` in the plane `z = z0`, facing +Z,
/// with uvs spanning `[0,1]^2` (v up).
pub fn uv_quad<T: Real>(h: T, z0: T) -> TriangleMesh<T> {
    let vertices = vec![vec3(-h, -h, z0), vec3(h, -h, z0), vec3(h, h, z0), vec3(-h, h, z0)];
    let faces = vec![[0, 1, 2], [0, 2, 3]];
    let mut m = TriangleMesh::new(vertices, faces.clone());
    let (z, o) = (T::zero(), T::one());
    m.uv = Some(crate::mesh::UvLayer {
        coords: vec![[z, z], [o, z], [o, o], [z, o]],
        faces,
    });
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitives_are_watertight_and_outward() {
        let meshes: Vec<TriangleMesh<f64>> = vec![
            unit_cube(),
            icosahedron(1.0),
            icosphere(1.0, 3),
            octahedron(1.0),
            torus(0.6, 0.25, 24, 12),
        ];
        for m in meshes {
            assert!(m.check_manifold().is_watertight_manifold());
            assert!(m.signed_volume() > 0.0);
        }
    }

    #[test]
    fn icosphere_area_approaches_sphere() {
        let m: TriangleMesh<f64> = icosphere(0.5, 4);
        let exact = std::f64::consts::PI;
        assert!((m.area() - exact).abs() / exact < 0.01);
        assert_eq!(m.faces.len(), 20 * 256);
    }
}
