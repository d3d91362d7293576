use crate::geom::Vec3;
use crate::mesh::TriangleMesh;
use crate::real::Real;

use super::ScalarField;

// Cube corner `c` sits at offset (c & 1, c >> 1 & 1, c >> 2 & 1).
// Face corner loops are counter-clockwise seen from outside the cube.
const FACES: [[usize; 4]; 6] = [
    [0, 4, 6, 2],
    [1, 3, 7, 5],
    [0, 1, 5, 4],
    [2, 6, 7, 3],
    [0, 2, 3, 1],
    [4, 5, 7, 6],
];

/// Local edge slot for the cube edge between corners `a` and `b`: 4 * axis + lower-corner rank.
fn edge_slot(a: usize, b: usize) -> usize {
    let lo = a.min(b);
    let axis = (a ^ b).trailing_zeros() as usize;
    let others: usize = match axis {
        0 => (lo >> 1) & 3,
        1 => (lo & 1) | ((lo >> 2) & 1) << 1,
        _ => lo & 3,
    };
    4 * axis + others
}

fn slot_lower_corner(slot: usize) -> usize {
    let (axis, r) = (slot / 4, slot % 4);
    match axis {
        0 => r << 1,
        1 => (r & 1) | (r >> 1) << 2,
        _ => r,
    }
}

/// Extracts the `iso` level set of a lattice field.
///
/// Samples strictly above `iso` count as inside; face normals point out of
/// that region. Ambiguous faces always separate inside corners, so adjacent
/// cells agree and the output is a closed 2-manifold away from the lattice
/// boundary.
pub fn marching_cubes<T: Real>(field: &ScalarField<T>, iso: T) -> TriangleMesh<T> {
    let n = field.resolution;
    let mut mesh = TriangleMesh::default();
    if n < 2 {
        return mesh;
    }
    let mut edge_vertex = vec![u32::MAX; 3 * n * n * n];
    let lo_t = T::lit(0.01);
    let hi_t = T::lit(0.99);
    let point = |i: usize, j: usize, k: usize| field.point(i, j, k);

    for k in 0..n - 1 {
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let mut vals = [T::zero(); 8];
                let mut mask = 0u8;
                for (c, v) in vals.iter_mut().enumerate() {
                    *v = field.get(i + (c & 1), j + (c >> 1 & 1), k + (c >> 2 & 1));
                    if *v > iso {
                        mask |= 1 << c;
                    }
                }
                if mask == 0 || mask == 255 {
                    continue;
                }
                let inside = |c: usize| mask >> c & 1 == 1;

                // Directed contour segments on each face, from the crossing where the
                // loop enters the inside region to the one where it leaves.
                let mut next = [usize::MAX; 12];
                for face in FACES {
                    let mut crossings = [(0usize, false); 4];
                    let mut count = 0;
                    for e in 0..4 {
                        let (a, b) = (face[e], face[(e + 1) % 4]);
                        if inside(a) != inside(b) {
                            crossings[count] = (edge_slot(a, b), inside(b));
                            count += 1;
                        }
                    }
                    let start = (0..count).find(|&s| crossings[s].1).unwrap_or(0);
                    let mut s = 0;
                    while s < count {
                        let enter = crossings[(start + s) % count];
                        let exit = crossings[(start + s + 1) % count];
                        next[enter.0] = exit.0;
                        s += 2;
                    }
                }

                let mut seen = [false; 12];
                for first in 0..12 {
                    if next[first] == usize::MAX || seen[first] {
                        continue;
                    }
                    let mut cycle: Vec<u32> = Vec::with_capacity(6);
                    let mut e = first;
                    while !seen[e] {
                        seen[e] = true;
                        let lc = slot_lower_corner(e);
                        let axis = e / 4;
                        let (gi, gj, gk) = (i + (lc & 1), j + (lc >> 1 & 1), k + (lc >> 2 & 1));
                        let gid = 3 * (gi + n * (gj + n * gk)) + axis;
                        if edge_vertex[gid] == u32::MAX {
                            let hc = lc | 1 << axis;
                            let (va, vb) = (vals[lc], vals[hc]);
                            let t = ((iso - va) / (vb - va)).max(lo_t).min(hi_t);
                            let p0 = point(gi, gj, gk);
                            let mut p1 = p0;
                            p1[axis] += field.spacing;
                            edge_vertex[gid] = mesh.vertices.len() as u32;
                            mesh.vertices.push(p0.lerp(p1, t));
                        }
                        cycle.push(edge_vertex[gid]);
                        e = next[e];
                    }
                    triangulate(&mut mesh, &cycle);
                }
            }
        }
    }
    mesh
}

fn triangulate<T: Real>(mesh: &mut TriangleMesh<T>, cycle: &[u32]) {
    let p = |v: u32| mesh.vertices[v as usize];
    match cycle.len() {
        3 => mesh.faces.push([cycle[0], cycle[1], cycle[2]]),
        4 => {
            let [a, b, c, d] = [cycle[0], cycle[1], cycle[2], cycle[3]];
            if (p(a) - p(c)).norm2() <= (p(b) - p(d)).norm2() {
                mesh.faces.push([a, b, c]);
                mesh.faces.push([a, c, d]);
            } else {
                mesh.faces.push([b, c, d]);
                mesh.faces.push([b, d, a]);
            }
        }
        m => {
            let mut centroid = Vec3::zero();
            for &v in cycle {
                centroid += p(v);
            }
            let centroid = centroid / T::from_usize_(m);
            let center = mesh.vertices.len() as u32;
            mesh.vertices.push(centroid);
            for s in 0..m {
                mesh.faces.push([cycle[s], cycle[(s + 1) % m], center]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carve::{occupancy_to_field, OccupancyGrid};
    use proptest::prelude::*;

    fn sphere_field(n: usize) -> ScalarField<f64> {
        ScalarField::sample_cube(n, 1.0, |p| 0.5 - p.norm())
    }

    #[test]
    fn edge_slots_are_a_bijection() {
        let mut seen = [false; 12];
        for a in 0..8usize {
            for bit in 0..3 {
                let b = a ^ (1 << bit);
                if a < b {
                    let s = edge_slot(a, b);
                    assert!(!seen[s]);
                    seen[s] = true;
                    assert_eq!(slot_lower_corner(s), a);
                }
            }
        }
    }

    #[test]
    fn sphere_is_closed_outward_and_close_in_area() {
        let m = marching_cubes(&sphere_field(64), 0.0);
        assert!(m.check_manifold().is_watertight_manifold());
        let area = m.area();
        let exact = 4.0 * std::f64::consts::PI * 0.25;
        assert!((area - exact).abs() / exact < 0.05, "area {area}");
        assert!(m.signed_volume() > 0.0);
        let v = m.vertices.len() as i64;
        let e = m.edges().len() as i64;
        assert_eq!(v - e + m.faces.len() as i64, 2);
        for f in 0..m.faces.len() {
            assert!(m.face_area(f) > 1e-12);
        }
        // inverted field flips orientation only
        let flipped = marching_cubes(&ScalarField::sample_cube(64, 1.0, |p| p.norm() - 0.5), 0.0);
        assert!((flipped.area() - exact).abs() / exact < 0.05);
        assert!(flipped.signed_volume() < 0.0);
    }

    #[test]
    fn constant_field_is_empty() {
        let f = ScalarField::sample_cube(8, 1.0, |_| 0.3);
        assert!(marching_cubes(&f, 0.3).is_empty());
        assert!(marching_cubes(&f, 0.0).is_empty());
    }

    #[test]
    fn smoothed_occupancy_sphere_stays_near_surface() {
        let n = 64;
        let mut g: OccupancyGrid<f64> = OccupancyGrid::unit_cube(n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    if g.voxel_center(i, j, k).norm() <= 0.5 {
                        g.set(i, j, k, true);
                    }
                }
            }
        }
        let field = occupancy_to_field(&g, 1.0).unwrap().padded(1, 0.0);
        let m = marching_cubes(&field, 0.5);
        assert!(m.check_manifold().is_watertight_manifold());
        let diag = 3f64.sqrt() * 2.0 / n as f64;
        for v in &m.vertices {
            assert!((v.norm() - 0.5).abs() <= 1.5 * diag);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn random_fields_give_closed_manifolds(vals in proptest::collection::vec(-1.0f64..1.0, 216)) {
            // 6^3 random interior with a negative border so the surface closes
            let mut f = ScalarField::sample_cube(8, 1.0, |_| -1.0);
            for k in 0..6 {
                for j in 0..6 {
                    for i in 0..6 {
                        f.data[(i + 1) + 8 * ((j + 1) + 8 * (k + 1))] = vals[i + 6 * (j + 6 * k)];
                    }
                }
            }
            let m = marching_cubes(&f, 0.0);
            let r = m.check_manifold();
            prop_assert!(r.is_watertight_manifold(), "{:?}", r);
            for face in 0..m.faces.len() {
                prop_assert!(m.face_area(face) > 1e-12);
            }
        }
    }
}
