use crate::geom::Vec3;
use crate::mesh::TriangleMesh;
use crate::real::Real;
use crate::topology::EditMesh;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RemeshStats {
    pub splits: usize,
    pub collapses: usize,
    pub flips: usize,
}

const RELAX: f64 = 0.5;
/// Flips never cross creases sharper than this (cosine of the dihedral).
const FLIP_MIN_COS: f64 = 0.8;

/// One isotropic remeshing pass toward `target` edge length: split, collapse, flip, relax.
pub fn remesh<T: Real>(mesh: &TriangleMesh<T>, target: T) -> (TriangleMesh<T>, RemeshStats) {
    let (m, stats, _) = remesh_carrying(mesh, target, &vec![(); mesh.vertices.len()], |_, _| ());
    (m, stats)
}

/// [`remesh`] that also carries one attribute per vertex. New vertices take `mix` of the
/// edge endpoints' attributes.
pub fn remesh_carrying<T: Real, A: Clone>(
    mesh: &TriangleMesh<T>,
    target: T,
    attrs: &[A],
    mix: impl Fn(&A, &A) -> A,
) -> (TriangleMesh<T>, RemeshStats, Vec<A>) {
    assert_eq!(attrs.len(), mesh.vertices.len(), "one attribute per vertex");
    let mut stats = RemeshStats::default();
    if mesh.faces.is_empty() || !(target > T::zero()) {
        return (mesh.clone(), stats, attrs.to_vec());
    }
    let mut attrs = attrs.to_vec();
    let hi = target * T::lit(4.0 / 3.0);
    let lo = target * T::lit(4.0 / 5.0);
    let (hi2, lo2) = (hi * hi, lo * lo);
    let mut em = EditMesh::from_mesh(mesh);
    let len2 = |em: &EditMesh<T>, a: u32, b: u32| (em.pos[a as usize] - em.pos[b as usize]).norm2();

    // longest first so splits stay balanced
    let mut long: Vec<(T, u32, u32)> = em
        .edges()
        .into_iter()
        .map(|(a, b)| (len2(&em, a, b), a, b))
        .filter(|e| e.0 > hi2)
        .collect();
    long.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then((x.1, x.2).cmp(&(y.1, y.2))));
    for (_, a, b) in long {
        if let Some(m) = em.split(a, b) {
            debug_assert_eq!(m as usize, attrs.len());
            attrs.push(mix(&attrs[a as usize], &attrs[b as usize]));
            stats.splits += 1;
        }
    }

    let mut short: Vec<(T, u32, u32)> = em
        .edges()
        .into_iter()
        .map(|(a, b)| (len2(&em, a, b), a, b))
        .filter(|e| e.0 < lo2)
        .collect();
    short.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then((x.1, x.2).cmp(&(y.1, y.2))));
    for (_, a, b) in short {
        if !em.vert_alive[a as usize] || !em.vert_alive[b as usize] {
            continue;
        }
        // the edge may have changed or disappeared since the list was built
        if len2(&em, a, b) >= lo2 || em.collapse_allowed(a, b).is_none() {
            continue;
        }
        let p = (em.pos[a as usize] + em.pos[b as usize]) * T::lit(0.5);
        let too_long = em
            .neighbors(a)
            .into_iter()
            .chain(em.neighbors(b))
            .any(|w| w != a && w != b && (em.pos[w as usize] - p).norm2() > hi2);
        if too_long || em.collapse_folds(a, b, p) {
            continue;
        }
        em.collapse(a, b, p);
        attrs[a as usize] = mix(&attrs[a as usize], &attrs[b as usize]);
        stats.collapses += 1;
    }

    let dev = |v: usize| {
        let d = v as i64 - 6;
        d * d
    };
    let min_cos = T::lit(FLIP_MIN_COS);
    for (a, b) in em.edges() {
        let Some(info) = em.flip_allowed(a, b) else { continue };
        let (f1, f2, c, d) = info;
        let (n1, n2) = (em.face_cross(f1).normalized(), em.face_cross(f2).normalized());
        if n1.dot(n2) < min_cos {
            continue;
        }
        let (va, vb, vc, vd) = (em.valence(a), em.valence(b), em.valence(c), em.valence(d));
        let before = dev(va) + dev(vb) + dev(vc) + dev(vd);
        let after = dev(va - 1) + dev(vb - 1) + dev(vc + 1) + dev(vd + 1);
        if after < before {
            em.flip(a, b, info);
            stats.flips += 1;
        }
    }

    let lambda = T::lit(RELAX);
    let moved: Vec<Option<Vec3<T>>> = (0..em.pos.len())
        .map(|v| {
            if !em.vert_alive[v] || em.vfaces[v].is_empty() {
                return None;
            }
            let ring = em.neighbors(v as u32);
            let mut c = Vec3::zero();
            for &w in &ring {
                c += em.pos[w as usize];
            }
            let c = c / T::from_usize_(ring.len());
            let n = em.vertex_normal(v as u32);
            let d = c - em.pos[v];
            Some(em.pos[v] + (d - n * n.dot(d)) * lambda)
        })
        .collect();
    for (p, m) in em.pos.iter_mut().zip(moved) {
        if let Some(m) = m {
            *p = m;
        }
    }
    let (out, source) = em.to_mesh_with_map();
    let attrs = source.iter().map(|&v| attrs[v as usize].clone()).collect();
    (out, stats, attrs)
}
