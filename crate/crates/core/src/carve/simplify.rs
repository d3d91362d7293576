use std::cmp::Ordering;
use std::collections::BinaryHeap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{vec3, Mat3, Vec3};
use crate::mesh::TriangleMesh;
use crate::real::Real;
use crate::topology::EditMesh;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplifyOptions {
    pub target_faces: usize,
    /// Collapses whose quadric distance exceeds this are skipped.
    pub max_error: Option<f64>,
}

impl Default for SimplifyOptions {
    fn default() -> Self {
        Self {
            target_faces: super::DEFAULT_TARGET_FACES,
            max_error: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplifyReport {
    pub collapses: usize,
    pub faces: usize,
    /// Set when the target could not be met without breaking manifoldness or the error cap.
    pub target_missed: bool,
}

/// Symmetric 4x4 plane quadric stored as its upper triangle.
#[derive(Debug, Clone, Copy, Default)]
struct Quadric([f64; 10]);

impl Quadric {
    fn plane(n: [f64; 3], d: f64, w: f64) -> Self {
        let [a, b, c] = n;
        Quadric([
            w * a * a,
            w * a * b,
            w * a * c,
            w * a * d,
            w * b * b,
            w * b * c,
            w * b * d,
            w * c * c,
            w * c * d,
            w * d * d,
        ])
    }

    fn add(&self, o: &Self) -> Self {
        let mut q = *self;
        for (x, y) in q.0.iter_mut().zip(o.0) {
            *x += y;
        }
        q
    }

    fn eval(&self, p: [f64; 3]) -> f64 {
        let q = &self.0;
        let [x, y, z] = p;
        q[0] * x * x + 2.0 * q[1] * x * y + 2.0 * q[2] * x * z + 2.0 * q[3] * x
            + q[4] * y * y
            + 2.0 * q[5] * y * z
            + 2.0 * q[6] * y
            + q[7] * z * z
            + 2.0 * q[8] * z
            + q[9]
    }

    fn minimizer(&self) -> Option<[f64; 3]> {
        let q = &self.0;
        let m = Mat3::from_rows(
            vec3(q[0], q[1], q[2]),
            vec3(q[1], q[4], q[5]),
            vec3(q[2], q[5], q[7]),
        );
        let scale = q[0].abs() + q[4].abs() + q[7].abs();
        m.solve(vec3(-q[3], -q[6], -q[8]), 1e-10 * scale * scale * scale)
            .map(|v| v.to_array())
    }
}

#[derive(Debug, PartialEq)]
struct Candidate {
    cost: f64,
    a: u32,
    b: u32,
    stamp: (u32, u32),
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, o: &Self) -> Ordering {
        // min-heap on cost, then on vertex ids for determinism
        o.cost
            .total_cmp(&self.cost)
            .then_with(|| (o.a, o.b).cmp(&(self.a, self.b)))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

fn best_position(q: &Quadric, pa: [f64; 3], pb: [f64; 3]) -> ([f64; 3], f64) {
    let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1]), 0.5 * (pa[2] + pb[2])];
    let mut best = (mid, q.eval(mid));
    let mut consider = |p: [f64; 3]| {
        let c = q.eval(p);
        if c < best.1 {
            best = (p, c);
        }
    };
    consider(pa);
    consider(pb);
    if let Some(p) = q.minimizer() {
        // keep the optimum near the edge so thin features do not shoot off
        let len2: f64 = (0..3).map(|i| (pa[i] - pb[i]).powi(2)).sum();
        let off2: f64 = (0..3).map(|i| (p[i] - mid[i]).powi(2)).sum();
        if off2 <= 4.0 * len2 {
            consider(p);
        }
    }
    (best.0, best.1.max(0.0))
}

/// Quadric-error edge collapse down to `target_faces`.
pub fn simplify<T: Real>(
    mesh: &TriangleMesh<T>,
    opts: &SimplifyOptions,
) -> Result<(TriangleMesh<T>, SimplifyReport)> {
    if opts.target_faces < 4 {
        return Err(Error::arg("target face count must be at least 4"));
    }
    if mesh.faces.len() <= opts.target_faces {
        return Ok((
            mesh.clone(),
            SimplifyReport {
                collapses: 0,
                faces: mesh.faces.len(),
                target_missed: false,
            },
        ));
    }
    let mut em = EditMesh::from_mesh(mesh);
    let to64 = |p: Vec3<T>| p.to_f64();
    let mut quadrics = vec![Quadric::default(); em.pos.len()];
    for (f, face) in mesh.faces.iter().enumerate() {
        let cr = mesh.face_cross(f).to_f64();
        let len = (cr[0] * cr[0] + cr[1] * cr[1] + cr[2] * cr[2]).sqrt();
        if len == 0.0 {
            continue;
        }
        let n = [cr[0] / len, cr[1] / len, cr[2] / len];
        let p = mesh.vertices[face[0] as usize].to_f64();
        let d = -(n[0] * p[0] + n[1] * p[1] + n[2] * p[2]);
        let q = Quadric::plane(n, d, 0.5 * len);
        for &v in face {
            quadrics[v as usize] = quadrics[v as usize].add(&q);
        }
    }
    let mut version = vec![0u32; em.pos.len()];
    let mut heap = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<Candidate>, em: &EditMesh<T>, quadrics: &[Quadric], version: &[u32], a: u32, b: u32| {
        let q = quadrics[a as usize].add(&quadrics[b as usize]);
        let (_, cost) = best_position(&q, to64(em.pos[a as usize]), to64(em.pos[b as usize]));
        heap.push(Candidate {
            cost,
            a,
            b,
            stamp: (version[a as usize], version[b as usize]),
        });
    };
    for (a, b) in em.edges() {
        push(&mut heap, &em, &quadrics, &version, a, b);
    }
    let cap = opts.max_error.map(|e| e * e);
    let mut collapses = 0;
    while em.live_faces > opts.target_faces {
        let Some(c) = heap.pop() else { break };
        let (a, b) = (c.a, c.b);
        if !em.vert_alive[a as usize]
            || !em.vert_alive[b as usize]
            || c.stamp != (version[a as usize], version[b as usize])
        {
            continue;
        }
        if cap.is_some_and(|cap| c.cost > cap) {
            break;
        }
        if em.collapse_allowed(a, b).is_none() {
            continue;
        }
        let q = quadrics[a as usize].add(&quadrics[b as usize]);
        let (p, _) = best_position(&q, to64(em.pos[a as usize]), to64(em.pos[b as usize]));
        let p = Vec3::<T>::from_f64(p);
        if em.collapse_folds(a, b, p) {
            continue;
        }
        em.collapse(a, b, p);
        quadrics[a as usize] = q;
        version[a as usize] += 1;
        collapses += 1;
        for w in em.neighbors(a) {
            let (x, y) = if a < w { (a, w) } else { (w, a) };
            push(&mut heap, &em, &quadrics, &version, x, y);
        }
    }
    let out = em.to_mesh();
    let report = SimplifyReport {
        collapses,
        faces: out.faces.len(),
        target_missed: out.faces.len() > opts.target_faces,
    };
    if report.target_missed {
        warn!(
            "simplification stopped at {} faces, above the target of {}",
            report.faces, opts.target_faces
        );
    }
    Ok((out, report))
}
