//! Surface sampling, Chamfer distance, normal consistency and the fast-meshing benchmark.

mod bench;
pub mod suite;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bvh::Bvh;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::TriangleMesh;
use crate::real::Real;

pub use bench::{run_benchmark, synth_views, BenchCell, BenchConfig, BenchReport, BenchRun, BENCH_HEADER};

pub const DEFAULT_SAMPLES: usize = 100_000;
pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSamples<T> {
    pub points: Vec<Vec3<T>>,
    /// Unit normal of the face each point came from.
    pub normals: Vec<Vec3<T>>,
    pub faces: Vec<u32>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    pub samples: usize,
    pub seed: u64,
    /// Average squared instead of absolute distances in the Chamfer term.
    pub squared: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
            squared: false,
        }
    }
}

/// Area-weighted uniform samples; deterministic for a given seed.
pub fn sample_surface<T: Real>(mesh: &TriangleMesh<T>, n: usize, seed: u64) -> Result<SurfaceSamples<T>> {
    if n == 0 {
        return Err(Error::arg("sample count must be at least 1"));
    }
    let mut cdf = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0f64;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f).as_f64();
        cdf.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::arg("cannot sample a mesh with zero surface area"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SurfaceSamples {
        points: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
        faces: Vec::with_capacity(n),
        seed,
    };
    for _ in 0..n {
        let r = rng.gen::<f64>() * total;
        let f = cdf.partition_point(|&c| c <= r).min(cdf.len() - 1);
        let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
        let s = r1.sqrt();
        let (wa, wb, wc) = (T::lit(1.0 - s), T::lit(s * (1.0 - r2)), T::lit(s * r2));
        let [a, b, c] = mesh.tri(f);
        out.points.push(a * wa + b * wb + c * wc);
        out.normals.push(mesh.face_normal(f));
        out.faces.push(f as u32);
    }
    Ok(out)
}

fn one_sided<T: Real>(from: &SurfaceSamples<T>, to: &Bvh<T>, to_mesh: &TriangleMesh<T>) -> (f64, f64, f64) {
    let per: Vec<(f64, f64)> = from
        .points
        .par_iter()
        .zip(from.normals.par_iter())
        .map(|(p, n)| {
            let hit = to.nearest(*p).expect("non-empty target");
            // nearest points on edges and vertices are shared; take the best-aligned face
            let tol = T::lit(1e-12) + hit.dist2 * T::lit(1e-9);
            let cos = to
                .nearest_ties(*p, tol)
                .into_iter()
                .map(|f| n.dot(to_mesh.face_normal(f as usize)).abs().as_f64())
                .fold(0.0, f64::max);
            (hit.dist2.as_f64(), cos)
        })
        .collect();
    let k = per.len() as f64;
    let dist = per.iter().map(|d| d.0.sqrt()).sum::<f64>() / k;
    let sq = per.iter().map(|d| d.0).sum::<f64>() / k;
    let nc = per.iter().map(|d| d.1).sum::<f64>() / k;
    (dist, sq, nc)
}

/// Both symmetric metrics from one set of samples per side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeshComparison {
    pub chamfer: f64,
    pub normal_consistency: f64,
}

pub fn compare_meshes<T: Real>(
    a: &TriangleMesh<T>,
    b: &TriangleMesh<T>,
    opts: &MetricOptions,
) -> Result<MeshComparison> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::arg("metrics need two non-empty meshes"));
    }
    let sa = sample_surface(a, opts.samples, opts.seed)?;
    let sb = sample_surface(b, opts.samples, opts.seed)?;
    let (ba, bb) = (Bvh::new(a), Bvh::new(b));
    let ab = one_sided(&sa, &bb, b);
    let ba_ = one_sided(&sb, &ba, a);
    let chamfer = if opts.squared {
        (ab.1 + ba_.1) / 2.0
    } else {
        (ab.0 + ba_.0) / 2.0
    };
    Ok(MeshComparison {
        chamfer,
        normal_consistency: (ab.2 + ba_.2) / 2.0,
    })
}

/// Symmetric mean point-to-surface distance with `n` samples per side.
pub fn chamfer<T: Real>(a: &TriangleMesh<T>, b: &TriangleMesh<T>, n: usize) -> Result<f64> {
    let opts = MetricOptions {
        samples: n,
        ..MetricOptions::default()
    };
    Ok(compare_meshes(a, b, &opts)?.chamfer)
}

/// Symmetric mean `|n_sample . n_nearest|` with `n` samples per side.
/// Where several faces share the nearest point the best-aligned one counts.
pub fn normal_consistency<T: Real>(a: &TriangleMesh<T>, b: &TriangleMesh<T>, n: usize) -> Result<f64> {
    let opts = MetricOptions {
        samples: n,
        ..MetricOptions::default()
    };
    Ok(compare_meshes(a, b, &opts)?.normal_consistency)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{vec3, Mat3};
    use crate::shapes::{icosphere, torus};
    use proptest::prelude::*;

    fn square() -> TriangleMesh<f64> {
        TriangleMesh::new(
            vec![
                vec3(0.0, 0.0, 0.0),
                vec3(1.0, 0.0, 0.0),
                vec3(1.0, 1.0, 0.0),
                vec3(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
    }

    #[test]
    fn square_samples_split_evenly() {
        let n = 100_000;
        let s = sample_surface(&square(), n, 1).unwrap();
        let first = s.faces.iter().filter(|&&f| f == 0).count() as f64 / n as f64;
        // 50/50 within 2%; the binomial standard deviation here is 0.16%
        assert!((first - 0.5).abs() <= 0.01, "{first}");
    }

    #[test]
    fn samples_lie_on_their_faces() {
        let mut m: TriangleMesh<f64> = torus(0.6, 0.2, 20, 10);
        m.translate(vec3(0.3, -0.2, 0.1));
        let s = sample_surface(&m, 5000, 9).unwrap();
        for ((p, n), &f) in s.points.iter().zip(&s.normals).zip(&s.faces) {
            let [a, b, c] = m.tri(f as usize);
            assert!((*p - a).dot(*n).abs() <= 1e-9);
            // inside: all sub-triangle areas sum to the face area
            let area = |x: Vec3<f64>, y: Vec3<f64>, z: Vec3<f64>| (y - x).cross(z - x).norm();
            let sum = area(*p, b, c) + area(a, *p, c) + area(a, b, *p);
            assert!((sum - area(a, b, c)).abs() <= 1e-9 * (1.0 + sum));
            assert!((n.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let m: TriangleMesh<f64> = icosphere(1.0, 2);
        assert_eq!(sample_surface(&m, 100, 4).unwrap(), sample_surface(&m, 100, 4).unwrap());
        assert_ne!(
            sample_surface(&m, 100, 4).unwrap().points,
            sample_surface(&m, 100, 5).unwrap().points
        );
    }

    #[test]
    fn identical_meshes_score_perfectly() {
        let m: TriangleMesh<f64> = torus(0.6, 0.2, 24, 12);
        let c = compare_meshes(&m, &m, &MetricOptions { samples: 20_000, ..Default::default() }).unwrap();
        assert!(c.chamfer <= 1e-9, "{}", c.chamfer);
        assert!((c.normal_consistency - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn flipped_plane_is_still_consistent() {
        let a = square();
        let mut b = square();
        for f in &mut b.faces {
            f.swap(1, 2);
        }
        assert!((normal_consistency(&a, &b, 1000).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn concentric_spheres() {
        // Corresponding facets are parallel, so every sample sits 0.01 * h from the other
        // mesh, where h is its facet's distance from the origin.
        let a: TriangleMesh<f64> = icosphere(1.0, 4);
        let mut b = a.clone();
        b.scale(1.01);
        let mean_h: f64 = {
            let s = sample_surface(&a, 20_000, 3).unwrap();
            s.points.iter().zip(&s.normals).map(|(p, n)| p.dot(*n)).sum::<f64>() / 20_000.0
        };
        let c = chamfer(&a, &b, 20_000).unwrap();
        assert!((c - 0.01 * mean_h).abs() < 2e-5, "{c} vs {}", 0.01 * mean_h);
        assert!((c - 0.01).abs() < 1e-4);
    }

    #[test]
    fn squared_flag_switches_distance() {
        let a: TriangleMesh<f64> = icosphere(1.0, 3);
        let mut b = a.clone();
        b.scale(1.1);
        let opts = MetricOptions { samples: 5000, squared: true, ..Default::default() };
        let sq = compare_meshes(&a, &b, &opts).unwrap().chamfer;
        let abs = compare_meshes(&a, &b, &MetricOptions { squared: false, ..opts }).unwrap().chamfer;
        assert!((sq - abs * abs).abs() < 1e-4 * abs * abs + 1e-6, "{sq} {abs}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn metrics_are_rigid_invariant(ax in -3.0f64..3.0, ay in -3.0f64..3.0, tx in -2.0f64..2.0) {
            let a: TriangleMesh<f64> = torus(0.6, 0.2, 16, 8);
            let mut b: TriangleMesh<f64> = icosphere(0.7, 2);
            b.translate(vec3(0.05, 0.0, 0.1));
            let (cx, sx, cy, sy) = (ax.cos(), ax.sin(), ay.cos(), ay.sin());
            let rx = Mat3::from_rows(vec3(1.0, 0.0, 0.0), vec3(0.0, cx, -sx), vec3(0.0, sx, cx));
            let ry = Mat3::from_rows(vec3(cy, 0.0, sy), vec3(0.0, 1.0, 0.0), vec3(-sy, 0.0, cy));
            let mv = |m: &TriangleMesh<f64>| {
                let mut o = m.clone();
                for v in &mut o.vertices {
                    *v = ry.mul_vec(rx.mul_vec(*v)) + vec3(tx, -tx, 0.5);
                }
                o
            };
            let opts = MetricOptions { samples: 4000, ..Default::default() };
            let before = compare_meshes(&a, &b, &opts).unwrap();
            let after = compare_meshes(&mv(&a), &mv(&b), &opts).unwrap();
            prop_assert!((before.chamfer - after.chamfer).abs() <= 1e-6);
            prop_assert!((before.normal_consistency - after.normal_consistency).abs() <= 1e-6);
            let swapped = compare_meshes(&b, &a, &opts).unwrap();
            prop_assert_eq!(swapped, before);
            prop_assert!(before.chamfer > 0.0);
        }
    }
}
