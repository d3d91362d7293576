use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::textured::{bilinear_taps, sample};
use super::*;
use crate::imageio::RgbImage;
use crate::geom::vec3;
use crate::mesh::UvLayer;
use crate::shapes::{icosahedron, icosphere, torus, uv_quad};

fn cam(az: f64, el: f64, w: usize, h: usize) -> Camera<f64> {
    Camera::new(w, h, 60.0, az, el, crate::camera::default_distance(60.0)).unwrap()
}

/// Weighted sum of every output channel.
fn probe_loss(out: &RenderOutput<f64>, wn: &[Vec3<f64>], wa: &[f64]) -> f64 {
    let mut l = 0.0;
    for i in 0..wa.len() {
        l += out.normal_image.data[i].dot(wn[i]) + out.alpha.data[i] * wa[i];
    }
    l
}

fn perturbed(mesh: &TriangleMesh<f64>, dir: &[Vec3<f64>], h: f64) -> TriangleMesh<f64> {
    let mut m = mesh.clone();
    for (v, d) in m.vertices.iter_mut().zip(dir) {
        *v += *d * h;
    }
    m
}

/// Fraction of random directions whose analytic directional derivative matches central differences.
fn adjoint_pass_rate(mesh: &TriangleMesh<f64>, c: &Camera<f64>, seed: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = c.width * c.height;
    let wn: Vec<Vec3<f64>> = (0..n)
        .map(|_| vec3(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let wa: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let opts = RenderOptions::default();
    let out = render_with(mesh, c, &opts);
    let grads = PixelGrads {
        width: c.width,
        height: c.height,
        normal: wn.clone(),
        alpha: wa.clone(),
    };
    let g = render_backward(&out, mesh, c, &grads).unwrap();
    assert!(g.is_finite());
    let h = 1e-4;
    let mut ok = 0;
    let trials = 100;
    for _ in 0..trials {
        let dir: Vec<Vec3<f64>> = (0..mesh.vertices.len())
            .map(|_| vec3(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let lp = probe_loss(&render_with(&perturbed(mesh, &dir, h), c, &opts), &wn, &wa);
        let lm = probe_loss(&render_with(&perturbed(mesh, &dir, -h), c, &opts), &wn, &wa);
        let fd = (lp - lm) / (2.0 * h);
        let an: f64 = g.values.iter().zip(&dir).map(|(a, b)| a.dot(*b)).sum();
        let scale = fd.abs().max(an.abs());
        if scale < 1e-9 || (fd - an).abs() <= 1e-2 * scale {
            ok += 1;
        }
    }
    (ok, trials)
}

fn jittered(mut m: TriangleMesh<f64>, amount: f64, seed: u64) -> TriangleMesh<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in &mut m.vertices {
        *v += vec3(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * amount;
    }
    m
}

#[test]
fn facing_triangle_fills_frame() {
    let m = TriangleMesh::new(
        vec![vec3(-20.0, -20.0, 0.0), vec3(20.0, -20.0, 0.0), vec3(0.0, 20.0, 0.0)],
        vec![[0, 1, 2]],
    );
    let out = render(&m, &cam(0.0, 0.0, 32, 24));
    for (n, a) in out.normal_image.data.iter().zip(&out.alpha.data) {
        assert!((*n - vec3(0.0, 0.0, 1.0)).norm() < 1e-9);
        assert_eq!(*a, 1.0);
    }
    assert!(out.tri_id.iter().all(|&t| t == 0));
}

#[test]
fn back_facing_triangle_is_culled() {
    let m = TriangleMesh::new(
        vec![vec3(-20.0, -20.0, 0.0), vec3(0.0, 20.0, 0.0), vec3(20.0, -20.0, 0.0)],
        vec![[0, 1, 2]],
    );
    let out = render(&m, &cam(0.0, 0.0, 16, 16));
    assert!(out.alpha.data.iter().all(|&a| a == 0.0));
}

#[test]
fn empty_mesh_renders_background() {
    let m: TriangleMesh<f64> = TriangleMesh::default();
    let out = render(&m, &cam(30.0, 10.0, 16, 16));
    assert!(out.alpha.data.iter().all(|&a| a == 0.0));
    assert!(out.normal_image.data.iter().all(|n| *n == Vec3::zero()));
    assert!(out.tri_id.iter().all(|&t| t == NO_TRIANGLE));
}

#[test]
fn sphere_silhouette_radius_matches_projection() {
    let m: TriangleMesh<f64> = icosphere(0.5, 4);
    let c = cam(0.0, 0.0, 256, 256);
    let out = render(&m, &c);
    let d = c.distance;
    let expect = 128.0 * (0.5 / (d * d - 0.25f64).sqrt()) / (30f64.to_radians()).tan();
    let area: f64 = out.alpha.data.iter().sum();
    let radius = (area / std::f64::consts::PI).sqrt();
    assert!((radius - expect).abs() < 2.0, "{radius} vs {expect}");
    // interior pixels carry unit normals
    for (n, a) in out.normal_image.data.iter().zip(&out.alpha.data) {
        if *a == 1.0 {
            assert!((n.norm() - 1.0).abs() < 1e-3);
        }
    }
    // alpha is zero exactly on untouched background
    for i in 0..out.alpha.data.len() {
        let touched = out.tri_id[i] != NO_TRIANGLE || out.raster.blend[i].is_some();
        assert_eq!(out.alpha.data[i] == 0.0, !touched, "pixel {i}");
    }
}

#[test]
fn nearer_surface_wins_depth_test() {
    let mut near = uv_quad(0.5, 0.3);
    let far = uv_quad(1.0, -0.3);
    near.uv = None;
    let base = near.vertices.len() as u32;
    let mut m = near.clone();
    m.vertices.extend(far.vertices.iter().copied());
    m.faces.extend(far.faces.iter().map(|f| f.map(|v| v + base)));
    let c = cam(0.0, 0.0, 32, 32);
    let out = render_with(&m, &c, &RenderOptions::hard());
    let (w, _) = (32, 32);
    let center = 16 * w + 16;
    assert!(out.tri_id[center] < 2);
    assert!((out.depth[center] - (c.distance - 0.3)).abs() < 1e-9);
    let corner = 8 * w + 8;
    assert!(out.tri_id[corner] >= 2);
    assert!((out.depth[corner] - (c.distance + 0.3)).abs() < 1e-9);
}

#[test]
fn zero_pixel_grads_give_zero_vertex_grads() {
    let m: TriangleMesh<f64> = icosphere(0.5, 1);
    let c = cam(20.0, 10.0, 32, 32);
    let out = render(&m, &c);
    let g = render_backward(&out, &m, &c, &PixelGrads::zeros(32, 32)).unwrap();
    assert!(g.values.iter().all(|v| *v == Vec3::zero()));
}

#[test]
fn shape_mismatch_is_an_argument_error() {
    let m: TriangleMesh<f64> = icosphere(0.5, 1);
    let c = cam(0.0, 0.0, 32, 32);
    let out = render(&m, &c);
    assert!(matches!(
        render_backward(&out, &m, &c, &PixelGrads::zeros(16, 32)),
        Err(Error::Argument(_))
    ));
    let other: TriangleMesh<f64> = icosphere(0.5, 0);
    assert!(render_backward(&out, &other, &c, &PixelGrads::zeros(32, 32)).is_err());
}

#[test]
fn alpha_gradient_comes_only_from_silhouettes() {
    let m = TriangleMesh::new(
        vec![vec3(-0.5, -0.4, 0.0), vec3(0.5, -0.4, 0.0), vec3(0.0, 0.5, 0.0)],
        vec![[0, 1, 2]],
    );
    let c = cam(0.0, 0.0, 32, 32);
    let mut grads = PixelGrads::zeros(32, 32);
    grads.alpha.iter_mut().for_each(|a| *a = 1.0);
    let hard = render_with(&m, &c, &RenderOptions::hard());
    let g = render_backward(&hard, &m, &c, &grads).unwrap();
    assert!(g.values.iter().all(|v| *v == Vec3::zero()));
    // with edge blending, growing the triangle raises total coverage
    let soft = render(&m, &c);
    let g = render_backward(&soft, &m, &c, &grads).unwrap();
    let centroid = (m.vertices[0] + m.vertices[1] + m.vertices[2]) / 3.0;
    for (v, gv) in m.vertices.iter().zip(&g.values) {
        assert!(gv.dot(*v - centroid) > 0.0);
    }
}

#[test]
fn adjoint_matches_finite_differences_convex() {
    let m = jittered(icosahedron(0.6), 0.05, 3);
    let (ok, n) = adjoint_pass_rate(&m, &cam(25.0, 15.0, 32, 32), 11);
    assert!(ok >= 95 * n / 100, "{ok}/{n}");
}

#[test]
fn adjoint_matches_finite_differences_self_occluding() {
    let m = jittered(torus(0.55, 0.22, 8, 4), 0.02, 5);
    assert!(m.vertices.len() <= 40);
    let (ok, n) = adjoint_pass_rate(&m, &cam(-40.0, 35.0, 32, 32), 12);
    assert!(ok >= 95 * n / 100, "{ok}/{n}");
}

#[test]
fn rendering_is_deterministic() {
    let m: TriangleMesh<f64> = jittered(icosphere(0.5, 2), 0.01, 9);
    let c = cam(33.0, -12.0, 64, 48);
    let a = render(&m, &c);
    let b = render(&m, &c);
    assert_eq!(a.normal_image, b.normal_image);
    assert_eq!(a.alpha, b.alpha);
    let mut grads = PixelGrads::zeros(64, 48);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    grads.alpha.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    let ga = render_backward(&a, &m, &c, &grads).unwrap();
    let gb = render_backward(&b, &m, &c, &grads).unwrap();
    assert_eq!(ga, gb);
}

#[test]
fn constant_texture_renders_constant_color() {
    let m = uv_quad(0.6, 0.0);
    let red = vec3(1.0, 0.0, 0.0);
    let tex = RgbImage::filled(8, 8, red);
    let out = render_textured(&m, &tex, &cam(0.0, 0.0, 32, 32), &RenderOptions::hard()).unwrap();
    for (c, a) in out.image.data.iter().zip(&out.alpha.data) {
        if *a == 1.0 {
            assert!((*c - red).norm() < 1e-12);
        } else {
            assert_eq!(*c, Vec3::zero());
        }
    }
    assert!(out.alpha.count_foreground() > 0);
}

#[test]
fn missing_uvs_are_an_argument_error() {
    let m: TriangleMesh<f64> = icosphere(0.5, 0);
    let tex = RgbImage::filled(2, 2, Vec3::zero());
    assert!(matches!(
        render_textured(&m, &tex, &cam(0.0, 0.0, 8, 8), &RenderOptions::default()),
        Err(Error::Argument(_))
    ));
}

/// A quad whose UV square exactly fills a `n x n` pixel block of the view.
fn screen_aligned_quad(n: usize) -> (TriangleMesh<f64>, Camera<f64>) {
    let c = cam(0.0, 0.0, n, n);
    // quad at z = 0 spanning the full frustum cross-section
    let half = c.distance * (30f64.to_radians()).tan();
    (uv_quad(half, 0.0), c)
}

#[test]
fn checker_texture_is_bilinearly_filtered() {
    let n = 16;
    let (m, c) = screen_aligned_quad(n);
    let black = Vec3::zero();
    let white = vec3(1.0, 1.0, 1.0);
    let tex = RgbImage {
        width: 2,
        height: 2,
        data: vec![white, black, black, white],
    };
    let out = render_textured(&m, &tex, &c, &RenderOptions::hard()).unwrap();
    for y in 0..n {
        for x in 0..n {
            let uv = [(x as f64 + 0.5) / n as f64, 1.0 - (y as f64 + 0.5) / n as f64];
            let expect = sample(&tex, uv);
            let got = out.image.get(x, y);
            assert!((got - expect).norm() < 1e-9, "({x},{y}) {got:?} vs {expect:?}");
        }
    }
    // corners are pure texel colors, the center is the 4-texel average
    assert!((out.image.get(0, 0) - white).norm() < 1e-9);
    assert!((out.image.get(n - 1, 0) - black).norm() < 1e-9);
}

#[test]
fn texel_center_and_midpoint_weights() {
    let taps = bilinear_taps::<f64>(4, 4, [1.5 / 4.0, 1.0 - 2.5 / 4.0]);
    let mut w = [0.0; 16];
    for (i, t) in taps {
        w[i] += t;
    }
    assert_eq!(w[2 * 4 + 1], 1.0);
    let taps = bilinear_taps::<f64>(4, 4, [0.5, 0.5]);
    let mut w = [0.0; 16];
    for (i, t) in taps {
        w[i] += t;
    }
    for i in [5, 6, 9, 10] {
        assert_eq!(w[i], 0.25);
    }
}

#[test]
fn single_pixel_gradient_lands_on_its_texel() {
    let n = 8;
    let (m, c) = screen_aligned_quad(n);
    // 8x8 texture over an 8x8 view: pixel (x, y) samples texel (x, y) at its center
    let tex = RgbImage::filled(n, n, vec3(0.2, 0.4, 0.6));
    let out = render_textured(&m, &tex, &c, &RenderOptions::hard()).unwrap();
    let mut pg = vec![Vec3::zero(); n * n];
    pg[3 * n + 5] = vec3(1.0, 1.0, 1.0);
    let g = texture_backward(&out, &m, &pg).unwrap();
    for (i, v) in g.data.iter().enumerate() {
        let expect = if i == 3 * n + 5 { 1.0 } else { 0.0 };
        assert!((v.x - expect).abs() < 1e-9, "texel {i}: {v:?}");
    }
}

#[test]
fn texture_gradient_is_the_exact_transpose() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut m: TriangleMesh<f64> = jittered(icosphere(0.6, 1), 0.03, 2);
    // arbitrary per-corner uvs
    let coords: Vec<[f64; 2]> = (0..m.faces.len() * 3)
        .map(|_| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
        .collect();
    let faces = (0..m.faces.len() as u32).map(|f| [3 * f, 3 * f + 1, 3 * f + 2]).collect();
    m.uv = Some(UvLayer { coords, faces });
    let c = cam(10.0, 20.0, 24, 24);
    let rand_img = |rng: &mut ChaCha8Rng, w: usize, h: usize| RgbImage {
        width: w,
        height: h,
        data: (0..w * h)
            .map(|_| vec3(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect(),
    };
    let tex = rand_img(&mut rng, 8, 6);
    let out = render_textured(&m, &tex, &c, &RenderOptions::default()).unwrap();
    for _ in 0..5 {
        let pg = rand_img(&mut rng, 24, 24).data;
        let delta = rand_img(&mut rng, 8, 6);
        let jd = render_textured(&m, &delta, &c, &RenderOptions::default()).unwrap();
        let lhs: f64 = pg.iter().zip(&jd.image.data).map(|(a, b)| a.dot(*b)).sum();
        let tg = texture_backward(&out, &m, &pg).unwrap();
        let rhs: f64 = tg.data.iter().zip(&delta.data).map(|(a, b)| a.dot(*b)).sum();
        assert!((lhs - rhs).abs() <= 1e-6 * lhs.abs().max(1.0));
        // central differences along the same probe agree
        let h = 1e-3;
        let shifted = |s: f64| RgbImage {
            width: 8,
            height: 6,
            data: tex.data.iter().zip(&delta.data).map(|(a, b)| *a + *b * s).collect(),
        };
        let lp: f64 = render_textured(&m, &shifted(h), &c, &RenderOptions::default())
            .unwrap()
            .image
            .data
            .iter()
            .zip(&pg)
            .map(|(a, b)| a.dot(*b))
            .sum();
        let lm: f64 = render_textured(&m, &shifted(-h), &c, &RenderOptions::default())
            .unwrap()
            .image
            .data
            .iter()
            .zip(&pg)
            .map(|(a, b)| a.dot(*b))
            .sum();
        let fd = (lp - lm) / (2.0 * h);
        assert!((fd - rhs).abs() <= 1e-4 * fd.abs().max(1.0));
    }
}
