use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use normfuse::camera::RigSpec;
use normfuse::imageio::{
    alpha_from_normals, read_mesh, read_normal_png, read_raster_png, read_rgb_png, write_mesh, write_rgb_png,
    NormalMap, RgbImage, BACKGROUND_THRESHOLD,
};
use normfuse::metrics::suite::SuiteShape;
use normfuse::metrics::{compare_meshes, run_benchmark, BenchConfig, MetricOptions};
use normfuse::shapes::{icosphere, unit_cube};
use normfuse::{vec3, Cam, Mesh, Vec3};
use tempfile::TempDir;

fn normfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_normfuse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_sphere(dir: &Path) -> PathBuf {
    let p = dir.join("sphere.obj");
    write_mesh(&icosphere::<f64>(0.8, 3), &p).unwrap();
    p
}

fn synth(dir: &Path, mesh: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("views");
    let mut args = vec!["synth", "--mesh", s(mesh), "--out", s(&out)];
    args.extend_from_slice(extra);
    ok(&normfuse(&args));
    out
}

#[test]
fn synth_writes_unit_normals_on_the_silhouette_disc() {
    let tmp = TempDir::new().unwrap();
    let views = synth(tmp.path(), &write_sphere(tmp.path()), &["--resolution", "64"]);
    let cams: Vec<Cam> = RigSpec::load(views.join("cameras.json")).unwrap().cameras().unwrap();
    assert_eq!(cams.len(), 4);
    for (i, cam) in cams.iter().enumerate() {
        let n: NormalMap<f64> = read_normal_png(views.join(format!("normal_{i:03}.png"))).unwrap();
        assert_eq!((n.width, n.height), (64, 64));
        let alpha = alpha_from_normals(&n, BACKGROUND_THRESHOLD);
        // The sphere's image is a disc around the principal point.
        let r_px = cam.focal_px() * 0.8 / (cam.distance * cam.distance - 0.64).sqrt();
        for y in 0..64 {
            for x in 0..64 {
                let d = ((x as f64 + 0.5 - 32.0).powi(2) + (y as f64 + 0.5 - 32.0).powi(2)).sqrt();
                let a = alpha.get(x, y);
                if d < r_px - 1.0 {
                    assert_eq!(a, 1.0, "view {i} ({x},{y}) inside the disc");
                    assert!((n.get(x, y).norm() - 1.0).abs() < 1e-4);
                } else if d > r_px + 1.0 {
                    assert_eq!(a, 0.0, "view {i} ({x},{y}) outside the disc");
                }
            }
        }
    }
}

#[test]
fn emitted_cameras_reload_identically() {
    let tmp = TempDir::new().unwrap();
    let rig = tmp.path().join("rig.json");
    fs::write(
        &rig,
        r#"[{"azimuth_deg": 10, "elevation_deg": 20, "fov_deg": 45, "distance": 3, "width": 40, "height": 30},
            {"azimuth_deg": -75, "elevation_deg": -5, "fov_deg": 60, "distance": 2.5, "width": 40, "height": 30}]"#,
    )
    .unwrap();
    let views = synth(tmp.path(), &write_sphere(tmp.path()), &["--rig", s(&rig)]);
    let a: Vec<Cam> = RigSpec::load(&rig).unwrap().cameras().unwrap();
    let b: Vec<Cam> = RigSpec::load(views.join("cameras.json")).unwrap().cameras().unwrap();
    assert_eq!(a, b);
}

#[test]
fn missing_camera_file_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let views = synth(tmp.path(), &write_sphere(tmp.path()), &["--resolution", "32"]);
    let missing = tmp.path().join("nowhere.json");
    let out = tmp.path().join("out.obj");
    let r = normfuse(&["reconstruct", "--normals", s(&views), "--cameras", s(&missing), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains(s(&missing)));
    assert!(!out.exists());
}

#[test]
fn invalid_config_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[optim]\niterations = 0\n").unwrap();
    let out = tmp.path().join("views");
    let r = normfuse(&["synth", "--config", s(&cfg), "--mesh", s(&write_sphere(tmp.path())), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.exists());
    fs::write(&cfg, "iterations = 3\n").unwrap();
    let r = normfuse(&["bench", "--config", s(&cfg), "--out", s(&tmp.path().join("r.csv"))]);
    assert_eq!(r.status.code(), Some(2));
    let r = normfuse(&["bench", "--views", "0", "--out", s(&tmp.path().join("r.csv"))]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!tmp.path().join("r.csv").exists());
}

#[test]
fn reconstruct_is_deterministic_and_writes_a_trace() {
    let tmp = TempDir::new().unwrap();
    let views = synth(tmp.path(), &write_sphere(tmp.path()), &["--resolution", "64"]);
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, "[optim]\ngrid_resolution = 48\nsimplify_target_faces = 1500\n").unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let r = normfuse(&[
            "reconstruct", "--config", s(&cfg), "--threads", "1", "--seed", "3", "--iterations", "20",
            "--normals", s(&views), "--cameras", s(&views.join("cameras.json")), "--out", s(&out),
        ]);
        ok(&r);
        assert!(String::from_utf8_lossy(&r.stdout).contains("timings: carve"));
        fs::read(out).unwrap()
    };
    let a = run("a.obj");
    let b = run("b.obj");
    assert!(a == b, "reruns differ");
    let trace = fs::read_to_string(tmp.path().join("a_loss.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("iteration,l_n,l_alpha,l_nc,total"));
    assert_eq!(lines.count(), 20);
    let (m, _): (Mesh, _) = read_mesh(tmp.path().join("a.obj")).unwrap();
    assert!(m.check_manifold().is_watertight_manifold());
}

#[test]
fn synth_then_reconstruct_matches_the_benchmark_cell() {
    let tmp = TempDir::new().unwrap();
    let gt: Mesh = SuiteShape::Sphere.mesh().unwrap();
    let gt_path = tmp.path().join("gt.obj");
    write_mesh(&gt, &gt_path).unwrap();
    let (res, steps) = (96, 30);
    let views = synth(tmp.path(), &gt_path, &["--resolution", "96"]);
    let out = tmp.path().join("rec.obj");
    ok(&normfuse(&[
        "reconstruct", "--threads", "1", "--iterations", "30", "--normals", s(&views), "--cameras",
        s(&views.join("cameras.json")), "--out", s(&out),
    ]));
    let (rec, _): (Mesh, _) = read_mesh(&out).unwrap();
    let metrics = MetricOptions { samples: 20_000, ..Default::default() };
    let cli = compare_meshes(&rec, &gt, &metrics).unwrap();
    let cfg = BenchConfig {
        views: vec![4],
        steps: vec![steps],
        resolution: res,
        metrics,
        ..Default::default()
    };
    let report = run_benchmark(&[("sphere".to_string(), gt)], &cfg).unwrap();
    let cell = report.cell(4, steps).unwrap();
    assert_eq!(cli.normal_consistency, cell.normal_consistency);
    assert_eq!(cli.chamfer * 1e3, cell.chamfer_x1e3);
}

fn color_images(dir: &Path, cams: &[Cam], c: Vec3<f64>) -> PathBuf {
    let d = dir.join("images");
    fs::create_dir_all(&d).unwrap();
    for (i, cam) in cams.iter().enumerate() {
        write_rgb_png(&RgbImage::filled(cam.width, cam.height, c), d.join(format!("view_{i:03}.png"))).unwrap();
    }
    d
}

#[test]
fn texture_of_constant_views_is_constant_and_writes_masks() {
    let tmp = TempDir::new().unwrap();
    let mesh = write_sphere(tmp.path());
    let views = synth(tmp.path(), &mesh, &["--resolution", "64"]);
    let cam_path = views.join("cameras.json");
    let cams: Vec<Cam> = RigSpec::load(&cam_path).unwrap().cameras().unwrap();
    let color = vec3(0.2, 0.6, 0.4);
    let images = color_images(tmp.path(), &cams, color);
    let query = tmp.path().join("query.json");
    fs::write(
        &query,
        r#"[{"azimuth_deg": 0, "elevation_deg": 90, "fov_deg": 60, "distance": 2.6, "width": 48, "height": 48}]"#,
    )
    .unwrap();
    let out = tmp.path().join("tex/textured.obj");
    ok(&normfuse(&[
        "texture", "--mesh", s(&mesh), "--images", s(&images), "--cameras", s(&cam_path), "--out", s(&out),
        "--atlas-resolution", "128", "--visibility-mask", s(&query),
    ]));
    let mtl = fs::read_to_string(out.with_extension("mtl")).unwrap();
    assert!(mtl.contains("map_Kd textured.png"));
    let atlas: RgbImage<f64> = read_rgb_png(out.with_extension("png")).unwrap();
    let (m, info): (Mesh, _) = read_mesh(&out).unwrap();
    assert_eq!(info.material_library.as_deref(), Some("textured.mtl"));
    let uv = m.uv.as_ref().unwrap();
    // Every texel under a UV triangle center carries the input color to within one 8-bit level.
    for t in &uv.faces {
        let c = [0, 1].map(|k| (uv.coords[t[0] as usize][k] + uv.coords[t[1] as usize][k] + uv.coords[t[2] as usize][k]) / 3.0);
        let x = ((c[0] * atlas.width as f64) as usize).min(atlas.width - 1);
        let y = (((1.0 - c[1]) * atlas.height as f64) as usize).min(atlas.height - 1);
        let d = atlas.get(x, y) - color;
        assert!(d.x.abs().max(d.y.abs()).max(d.z.abs()) < 1.5 / 255.0, "texel ({x},{y}) {:?}", atlas.get(x, y));
    }
    let mask = read_raster_png(tmp.path().join("tex/textured_mask_000.png")).unwrap();
    assert_eq!((mask.width, mask.height, mask.channels), (48, 48, 1));
    assert_eq!(mask.data[24 * 48 + 24], 255, "the pole is never seen by the equatorial rig");
}

#[test]
fn texture_rejects_open_meshes() {
    let tmp = TempDir::new().unwrap();
    let mut open: Mesh = unit_cube();
    open.faces.pop();
    let mesh = tmp.path().join("open.obj");
    write_mesh(&open, &mesh).unwrap();
    let views = synth(tmp.path(), &write_sphere(tmp.path()), &["--resolution", "32"]);
    let cams: Vec<Cam> = RigSpec::load(views.join("cameras.json")).unwrap().cameras().unwrap();
    let images = color_images(tmp.path(), &cams, vec3(1.0, 0.0, 0.0));
    let out = tmp.path().join("t.obj");
    let r = normfuse(&[
        "texture", "--mesh", s(&mesh), "--images", s(&images), "--cameras", s(&views.join("cameras.json")),
        "--out", s(&out),
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn bench_runs_a_single_cell_and_survives_failures() {
    let tmp = TempDir::new().unwrap();
    let suite = tmp.path().join("suite");
    fs::create_dir_all(&suite).unwrap();
    write_mesh(&icosphere::<f64>(0.8, 2), suite.join("ball.obj")).unwrap();
    // A degenerate mesh: all vertices coincide, so it renders nothing.
    let mut flat: Mesh = icosphere(0.8, 1);
    for v in &mut flat.vertices {
        *v = Vec3::zero();
    }
    write_mesh(&flat, suite.join("zz_point.obj")).unwrap();
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, "[bench.optim]\ngrid_resolution = 40\nsimplify_target_faces = 1000\n[bench.metrics]\nsamples = 5000\n").unwrap();
    let out = tmp.path().join("report.csv");
    let r = normfuse(&[
        "bench", "--config", s(&cfg), "--suite", s(&suite), "--views", "4", "--steps", "10",
        "--resolution", "48", "--out", s(&out),
    ]);
    ok(&r);
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], normfuse::metrics::BENCH_HEADER);
    assert_eq!(lines.len(), 2, "{csv}");
    assert!(lines[1].starts_with("4,10,"));
    let runs = fs::read_to_string(tmp.path().join("report_runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 3, "{runs}");
}

#[test]
fn render_writes_previews_and_depth_sidecars() {
    let tmp = TempDir::new().unwrap();
    let mesh = write_sphere(tmp.path());
    let out = tmp.path().join("preview");
    let r = normfuse(&["render", "--mesh", s(&mesh), "--out", s(&out), "--resolution", "32", "--rgb"]);
    ok(&r);
    assert!(String::from_utf8_lossy(&r.stderr).contains("no UVs or texture"));
    assert!(out.join("normal_003.png").exists());
    assert!(!out.join("rgb_000.png").exists());
    let depth = read_raster_png(out.join("depth_000.png")).unwrap();
    assert_eq!(depth.channels, 1);
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("depth_000.json")).unwrap()).unwrap();
    let (min, max) = (side["min"].as_f64().unwrap(), side["max"].as_f64().unwrap());
    // Nearest point of the sphere is straight ahead; the farthest visible lies on the silhouette.
    let cam: Cam = RigSpec::Preset { preset: Default::default() }.cameras().unwrap()[0].clone();
    assert!((min - (cam.distance - 0.8)).abs() < 0.02, "min {min}");
    assert!(max < cam.distance && max > min);
    let center = depth.data[16 * 32 + 16];
    assert!(center > 0 && center < 6000, "center {center}");
    assert_eq!(depth.data[0], 0);
}

#[test]
fn render_uses_the_obj_material_texture() {
    let tmp = TempDir::new().unwrap();
    let mesh = write_sphere(tmp.path());
    let views = synth(tmp.path(), &mesh, &["--resolution", "32"]);
    let cam_path = views.join("cameras.json");
    let cams: Vec<Cam> = RigSpec::load(&cam_path).unwrap().cameras().unwrap();
    let images = color_images(tmp.path(), &cams, vec3(0.0, 0.0, 1.0));
    let textured = tmp.path().join("tex.obj");
    ok(&normfuse(&[
        "texture", "--mesh", s(&mesh), "--images", s(&images), "--cameras", s(&cam_path), "--out", s(&textured),
        "--steps", "2", "--atlas-resolution", "64",
    ]));
    let out = tmp.path().join("preview");
    ok(&normfuse(&["render", "--mesh", s(&textured), "--out", s(&out), "--resolution", "32", "--rgb"]));
    let rgb: RgbImage<f64> = read_rgb_png(out.join("rgb_000.png")).unwrap();
    assert!((rgb.get(16, 16) - vec3(0.0, 0.0, 1.0)).norm() < 3.0 / 255.0);
    assert_eq!(rgb.get(0, 0), Vec3::zero());
}
