use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use normfuse::camera::{rig_to_json, Camera, RigSpec};
use normfuse::diffrast::{render_textured, render_with, RenderOptions};
use normfuse::imageio::{
    read_mesh, read_normal_png, read_rgb_png, write_gray16_png, write_mask_png, write_mesh,
    write_normal_png, write_obj, write_rgb_png, BitDepth, NormalMap, RgbImage,
};
use normfuse::metrics::suite::{procedural_suite, SUITE_RADIUS};
use normfuse::metrics::run_benchmark;
use normfuse::optimize::{reconstruct_with, write_loss_trace};
use normfuse::texture::{bake_texture, generate_uv_atlas, visibility_mask};
use normfuse::{Cam, Mesh};

use crate::config::{existing, required, PipelineConfig};
use crate::CliError;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Run(normfuse::Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn load_cameras(path: &Path) -> Result<Vec<Cam>, CliError> {
    RigSpec::load(path)
        .and_then(|r| r.cameras())
        .map_err(|e| CliError::Usage(format!("cameras {}: {e}", path.display())))
}

/// Rig from `paths.rig` if given, else the configured preset.
fn rig_cameras(cfg: &PipelineConfig) -> Result<Vec<Cam>, CliError> {
    match &cfg.paths.rig {
        Some(_) => load_cameras(&existing(&cfg.paths.rig, "rig")?),
        None => RigSpec::Preset { preset: cfg.rig }
            .cameras()
            .map_err(|e| CliError::Usage(format!("rig: {e}"))),
    }
}

/// PNG files of a directory in file-name order.
fn png_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Usage(format!("cannot list {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn matched_files(dir: &Path, cams: &[Cam], what: &str) -> Result<Vec<PathBuf>, CliError> {
    let files = png_files(dir)?;
    if files.is_empty() || files.len() != cams.len() {
        return Err(CliError::Usage(format!(
            "{} holds {} {what} PNGs for {} cameras",
            dir.display(),
            files.len(),
            cams.len()
        )));
    }
    Ok(files)
}

fn check_size(path: &Path, w: usize, h: usize, cam: &Cam) -> Result<(), CliError> {
    if (w, h) != (cam.width, cam.height) {
        return Err(CliError::Usage(format!(
            "{} is {w}x{h} but its camera is {}x{}",
            path.display(),
            cam.width,
            cam.height
        )));
    }
    Ok(())
}

fn read_input_mesh(path: &Path) -> Result<Mesh, CliError> {
    let (mesh, info) = read_mesh(path)?;
    if info.triangulated_polygons > 0 {
        warn!("{}: fan-triangulated {} polygons", path.display(), info.triangulated_polygons);
    }
    Ok(mesh)
}

pub fn synth(cfg: &PipelineConfig, normalize: bool) -> Result<(), CliError> {
    let mesh_path = existing(&cfg.paths.mesh, "mesh")?;
    let out = required(&cfg.paths.out, "output directory")?;
    let cams = rig_cameras(cfg)?;
    let mut mesh = read_input_mesh(&mesh_path)?;
    if normalize {
        mesh.normalize_to_ball(SUITE_RADIUS);
    }
    let maps: Vec<NormalMap<f64>> = cams
        .iter()
        .map(|c| render_with(&mesh, c, &RenderOptions::hard()).normal_image)
        .collect();
    create_dir(&out)?;
    for (i, n) in maps.iter().enumerate() {
        write_normal_png(n, BitDepth::Sixteen, out.join(format!("normal_{i:03}.png")))?;
    }
    write_text(&out.join("cameras.json"), &rig_to_json(&cams))?;
    info!("wrote {} normal maps to {}", maps.len(), out.display());
    Ok(())
}

pub fn reconstruct(cfg: &PipelineConfig, trace: Option<PathBuf>) -> Result<(), CliError> {
    let normals_dir = existing(&cfg.paths.normals, "normal-map directory")?;
    let cam_path = existing(&cfg.paths.cameras, "camera file")?;
    let out = required(&cfg.paths.out, "output mesh")?;
    let cams = load_cameras(&cam_path)?;
    let files = matched_files(&normals_dir, &cams, "normal-map")?;
    let mut normals = Vec::with_capacity(files.len());
    for (f, c) in files.iter().zip(&cams) {
        let n: NormalMap<f64> = read_normal_png(f)?;
        check_size(f, n.width, n.height, c)?;
        normals.push(n);
    }
    let trace_path = trace.unwrap_or_else(|| sibling(&out, "_loss.csv"));
    let rec = reconstruct_with(&normals, &cams, &cfg.optim, |it, _, l| {
        log::debug!("iteration {it}: total {:.6} (n {:.6}, alpha {:.6}, nc {:.6})", l.total, l.normal, l.alpha, l.consistency);
    })?;
    let t = rec.timings;
    println!(
        "timings: carve {:.3}s, marching cubes {:.3}s, simplify {:.3}s, optimize {:.3}s, total {:.3}s",
        t.carve,
        t.marching_cubes,
        t.simplify,
        t.optimize,
        t.carve + t.marching_cubes + t.simplify + t.optimize
    );
    if rec.init.simplify_target_missed {
        warn!("simplification stopped at {} faces", rec.init.simplified_faces);
    }
    create_parent(&out)?;
    write_mesh(&rec.mesh, &out)?;
    create_parent(&trace_path)?;
    write_text(&trace_path, &write_loss_trace(&rec.trace))?;
    info!(
        "wrote {} ({} vertices, {} faces) and {}",
        out.display(),
        rec.mesh.vertices.len(),
        rec.mesh.faces.len(),
        trace_path.display()
    );
    Ok(())
}

/// `dir/stem<suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn texture(cfg: &PipelineConfig) -> Result<(), CliError> {
    let mesh_path = existing(&cfg.paths.mesh, "mesh")?;
    let images_dir = existing(&cfg.paths.images, "image directory")?;
    let cam_path = existing(&cfg.paths.cameras, "camera file")?;
    let out = required(&cfg.paths.out, "output OBJ")?;
    let queries = match &cfg.paths.visibility_mask {
        Some(_) => load_cameras(&existing(&cfg.paths.visibility_mask, "visibility query cameras")?)?,
        None => Vec::new(),
    };
    let cams = load_cameras(&cam_path)?;
    let files = matched_files(&images_dir, &cams, "image")?;
    let mut images = Vec::with_capacity(files.len());
    for (f, c) in files.iter().zip(&cams) {
        let img: RgbImage<f64> = read_rgb_png(f)?;
        check_size(f, img.width, img.height, c)?;
        images.push(img);
    }
    let mesh = read_input_mesh(&mesh_path)?;
    let report = mesh.check_manifold();
    if !report.is_watertight_manifold() {
        return Err(CliError::Usage(format!(
            "{} is not a watertight 2-manifold ({} violations)",
            mesh_path.display(),
            report.violations()
        )));
    }
    let (uv_mesh, atlas) = generate_uv_atlas(&mesh, cfg.atlas_resolution)?;
    info!("atlas {}x{} with {} charts", atlas.resolution, atlas.resolution, atlas.charts.len());
    let baked = bake_texture(&uv_mesh, &atlas, &images, &cams, &cfg.texture)?;
    if let (Some(a), Some(b)) = (baked.trace.first(), baked.trace.last()) {
        info!("texture loss {:.6} -> {:.6}", a.total, b.total);
    }
    let masks: Vec<_> = queries.iter().map(|q| visibility_mask(&uv_mesh, &cams, q)).collect();

    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("textured").to_string();
    let png = out.with_extension("png");
    create_parent(&out)?;
    write_text(&out, &write_obj(&uv_mesh, Some(&stem)))?;
    let png_name = png.file_name().and_then(|s| s.to_str()).unwrap_or("texture.png");
    write_text(
        &out.with_extension("mtl"),
        &format!("newmtl {stem}\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nillum 1\nmap_Kd {png_name}\n"),
    )?;
    write_rgb_png(&baked.atlas.texels, &png)?;
    for (i, m) in masks.iter().enumerate() {
        write_mask_png(m, sibling(&out, &format!("_mask_{i:03}.png")))?;
    }
    info!("wrote {}, its material and atlas", out.display());
    Ok(())
}

fn suite_meshes(dir: &Path) -> Result<Vec<(String, Mesh)>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Usage(format!("cannot list {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("obj") || e.eq_ignore_ascii_case("ply"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Usage(format!("no .obj or .ply meshes in {}", dir.display())));
    }
    files
        .iter()
        .map(|f| {
            let mut m = read_input_mesh(f)?;
            m.normalize_to_ball(SUITE_RADIUS);
            let name = f.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh").to_string();
            Ok((name, m))
        })
        .collect()
}

pub fn bench(cfg: &PipelineConfig) -> Result<(), CliError> {
    let out = required(&cfg.paths.out, "report CSV")?;
    let suite = match &cfg.paths.suite {
        Some(_) => suite_meshes(&existing(&cfg.paths.suite, "suite directory")?)?,
        None => procedural_suite()?,
    };
    info!(
        "benchmark: {} meshes, views {:?}, steps {:?}",
        suite.len(),
        cfg.bench.views,
        cfg.bench.steps
    );
    let report = run_benchmark(&suite, &cfg.bench)?;
    for r in report.runs.iter().filter(|r| r.error.is_some()) {
        warn!(
            "{} ({} views, {} steps) failed: {}",
            r.mesh,
            r.views,
            r.steps,
            r.error.as_deref().unwrap_or("")
        );
    }
    create_parent(&out)?;
    write_text(&out, &report.to_csv())?;
    write_text(&sibling(&out, "_runs.csv"), &report.runs_csv())?;
    print!("{}", report.to_csv());
    Ok(())
}

/// Texture named by `map_Kd` in the OBJ's material library, resolved next to the mesh.
fn material_texture(mesh_path: &Path, library: &str) -> Option<PathBuf> {
    let dir = mesh_path.parent().unwrap_or(Path::new(""));
    let text = fs::read_to_string(dir.join(library)).ok()?;
    text.lines()
        .find_map(|l| l.trim().strip_prefix("map_Kd"))
        .map(|name| dir.join(name.trim()))
}

/// Depth encoded as `1 + round(65534 * (d - min) / (max - min))`; 0 marks background.
fn encode_depth(depth: &[f64]) -> (Vec<u16>, f64, f64) {
    let fg = depth.iter().copied().filter(|d| d.is_finite());
    let (min, max) = fg.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), d| (a.min(d), b.max(d)));
    let span = if max > min { max - min } else { 1.0 };
    let data = depth
        .iter()
        .map(|&d| {
            if d.is_finite() {
                1 + (65534.0 * (d - min) / span).round() as u16
            } else {
                0
            }
        })
        .collect();
    (data, min, max)
}

pub fn render(cfg: &PipelineConfig, rgb: bool) -> Result<(), CliError> {
    let mesh_path = existing(&cfg.paths.mesh, "mesh")?;
    let out = required(&cfg.paths.out, "output directory")?;
    if cfg.paths.texture.is_some() {
        existing(&cfg.paths.texture, "texture")?;
    }
    let cams: Vec<Camera<f64>> = rig_cameras(cfg)?;
    let (mesh, info): (Mesh, _) = read_mesh(&mesh_path)?;
    let tex_path = cfg.paths.texture.clone().or_else(|| {
        info.material_library
            .as_deref()
            .and_then(|lib| material_texture(&mesh_path, lib))
    });
    let texture = match (&tex_path, &mesh.uv) {
        (Some(p), Some(_)) => Some(read_rgb_png::<f64>(p)?),
        _ => None,
    };
    if rgb && texture.is_none() {
        warn!("{} has no UVs or texture; writing normal and depth previews only", mesh_path.display());
    }
    let opts = RenderOptions::default();
    create_dir(&out)?;
    for (i, cam) in cams.iter().enumerate() {
        let r = render_with(&mesh, cam, &opts);
        write_normal_png(&r.normal_image, BitDepth::Eight, out.join(format!("normal_{i:03}.png")))?;
        let (data, min, max) = encode_depth(&r.depth);
        write_gray16_png(cam.width, cam.height, &data, out.join(format!("depth_{i:03}.png")))?;
        let sidecar = serde_json::json!({
            "min": if min.is_finite() { Some(min) } else { None },
            "max": if max.is_finite() { Some(max) } else { None },
            "background": 0,
            "encoding": "value = 1 + round(65534 * (depth - min) / (max - min))",
        });
        write_text(
            &out.join(format!("depth_{i:03}.json")),
            &serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
        )?;
        if let (true, Some(tex)) = (rgb, &texture) {
            let t = render_textured(&mesh, tex, cam, &opts)?;
            write_rgb_png(&t.image, out.join(format!("rgb_{i:03}.png")))?;
        }
    }
    info!("wrote previews for {} cameras to {}", cams.len(), out.display());
    Ok(())
}
