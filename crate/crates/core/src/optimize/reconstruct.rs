use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::carve::{
    carve_occupancy, marching_cubes, occupancy_to_field, simplify, CarveSemantics, SimplifyOptions,
    DEFAULT_GRID_RESOLUTION, DEFAULT_ISO, DEFAULT_SMOOTHING, DEFAULT_TARGET_FACES,
};
use crate::diffrast::{RenderOptions, Scene, VertexGrads};
use crate::error::{Error, Result};
use crate::imageio::{alpha_from_normals, AlphaMask, NormalMap, BACKGROUND_THRESHOLD};
use crate::mesh::TriangleMesh;
use crate::real::Real;

use super::remesh::remesh_carrying;
use super::{adam_step, loss_total, AdamState, RemeshStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    /// Optimization steps `T`.
    pub iterations: usize,
    pub lambda_alpha: f64,
    pub lambda_nc: f64,
    pub learning_rate: f64,
    /// Final learning rate as a fraction of `learning_rate` (geometric decay); 1 keeps it constant.
    pub learning_rate_end_ratio: f64,
    /// Remesh after every this many steps; 0 disables remeshing.
    pub remesh_interval: usize,
    /// Restart Adam from zero moments after each remesh instead of carrying them over.
    pub reset_optimizer_on_remesh: bool,
    /// Starting target edge length; the mean edge length of the initial mesh when unset.
    pub edge_length_start: Option<f64>,
    /// Final target edge length as a fraction of the start (geometric decay).
    pub edge_length_end_ratio: f64,
    pub simplify_target_faces: usize,
    pub grid_resolution: usize,
    /// Gaussian smoothing of the occupancy grid, in voxels.
    pub smoothing: f64,
    pub iso: f64,
    pub carve_semantics: CarveSemantics,
    /// Normal-map magnitude below which a pixel counts as background.
    pub alpha_threshold: f64,
    pub render: RenderOptions,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            lambda_alpha: 1.0,
            lambda_nc: 0.1,
            learning_rate: 0.01,
            learning_rate_end_ratio: 0.3,
            remesh_interval: 10,
            reset_optimizer_on_remesh: false,
            edge_length_start: None,
            edge_length_end_ratio: 0.5,
            simplify_target_faces: DEFAULT_TARGET_FACES,
            grid_resolution: DEFAULT_GRID_RESOLUTION,
            smoothing: DEFAULT_SMOOTHING,
            iso: DEFAULT_ISO,
            carve_semantics: CarveSemantics::Intersection,
            alpha_threshold: BACKGROUND_THRESHOLD,
            render: RenderOptions::default(),
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::arg(m.to_string()));
        if self.iterations < 1 {
            return bad("iterations must be at least 1");
        }
        if !(self.lambda_alpha >= 0.0 && self.lambda_nc >= 0.0) {
            return bad("loss weights must be non-negative");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.learning_rate_end_ratio > 0.0 && self.learning_rate_end_ratio.is_finite()) {
            return bad("learning_rate_end_ratio must be positive");
        }
        if !(self.edge_length_end_ratio > 0.0) {
            return bad("edge_length_end_ratio must be positive");
        }
        if self.edge_length_start.is_some_and(|l| !(l > 0.0)) {
            return bad("edge_length_start must be positive");
        }
        if self.simplify_target_faces < 4 {
            return bad("simplify_target_faces must be at least 4");
        }
        if self.grid_resolution < 8 {
            return bad("grid_resolution must be at least 8");
        }
        if !(self.smoothing >= 0.0) {
            return bad("smoothing must be non-negative");
        }
        if !(self.alpha_threshold >= 0.0) {
            return bad("alpha_threshold must be non-negative");
        }
        Ok(())
    }

    /// Learning rate used at step `iteration` (0-based).
    pub fn learning_rate_at(&self, iteration: usize) -> f64 {
        let frac = iteration as f64 / (self.iterations.max(2) - 1) as f64;
        self.learning_rate * self.learning_rate_end_ratio.powf(frac.min(1.0))
    }

    /// Target edge length for the remesh after step `iteration` (0-based).
    pub fn target_edge_length(&self, start: f64, iteration: usize) -> f64 {
        let frac = (iteration + 1) as f64 / self.iterations as f64;
        start * self.edge_length_end_ratio.powf(frac)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub normal: f64,
    pub alpha: f64,
    pub consistency: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PhaseTimings {
    pub carve: f64,
    pub marching_cubes: f64,
    pub simplify: f64,
    pub optimize: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InitReport {
    pub occupied_voxels: usize,
    pub marching_cubes_faces: usize,
    pub simplified_faces: usize,
    pub simplify_target_missed: bool,
    /// Manifold violations of the marching cubes and simplified meshes.
    pub marching_cubes_violations: usize,
    pub simplified_violations: usize,
}

#[derive(Debug, Clone)]
pub struct Reconstruction<T> {
    pub mesh: TriangleMesh<T>,
    pub trace: Vec<LossRecord>,
    pub timings: PhaseTimings,
    pub init: InitReport,
    pub remesh: Vec<RemeshStats>,
}

/// Loss trace as CSV with header `iteration,l_n,l_alpha,l_nc,total`.
pub fn write_loss_trace(trace: &[LossRecord]) -> String {
    let mut s = String::from("iteration,l_n,l_alpha,l_nc,total\n");
    for r in trace {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iteration, r.normal, r.alpha, r.consistency, r.total
        ));
    }
    s
}

fn check_views<T: Real>(normals: &[NormalMap<T>], cams: &[Camera<T>]) -> Result<()> {
    if normals.is_empty() || normals.len() != cams.len() {
        return Err(Error::arg(format!(
            "need matching non-zero numbers of normal maps and cameras, got {} and {}",
            normals.len(),
            cams.len()
        )));
    }
    for (i, (n, c)) in normals.iter().zip(cams).enumerate() {
        if n.width != c.width || n.height != c.height {
            return Err(Error::arg(format!(
                "view {i}: normal map is {}x{} but camera is {}x{}",
                n.width, n.height, c.width, c.height
            )));
        }
    }
    Ok(())
}

/// Thresholding, carving, marching cubes and simplification.
pub fn initial_mesh<T: Real>(
    normals: &[NormalMap<T>],
    cams: &[Camera<T>],
    cfg: &OptimConfig,
    timings: &mut PhaseTimings,
) -> Result<(TriangleMesh<T>, InitReport)> {
    check_views(normals, cams)?;
    cfg.validate()?;
    let t0 = Instant::now();
    let masks: Vec<AlphaMask<T>> = normals
        .iter()
        .map(|n| alpha_from_normals(n, T::lit(cfg.alpha_threshold)))
        .collect();
    let grid = carve_occupancy(&masks, cams, cfg.grid_resolution, cfg.carve_semantics)?;
    let occupied = grid.count();
    if occupied == 0 {
        return Err(Error::NoSilhouette);
    }
    let field = occupancy_to_field(&grid, T::lit(cfg.smoothing))?.padded(1, T::zero());
    timings.carve = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let mc = marching_cubes(&field, T::lit(cfg.iso));
    timings.marching_cubes = t1.elapsed().as_secs_f64();
    if mc.is_empty() {
        return Err(Error::NoSilhouette);
    }
    let t2 = Instant::now();
    let (mesh, rep) = simplify(
        &mc,
        &SimplifyOptions {
            target_faces: cfg.simplify_target_faces,
            max_error: None,
        },
    )?;
    timings.simplify = t2.elapsed().as_secs_f64();
    let simplified_violations = mesh.check_manifold().violations();
    Ok((
        mesh,
        InitReport {
            occupied_voxels: occupied,
            marching_cubes_faces: mc.faces.len(),
            simplified_faces: rep.faces,
            simplify_target_missed: rep.target_missed,
            marching_cubes_violations: mc.check_manifold().violations(),
            simplified_violations,
        },
    ))
}

/// Full pipeline: carve an initial mesh from the silhouettes, then optimize it.
pub fn reconstruct<T: Real>(
    normals: &[NormalMap<T>],
    cams: &[Camera<T>],
    cfg: &OptimConfig,
) -> Result<Reconstruction<T>> {
    reconstruct_with(normals, cams, cfg, |_, _, _| {})
}

/// [`reconstruct`] with a per-step observer, as in [`reconstruct_from`].
pub fn reconstruct_with<T: Real>(
    normals: &[NormalMap<T>],
    cams: &[Camera<T>],
    cfg: &OptimConfig,
    observe: impl FnMut(usize, &TriangleMesh<T>, &LossRecord),
) -> Result<Reconstruction<T>> {
    let mut timings = PhaseTimings::default();
    let (init, report) = initial_mesh(normals, cams, cfg, &mut timings)?;
    let mut out = reconstruct_from(init, normals, cams, cfg, observe)?;
    out.init = report;
    out.timings = PhaseTimings {
        optimize: out.timings.optimize,
        ..timings
    };
    Ok(out)
}

/// Optimization loop from a given starting mesh. `observe` sees every step's mesh and loss.
pub fn reconstruct_from<T: Real>(
    init: TriangleMesh<T>,
    normals: &[NormalMap<T>],
    cams: &[Camera<T>],
    cfg: &OptimConfig,
    mut observe: impl FnMut(usize, &TriangleMesh<T>, &LossRecord),
) -> Result<Reconstruction<T>> {
    check_views(normals, cams)?;
    cfg.validate()?;
    if init.is_empty() {
        return Err(Error::NoSilhouette);
    }
    let start = Instant::now();
    let alphas: Vec<AlphaMask<T>> = normals
        .iter()
        .map(|n| alpha_from_normals(n, T::lit(cfg.alpha_threshold)))
        .collect();
    let edge_start = cfg
        .edge_length_start
        .unwrap_or_else(|| init.mean_edge_length().as_f64());
    let (la, lnc) = (T::lit(cfg.lambda_alpha), T::lit(cfg.lambda_nc));
    let mut mesh = init;
    let mut adam = AdamState::new(mesh.vertices.len());
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut remesh_stats = Vec::new();
    for it in 0..cfg.iterations {
        let scene = Scene::new(&mesh);
        let renders: Vec<_> = cams.par_iter().map(|c| scene.render(c, &cfg.render)).collect();
        let loss = loss_total(&renders, normals, &alphas, &mesh, la, lnc)?;
        let record = LossRecord {
            iteration: it,
            normal: loss.normal.as_f64(),
            alpha: loss.alpha.as_f64(),
            consistency: loss.consistency.as_f64(),
            total: loss.total.as_f64(),
        };
        trace.push(record);
        observe(it, &mesh, &record);
        if !record.total.is_finite() {
            return Err(Error::NonFinite { iteration: it });
        }
        let per_view: Vec<VertexGrads<T>> = renders
            .par_iter()
            .zip(cams.par_iter())
            .zip(loss.pixel_grads.par_iter())
            .map(|((r, c), g)| scene.backward(r, c, g))
            .collect::<Result<_>>()?;
        let mut grads = loss.vertex_grads;
        for g in &per_view {
            grads.add(g);
        }
        drop(scene);
        if !grads.is_finite() {
            return Err(Error::NonFinite { iteration: it });
        }
        adam_step(&mut adam, &mut mesh.vertices, &grads.values, T::lit(cfg.learning_rate_at(it)))?;
        if cfg.remesh_interval > 0 && (it + 1) % cfg.remesh_interval == 0 && it + 1 < cfg.iterations {
            let target = T::lit(cfg.target_edge_length(edge_start, it));
            let moments: Vec<_> = adam.m.iter().copied().zip(adam.v.iter().copied()).collect();
            let half = T::lit(0.5);
            let (m, stats, moments) = remesh_carrying(&mesh, target, &moments, |a, b| {
                ((a.0 + b.0) * half, (a.1 + b.1) * half)
            });
            debug!("step {it}: remesh {stats:?}, {} faces", m.faces.len());
            remesh_stats.push(stats);
            mesh = m;
            if cfg.reset_optimizer_on_remesh {
                adam = AdamState::new(mesh.vertices.len());
            } else {
                (adam.m, adam.v) = moments.into_iter().unzip();
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    info!(
        "optimized {} steps in {:.2}s, final loss {:.5}, {} faces",
        cfg.iterations,
        elapsed,
        trace.last().map_or(f64::NAN, |r| r.total),
        mesh.faces.len()
    );
    Ok(Reconstruction {
        mesh,
        trace,
        timings: PhaseTimings {
            optimize: elapsed,
            ..PhaseTimings::default()
        },
        init: InitReport::default(),
        remesh: remesh_stats,
    })
}
