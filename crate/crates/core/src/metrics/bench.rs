use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::camera::{default_distance, preset_rig, DEFAULT_FOV_DEG, DEFAULT_RESOLUTION};
use crate::diffrast::{render_with, RenderOptions};
use crate::error::{Error, Result};
use crate::imageio::{decode_normal_map, encode_normal_map, BitDepth, NormalMap};
use crate::mesh::TriangleMesh;
use crate::optimize::{reconstruct_with, OptimConfig};
use crate::real::Real;

use super::{compare_meshes, MetricOptions};

pub const BENCH_HEADER: &str = "views,steps,normal_consistency,chamfer_x1e3,seconds";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub views: Vec<usize>,
    pub steps: Vec<usize>,
    pub resolution: usize,
    pub fov_deg: f64,
    pub metrics: MetricOptions,
    /// Shared optimizer settings; `iterations` is replaced per cell.
    pub optim: OptimConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            views: vec![4, 8, 16],
            steps: vec![50, 100, 200, 400, 600],
            resolution: DEFAULT_RESOLUTION,
            fov_deg: DEFAULT_FOV_DEG,
            metrics: MetricOptions::default(),
            optim: OptimConfig::default(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.views.is_empty() || self.steps.is_empty() {
            return Err(Error::arg("benchmark needs at least one view count and one step count"));
        }
        if self.views.contains(&0) || self.steps.contains(&0) {
            return Err(Error::arg("view and step counts must be positive"));
        }
        if self.resolution == 0 || self.metrics.samples == 0 {
            return Err(Error::arg("resolution and sample count must be positive"));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(Error::arg("fov_deg must lie in (0, 180)"));
        }
        self.optim.validate()
    }
}

/// One reconstruction of one ground-truth mesh.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRun {
    pub mesh: String,
    pub views: usize,
    pub steps: usize,
    pub normal_consistency: f64,
    pub chamfer: f64,
    pub seconds: f64,
    /// Median total loss over the first and the last 20 iterations.
    pub early_loss: f64,
    pub late_loss: f64,
    /// Manifold violations summed over the initial meshes and every remeshed state.
    pub topology_violations: usize,
    pub error: Option<String>,
}

/// Mean over the meshes of one `(views, steps)` pair; failed runs are excluded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchCell {
    pub views: usize,
    pub steps: usize,
    pub normal_consistency: f64,
    pub chamfer_x1e3: f64,
    pub seconds: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BenchReport {
    pub cells: Vec<BenchCell>,
    pub runs: Vec<BenchRun>,
}

impl BenchReport {
    pub fn cell(&self, views: usize, steps: usize) -> Option<&BenchCell> {
        self.cells.iter().find(|c| c.views == views && c.steps == steps)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{BENCH_HEADER}\n");
        for c in &self.cells {
            s.push_str(&format!(
                "{},{},{:.4},{:.4},{:.2}\n",
                c.views, c.steps, c.normal_consistency, c.chamfer_x1e3, c.seconds
            ));
        }
        s
    }

    pub fn runs_csv(&self) -> String {
        let mut s = String::from(
            "mesh,views,steps,normal_consistency,chamfer_x1e3,seconds,early_loss,late_loss,topology_violations,error\n",
        );
        for r in &self.runs {
            s.push_str(&format!(
                "{},{},{},{:.4},{:.4},{:.2},{:.6},{:.6},{},{}\n",
                r.mesh,
                r.views,
                r.steps,
                r.normal_consistency,
                r.chamfer * 1e3,
                r.seconds,
                r.early_loss,
                r.late_loss,
                r.topology_violations,
                r.error.as_deref().unwrap_or("").replace(',', ";")
            ));
        }
        s
    }
}

pub(crate) fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Ground-truth normal maps from every camera of an evenly spaced equatorial rig, quantized
/// exactly as a 16-bit normal PNG stores them.
pub fn synth_views<T: Real>(
    mesh: &TriangleMesh<T>,
    views: usize,
    resolution: usize,
    fov_deg: f64,
) -> Result<(Vec<NormalMap<T>>, Vec<crate::camera::Camera<T>>)> {
    let cams = preset_rig(views, fov_deg, default_distance(fov_deg), resolution, resolution)?;
    let maps = cams
        .iter()
        .map(|c| {
            let n = render_with(mesh, c, &RenderOptions::hard()).normal_image;
            decode_normal_map(&encode_normal_map(&n, BitDepth::Sixteen))
        })
        .collect::<Result<_>>()?;
    Ok((maps, cams))
}

fn run_one<T: Real>(
    name: &str,
    gt: &TriangleMesh<T>,
    views: usize,
    steps: usize,
    cfg: &BenchConfig,
) -> Result<BenchRun> {
    let start = Instant::now();
    let (maps, cams) = synth_views(gt, views, cfg.resolution, cfg.fov_deg)?;
    let optim = OptimConfig {
        iterations: steps,
        ..cfg.optim.clone()
    };
    let interval = optim.remesh_interval;
    let mut violations = 0;
    let rec = reconstruct_with(&maps, &cams, &optim, |it, mesh, _| {
        if interval > 0 && it > 0 && it % interval == 0 {
            violations += mesh.check_manifold().violations();
        }
    })?;
    violations += rec.init.marching_cubes_violations + rec.init.simplified_violations;
    violations += rec.mesh.check_manifold().violations();
    let seconds = start.elapsed().as_secs_f64();
    let cmp = compare_meshes(&rec.mesh, gt, &cfg.metrics)?;
    let totals: Vec<f64> = rec.trace.iter().map(|r| r.total).collect();
    let k = totals.len().min(20);
    Ok(BenchRun {
        mesh: name.to_string(),
        views,
        steps,
        normal_consistency: cmp.normal_consistency,
        chamfer: cmp.chamfer,
        seconds,
        early_loss: median(&totals[..k]),
        late_loss: median(&totals[totals.len() - k..]),
        topology_violations: violations,
        error: None,
    })
}

/// Every `(views, steps)` cell over every mesh. Failed runs are recorded and skipped.
pub fn run_benchmark<T: Real>(gt: &[(String, TriangleMesh<T>)], cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    if gt.is_empty() {
        return Err(Error::arg("benchmark needs at least one ground-truth mesh"));
    }
    let mut report = BenchReport::default();
    for &views in &cfg.views {
        for &steps in &cfg.steps {
            let mut ok = Vec::new();
            let mut failures = 0;
            let cell_start = Instant::now();
            for (name, mesh) in gt {
                match run_one(name, mesh, views, steps, cfg) {
                    Ok(r) => {
                        info!(
                            "{name} {views} views {steps} steps: nc {:.4} chamfer {:.3}e-3 in {:.1}s",
                            r.normal_consistency,
                            r.chamfer * 1e3,
                            r.seconds
                        );
                        ok.push(r);
                    }
                    Err(e) => {
                        warn!("{name} {views} views {steps} steps failed: {e}");
                        failures += 1;
                        report.runs.push(BenchRun {
                            mesh: name.clone(),
                            views,
                            steps,
                            normal_consistency: f64::NAN,
                            chamfer: f64::NAN,
                            seconds: 0.0,
                            early_loss: f64::NAN,
                            late_loss: f64::NAN,
                            topology_violations: 0,
                            error: Some(e.to_string()),
                        });
                    }
                }
            }
            let n = ok.len().max(1) as f64;
            let (nc, ch) = if ok.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                (
                    ok.iter().map(|r| r.normal_consistency).sum::<f64>() / n,
                    ok.iter().map(|r| r.chamfer).sum::<f64>() / n * 1e3,
                )
            };
            report.cells.push(BenchCell {
                views,
                steps,
                normal_consistency: nc,
                chamfer_x1e3: ch,
                seconds: cell_start.elapsed().as_secs_f64(),
                failures,
            });
            report.runs.extend(ok);
        }
    }
    Ok(report)
}
