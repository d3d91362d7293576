//! `normfuse`: synthesize normal maps, reconstruct, texture, benchmark and preview meshes.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::PipelineConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, configuration or missing inputs. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Failure while running the pipeline. Exit code 1.
    #[error(transparent)]
    Run(#[from] normfuse::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "normfuse", version, about = "Fuse multi-view normal maps into textured meshes")]
struct Cli {
    /// Pipeline configuration (TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

/// Camera rig selection shared by `synth` and `render`.
#[derive(Debug, Args)]
struct RigArgs {
    /// Camera rig JSON (preset or explicit cameras); overrides the flags below.
    #[arg(long)]
    rig: Option<PathBuf>,
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    fov: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render ground-truth normal maps of a mesh for every rig camera.
    Synth {
        #[arg(long)]
        mesh: Option<PathBuf>,
        /// Output directory for `normal_NNN.png` and `cameras.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Scale and center the mesh into the reconstruction ball first.
        #[arg(long)]
        normalize: bool,
        #[command(flatten)]
        rig: RigArgs,
    },
    /// Reconstruct a watertight mesh from normal maps.
    Reconstruct {
        /// Directory of normal-map PNGs, matched to cameras in file-name order.
        #[arg(long)]
        normals: Option<PathBuf>,
        #[arg(long)]
        cameras: Option<PathBuf>,
        /// Output mesh (.obj or .ply).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Loss trace CSV (default: next to the mesh).
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Generate a UV atlas and bake a texture from RGB views.
    Texture {
        #[arg(long)]
        mesh: Option<PathBuf>,
        /// Directory of RGB PNGs, matched to cameras in file-name order.
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        cameras: Option<PathBuf>,
        /// Output OBJ; the material and atlas PNG are written beside it.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        atlas_resolution: Option<usize>,
        /// Query camera rig JSON; writes one inpainting mask PNG per camera.
        #[arg(long)]
        visibility_mask: Option<PathBuf>,
    },
    /// Run the reconstruction benchmark grid.
    Bench {
        /// Directory of ground-truth meshes (default: the built-in procedural suite).
        #[arg(long)]
        suite: Option<PathBuf>,
        /// Report CSV; per-run rows go to `<stem>_runs.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        views: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        steps: Option<Vec<usize>>,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Preview normals, depth and (for textured meshes) colors from every rig camera.
    Render {
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Texture PNG; defaults to the `map_Kd` of the OBJ's material library.
        #[arg(long)]
        texture: Option<PathBuf>,
        /// Also write RGB previews.
        #[arg(long)]
        rgb: bool,
        #[command(flatten)]
        rig: RigArgs,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    cfg.bench.metrics.seed = cfg.seed;
    Ok(cfg)
}

fn apply_rig(cfg: &mut PipelineConfig, rig: &RigArgs) {
    if let Some(p) = &rig.rig {
        cfg.paths.rig = Some(p.clone());
    }
    if let Some(v) = rig.views {
        cfg.rig.n_views = v;
    }
    if let Some(r) = rig.resolution {
        cfg.rig.width = r;
        cfg.rig.height = r;
    }
    if let Some(f) = rig.fov {
        cfg.rig.fov_deg = f;
        cfg.rig.distance = normfuse::camera::default_distance(f);
    }
}

fn set(slot: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if flag.is_some() {
        *slot = flag.clone();
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = load_config(&cli)?;
    let p = &mut cfg.paths;
    match &cli.command {
        Command::Synth { mesh, out, rig, .. } => {
            set(&mut p.mesh, mesh);
            set(&mut p.out, out);
            apply_rig(&mut cfg, rig);
        }
        Command::Reconstruct {
            normals,
            cameras,
            out,
            iterations,
            ..
        } => {
            set(&mut p.normals, normals);
            set(&mut p.cameras, cameras);
            set(&mut p.out, out);
            if let Some(i) = iterations {
                cfg.optim.iterations = *i;
            }
        }
        Command::Texture {
            mesh,
            images,
            cameras,
            out,
            steps,
            atlas_resolution,
            visibility_mask,
        } => {
            set(&mut p.mesh, mesh);
            set(&mut p.images, images);
            set(&mut p.cameras, cameras);
            set(&mut p.out, out);
            set(&mut p.visibility_mask, visibility_mask);
            if let Some(s) = steps {
                cfg.texture.steps = *s;
            }
            if let Some(r) = atlas_resolution {
                cfg.atlas_resolution = *r;
            }
        }
        Command::Bench {
            suite,
            out,
            views,
            steps,
            resolution,
        } => {
            set(&mut p.suite, suite);
            set(&mut p.out, out);
            if let Some(v) = views {
                cfg.bench.views = v.clone();
            }
            if let Some(s) = steps {
                cfg.bench.steps = s.clone();
            }
            if let Some(r) = resolution {
                cfg.bench.resolution = *r;
            }
        }
        Command::Render { mesh, out, texture, rig, .. } => {
            set(&mut p.mesh, mesh);
            set(&mut p.out, out);
            set(&mut p.texture, texture);
            apply_rig(&mut cfg, rig);
        }
    }
    cfg.validate()?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Synth { normalize, .. } => commands::synth(&cfg, normalize),
        Command::Reconstruct { trace, .. } => commands::reconstruct(&cfg, trace),
        Command::Texture { .. } => commands::texture(&cfg),
        Command::Bench { .. } => commands::bench(&cfg),
        Command::Render { rgb, .. } => commands::render(&cfg, rgb),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
