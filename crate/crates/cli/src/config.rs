use std::path::{Path, PathBuf};

use normfuse::camera::{PresetSpec, RigSpec};
use normfuse::metrics::BenchConfig;
use normfuse::optimize::OptimConfig;
use normfuse::texture::TexOptConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_SEED: u64 = normfuse::metrics::DEFAULT_SEED;
pub const DEFAULT_ATLAS_RESOLUTION: usize = 512;

/// Input and output locations; every field may also come from a command-line flag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub mesh: Option<PathBuf>,
    pub normals: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub cameras: Option<PathBuf>,
    pub rig: Option<PathBuf>,
    pub texture: Option<PathBuf>,
    pub suite: Option<PathBuf>,
    pub visibility_mask: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// The whole pipeline in one TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
    pub atlas_resolution: usize,
    pub rig: PresetSpec,
    pub optim: OptimConfig,
    pub texture: TexOptConfig,
    pub bench: BenchConfig,
    pub paths: Paths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            threads: None,
            atlas_resolution: DEFAULT_ATLAS_RESOLUTION,
            rig: PresetSpec::default(),
            optim: OptimConfig::default(),
            texture: TexOptConfig::default(),
            bench: BenchConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Checks every sub-config. Paths are checked by the commands that use them.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.threads == Some(0) {
            return Err(CliError::Usage("threads must be at least 1".into()));
        }
        if self.atlas_resolution < 8 {
            return Err(CliError::Usage("atlas_resolution must be at least 8".into()));
        }
        RigSpec::Preset { preset: self.rig }
            .cameras::<f64>()
            .map_err(|e| CliError::Usage(format!("rig: {e}")))?;
        self.optim.validate().map_err(|e| CliError::Usage(format!("optim: {e}")))?;
        self.texture.validate().map_err(|e| CliError::Usage(format!("texture: {e}")))?;
        self.bench.validate().map_err(|e| CliError::Usage(format!("bench: {e}")))?;
        Ok(())
    }
}

/// Required path: present and existing.
pub fn existing(p: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    let p = p.as_ref().ok_or_else(|| CliError::Usage(format!("missing {what} path")))?;
    if !p.exists() {
        return Err(CliError::Usage(format!("{what} not found: {}", p.display())));
    }
    Ok(p.clone())
}

pub fn required(p: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    p.clone().ok_or_else(|| CliError::Usage(format!("missing {what} path")))
}
