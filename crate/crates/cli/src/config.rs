//! TOML pipeline configuration. Command-line flags take precedence over
//! every field here.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

use crate::Invalid;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub root_seed: Option<u64>,
    pub workers: Option<usize>,
    #[serde(default)]
    pub assets: AssetsConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub curate: CurateConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetsConfig {
    pub noise_dir: Option<PathBuf>,
    pub rir_dir: Option<PathBuf>,
    #[serde(default)]
    pub resample: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub manifest: Option<PathBuf>,
    pub recipe: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Overrides the target of every reverb step, e.g. "early_reflected:50".
    pub target: Option<String>,
    pub encoding: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurateConfig {
    pub manifest: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub tau: Option<f64>,
    pub bins: Option<usize>,
}

impl PipelineConfig {
    /// Reads and validates a config file. Relative paths resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Invalid(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(v) = p {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        };
        fix(&mut self.assets.noise_dir);
        fix(&mut self.assets.rir_dir);
        fix(&mut self.simulate.manifest);
        fix(&mut self.simulate.recipe);
        fix(&mut self.simulate.out_dir);
        fix(&mut self.curate.manifest);
        fix(&mut self.curate.scores);
    }

    pub fn validate(&self) -> Result<()> {
        let inputs = [
            ("assets.noise_dir", &self.assets.noise_dir),
            ("assets.rir_dir", &self.assets.rir_dir),
            ("simulate.manifest", &self.simulate.manifest),
            ("simulate.recipe", &self.simulate.recipe),
            ("curate.manifest", &self.curate.manifest),
            ("curate.scores", &self.curate.scores),
        ];
        for (field, path) in inputs {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Invalid(format!("config field `{field}`: {} does not exist", p.display())).into());
                }
            }
        }
        if let Some(tau) = self.curate.tau {
            if !(0.0..=1.0).contains(&tau) {
                return Err(Invalid(format!("config field `curate.tau`: {tau} is outside [0, 1]")).into());
            }
        }
        if self.workers == Some(0) {
            return Err(Invalid("config field `workers`: must be at least 1".into()).into());
        }
        if let Some(t) = &self.simulate.target {
            t.parse::<uspeech_core::TargetKind>()
                .map_err(|e| Invalid(format!("config field `simulate.target`: {e}")))?;
        }
        Ok(())
    }
}
