//! JSON run configuration shared by the model-facing subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use duolens::fusion::TrainConfig;
use duolens::pipeline::{Aggregation, ChunkConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
}

/// Relative paths are resolved against the config file's directory.
/// Tokenizer files are found through each encoder bundle's metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub encoder_a: PathBuf,
    pub encoder_b: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<PathBuf>,
    #[serde(default)]
    pub data: DataPaths,
    #[serde(default)]
    pub chunking: ChunkConfig,
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_threshold() -> f64 {
    0.5
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let body = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&body).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.encoder_a);
        fix(&mut cfg.encoder_b);
        if let Some(h) = cfg.head.as_mut() {
            fix(h);
        }
        for p in [&mut cfg.data.train, &mut cfg.data.dev, &mut cfg.data.test].into_iter().flatten() {
            fix(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.chunking.validate()?;
        self.train.validate()?;
        if !(0.0..=1.0).contains(&self.threshold) {
            bail!(duolens::Error::invalid(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        Ok(())
    }

    pub fn head(&self) -> Result<&Path> {
        match &self.head {
            Some(h) => Ok(h),
            None => bail!(duolens::Error::invalid("config has no \"head\" path")),
        }
    }

    pub fn split(&self, name: &str) -> Result<&Path> {
        let p = match name {
            "train" => &self.data.train,
            "dev" => &self.data.dev,
            "test" => &self.data.test,
            other => bail!(duolens::Error::invalid(format!("unknown split {other:?}; use train, dev or test"))),
        };
        match p {
            Some(p) => Ok(p),
            None => bail!(duolens::Error::invalid(format!("config has no data.{name} path"))),
        }
    }

    /// Pretty JSON of the resolved config, for the echo file.
    pub fn resolved_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}
