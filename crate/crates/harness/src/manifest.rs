//! Study manifest: where the dataset lives, which models to score and how
//! to bootstrap.
//!
//! ```toml
//! dataset = "data"          # holds labels/ and one directory per model
//! flags = "models.csv"      # model_id plus six boolean technique columns
//! baselines = ["G"]         # extra mask directories scored like models
//! out = "report"
//! threshold = 0.5
//!
//! [bootstrap]
//! n_resamples = 1000000
//! trim = 0.2
//! conf = 0.99
//! seed = 0
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use floodbench_core::io::DEFAULT_MASK_THRESHOLD;
use floodbench_core::study::{read_configs_csv, read_configs_json};
use floodbench_core::{BootstrapSettings, ModelConfig};
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyManifest {
    pub dataset: PathBuf,
    /// Label directory, relative to `dataset` unless absolute.
    #[serde(default = "default_labels")]
    pub labels: PathBuf,
    /// Models to score. Defaults to the ids in `flags`.
    #[serde(default)]
    pub models: Vec<String>,
    /// Study config table (`.csv` or `.json`).
    #[serde(default)]
    pub flags: Option<PathBuf>,
    #[serde(default)]
    pub baselines: Vec<String>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub bootstrap: BootstrapSettings,
}

fn default_labels() -> PathBuf {
    PathBuf::from("labels")
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_threshold() -> f64 {
    DEFAULT_MASK_THRESHOLD
}

impl StudyManifest {
    /// Parses a manifest and resolves its paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut m: StudyManifest = toml::from_str(text).context("invalid manifest")?;
        m.dataset = base.join(&m.dataset);
        m.labels = m.dataset.join(&m.labels);
        m.out = base.join(&m.out);
        m.flags = m.flags.map(|f| base.join(f));
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Checks that every referenced input exists.
    pub fn check_paths(&self) -> Result<()> {
        let mut missing = Vec::new();
        for p in [&self.dataset, &self.labels].into_iter().chain(self.flags.as_ref()) {
            if !p.exists() {
                missing.push(p.display().to_string());
            }
        }
        if !missing.is_empty() {
            bail!("manifest references missing paths: {}", missing.join(", "));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            bail!("threshold {} outside [0, 1]", self.threshold);
        }
        Ok(())
    }

    pub fn configs(&self) -> Result<Option<Vec<ModelConfig>>> {
        let Some(path) = &self.flags else {
            return Ok(None);
        };
        let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let configs = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => read_configs_json(file),
            _ => read_configs_csv(file),
        }
        .with_context(|| format!("reading study config {}", path.display()))?;
        Ok(Some(configs))
    }

    /// Model ids to score, in manifest order, followed by baselines.
    pub fn model_ids(&self) -> Result<Vec<String>> {
        let mut ids = if self.models.is_empty() {
            self.configs()?
                .unwrap_or_default()
                .into_iter()
                .map(|c| c.model_id)
                .collect()
        } else {
            self.models.clone()
        };
        for b in &self.baselines {
            if !ids.contains(b) {
                ids.push(b.clone());
            }
        }
        if ids.is_empty() {
            return Err(UsageError(
                "no models to evaluate: list `models`, `baselines` or a `flags` table in the manifest".into(),
            )
            .into());
        }
        Ok(ids)
    }
}
