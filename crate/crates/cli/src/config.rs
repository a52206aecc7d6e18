//! Run configuration: built-in defaults, then a TOML file, then flags.

use std::path::{Path, PathBuf};

use agfusion_core::{AccelFeatureConfig, CvConfig, HiddenSizePolicy, TrainConfig};
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    #[serde(flatten)]
    pub cv: CvConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.cv.model.validate()?;
        Ok(cfg)
    }

    fn models(&mut self) -> [&mut TrainConfig; 3] {
        let m = &mut self.cv.model;
        [&mut m.acc_model, &mut m.gnss_model, &mut m.fc_model]
    }
}

/// Flags shared by the training subcommands. Anything set here wins over the
/// config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ModelFlags {
    /// gnss, acc, fc or pf.
    #[arg(long)]
    pub pipeline: Option<agfusion_core::Pipeline>,
    /// Base seed for weight initialization.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Accelerometry feature set: collar (6 features) or ear (9 features).
    #[arg(long, value_parser = ["collar", "ear"])]
    pub accel: Option<String>,
    /// GNSS feature subset, e.g. `all`, `none`, `dtwp+error`.
    #[arg(long)]
    pub gnss_features: Option<agfusion_core::GnssFeatureSet>,
    /// ℓ2 penalty applied to every classifier.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Hidden-layer size policy for every classifier: ceil-average,
    /// floor-average or an integer.
    #[arg(long)]
    pub hidden: Option<HiddenSizePolicy>,
    /// Optimizer iteration cap for every classifier.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Standardize features with training-set statistics (`--standardize`
    /// alone means true).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub standardize: Option<bool>,
}

impl ModelFlags {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(p) = self.pipeline {
            cfg.cv.pipeline = p;
        }
        if let Some(s) = self.seed {
            cfg.cv.base_seed = s;
        }
        match self.accel.as_deref() {
            Some("collar") => cfg.cv.model.accel = AccelFeatureConfig::collar(),
            Some("ear") => cfg.cv.model.accel = AccelFeatureConfig::ear(),
            _ => {}
        }
        if let Some(g) = self.gnss_features {
            cfg.cv.model.gnss.enabled = g;
        }
        for m in cfg.models() {
            if let Some(l) = self.lambda {
                m.l2_lambda = l;
            }
            if let Some(h) = self.hidden {
                m.hidden_size_policy = h;
            }
            if let Some(n) = self.max_iter {
                m.max_iter = n;
            }
            if let Some(s) = self.standardize {
                m.standardize = s;
            }
        }
    }
}
