//! Run configuration: CLI flags override an optional TOML config file,
//! which overrides built-in defaults. The resolved config is echoed to
//! `run_config.json` so any run can be reproduced from its output directory.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use nbhd_eval::metrics::EvalMode;
use nbhd_eval::pipeline::EvalConfig;
use nbhd_eval::recommenders::{ModelKind, TrainConfig};
use nbhd_eval::report::to_json_string;
use nbhd_eval::similarity::{SimilarityConfig, SimilarityMeasure};

/// Flags shared by `evaluate`, `compare` and `sweep`. Everything except the
/// dataset path is optional; unset flags fall back to the config file and
/// then to defaults.
#[derive(Args, Debug, Clone)]
pub struct RunFlags {
    /// Ratings file or dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// File format (csv or dat); inferred from the extension when omitted.
    #[arg(long)]
    pub format: Option<String>,
    /// Rating scale as "min,max,step".
    #[arg(long)]
    pub scale: Option<String>,
    /// Model to train (svd, slopeone, nmf, svdpp, bpr).
    #[arg(long)]
    pub model: Option<String>,
    /// Similarity measure (msd, cos, pcc, pbc).
    #[arg(long)]
    pub sim: Option<String>,
    #[arg(long)]
    pub k_neighbors: Option<usize>,
    #[arg(long)]
    pub min_support: Option<usize>,
    /// PBC shrinkage strength.
    #[arg(long)]
    pub shrinkage: Option<f64>,
    /// Drop neighborhoods inducing fewer test interactions than this.
    #[arg(long)]
    pub min_test_interactions: Option<usize>,
    /// Evaluation mode (prediction or ranking).
    #[arg(long)]
    pub mode: Option<String>,
    /// Significance level of the Welch test.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Recommendation list length for ranking metrics.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Relevance threshold on true ratings.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Run seed; per-stage seeds are derived from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Restrict the dataset to a random user subset before splitting.
    #[arg(long)]
    pub subsample_users: Option<usize>,
    /// Apply a Bonferroni correction over tested candidates.
    #[arg(long)]
    pub bonferroni: bool,
    /// Worker threads for neighborhood evaluation (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory for reports and plot data.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Attach metric bundles to every neighborhood, not just critical ones.
    #[arg(long)]
    pub full: bool,
    /// Machine-readable stdout summary.
    #[arg(long)]
    pub json: bool,
    /// TOML config file supplying defaults for any of the above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Optional TOML file mirroring the flags (flags win).
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    format: Option<String>,
    scale: Option<String>,
    model: Option<String>,
    sim: Option<String>,
    k_neighbors: Option<usize>,
    min_support: Option<usize>,
    shrinkage: Option<f64>,
    min_test_interactions: Option<usize>,
    mode: Option<String>,
    alpha: Option<f64>,
    top_k: Option<usize>,
    threshold: Option<f64>,
    test_fraction: Option<f64>,
    seed: Option<u64>,
    subsample_users: Option<usize>,
    bonferroni: Option<bool>,
    out: Option<PathBuf>,
    full: Option<bool>,
    train: Option<TrainFileConfig>,
}

/// Training hyperparameter overrides (config file only).
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFileConfig {
    pub n_factors: Option<usize>,
    pub n_epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub regularization: Option<f64>,
    pub init_std: Option<f64>,
    pub init_low: Option<f64>,
    pub init_high: Option<f64>,
    pub bpr_negative_samples: Option<usize>,
}

/// Fully resolved run configuration. Serialized (minus thread count, which
/// cannot affect results) as the reproducibility echo.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub format: Option<String>,
    pub scale: Option<String>,
    pub model: String,
    pub sim: String,
    pub k_neighbors: usize,
    pub min_support: usize,
    pub shrinkage: f64,
    pub min_test_interactions: usize,
    pub mode: String,
    pub alpha: f64,
    pub top_k: usize,
    pub threshold: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub subsample_users: Option<usize>,
    pub bonferroni: bool,
    pub full: bool,
    pub train: TrainFileConfig,
    #[serde(skip)]
    pub threads: Option<usize>,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub json: bool,
}

impl RunConfig {
    /// Merge flags over the optional config file over defaults.
    pub fn resolve(flags: &RunFlags) -> Result<Self> {
        let file: FileConfig = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("stage: setup (read {})", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("stage: setup (parse {})", path.display()))?
            }
            None => FileConfig::default(),
        };
        let sim_defaults = SimilarityConfig::default();
        let eval_defaults = EvalConfig::default();
        let cfg = Self {
            data: flags.data.clone(),
            format: flags.format.clone().or(file.format),
            scale: flags.scale.clone().or(file.scale),
            model: flags
                .model
                .clone()
                .or(file.model)
                .unwrap_or_else(|| "svd".into()),
            sim: flags
                .sim
                .clone()
                .or(file.sim)
                .unwrap_or_else(|| "pcc".into()),
            k_neighbors: flags
                .k_neighbors
                .or(file.k_neighbors)
                .unwrap_or(sim_defaults.k_neighbors),
            min_support: flags
                .min_support
                .or(file.min_support)
                .unwrap_or(sim_defaults.min_support),
            shrinkage: flags
                .shrinkage
                .or(file.shrinkage)
                .unwrap_or(sim_defaults.shrinkage),
            min_test_interactions: flags
                .min_test_interactions
                .or(file.min_test_interactions)
                .unwrap_or(sim_defaults.min_test_interactions),
            mode: flags
                .mode
                .clone()
                .or(file.mode)
                .unwrap_or_else(|| "prediction".into()),
            alpha: flags.alpha.or(file.alpha).unwrap_or(eval_defaults.alpha),
            top_k: flags.top_k.or(file.top_k).unwrap_or(eval_defaults.top_k),
            threshold: flags
                .threshold
                .or(file.threshold)
                .unwrap_or(eval_defaults.threshold),
            test_fraction: flags.test_fraction.or(file.test_fraction).unwrap_or(0.2),
            seed: flags.seed.or(file.seed).unwrap_or(42),
            subsample_users: flags.subsample_users.or(file.subsample_users),
            bonferroni: flags.bonferroni || file.bonferroni.unwrap_or(false),
            full: flags.full || file.full.unwrap_or(false),
            train: file.train.unwrap_or_default(),
            threads: flags.threads,
            out: flags
                .out
                .clone()
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from("nbhd-eval-out")),
            json: flags.json,
        };
        // Fail fast on anything malformed before touching data.
        cfg.model_kind()?;
        cfg.similarity_config()?;
        cfg.eval_config()?;
        cfg.train_config(cfg.model_kind()?)
            .validate()
            .context("stage: setup")?;
        if !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0) {
            anyhow::bail!("stage: setup: test_fraction must be in (0, 1)");
        }
        Ok(cfg)
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        self.model.parse::<ModelKind>().context("stage: setup")
    }

    pub fn similarity_config(&self) -> Result<SimilarityConfig> {
        let cfg = SimilarityConfig {
            measure: self
                .sim
                .parse::<SimilarityMeasure>()
                .context("stage: setup")?,
            min_support: self.min_support,
            shrinkage: self.shrinkage,
            k_neighbors: self.k_neighbors,
            min_test_interactions: self.min_test_interactions,
        };
        cfg.validate().context("stage: setup")?;
        Ok(cfg)
    }

    pub fn eval_config(&self) -> Result<EvalConfig> {
        let cfg = EvalConfig {
            mode: self.mode.parse::<EvalMode>().context("stage: setup")?,
            alpha: self.alpha,
            top_k: self.top_k,
            threshold: self.threshold,
            bonferroni: self.bonferroni,
            full_metrics: self.full,
        };
        cfg.validate().context("stage: setup")?;
        Ok(cfg)
    }

    /// Per-model training defaults with the config-file overrides applied.
    /// The seed is filled in by the caller from the run seed.
    pub fn train_config(&self, kind: ModelKind) -> TrainConfig {
        let mut cfg = TrainConfig::defaults_for(kind);
        let t = &self.train;
        if let Some(v) = t.n_factors {
            cfg.n_factors = v;
        }
        if let Some(v) = t.n_epochs {
            cfg.n_epochs = v;
        }
        if let Some(v) = t.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = t.regularization {
            cfg.regularization = v;
        }
        if let Some(v) = t.init_std {
            cfg.init_std = v;
        }
        if let Some(v) = t.init_low {
            cfg.init_low = v;
        }
        if let Some(v) = t.init_high {
            cfg.init_high = v;
        }
        if let Some(v) = t.bpr_negative_samples {
            cfg.bpr_negative_samples = v;
        }
        cfg
    }

    /// Write the reproducibility echo.
    pub fn write_echo(&self, path: &Path) -> Result<()> {
        std::fs::write(path, to_json_string(self)? + "\n")
            .with_context(|| format!("stage: write ({})", path.display()))?;
        Ok(())
    }
}
