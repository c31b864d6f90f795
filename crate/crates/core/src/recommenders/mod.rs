//! The five recommenders behind one predict/rank contract.
//!
//! `predict` is total: known pairs evaluate the model formula clamped to the
//! rating scale, unknown users or items fall back to the global mean plus
//! the known side's bias, and fully unknown pairs return the global mean.
//! Ranking uses the unclamped score so boundary clamping never introduces
//! artificial ties.

mod factor;
mod slope_one;

pub use factor::{bpr_fit, nmf_fit, svd_fit, svdpp_fit, FactorKind, FactorModel};
pub use slope_one::{slopeone_fit, SlopeOneModel};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{RatingDataset, RatingScale};
use crate::error::{Error, Result};

/// Which recommender to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Svd,
    SlopeOne,
    Nmf,
    SvdPp,
    Bpr,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Svd => "svd",
            Self::SlopeOne => "slopeone",
            Self::Nmf => "nmf",
            Self::SvdPp => "svdpp",
            Self::Bpr => "bpr",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "svd" => Ok(Self::Svd),
            "slopeone" | "slope_one" | "slope-one" => Ok(Self::SlopeOne),
            "nmf" => Ok(Self::Nmf),
            "svdpp" | "svd++" => Ok(Self::SvdPp),
            "bpr" => Ok(Self::Bpr),
            other => Err(Error::InvalidArgument(format!("unknown model {other:?}"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Training hyperparameters. Fields that a given algorithm does not use are
/// simply ignored by its fit function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_factors: usize,
    pub n_epochs: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub seed: u64,
    /// Stddev of the normal factor init (SVD, SVD++, BPR).
    pub init_std: f64,
    /// Uniform init bounds for NMF; `init_low` must stay positive.
    pub init_low: f64,
    pub init_high: f64,
    /// Negatives sampled per positive interaction (BPR).
    pub bpr_negative_samples: usize,
}

impl TrainConfig {
    pub fn defaults_for(kind: ModelKind) -> Self {
        let base = Self {
            n_factors: 100,
            n_epochs: 20,
            learning_rate: 0.005,
            regularization: 0.02,
            seed: 0,
            init_std: 0.1,
            init_low: 0.01,
            init_high: 1.0,
            bpr_negative_samples: 1,
        };
        match kind {
            ModelKind::Svd | ModelKind::SvdPp | ModelKind::SlopeOne => base,
            ModelKind::Nmf => Self {
                n_factors: 15,
                n_epochs: 50,
                regularization: 0.06,
                ..base
            },
            ModelKind::Bpr => Self {
                n_factors: 64,
                n_epochs: 30,
                learning_rate: 0.05,
                regularization: 0.01,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_factors == 0 || self.n_epochs == 0 {
            return Err(Error::InvalidArgument(
                "n_factors and n_epochs must be positive".into(),
            ));
        }
        if self.learning_rate <= 0.0 || self.regularization < 0.0 {
            return Err(Error::InvalidArgument(
                "learning_rate must be > 0 and regularization >= 0".into(),
            ));
        }
        if self.init_std <= 0.0 {
            return Err(Error::InvalidArgument("init_std must be > 0".into()));
        }
        if !(self.init_low > 0.0 && self.init_high > self.init_low) {
            return Err(Error::InvalidArgument(
                "nmf init bounds need 0 < init_low < init_high".into(),
            ));
        }
        if self.bpr_negative_samples == 0 {
            return Err(Error::InvalidArgument(
                "bpr_negative_samples must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Uniform contract every trained model satisfies.
pub trait Recommender: Send + Sync {
    fn name(&self) -> &'static str;

    fn scale(&self) -> RatingScale;

    fn global_mean(&self) -> f64;

    /// Unclamped model score; total over all `(user, item)` pairs via the
    /// global-mean/bias fallbacks.
    fn score(&self, user: u64, item: u64) -> f64;

    /// Rating prediction clamped into the scale.
    fn predict(&self, user: u64, item: u64) -> f64 {
        self.scale().clamp(self.score(user, item))
    }

    /// Top-`k` candidates by descending score, ties broken by ascending
    /// item id.
    fn rank(&self, user: u64, candidates: &[u64], k: usize) -> Vec<u64> {
        let mut scored: Vec<(u64, f64)> = candidates
            .iter()
            .map(|&i| (i, self.score(user, i)))
            .collect();
        scored.sort_unstable_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        scored.truncate(k);
        scored.into_iter().map(|(i, _)| i).collect()
    }
}

/// A trained model of any kind, ready for serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TrainedModel {
    Factor(FactorModel),
    SlopeOne(SlopeOneModel),
}

impl Recommender for TrainedModel {
    fn name(&self) -> &'static str {
        match self {
            Self::Factor(m) => m.name(),
            Self::SlopeOne(m) => m.name(),
        }
    }

    fn scale(&self) -> RatingScale {
        match self {
            Self::Factor(m) => m.scale(),
            Self::SlopeOne(m) => m.scale(),
        }
    }

    fn global_mean(&self) -> f64 {
        match self {
            Self::Factor(m) => m.global_mean(),
            Self::SlopeOne(m) => m.global_mean(),
        }
    }

    fn score(&self, user: u64, item: u64) -> f64 {
        match self {
            Self::Factor(m) => m.score(user, item),
            Self::SlopeOne(m) => m.score(user, item),
        }
    }
}

/// Train the requested model kind with the given hyperparameters.
pub fn fit_model(
    kind: ModelKind,
    train: &RatingDataset,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    Ok(match kind {
        ModelKind::Svd => TrainedModel::Factor(svd_fit(train, cfg)?),
        ModelKind::SvdPp => TrainedModel::Factor(svdpp_fit(train, cfg)?),
        ModelKind::Nmf => TrainedModel::Factor(nmf_fit(train, cfg)?),
        ModelKind::Bpr => TrainedModel::Factor(bpr_fit(train, cfg)?),
        ModelKind::SlopeOne => TrainedModel::SlopeOne(slopeone_fit(train)),
    })
}

const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    model: TrainedModel,
}

/// Dump every parameter block to a versioned JSON file. Finite f64 values
/// round-trip exactly through the shortest-representation encoding.
pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let file = ModelFile {
        schema_version: MODEL_SCHEMA_VERSION,
        model: model.clone(),
    };
    let text = serde_json::to_string(&file)
        .map_err(|e| Error::InvalidArgument(format!("model serialization failed: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    if file.schema_version != MODEL_SCHEMA_VERSION {
        return Err(Error::InvalidArgument(format!(
            "unsupported model schema version {}",
            file.schema_version
        )));
    }
    Ok(file.model)
}

/// Binary search into the sorted raw-id table shared by all models.
pub(crate) fn dense_pos(ids: &[u64], raw: u64) -> Option<usize> {
    ids.binary_search(&raw).ok()
}
