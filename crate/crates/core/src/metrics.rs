//! Accuracy and ranking metric suites, plus the per-sample loss units that
//! feed the significance test.
//!
//! Prediction mode works on per-interaction squared errors; ranking mode on
//! per-user precision@k with macro (per-user) averaging.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::dataset::RatingDataset;
use crate::error::{Error, Result};
use crate::recommenders::Recommender;

/// Whether a run evaluates rating prediction or top-k ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Prediction,
    Ranking,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "prediction" => Ok(Self::Prediction),
            "ranking" => Ok(Self::Ranking),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

/// A true rating paired with the model's prediction for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionSample {
    pub truth: f64,
    pub predicted: f64,
}

/// Top-k recommendations for one user together with the test items that are
/// actually relevant (true rating above the threshold).
#[derive(Debug, Clone)]
pub struct RankingSample {
    pub user: u64,
    pub recommended: Vec<u64>,
    pub relevant: HashSet<u64>,
}

/// Per-user ranking metric values, the sample unit of ranking mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankingUserMetrics {
    pub user: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Aggregated metric values for one population of samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum MetricBundle {
    Prediction {
        mse: f64,
        mae: f64,
        rmse: f64,
        n_samples: usize,
    },
    Ranking {
        precision: f64,
        recall: f64,
        f1: f64,
        k: usize,
        n_samples: usize,
    },
}

pub fn mse(samples: &[PredictionSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("mse of empty sample set".into()));
    }
    Ok(samples
        .iter()
        .map(|s| (s.truth - s.predicted).powi(2))
        .sum::<f64>()
        / samples.len() as f64)
}

pub fn mae(samples: &[PredictionSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("mae of empty sample set".into()));
    }
    Ok(samples
        .iter()
        .map(|s| (s.truth - s.predicted).abs())
        .sum::<f64>()
        / samples.len() as f64)
}

pub fn rmse(samples: &[PredictionSample]) -> Result<f64> {
    Ok(mse(samples)?.sqrt())
}

/// Fraction of the recommended list that is relevant. 0 for an empty list
/// (such users are skipped at aggregation).
pub fn precision_at_k(sample: &RankingSample) -> f64 {
    if sample.recommended.is_empty() {
        return 0.0;
    }
    let hits = sample
        .recommended
        .iter()
        .filter(|i| sample.relevant.contains(i))
        .count();
    hits as f64 / sample.recommended.len() as f64
}

/// Fraction of the relevant items that were recommended; 0 when the user
/// has no relevant test items.
pub fn recall_at_k(sample: &RankingSample) -> f64 {
    let hits = sample
        .recommended
        .iter()
        .filter(|i| sample.relevant.contains(i))
        .count();
    hits as f64 / sample.relevant.len().max(1) as f64
}

pub fn f1_at_k(sample: &RankingSample) -> f64 {
    let p = precision_at_k(sample);
    let r = recall_at_k(sample);
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-interaction squared errors over `interactions`, in input order.
pub fn prediction_squared_errors(
    model: &dyn Recommender,
    interactions: &[crate::dataset::Interaction],
) -> Vec<f64> {
    interactions
        .iter()
        .map(|r| {
            let e = r.rating - model.predict(r.user_id, r.item_id);
            e * e
        })
        .collect()
}

/// Prediction samples (truth, predicted) over `interactions`.
pub fn prediction_samples(
    model: &dyn Recommender,
    interactions: &[crate::dataset::Interaction],
) -> Vec<PredictionSample> {
    interactions
        .iter()
        .map(|r| PredictionSample {
            truth: r.rating,
            predicted: model.predict(r.user_id, r.item_id),
        })
        .collect()
}

/// Build one ranking sample per test user: candidates are the train items
/// the user has not rated in train, recommendations the model's top-k among
/// them, relevant the user's test items rated above `threshold`.
pub fn ranking_samples(
    model: &dyn Recommender,
    train: &RatingDataset,
    test: &RatingDataset,
    k: usize,
    threshold: f64,
) -> Vec<RankingSample> {
    use rayon::prelude::*;

    let item_universe: Vec<u64> = train.item_ids().to_vec();
    (0..test.n_users() as u32)
        .into_par_iter()
        .map(|tu| {
            let user = test.user_ids()[tu as usize];
            let rated_in_train: HashSet<u64> = train
                .user_index(user)
                .map(|u| {
                    train
                        .user_interactions(u)
                        .iter()
                        .map(|r| r.item_id)
                        .collect()
                })
                .unwrap_or_default();
            let candidates: Vec<u64> = item_universe
                .iter()
                .copied()
                .filter(|i| !rated_in_train.contains(i))
                .collect();
            let recommended = model.rank(user, &candidates, k);
            let relevant: HashSet<u64> = test
                .user_interactions(tu)
                .iter()
                .filter(|r| r.rating > threshold)
                .map(|r| r.item_id)
                .collect();
            RankingSample {
                user,
                recommended,
                relevant,
            }
        })
        .collect()
}

/// Per-user precision/recall/F1 for every test user with a non-empty
/// recommendation list.
pub fn ranking_user_metrics(
    model: &dyn Recommender,
    train: &RatingDataset,
    test: &RatingDataset,
    k: usize,
    threshold: f64,
) -> Vec<RankingUserMetrics> {
    ranking_samples(model, train, test, k, threshold)
        .iter()
        .filter(|s| !s.recommended.is_empty())
        .map(|s| RankingUserMetrics {
            user: s.user,
            precision: precision_at_k(s),
            recall: recall_at_k(s),
            f1: f1_at_k(s),
        })
        .collect()
}

/// Per-sample loss units for one evaluation mode: squared errors per test
/// interaction, or precision@k per test user.
#[derive(Debug, Clone)]
pub enum LossSamples {
    PerInteraction(Vec<f64>),
    PerUser(Vec<(u64, f64)>),
}

/// The sample units that feed the t-test, for the chosen mode.
pub fn loss_samples(
    model: &dyn Recommender,
    train: &RatingDataset,
    test: &RatingDataset,
    mode: EvalMode,
    k: usize,
    threshold: f64,
) -> LossSamples {
    match mode {
        EvalMode::Prediction => {
            LossSamples::PerInteraction(prediction_squared_errors(model, test.interactions()))
        }
        EvalMode::Ranking => LossSamples::PerUser(
            ranking_user_metrics(model, train, test, k, threshold)
                .into_iter()
                .map(|m| (m.user, m.precision))
                .collect(),
        ),
    }
}

pub fn prediction_bundle(samples: &[PredictionSample]) -> Result<MetricBundle> {
    Ok(MetricBundle::Prediction {
        mse: mse(samples)?,
        mae: mae(samples)?,
        rmse: rmse(samples)?,
        n_samples: samples.len(),
    })
}

/// Macro-averaged ranking bundle over per-user metric rows.
pub fn ranking_bundle(users: &[RankingUserMetrics], k: usize) -> Result<MetricBundle> {
    if users.is_empty() {
        return Err(Error::InvalidArgument(
            "ranking bundle of empty user set".into(),
        ));
    }
    let n = users.len() as f64;
    Ok(MetricBundle::Ranking {
        precision: users.iter().map(|m| m.precision).sum::<f64>() / n,
        recall: users.iter().map(|m| m.recall).sum::<f64>() / n,
        f1: users.iter().map(|m| m.f1).sum::<f64>() / n,
        k,
        n_samples: users.len(),
    })
}
