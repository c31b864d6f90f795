//! End-to-end neighborhood evaluation: per-neighborhood loss pairs against
//! the complement, the positive-difference candidate filter, one-sided
//! Welch testing, critical flagging, cross-algorithm overlap analysis and
//! plot-ready records.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::RatingDataset;
use crate::error::{Error, Result};
use crate::metrics::{self, EvalMode, MetricBundle, PredictionSample, RankingUserMetrics};
use crate::recommenders::Recommender;
use crate::similarity::{Neighborhood, SimilarityConfig};
use crate::stats::{welch_one_sided, Alternative, WelchResult};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Observed value bands from system-level prediction metrics; rows whose
/// neighborhood metrics exceed them are annotated (never used for flagging).
const CRITICAL_ZONE_MSE: f64 = 0.85;
const CRITICAL_ZONE_MAE: f64 = 0.75;
const CRITICAL_ZONE_RMSE: f64 = 0.90;

/// Evaluation-stage configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub mode: EvalMode,
    /// Significance level for the one-sided Welch test.
    pub alpha: f64,
    /// List length for ranking metrics.
    pub top_k: usize,
    /// Relevance threshold on true ratings (ranking mode).
    pub threshold: f64,
    /// Divide alpha by the number of tested candidates.
    pub bonferroni: bool,
    /// Attach metric bundles to every neighborhood, not just critical ones.
    pub full_metrics: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mode: EvalMode::Prediction,
            alpha: 0.05,
            top_k: 10,
            threshold: 3.5,
            bonferroni: false,
            full_metrics: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha {} must be in (0, 1)",
                self.alpha
            )));
        }
        if self.top_k == 0 {
            return Err(Error::InvalidArgument("top_k must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of evaluating one `(N, D')` pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeighborhoodEvaluation {
    pub neighborhood_id: u64,
    pub anchor_user: u64,
    pub members: Vec<u64>,
    pub n_test_interactions: usize,
    /// Mean loss on the neighborhood (squared error or per-user precision).
    pub loss_n: f64,
    /// Mean loss on the complement.
    pub loss_dprime: f64,
    /// Excess loss of N over D' in the mode's "worse" direction; positive
    /// means the neighborhood under-performs.
    pub diff: f64,
    /// Passed the positive-difference filter.
    pub candidate: bool,
    /// Welch test outcome; absent when either side has fewer than 2 samples.
    pub welch: Option<WelchResult>,
    pub critical: bool,
    pub metrics_n: Option<MetricBundle>,
    pub metrics_dprime: Option<MetricBundle>,
    /// Prediction-mode annotation: neighborhood metrics exceed the observed
    /// critical-zone bands.
    pub in_critical_zone: Option<bool>,
}

/// Full evaluation report for one model on one neighborhood universe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalReport {
    pub schema_version: u32,
    pub mode: EvalMode,
    pub model_name: String,
    pub similarity: SimilarityConfig,
    pub alpha: f64,
    pub bonferroni: bool,
    pub n_neighborhoods: usize,
    pub n_candidates: usize,
    pub n_critical: usize,
    /// `n_critical / n_neighborhoods` (0 for an empty universe).
    pub critical_fraction: f64,
    /// Neighborhoods dropped because their complement had no test data.
    pub skipped_empty_complement: usize,
    pub evaluations: Vec<NeighborhoodEvaluation>,
}

impl CriticalReport {
    pub fn critical_ids(&self) -> HashSet<u64> {
        self.evaluations
            .iter()
            .filter(|e| e.critical)
            .map(|e| e.neighborhood_id)
            .collect()
    }

    pub fn universe_ids(&self) -> Vec<u64> {
        self.evaluations.iter().map(|e| e.neighborhood_id).collect()
    }
}

/// Per-sample losses over the whole test split, computed once and sliced
/// per neighborhood afterwards.
pub struct LossCache {
    mode: EvalMode,
    /// Prediction mode: squared error per test interaction (test order).
    per_interaction: Vec<f64>,
    /// Prediction samples for metric bundles (test order).
    samples: Vec<PredictionSample>,
    /// Ranking mode: per-user metrics, indexed by raw user id.
    per_user: HashMap<u64, RankingUserMetrics>,
    top_k: usize,
}

impl LossCache {
    pub fn build(
        model: &dyn Recommender,
        train: &RatingDataset,
        test: &RatingDataset,
        cfg: &EvalConfig,
    ) -> Self {
        match cfg.mode {
            EvalMode::Prediction => {
                let samples = metrics::prediction_samples(model, test.interactions());
                let per_interaction = samples
                    .iter()
                    .map(|s| (s.truth - s.predicted).powi(2))
                    .collect();
                Self {
                    mode: cfg.mode,
                    per_interaction,
                    samples,
                    per_user: HashMap::new(),
                    top_k: cfg.top_k,
                }
            }
            EvalMode::Ranking => {
                let rows =
                    metrics::ranking_user_metrics(model, train, test, cfg.top_k, cfg.threshold);
                Self {
                    mode: cfg.mode,
                    per_interaction: Vec::new(),
                    samples: Vec::new(),
                    per_user: rows.into_iter().map(|m| (m.user, m)).collect(),
                    top_k: cfg.top_k,
                }
            }
        }
    }

    /// Split the cached per-sample losses into (N, D') sides.
    fn split_samples(&self, nbhd: &Neighborhood, test: &RatingDataset) -> (Vec<f64>, Vec<f64>) {
        match self.mode {
            EvalMode::Prediction => {
                let mut in_n = vec![false; self.per_interaction.len()];
                for &pos in &nbhd.test_interactions {
                    in_n[pos as usize] = true;
                }
                let mut n_side = Vec::with_capacity(nbhd.test_interactions.len());
                let mut d_side =
                    Vec::with_capacity(self.per_interaction.len() - nbhd.test_interactions.len());
                for (pos, &loss) in self.per_interaction.iter().enumerate() {
                    if in_n[pos] {
                        n_side.push(loss);
                    } else {
                        d_side.push(loss);
                    }
                }
                (n_side, d_side)
            }
            EvalMode::Ranking => {
                let members: HashSet<u64> = nbhd.members.iter().copied().collect();
                let mut n_side = Vec::new();
                let mut d_side = Vec::new();
                // Iterate users in dense test order for determinism.
                for &user in test.user_ids() {
                    if let Some(m) = self.per_user.get(&user) {
                        if members.contains(&user) {
                            n_side.push(m.precision);
                        } else {
                            d_side.push(m.precision);
                        }
                    }
                }
                (n_side, d_side)
            }
        }
    }

    fn bundles(
        &self,
        nbhd: &Neighborhood,
        test: &RatingDataset,
    ) -> (Option<MetricBundle>, Option<MetricBundle>) {
        match self.mode {
            EvalMode::Prediction => {
                let mut in_n = vec![false; self.samples.len()];
                for &pos in &nbhd.test_interactions {
                    in_n[pos as usize] = true;
                }
                let (mut n_side, mut d_side) = (Vec::new(), Vec::new());
                for (pos, s) in self.samples.iter().enumerate() {
                    if in_n[pos] {
                        n_side.push(*s);
                    } else {
                        d_side.push(*s);
                    }
                }
                (
                    metrics::prediction_bundle(&n_side).ok(),
                    metrics::prediction_bundle(&d_side).ok(),
                )
            }
            EvalMode::Ranking => {
                let members: HashSet<u64> = nbhd.members.iter().copied().collect();
                let (mut n_side, mut d_side) = (Vec::new(), Vec::new());
                for &user in test.user_ids() {
                    if let Some(m) = self.per_user.get(&user) {
                        if members.contains(&user) {
                            n_side.push(*m);
                        } else {
                            d_side.push(*m);
                        }
                    }
                }
                (
                    metrics::ranking_bundle(&n_side, self.top_k).ok(),
                    metrics::ranking_bundle(&d_side, self.top_k).ok(),
                )
            }
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean loss of a neighborhood and its complement. Both sides are averaged
/// so the differently sized populations are comparable.
///
/// This builds a fresh [`LossCache`]; batch callers should build the cache
/// once and use [`neighborhood_loss_cached`].
pub fn neighborhood_loss(
    model: &dyn Recommender,
    nbhd: &Neighborhood,
    train: &RatingDataset,
    test: &RatingDataset,
    cfg: &EvalConfig,
) -> Result<(f64, f64)> {
    let cache = LossCache::build(model, train, test, cfg);
    neighborhood_loss_cached(&cache, nbhd, test)
}

/// As [`neighborhood_loss`], against a prebuilt cache.
pub fn neighborhood_loss_cached(
    cache: &LossCache,
    nbhd: &Neighborhood,
    test: &RatingDataset,
) -> Result<(f64, f64)> {
    let (n_side, d_side) = cache.split_samples(nbhd, test);
    if n_side.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "neighborhood {:x} induces no loss samples",
            nbhd.id
        )));
    }
    if d_side.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "neighborhood {:x} has an empty complement",
            nbhd.id
        )));
    }
    Ok((mean(&n_side), mean(&d_side)))
}

/// Positive-difference filter: a neighborhood is a candidate when its loss
/// is on the worse side of the complement's. For squared-error losses worse
/// means higher, for precision it means lower (the comparison flips).
pub fn candidate_filter(loss_n: f64, loss_dprime: f64, mode: EvalMode) -> bool {
    match mode {
        EvalMode::Prediction => loss_n - loss_dprime > 0.0,
        EvalMode::Ranking => loss_dprime - loss_n > 0.0,
    }
}

fn zone_annotation(mode: EvalMode, bundle: Option<&MetricBundle>) -> Option<bool> {
    match (mode, bundle) {
        (EvalMode::Prediction, Some(MetricBundle::Prediction { mse, mae, rmse, .. })) => {
            Some(*mse > CRITICAL_ZONE_MSE || *mae > CRITICAL_ZONE_MAE || *rmse > CRITICAL_ZONE_RMSE)
        }
        _ => None,
    }
}

/// Evaluate every neighborhood: loss pair, candidate filter, Welch test,
/// critical flag and (for critical rows, or all rows with `full_metrics`)
/// metric bundles. Output is ordered by neighborhood id and independent of
/// the rayon schedule.
pub fn evaluate_all(
    model: &dyn Recommender,
    neighborhoods: &[Neighborhood],
    train: &RatingDataset,
    test: &RatingDataset,
    similarity: &SimilarityConfig,
    cfg: &EvalConfig,
) -> Result<CriticalReport> {
    cfg.validate()?;
    let cache = LossCache::build(model, train, test, cfg);

    struct Partial {
        loss_n: f64,
        loss_dprime: f64,
        n_samples: usize,
        d_samples: usize,
        welch: Option<WelchResult>,
        candidate: bool,
    }

    let partials: Vec<Option<Partial>> = neighborhoods
        .par_iter()
        .map(|nbhd| {
            let (n_side, d_side) = cache.split_samples(nbhd, test);
            if n_side.is_empty() || d_side.is_empty() {
                return None; // skipped: empty complement (or no samples)
            }
            let (loss_n, loss_dprime) = (mean(&n_side), mean(&d_side));
            let candidate = candidate_filter(loss_n, loss_dprime, cfg.mode);
            let alternative = match cfg.mode {
                EvalMode::Prediction => Alternative::AGreater,
                EvalMode::Ranking => Alternative::ALess,
            };
            let welch = welch_one_sided(&n_side, &d_side, alternative).ok();
            Some(Partial {
                loss_n,
                loss_dprime,
                n_samples: n_side.len(),
                d_samples: d_side.len(),
                welch,
                candidate,
            })
        })
        .collect();

    let skipped = partials.iter().filter(|p| p.is_none()).count();
    let n_candidates = partials
        .iter()
        .flatten()
        .filter(|p| p.candidate && p.welch.is_some())
        .count();
    let alpha_eff = if cfg.bonferroni && n_candidates > 0 {
        cfg.alpha / n_candidates as f64
    } else {
        cfg.alpha
    };

    let evaluations: Vec<NeighborhoodEvaluation> = neighborhoods
        .iter()
        .zip(partials)
        .filter_map(|(nbhd, partial)| {
            let partial = partial?;
            let critical =
                partial.candidate && partial.welch.is_some_and(|w| w.p_one_sided < alpha_eff);
            let (metrics_n, metrics_dprime) = if critical || cfg.full_metrics {
                cache.bundles(nbhd, test)
            } else {
                (None, None)
            };
            let diff = match cfg.mode {
                EvalMode::Prediction => partial.loss_n - partial.loss_dprime,
                EvalMode::Ranking => partial.loss_dprime - partial.loss_n,
            };
            debug_assert_eq!(
                partial.n_samples + partial.d_samples,
                match cfg.mode {
                    EvalMode::Prediction => test.n_ratings(),
                    EvalMode::Ranking => cache.per_user.len(),
                }
            );
            Some(NeighborhoodEvaluation {
                neighborhood_id: nbhd.id,
                anchor_user: nbhd.anchor_user,
                members: nbhd.members.clone(),
                n_test_interactions: nbhd.test_interactions.len(),
                loss_n: partial.loss_n,
                loss_dprime: partial.loss_dprime,
                diff,
                candidate: partial.candidate,
                welch: partial.welch,
                critical,
                in_critical_zone: zone_annotation(cfg.mode, metrics_n.as_ref()),
                metrics_n,
                metrics_dprime,
            })
        })
        .collect();

    let mut evaluations = evaluations;
    evaluations.sort_by_key(|e| (e.neighborhood_id, e.anchor_user));
    let n_neighborhoods = evaluations.len();
    let n_critical = evaluations.iter().filter(|e| e.critical).count();
    Ok(CriticalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        mode: cfg.mode,
        model_name: model.name().to_string(),
        similarity: similarity.clone(),
        alpha: cfg.alpha,
        bonferroni: cfg.bonferroni,
        n_neighborhoods,
        n_candidates,
        n_critical,
        critical_fraction: if n_neighborhoods == 0 {
            0.0
        } else {
            n_critical as f64 / n_neighborhoods as f64
        },
        skipped_empty_complement: skipped,
        evaluations,
    })
}

/// How the union of critical neighborhoods splits by the number of
/// algorithms that flagged each one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverlapSlice {
    /// Flagged by exactly this many algorithms.
    pub flagged_by: usize,
    pub count: usize,
    /// Fraction of the union of critical ids.
    pub fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverlapReport {
    pub n_algorithms: usize,
    pub model_names: Vec<String>,
    /// Size of the union of critical neighborhood ids.
    pub union_size: usize,
    /// One slice per multiplicity 1..=n_algorithms; fractions sum to 1.
    pub slices: Vec<OverlapSlice>,
}

impl OverlapReport {
    /// Fraction flagged by exactly `k` algorithms.
    pub fn fraction_flagged_by(&self, k: usize) -> f64 {
        self.slices
            .iter()
            .find(|s| s.flagged_by == k)
            .map_or(0.0, |s| s.fraction)
    }
}

/// Partition the union of critical neighborhood ids from two or more
/// reports by how many algorithms flagged each id. All reports must cover
/// the same neighborhood universe (same split and similarity config).
pub fn overlap_analysis(reports: &[&CriticalReport]) -> Result<OverlapReport> {
    if reports.len() < 2 {
        return Err(Error::InvalidArgument(
            "overlap analysis needs at least 2 reports".into(),
        ));
    }
    let universe = reports[0].universe_ids();
    for r in &reports[1..] {
        if r.universe_ids() != universe {
            return Err(Error::MismatchedUniverse(format!(
                "{} has {} neighborhoods, {} has {}",
                reports[0].model_name,
                universe.len(),
                r.model_name,
                r.universe_ids().len()
            )));
        }
    }
    let mut multiplicity: BTreeMap<u64, usize> = BTreeMap::new();
    for r in reports {
        for id in r.critical_ids() {
            *multiplicity.entry(id).or_insert(0) += 1;
        }
    }
    let union_size = multiplicity.len();
    let slices = (1..=reports.len())
        .map(|k| {
            let count = multiplicity.values().filter(|&&m| m == k).count();
            OverlapSlice {
                flagged_by: k,
                count,
                fraction: if union_size == 0 {
                    0.0
                } else {
                    count as f64 / union_size as f64
                },
            }
        })
        .collect();
    Ok(OverlapReport {
        n_algorithms: reports.len(),
        model_names: reports.iter().map(|r| r.model_name.clone()).collect(),
        union_size,
        slices,
    })
}

/// One `(N, D')` metric value pair for scatter plots.
#[derive(Debug, Clone, Serialize)]
pub struct ScatterRow {
    pub neighborhood_id: u64,
    pub metric: &'static str,
    pub value_n: f64,
    pub value_dprime: f64,
}

/// Five-number box summary with 1.5*IQR whiskers and explicit outliers.
#[derive(Debug, Clone, Serialize)]
pub struct BoxStats {
    pub series: String,
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub iqr: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Plot-ready records extracted from the critical rows of a report.
#[derive(Debug, Clone, Serialize)]
pub struct PlotData {
    pub scatter: Vec<ScatterRow>,
    pub boxes: Vec<BoxStats>,
}

/// Quantile by linear interpolation between order statistics (the
/// `numpy.percentile` default).
fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Box-plot statistics for one series of values.
pub fn box_stats(series: impl Into<String>, values: &[f64]) -> BoxStats {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = sorted
        .iter()
        .copied()
        .filter(|v| (lo_fence..=hi_fence).contains(v))
        .collect();
    let whisker_low = inside.first().copied().unwrap_or(q1);
    let whisker_high = inside.last().copied().unwrap_or(q3);
    let outliers = sorted
        .iter()
        .copied()
        .filter(|v| *v < lo_fence || *v > hi_fence)
        .collect();
    BoxStats {
        series: series.into(),
        n: sorted.len(),
        q1,
        median,
        q3,
        iqr,
        whisker_low,
        whisker_high,
        outliers,
    }
}

fn bundle_metric_values(bundle: &MetricBundle) -> Vec<(&'static str, f64)> {
    match bundle {
        MetricBundle::Prediction { mse, mae, rmse, .. } => {
            vec![("mse", *mse), ("mae", *mae), ("rmse", *rmse)]
        }
        MetricBundle::Ranking {
            precision,
            recall,
            f1,
            ..
        } => {
            vec![("precision", *precision), ("recall", *recall), ("f1", *f1)]
        }
    }
}

/// Scatter rows and box summaries over the critical neighborhoods' metric
/// bundles (one scatter row per metric per critical neighborhood, one box
/// per metric and side).
pub fn emit_plot_data(report: &CriticalReport) -> PlotData {
    let mut scatter = Vec::new();
    let mut by_metric: BTreeMap<&'static str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for eval in report.evaluations.iter().filter(|e| e.critical) {
        let (Some(bn), Some(bd)) = (&eval.metrics_n, &eval.metrics_dprime) else {
            continue;
        };
        let n_vals = bundle_metric_values(bn);
        let d_vals = bundle_metric_values(bd);
        for ((metric, vn), (_, vd)) in n_vals.into_iter().zip(d_vals) {
            scatter.push(ScatterRow {
                neighborhood_id: eval.neighborhood_id,
                metric,
                value_n: vn,
                value_dprime: vd,
            });
            let entry = by_metric.entry(metric).or_default();
            entry.0.push(vn);
            entry.1.push(vd);
        }
    }
    let mut boxes = Vec::new();
    for (metric, (n_vals, d_vals)) in by_metric {
        boxes.push(box_stats(format!("{metric}_n"), &n_vals));
        boxes.push(box_stats(format!("{metric}_dprime"), &d_vals));
    }
    PlotData { scatter, boxes }
}
