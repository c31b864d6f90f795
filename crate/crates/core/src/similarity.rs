//! User–user similarity measures and overlapping KNN neighborhood
//! construction (the slicing stage of the pipeline).
//!
//! All similarities are computed on the train split only. An undefined
//! similarity (too few common items, or a degenerate vector) is `None` and
//! never contributes an edge; it is not coerced to zero.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::RatingDataset;
use crate::error::{Error, Result};

/// The four supported user-similarity measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMeasure {
    /// Mean squared deviation, `1 / (msd + 1)`.
    Msd,
    /// Raw (uncentered) cosine over common items.
    Cos,
    /// Pearson correlation with means taken over the common items.
    Pcc,
    /// Pearson over baseline-centered residuals, with shrinkage.
    Pbc,
}

impl SimilarityMeasure {
    pub const ALL: [SimilarityMeasure; 4] = [Self::Msd, Self::Cos, Self::Pcc, Self::Pbc];

    pub fn name(self) -> &'static str {
        match self {
            Self::Msd => "msd",
            Self::Cos => "cos",
            Self::Pcc => "pcc",
            Self::Pbc => "pbc",
        }
    }
}

impl std::str::FromStr for SimilarityMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "msd" | "knn1" | "knn-1" => Ok(Self::Msd),
            "cos" | "cosine" | "knn2" | "knn-2" => Ok(Self::Cos),
            "pcc" | "pearson" | "knn3" | "knn-3" => Ok(Self::Pcc),
            "pbc" | "pearson_baseline" | "knn4" | "knn-4" => Ok(Self::Pbc),
            other => Err(Error::InvalidArgument(format!(
                "unknown similarity measure {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for SimilarityMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Configuration of the similarity measure and the neighborhood shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub measure: SimilarityMeasure,
    /// Minimum number of common items for a similarity to be defined.
    pub min_support: usize,
    /// Shrinkage strength for PBC, `(n-1) / (n-1+shrinkage)`.
    pub shrinkage: f64,
    /// Neighbors per anchor user.
    pub k_neighbors: usize,
    /// Neighborhoods inducing fewer test interactions than this are dropped.
    pub min_test_interactions: usize,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            measure: SimilarityMeasure::Pcc,
            min_support: 3,
            shrinkage: 100.0,
            k_neighbors: 40,
            min_test_interactions: 30,
        }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_support < 1 {
            return Err(Error::InvalidArgument("min_support must be >= 1".into()));
        }
        if self.k_neighbors < 1 {
            return Err(Error::InvalidArgument("k_neighbors must be >= 1".into()));
        }
        if self.shrinkage < 0.0 {
            return Err(Error::InvalidArgument("shrinkage must be >= 0".into()));
        }
        Ok(())
    }
}

/// One user's train ratings as `(item_index, rating)`, sorted by item.
pub type UserRatings = Vec<(u32, f64)>;

/// Extract per-user sorted rating vectors (dense user order).
pub fn user_vectors(ds: &RatingDataset) -> Vec<UserRatings> {
    (0..ds.n_users() as u32)
        .map(|u| {
            ds.user_interactions(u)
                .iter()
                .map(|r| (ds.item_index(r.item_id).expect("item indexed"), r.rating))
                .collect()
        })
        .collect()
}

/// Walk two item-sorted rating vectors and hand each common item's rating
/// pair to `visit`.
fn for_common<F: FnMut(u32, f64, f64)>(u: &[(u32, f64)], v: &[(u32, f64)], mut visit: F) {
    let (mut i, mut j) = (0, 0);
    while i < u.len() && j < v.len() {
        match u[i].0.cmp(&v[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                visit(u[i].0, u[i].1, v[j].1);
                i += 1;
                j += 1;
            }
        }
    }
}

/// Pearson correlation over the common items, with the means also taken
/// over the common items. `None` when support is too small or either
/// centered vector has zero norm.
pub fn sim_pcc(u: &[(u32, f64)], v: &[(u32, f64)], min_support: usize) -> Option<f64> {
    let mut n = 0usize;
    let (mut sum_u, mut sum_v) = (0.0, 0.0);
    for_common(u, v, |_, ru, rv| {
        n += 1;
        sum_u += ru;
        sum_v += rv;
    });
    if n < min_support.max(1) {
        return None;
    }
    let (mu, mv) = (sum_u / n as f64, sum_v / n as f64);
    let (mut dot, mut norm_u, mut norm_v) = (0.0, 0.0, 0.0);
    for_common(u, v, |_, ru, rv| {
        let (cu, cv) = (ru - mu, rv - mv);
        dot += cu * cv;
        norm_u += cu * cu;
        norm_v += cv * cv;
    });
    if norm_u <= 0.0 || norm_v <= 0.0 {
        return None;
    }
    Some(dot / (norm_u.sqrt() * norm_v.sqrt()))
}

/// Mean-squared-deviation similarity `1 / (msd + 1)`, in `(0, 1]`.
pub fn sim_msd(u: &[(u32, f64)], v: &[(u32, f64)], min_support: usize) -> Option<f64> {
    let mut n = 0usize;
    let mut sq = 0.0;
    for_common(u, v, |_, ru, rv| {
        n += 1;
        sq += (ru - rv) * (ru - rv);
    });
    if n < min_support.max(1) {
        return None;
    }
    Some(1.0 / (sq / n as f64 + 1.0))
}

/// Raw (uncentered) cosine over common items.
pub fn sim_cos(u: &[(u32, f64)], v: &[(u32, f64)], min_support: usize) -> Option<f64> {
    let mut n = 0usize;
    let (mut dot, mut norm_u, mut norm_v) = (0.0, 0.0, 0.0);
    for_common(u, v, |_, ru, rv| {
        n += 1;
        dot += ru * rv;
        norm_u += ru * ru;
        norm_v += rv * rv;
    });
    if n < min_support.max(1) || norm_u <= 0.0 || norm_v <= 0.0 {
        return None;
    }
    Some(dot / (norm_u.sqrt() * norm_v.sqrt()))
}

/// Global mean plus per-user/per-item additive biases, fitted on train.
/// Lookups for ids outside the fitted range fall back to bias 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineModel {
    pub global_mean: f64,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
}

impl BaselineModel {
    /// Baseline estimate `mu + b_u + b_i`; unseen sides contribute 0.
    pub fn baseline(&self, user: Option<u32>, item: Option<u32>) -> f64 {
        let bu = user
            .and_then(|u| self.user_bias.get(u as usize))
            .copied()
            .unwrap_or(0.0);
        let bi = item
            .and_then(|i| self.item_bias.get(i as usize))
            .copied()
            .unwrap_or(0.0);
        self.global_mean + bu + bi
    }
}

/// Fit baseline biases by alternating least-squares sweeps:
/// `b_i = sum(r - mu - b_u) / (reg_item + |R_i|)` then
/// `b_u = sum(r - mu - b_i) / (reg_user + |R_u|)`.
pub fn fit_baselines(
    train: &RatingDataset,
    n_sweeps: usize,
    reg_user: f64,
    reg_item: f64,
) -> BaselineModel {
    let n_users = train.n_users();
    let n_items = train.n_items();
    let mu = train.interactions().iter().map(|r| r.rating).sum::<f64>() / train.n_ratings() as f64;

    let rows: Vec<(u32, u32, f64)> = train
        .interactions()
        .iter()
        .map(|r| {
            (
                train.user_index(r.user_id).expect("user indexed"),
                train.item_index(r.item_id).expect("item indexed"),
                r.rating,
            )
        })
        .collect();

    let mut user_count = vec![0.0f64; n_users];
    let mut item_count = vec![0.0f64; n_items];
    for &(u, i, _) in &rows {
        user_count[u as usize] += 1.0;
        item_count[i as usize] += 1.0;
    }

    let mut bu = vec![0.0f64; n_users];
    let mut bi = vec![0.0f64; n_items];
    for _ in 0..n_sweeps {
        let mut acc = vec![0.0f64; n_items];
        for &(u, i, r) in &rows {
            acc[i as usize] += r - mu - bu[u as usize];
        }
        for i in 0..n_items {
            bi[i] = acc[i] / (reg_item + item_count[i]);
        }
        let mut acc = vec![0.0f64; n_users];
        for &(u, i, r) in &rows {
            acc[u as usize] += r - mu - bi[i as usize];
        }
        for u in 0..n_users {
            bu[u] = acc[u] / (reg_user + user_count[u]);
        }
    }
    BaselineModel {
        global_mean: mu,
        user_bias: bu,
        item_bias: bi,
    }
}

/// Pearson correlation over baseline-centered residuals, shrunk by
/// `(n-1) / (n-1+shrinkage)`.
pub fn sim_pbc(
    u_idx: u32,
    v_idx: u32,
    u: &[(u32, f64)],
    v: &[(u32, f64)],
    baselines: &BaselineModel,
    shrinkage: f64,
    min_support: usize,
) -> Option<f64> {
    let mut n = 0usize;
    let (mut dot, mut norm_u, mut norm_v) = (0.0, 0.0, 0.0);
    for_common(u, v, |item, ru, rv| {
        n += 1;
        let cu = ru - baselines.baseline(Some(u_idx), Some(item));
        let cv = rv - baselines.baseline(Some(v_idx), Some(item));
        dot += cu * cv;
        norm_u += cu * cu;
        norm_v += cv * cv;
    });
    if n < min_support.max(1) || norm_u <= 0.0 || norm_v <= 0.0 {
        return None;
    }
    let denom = n as f64 - 1.0 + shrinkage;
    if denom <= 0.0 {
        return None;
    }
    let shrink = (n as f64 - 1.0) / denom;
    Some(shrink * dot / (norm_u.sqrt() * norm_v.sqrt()))
}

/// An anchor-centered, possibly overlapping user group together with the
/// test interactions its members induce.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    /// Stable hash of the sorted member set; identical member sets share
    /// an id regardless of anchor or run.
    pub id: u64,
    /// Raw id of the anchor user (lowest anchor when sets collide).
    pub anchor_user: u64,
    /// Sorted raw ids, anchor included.
    pub members: Vec<u64>,
    /// Positions into the test dataset's interaction list.
    pub test_interactions: Vec<u32>,
}

/// FNV-1a over the sorted member ids; stable across runs and platforms.
pub fn member_set_id(members: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for m in members {
        for b in m.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Dispatch a single similarity computation for the configured measure.
fn similarity(
    cfg: &SimilarityConfig,
    baselines: Option<&BaselineModel>,
    u_idx: u32,
    v_idx: u32,
    u: &[(u32, f64)],
    v: &[(u32, f64)],
) -> Option<f64> {
    let sim = match cfg.measure {
        SimilarityMeasure::Msd => sim_msd(u, v, cfg.min_support),
        SimilarityMeasure::Cos => sim_cos(u, v, cfg.min_support),
        SimilarityMeasure::Pcc => sim_pcc(u, v, cfg.min_support),
        SimilarityMeasure::Pbc => sim_pbc(
            u_idx,
            v_idx,
            u,
            v,
            baselines.expect("baselines fitted for pbc"),
            cfg.shrinkage,
            cfg.min_support,
        ),
    };
    sim.filter(|s| s.is_finite())
}

/// Form one candidate neighborhood per anchor user (anchor plus its
/// `k_neighbors` most similar users), deduplicate identical member sets,
/// attach induced test interactions and drop neighborhoods with fewer than
/// `min_test_interactions` of them. Output is sorted by neighborhood id.
pub fn build_neighborhoods(
    train: &RatingDataset,
    test: &RatingDataset,
    cfg: &SimilarityConfig,
) -> Result<Vec<Neighborhood>> {
    cfg.validate()?;
    let vectors = user_vectors(train);
    let baselines = match cfg.measure {
        SimilarityMeasure::Pbc => Some(fit_baselines(train, 10, 15.0, 10.0)),
        _ => None,
    };
    let user_ids = train.user_ids();
    let n_users = train.n_users();

    let candidate_members: Vec<Option<Vec<u64>>> = (0..n_users as u32)
        .into_par_iter()
        .map(|anchor| {
            let mut scored: Vec<(f64, u64)> = Vec::new();
            for other in 0..n_users as u32 {
                if other == anchor {
                    continue;
                }
                if let Some(sim) = similarity(
                    cfg,
                    baselines.as_ref(),
                    anchor,
                    other,
                    &vectors[anchor as usize],
                    &vectors[other as usize],
                ) {
                    scored.push((sim, user_ids[other as usize]));
                }
            }
            if scored.is_empty() {
                return None;
            }
            // Highest similarity first; ties broken by ascending user id.
            scored.sort_unstable_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .expect("finite sims")
                    .then(a.1.cmp(&b.1))
            });
            scored.truncate(cfg.k_neighbors);
            let mut members: Vec<u64> = scored.into_iter().map(|(_, raw)| raw).collect();
            members.push(user_ids[anchor as usize]);
            members.sort_unstable();
            Some(members)
        })
        .collect();

    // Deduplicate identical member sets; the first (lowest-id) anchor wins.
    let mut unique: BTreeMap<Vec<u64>, u64> = BTreeMap::new();
    for (anchor, members) in candidate_members.into_iter().enumerate() {
        if let Some(members) = members {
            unique.entry(members).or_insert(user_ids[anchor]);
        }
    }

    let mut out: Vec<Neighborhood> = unique
        .into_iter()
        .filter_map(|(members, anchor_user)| {
            let mut test_interactions: Vec<u32> = Vec::new();
            for &member in &members {
                if let Some(u) = test.user_index(member) {
                    test_interactions.extend(test.user_interaction_range(u).map(|p| p as u32));
                }
            }
            if test_interactions.len() < cfg.min_test_interactions {
                return None;
            }
            test_interactions.sort_unstable();
            Some(Neighborhood {
                id: member_set_id(&members),
                anchor_user,
                members,
                test_interactions,
            })
        })
        .collect();
    out.sort_unstable_by_key(|n| (n.id, n.anchor_user));
    Ok(out)
}

/// Write the full pairwise similarity matrix as CSV triples
/// `user_a,user_b,sim` with `user_a < user_b`, ordered by `(user_a, user_b)`.
/// Undefined similarities are omitted.
pub fn write_similarity_csv(
    train: &RatingDataset,
    cfg: &SimilarityConfig,
    path: &Path,
) -> Result<()> {
    cfg.validate()?;
    let vectors = user_vectors(train);
    let baselines = match cfg.measure {
        SimilarityMeasure::Pbc => Some(fit_baselines(train, 10, 15.0, 10.0)),
        _ => None,
    };
    let user_ids = train.user_ids();
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?);
    let write = |file: &mut dyn Write, s: String| -> Result<()> {
        file.write_all(s.as_bytes()).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    };
    write(&mut file, "user_a,user_b,sim\n".to_string())?;
    for u in 0..train.n_users() as u32 {
        for v in (u + 1)..train.n_users() as u32 {
            if let Some(sim) = similarity(
                cfg,
                baselines.as_ref(),
                u,
                v,
                &vectors[u as usize],
                &vectors[v as usize],
            ) {
                write(
                    &mut file,
                    format!(
                        "{},{},{}\n",
                        user_ids[u as usize], user_ids[v as usize], sim
                    ),
                )?;
            }
        }
    }
    file.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Read a similarity CSV written by [`write_similarity_csv`].
pub fn read_similarity_csv(path: &Path) -> Result<Vec<(u64, u64, f64)>> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = |message: &str| Error::Parse {
            path: path.to_path_buf(),
            line: idx as u64 + 1,
            message: message.to_string(),
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(bad("expected user_a,user_b,sim"));
        }
        let a: u64 = fields[0].parse().map_err(|_| bad("bad user_a"))?;
        let b: u64 = fields[1].parse().map_err(|_| bad("bad user_b"))?;
        let sim: f64 = fields[2].parse().map_err(|_| bad("bad sim"))?;
        out.push((a, b, sim));
    }
    Ok(out)
}
