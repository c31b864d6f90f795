//! Latent-factor models: SVD, SVD++, NMF and BPR, all trained from scratch
//! with seeded, single-threaded (and therefore bit-reproducible) loops.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::dataset::{RatingDataset, RatingScale};
use crate::error::{Error, Result};

use super::{dense_pos, Recommender, TrainConfig};

/// Which factor formula the parameters belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorKind {
    Svd,
    SvdPp,
    Nmf,
    Bpr,
}

/// Trained latent-factor parameters. Factor matrices are row-major flat
/// vectors with `n_factors` stride.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorModel {
    pub kind: FactorKind,
    pub global_mean: f64,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
    pub user_factors: Vec<f64>,
    pub item_factors: Vec<f64>,
    /// Implicit item factors `y_j` (SVD++ only).
    pub implicit_factors: Option<Vec<f64>>,
    /// Per-user `|I_u|^{-1/2} * sum y_j`, precomputed after training.
    pub implicit_profile: Option<Vec<f64>>,
    pub n_factors: usize,
    /// Raw ids in dense order (ascending), shared lookup for all vectors.
    pub user_ids: Vec<u64>,
    pub item_ids: Vec<u64>,
    pub scale: RatingScale,
    /// Training objective after each epoch (regularized squared error for
    /// the rating models, the BPR posterior objective for BPR).
    pub objective_history: Vec<f64>,
}

impl FactorModel {
    pub fn name(&self) -> &'static str {
        match self.kind {
            FactorKind::Svd => "svd",
            FactorKind::SvdPp => "svdpp",
            FactorKind::Nmf => "nmf",
            FactorKind::Bpr => "bpr",
        }
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    fn dot_with_profile(&self, u: usize, i: usize) -> f64 {
        let f = self.n_factors;
        let pu = &self.user_factors[u * f..(u + 1) * f];
        let qi = &self.item_factors[i * f..(i + 1) * f];
        match (self.kind, &self.implicit_profile) {
            (FactorKind::SvdPp, Some(profile)) => {
                let prof = &profile[u * f..(u + 1) * f];
                (0..f).map(|k| qi[k] * (pu[k] + prof[k])).sum()
            }
            _ => (0..f).map(|k| qi[k] * pu[k]).sum(),
        }
    }

    pub fn score(&self, user: u64, item: u64) -> f64 {
        let u = dense_pos(&self.user_ids, user);
        let i = dense_pos(&self.item_ids, item);
        match (u, i) {
            (Some(u), Some(i)) => match self.kind {
                FactorKind::Svd | FactorKind::SvdPp => {
                    self.global_mean
                        + self.user_bias[u]
                        + self.item_bias[i]
                        + self.dot_with_profile(u, i)
                }
                FactorKind::Nmf => self.dot_with_profile(u, i),
                FactorKind::Bpr => self.item_bias[i] + self.dot_with_profile(u, i),
            },
            (None, Some(i)) => self.global_mean + self.item_bias[i],
            (Some(u), None) => self.global_mean + self.user_bias[u],
            (None, None) => self.global_mean,
        }
    }
}

impl Recommender for FactorModel {
    fn name(&self) -> &'static str {
        self.name()
    }

    fn scale(&self) -> RatingScale {
        self.scale
    }

    fn global_mean(&self) -> f64 {
        self.global_mean
    }

    fn score(&self, user: u64, item: u64) -> f64 {
        FactorModel::score(self, user, item)
    }
}

/// Dense training triples plus the id tables.
struct TrainView {
    rows: Vec<(u32, u32, f64)>,
    n_users: usize,
    n_items: usize,
    global_mean: f64,
    user_ids: Vec<u64>,
    item_ids: Vec<u64>,
    scale: RatingScale,
}

fn train_view(train: &RatingDataset) -> TrainView {
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
    let global_mean = rows.iter().map(|r| r.2).sum::<f64>() / rows.len() as f64;
    TrainView {
        rows,
        n_users: train.n_users(),
        n_items: train.n_items(),
        global_mean,
        user_ids: train.user_ids().to_vec(),
        item_ids: train.item_ids().to_vec(),
        scale: train.scale(),
    }
}

fn shuffled_order(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

fn check_finite(model: &'static str, epoch: usize, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { model, epoch })
    }
}

fn sq_norm(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum()
}

/// Funk-style biased matrix factorization trained by SGD.
pub fn svd_fit(train: &RatingDataset, cfg: &TrainConfig) -> Result<FactorModel> {
    cfg.validate()?;
    let view = train_view(train);
    let f = cfg.n_factors;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.init_std).expect("positive init_std");
    let mut p: Vec<f64> = (0..view.n_users * f)
        .map(|_| normal.sample(&mut rng))
        .collect();
    let mut q: Vec<f64> = (0..view.n_items * f)
        .map(|_| normal.sample(&mut rng))
        .collect();
    let mut bu = vec![0.0f64; view.n_users];
    let mut bi = vec![0.0f64; view.n_items];
    let order = shuffled_order(view.rows.len(), &mut rng);
    let (lr, reg) = (cfg.learning_rate, cfg.regularization);

    let mut history = Vec::with_capacity(cfg.n_epochs);
    for epoch in 0..cfg.n_epochs {
        for &idx in &order {
            let (u, i, r) = view.rows[idx];
            let (uo, io) = (u as usize * f, i as usize * f);
            let mut dot = 0.0;
            for k in 0..f {
                dot += p[uo + k] * q[io + k];
            }
            let err = r - (view.global_mean + bu[u as usize] + bi[i as usize] + dot);
            bu[u as usize] += lr * (err - reg * bu[u as usize]);
            bi[i as usize] += lr * (err - reg * bi[i as usize]);
            for k in 0..f {
                let (puf, qif) = (p[uo + k], q[io + k]);
                p[uo + k] += lr * (err * qif - reg * puf);
                q[io + k] += lr * (err * puf - reg * qif);
            }
        }
        let mut sse = 0.0;
        for &(u, i, r) in &view.rows {
            let (uo, io) = (u as usize * f, i as usize * f);
            let mut dot = 0.0;
            for k in 0..f {
                dot += p[uo + k] * q[io + k];
            }
            let err = r - (view.global_mean + bu[u as usize] + bi[i as usize] + dot);
            sse += err * err;
        }
        let objective = sse + reg * (sq_norm(&p) + sq_norm(&q) + sq_norm(&bu) + sq_norm(&bi));
        check_finite("svd", epoch, objective)?;
        history.push(objective);
    }

    Ok(FactorModel {
        kind: FactorKind::Svd,
        global_mean: view.global_mean,
        user_bias: bu,
        item_bias: bi,
        user_factors: p,
        item_factors: q,
        implicit_factors: None,
        implicit_profile: None,
        n_factors: f,
        user_ids: view.user_ids,
        item_ids: view.item_ids,
        scale: view.scale,
        objective_history: history,
    })
}

/// SVD++ adds per-user implicit feedback from the rated-item set:
/// `r_hat = mu + b_u + b_i + q_i . (p_u + |I_u|^{-1/2} sum_{j in I_u} y_j)`.
pub fn svdpp_fit(train: &RatingDataset, cfg: &TrainConfig) -> Result<FactorModel> {
    cfg.validate()?;
    let view = train_view(train);
    let f = cfg.n_factors;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.init_std).expect("positive init_std");
    let mut p: Vec<f64> = (0..view.n_users * f)
        .map(|_| normal.sample(&mut rng))
        .collect();
    let mut q: Vec<f64> = (0..view.n_items * f)
        .map(|_| normal.sample(&mut rng))
        .collect();
    let mut y: Vec<f64> = (0..view.n_items * f)
        .map(|_| normal.sample(&mut rng))
        .collect();
    let mut bu = vec![0.0f64; view.n_users];
    let mut bi = vec![0.0f64; view.n_items];
    let order = shuffled_order(view.rows.len(), &mut rng);
    let (lr, reg) = (cfg.learning_rate, cfg.regularization);

    let mut items_of_user: Vec<Vec<u32>> = vec![Vec::new(); view.n_users];
    for &(u, i, _) in &view.rows {
        items_of_user[u as usize].push(i);
    }

    let profile = |y: &[f64], items: &[u32], out: &mut [f64]| {
        out.iter_mut().for_each(|x| *x = 0.0);
        let scale = 1.0 / (items.len() as f64).sqrt();
        for &j in items {
            let jo = j as usize * f;
            for k in 0..f {
                out[k] += y[jo + k];
            }
        }
        out.iter_mut().for_each(|x| *x *= scale);
    };

    let mut impl_fb = vec![0.0f64; f];
    let mut qi_old = vec![0.0f64; f];
    let mut history = Vec::with_capacity(cfg.n_epochs);
    for epoch in 0..cfg.n_epochs {
        for &idx in &order {
            let (u, i, r) = view.rows[idx];
            let (uo, io) = (u as usize * f, i as usize * f);
            let items = &items_of_user[u as usize];
            let inv_sqrt = 1.0 / (items.len() as f64).sqrt();
            profile(&y, items, &mut impl_fb);
            let mut dot = 0.0;
            for k in 0..f {
                dot += q[io + k] * (p[uo + k] + impl_fb[k]);
            }
            let err = r - (view.global_mean + bu[u as usize] + bi[i as usize] + dot);
            bu[u as usize] += lr * (err - reg * bu[u as usize]);
            bi[i as usize] += lr * (err - reg * bi[i as usize]);
            qi_old.copy_from_slice(&q[io..io + f]);
            for k in 0..f {
                let puf = p[uo + k];
                p[uo + k] += lr * (err * qi_old[k] - reg * puf);
                q[io + k] += lr * (err * (puf + impl_fb[k]) - reg * qi_old[k]);
            }
            for &j in items {
                let jo = j as usize * f;
                for k in 0..f {
                    y[jo + k] += lr * (err * inv_sqrt * qi_old[k] - reg * y[jo + k]);
                }
            }
        }
        let mut sse = 0.0;
        let mut prof = vec![0.0f64; view.n_users * f];
        for (u, items) in items_of_user.iter().enumerate() {
            profile(&y, items, &mut prof[u * f..(u + 1) * f]);
        }
        for &(u, i, r) in &view.rows {
            let (uo, io) = (u as usize * f, i as usize * f);
            let mut dot = 0.0;
            for k in 0..f {
                dot += q[io + k] * (p[uo + k] + prof[uo + k]);
            }
            let err = r - (view.global_mean + bu[u as usize] + bi[i as usize] + dot);
            sse += err * err;
        }
        let objective =
            sse + reg * (sq_norm(&p) + sq_norm(&q) + sq_norm(&y) + sq_norm(&bu) + sq_norm(&bi));
        check_finite("svdpp", epoch, objective)?;
        history.push(objective);
    }

    let mut prof = vec![0.0f64; view.n_users * f];
    for (u, items) in items_of_user.iter().enumerate() {
        profile(&y, items, &mut prof[u * f..(u + 1) * f]);
    }

    Ok(FactorModel {
        kind: FactorKind::SvdPp,
        global_mean: view.global_mean,
        user_bias: bu,
        item_bias: bi,
        user_factors: p,
        item_factors: q,
        implicit_factors: Some(y),
        implicit_profile: Some(prof),
        n_factors: f,
        user_ids: view.user_ids,
        item_ids: view.item_ids,
        scale: view.scale,
        objective_history: history,
    })
}

/// Non-negative matrix factorization with multiplicative per-factor updates
/// (numerator/denominator accumulators); positivity of the init plus
/// non-negative ratings keep every factor entry non-negative.
pub fn nmf_fit(train: &RatingDataset, cfg: &TrainConfig) -> Result<FactorModel> {
    cfg.validate()?;
    let view = train_view(train);
    if view.scale.min < 0.0 {
        return Err(Error::InvalidArgument(
            "nmf requires a non-negative rating scale".into(),
        ));
    }
    let f = cfg.n_factors;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let uniform = Uniform::new(cfg.init_low, cfg.init_high);
    let mut p: Vec<f64> = (0..view.n_users * f)
        .map(|_| uniform.sample(&mut rng))
        .collect();
    let mut q: Vec<f64> = (0..view.n_items * f)
        .map(|_| uniform.sample(&mut rng))
        .collect();
    let reg = cfg.regularization;

    let mut user_count = vec![0.0f64; view.n_users];
    let mut item_count = vec![0.0f64; view.n_items];
    for &(u, i, _) in &view.rows {
        user_count[u as usize] += 1.0;
        item_count[i as usize] += 1.0;
    }

    let mut history = Vec::with_capacity(cfg.n_epochs);
    for epoch in 0..cfg.n_epochs {
        // Alternate the two multiplicative updates: user factors against the
        // current item factors, then item factors against the fresh user
        // factors. Updating both sides from the same estimates oscillates
        // instead of converging.
        let mut user_num = vec![0.0f64; view.n_users * f];
        let mut user_denom = vec![0.0f64; view.n_users * f];
        for &(u, i, r) in &view.rows {
            let (uo, io) = (u as usize * f, i as usize * f);
            let mut est = 0.0;
            for k in 0..f {
                est += p[uo + k] * q[io + k];
            }
            for k in 0..f {
                user_num[uo + k] += q[io + k] * r;
                user_denom[uo + k] += q[io + k] * est;
            }
        }
        for (u, &count) in user_count.iter().enumerate() {
            for k in 0..f {
                let idx = u * f + k;
                let denom = user_denom[idx] + count * reg * p[idx];
                if denom > 0.0 {
                    p[idx] *= user_num[idx] / denom;
                }
            }
        }
        let mut item_num = vec![0.0f64; view.n_items * f];
        let mut item_denom = vec![0.0f64; view.n_items * f];
        for &(u, i, r) in &view.rows {
            let (uo, io) = (u as usize * f, i as usize * f);
            let mut est = 0.0;
            for k in 0..f {
                est += p[uo + k] * q[io + k];
            }
            for k in 0..f {
                item_num[io + k] += p[uo + k] * r;
                item_denom[io + k] += p[uo + k] * est;
            }
        }
        for (i, &count) in item_count.iter().enumerate() {
            for k in 0..f {
                let idx = i * f + k;
                let denom = item_denom[idx] + count * reg * q[idx];
                if denom > 0.0 {
                    q[idx] *= item_num[idx] / denom;
                }
            }
        }
        let mut sse = 0.0;
        for &(u, i, r) in &view.rows {
            let (uo, io) = (u as usize * f, i as usize * f);
            let mut est = 0.0;
            for k in 0..f {
                est += p[uo + k] * q[io + k];
            }
            let err = r - est;
            sse += err * err;
        }
        let objective = sse + reg * (sq_norm(&p) + sq_norm(&q));
        check_finite("nmf", epoch, objective)?;
        history.push(objective);
    }

    Ok(FactorModel {
        kind: FactorKind::Nmf,
        global_mean: view.global_mean,
        user_bias: vec![0.0; view.n_users],
        item_bias: vec![0.0; view.n_items],
        user_factors: p,
        item_factors: q,
        implicit_factors: None,
        implicit_profile: None,
        n_factors: f,
        user_ids: view.user_ids,
        item_ids: view.item_ids,
        scale: view.scale,
        objective_history: history,
    })
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(sigmoid(x)), stable for large |x|.
fn ln_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Bayesian personalized ranking over (user, positive, sampled negative)
/// triples. Every rated item counts as a positive; negatives are drawn
/// uniformly from the user's unrated items. Item bias only.
pub fn bpr_fit(train: &RatingDataset, cfg: &TrainConfig) -> Result<FactorModel> {
    cfg.validate()?;
    let view = train_view(train);
    let f = cfg.n_factors;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.init_std).expect("positive init_std");
    let mut p: Vec<f64> = (0..view.n_users * f)
        .map(|_| normal.sample(&mut rng))
        .collect();
    let mut q: Vec<f64> = (0..view.n_items * f)
        .map(|_| normal.sample(&mut rng))
        .collect();
    let mut bi = vec![0.0f64; view.n_items];
    let (lr, reg) = (cfg.learning_rate, cfg.regularization);

    let mut rated: Vec<std::collections::HashSet<u32>> =
        vec![std::collections::HashSet::new(); view.n_users];
    for &(u, i, _) in &view.rows {
        rated[u as usize].insert(i);
    }
    // Users holding every item have no negatives to sample from.
    let saturated: Vec<bool> = rated.iter().map(|s| s.len() >= view.n_items).collect();

    let positives: Vec<(u32, u32)> = view
        .rows
        .iter()
        .filter(|&&(u, _, _)| !saturated[u as usize])
        .map(|&(u, i, _)| (u, i))
        .collect();
    if positives.is_empty() {
        return Err(Error::EmptyDataset(
            "bpr: no user has an unrated item".into(),
        ));
    }
    let mut order: Vec<usize> = (0..positives.len()).collect();
    order.shuffle(&mut rng);

    let mut history = Vec::with_capacity(cfg.n_epochs);
    for epoch in 0..cfg.n_epochs {
        let mut log_likelihood = 0.0;
        for &idx in &order {
            let (u, i) = positives[idx];
            for _ in 0..cfg.bpr_negative_samples {
                let j = loop {
                    let j = rng.gen_range(0..view.n_items as u32);
                    if !rated[u as usize].contains(&j) {
                        break j;
                    }
                };
                let (uo, io, jo) = (u as usize * f, i as usize * f, j as usize * f);
                let mut x = bi[i as usize] - bi[j as usize];
                for k in 0..f {
                    x += p[uo + k] * (q[io + k] - q[jo + k]);
                }
                log_likelihood += ln_sigmoid(x);
                let s = sigmoid(-x);
                for k in 0..f {
                    let (puf, qif, qjf) = (p[uo + k], q[io + k], q[jo + k]);
                    p[uo + k] += lr * (s * (qif - qjf) - reg * puf);
                    q[io + k] += lr * (s * puf - reg * qif);
                    q[jo + k] += lr * (-s * puf - reg * qjf);
                }
                bi[i as usize] += lr * (s - reg * bi[i as usize]);
                bi[j as usize] += lr * (-s - reg * bi[j as usize]);
            }
        }
        let objective = log_likelihood - reg * (sq_norm(&p) + sq_norm(&q) + sq_norm(&bi));
        check_finite("bpr", epoch, objective)?;
        history.push(objective);
    }

    Ok(FactorModel {
        kind: FactorKind::Bpr,
        global_mean: view.global_mean,
        user_bias: vec![0.0; view.n_users],
        item_bias: bi,
        user_factors: p,
        item_factors: q,
        implicit_factors: None,
        implicit_profile: None,
        n_factors: f,
        user_ids: view.user_ids,
        item_ids: view.item_ids,
        scale: view.scale,
        objective_history: history,
    })
}
