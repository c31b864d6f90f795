//! Accuracy and ranking metrics against brute-force recomputation on random
//! subsets.

use std::collections::HashSet;

use nbhd_eval::metrics::{
    f1_at_k, mae, mse, precision_at_k, recall_at_k, rmse, PredictionSample, RankingSample,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn accuracy_metrics_match_brute_force_on_100_subsets() {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for _ in 0..100 {
        let n = rng.gen_range(1..400);
        let samples: Vec<PredictionSample> = (0..n)
            .map(|_| PredictionSample {
                truth: rng.gen_range(0.5..5.0),
                predicted: rng.gen_range(0.5..5.0),
            })
            .collect();
        // Brute force: explicit loops, sorted accumulation order.
        let mut errs: Vec<f64> = samples.iter().map(|s| s.truth - s.predicted).collect();
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut sq_sum = 0.0;
        let mut abs_sum = 0.0;
        for e in &errs {
            sq_sum += e * e;
            abs_sum += e.abs();
        }
        let brute_mse = sq_sum / n as f64;
        let brute_mae = abs_sum / n as f64;
        assert!((mse(&samples).unwrap() - brute_mse).abs() <= 1e-12);
        assert!((mae(&samples).unwrap() - brute_mae).abs() <= 1e-12);
        assert!((rmse(&samples).unwrap() - brute_mse.sqrt()).abs() <= 1e-12);
        assert!((rmse(&samples).unwrap().powi(2) - mse(&samples).unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn ranking_metrics_match_brute_force_on_100_subsets() {
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    for _ in 0..100 {
        let k = rng.gen_range(1..20usize);
        let n_items = rng.gen_range(5..50u64);
        let mut recommended: Vec<u64> = (0..n_items).collect();
        for i in (1..recommended.len()).rev() {
            let j = rng.gen_range(0..=i);
            recommended.swap(i, j);
        }
        recommended.truncate(k.min(recommended.len()));
        let relevant: HashSet<u64> = (0..n_items).filter(|_| rng.gen_bool(0.3)).collect();
        let sample = RankingSample {
            user: 1,
            recommended: recommended.clone(),
            relevant: relevant.clone(),
        };

        // Brute force with nested loops.
        let mut hits = 0usize;
        for r in &recommended {
            for rel in &relevant {
                if r == rel {
                    hits += 1;
                }
            }
        }
        let p = hits as f64 / recommended.len() as f64;
        let r = hits as f64 / relevant.len().max(1) as f64;
        let f1 = if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        };
        assert!((precision_at_k(&sample) - p).abs() <= 1e-12);
        assert!((recall_at_k(&sample) - r).abs() <= 1e-12);
        assert!((f1_at_k(&sample) - f1).abs() <= 1e-12);
    }
}
