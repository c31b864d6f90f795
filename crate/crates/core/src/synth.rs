//! Seeded synthetic rating data with latent user groups, plus helpers for
//! detection experiments: targeted noise injection and an oracle model with
//! a controlled error distribution.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Interaction, RatingDataset, RatingScale};
use crate::error::Result;
use crate::recommenders::Recommender;

/// Shape of a grouped synthetic dataset: users inside a group share an
/// item-preference pattern, so KNN clustering recovers the groups.
#[derive(Debug, Clone)]
pub struct GroupedSpec {
    /// One entry per group: the number of users in it.
    pub group_sizes: Vec<usize>,
    pub n_items: usize,
    /// Probability that a user rates an item.
    pub density: f64,
    /// Per-rating Gaussian noise around the group pattern.
    pub noise_std: f64,
    /// Optional per-group noise overrides (heterogeneous data); falls back
    /// to `noise_std` for missing entries.
    pub noise_std_per_group: Option<Vec<f64>>,
    pub scale: RatingScale,
}

impl Default for GroupedSpec {
    fn default() -> Self {
        Self {
            group_sizes: vec![20; 10],
            n_items: 100,
            density: 0.4,
            noise_std: 0.2,
            noise_std_per_group: None,
            scale: RatingScale::half_stars(),
        }
    }
}

/// Users of group `g` under the contiguous numbering used by
/// [`grouped_dataset`] (raw user ids start at 1).
pub fn group_users(spec: &GroupedSpec, g: usize) -> Vec<u64> {
    let start: usize = spec.group_sizes[..g].iter().sum();
    (start..start + spec.group_sizes[g])
        .map(|u| u as u64 + 1)
        .collect()
}

/// Generate a grouped dataset: each group gets a per-item base pattern
/// drawn uniformly from the middle of the scale, each rating is the pattern
/// value plus Gaussian noise, clamped into the scale.
pub fn grouped_dataset(spec: &GroupedSpec, seed: u64) -> Result<RatingDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = spec.scale.max - spec.scale.min;
    let (pat_lo, pat_hi) = (spec.scale.min + 0.2 * span, spec.scale.max - 0.1 * span);

    let mut rows = Vec::new();
    let mut user = 1u64;
    for (g, &size) in spec.group_sizes.iter().enumerate() {
        let sigma = spec
            .noise_std_per_group
            .as_ref()
            .and_then(|v| v.get(g).copied())
            .unwrap_or(spec.noise_std);
        let noise = Normal::new(0.0, sigma).expect("positive noise_std");
        let pattern: Vec<f64> = (0..spec.n_items)
            .map(|_| rng.gen_range(pat_lo..pat_hi))
            .collect();
        for _ in 0..size {
            for (item, &base) in pattern.iter().enumerate() {
                if rng.gen_bool(spec.density) {
                    let rating = spec.scale.clamp(base + noise.sample(&mut rng));
                    rows.push(Interaction {
                        user_id: user,
                        item_id: item as u64 + 1,
                        rating,
                        timestamp: None,
                    });
                }
            }
            user += 1;
        }
    }
    RatingDataset::from_interactions(rows, spec.scale)
}

/// Add Gaussian noise to the ratings of the listed users, clamped into the
/// scale. Used to plant a badly-served cluster in the test split.
pub fn inject_noise(
    ds: &RatingDataset,
    users: &HashSet<u64>,
    sigma: f64,
    seed: u64,
) -> Result<RatingDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("positive sigma");
    let scale = ds.scale();
    let rows = ds
        .interactions()
        .iter()
        .map(|r| {
            if users.contains(&r.user_id) {
                Interaction {
                    rating: scale.clamp(r.rating + noise.sample(&mut rng)),
                    ..*r
                }
            } else {
                *r
            }
        })
        .collect();
    RatingDataset::from_interactions(rows, scale)
}

/// Test-only style oracle: predicts the true rating plus deterministic
/// pseudo-Gaussian noise of fixed standard deviation, identical for every
/// user. Useful for null-calibration runs where the error distribution must
/// be homogeneous by construction.
pub struct NoisyOracle {
    truth: HashMap<(u64, u64), f64>,
    scale: RatingScale,
    global_mean: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl NoisyOracle {
    /// `reference` should contain every interaction the oracle will be asked
    /// about (typically the pre-split dataset).
    pub fn new(reference: &RatingDataset, sigma: f64, seed: u64) -> Self {
        let truth = reference
            .interactions()
            .iter()
            .map(|r| ((r.user_id, r.item_id), r.rating))
            .collect();
        let global_mean = reference
            .interactions()
            .iter()
            .map(|r| r.rating)
            .sum::<f64>()
            / reference.n_ratings() as f64;
        Self {
            truth,
            scale: reference.scale(),
            global_mean,
            sigma,
            seed,
        }
    }

    fn noise(&self, user: u64, item: u64) -> f64 {
        // Per-pair deterministic draw: hash (seed, user, item) into an RNG.
        let mut h = self.seed ^ 0x51ab_63c1_9e1f_2a77;
        for v in [user, item] {
            h ^= v.wrapping_mul(0x9e37_79b9_7f4a_7c15);
            h = h.rotate_left(23).wrapping_mul(0x0000_0100_0000_01b3);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        Normal::new(0.0, self.sigma)
            .expect("positive sigma")
            .sample(&mut rng)
    }
}

impl Recommender for NoisyOracle {
    fn name(&self) -> &'static str {
        "noisy-oracle"
    }

    fn scale(&self) -> RatingScale {
        self.scale
    }

    fn global_mean(&self) -> f64 {
        self.global_mean
    }

    fn score(&self, user: u64, item: u64) -> f64 {
        let truth = self
            .truth
            .get(&(user, item))
            .copied()
            .unwrap_or(self.global_mean);
        truth + self.noise(user, item)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grouped_dataset_is_deterministic() {
        let spec = GroupedSpec {
            group_sizes: vec![5, 5],
            n_items: 30,
            ..GroupedSpec::default()
        };
        let a = grouped_dataset(&spec, 3).unwrap();
        let b = grouped_dataset(&spec, 3).unwrap();
        assert_eq!(a.to_cache_csv(), b.to_cache_csv());
        assert_eq!(a.n_users(), 10);
    }

    #[test]
    fn group_users_are_contiguous() {
        let spec = GroupedSpec {
            group_sizes: vec![3, 4, 2],
            ..GroupedSpec::default()
        };
        assert_eq!(group_users(&spec, 0), vec![1, 2, 3]);
        assert_eq!(group_users(&spec, 1), vec![4, 5, 6, 7]);
        assert_eq!(group_users(&spec, 2), vec![8, 9]);
    }

    #[test]
    fn injected_noise_touches_only_target_users() {
        let spec = GroupedSpec {
            group_sizes: vec![4, 4],
            n_items: 40,
            ..GroupedSpec::default()
        };
        let ds = grouped_dataset(&spec, 1).unwrap();
        let targets: HashSet<u64> = group_users(&spec, 0).into_iter().collect();
        let noisy = inject_noise(&ds, &targets, 1.5, 7).unwrap();
        let mut changed = 0;
        for (a, b) in ds.interactions().iter().zip(noisy.interactions()) {
            assert_eq!((a.user_id, a.item_id), (b.user_id, b.item_id));
            if targets.contains(&a.user_id) {
                if a.rating != b.rating {
                    changed += 1;
                }
            } else {
                assert_eq!(a.rating, b.rating);
            }
        }
        assert!(changed > 0);
    }

    #[test]
    fn noisy_oracle_is_deterministic_and_centered() {
        let spec = GroupedSpec {
            group_sizes: vec![6],
            n_items: 50,
            ..GroupedSpec::default()
        };
        let ds = grouped_dataset(&spec, 5).unwrap();
        let oracle = NoisyOracle::new(&ds, 0.3, 11);
        let r = &ds.interactions()[0];
        let a = oracle.score(r.user_id, r.item_id);
        let b = oracle.score(r.user_id, r.item_id);
        assert_eq!(a, b);
        // Mean error over all pairs should be near zero.
        let mean_err = ds
            .interactions()
            .iter()
            .map(|r| oracle.score(r.user_id, r.item_id) - r.rating)
            .sum::<f64>()
            / ds.n_ratings() as f64;
        assert!(mean_err.abs() < 0.1, "mean error {mean_err}");
    }
}
