//! SlopeOne: per-item-pair average rating deviations.
//!
//! The deviation table is stored as an upper-triangle CSR (only pairs with
//! at least one co-rater, only `j > i`); `dev(j, i)` is recovered by
//! negation, which keeps the table antisymmetric exactly.

use serde::{Deserialize, Serialize};

use crate::dataset::{RatingDataset, RatingScale};

use super::{dense_pos, Recommender};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlopeOneModel {
    pub global_mean: f64,
    /// Per-user train rating means (dense user order).
    pub user_means: Vec<f64>,
    /// Items each user rated in train (dense item indices, sorted).
    pub user_items: Vec<Vec<u32>>,
    /// CSR over items: for row `i`, columns are co-rated items `j > i`.
    pub row_offsets: Vec<usize>,
    pub col_items: Vec<u32>,
    /// Sum over co-raters of `r_ui - r_uj` for the (i, j) pair.
    pub dev_sums: Vec<f64>,
    pub counts: Vec<u32>,
    pub user_ids: Vec<u64>,
    pub item_ids: Vec<u64>,
    pub scale: RatingScale,
}

impl SlopeOneModel {
    pub fn name(&self) -> &'static str {
        "slopeone"
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    /// Average deviation `dev(i, j)` between two dense item indices, if the
    /// pair has at least one co-rater.
    pub fn dev(&self, i: u32, j: u32) -> Option<f64> {
        if i == j {
            return None;
        }
        let (row, col, sign) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
        let range = self.row_offsets[row as usize]..self.row_offsets[row as usize + 1];
        let cols = &self.col_items[range.clone()];
        cols.binary_search(&col).ok().map(|pos| {
            let idx = range.start + pos;
            sign * self.dev_sums[idx] / f64::from(self.counts[idx])
        })
    }

    pub fn score(&self, user: u64, item: u64) -> f64 {
        let Some(u) = dense_pos(&self.user_ids, user) else {
            return self.global_mean;
        };
        let mean_u = self.user_means[u];
        let Some(i) = dense_pos(&self.item_ids, item) else {
            return mean_u;
        };
        let mut sum = 0.0;
        let mut n = 0usize;
        for &j in &self.user_items[u] {
            if let Some(d) = self.dev(i as u32, j) {
                sum += d;
                n += 1;
            }
        }
        if n == 0 {
            mean_u
        } else {
            mean_u + sum / n as f64
        }
    }
}

impl Recommender for SlopeOneModel {
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
        SlopeOneModel::score(self, user, item)
    }
}

/// Build the deviation table in one sweep per item over its raters.
pub fn slopeone_fit(train: &RatingDataset) -> SlopeOneModel {
    let n_users = train.n_users();
    let n_items = train.n_items();

    let mut user_items: Vec<Vec<u32>> = vec![Vec::new(); n_users];
    let mut user_ratings: Vec<Vec<f64>> = vec![Vec::new(); n_users];
    let mut user_means = vec![0.0f64; n_users];
    let mut raters: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_items];
    for u in 0..n_users as u32 {
        let slice = train.user_interactions(u);
        let mut sum = 0.0;
        for r in slice {
            let i = train.item_index(r.item_id).expect("item indexed");
            user_items[u as usize].push(i);
            user_ratings[u as usize].push(r.rating);
            raters[i as usize].push((u, r.rating));
            sum += r.rating;
        }
        user_means[u as usize] = sum / slice.len() as f64;
    }
    let global_mean =
        train.interactions().iter().map(|r| r.rating).sum::<f64>() / train.n_ratings() as f64;

    let mut row_offsets = Vec::with_capacity(n_items + 1);
    let mut col_items: Vec<u32> = Vec::new();
    let mut dev_sums: Vec<f64> = Vec::new();
    let mut counts: Vec<u32> = Vec::new();
    row_offsets.push(0);

    let mut scratch_sum = vec![0.0f64; n_items];
    let mut scratch_cnt = vec![0u32; n_items];
    let mut touched: Vec<u32> = Vec::new();
    for i in 0..n_items as u32 {
        for &(u, r_ui) in &raters[i as usize] {
            let items = &user_items[u as usize];
            let ratings = &user_ratings[u as usize];
            // Items are sorted; only accumulate the upper triangle j > i.
            let start = items.partition_point(|&j| j <= i);
            for (pos, &j) in items[start..].iter().enumerate() {
                let r_uj = ratings[start + pos];
                if scratch_cnt[j as usize] == 0 {
                    touched.push(j);
                }
                scratch_sum[j as usize] += r_ui - r_uj;
                scratch_cnt[j as usize] += 1;
            }
        }
        touched.sort_unstable();
        for &j in &touched {
            col_items.push(j);
            dev_sums.push(scratch_sum[j as usize]);
            counts.push(scratch_cnt[j as usize]);
            scratch_sum[j as usize] = 0.0;
            scratch_cnt[j as usize] = 0;
        }
        touched.clear();
        row_offsets.push(col_items.len());
    }

    SlopeOneModel {
        global_mean,
        user_means,
        user_items,
        row_offsets,
        col_items,
        dev_sums,
        counts,
        user_ids: train.user_ids().to_vec(),
        item_ids: train.item_ids().to_vec(),
        scale: train.scale(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Interaction;

    fn ds(rows: &[(u64, u64, f64)]) -> RatingDataset {
        let rows: Vec<Interaction> = rows
            .iter()
            .map(|&(u, i, r)| Interaction {
                user_id: u,
                item_id: i,
                rating: r,
                timestamp: None,
            })
            .collect();
        RatingDataset::from_interactions(rows, RatingScale::half_stars()).unwrap()
    }

    /// Users A, B, C over items i1, i2 (raw ids 1, 2).
    fn worked_example() -> RatingDataset {
        ds(&[
            (1, 1, 5.0),
            (1, 2, 3.0),
            (2, 1, 3.0),
            (2, 2, 4.0),
            (3, 1, 2.0),
        ])
    }

    #[test]
    fn worked_example_prediction() {
        let m = slopeone_fit(&worked_example());
        // dev(i2, i1) = ((3-5) + (4-3)) / 2 = -0.5; user C mean is 2.
        assert_eq!(m.score(3, 2), 1.5);
        assert_eq!(m.predict(3, 2), 1.5);
    }

    #[test]
    fn deviation_table_is_antisymmetric() {
        let m = slopeone_fit(&worked_example());
        assert_eq!(m.dev(0, 1), Some(0.5)); // dev(i1, i2) = +0.5
        assert_eq!(m.dev(1, 0), Some(-0.5));
        assert_eq!(m.dev(0, 1).unwrap() + m.dev(1, 0).unwrap(), 0.0);
        assert_eq!(m.dev(0, 0), None);
    }

    #[test]
    fn falls_back_to_user_mean_without_corated_items() {
        // User 2 rated only item 9; item 1 is never co-rated with item 9.
        let m = slopeone_fit(&ds(&[(1, 1, 4.0), (1, 2, 2.0), (2, 9, 3.0)]));
        assert_eq!(m.score(2, 1), 3.0);
        // Unknown item for a known user: user mean as well.
        assert_eq!(m.score(2, 777), 3.0);
    }

    #[test]
    fn unknown_user_falls_back_to_global_mean() {
        let m = slopeone_fit(&worked_example());
        let mu = (5.0 + 3.0 + 3.0 + 4.0 + 2.0) / 5.0;
        assert!((m.score(42, 1) - mu).abs() < 1e-12);
    }

    #[test]
    fn antisymmetry_holds_across_a_denser_table() {
        let mut rows = Vec::new();
        for u in 0..15u64 {
            for i in 0..10u64 {
                if (u * 3 + i) % 4 != 0 {
                    rows.push((u, i, 0.5 + ((u + 2 * i) % 10) as f64 * 0.5));
                }
            }
        }
        let m = slopeone_fit(&ds(&rows));
        for i in 0..10u32 {
            for j in 0..10u32 {
                match (m.dev(i, j), m.dev(j, i)) {
                    (Some(a), Some(b)) => assert_eq!(a + b, 0.0, "dev({i},{j})"),
                    (None, None) => {}
                    other => panic!("one-sided deviation {other:?}"),
                }
            }
        }
    }
}
