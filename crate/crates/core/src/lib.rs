//! Neighborhood-based evaluation for recommender systems.
//!
//! The crate slices a rating dataset into overlapping KNN user neighborhoods,
//! evaluates a trained recommender on every neighborhood against the rest of
//! the test data, and flags the neighborhoods whose loss is significantly
//! worse (one-sided Welch's t-test) as *critical*.
//!
//! Pipeline: [`dataset`] loads and splits ratings, [`similarity`] forms the
//! neighborhoods, [`recommenders`] trains the models, [`metrics`] and
//! [`stats`] supply the losses and the significance test, and [`pipeline`]
//! ties everything into [`pipeline::CriticalReport`]s that [`report`] writes
//! to disk.

pub mod dataset;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod recommenders;
pub mod report;
pub mod similarity;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};

/// Derive a per-stage seed from the run seed so that one `--seed` flag
/// drives every random stage independently and reproducibly.
pub fn derive_seed(base: u64, stage: &str) -> u64 {
    // FNV-1a over the stage label, mixed with the base seed (splitmix64).
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = base ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
