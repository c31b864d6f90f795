//! Similarity measures against an independent brute-force implementation
//! built on hash maps and the textbook formulas, plus range/symmetry
//! invariants over random user pairs.

use std::collections::HashMap;

use nbhd_eval::similarity::{
    fit_baselines, sim_cos, sim_msd, sim_pbc, sim_pcc, user_vectors, BaselineModel,
};
use nbhd_eval::synth::{grouped_dataset, GroupedSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod brute {
    use super::*;

    pub fn common(u: &[(u32, f64)], v: &[(u32, f64)]) -> Vec<(u32, f64, f64)> {
        let map: HashMap<u32, f64> = v.iter().copied().collect();
        let mut out: Vec<(u32, f64, f64)> = u
            .iter()
            .filter_map(|&(i, ru)| map.get(&i).map(|&rv| (i, ru, rv)))
            .collect();
        out.sort_by_key(|&(i, _, _)| i);
        out
    }

    pub fn pcc(u: &[(u32, f64)], v: &[(u32, f64)], min_support: usize) -> Option<f64> {
        let c = common(u, v);
        if c.len() < min_support {
            return None;
        }
        let n = c.len() as f64;
        let mu: f64 = c.iter().map(|x| x.1).sum::<f64>() / n;
        let mv: f64 = c.iter().map(|x| x.2).sum::<f64>() / n;
        let num: f64 = c.iter().map(|x| (x.1 - mu) * (x.2 - mv)).sum();
        let du: f64 = c.iter().map(|x| (x.1 - mu).powi(2)).sum::<f64>().sqrt();
        let dv: f64 = c.iter().map(|x| (x.2 - mv).powi(2)).sum::<f64>().sqrt();
        if du == 0.0 || dv == 0.0 {
            None
        } else {
            Some(num / (du * dv))
        }
    }

    pub fn msd(u: &[(u32, f64)], v: &[(u32, f64)], min_support: usize) -> Option<f64> {
        let c = common(u, v);
        if c.len() < min_support {
            return None;
        }
        let msd: f64 = c.iter().map(|x| (x.1 - x.2).powi(2)).sum::<f64>() / c.len() as f64;
        Some(1.0 / (msd + 1.0))
    }

    pub fn cos(u: &[(u32, f64)], v: &[(u32, f64)], min_support: usize) -> Option<f64> {
        let c = common(u, v);
        if c.len() < min_support {
            return None;
        }
        let num: f64 = c.iter().map(|x| x.1 * x.2).sum();
        let du: f64 = c.iter().map(|x| x.1 * x.1).sum::<f64>().sqrt();
        let dv: f64 = c.iter().map(|x| x.2 * x.2).sum::<f64>().sqrt();
        if du == 0.0 || dv == 0.0 {
            None
        } else {
            Some(num / (du * dv))
        }
    }

    pub fn pbc(
        u_idx: u32,
        v_idx: u32,
        u: &[(u32, f64)],
        v: &[(u32, f64)],
        base: &BaselineModel,
        shrinkage: f64,
        min_support: usize,
    ) -> Option<f64> {
        let c = common(u, v);
        if c.len() < min_support {
            return None;
        }
        let centered: Vec<(f64, f64)> = c
            .iter()
            .map(|&(i, ru, rv)| {
                let bu =
                    base.global_mean + base.user_bias[u_idx as usize] + base.item_bias[i as usize];
                let bv =
                    base.global_mean + base.user_bias[v_idx as usize] + base.item_bias[i as usize];
                (ru - bu, rv - bv)
            })
            .collect();
        let num: f64 = centered.iter().map(|x| x.0 * x.1).sum();
        let du: f64 = centered.iter().map(|x| x.0 * x.0).sum::<f64>().sqrt();
        let dv: f64 = centered.iter().map(|x| x.1 * x.1).sum::<f64>().sqrt();
        if du == 0.0 || dv == 0.0 {
            return None;
        }
        let n = c.len() as f64;
        if n - 1.0 + shrinkage <= 0.0 {
            return None;
        }
        Some((n - 1.0) / (n - 1.0 + shrinkage) * num / (du * dv))
    }
}

fn close(a: Option<f64>, b: Option<f64>, tol: f64, what: &str) {
    match (a, b) {
        (None, None) => {}
        (Some(x), Some(y)) => {
            assert!((x - y).abs() <= tol, "{what}: {x} vs {y}");
        }
        other => panic!("{what}: definedness mismatch {other:?}"),
    }
}

#[test]
fn measures_match_brute_force_on_1000_random_pairs() {
    let spec = GroupedSpec {
        group_sizes: vec![12; 5],
        n_items: 80,
        density: 0.3,
        noise_std: 0.8,
        ..GroupedSpec::default()
    };
    let ds = grouped_dataset(&spec, 271).unwrap();
    let vectors = user_vectors(&ds);
    let base = fit_baselines(&ds, 10, 15.0, 10.0);
    let n = ds.n_users() as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..1000 {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        let (uv, vv) = (&vectors[u as usize], &vectors[v as usize]);
        close(sim_pcc(uv, vv, 3), brute::pcc(uv, vv, 3), 1e-10, "pcc");
        close(sim_msd(uv, vv, 3), brute::msd(uv, vv, 3), 1e-10, "msd");
        close(sim_cos(uv, vv, 3), brute::cos(uv, vv, 3), 1e-10, "cos");
        close(
            sim_pbc(u, v, uv, vv, &base, 100.0, 3),
            brute::pbc(u, v, uv, vv, &base, 100.0, 3),
            1e-10,
            "pbc",
        );
    }
}

#[test]
fn range_symmetry_and_self_similarity_invariants() {
    let spec = GroupedSpec {
        group_sizes: vec![10; 4],
        n_items: 50,
        density: 0.4,
        noise_std: 0.5,
        ..GroupedSpec::default()
    };
    let ds = grouped_dataset(&spec, 13).unwrap();
    let vectors = user_vectors(&ds);
    let base = fit_baselines(&ds, 10, 15.0, 10.0);
    let n = ds.n_users() as u32;
    let eps = 1e-12;
    for u in 0..n {
        for v in 0..n {
            let (uv, vv) = (&vectors[u as usize], &vectors[v as usize]);
            if let Some(s) = sim_pcc(uv, vv, 2) {
                assert!((-1.0 - eps..=1.0 + eps).contains(&s), "pcc {s}");
                assert_eq!(Some(s), sim_pcc(vv, uv, 2));
            }
            if let Some(s) = sim_msd(uv, vv, 2) {
                assert!(s > 0.0 && s <= 1.0, "msd {s}");
                assert_eq!(Some(s), sim_msd(vv, uv, 2));
            }
            if let Some(s) = sim_cos(uv, vv, 2) {
                assert!((-1.0 - eps..=1.0 + eps).contains(&s), "cos {s}");
                assert_eq!(Some(s), sim_cos(vv, uv, 2));
            }
            if let Some(s) = sim_pbc(u, v, uv, vv, &base, 100.0, 2) {
                assert!((-1.0 - eps..=1.0 + eps).contains(&s), "pbc {s}");
                assert_eq!(Some(s), sim_pbc(v, u, vv, uv, &base, 100.0, 2));
            }
        }
        // Self-similarity: 1 for MSD and COS always, PCC when non-constant.
        let uv = &vectors[u as usize];
        assert_eq!(sim_msd(uv, uv, 2), Some(1.0));
        assert!((sim_cos(uv, uv, 2).unwrap() - 1.0).abs() <= eps);
        if let Some(s) = sim_pcc(uv, uv, 2) {
            assert!((s - 1.0).abs() <= eps);
        }
    }
}
