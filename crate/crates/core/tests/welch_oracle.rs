//! Welch t-test against frozen SciPy reference values
//! (tools/gen_stats_oracle.py regenerates the fixtures).

use nbhd_eval::stats::{student_t_upper_tail, welch_one_sided, Alternative};
use serde::Deserialize;

#[derive(Deserialize)]
struct WelchCase {
    a: Vec<f64>,
    b: Vec<f64>,
    t: f64,
    df: f64,
    p_greater: f64,
}

#[derive(Deserialize)]
struct TailCase {
    t: f64,
    df: f64,
    p_upper: f64,
}

fn fixture<T: serde::de::DeserializeOwned>(name: &str) -> Vec<T> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/");
    let text = std::fs::read_to_string(format!("{path}{name}")).expect("fixture exists");
    serde_json::from_str(&text).expect("fixture parses")
}

#[test]
fn welch_matches_reference_on_100_sample_pairs() {
    let cases: Vec<WelchCase> = fixture("welch_cases.json");
    assert_eq!(cases.len(), 100);
    for (idx, case) in cases.iter().enumerate() {
        let r = welch_one_sided(&case.a, &case.b, Alternative::AGreater).unwrap();
        assert!(
            (r.t - case.t).abs() <= 1e-9,
            "case {idx}: t {} vs reference {}",
            r.t,
            case.t
        );
        assert!(
            (r.df - case.df).abs() <= 1e-9 * case.df.max(1.0),
            "case {idx}: df {} vs reference {}",
            r.df,
            case.df
        );
        assert!(
            (r.p_one_sided - case.p_greater).abs() <= 1e-8,
            "case {idx}: p {} vs reference {}",
            r.p_one_sided,
            case.p_greater
        );
    }
}

#[test]
fn welch_antisymmetry_on_reference_pairs() {
    let cases: Vec<WelchCase> = fixture("welch_cases.json");
    for case in &cases {
        let greater = welch_one_sided(&case.a, &case.b, Alternative::AGreater).unwrap();
        let less = welch_one_sided(&case.a, &case.b, Alternative::ALess).unwrap();
        assert!((greater.p_one_sided + less.p_one_sided - 1.0).abs() <= 1e-10);
    }
}

#[test]
fn t_tail_matches_reference_grid() {
    let cases: Vec<TailCase> = fixture("t_tail_cases.json");
    assert!(!cases.is_empty());
    for case in &cases {
        let p = student_t_upper_tail(case.t, case.df).unwrap();
        assert!(
            (p - case.p_upper).abs() <= 1e-10,
            "t={} df={}: {} vs reference {}",
            case.t,
            case.df,
            p,
            case.p_upper
        );
    }
}
