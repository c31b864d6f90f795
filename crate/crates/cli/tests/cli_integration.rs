//! End-to-end CLI checks on small synthetic datasets.

use std::path::Path;
use std::process::Command;

use nbhd_eval::dataset::RatingDataset;
use nbhd_eval::synth::{grouped_dataset, GroupedSpec};

const BIN: &str = env!("CARGO_BIN_EXE_nbhd-eval");

fn write_movielens_csv(ds: &RatingDataset, path: &Path) {
    let mut out = String::from("userId,movieId,rating,timestamp\n");
    for r in ds.interactions() {
        out.push_str(&format!("{},{},{},0\n", r.user_id, r.item_id, r.rating));
    }
    std::fs::write(path, out).unwrap();
}

fn synth_csv(dir: &Path, seed: u64) -> std::path::PathBuf {
    let spec = GroupedSpec {
        group_sizes: vec![12; 6],
        n_items: 50,
        ..GroupedSpec::default()
    };
    let ds = grouped_dataset(&spec, seed).unwrap();
    let path = dir.join("ratings.csv");
    write_movielens_csv(&ds, &path);
    path
}

const SMALL_RUN_ARGS: &[&str] = &[
    "--seed",
    "3",
    "--k-neighbors",
    "6",
    "--min-support",
    "2",
    "--min-test-interactions",
    "5",
];

#[test]
fn stats_prints_summary_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_csv(dir.path(), 1);
    let out = Command::new(BIN)
        .args(["stats", "--data"])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("users 72"), "{text}");
    assert!(text.contains("sparsity"), "{text}");

    let out = Command::new(BIN)
        .args(["stats", "--json", "--data"])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n_users"], 72);
    assert!(v["sparsity"].is_f64());
}

#[test]
fn stats_missing_path_fails_on_stderr() {
    let out = Command::new(BIN)
        .args(["stats", "--data", "/definitely/not/here"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn data_dir_env_var_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let sub = dir.path().join("tiny");
    std::fs::create_dir(&sub).unwrap();
    synth_csv(&sub, 2);
    let out = Command::new(BIN)
        .env("NBHD_DATA_DIR", dir.path())
        .args(["stats", "--data", "tiny", "--json"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn evaluate_writes_reports_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_csv(dir.path(), 3);
    let out_dir = dir.path().join("out");
    let out = Command::new(BIN)
        .args(["evaluate", "--data"])
        .arg(&csv)
        .args(["--model", "svd", "--sim", "pcc"])
        .args(SMALL_RUN_ARGS)
        .args(["--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("critical"), "{text}");
    assert!(text.contains("top 10 worst"), "{text}");
    for file in ["report.json", "scatter.csv", "box.csv", "run_config.json"] {
        assert!(out_dir.join(file).is_file(), "missing {file}");
    }
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["model_name"], "svd");
    assert!(report["n_neighborhoods"].as_u64().unwrap() > 0);
}

#[test]
fn evaluate_ranking_mode_reports_ranking_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_csv(dir.path(), 4);
    let out_dir = dir.path().join("out");
    let out = Command::new(BIN)
        .args(["evaluate", "--data"])
        .arg(&csv)
        .args(["--model", "bpr", "--mode", "ranking", "--full"])
        .args(SMALL_RUN_ARGS)
        .args(["--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["mode"], "ranking");
    let first = &report["evaluations"][0];
    assert_eq!(first["metrics_n"]["mode"], "ranking");
    assert!(first["metrics_n"]["precision"].is_f64());
    assert!(first["metrics_n"]["f1"].is_f64());
}

#[test]
fn compare_writes_overlap_with_fractions_summing_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_csv(dir.path(), 5);
    let out_dir = dir.path().join("out");
    let out = Command::new(BIN)
        .args(["compare", "--models", "svd,slopeone,nmf", "--data"])
        .arg(&csv)
        .args(SMALL_RUN_ARGS)
        .args(["--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let overlap: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("overlap.json")).unwrap()).unwrap();
    assert_eq!(overlap["n_algorithms"], 3);
    let slices = overlap["slices"].as_array().unwrap();
    assert_eq!(slices.len(), 3);
    if overlap["union_size"].as_u64().unwrap() > 0 {
        let total: f64 = slices.iter().map(|s| s["fraction"].as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9, "fractions sum to {total}");
    }
    for model in ["svd", "slopeone", "nmf"] {
        assert!(out_dir.join(format!("report_{model}.json")).is_file());
    }
}

#[test]
fn compare_with_two_models_has_two_way_fields_only() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_csv(dir.path(), 6);
    let out_dir = dir.path().join("out");
    let out = Command::new(BIN)
        .args(["compare", "--models", "svd,slopeone", "--data"])
        .arg(&csv)
        .args(SMALL_RUN_ARGS)
        .args(["--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let overlap: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("overlap.json")).unwrap()).unwrap();
    assert_eq!(overlap["n_algorithms"], 2);
    assert_eq!(overlap["slices"].as_array().unwrap().len(), 2);
}

#[test]
fn compare_rejects_a_single_model() {
    let out = Command::new(BIN)
        .args(["compare", "--models", "svd", "--data", "whatever.csv"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 2"));
}

#[test]
fn sweep_single_measure_matches_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_csv(dir.path(), 7);
    let eval_out = dir.path().join("eval");
    let sweep_out = dir.path().join("sweep");
    let run = |args: &[&str], out: &Path| {
        let s = Command::new(BIN)
            .args([args[0], "--data"])
            .arg(&csv)
            .args(&args[1..])
            .args(SMALL_RUN_ARGS)
            .args(["--out"])
            .arg(out)
            .output()
            .unwrap();
        assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    };
    run(&["evaluate", "--model", "svd", "--sim", "pcc"], &eval_out);
    run(&["sweep", "--model", "svd", "--sims", "pcc"], &sweep_out);
    let eval_report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(eval_out.join("report.json")).unwrap()).unwrap();
    let sweep_report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(sweep_out.join("report_pcc.json")).unwrap()).unwrap();
    assert_eq!(
        eval_report["critical_fraction"],
        sweep_report["critical_fraction"]
    );
    assert_eq!(
        eval_report["n_neighborhoods"],
        sweep_report["n_neighborhoods"]
    );

    let csv_text = std::fs::read_to_string(sweep_out.join("sweep.csv")).unwrap();
    assert_eq!(csv_text.lines().count(), 2, "{csv_text}");
    assert!(
        csv_text.lines().nth(1).unwrap().contains(",pcc,"),
        "{csv_text}"
    );
}

#[test]
fn sweep_emits_one_csv_row_per_measure() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_csv(dir.path(), 8);
    let out_dir = dir.path().join("out");
    let out = Command::new(BIN)
        .args([
            "sweep",
            "--model",
            "svd",
            "--sims",
            "msd,cos,pcc,pbc",
            "--data",
        ])
        .arg(&csv)
        .args(SMALL_RUN_ARGS)
        .args(["--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv_text = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv_text.lines().count(), 5, "{csv_text}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("lowest critical fraction"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_csv(dir.path(), 9);
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "model = \"slopeone\"\nseed = 3\nk_neighbors = 6\nmin_support = 2\nmin_test_interactions = 5\nalpha = 0.01\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    // --model on the command line must beat the config file's model.
    let out = Command::new(BIN)
        .args(["evaluate", "--config"])
        .arg(&config)
        .args(["--model", "svd", "--data"])
        .arg(&csv)
        .args(["--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let echo: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("run_config.json")).unwrap()).unwrap();
    assert_eq!(echo["model"], "svd");
    assert_eq!(echo["alpha"], 0.01);
    assert_eq!(echo["seed"], 3);
    assert_eq!(echo["k_neighbors"], 6);
}

#[test]
fn unknown_model_fails_before_touching_data() {
    let out = Command::new(BIN)
        .args(["evaluate", "--model", "als", "--data", "/nope/ratings.csv"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unknown model"), "{err}");
}
