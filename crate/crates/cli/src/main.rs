//! Command-line driver for neighborhood-based recommender evaluation.
//!
//! Subcommands: `stats` (dataset summary), `evaluate` (one model, full
//! critical report), `compare` (several models, overlap analysis) and
//! `sweep` (one model across similarity measures).

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use nbhd_eval::dataset::{self, RatingDataset};
use nbhd_eval::pipeline::{emit_plot_data, evaluate_all, overlap_analysis, CriticalReport};
use nbhd_eval::recommenders::{fit_model, ModelKind, TrainedModel};
use nbhd_eval::report::{
    fmt_f64, to_json_string, write_box_csv, write_overlap_json, write_report_json,
    write_scatter_csv,
};
use nbhd_eval::similarity::{build_neighborhoods, SimilarityMeasure};
use nbhd_eval::{derive_seed, Error};

use config::{RunConfig, RunFlags};

/// Environment variable naming the default directory dataset paths are
/// resolved against.
pub const DATA_DIR_ENV: &str = "NBHD_DATA_DIR";

#[derive(Parser)]
#[command(
    name = "nbhd-eval",
    version,
    about = "Slice rating datasets into KNN user neighborhoods and flag the ones a trained recommender serves significantly worse"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print dataset summary statistics (users, items, ratings, sparsity).
    Stats(StatsArgs),
    /// Train one model and write its critical-neighborhood report.
    Evaluate(RunFlags),
    /// Evaluate several models on one split and report critical overlap.
    Compare(CompareArgs),
    /// Evaluate one model across several similarity measures.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct StatsArgs {
    /// Ratings file or dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// File format; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<String>,
    /// Rating scale as "min,max,step"; defaults per format.
    #[arg(long)]
    scale: Option<String>,
    /// Emit a machine-readable JSON summary.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Comma-separated list of at least two models.
    #[arg(long, value_delimiter = ',', required = true)]
    models: Vec<String>,
    #[command(flatten)]
    flags: RunFlags,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated similarity measures to sweep over.
    #[arg(long, value_delimiter = ',', default_value = "msd,cos,pcc,pbc")]
    sims: Vec<String>,
    #[command(flatten)]
    flags: RunFlags,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Stats(args) => cmd_stats(args),
        Command::Evaluate(flags) => cmd_evaluate(flags),
        Command::Compare(args) => cmd_compare(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

/// Resolve `--data` against the current directory, then `$NBHD_DATA_DIR`.
fn resolve_data_path(path: &Path) -> Result<PathBuf> {
    if path.exists() {
        return Ok(path.to_path_buf());
    }
    if path.is_relative() {
        if let Ok(base) = std::env::var(DATA_DIR_ENV) {
            let candidate = Path::new(&base).join(path);
            if candidate.exists() {
                return Ok(candidate);
            }
        }
    }
    anyhow::bail!(
        "dataset path {} not found (also tried ${DATA_DIR_ENV})",
        path.display()
    )
}

fn parse_scale(spec: &str) -> Result<dataset::RatingScale> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 3 {
        anyhow::bail!("--scale expects \"min,max,step\", got {spec:?}");
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidScale(p.to_string()))
        })
        .collect::<std::result::Result<_, _>>()?;
    Ok(dataset::RatingScale::new(nums[0], nums[1], nums[2])?)
}

/// Load a dataset, inferring format and default scale from the file.
fn load_dataset(data: &Path, format: Option<&str>, scale: Option<&str>) -> Result<RatingDataset> {
    let resolved = resolve_data_path(data)?;
    let file = dataset::resolve_ratings_file(&resolved)?;
    let format = match format {
        Some(f) => f.to_ascii_lowercase(),
        None => match file.extension().and_then(|e| e.to_str()) {
            Some("csv") => "csv".into(),
            Some("dat") => "dat".into(),
            other => {
                anyhow::bail!("cannot infer format from extension {other:?}; pass --format csv|dat")
            }
        },
    };
    match format.as_str() {
        "csv" => {
            let scale = match scale {
                Some(s) => parse_scale(s)?,
                None => dataset::RatingScale::half_stars(),
            };
            Ok(dataset::load_csv(
                &file,
                &dataset::CsvSchema::default(),
                scale,
            )?)
        }
        "dat" => {
            let scale = match scale {
                Some(s) => parse_scale(s)?,
                None => dataset::RatingScale::one_to_five(),
            };
            Ok(dataset::load_dat(&file, "::", scale)?)
        }
        other => anyhow::bail!("unknown format {other:?}; expected csv or dat"),
    }
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let ds = load_dataset(&args.data, args.format.as_deref(), args.scale.as_deref())
        .context("stage: load")?;
    let stats = ds.stats();
    if args.json {
        println!("{}", to_json_string(&stats)?);
    } else {
        println!(
            "users {} / items {} / ratings {} / sparsity {:.3}",
            stats.n_users, stats.n_items, stats.n_ratings, stats.sparsity_rounded
        );
    }
    Ok(())
}

/// Everything an experiment run needs, derived once from the flags.
struct Prepared {
    cfg: RunConfig,
    train: RatingDataset,
    test: RatingDataset,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let ds = load_dataset(&cfg.data, cfg.format.as_deref(), cfg.scale.as_deref())
        .context("stage: load")?;
    let ds = match cfg.subsample_users {
        Some(n) => ds
            .subsample_users(n, derive_seed(cfg.seed, "subsample"))
            .context("stage: subsample")?,
        None => ds,
    };
    let pair = ds
        .split(cfg.test_fraction, derive_seed(cfg.seed, "split"))
        .context("stage: split")?;
    Ok(Prepared {
        cfg: cfg.clone(),
        train: pair.train,
        test: pair.test,
    })
}

fn train_model(prep: &Prepared, model: ModelKind) -> Result<TrainedModel> {
    let mut train_cfg = prep.cfg.train_config(model);
    train_cfg.seed = derive_seed(prep.cfg.seed, &format!("train:{model}"));
    fit_model(model, &prep.train, &train_cfg).context("stage: train")
}

fn evaluate_model(
    prep: &Prepared,
    model: &TrainedModel,
    neighborhoods: &[nbhd_eval::similarity::Neighborhood],
) -> Result<CriticalReport> {
    evaluate_all(
        model,
        neighborhoods,
        &prep.train,
        &prep.test,
        &prep.cfg.similarity_config()?,
        &prep.cfg.eval_config()?,
    )
    .context("stage: evaluate")
}

fn write_report_files(
    out_dir: &Path,
    name_suffix: &str,
    report: &CriticalReport,
) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("stage: write ({})", out_dir.display()))?;
    let report_path = out_dir.join(format!("report{name_suffix}.json"));
    write_report_json(report, &report_path).context("stage: write")?;
    let plot = emit_plot_data(report);
    write_scatter_csv(&plot, &out_dir.join(format!("scatter{name_suffix}.csv")))
        .context("stage: write")?;
    write_box_csv(&plot, &out_dir.join(format!("box{name_suffix}.csv"))).context("stage: write")?;
    Ok(report_path)
}

fn print_report_summary(report: &CriticalReport, json: bool) -> Result<()> {
    if json {
        #[derive(serde::Serialize)]
        struct Summary<'a> {
            model: &'a str,
            mode: &'a nbhd_eval::metrics::EvalMode,
            n_neighborhoods: usize,
            n_critical: usize,
            critical_fraction: f64,
        }
        println!(
            "{}",
            to_json_string(&Summary {
                model: &report.model_name,
                mode: &report.mode,
                n_neighborhoods: report.n_neighborhoods,
                n_critical: report.n_critical,
                critical_fraction: report.critical_fraction,
            })?
        );
        return Ok(());
    }
    println!(
        "{}: {} neighborhoods, {} critical (fraction {})",
        report.model_name,
        report.n_neighborhoods,
        report.n_critical,
        fmt_f64(report.critical_fraction)
    );
    let mut worst: Vec<_> = report.evaluations.iter().collect();
    worst.sort_by(|a, b| {
        b.diff
            .partial_cmp(&a.diff)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    println!("top 10 worst neighborhoods (by excess loss):");
    println!(
        "  {:<18} {:>8} {:>10} {:>10} {:>10} {:>9}",
        "id", "anchor", "loss_n", "loss_d'", "excess", "p"
    );
    for e in worst.iter().take(10) {
        println!(
            "  {:016x} {:>8} {:>10} {:>10} {:>10} {:>9}{}",
            e.neighborhood_id,
            e.anchor_user,
            format!("{:.4}", e.loss_n),
            format!("{:.4}", e.loss_dprime),
            format!("{:.4}", e.diff),
            e.welch
                .map_or("-".to_string(), |w| format!("{:.2e}", w.p_one_sided)),
            if e.critical { " *" } else { "" }
        );
    }
    Ok(())
}

fn with_thread_pool<T>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T>
where
    T: Send,
{
    match threads {
        None => f(),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("stage: setup (thread pool)")?;
            pool.install(f)
        }
    }
}

fn cmd_evaluate(flags: RunFlags) -> Result<()> {
    let cfg = RunConfig::resolve(&flags)?;
    let model_kind = cfg.model_kind()?;
    with_thread_pool(cfg.threads, || {
        let prep = prepare(&cfg)?;
        let model = train_model(&prep, model_kind)?;
        let neighborhoods =
            build_neighborhoods(&prep.train, &prep.test, &prep.cfg.similarity_config()?)
                .context("stage: neighborhoods")?;
        let report = evaluate_model(&prep, &model, &neighborhoods)?;
        std::fs::create_dir_all(&cfg.out)
            .with_context(|| format!("stage: write ({})", cfg.out.display()))?;
        cfg.write_echo(&cfg.out.join("run_config.json"))?;
        let report_path = write_report_files(&cfg.out, "", &report)?;
        print_report_summary(&report, cfg.json)?;
        if !cfg.json {
            println!("report written to {}", report_path.display());
        }
        Ok(())
    })
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    if args.models.len() < 2 {
        anyhow::bail!("compare needs at least 2 models");
    }
    let models: Vec<ModelKind> = args
        .models
        .iter()
        .map(|m| m.parse::<ModelKind>().map_err(Into::into))
        .collect::<Result<_>>()
        .context("stage: setup")?;
    let cfg = RunConfig::resolve(&args.flags)?;
    with_thread_pool(cfg.threads, || {
        let prep = prepare(&cfg)?;
        // One split, one neighborhood universe, shared by every model.
        let neighborhoods =
            build_neighborhoods(&prep.train, &prep.test, &prep.cfg.similarity_config()?)
                .context("stage: neighborhoods")?;
        std::fs::create_dir_all(&cfg.out)
            .with_context(|| format!("stage: write ({})", cfg.out.display()))?;
        cfg.write_echo(&cfg.out.join("run_config.json"))?;
        let mut reports = Vec::new();
        for kind in &models {
            let model = train_model(&prep, *kind)?;
            let report = evaluate_model(&prep, &model, &neighborhoods)?;
            write_report_files(&cfg.out, &format!("_{kind}"), &report)?;
            print_report_summary(&report, false)?;
            reports.push(report);
        }
        let refs: Vec<&CriticalReport> = reports.iter().collect();
        let overlap = overlap_analysis(&refs).context("stage: overlap")?;
        write_overlap_json(&overlap, &cfg.out.join("overlap.json")).context("stage: write")?;
        println!(
            "critical-neighborhood overlap over {} ids:",
            overlap.union_size
        );
        for slice in &overlap.slices {
            println!(
                "  flagged by {}: {} ({})",
                slice.flagged_by,
                slice.count,
                fmt_f64(slice.fraction)
            );
        }
        if cfg.json {
            println!("{}", to_json_string(&overlap)?);
        }
        Ok(())
    })
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let sims: Vec<SimilarityMeasure> = args
        .sims
        .iter()
        .map(|s| s.parse::<SimilarityMeasure>().map_err(Into::into))
        .collect::<Result<_>>()
        .context("stage: setup")?;
    let cfg = RunConfig::resolve(&args.flags)?;
    let model_kind = cfg.model_kind()?;
    with_thread_pool(cfg.threads, || {
        let prep = prepare(&cfg)?;
        let model = train_model(&prep, model_kind)?;
        std::fs::create_dir_all(&cfg.out)
            .with_context(|| format!("stage: write ({})", cfg.out.display()))?;
        cfg.write_echo(&cfg.out.join("run_config.json"))?;
        let mut csv =
            String::from("dataset,measure,n_neighborhoods,n_critical,critical_fraction\n");
        let mut fractions = Vec::new();
        for sim in &sims {
            let mut sim_cfg = prep.cfg.similarity_config()?;
            sim_cfg.measure = *sim;
            let neighborhoods = build_neighborhoods(&prep.train, &prep.test, &sim_cfg)
                .context("stage: neighborhoods")?;
            let report = evaluate_all(
                &model,
                &neighborhoods,
                &prep.train,
                &prep.test,
                &sim_cfg,
                &prep.cfg.eval_config()?,
            )
            .context("stage: evaluate")?;
            write_report_files(&cfg.out, &format!("_{sim}"), &report)?;
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                cfg.data.display(),
                sim,
                report.n_neighborhoods,
                report.n_critical,
                fmt_f64(report.critical_fraction)
            ));
            println!(
                "{sim}: {} neighborhoods, {} critical (fraction {})",
                report.n_neighborhoods,
                report.n_critical,
                fmt_f64(report.critical_fraction)
            );
            fractions.push((*sim, report.critical_fraction));
        }
        std::fs::write(cfg.out.join("sweep.csv"), csv).context("stage: write")?;
        if let Some((lowest, _)) = fractions
            .iter()
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
        {
            println!("lowest critical fraction: {lowest}");
        }
        Ok(())
    })
}
