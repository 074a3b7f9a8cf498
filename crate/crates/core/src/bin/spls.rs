//! Command-line front end: simulate data, fit single models, cross-validate
//! and run repeated train/test experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use sparse_pls::data::{center_columns, save_csv, split_folds, Dataset};
use sparse_pls::experiment::{load_csv_dataset, run_experiment, DataSource, ExperimentConfig, ExperimentReport, LambdaSpec};
use sparse_pls::selection::{cross_validate_with, default_lambda_grid, fit_method, method_lambda_max, Method, MseMode};
use sparse_pls::simgen::{generate, SimModelSpec};
use sparse_pls::Error;

#[derive(Parser)]
#[command(name = "spls", version, about = "Sparse partial least squares regression toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write X, Y and beta_true as CSV.
    Simulate(SimulateArgs),
    /// Fit one model at a fixed (K, lambda) and write it as JSON.
    Fit(FitArgs),
    /// Cross-validate methods over the (K, lambda) grid.
    Cv(CommonArgs),
    /// Repeated train/test comparison of methods.
    Experiment(CommonArgs),
    /// Per-variable selection counts across experiment trials (CSV).
    SelectionFrequency(FrequencyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// JSON experiment configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Synthetic model 1..4.
    #[arg(long)]
    model: Option<u8>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// Predictor CSV (instead of a synthetic model).
    #[arg(long)]
    x: Option<PathBuf>,
    /// Response CSV.
    #[arg(long)]
    y: Option<PathBuf>,
    /// Optional subject labels for grouped folds.
    #[arg(long)]
    subjects: Option<PathBuf>,
    /// CSV files have no header row.
    #[arg(long)]
    no_header: bool,
    /// Comma-separated methods: pls, simpls, l1_spls, global_simpls.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    k_grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// Interpret --lambda-grid as multiples of each method's largest useful penalty.
    #[arg(long)]
    lambda_relative: bool,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scale predictors to unit variance.
    #[arg(long)]
    scale: bool,
    #[arg(long, value_parser = ["mean", "sum"])]
    mse_mode: Option<String>,
    #[arg(long)]
    mu0: Option<f64>,
    #[arg(long)]
    mu_growth: Option<f64>,
    #[arg(long, value_enum)]
    dual_rescale: Option<Switch>,
    /// Record wall-clock time per trial.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: u8,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 5000)]
    p: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for x.csv, y.csv and beta_true.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of components.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Penalty weight (absolute unless --lambda-relative).
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
}

#[derive(Args)]
struct FrequencyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Existing experiment report to read instead of running trials.
    #[arg(long)]
    report: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Io { .. } | Error::Parse { .. } | Error::DimensionMismatch { .. } | Error::Empty(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Run(other.to_string()),
        }
    }
}

fn build_config(args: &CommonArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let (Some(x), Some(y)) = (&args.x, &args.y) {
        let fraction = match &cfg.source {
            DataSource::Csv { test_fraction, .. } => *test_fraction,
            DataSource::Sim { .. } => 0.3,
        };
        cfg.source = DataSource::Csv {
            x: x.clone(),
            y: y.clone(),
            subjects: args.subjects.clone(),
            has_header: !args.no_header,
            test_fraction: fraction,
        };
    } else if args.x.is_some() || args.y.is_some() {
        return Err(Failure::Usage("--x and --y must be given together".into()));
    }
    if args.model.is_some() || args.n.is_some() || args.p.is_some() {
        let (mut model, mut n, mut p) = match cfg.source {
            DataSource::Sim { model, n, p } => (model, n, p),
            DataSource::Csv { .. } => (1, 100, 5000),
        };
        model = args.model.unwrap_or(model);
        n = args.n.unwrap_or(n);
        p = args.p.unwrap_or(p);
        cfg.source = DataSource::Sim { model, n, p };
    }
    if let Some(methods) = &args.methods {
        cfg.methods = methods
            .iter()
            .map(|m| m.trim().parse::<Method>())
            .collect::<Result<_, _>>()?;
    }
    if let Some(k) = &args.k_grid {
        cfg.k_grid = k.clone();
    }
    if let Some(l) = &args.lambda_grid {
        cfg.lambda = LambdaSpec {
            values: Some(l.clone()),
            relative: args.lambda_relative,
        };
    } else if args.lambda_relative {
        return Err(Failure::Usage("--lambda-relative needs --lambda-grid".into()));
    }
    if let Some(f) = args.folds {
        cfg.folds = f;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    if args.scale {
        cfg.settings.scale = true;
    }
    if let Some(m) = &args.mse_mode {
        cfg.settings.mse_mode = m.parse::<MseMode>()?;
    }
    if let Some(mu0) = args.mu0 {
        cfg.settings.admm.mu0 = mu0;
    }
    if let Some(g) = args.mu_growth {
        cfg.settings.admm.mu_growth = g;
    }
    if let Some(d) = args.dual_rescale {
        cfg.settings.admm.dual_rescale = matches!(d, Switch::On);
    }
    if args.timing {
        cfg.timing = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The full dataset named by the config (training part of a simulation).
fn config_dataset(cfg: &ExperimentConfig) -> Result<Dataset, Failure> {
    Ok(match &cfg.source {
        DataSource::Sim { model, n, p } => generate(&SimModelSpec::new(*model, *n, *p, cfg.seed))?,
        DataSource::Csv {
            x,
            y,
            subjects,
            has_header,
            ..
        } => load_csv_dataset(x, y, subjects.as_deref(), *has_header)?,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(v)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Failure::Run(e.to_string()))
}

fn run_simulate(args: &SimulateArgs) -> Result<ExitCode, Failure> {
    let data = generate(&SimModelSpec::new(args.model, args.n, args.p, args.seed))?;
    std::fs::create_dir_all(&args.out).map_err(|e| Failure::Run(format!("{}: {e}", args.out.display())))?;
    let xs: Vec<String> = (1..=data.p()).map(|j| format!("x{j}")).collect();
    save_csv(args.out.join("x.csv"), data.x(), Some(&xs))?;
    save_csv(args.out.join("y.csv"), data.y(), Some(&["y".to_string()]))?;
    if let Some(b) = data.beta_true() {
        save_csv(args.out.join("beta_true.csv"), b, Some(&["beta".to_string()]))?;
    }
    info!("wrote {} x {} predictors to {}", data.n(), data.p(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn run_fit(args: &FitArgs) -> Result<ExitCode, Failure> {
    // here --lambda-relative scales --lambda, not a grid
    let common = CommonArgs {
        lambda_relative: args.common.lambda_relative && args.common.lambda_grid.is_some(),
        ..args.common.clone()
    };
    let cfg = build_config(&common)?;
    let data = config_dataset(&cfg)?;
    let method = cfg.methods[0];
    let c = center_columns(&data, cfg.settings.scale);
    let lambda = if args.common.lambda_relative {
        args.lambda * method_lambda_max(method, &cfg.settings, &c, args.k)?
    } else {
        args.lambda
    };
    let fit = fit_method(method, &cfg.settings, &c, args.k, lambda)?;
    emit(args.common.out.as_deref(), &to_json(&fit)?)?;
    Ok(ExitCode::SUCCESS)
}

fn run_cv(args: &CommonArgs) -> Result<ExitCode, Failure> {
    let cfg = build_config(args)?;
    let data = config_dataset(&cfg)?;
    let folds = split_folds(data.n(), cfg.folds, cfg.seed, data.subject_ids())?;
    let c = center_columns(&data, cfg.settings.scale);
    let k_max = *cfg.k_grid.iter().max().expect("validated");
    let mut results = Vec::new();
    for &method in &cfg.methods {
        let grid = match (&cfg.lambda.values, cfg.lambda.relative) {
            (None, _) => default_lambda_grid(method, &cfg.settings, &c, k_max)?,
            (Some(v), true) => {
                let max = method_lambda_max(method, &cfg.settings, &c, k_max)?;
                v.iter().map(|f| f * max).collect()
            }
            (Some(v), false) => v.clone(),
        };
        results.push(cross_validate_with(&data, method, &cfg.settings, &cfg.k_grid, &grid, &folds)?);
    }
    emit(args.out.as_deref(), &to_json(&results)?)?;
    Ok(ExitCode::SUCCESS)
}

fn finish_report(report: &ExperimentReport) -> ExitCode {
    for w in &report.warnings {
        warn!("{w}");
    }
    if report.all_failed() {
        eprintln!("error: every trial failed");
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn run_experiment_cmd(args: &CommonArgs) -> Result<ExitCode, Failure> {
    let cfg = build_config(args)?;
    let report = run_experiment(&cfg)?;
    let table = report.text_table();
    match &args.out {
        Some(path) => {
            write_text(path, &to_json(&report)?)?;
            write_text(&path.with_extension("txt"), &table)?;
            print!("{table}");
        }
        None => print!("{}", to_json(&report)?),
    }
    Ok(finish_report(&report))
}

fn run_frequency(args: &FrequencyArgs) -> Result<ExitCode, Failure> {
    let report = match &args.report {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            ExperimentReport::from_json(&text)?
        }
        None => run_experiment(&build_config(&args.common)?)?,
    };
    emit(args.common.out.as_deref(), &report.selection_frequency_csv())?;
    Ok(finish_report(&report))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Fit(a) => run_fit(a),
        Command::Cv(a) => run_cv(a),
        Command::Experiment(a) => run_experiment_cmd(a),
        Command::SelectionFrequency(a) => run_frequency(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
