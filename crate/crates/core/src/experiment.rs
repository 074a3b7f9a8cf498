//! Repeated train/test experiments: per trial every method is tuned by
//! cross-validation on the training part, refitted at the chosen cell and
//! scored on the test part. Results are aggregated per method and compared
//! with one-sided paired t-tests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{center_columns, load_csv, load_labels, split_folds, split_train_test, Dataset};
use crate::error::{Error, Result};
use crate::selection::{
    cross_validate_with, default_lambda_grid, fit_method, method_lambda_max, mse_with,
    paired_t_test_one_sided, r_squared, FitSettings, Method,
};
use crate::simgen::{generate, SimModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Sim {
        model: u8,
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_p")]
        p: usize,
    },
    Csv {
        x: PathBuf,
        y: PathBuf,
        #[serde(default)]
        subjects: Option<PathBuf>,
        #[serde(default = "default_true")]
        has_header: bool,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
}

fn default_n() -> usize {
    100
}

fn default_p() -> usize {
    5000
}

fn default_true() -> bool {
    true
}

fn default_test_fraction() -> f64 {
    0.3
}

/// Penalty grid: explicit values (absolute, or multiples of each method's
/// largest useful penalty when `relative`), or the method default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaSpec {
    pub values: Option<Vec<f64>>,
    pub relative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub methods: Vec<Method>,
    pub k_grid: Vec<usize>,
    pub lambda: LambdaSpec,
    pub folds: usize,
    pub seed: u64,
    pub trials: usize,
    pub threads: Option<usize>,
    pub settings: FitSettings,
    /// Record wall-clock seconds (makes reports differ between runs).
    pub timing: bool,
    /// Method compared against every other one in the t-tests.
    pub focus: Method,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Sim {
                model: 1,
                n: default_n(),
                p: default_p(),
            },
            methods: vec![Method::Simpls, Method::GlobalSimpls],
            k_grid: vec![1, 2, 3],
            lambda: LambdaSpec::default(),
            folds: 10,
            seed: 1,
            trials: 10,
            threads: None,
            settings: FitSettings::default(),
            timing: false,
            focus: Method::GlobalSimpls,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.k_grid.is_empty() || self.k_grid.contains(&0) {
            return Err(Error::Config("K grid must be nonempty with entries >= 1".into()));
        }
        if let Some(v) = &self.lambda.values {
            if v.is_empty() || v.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
                return Err(Error::Config("penalty grid must be nonempty, finite and >= 0".into()));
            }
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        self.settings.admm.validate()?;
        self.settings.l1.validate()?;
        match &self.source {
            DataSource::Sim { model, n, p } => SimModelSpec::new(*model, *n, *p, 0).validate()?,
            DataSource::Csv {
                x,
                y,
                subjects,
                test_fraction,
                ..
            } => {
                for path in [Some(x), Some(y), subjects.as_ref()].into_iter().flatten() {
                    if !path.is_file() {
                        return Err(Error::Config(format!("file not found: {}", path.display())));
                    }
                }
                if !(*test_fraction > 0.0 && *test_fraction < 1.0) {
                    return Err(Error::Config(format!(
                        "test fraction must lie in (0, 1), got {test_fraction}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Loads X, Y and optional subject labels, checking that the row counts agree.
pub fn load_csv_dataset(
    x: &Path,
    y: &Path,
    subjects: Option<&Path>,
    has_header: bool,
) -> Result<Dataset> {
    let xm = load_csv(x, has_header)?;
    let ym = load_csv(y, has_header)?;
    if xm.data.nrows() != ym.data.nrows() {
        return Err(Error::Config(format!(
            "row count mismatch: {} has {} rows but {} has {} rows",
            x.display(),
            xm.data.nrows(),
            y.display(),
            ym.data.nrows()
        )));
    }
    let mut data = Dataset::new(xm.data, ym.data)?;
    if let Some(s) = subjects {
        let labels = load_labels(s, has_header)?;
        if labels.len() != data.n() {
            return Err(Error::Config(format!(
                "row count mismatch: {} has {} rows but {} has {} labels",
                x.display(),
                data.n(),
                s.display(),
                labels.len()
            )));
        }
        data = data.with_subjects(labels)?;
    }
    Ok(data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSeeds {
    pub trial: usize,
    pub train: u64,
    pub test: u64,
    pub folds: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeds of one trial derived from the base seed by role.
pub fn trial_seeds(base: u64, trial: usize) -> TrialSeeds {
    let derive = |role: u64| splitmix(splitmix(base ^ role.wrapping_mul(0xD6E8_FEB8_6659_FD93)) ^ trial as u64);
    TrialSeeds {
        trial,
        train: derive(1),
        test: derive(2),
        folds: derive(3),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub method: Method,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub best_k: Option<usize>,
    pub best_lambda: Option<f64>,
    pub components: Option<f64>,
    pub variables: Option<f64>,
    pub test_mse: Option<f64>,
    pub train_r2: Option<f64>,
    /// Fraction of selected variables inside the true support (simulations).
    pub support_precision: Option<f64>,
    pub seconds: Option<f64>,
    pub selected_indices: Vec<usize>,
}

impl TrialRow {
    fn failed(trial: usize, method: Method, error: String) -> Self {
        Self {
            trial,
            method,
            ok: false,
            error: Some(error),
            best_k: None,
            best_lambda: None,
            components: None,
            variables: None,
            test_mse: None,
            train_r2: None,
            support_precision: None,
            seconds: None,
            selected_indices: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub mean_components: Option<f64>,
    pub mean_variables: Option<f64>,
    pub mean_test_mse: Option<f64>,
    pub mean_train_r2: Option<f64>,
    pub mean_support_precision: Option<f64>,
    pub mean_seconds: Option<f64>,
}

/// Lower-tail p-values for "focus is smaller than other".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTests {
    pub focus: Method,
    pub other: Method,
    pub pairs: usize,
    pub components: Option<f64>,
    pub variables: Option<f64>,
    pub test_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub seed: u64,
    pub n_predictors: usize,
    pub trial_seeds: Vec<TrialSeeds>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub provenance: Provenance,
    pub summaries: Vec<MethodSummary>,
    pub t_tests: Vec<PairedTests>,
    pub trials: Vec<TrialRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ExperimentReport {
    pub fn all_failed(&self) -> bool {
        self.trials.iter().all(|r| !r.ok)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(format!("serialising report: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("parsing report: {e}")))
    }

    /// Per-variable selection counts over successful trials, one column per method.
    pub fn selection_frequency(&self) -> Vec<(Method, Vec<usize>)> {
        let p = self.provenance.n_predictors;
        self.provenance
            .config
            .methods
            .iter()
            .map(|&m| {
                let mut counts = vec![0; p];
                for row in self.trials.iter().filter(|r| r.ok && r.method == m) {
                    for &j in &row.selected_indices {
                        counts[j] += 1;
                    }
                }
                (m, counts)
            })
            .collect()
    }

    /// CSV with one row per variable and one count column per method.
    pub fn selection_frequency_csv(&self) -> String {
        let freq = self.selection_frequency();
        let mut out = String::from("variable");
        for (m, _) in &freq {
            write!(out, ",{m}").unwrap();
        }
        out.push('\n');
        for j in 0..self.provenance.n_predictors {
            write!(out, "{}", j + 1).unwrap();
            for (_, counts) in &freq {
                write!(out, ",{}", counts[j]).unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Plain-text comparison table with values at 4 significant digits.
    pub fn text_table(&self) -> String {
        type Column = (&'static str, fn(&MethodSummary) -> Option<f64>);
        let rows: [Column; 6] = [
            ("number of comp.", |s| s.mean_components),
            ("number of variables", |s| s.mean_variables),
            ("MSE", |s| s.mean_test_mse),
            ("R2 (train)", |s| s.mean_train_r2),
            ("support precision", |s| s.mean_support_precision),
            ("seconds", |s| s.mean_seconds),
        ];
        let tests: [fn(&PairedTests) -> Option<f64>; 3] = [|t| t.components, |t| t.variables, |t| t.test_mse];
        let mut header = vec![String::from("metric")];
        header.extend(self.summaries.iter().map(|s| s.method.to_string()));
        header.extend(self.t_tests.iter().map(|t| format!("p({},{})", t.focus, t.other)));
        let mut lines = vec![header];
        for (i, (label, get)) in rows.iter().enumerate() {
            let mut line = vec![label.to_string()];
            line.extend(self.summaries.iter().map(|s| fmt_sig(get(s))));
            if i < 3 {
                line.extend(self.t_tests.iter().map(|t| fmt_sig(tests[i](t))));
            } else {
                line.extend(self.t_tests.iter().map(|_| String::new()));
            }
            lines.push(line);
        }
        let mut ok = vec![String::from("trials ok/failed")];
        ok.extend(self.summaries.iter().map(|s| format!("{}/{}", s.trials_ok, s.trials_failed)));
        ok.extend(self.t_tests.iter().map(|_| String::new()));
        lines.push(ok);
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in &lines {
            let cells: Vec<String> = line
                .iter()
                .enumerate()
                .map(|(c, v)| if c == 0 { format!("{v:<w$}", w = widths[c]) } else { format!("{v:>w$}", w = widths[c]) })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// Formats a value with 4 significant digits ("NA" when missing).
pub fn fmt_sig(v: Option<f64>) -> String {
    match v {
        None => "NA".into(),
        Some(0.0) => "0".into(),
        Some(x) if !x.is_finite() => format!("{x}"),
        Some(x) => {
            let mag = x.abs().log10().floor() as i32;
            if (-3..6).contains(&mag) {
                let decimals = (3 - mag).max(0) as usize;
                // rounding can carry into a new digit; reformat from the rounded value
                let rounded: f64 = format!("{x:.decimals$}").parse().unwrap_or(x);
                let mag2 = rounded.abs().log10().floor() as i32;
                let decimals = (3 - mag2).max(0) as usize;
                format!("{rounded:.decimals$}")
            } else {
                format!("{x:.3e}")
            }
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

struct TrialData {
    train: Dataset,
    test: Dataset,
}

fn trial_data(config: &ExperimentConfig, seeds: &TrialSeeds, loaded: Option<&Dataset>) -> Result<TrialData> {
    match (&config.source, loaded) {
        (DataSource::Sim { model, n, p }, _) => Ok(TrialData {
            train: generate(&SimModelSpec::new(*model, *n, *p, seeds.train))?,
            test: generate(&SimModelSpec::new(*model, *n, *p, seeds.test))?,
        }),
        (DataSource::Csv { test_fraction, .. }, Some(all)) => {
            let (train, test) = split_train_test(all.n(), *test_fraction, seeds.test, all.subject_ids())?;
            Ok(TrialData {
                train: all.subset_rows(&train)?,
                test: all.subset_rows(&test)?,
            })
        }
        (DataSource::Csv { .. }, None) => unreachable!("csv data is loaded before the trials"),
    }
}

fn resolve_grid(
    config: &ExperimentConfig,
    method: Method,
    train: &crate::data::CenteredData,
) -> Result<Vec<f64>> {
    let k_max = *config.k_grid.iter().max().expect("validated nonempty");
    match (&config.lambda.values, method.uses_lambda()) {
        (_, false) => Ok(vec![0.0]),
        (None, true) => default_lambda_grid(method, &config.settings, train, k_max),
        (Some(v), true) if config.lambda.relative => {
            let max = method_lambda_max(method, &config.settings, train, k_max)?;
            Ok(v.iter().map(|f| f * max).collect())
        }
        (Some(v), true) => Ok(v.clone()),
    }
}

fn run_method(config: &ExperimentConfig, method: Method, seeds: &TrialSeeds, data: &TrialData) -> Result<TrialRow> {
    let start = Instant::now();
    let settings = &config.settings;
    let folds = split_folds(data.train.n(), config.folds, seeds.folds, data.train.subject_ids())?;
    let centered = center_columns(&data.train, settings.scale);
    let grid = resolve_grid(config, method, &centered)?;
    let cv = cross_validate_with(&data.train, method, settings, &config.k_grid, &grid, &folds)?;
    let fit = fit_method(method, settings, &centered, cv.best_k, cv.best_lambda)?;
    let test_mse = mse_with(data.test.y(), &fit.predict(data.test.x())?, settings.mse_mode)?;
    let train_r2 = r_squared(data.train.y(), &fit.predict(data.train.x())?)?;
    let selected = fit.selected_indices();
    let support_precision = data.train.beta_true().map(|beta| {
        if selected.is_empty() {
            0.0
        } else {
            let inside = selected
                .iter()
                .filter(|&&j| beta.row(j).iter().any(|v| *v != 0.0))
                .count();
            inside as f64 / selected.len() as f64
        }
    });
    Ok(TrialRow {
        trial: seeds.trial,
        method,
        ok: true,
        error: None,
        best_k: Some(cv.best_k),
        best_lambda: Some(cv.best_lambda),
        components: Some(fit.model.n_components as f64),
        variables: Some(selected.len() as f64),
        test_mse: Some(test_mse),
        train_r2: Some(train_r2),
        support_precision,
        seconds: config.timing.then(|| start.elapsed().as_secs_f64()),
        selected_indices: selected,
    })
}

fn summarise(method: Method, rows: &[TrialRow]) -> MethodSummary {
    let ok: Vec<&TrialRow> = rows.iter().filter(|r| r.method == method && r.ok).collect();
    let failed = rows.iter().filter(|r| r.method == method && !r.ok).count();
    let avg = |f: fn(&TrialRow) -> Option<f64>| mean(ok.iter().filter_map(|r| f(r)));
    MethodSummary {
        method,
        trials_ok: ok.len(),
        trials_failed: failed,
        mean_components: avg(|r| r.components),
        mean_variables: avg(|r| r.variables),
        mean_test_mse: avg(|r| r.test_mse),
        mean_train_r2: avg(|r| r.train_r2),
        mean_support_precision: avg(|r| r.support_precision),
        mean_seconds: avg(|r| r.seconds),
    }
}

fn paired(focus: Method, other: Method, rows: &[TrialRow], trials: usize) -> PairedTests {
    let find = |m: Method, t: usize| rows.iter().find(|r| r.method == m && r.trial == t && r.ok);
    let pairs: Vec<(&TrialRow, &TrialRow)> = (0..trials)
        .filter_map(|t| Some((find(focus, t)?, find(other, t)?)))
        .collect();
    let test = |f: fn(&TrialRow) -> Option<f64>| -> Option<f64> {
        let a: Vec<f64> = pairs.iter().filter_map(|(x, _)| f(x)).collect();
        let b: Vec<f64> = pairs.iter().filter_map(|(_, y)| f(y)).collect();
        paired_t_test_one_sided(&a, &b).ok()
    };
    PairedTests {
        focus,
        other,
        pairs: pairs.len(),
        components: test(|r| r.components),
        variables: test(|r| r.variables),
        test_mse: test(|r| r.test_mse),
    }
}

/// Runs every trial of the experiment (in a dedicated pool when `threads`
/// is set) and assembles the report in trial order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| run_inner(config)),
        None => run_inner(config),
    }
}

fn run_inner(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let loaded = match &config.source {
        DataSource::Csv {
            x,
            y,
            subjects,
            has_header,
            ..
        } => Some(load_csv_dataset(x, y, subjects.as_deref(), *has_header)?),
        DataSource::Sim { .. } => None,
    };
    let n_predictors = match (&config.source, &loaded) {
        (DataSource::Sim { p, .. }, _) => *p,
        (_, Some(d)) => d.p(),
        _ => unreachable!(),
    };
    let mut methods = config.methods.clone();
    methods.dedup();
    let seeds: Vec<TrialSeeds> = (0..config.trials).map(|t| trial_seeds(config.seed, t)).collect();
    let per_trial: Vec<Vec<TrialRow>> = seeds
        .par_iter()
        .map(|s| match trial_data(config, s, loaded.as_ref()) {
            Err(e) => methods
                .iter()
                .map(|&m| TrialRow::failed(s.trial, m, format!("data preparation: {e}")))
                .collect(),
            Ok(data) => methods
                .par_iter()
                .map(|&m| run_method(config, m, s, &data).unwrap_or_else(|e| TrialRow::failed(s.trial, m, e.to_string())))
                .collect(),
        })
        .collect();
    let trials: Vec<TrialRow> = per_trial.into_iter().flatten().collect();
    let warnings: Vec<String> = trials
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("trial {} {}: {e}", r.trial, r.method)))
        .collect();
    let summaries = methods.iter().map(|&m| summarise(m, &trials)).collect();
    let t_tests = if methods.contains(&config.focus) {
        methods
            .iter()
            .filter(|&&m| m != config.focus)
            .map(|&m| paired(config.focus, m, &trials, config.trials))
            .collect()
    } else {
        Vec::new()
    };
    Ok(ExperimentReport {
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            n_predictors,
            trial_seeds: seeds,
            config: config.clone(),
        },
        summaries,
        t_tests,
        trials,
        warnings,
    })
}
