//! Prediction metrics, paired one-sided t-tests and grid cross-validation
//! over the number of components and the penalty weight.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::admm::{fit_global_simpls, lambda_max, AdmmOptions, FitDiagnostics, SparsePlsModel, StopReason};
use crate::data::{center_columns, CenteredData, Dataset, FoldAssignment};
use crate::error::{Error, Result};
use crate::l1spls::{fit_l1_spls, l1_lambda_max, L1SplsConfig};
use crate::linalg;
use crate::pls::{nipals_pls2, simpls, ComponentRequest, PlsModel};

/// How squared errors of several responses are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MseMode {
    /// Mean over all entries.
    #[default]
    Mean,
    /// Sum over responses of the per-response mean.
    Sum,
}

impl FromStr for MseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(MseMode::Mean),
            "sum" => Ok(MseMode::Sum),
            other => Err(Error::Config(format!("unknown mse mode '{other}' (expected mean or sum)"))),
        }
    }
}

fn check_shapes(y: &DMatrix<f64>, yhat: &DMatrix<f64>) -> Result<()> {
    if y.shape() != yhat.shape() {
        return Err(Error::DimensionMismatch {
            what: "prediction entries",
            expected: y.len(),
            found: yhat.len(),
        });
    }
    if y.nrows() == 0 {
        return Err(Error::Empty("no rows to evaluate".into()));
    }
    Ok(())
}

/// Mean squared error over all entries.
pub fn mse(y: &DMatrix<f64>, yhat: &DMatrix<f64>) -> Result<f64> {
    mse_with(y, yhat, MseMode::Mean)
}

pub fn mse_with(y: &DMatrix<f64>, yhat: &DMatrix<f64>, mode: MseMode) -> Result<f64> {
    check_shapes(y, yhat)?;
    let sse = (y - yhat).norm_squared();
    let m = y.nrows() as f64;
    Ok(match mode {
        MseMode::Mean => sse / (m * y.ncols() as f64),
        MseMode::Sum => sse / m,
    })
}

/// `1 - ||Y - Yhat||^2 / ||Y - Ybar||^2` with column means `Ybar`.
pub fn r_squared(y: &DMatrix<f64>, yhat: &DMatrix<f64>) -> Result<f64> {
    check_shapes(y, yhat)?;
    let mut tss = 0.0;
    for col in y.column_iter() {
        let mean = col.mean();
        tss += col.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    }
    if tss == 0.0 {
        return Err(Error::ZeroVariance("response has zero total variance".into()));
    }
    Ok(1.0 - (y - yhat).norm_squared() / tss)
}

/// Lower-tail p-value of the paired t statistic for `mean(a - b) < 0`.
pub fn paired_t_test_one_sided(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "paired samples",
            expected: a.len(),
            found: b.len(),
        });
    }
    let m = a.len();
    if m < 2 {
        return Err(Error::InvalidInput(format!("paired t-test needs at least 2 pairs, got {m}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / m as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            0.5
        } else if mean < 0.0 {
            0.0
        } else {
            1.0
        });
    }
    let t = mean / (var / m as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (m - 1) as f64)
        .map_err(|e| Error::InvalidInput(format!("t distribution: {e}")))?;
    Ok(dist.cdf(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// NIPALS PLS2.
    Pls,
    Simpls,
    L1Spls,
    GlobalSimpls,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Pls, Method::Simpls, Method::L1Spls, Method::GlobalSimpls];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pls => "pls",
            Method::Simpls => "simpls",
            Method::L1Spls => "l1_spls",
            Method::GlobalSimpls => "global_simpls",
        }
    }

    pub fn uses_lambda(self) -> bool {
        matches!(self, Method::L1Spls | Method::GlobalSimpls)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method '{s}' (expected one of pls, simpls, l1_spls, global_simpls)"
                ))
            })
    }
}

/// Solver settings shared by every fit of a cross-validation run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSettings {
    pub admm: AdmmOptions,
    pub l1: L1SplsConfig,
    /// Scale predictors to unit variance after centering.
    pub scale: bool,
    pub mse_mode: MseMode,
}

fn dense_model(model: PlsModel, k: usize) -> SparsePlsModel {
    let p = model.p();
    SparsePlsModel {
        diagnostics: FitDiagnostics {
            iterations: model.n_components,
            final_residual: 0.0,
            converged: true,
            mu_final: None,
            stop_reason: StopReason::Converged,
            notes: model.diagnostics.clone(),
        },
        model,
        selected: vec![true; p],
        lambda: 0.0,
        k,
    }
}

/// Fits one grid cell. Classic methods ignore `lambda` and return up to `k`
/// components.
pub fn fit_method(
    method: Method,
    settings: &FitSettings,
    data: &CenteredData,
    k: usize,
    lambda: f64,
) -> Result<SparsePlsModel> {
    match method {
        Method::Pls => Ok(dense_model(nipals_pls2(data, ComponentRequest::AtMost(k))?, k)),
        Method::Simpls => Ok(dense_model(simpls(data, ComponentRequest::AtMost(k))?, k)),
        Method::L1Spls => {
            let config = L1SplsConfig {
                lambda1: lambda,
                ..settings.l1
            };
            fit_l1_spls(data, k, &config)
        }
        Method::GlobalSimpls => fit_global_simpls(data, k, lambda, &settings.admm),
    }
}

/// `points` log-spaced values from `min_ratio * max` to `max`, ascending.
pub fn log_grid(max: f64, points: usize, min_ratio: f64) -> Vec<f64> {
    if points <= 1 {
        return vec![max];
    }
    let lo = (max * min_ratio).ln();
    let hi = max.ln();
    (0..points)
        .map(|i| {
            if i + 1 == points {
                max
            } else {
                (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}

/// Fractions of the baseline's largest useful penalty, `0.1, 0.2, ..., 0.8`.
pub const L1_GRID_FRACTIONS: [f64; 8] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];

/// Largest useful penalty of a method on the given (training) data; 0 for
/// methods without a penalty.
pub fn method_lambda_max(
    method: Method,
    settings: &FitSettings,
    data: &CenteredData,
    k: usize,
) -> Result<f64> {
    match method {
        Method::Pls | Method::Simpls => Ok(0.0),
        Method::L1Spls => Ok(l1_lambda_max(data)),
        Method::GlobalSimpls => lambda_max(data, k, &settings.admm),
    }
}

/// Default penalty grid: 8 log-spaced values down to `1e-4 * lambda_max`
/// for the global method, fixed fractions of the maximum for the baseline.
pub fn default_lambda_grid(
    method: Method,
    settings: &FitSettings,
    data: &CenteredData,
    k_max: usize,
) -> Result<Vec<f64>> {
    let max = method_lambda_max(method, settings, data, k_max)?;
    Ok(match method {
        Method::Pls | Method::Simpls => vec![0.0],
        Method::L1Spls => L1_GRID_FRACTIONS.iter().map(|f| f * max).collect(),
        Method::GlobalSimpls => log_grid(max, 8, 1e-4),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub method: Method,
    pub grid_k: Vec<usize>,
    pub grid_lambda: Vec<f64>,
    /// Mean held-out error, one row per K and one column per penalty.
    #[serde(with = "linalg::matrix_rows")]
    pub cv_mse: DMatrix<f64>,
    pub best_k: usize,
    pub best_lambda: f64,
    pub folds: FoldAssignment,
    /// Cells whose fit failed on some fold and were scored by the mean predictor.
    pub failed_cells: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn mean_prediction(train: &CenteredData, rows: usize) -> DMatrix<f64> {
    let q = train.q();
    DMatrix::from_fn(rows, q, |_, j| train.stats.y_mean[j])
}

/// Cross-validation with default solver settings.
pub fn cross_validate(
    data: &Dataset,
    method: Method,
    grid_k: &[usize],
    grid_lambda: &[f64],
    folds: &FoldAssignment,
) -> Result<CvResult> {
    cross_validate_with(data, method, &FitSettings::default(), grid_k, grid_lambda, folds)
}

/// Fits every (K, lambda) cell on every training fold (centered on that fold
/// only), scores the held-out rows and picks the cell with the smallest mean
/// error. Ties prefer the smaller K, then the larger penalty.
pub fn cross_validate_with(
    data: &Dataset,
    method: Method,
    settings: &FitSettings,
    grid_k: &[usize],
    grid_lambda: &[f64],
    folds: &FoldAssignment,
) -> Result<CvResult> {
    if grid_k.is_empty() || grid_k.contains(&0) {
        return Err(Error::Config("K grid must be nonempty with entries >= 1".into()));
    }
    let lambdas: Vec<f64> = if method.uses_lambda() {
        if grid_lambda.is_empty() {
            return Err(Error::Config("penalty grid must be nonempty".into()));
        }
        if let Some(bad) = grid_lambda.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(Error::Config(format!("penalty values must be finite and >= 0, got {bad}")));
        }
        grid_lambda.to_vec()
    } else {
        vec![0.0]
    };
    if folds.n() != data.n() {
        return Err(Error::DimensionMismatch {
            what: "fold assignment rows",
            expected: data.n(),
            found: folds.n(),
        });
    }
    for f in 0..folds.k {
        let train = folds.train_rows(f).len();
        if train < 2 {
            return Err(Error::InvalidInput(format!(
                "fold {f} leaves {train} training rows (need at least 2)"
            )));
        }
        if folds.test_rows(f).is_empty() {
            return Err(Error::InvalidInput(format!("fold {f} has no held-out rows")));
        }
    }
    let (nk, nl) = (grid_k.len(), lambdas.len());
    type FoldScores = (Vec<f64>, Vec<bool>, Vec<String>);
    let per_fold: Vec<Result<FoldScores>> = (0..folds.k)
        .into_par_iter()
        .map(|f| {
            let train = data.subset_rows(&folds.train_rows(f))?;
            let test = data.subset_rows(&folds.test_rows(f))?;
            let c = center_columns(&train, settings.scale);
            let mut scores = Vec::with_capacity(nk * nl);
            let mut failed = Vec::with_capacity(nk * nl);
            let mut warnings = Vec::new();
            for &k in grid_k {
                for &lam in &lambdas {
                    let pred = match fit_method(method, settings, &c, k, lam).and_then(|m| m.predict(test.x())) {
                        Ok(pred) => {
                            failed.push(false);
                            pred
                        }
                        Err(e) => {
                            warnings.push(format!("fold {f}, K={k}, lambda={lam}: {e}"));
                            failed.push(true);
                            mean_prediction(&c, test.n())
                        }
                    };
                    scores.push(mse_with(test.y(), &pred, settings.mse_mode)?);
                }
            }
            Ok((scores, failed, warnings))
        })
        .collect();
    let mut totals = vec![0.0; nk * nl];
    let mut any_failed = vec![false; nk * nl];
    let mut warnings = Vec::new();
    for r in per_fold {
        let (scores, failed, w) = r?;
        for (t, s) in totals.iter_mut().zip(&scores) {
            *t += s;
        }
        for (a, b) in any_failed.iter_mut().zip(&failed) {
            *a |= *b;
        }
        warnings.extend(w);
    }
    let cv_mse = DMatrix::from_fn(nk, nl, |i, j| totals[i * nl + j] / folds.k as f64);
    let mut order: Vec<(usize, usize)> = (0..nk).flat_map(|i| (0..nl).map(move |j| (i, j))).collect();
    order.sort_by(|a, b| {
        grid_k[a.0]
            .cmp(&grid_k[b.0])
            .then(lambdas[b.1].total_cmp(&lambdas[a.1]))
    });
    let mut best = order[0];
    for &cell in &order[1..] {
        if cv_mse[cell] < cv_mse[best] {
            best = cell;
        }
    }
    let failed_cells = any_failed.iter().filter(|f| **f).count();
    Ok(CvResult {
        method,
        best_k: grid_k[best.0],
        best_lambda: lambdas[best.1],
        grid_k: grid_k.to_vec(),
        grid_lambda: lambdas,
        cv_mse,
        folds: folds.clone(),
        failed_cells,
        warnings,
    })
}
