//! Jointly sparse global SIMPLS fitted by an augmented-Lagrangian splitting:
//! a greedy sphere-constrained W step, a row-wise soft-threshold M step and
//! a scaled dual update, followed by a SIMPLS refit on the selected rows.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::CenteredData;
use crate::error::{Error, Result};
use crate::pls::{simpls, ComponentRequest, PlsAlgorithm, PlsModel};
use crate::sphere::{solve_sphere_quadratic, OrthoBasis, SphereQuadProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmmOptions {
    pub mu0: f64,
    pub mu_growth: f64,
    /// Absolute Frobenius bound on `||W - M||`.
    pub eps: f64,
    pub max_iter: usize,
    /// Rescale the scaled dual by `mu_old / mu_new` whenever `mu` grows.
    pub dual_rescale: bool,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self {
            mu0: 2000.0,
            mu_growth: 1.01,
            eps: 1e-4,
            max_iter: 500,
            dual_rescale: true,
        }
    }
}

impl AdmmOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu0 > 0.0 && self.mu0.is_finite()) {
            return Err(Error::Config(format!("mu0 must be positive, got {}", self.mu0)));
        }
        if !(self.mu_growth >= 1.0 && self.mu_growth.is_finite()) {
            return Err(Error::Config(format!("mu growth must be >= 1, got {}", self.mu_growth)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Iterate of the splitting scheme. `d` is the scaled dual.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub w: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub mu: f64,
    pub iteration: usize,
    pub primal_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    EmptySupport,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mu_final: Option<f64>,
    pub stop_reason: StopReason,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Sparse fit: a PLS model on the selected predictors embedded in the full
/// predictor space, with zero coefficient rows elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsePlsModel {
    pub model: PlsModel,
    pub selected: Vec<bool>,
    pub lambda: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub diagnostics: FitDiagnostics,
}

impl SparsePlsModel {
    pub fn n_selected(&self) -> usize {
        self.selected.iter().filter(|s| **s).count()
    }

    pub fn selected_indices(&self) -> Vec<usize> {
        (0..self.selected.len()).filter(|&j| self.selected[j]).collect()
    }

    pub fn predict(&self, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.model.predict(x_new)
    }
}

/// `[||delta|| - t]_+ delta / ||delta||`, exactly zero when `||delta|| <= t`.
pub fn row_soft_threshold(delta: &DVector<f64>, t: f64) -> DVector<f64> {
    if t == 0.0 {
        return delta.clone();
    }
    let norm = delta.norm();
    if norm <= t || norm == 0.0 {
        return DVector::zeros(delta.len());
    }
    let excess = norm - t;
    delta.map(|x| x * excess / norm)
}

/// Row-wise soft thresholding of `W - D` at `lambda / mu`.
pub fn update_m(w: &DMatrix<f64>, d: &DMatrix<f64>, lambda: f64, mu: f64) -> DMatrix<f64> {
    let delta = w - d;
    let t = lambda / mu;
    if t == 0.0 {
        return delta;
    }
    let mut m = DMatrix::zeros(delta.nrows(), delta.ncols());
    for j in 0..delta.nrows() {
        let norm = delta.row(j).norm();
        if norm > t && norm > 0.0 {
            let excess = norm - t;
            for k in 0..delta.ncols() {
                m[(j, k)] = delta[(j, k)] * excess / norm;
            }
        }
    }
    m
}

/// Greedy W step: column k minimises `-||G' w||^2 - mu (m_k + d_k)' w` on the
/// unit sphere, conjugate to the earlier columns, with `G = Xc'Yc / n`.
pub fn update_w(
    xc: &DMatrix<f64>,
    yc: &DMatrix<f64>,
    m: &DMatrix<f64>,
    d: &DMatrix<f64>,
    mu: f64,
) -> Result<DMatrix<f64>> {
    let cross = xc.tr_mul(yc) / xc.nrows() as f64;
    update_w_with(&cross, xc, m, d, mu)
}

fn update_w_with(
    cross: &DMatrix<f64>,
    xc: &DMatrix<f64>,
    m: &DMatrix<f64>,
    d: &DMatrix<f64>,
    mu: f64,
) -> Result<DMatrix<f64>> {
    let (p, k_total) = (m.nrows(), m.ncols());
    let mut basis = OrthoBasis::empty(p);
    let mut w = DMatrix::zeros(p, k_total);
    for k in 0..k_total {
        let omega = m.column(k) + d.column(k);
        let problem = match SphereQuadProblem::for_weight_update(cross.clone(), basis.clone(), &omega, mu) {
            Err(Error::ComplementExhausted) => {
                return Err(Error::TooManyComponents {
                    requested: k_total,
                    achievable: k,
                })
            }
            other => other?,
        };
        let sol = solve_sphere_quadratic(&problem)?;
        w.set_column(k, &sol.w);
        basis.extend(&xc.tr_mul(&(xc * &sol.w)));
    }
    Ok(w)
}

fn initial_weights(data: &CenteredData, k: usize, notes: &mut Vec<String>) -> Result<DMatrix<f64>> {
    let init = simpls(data, ComponentRequest::AtMost(k))?;
    let mut m = DMatrix::zeros(data.p(), k);
    let got = init.weights.ncols();
    m.columns_mut(0, got).copy_from(&init.weights);
    if got < k {
        notes.push(format!(
            "initialisation extracted {got} of {k} components; remaining columns start at zero"
        ));
    }
    Ok(m)
}

fn max_row_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows()).map(|j| m.row(j).norm()).fold(0.0, f64::max)
}

/// Smallest penalty for which the first M step from the SIMPLS
/// initialisation zeroes every row: `mu0 * max_j ||w_(j)||`.
pub fn lambda_max(data: &CenteredData, k: usize, opts: &AdmmOptions) -> Result<f64> {
    opts.validate()?;
    let m0 = initial_weights(data, k, &mut Vec::new())?;
    let cross = data.xc.tr_mul(&data.yc) / data.n() as f64;
    let d0 = DMatrix::zeros(data.p(), k);
    let w1 = update_w_with(&cross, &data.xc, &m0, &d0, opts.mu0)?;
    let r = max_row_norm(&w1);
    let mut lam = opts.mu0 * r;
    while lam / opts.mu0 < r {
        lam = lam.next_up();
    }
    Ok(lam)
}

/// Raw splitting iterations. Returns the final (or best, on the iteration
/// cap) state with the stop reason and notes.
pub fn run_admm(
    data: &CenteredData,
    k: usize,
    lambda: f64,
    opts: &AdmmOptions,
) -> Result<(AdmmState, StopReason, Vec<String>)> {
    opts.validate()?;
    if k == 0 {
        return Err(Error::InvalidInput("component count must be at least 1".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("penalty must be finite and >= 0, got {lambda}")));
    }
    if k > data.p() {
        return Err(Error::TooManyComponents {
            requested: k,
            achievable: data.p(),
        });
    }
    let mut notes = Vec::new();
    let p = data.p();
    let cross = data.xc.tr_mul(&data.yc) / data.n() as f64;
    let mut m = initial_weights(data, k, &mut notes)?;
    let mut d = DMatrix::zeros(p, k);
    let mut mu = opts.mu0;
    let mut best: Option<AdmmState> = None;
    for it in 1..=opts.max_iter {
        let w = update_w_with(&cross, &data.xc, &m, &d, mu)?;
        m = update_m(&w, &d, lambda, mu);
        let residual = (&w - &m).norm();
        d += &m - &w;
        let state = AdmmState {
            w,
            m: m.clone(),
            d: d.clone(),
            mu,
            iteration: it,
            primal_residual: residual,
        };
        if residual < opts.eps {
            return Ok((state, StopReason::Converged, notes));
        }
        if m.iter().all(|v| *v == 0.0) {
            notes.push(format!("every row was shrunk to zero at iteration {it}"));
            return Ok((state, StopReason::EmptySupport, notes));
        }
        if best.as_ref().is_none_or(|b| residual < b.primal_residual) {
            best = Some(state);
        }
        let mu_new = mu * opts.mu_growth;
        if opts.dual_rescale {
            d *= mu / mu_new;
        }
        mu = mu_new;
    }
    let best = best.expect("at least one iteration ran");
    notes.push(format!(
        "iteration cap {} reached; returning iterate {} with residual {:e}",
        opts.max_iter, best.iteration, best.primal_residual
    ));
    Ok((best, StopReason::IterationCap, notes))
}

/// SIMPLS on the selected columns with up to `k` components, embedded back
/// into the full predictor space.
pub fn refit_selected(data: &CenteredData, selected: &[bool], k: usize) -> Result<PlsModel> {
    if selected.len() != data.p() {
        return Err(Error::DimensionMismatch {
            what: "selection mask",
            expected: data.p(),
            found: selected.len(),
        });
    }
    let cols: Vec<usize> = (0..selected.len()).filter(|&j| selected[j]).collect();
    if cols.is_empty() {
        return Err(Error::InvalidInput("no variables selected".into()));
    }
    let sub = data.select_columns(&cols);
    let fit = simpls(&sub, ComponentRequest::AtMost(k))?;
    Ok(embed(fit, &cols, data))
}

fn embed(fit: PlsModel, cols: &[usize], data: &CenteredData) -> PlsModel {
    let p = data.p();
    let spread = |m: &DMatrix<f64>| {
        let mut out = DMatrix::zeros(p, m.ncols());
        for (r, &j) in cols.iter().enumerate() {
            out.row_mut(j).copy_from(&m.row(r));
        }
        out
    };
    PlsModel {
        weights: spread(&fit.weights),
        x_loadings: spread(&fit.x_loadings),
        coefficients: spread(&fit.coefficients),
        centering: data.stats.clone(),
        ..fit
    }
}

/// Wraps a selection mask into a sparse model: SIMPLS refit, or the mean
/// model when nothing is selected.
pub(crate) fn finish_sparse(
    data: &CenteredData,
    selected: Vec<bool>,
    k: usize,
    lambda: f64,
    mut diagnostics: FitDiagnostics,
) -> Result<SparsePlsModel> {
    let model = if selected.iter().any(|s| *s) {
        refit_selected(data, &selected, k)?
    } else {
        diagnostics
            .notes
            .push("empty selection: model predicts the training mean".into());
        PlsModel::mean_model(PlsAlgorithm::Simpls, data.n(), data.stats.clone())
    };
    Ok(SparsePlsModel {
        model,
        selected,
        lambda,
        k,
        diagnostics,
    })
}

/// Fits jointly sparse global SIMPLS with `k` components and penalty `lambda`.
pub fn fit_global_simpls(
    data: &CenteredData,
    k: usize,
    lambda: f64,
    opts: &AdmmOptions,
) -> Result<SparsePlsModel> {
    let (state, stop, notes) = run_admm(data, k, lambda, opts)?;
    let selected: Vec<bool> = (0..state.m.nrows())
        .map(|j| state.m.row(j).iter().any(|v| *v != 0.0))
        .collect();
    let diagnostics = FitDiagnostics {
        iterations: state.iteration,
        final_residual: state.primal_residual,
        converged: stop == StopReason::Converged,
        mu_final: Some(state.mu),
        stop_reason: stop,
        notes,
    };
    finish_sparse(data, selected, k, lambda, diagnostics)
}

/// Column-wise sign-invariant similarity helper used by callers comparing
/// weight matrices.
pub fn weights_match_up_to_sign(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    a.shape() == b.shape()
        && (0..a.ncols()).all(|k| {
            let (x, y) = (a.column(k), b.column(k));
            (x - y).amax() <= tol || (x + y).amax() <= tol
        })
}

impl SparsePlsModel {
    /// Dense selection mask as 0/1 values, convenient for CSV dumps.
    pub fn selection_row(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.selected.len(),
            self.selected.iter().map(|s| if *s { 1.0 } else { 0.0 }),
        )
    }
}
