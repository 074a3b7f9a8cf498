//! `l1`-penalised sparse PLS baseline built on a surrogate direction `z`.
//!
//! Each component alternates two exact block minimisations of the joint
//! surrogate
//! `J(w, z) = (1-2k) w'Mw - 2(1-k) z'Mw + (1-k) ||M|| (||z||^2 + 2 l ||z||_1)`
//! with `M = X'YY'X / n^2`, `k = kappa`, `l = lambda1` and `||w|| = 1`. The
//! ridge part of z is the large-`lambda2` limit, so the z step is a
//! componentwise soft threshold of `Mw / ||M||`. Components are extracted on
//! score-deflated predictors and the union of supports is refitted by SIMPLS.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::admm::{finish_sparse, FitDiagnostics, SparsePlsModel, StopReason};
use crate::data::CenteredData;
use crate::error::{Error, Result};
use crate::linalg::{orient_by_largest, sym_eigen_desc};
use crate::sphere::{solve_sphere_quadratic, OrthoBasis, SphereQuadProblem};

const EXHAUSTED_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct L1SplsConfig {
    pub kappa: f64,
    pub lambda1: f64,
    pub max_outer: usize,
    pub tol: f64,
}

impl Default for L1SplsConfig {
    fn default() -> Self {
        Self {
            kappa: 0.5 - 1e-6,
            lambda1: 0.0,
            max_outer: 100,
            tol: 1e-6,
        }
    }
}

impl L1SplsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa < 0.5) {
            return Err(Error::Config(format!("kappa must lie in (0, 0.5), got {}", self.kappa)));
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return Err(Error::Config(format!("lambda1 must be finite and >= 0, got {}", self.lambda1)));
        }
        if self.max_outer == 0 {
            return Err(Error::Config("max_outer must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Per-component iterates of the baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Path {
    /// Unit-norm weights, one column per extracted component.
    pub w: DMatrix<f64>,
    /// Sparse surrogates matching `w`.
    pub z: DMatrix<f64>,
    /// Joint objective after every half step, per component.
    pub objective_trace: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub last_change: f64,
    pub notes: Vec<String>,
}

fn soft(u: &DVector<f64>, t: f64) -> DVector<f64> {
    u.map(|x| {
        let a = x.abs() - t;
        if a > 0.0 {
            a.copysign(x)
        } else {
            0.0
        }
    })
}

/// Top left singular direction of `g` with the largest-entry sign convention.
fn dominant_direction(g: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let (vals, vecs) = sym_eigen_desc(&g.tr_mul(g));
    let top = vals[0].max(0.0);
    let mut w = g * vecs.column(0);
    let n = w.norm();
    if n > 0.0 {
        w /= n;
    }
    orient_by_largest(&mut w);
    (w, top)
}

struct Surrogate<'a> {
    g: &'a DMatrix<f64>,
    m_norm: f64,
    kappa: f64,
    lambda1: f64,
}

impl Surrogate<'_> {
    fn objective(&self, w: &DVector<f64>, z: &DVector<f64>) -> f64 {
        let gw = self.g.tr_mul(w);
        let gz = self.g.tr_mul(z);
        let l1: f64 = z.iter().map(|v| v.abs()).sum();
        (1.0 - 2.0 * self.kappa) * gw.norm_squared() - 2.0 * (1.0 - self.kappa) * gz.dot(&gw)
            + (1.0 - self.kappa) * self.m_norm * (z.norm_squared() + 2.0 * self.lambda1 * l1)
    }

    fn z_step(&self, w: &DVector<f64>) -> DVector<f64> {
        let u = self.g * self.g.tr_mul(w) / self.m_norm;
        soft(&u, self.lambda1)
    }

    fn w_step(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let b = self.g * self.g.tr_mul(z) * (1.0 - self.kappa);
        let problem = SphereQuadProblem::from_factor(
            self.g.clone(),
            OrthoBasis::empty(self.g.nrows()),
            &b,
            1.0 - 2.0 * self.kappa,
        )?;
        Ok(solve_sphere_quadratic(&problem)?.w)
    }
}

/// Largest useful `lambda1`: above it the first z step is identically zero.
pub fn l1_lambda_max(data: &CenteredData) -> f64 {
    let g = data.xc.tr_mul(&data.yc) / data.n() as f64;
    let (w, top) = dominant_direction(&g);
    if top == 0.0 {
        return 0.0;
    }
    let u = &g * g.tr_mul(&w) / top;
    u.amax()
}

/// Runs the alternating updates for up to `k` components.
pub fn l1_components(data: &CenteredData, k: usize, config: &L1SplsConfig) -> Result<L1Path> {
    config.validate()?;
    if k == 0 {
        return Err(Error::InvalidInput("component count must be at least 1".into()));
    }
    let n = data.n() as f64;
    let mut x = data.xc.clone();
    let mut ws = Vec::new();
    let mut zs = Vec::new();
    let mut traces = Vec::new();
    let mut notes = Vec::new();
    let mut iterations = 0;
    let mut converged = true;
    let mut last_change = 0.0;
    let mut top0 = None;
    for comp in 0..k {
        let g = x.tr_mul(&data.yc) / n;
        let (mut w, top) = dominant_direction(&g);
        let first = *top0.get_or_insert(top);
        if top == 0.0 || top <= EXHAUSTED_TOL * first {
            notes.push(format!("cross-product exhausted after {comp} components"));
            break;
        }
        let s = Surrogate {
            g: &g,
            m_norm: top,
            kappa: config.kappa,
            lambda1: config.lambda1,
        };
        let mut trace = Vec::new();
        let mut z = s.z_step(&w);
        let mut best = (f64::INFINITY, w.clone(), z.clone());
        let mut done = false;
        for _ in 0..config.max_outer {
            iterations += 1;
            z = s.z_step(&w);
            trace.push(s.objective(&w, &z));
            if z.iter().all(|v| *v == 0.0) {
                done = true;
                break;
            }
            let w_new = s.w_step(&z)?;
            let j = s.objective(&w_new, &z);
            trace.push(j);
            last_change = (&w_new - &w).norm();
            w = w_new;
            if j < best.0 {
                best = (j, w.clone(), z.clone());
            }
            if last_change < config.tol {
                // re-synchronise z with the final w
                z = s.z_step(&w);
                trace.push(s.objective(&w, &z));
                done = true;
                break;
            }
        }
        if !done {
            converged = false;
            notes.push(format!(
                "component {} hit the outer iteration cap {}; keeping the best iterate",
                comp + 1,
                config.max_outer
            ));
            w = best.1;
            z = best.2;
        }
        traces.push(trace);
        let zn = z.norm();
        if zn == 0.0 {
            notes.push(format!("component {} has an empty surrogate", comp + 1));
            break;
        }
        let t = &x * (&z / zn);
        let tt = t.norm_squared();
        ws.push(w);
        zs.push(z);
        if tt == 0.0 {
            notes.push(format!("component {} has a zero score", comp + 1));
            break;
        }
        let p_load = x.tr_mul(&t) / tt;
        x -= &t * p_load.transpose();
    }
    let stack = |cols: &[DVector<f64>]| {
        if cols.is_empty() {
            DMatrix::zeros(data.p(), 0)
        } else {
            DMatrix::from_columns(cols)
        }
    };
    Ok(L1Path {
        w: stack(&ws),
        z: stack(&zs),
        objective_trace: traces,
        iterations,
        converged,
        last_change,
        notes,
    })
}

/// Fits the baseline with `k` components: union of the surrogate supports,
/// refitted by SIMPLS.
pub fn fit_l1_spls(data: &CenteredData, k: usize, config: &L1SplsConfig) -> Result<SparsePlsModel> {
    let path = l1_components(data, k, config)?;
    let selected: Vec<bool> = (0..data.p())
        .map(|j| path.z.row(j).iter().any(|v| *v != 0.0))
        .collect();
    let stop_reason = if !path.converged {
        StopReason::IterationCap
    } else if selected.iter().any(|s| *s) {
        StopReason::Converged
    } else {
        StopReason::EmptySupport
    };
    let diagnostics = FitDiagnostics {
        iterations: path.iterations,
        final_residual: path.last_change,
        converged: path.converged,
        mu_final: None,
        stop_reason,
        notes: path.notes,
    };
    finish_sparse(data, selected, k, config.lambda1, diagnostics)
}
