//! Classic PLS regression: NIPALS PLS2 with explicit deflation and SIMPLS
//! with conjugacy constraints on the original variables.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Centering, CenteredData};
use crate::error::{Error, Result};
use crate::linalg::{self, orient_by_largest, sym_eigen_desc};
use crate::sphere::OrthoBasis;

pub const NIPALS_TOL: f64 = 1e-10;
pub const NIPALS_MAX_ITER: usize = 500;
/// Extraction stops once the (projected or deflated) cross-product falls
/// below this fraction of `||Xc'Yc||`.
const EXTRACTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlsAlgorithm {
    Nipals,
    Simpls,
}

/// How many components the caller needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentRequest {
    /// Fail unless exactly this many components can be extracted.
    Exactly(usize),
    /// Stop early (with a diagnostic) if the data run out of components.
    AtMost(usize),
}

impl ComponentRequest {
    pub fn count(self) -> usize {
        match self {
            ComponentRequest::Exactly(k) | ComponentRequest::AtMost(k) => k,
        }
    }
}

/// Fitted latent-variable regression model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsModel {
    pub algorithm: PlsAlgorithm,
    #[serde(with = "linalg::matrix_rows")]
    pub weights: DMatrix<f64>,
    #[serde(with = "linalg::matrix_rows")]
    pub scores: DMatrix<f64>,
    #[serde(with = "linalg::matrix_rows")]
    pub x_loadings: DMatrix<f64>,
    #[serde(with = "linalg::matrix_rows")]
    pub y_loadings: DMatrix<f64>,
    #[serde(with = "linalg::matrix_rows")]
    pub coefficients: DMatrix<f64>,
    pub n_components: usize,
    pub centering: Centering,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

/// Quantities specific to the deflation algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct NipalsInternals {
    /// Weights in deflated space, unit norm.
    pub r: DMatrix<f64>,
    /// Response weights, unit norm.
    pub c: DMatrix<f64>,
    /// Inner regression vectors `Y't / t't`.
    pub b: DMatrix<f64>,
    /// Response scores `Y c`.
    pub v: DMatrix<f64>,
    /// Power iterations used per component.
    pub iterations: Vec<usize>,
}

impl PlsModel {
    /// Model with no components: predicts the training response mean.
    pub fn mean_model(algorithm: PlsAlgorithm, n: usize, centering: Centering) -> Self {
        let p = centering.x_mean.len();
        let q = centering.y_mean.len();
        Self {
            algorithm,
            weights: DMatrix::zeros(p, 0),
            scores: DMatrix::zeros(n, 0),
            x_loadings: DMatrix::zeros(p, 0),
            y_loadings: DMatrix::zeros(q, 0),
            coefficients: DMatrix::zeros(p, q),
            n_components: 0,
            centering,
            diagnostics: Vec::new(),
        }
    }

    pub fn p(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn q(&self) -> usize {
        self.coefficients.ncols()
    }

    /// `(Xnew - x_mean) / x_scale * beta + y_mean`.
    pub fn predict(&self, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let xc = self.centering.transform_x(x_new)?;
        let mut out = xc * &self.coefficients;
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.centering.y_mean[j]);
        }
        Ok(out)
    }
}

pub fn predict(model: &PlsModel, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    model.predict(x_new)
}

/// Fills loadings and coefficients from weights and scores:
/// `Q' = (T'T)^{-1} T'Yc`, `P' = (T'T)^{-1} T'Xc`, `beta = W Q'`.
fn assemble(
    algorithm: PlsAlgorithm,
    data: &CenteredData,
    weights: DMatrix<f64>,
    scores: DMatrix<f64>,
    diagnostics: Vec<String>,
) -> PlsModel {
    let k = weights.ncols();
    if k == 0 {
        let mut m = PlsModel::mean_model(algorithm, data.n(), data.stats.clone());
        m.diagnostics = diagnostics;
        return m;
    }
    let tt = scores.tr_mul(&scores);
    let chol = tt.cholesky().expect("latent scores are linearly independent");
    let q_t = chol.solve(&scores.tr_mul(&data.yc));
    let p_t = chol.solve(&scores.tr_mul(&data.xc));
    let coefficients = &weights * &q_t;
    PlsModel {
        algorithm,
        x_loadings: p_t.transpose(),
        y_loadings: q_t.transpose(),
        coefficients,
        n_components: k,
        weights,
        scores,
        centering: data.stats.clone(),
        diagnostics,
    }
}

fn finish_request(
    request: ComponentRequest,
    achieved: usize,
    reason: &str,
    diagnostics: &mut Vec<String>,
) -> Result<()> {
    let wanted = request.count();
    if achieved < wanted {
        if let ComponentRequest::Exactly(_) = request {
            return Err(Error::TooManyComponents {
                requested: wanted,
                achievable: achieved,
            });
        }
        diagnostics.push(format!(
            "stopped after {achieved} of {wanted} components: {reason}"
        ));
    }
    Ok(())
}

/// SIMPLS: each weight is the dominant eigenvector of the cross-product
/// matrix projected off `span{Xc'Xc w_j : j < k}`. The eigenproblem is solved
/// in the q x q space `F'F` with `F = (I - HH') Xc'Yc`.
pub fn simpls(data: &CenteredData, request: ComponentRequest) -> Result<PlsModel> {
    let (n, p) = (data.n(), data.p());
    let k_max = request.count();
    let s = data.xc.tr_mul(&data.yc);
    let s_norm = s.norm();
    let mut basis = OrthoBasis::empty(p);
    let mut ws: Vec<DVector<f64>> = Vec::with_capacity(k_max);
    let mut ts: Vec<DVector<f64>> = Vec::with_capacity(k_max);
    let mut reason = "";
    for _ in 0..k_max {
        if basis.complement_dim() == 0 {
            reason = "constraint directions span all variables";
            break;
        }
        let f = basis.project_matrix(&s);
        let (vals, vecs) = sym_eigen_desc(&f.tr_mul(&f));
        let top = vals.first().copied().unwrap_or(0.0).max(0.0);
        if s_norm == 0.0 || top.sqrt() <= EXTRACTION_TOL * s_norm {
            reason = "projected cross-product is numerically zero";
            break;
        }
        let mut w = &f * vecs.column(0);
        w.normalize_mut();
        // one more projection keeps w conjugate to earlier weights at full precision
        w = basis.project(&w);
        w.normalize_mut();
        orient_by_largest(&mut w);
        let t = &data.xc * &w;
        if t.norm() <= EXTRACTION_TOL * data.xc.norm() {
            reason = "weight lies in the null space of X";
            break;
        }
        basis.extend(&data.xc.tr_mul(&t));
        ws.push(w);
        ts.push(t);
    }
    let mut diagnostics = Vec::new();
    finish_request(request, ws.len(), reason, &mut diagnostics)?;
    let weights = stack(p, &ws);
    let scores = stack(n, &ts);
    Ok(assemble(PlsAlgorithm::Simpls, data, weights, scores, diagnostics))
}

fn stack(rows: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    if cols.is_empty() {
        DMatrix::zeros(rows, 0)
    } else {
        DMatrix::from_columns(cols)
    }
}

/// NIPALS PLS2 with X and Y deflation.
pub fn nipals_pls2(data: &CenteredData, request: ComponentRequest) -> Result<PlsModel> {
    nipals_pls2_detailed(data, request).map(|(m, _)| m)
}

pub fn nipals_pls2_detailed(
    data: &CenteredData,
    request: ComponentRequest,
) -> Result<(PlsModel, NipalsInternals)> {
    let (n, p, q) = (data.n(), data.p(), data.q());
    let k_max = request.count();
    let cross_norm = data.xc.tr_mul(&data.yc).norm();
    let mut x = data.xc.clone();
    let mut y = data.yc.clone();
    let (mut rs, mut cs, mut bs, mut vs, mut ts, mut ps) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut iterations = Vec::new();
    let mut reason = "";
    for comp in 0..k_max {
        let cross = x.tr_mul(&y);
        if cross_norm == 0.0 || cross.norm() <= EXTRACTION_TOL * cross_norm {
            reason = if cross_norm == 0.0 {
                "response is identically zero after centering"
            } else {
                "deflated cross-product is numerically zero"
            };
            break;
        }
        let jmax = (0..q)
            .max_by(|&a, &b| y.column(a).norm().total_cmp(&y.column(b).norm()))
            .unwrap_or(0);
        let mut r = cross.column(jmax).into_owned();
        if r.norm() == 0.0 {
            // fall back to the column of X'Y with the largest norm
            let j = (0..q)
                .max_by(|&a, &b| cross.column(a).norm().total_cmp(&cross.column(b).norm()))
                .unwrap_or(0);
            r = cross.column(j).into_owned();
        }
        r.normalize_mut();
        let mut converged = None;
        for it in 1..=NIPALS_MAX_ITER {
            let t = &x * &r;
            let mut c = y.tr_mul(&t);
            c.normalize_mut();
            let v = &y * &c;
            let mut r_new = x.tr_mul(&v);
            r_new.normalize_mut();
            let change = (&r_new - &r).norm();
            r = r_new;
            if change < NIPALS_TOL {
                converged = Some(it);
                break;
            }
        }
        let Some(iters) = converged else {
            return Err(Error::NonConvergence {
                component: comp + 1,
                iterations: NIPALS_MAX_ITER,
            });
        };
        orient_by_largest(&mut r);
        let t = &x * &r;
        let tt = t.norm_squared();
        let mut c = y.tr_mul(&t);
        c.normalize_mut();
        let v = &y * &c;
        let p_load = x.tr_mul(&t) / tt;
        let b = y.tr_mul(&t) / tt;
        x -= &t * p_load.transpose();
        y -= &t * b.transpose();
        iterations.push(iters);
        rs.push(r);
        cs.push(c);
        bs.push(b);
        vs.push(v);
        ts.push(t);
        ps.push(p_load);
    }
    let mut diagnostics = Vec::new();
    finish_request(request, rs.len(), reason, &mut diagnostics)?;
    let r = stack(p, &rs);
    let p_mat = stack(p, &ps);
    let weights = if rs.is_empty() {
        DMatrix::zeros(p, 0)
    } else {
        let pr = p_mat.tr_mul(&r);
        let inv = pr
            .try_inverse()
            .ok_or_else(|| Error::InvalidInput("P'R is singular".into()))?;
        &r * inv
    };
    let scores = stack(n, &ts);
    let model = assemble(PlsAlgorithm::Nipals, data, weights, scores, diagnostics);
    let internals = NipalsInternals {
        r,
        c: stack(q, &cs),
        b: stack(q, &bs),
        v: stack(n, &vs),
        iterations,
    };
    Ok((model, internals))
}
