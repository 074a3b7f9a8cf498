//! Sphere-constrained quadratic minimisation in the orthogonal complement of
//! a set of constraint directions.
//!
//! The problem is `min w'Aw - 2b'w` subject to `||w|| = 1` and `H'w = 0`, where
//! `A = s * F F'` with `F = (I - HH') G` is a low-rank matrix given through its
//! factor `G` (p x q) and a signed curvature `s`. For the ADMM weight update
//! `s = -1` and `G = Xc'Yc / n`. All spectral quantities come from the q x q
//! matrix `F'F = G'(I - HH')G`, and resolvent applications use the Woodbury
//! identity so that only q x q systems are ever solved.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{orient_by_first_nonzero, sym_eigen_desc};

/// Relative tolerance below which a Gram-Schmidt residual counts as dependent.
const GS_TOL: f64 = 1e-10;
/// Eigenvalues of `F'F` below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-13;
/// Relative closeness to `d_min` for membership in the bottom eigenspace.
const BOTTOM_TOL: f64 = 1e-10;
/// Fraction of `||b||` below which `b` is considered to miss the bottom eigenspace.
const HARD_CASE_TOL: f64 = 1e-10;
/// Residual target `|g(alpha) - 1|` for the secular iteration.
pub const SECULAR_TOL: f64 = 1e-10;
pub const SECULAR_MAX_ITER: usize = 200;

/// Orthonormal basis `H` of the constraint directions, stored by columns.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoBasis {
    dim: usize,
    cols: Vec<DVector<f64>>,
}

/// Outcome of extending a basis by one direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extension {
    Appended,
    /// The direction lay (numerically) inside the current span; nothing was added.
    Degenerate,
}

impl OrthoBasis {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            cols: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    /// Dimension of the orthogonal complement.
    pub fn complement_dim(&self) -> usize {
        self.dim - self.cols.len()
    }

    pub fn columns(&self) -> &[DVector<f64>] {
        &self.cols
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        if self.cols.is_empty() {
            DMatrix::zeros(self.dim, 0)
        } else {
            DMatrix::from_columns(&self.cols)
        }
    }

    /// Applies `I - HH'`.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = x.clone();
        for h in &self.cols {
            let c = h.dot(&out);
            out.axpy(-c, h, 1.0);
        }
        out
    }

    /// Applies `I - HH'` to every column.
    pub fn project_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        for mut col in out.column_iter_mut() {
            for h in &self.cols {
                let c = h.dot(&col);
                col.axpy(-c, h, 1.0);
            }
        }
        out
    }

    /// Appends the normalised component of `v` orthogonal to the current span.
    /// Projection is done twice to keep the basis orthonormal to working precision.
    pub fn extend(&mut self, v: &DVector<f64>) -> Extension {
        assert_eq!(v.len(), self.dim, "direction length must match basis dimension");
        let scale = v.norm();
        if scale == 0.0 || self.cols.len() == self.dim {
            return Extension::Degenerate;
        }
        let r = self.project(&self.project(v));
        let rn = r.norm();
        if rn <= GS_TOL * scale {
            return Extension::Degenerate;
        }
        self.cols.push(r / rn);
        Extension::Appended
    }
}

/// Functional form of the basis extension: returns the (possibly unchanged)
/// basis and whether a column was appended.
pub fn gram_schmidt_extend(mut h: OrthoBasis, v: &DVector<f64>) -> (OrthoBasis, Extension) {
    let ext = h.extend(v);
    (h, ext)
}

/// Spectral summary of `A` restricted to the complement.
#[derive(Debug, Clone)]
struct Spectrum {
    /// Nonzero eigenvalues `s * sigma_i^2`, ordered by decreasing `sigma_i`.
    values: Vec<f64>,
    /// Orthonormal eigenvectors for `values`, ambient coordinates (p x rank).
    vectors: DMatrix<f64>,
    /// Multiplicity of the eigenvalue 0 inside the complement.
    null_dim: usize,
    d_min: f64,
    d_max: f64,
}

impl Spectrum {
    fn new(f: &DMatrix<f64>, curvature: f64, complement_dim: usize) -> Self {
        let gram = f.transpose() * f;
        let (sig2, v) = sym_eigen_desc(&gram);
        let top = sig2.first().copied().unwrap_or(0.0).max(0.0);
        let rank = if curvature == 0.0 || top == 0.0 {
            0
        } else {
            sig2.iter()
                .take_while(|&&s| s > RANK_TOL * top)
                .count()
                .min(complement_dim)
        };
        let mut vectors = DMatrix::zeros(f.nrows(), rank);
        let mut values = Vec::with_capacity(rank);
        for i in 0..rank {
            let mut u = f * v.column(i);
            let un = u.norm();
            u /= un;
            vectors.set_column(i, &u);
            values.push(curvature * un * un);
        }
        let null_dim = complement_dim - rank;
        let mut d_min = f64::INFINITY;
        let mut d_max = f64::NEG_INFINITY;
        for &d in values.iter().chain((null_dim > 0).then_some(&0.0)) {
            d_min = d_min.min(d);
            d_max = d_max.max(d);
        }
        Self {
            values,
            vectors,
            null_dim,
            d_min,
            d_max,
        }
    }

    fn is_bottom(&self, d: f64) -> bool {
        let scale = self.d_min.abs().max(self.d_max.abs()).max(f64::MIN_POSITIVE);
        (d - self.d_min).abs() <= BOTTOM_TOL * scale
    }

    fn null_is_bottom(&self) -> bool {
        self.null_dim > 0 && self.is_bottom(0.0)
    }
}

/// Factored sphere-constrained quadratic, ready to be solved.
#[derive(Debug, Clone)]
pub struct SphereQuadProblem {
    cross_factor: DMatrix<f64>,
    basis: OrthoBasis,
    linear: DVector<f64>,
    curvature: f64,
    projected: DMatrix<f64>,
    spectrum: Spectrum,
}

impl SphereQuadProblem {
    /// General form: `A = curvature * (I - HH') G G' (I - HH')`, linear term
    /// `(I - HH') linear`.
    pub fn from_factor(
        cross_factor: DMatrix<f64>,
        basis: OrthoBasis,
        linear: &DVector<f64>,
        curvature: f64,
    ) -> Result<Self> {
        let p = basis.dim();
        if cross_factor.nrows() != p {
            return Err(Error::DimensionMismatch {
                what: "cross factor rows",
                expected: p,
                found: cross_factor.nrows(),
            });
        }
        if linear.len() != p {
            return Err(Error::DimensionMismatch {
                what: "linear term length",
                expected: p,
                found: linear.len(),
            });
        }
        if basis.complement_dim() == 0 {
            return Err(Error::ComplementExhausted);
        }
        let projected = basis.project_matrix(&cross_factor);
        let spectrum = Spectrum::new(&projected, curvature, basis.complement_dim());
        Ok(Self {
            linear: basis.project(linear),
            projected,
            spectrum,
            cross_factor,
            basis,
            curvature,
        })
    }

    /// The ADMM weight subproblem: `A = -(I-HH') G G' (I-HH')` and
    /// `b = (mu / 2) (I - HH') omega`.
    pub fn for_weight_update(
        cross_factor: DMatrix<f64>,
        basis: OrthoBasis,
        omega: &DVector<f64>,
        mu: f64,
    ) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::InvalidInput(format!("penalty weight mu must be > 0, got {mu}")));
        }
        Self::from_factor(cross_factor, basis, &(omega * (0.5 * mu)), -1.0)
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn complement_dim(&self) -> usize {
        self.basis.complement_dim()
    }

    pub fn basis(&self) -> &OrthoBasis {
        &self.basis
    }

    pub fn cross_factor(&self) -> &DMatrix<f64> {
        &self.cross_factor
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    /// Explicit p x p matrix `A` in ambient coordinates.
    pub fn dense_matrix(&self) -> DMatrix<f64> {
        &self.projected * self.projected.transpose() * self.curvature
    }

    /// `w'Aw - 2b'w`.
    pub fn objective(&self, w: &DVector<f64>) -> f64 {
        let fw = self.projected.tr_mul(w);
        self.curvature * fw.norm_squared() - 2.0 * self.linear.dot(w)
    }

    /// Applies `(A - alpha I)^{-1}` to a vector in the complement via
    /// `-(1/alpha) x - (s/alpha^2) F (I - (s/alpha) F'F)^{-1} F' x`.
    fn resolvent(&self, alpha: f64) -> Result<Resolvent<'_>> {
        if !(alpha < self.spectrum.d_min) {
            return Err(Error::ResolventUndefined {
                alpha,
                d_min: self.spectrum.d_min,
            });
        }
        let scale = self.spectrum.d_min.abs().max(self.spectrum.d_max.abs());
        // near alpha = 0 the Woodbury terms cancel catastrophically
        if alpha.abs() <= 1e-4 * scale || alpha == 0.0 {
            return Ok(Resolvent::Spectral { problem: self, alpha });
        }
        let q = self.projected.ncols();
        let ratio = self.curvature / alpha;
        let gram = self.projected.tr_mul(&self.projected);
        let inner = DMatrix::<f64>::identity(q, q) - gram * ratio;
        match inner.cholesky() {
            Some(chol) => Ok(Resolvent::Woodbury {
                f: &self.projected,
                chol,
                alpha,
                ratio,
            }),
            None => Ok(Resolvent::Spectral { problem: self, alpha }),
        }
    }

    fn range_coefficients(&self, x: &DVector<f64>) -> DVector<f64> {
        self.spectrum.vectors.tr_mul(x)
    }

    /// Unit vector of the bottom eigenspace, oriented so its first non-negligible
    /// coordinate is positive.
    fn bottom_vector(&self) -> DVector<f64> {
        let sp = &self.spectrum;
        let mut v = match sp.values.iter().position(|&d| d == sp.d_min) {
            Some(i) => sp.vectors.column(i).into_owned(),
            None => self.null_vector(),
        };
        orient_by_first_nonzero(&mut v);
        v
    }

    /// A unit vector of the complement orthogonal to every range eigenvector,
    /// built from the coordinate axis with the largest residual.
    fn null_vector(&self) -> DVector<f64> {
        let p = self.dim();
        let mut residual = vec![1.0f64; p];
        for h in self.basis.columns() {
            for (j, r) in residual.iter_mut().enumerate() {
                *r -= h[j] * h[j];
            }
        }
        for u in self.spectrum.vectors.column_iter() {
            for (j, r) in residual.iter_mut().enumerate() {
                *r -= u[j] * u[j];
            }
        }
        let mut best = 0;
        for j in 1..p {
            if residual[j] > residual[best] {
                best = j;
            }
        }
        let mut e = DVector::zeros(p);
        e[best] = 1.0;
        for _ in 0..2 {
            e = self.basis.project(&e);
            let c = self.range_coefficients(&e);
            e -= &self.spectrum.vectors * c;
        }
        let n = e.norm();
        e / n
    }

    /// Norm of the component of `b` inside the bottom eigenspace.
    fn bottom_projection(&self) -> f64 {
        let sp = &self.spectrum;
        let coef = self.range_coefficients(&self.linear);
        let mut acc = 0.0;
        for (i, &d) in sp.values.iter().enumerate() {
            if sp.is_bottom(d) {
                acc += coef[i] * coef[i];
            }
        }
        if sp.null_is_bottom() {
            acc += (self.linear.norm_squared() - coef.norm_squared()).max(0.0);
        }
        acc.sqrt()
    }

    /// `(A - d_min I)^+ b`, exact when `b` misses the bottom eigenspace.
    fn pseudo_inverse_solution(&self) -> DVector<f64> {
        let sp = &self.spectrum;
        let coef = self.range_coefficients(&self.linear);
        let mut y = DVector::zeros(self.dim());
        for (i, &d) in sp.values.iter().enumerate() {
            if !sp.is_bottom(d) {
                y.axpy(coef[i] / (d - sp.d_min), &sp.vectors.column(i), 1.0);
            }
        }
        if sp.null_dim > 0 && !sp.null_is_bottom() {
            let b_null = &self.linear - &sp.vectors * &coef;
            y.axpy(-1.0 / sp.d_min, &b_null, 1.0);
        }
        y
    }

    /// True when no root of `g = 1` lies strictly left of `d_min`.
    fn hard_case(&self) -> Option<DVector<f64>> {
        let bn = self.linear.norm();
        if self.bottom_projection() > HARD_CASE_TOL * bn {
            return None;
        }
        let y = self.pseudo_inverse_solution();
        (y.norm_squared() <= 1.0).then_some(y)
    }
}

enum Resolvent<'a> {
    Woodbury {
        f: &'a DMatrix<f64>,
        chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
        alpha: f64,
        ratio: f64,
    },
    Spectral {
        problem: &'a SphereQuadProblem,
        alpha: f64,
    },
}

impl Resolvent<'_> {
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Resolvent::Woodbury { f, chol, alpha, ratio } => {
                let inner = chol.solve(&f.tr_mul(x));
                let mut out = x * (-1.0 / alpha);
                out.gemv(-ratio / alpha, f, &inner, 1.0);
                out
            }
            Resolvent::Spectral { problem, alpha } => {
                let sp = &problem.spectrum;
                let coef = problem.range_coefficients(x);
                let mut out = if sp.null_dim == 0 {
                    DVector::zeros(x.len())
                } else {
                    (x - &sp.vectors * &coef) * (-1.0 / alpha)
                };
                for (i, &d) in sp.values.iter().enumerate() {
                    out.axpy(coef[i] / (d - alpha), &sp.vectors.column(i), 1.0);
                }
                out
            }
        }
    }
}

/// Smallest eigenvalue of `A` on the complement (`d_p` under decreasing order).
pub fn min_eig_factored(problem: &SphereQuadProblem) -> f64 {
    problem.spectrum.d_min
}

/// `g(alpha) = b'(A - alpha I)^{-2} b` and its derivative `2 b'(A - alpha I)^{-3} b`.
pub fn g_and_gprime(problem: &SphereQuadProblem, alpha: f64) -> Result<(f64, f64)> {
    let r = problem.resolvent(alpha)?;
    let u = r.apply(&problem.linear);
    let ru = r.apply(&u);
    Ok((u.norm_squared(), 2.0 * u.dot(&ru)))
}

/// Root of the secular equation left of `d_min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecularRoot {
    pub alpha: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `g(alpha) = 1` for the unique root left of `d_min` with the
/// iteration `alpha += 2 (g^{-1/2} - 1) / (g^{-3/2} g')`, started at
/// `d_min - eps1` and safeguarded by bisection on a maintained bracket.
pub fn secular_solve(problem: &SphereQuadProblem) -> Result<SecularRoot> {
    let d_min = problem.spectrum.d_min;
    let d_max = problem.spectrum.d_max;
    let bn = problem.linear.norm();
    if bn == 0.0 || problem.hard_case().is_some() {
        return Err(Error::NoRootLeftOfMinimum);
    }
    // g <= ||b||^2 / (d_min - alpha)^2 and g >= ||b||^2 / (d_max - alpha)^2
    let mut lo = d_min - bn;
    let mut hi = if d_max - bn < d_min { d_max - bn } else { d_min };
    let eps1 = 1e-3 * d_min.abs().max(1.0);
    let mut alpha = d_min - eps1;
    if !(alpha > lo && alpha < hi) {
        alpha = 0.5 * (lo + hi);
    }
    let mut last_residual = f64::INFINITY;
    for it in 1..=SECULAR_MAX_ITER {
        let (g, gp) = g_and_gprime(problem, alpha)?;
        let residual = (g - 1.0).abs();
        if residual <= SECULAR_TOL {
            return Ok(SecularRoot {
                alpha,
                iterations: it,
                residual,
            });
        }
        if g < 1.0 {
            lo = alpha;
        } else {
            hi = alpha;
        }
        if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
            return Ok(SecularRoot {
                alpha,
                iterations: it,
                residual,
            });
        }
        let step = 2.0 * (g.powf(-0.5) - 1.0) / (g.powf(-1.5) * gp);
        let candidate = alpha + step;
        alpha = if candidate.is_finite() && candidate > lo && candidate < hi && residual < last_residual {
            candidate
        } else {
            0.5 * (lo + hi)
        };
        last_residual = residual;
    }
    let (g, _) = g_and_gprime(problem, alpha)?;
    Err(Error::SecularIterationCap {
        iterations: SECULAR_MAX_ITER,
        residual: (g - 1.0).abs(),
    })
}

/// Global minimiser of the sphere-constrained quadratic.
#[derive(Debug, Clone, PartialEq)]
pub struct SecularSolution {
    pub alpha: f64,
    pub w: DVector<f64>,
    pub objective: f64,
    pub hard_case: bool,
    pub iterations: usize,
}

/// Solves the problem: secular root in the regular case, boundary eigenspace
/// solution in the hard case, bottom eigenvector when `b = 0`.
pub fn solve_sphere_quadratic(problem: &SphereQuadProblem) -> Result<SecularSolution> {
    if problem.complement_dim() == 0 {
        return Err(Error::ComplementExhausted);
    }
    let d_min = problem.spectrum.d_min;
    let finish = |w: DVector<f64>, alpha: f64, hard_case: bool, iterations: usize| {
        let mut w = problem.basis.project(&w);
        let n = w.norm();
        w /= n;
        SecularSolution {
            objective: problem.objective(&w),
            alpha,
            w,
            hard_case,
            iterations,
        }
    };
    if problem.linear.norm() == 0.0 {
        return Ok(finish(problem.bottom_vector(), d_min, true, 0));
    }
    if let Some(y) = problem.hard_case() {
        let tau = (1.0 - y.norm_squared()).max(0.0).sqrt();
        let w = y + problem.bottom_vector() * tau;
        return Ok(finish(w, d_min, true, 0));
    }
    let root = secular_solve(problem)?;
    let w = problem.resolvent(root.alpha)?.apply(&problem.linear);
    Ok(finish(w, root.alpha, false, root.iterations))
}
