//! Synthetic latent-block benchmarks with a known sparse coefficient vector.
//!
//! Random streams: one ChaCha8 generator per seed with stream 0 for the
//! uniform indicator draws, stream 1 for the response noise, stream 2 for
//! the autoregressive block and stream `3 + j` for the noise of predictor `j`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

const AR_BLOCK: usize = 50;
const AR_RHO: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimModelSpec {
    pub model_id: u8,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_n() -> usize {
    100
}

fn default_p() -> usize {
    5000
}

impl SimModelSpec {
    pub fn new(model_id: u8, n: usize, p: usize, seed: u64) -> Self {
        Self { model_id, n, p, seed }
    }

    /// Smallest admissible predictor count minus one.
    pub fn min_p_exclusive(model_id: u8) -> Option<usize> {
        match model_id {
            1 => Some(50),
            2 | 3 => Some(300),
            4 => Some(350),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bound = Self::min_p_exclusive(self.model_id)
            .ok_or_else(|| Error::Config(format!("model id must be 1..=4, got {}", self.model_id)))?;
        if self.p <= bound {
            return Err(Error::Config(format!(
                "model {} needs p > {bound}, got {}",
                self.model_id, self.p
            )));
        }
        if self.n < 4 {
            return Err(Error::Config(format!("need at least 4 samples, got {}", self.n)));
        }
        Ok(())
    }
}

/// Generated data with the hidden quantities behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDraw {
    pub dataset: Dataset,
    /// Hidden components, one column per block of the latent design.
    pub latent: DMatrix<f64>,
    /// Uniform indicators `u1, u2, u3` per sample (zeros for model 1).
    pub uniforms: DMatrix<f64>,
    /// Response noise `F`.
    pub noise: DVector<f64>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Lower Cholesky factor of the AR(1) correlation `rho^|i-j|`.
pub fn ar1_covariance_factor(rho: f64, size: usize) -> Result<DMatrix<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidInput(format!("AR(1) coefficient must satisfy |rho| < 1, got {rho}")));
    }
    let sigma = DMatrix::from_fn(size, size, |i, j| rho.powi(i.abs_diff(j) as i32));
    let chol = sigma
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("AR(1) covariance is not positive definite".into()))?;
    Ok(chol.l())
}

/// First-half indicator with 1-based sample index `i`: `i <= n/2`.
fn first_half(i: usize, n: usize) -> bool {
    2 * i <= n
}

/// Model 3 quarter pattern: `i <= n/4` or `n/2 < i <= 3n/4`.
fn odd_quarter(i: usize, n: usize) -> bool {
    4 * i <= n || (2 * i > n && 4 * i <= 3 * n)
}

/// Latent columns and block boundaries `(p_0, ..., p_K)` of the block design.
fn latent_design(model: u8, n: usize, p_blocks: usize, u: &DMatrix<f64>) -> (DMatrix<f64>, Vec<usize>) {
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    let tail = |u_col: usize, i: usize, thr: f64, amp: f64| 3.5 + amp * ind(u[(i, u_col)] <= thr);
    type Column<'a> = Box<dyn Fn(usize) -> f64 + 'a>;
    let (cols, bounds): (Vec<Column<'_>>, Vec<usize>) = match model {
        1 => (
            vec![
                Box::new(move |i| 3.0 * ind(first_half(i + 1, n)) + 4.0 * ind(!first_half(i + 1, n))),
                Box::new(|_| 3.5),
            ],
            vec![0, 50, p_blocks],
        ),
        2 | 4 => {
            let (lo, hi) = if model == 2 { (2.5, 4.0) } else { (1.0, 6.0) };
            (
                vec![
                    Box::new(move |i| lo * ind(first_half(i + 1, n)) + hi * ind(!first_half(i + 1, n))),
                    Box::new(move |i| tail(0, i, 0.4, 1.5)),
                    Box::new(move |i| tail(1, i, 0.7, 0.5)),
                    Box::new(move |i| tail(2, i, 0.3, -1.5)),
                    Box::new(|_| 3.5),
                ],
                vec![0, 50, 100, 200, 300, p_blocks],
            )
        }
        3 => (
            vec![
                Box::new(move |i| 2.5 * ind(first_half(i + 1, n)) + 4.0 * ind(!first_half(i + 1, n))),
                Box::new(move |i| 2.5 * ind(odd_quarter(i + 1, n)) + 4.0 * ind(!odd_quarter(i + 1, n))),
                Box::new(move |i| tail(0, i, 0.4, 1.5)),
                Box::new(move |i| tail(1, i, 0.7, 0.5)),
                Box::new(move |i| tail(2, i, 0.3, -1.5)),
                Box::new(|_| 3.5),
            ],
            vec![0, 25, 50, 100, 200, 300, p_blocks],
        ),
        _ => unreachable!("validated model id"),
    };
    let latent = DMatrix::from_fn(n, cols.len(), |i, k| cols[k](i));
    (latent, bounds)
}

fn true_beta(model: u8, p: usize) -> DVector<f64> {
    DVector::from_fn(p, |j, _| {
        if model == 4 {
            match j {
                0..=9 => 8.0 / 25.0,
                10..=19 => 6.0 / 25.0,
                20..=29 => 4.0 / 25.0,
                30..=39 => 2.0 / 25.0,
                40..=49 => 1.0 / 25.0,
                _ => 0.0,
            }
        } else if j < 50 {
            1.0 / 25.0
        } else {
            0.0
        }
    })
}

/// Generates one dataset together with its hidden quantities.
pub fn generate_detailed(spec: &SimModelSpec) -> Result<SimDraw> {
    spec.validate()?;
    let (n, p, model) = (spec.n, spec.p, spec.model_id);
    let mut urng = rng_for(spec.seed, 0);
    let uniforms = if model == 1 {
        DMatrix::zeros(n, 3)
    } else {
        // row-major draws: sample i takes u1, u2, u3 in turn
        let draws: Vec<f64> = (0..3 * n).map(|_| urng.random::<f64>()).collect();
        DMatrix::from_row_slice(n, 3, &draws)
    };
    let offset = if model == 4 { AR_BLOCK } else { 0 };
    let (latent, bounds) = latent_design(model, n, p - offset, &uniforms);
    let mut x = DMatrix::zeros(n, p);
    if model == 4 {
        let l = ar1_covariance_factor(AR_RHO, AR_BLOCK)?;
        let mut arng = rng_for(spec.seed, 2);
        let z = DMatrix::from_fn(AR_BLOCK, n, |_, _| arng.sample::<f64, _>(StandardNormal));
        // columns of L z are independent N(0, Sigma) rows of the block
        let block = (l * z).transpose();
        x.columns_mut(0, AR_BLOCK).copy_from(&block);
    }
    for k in 0..latent.ncols() {
        for jb in bounds[k]..bounds[k + 1] {
            let j = jb + offset;
            let mut erng = rng_for(spec.seed, 3 + j as u64);
            for i in 0..n {
                x[(i, j)] = latent[(i, k)] + erng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    let beta = true_beta(model, p);
    let sd = if model == 1 || model == 4 { 1.5 } else { 1.0 };
    let mut frng = rng_for(spec.seed, 1);
    let noise = DVector::from_fn(n, |_, _| sd * frng.sample::<f64, _>(StandardNormal));
    let y = &x * &beta + &noise;
    let dataset = Dataset::new(x, DMatrix::from_column_slice(n, 1, y.as_slice()))?
        .with_beta_true(DMatrix::from_column_slice(p, 1, beta.as_slice()))?;
    Ok(SimDraw {
        dataset,
        latent,
        uniforms,
        noise,
    })
}

pub fn generate(spec: &SimModelSpec) -> Result<Dataset> {
    generate_detailed(spec).map(|d| d.dataset)
}

/// Indices of the nonzero true coefficients.
pub fn true_support(spec: &SimModelSpec) -> Vec<usize> {
    (0..50.min(spec.p)).collect()
}
