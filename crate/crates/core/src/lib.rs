//! Partial least squares regression with jointly sparse variable selection.
//!
//! The crate provides classic PLS fits (NIPALS PLS2 and SIMPLS), a
//! sphere-constrained quadratic solver built on the secular equation, the
//! jointly sparse global SIMPLS estimator fitted by ADMM with a row-wise
//! `l1/l2` penalty, an `l1` sparse PLS baseline, synthetic benchmark
//! generators, cross-validation and an experiment runner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod data;
pub mod error;
pub mod experiment;
pub mod l1spls;
pub mod linalg;
pub mod pls;
pub mod selection;
pub mod simgen;
pub mod sphere;

pub use admm::{fit_global_simpls, AdmmOptions, SparsePlsModel};
pub use data::{center_columns, load_csv, split_folds, CenteredData, Dataset, FoldAssignment};
pub use error::{Error, Result};
pub use l1spls::{fit_l1_spls, L1SplsConfig};
pub use pls::{nipals_pls2, simpls, ComponentRequest, PlsAlgorithm, PlsModel};
pub use selection::{cross_validate, mse, paired_t_test_one_sided, r_squared, CvResult, Method};
pub use simgen::{generate, SimModelSpec};
pub use sphere::{solve_sphere_quadratic, OrthoBasis, SecularSolution, SphereQuadProblem};
