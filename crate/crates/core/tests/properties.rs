use std::collections::HashMap;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sparse_pls::data::{center_columns, split_folds, Dataset};
use sparse_pls::selection::{cross_validate_with, fit_method, mse_with, FitSettings, Method};
use sparse_pls::simgen::{generate_detailed, SimModelSpec};
use sparse_pls::sphere::{solve_sphere_quadratic, OrthoBasis, SphereQuadProblem};

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

fn shifted_data(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, p) = (36, 12);
    // rows differ in level so full-data and per-fold centering disagree
    let x = DMatrix::from_fn(n, p, |i, _| rng.sample::<f64, _>(StandardNormal) + i as f64 * 0.3);
    let beta = DMatrix::from_fn(p, 1, |j, _| if j < 4 { 1.0 } else { 0.0 });
    let y = &x * beta + DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
    Dataset::new(x, y).unwrap()
}

#[test]
fn cross_validation_centers_on_training_rows_only() {
    let data = shifted_data(4);
    let folds = split_folds(data.n(), 4, 11, None).unwrap();
    let settings = FitSettings::default();
    for method in [Method::Simpls, Method::GlobalSimpls, Method::L1Spls] {
        let lambda = if method.uses_lambda() { 0.01 } else { 0.0 };
        let cv = cross_validate_with(&data, method, &settings, &[2], &[lambda], &folds).unwrap();
        let full = center_columns(&data, false);
        let (mut train_only, mut leaky) = (0.0, 0.0);
        for f in 0..folds.k {
            let train = data.subset_rows(&folds.train_rows(f)).unwrap();
            let test = data.subset_rows(&folds.test_rows(f)).unwrap();
            let fit = fit_method(method, &settings, &center_columns(&train, false), 2, lambda).unwrap();
            let pred = fit.predict(test.x()).unwrap();
            train_only += mse_with(test.y(), &pred, settings.mse_mode).unwrap();
            // fit on the training rows but centred with full-data means
            let mut leaked = full.select_columns(&(0..data.p()).collect::<Vec<_>>());
            leaked.xc = sparse_pls::linalg::select_rows(&full.xc, &folds.train_rows(f));
            leaked.yc = sparse_pls::linalg::select_rows(&full.yc, &folds.train_rows(f));
            let fit = fit_method(method, &settings, &leaked, 2, lambda).unwrap();
            leaky += mse_with(test.y(), &fit.predict(test.x()).unwrap(), settings.mse_mode).unwrap();
        }
        train_only /= folds.k as f64;
        leaky /= folds.k as f64;
        assert_relative_eq!(cv.cv_mse[(0, 0)], train_only, max_relative = 1e-12);
        assert!((cv.cv_mse[(0, 0)] - leaky).abs() > 1e-6, "{method}: leaky centering indistinguishable");
    }
}

#[test]
fn model_two_block_correlations() {
    let draw = generate_detailed(&SimModelSpec::new(2, 2000, 320, 8)).unwrap();
    let x = draw.dataset.x();
    let col = |j: usize| x.column(j).iter().copied().collect::<Vec<_>>();
    let within: f64 = (0..10).map(|j| correlation(&col(j), &col(j + 20))).sum::<f64>() / 10.0;
    // latent halves 2.5 / 4.0 give variance 0.5625 against unit noise
    assert_relative_eq!(within, 0.5625 / 1.5625, epsilon = 0.05);
    let across: f64 = (0..10).map(|j| correlation(&col(j), &col(300 + j)).abs()).sum::<f64>() / 10.0;
    assert!(across < 0.05, "{across}");
    let block3: f64 = (0..10).map(|j| correlation(&col(100 + j), &col(150 + j))).sum::<f64>() / 10.0;
    // 3.5 + 0.5 * Bernoulli(0.7) against unit noise
    let v = 0.25 * 0.7 * 0.3;
    assert_relative_eq!(block3, v / (v + 1.0), epsilon = 0.05);
}

#[test]
fn uniform_indicators_follow_binomial_counts() {
    let n = 4000;
    let draw = generate_detailed(&SimModelSpec::new(2, n, 301, 21)).unwrap();
    for (col, thr) in [(0, 0.4), (1, 0.7), (2, 0.3)] {
        let hits = draw.uniforms.column(col).iter().filter(|u| **u <= thr).count() as f64;
        let (mean, sd) = (n as f64 * thr, (n as f64 * thr * (1.0 - thr)).sqrt());
        assert!((hits - mean).abs() < 5.0 * sd, "u{} hits {hits}", col + 1);
        assert!(draw.uniforms.column(col).iter().all(|u| (0.0..1.0).contains(u)));
    }
}

#[test]
fn model_four_autoregressive_block() {
    let draw = generate_detailed(&SimModelSpec::new(4, 3000, 360, 2)).unwrap();
    let x = draw.dataset.x();
    let col = |j: usize| x.column(j).iter().copied().collect::<Vec<_>>();
    let lag1: f64 = (0..20).map(|j| correlation(&col(j), &col(j + 1))).sum::<f64>() / 20.0;
    let lag3: f64 = (0..20).map(|j| correlation(&col(j), &col(j + 3))).sum::<f64>() / 20.0;
    assert_relative_eq!(lag1, 0.9, epsilon = 0.02);
    assert_relative_eq!(lag3, 0.729, epsilon = 0.03);
    let var: f64 = (0..50).map(|j| x.column(j).variance()).sum::<f64>() / 50.0;
    assert_relative_eq!(var, 1.0, epsilon = 0.1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn subject_folds_keep_groups_together(
        labels in prop::collection::vec(0u8..6, 8..40),
        k in 2usize..4,
        seed in any::<u64>(),
    ) {
        let ids: Vec<String> = labels.iter().map(|l| format!("s{l}")).collect();
        let distinct = labels.iter().collect::<std::collections::HashSet<_>>().len();
        let folds = split_folds(ids.len(), k, seed, Some(&ids));
        if k > distinct {
            prop_assert!(folds.is_err());
        } else {
            let folds = folds.unwrap();
            let mut fold_of_subject: HashMap<&str, usize> = HashMap::new();
            for (row, id) in ids.iter().enumerate() {
                let f = *fold_of_subject.entry(id).or_insert(folds.fold_of[row]);
                prop_assert_eq!(f, folds.fold_of[row]);
            }
            for f in 0..k {
                prop_assert!(!folds.test_rows(f).is_empty());
            }
            prop_assert_eq!(folds.clone(), split_folds(ids.len(), k, seed, Some(&ids)).unwrap());
        }
    }

    #[test]
    fn sphere_solution_beats_random_feasible_points(seed in any::<u64>(), p in 3usize..7, constraints in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = rng.random_range(1..=2usize);
        let mut h = OrthoBasis::empty(p);
        for _ in 0..constraints {
            h.extend(&DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal)));
        }
        let g = DMatrix::from_fn(p, q, |_, _| rng.sample::<f64, _>(StandardNormal));
        let lin = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal) * rng.random_range(0.0..3.0));
        let curvature = if seed % 2 == 0 { -1.0 } else { 0.5 };
        let problem = SphereQuadProblem::from_factor(g, h.clone(), &lin, curvature).unwrap();
        let sol = solve_sphere_quadratic(&problem).unwrap();
        prop_assert!((sol.w.norm() - 1.0).abs() < 1e-10);
        prop_assert!(h.columns().iter().all(|c| c.dot(&sol.w).abs() < 1e-10));
        let mut best = f64::INFINITY;
        for _ in 0..10_000 {
            let mut v = h.project(&DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal)));
            v /= v.norm();
            best = best.min(problem.objective(&v));
        }
        prop_assert!(sol.objective <= best + 1e-9, "solver {} vs sampled {}", sol.objective, best);
    }
}
