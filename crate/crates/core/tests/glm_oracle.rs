use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

mod common;
use common::{grid_search_mle, loglik};

use poikit::glm::{
    fisher_scoring, fit_glm, information_criteria, log_likelihood, logistic, quasi_deviance, standard_errors, with_intercept, FitOptions,
    LinkSpec,
};

// 8 observations, intercept plus two predictors, no separation
fn fixture() -> (DMatrix<f64>, DVector<f64>) {
    let x1 = [-1.2, -0.7, -0.3, 0.0, 0.4, 0.9, 1.3, 1.8];
    let x2 = [0.5, -1.0, 1.4, -0.2, 0.3, -0.8, 1.1, -0.5];
    let y = [0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0];
    let design = DMatrix::from_fn(8, 3, |i, c| match c {
        0 => 1.0,
        1 => x1[i],
        _ => x2[i],
    });
    (design, DVector::from_column_slice(&y))
}

#[test]
fn logit_matches_grid_search_mle() {
    let (design, y) = fixture();
    let fit = fit_glm(&design, &y, LinkSpec::Logit).unwrap();
    assert!(fit.converged);

    let center = grid_search_mle(&design, &y);
    for j in 0..3 {
        assert!((fit.beta[j] - center[j]).abs() < 1e-3, "coef {j}: {} vs {}", fit.beta[j], center[j]);
    }
}

#[test]
fn vcov_matches_inverted_numerical_hessian() {
    let (design, y) = fixture();
    let fit = fit_glm(&design, &y, LinkSpec::Logit).unwrap();
    let h = 1e-4;
    let f = |b: &[f64]| loglik(&design, &y, b);
    let mut hess = DMatrix::zeros(3, 3);
    for r in 0..3 {
        for c in 0..3 {
            let shift = |dr: f64, dc: f64| {
                let mut b = fit.beta.clone();
                b[r] += dr;
                b[c] += dc;
                f(&b)
            };
            hess[(r, c)] = (shift(h, h) - shift(h, -h) - shift(-h, h) + shift(-h, -h)) / (4.0 * h * h);
        }
    }
    let num_vcov = (-hess).try_inverse().unwrap();
    let vcov = fit.vcov_matrix();
    for r in 0..3 {
        for c in 0..3 {
            assert_relative_eq!(vcov[(r, c)], num_vcov[(r, c)], max_relative = 1e-3);
        }
    }
}

#[test]
fn identity_orthonormal_standard_errors() {
    // columns of a 8x4 Hadamard block: X'X = 8 I
    let signs = [
        [1.0, 1.0, 1.0, 1.0],
        [1.0, -1.0, 1.0, -1.0],
        [1.0, 1.0, -1.0, -1.0],
        [1.0, -1.0, -1.0, 1.0],
        [1.0, 1.0, 1.0, 1.0],
        [1.0, -1.0, 1.0, -1.0],
        [1.0, 1.0, -1.0, -1.0],
        [1.0, -1.0, -1.0, 1.0],
    ];
    let design = DMatrix::from_fn(8, 4, |i, c| signs[i][c]);
    let y = DVector::from_column_slice(&[0.3, 1.2, -0.4, 2.0, 0.1, 0.9, -1.1, 0.5]);
    let fit = fit_glm(&design, &y, LinkSpec::Identity).unwrap();
    for se in standard_errors(&fit).unwrap() {
        assert_relative_eq!(se, 1.0 / 8f64.sqrt(), epsilon = 1e-12);
    }

    // rescaling a predictor by c divides its SE by |c|
    let mut scaled = design.clone();
    scaled.column_mut(2).scale_mut(-4.0);
    let se2 = standard_errors(&fit_glm(&scaled, &y, LinkSpec::Identity).unwrap()).unwrap();
    assert_relative_eq!(se2[2], 1.0 / 8f64.sqrt() / 4.0, epsilon = 1e-12);
}

#[test]
fn identity_link_is_ols() {
    let design = with_intercept(&DMatrix::from_fn(30, 2, |i, c| ((i * (c + 3)) % 7) as f64 - 3.0 + 0.1 * i as f64));
    let y = DVector::from_fn(30, |i, _| (i as f64 * 0.37).sin() * 2.0 + 0.5);
    let fit = fit_glm(&design, &y, LinkSpec::Identity).unwrap();
    let ols = (design.tr_mul(&design)).try_inverse().unwrap() * design.tr_mul(&y);
    for j in 0..3 {
        assert_relative_eq!(fit.beta[j], ols[j], epsilon = 1e-10);
    }
}

#[test]
fn logit_quasi_deviance_is_twice_loglik_gap() {
    // binary responses: the saturated log-likelihood is 0
    let design = with_intercept(&DMatrix::from_column_slice(5, 1, &[-1.0, -0.2, 0.3, 0.8, 1.5]));
    let y = DVector::from_column_slice(&[0.0, 1.0, 0.0, 1.0, 1.0]);
    let beta = DVector::from_column_slice(&[0.2, 1.1]);
    let dev = quasi_deviance(&design, &y, &beta, LinkSpec::Logit);
    assert_relative_eq!(dev, -2.0 * (log_likelihood(&design, &y, &beta, LinkSpec::Logit) - 0.0), epsilon = 1e-12);

    // fractional responses: compare with the integral -2 int_y^mu (y - t) / (t (1 - t)) dt
    let yf = DVector::from_column_slice(&[0.1, 0.65, 0.3, 0.9, 0.5]);
    let dev = quasi_deviance(&design, &yf, &beta, LinkSpec::Logit);
    let eta = &design * &beta;
    let mut quad = 0.0;
    for i in 0..5 {
        let (lo, hi) = (yf[i], logistic(eta[i]));
        let m = 2000;
        let h = (hi - lo) / m as f64;
        let g = |t: f64| (yf[i] - t) / (t * (1.0 - t));
        let mut s = g(lo) + g(hi);
        for q in 1..m {
            s += if q % 2 == 1 { 4.0 } else { 2.0 } * g(lo + q as f64 * h);
        }
        quad += -2.0 * s * h / 3.0;
    }
    assert_relative_eq!(dev, quad, max_relative = 1e-9);
}

#[test]
fn information_criteria_on_reported_values() {
    let (aic, bic) = information_criteria(-36.03, 3, 65);
    assert!((aic - 78.07).abs() <= 0.01);
    assert_relative_eq!(bic, 72.06 + 3.0 * 65f64.ln(), epsilon = 1e-12);
    assert!((bic - 84.58).abs() < 0.01);
}

#[test]
fn separation_is_not_converged() {
    let design = with_intercept(&DMatrix::from_column_slice(6, 1, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]));
    let y = DVector::from_column_slice(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    let fit = fit_glm(&design, &y, LinkSpec::Logit).unwrap();
    assert!(!fit.converged);
    assert!(standard_errors(&fit).is_err());
}

fn design_strategy() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (40usize..120).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(-2.0f64..2.0, n),
            prop::collection::vec(-2.0f64..2.0, n),
            prop::collection::vec(0.0f64..1.0, n),
        )
    })
}

fn binary(x1: &[f64], x2: &[f64], u: &[f64]) -> DVector<f64> {
    DVector::from_fn(x1.len(), |i, _| if u[i] < logistic(0.3 + 0.8 * x1[i] - 0.6 * x2[i]) { 1.0 } else { 0.0 })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn converged_fits_have_zero_score((n, x1, x2, u) in design_strategy()) {
        let design = DMatrix::from_fn(n, 3, |i, c| [1.0, x1[i], x2[i]][c]);
        let y = binary(&x1, &x2, &u);
        let opts = FitOptions::default();
        let fit = fisher_scoring(&design, &y, LinkSpec::Logit, None, &opts).unwrap();
        if fit.converged {
            let mu = fit.fitted(&design);
            let score = design.tr_mul(&(&y - mu));
            prop_assert!(score.amax() <= opts.tol);
            let vcov = fit.vcov_matrix();
            prop_assert!((&vcov - vcov.transpose()).amax() <= 1e-12 * vcov.amax());
            prop_assert!(vcov.clone().cholesky().is_some());
        }
    }

    #[test]
    fn shifting_a_predictor_moves_only_the_intercept((n, x1, x2, u) in design_strategy(), shift in -5.0f64..5.0) {
        let y = binary(&x1, &x2, &u);
        let d1 = DMatrix::from_fn(n, 3, |i, c| [1.0, x1[i], x2[i]][c]);
        let d2 = DMatrix::from_fn(n, 3, |i, c| [1.0, x1[i] + shift, x2[i]][c]);
        let (f1, f2) = (fit_glm(&d1, &y, LinkSpec::Logit).unwrap(), fit_glm(&d2, &y, LinkSpec::Logit).unwrap());
        prop_assume!(f1.converged && f2.converged);
        prop_assert!((f1.loglik_or_quasi - f2.loglik_or_quasi).abs() <= 1e-8);
        prop_assert!((f1.beta[1] - f2.beta[1]).abs() <= 1e-6);
        prop_assert!((f1.beta[2] - f2.beta[2]).abs() <= 1e-6);
        prop_assert!((f2.beta[0] - (f1.beta[0] - shift * f1.beta[1])).abs() <= 1e-6);
    }

    #[test]
    fn adding_a_predictor_never_lowers_loglik((n, x1, x2, u) in design_strategy()) {
        let y = binary(&x1, &x2, &u);
        let small = DMatrix::from_fn(n, 2, |i, c| [1.0, x1[i]][c]);
        let big = DMatrix::from_fn(n, 3, |i, c| [1.0, x1[i], x2[i]][c]);
        let (fs, fb) = (fit_glm(&small, &y, LinkSpec::Logit).unwrap(), fit_glm(&big, &y, LinkSpec::Logit).unwrap());
        prop_assume!(fs.converged && fb.converged);
        prop_assert!(fb.loglik_or_quasi >= fs.loglik_or_quasi - 1e-9);
        let ln_n = (n as f64).ln();
        prop_assert!((fb.bic - fs.bic - (-2.0 * (fb.loglik_or_quasi - fs.loglik_or_quasi) + ln_n)).abs() < 1e-9);
    }
}
