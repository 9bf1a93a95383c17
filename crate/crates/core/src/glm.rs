//! Quasi-maximum-likelihood GLM fitting by Fisher scoring.
//!
//! Score `U(b) = D' V^-1 (y - mu)` and information `F(b) = D' V^-1 D`, where
//! `D` has rows `g'(eta_i) x_i` and `V = diag(sigma^2(g(eta_i)))`. Iterates
//! `b <- b + F^-1 U` until the sup-norm of the score drops below tolerance.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PoiError, Result};

/// Numerically stable standard logistic function.
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkSpec {
    /// `g = logistic`, `sigma^2(mu) = mu (1 - mu)`.
    #[default]
    Logit,
    /// `g = id`, `sigma^2 = 1`.
    Identity,
}

impl LinkSpec {
    pub fn mean(&self, eta: f64) -> f64 {
        match self {
            LinkSpec::Logit => logistic(eta),
            LinkSpec::Identity => eta,
        }
    }

    /// `g'(eta)`
    pub fn mean_deriv(&self, eta: f64) -> f64 {
        match self {
            LinkSpec::Logit => {
                let m = logistic(eta);
                m * (1.0 - m)
            }
            LinkSpec::Identity => 1.0,
        }
    }

    /// `g^-1(mu)`
    pub fn link(&self, mu: f64) -> f64 {
        match self {
            LinkSpec::Logit => (mu / (1.0 - mu)).ln(),
            LinkSpec::Identity => mu,
        }
    }

    pub fn variance(&self, mu: f64) -> f64 {
        match self {
            LinkSpec::Logit => mu * (1.0 - mu),
            LinkSpec::Identity => 1.0,
        }
    }

    /// `g'(eta) / sigma^2(g(eta))`; exactly 1 for both canonical links.
    fn score_weight(&self, _eta: f64) -> f64 {
        1.0
    }

    /// `g'(eta)^2 / sigma^2(g(eta))`
    fn info_weight(&self, eta: f64) -> f64 {
        match self {
            LinkSpec::Logit => self.mean_deriv(eta),
            LinkSpec::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Convergence tolerance on `||U||_inf`.
    pub tol: f64,
    pub max_iter: usize,
    /// `||beta||_inf` beyond this flags separation / divergence.
    pub beta_guard: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-8,
            max_iter: 100,
            beta_guard: 1e3,
        }
    }
}

/// Probability clamp used in likelihood evaluation.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub link: LinkSpec,
    /// Intercept first.
    pub beta: Vec<f64>,
    /// `F(beta)^-1`; filled with NaN when the information is singular.
    pub vcov: Vec<Vec<f64>>,
    /// Bernoulli log-likelihood (logit) or quasi-likelihood `Q` (identity).
    pub loglik_or_quasi: f64,
    pub aic: f64,
    pub bic: f64,
    pub iterations: usize,
    pub converged: bool,
    pub score_norm: f64,
    pub n: usize,
}

impl GlmFit {
    pub fn k(&self) -> usize {
        self.beta.len()
    }

    pub fn vcov_matrix(&self) -> DMatrix<f64> {
        let k = self.k();
        DMatrix::from_fn(k, k, |r, c| self.vcov[r][c])
    }

    pub fn linear_predictor(&self, design: &DMatrix<f64>) -> DVector<f64> {
        design * DVector::from_column_slice(&self.beta)
    }

    pub fn fitted(&self, design: &DMatrix<f64>) -> DVector<f64> {
        self.linear_predictor(design).map(|e| self.link.mean(e))
    }
}

/// Checks full column rank on the column-scaled Gram matrix.
fn check_rank(design: &DMatrix<f64>) -> Result<()> {
    let (n, k) = design.shape();
    let rank_err = || PoiError::RankDeficient { rows: n, cols: k };
    let gram = design.tr_mul(design);
    let scale: Vec<f64> = (0..k).map(|j| gram[(j, j)].sqrt()).collect();
    if scale.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(rank_err());
    }
    let corr = DMatrix::from_fn(k, k, |r, c| gram[(r, c)] / (scale[r] * scale[c]));
    let chol = Cholesky::new(corr).ok_or_else(rank_err)?;
    let l = chol.l();
    let min_pivot = (0..k).map(|j| l[(j, j)]).fold(f64::INFINITY, f64::min);
    if min_pivot < 1e-7 {
        return Err(rank_err());
    }
    Ok(())
}

struct ScoreState {
    score: DVector<f64>,
    info: DMatrix<f64>,
}

fn score_and_info(design: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, link: LinkSpec) -> ScoreState {
    let (n, k) = design.shape();
    let eta = design * beta;
    let mut score = DVector::zeros(k);
    let mut info = DMatrix::zeros(k, k);
    for i in 0..n {
        let e = eta[i];
        let resid = y[i] - link.mean(e);
        let su = link.score_weight(e) * resid;
        let wi = link.info_weight(e);
        for r in 0..k {
            let xr = design[(i, r)];
            score[r] += su * xr;
            let wxr = wi * xr;
            for c in 0..=r {
                info[(r, c)] += wxr * design[(i, c)];
            }
        }
    }
    for r in 0..k {
        for c in 0..r {
            info[(c, r)] = info[(r, c)];
        }
    }
    ScoreState { score, info }
}

fn objective(design: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, link: LinkSpec) -> f64 {
    match link {
        LinkSpec::Logit => log_likelihood(design, y, beta, link),
        LinkSpec::Identity => -0.5 * quasi_deviance(design, y, beta, link),
    }
}

/// Fisher scoring from `init` (zeros when `None`).
///
/// Rank deficiency is an error. Divergence, separation and singular
/// information are reported through `converged = false`.
pub fn fisher_scoring(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    link: LinkSpec,
    init: Option<&DVector<f64>>,
    options: &FitOptions,
) -> Result<GlmFit> {
    let (n, k) = design.shape();
    if y.len() != n {
        return Err(PoiError::DimensionMismatch(format!("{n} design rows but {} responses", y.len())));
    }
    if k == 0 || n <= k {
        return Err(PoiError::InvalidParameter(format!("need n > K >= 1, got n = {n}, K = {k}")));
    }
    if link == LinkSpec::Logit && y.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(PoiError::InvalidData("logit responses must lie in [0, 1]".into()));
    }
    check_rank(design)?;

    let mut beta = match init {
        Some(b) if b.len() == k => b.clone(),
        Some(b) => {
            return Err(PoiError::DimensionMismatch(format!("init has {} entries, K = {k}", b.len())))
        }
        None => DVector::zeros(k),
    };
    let mut converged = false;
    let mut iterations = 0;
    let mut current = objective(design, y, &beta, link);
    let mut state = score_and_info(design, y, &beta, link);
    loop {
        let Some(chol) = Cholesky::new(state.info.clone()) else {
            break;
        };
        let step = chol.solve(&state.score);
        // Under separation the score vanishes while beta keeps drifting, so a
        // small score alone is not enough.
        if state.score.amax() <= options.tol && step.amax() <= 1e-6 * (1.0 + beta.amax()) {
            converged = true;
            break;
        }
        if iterations >= options.max_iter {
            break;
        }
        // step halving guards against overshoot far from the optimum
        let mut scale = 1.0;
        let mut candidate = &beta + &step;
        let mut value = objective(design, y, &candidate, link);
        let mut halvings = 0;
        while !(value >= current - 1e-12 * current.abs().max(1.0)) && halvings < 30 {
            scale *= 0.5;
            candidate = &beta + &step * scale;
            value = objective(design, y, &candidate, link);
            halvings += 1;
        }
        beta = candidate;
        current = value;
        iterations += 1;
        if !beta.iter().all(|b| b.is_finite()) || beta.amax() > options.beta_guard {
            break;
        }
        state = score_and_info(design, y, &beta, link);
    }

    let vcov = match Cholesky::new(state.info.clone()) {
        Some(ch) => ch.inverse(),
        None => DMatrix::from_element(k, k, f64::NAN),
    };
    let loglik_or_quasi = objective(design, y, &beta, link);
    let (aic, bic) = information_criteria(loglik_or_quasi, k, n);
    Ok(GlmFit {
        link,
        beta: beta.iter().copied().collect(),
        vcov: (0..k).map(|r| (0..k).map(|c| vcov[(r, c)]).collect()).collect(),
        loglik_or_quasi,
        aic,
        bic,
        iterations,
        converged,
        score_norm: state.score.amax(),
        n,
    })
}

/// Fisher scoring with the default options.
pub fn fit_glm(design: &DMatrix<f64>, y: &DVector<f64>, link: LinkSpec) -> Result<GlmFit> {
    fisher_scoring(design, y, link, None, &FitOptions::default())
}

fn clamp_prob(mu: f64) -> f64 {
    mu.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Logit: Bernoulli log-likelihood with probabilities clamped to
/// `[1e-12, 1 - 1e-12]`. Identity: Gaussian log-likelihood with unit variance.
pub fn log_likelihood(design: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, link: LinkSpec) -> f64 {
    let eta = design * beta;
    match link {
        LinkSpec::Logit => eta
            .iter()
            .zip(y.iter())
            .map(|(&e, &yi)| {
                let m = clamp_prob(logistic(e));
                yi * m.ln() + (1.0 - yi) * (1.0 - m).ln()
            })
            .sum(),
        LinkSpec::Identity => {
            let n = y.len() as f64;
            let rss: f64 = eta.iter().zip(y.iter()).map(|(e, yi)| (yi - e).powi(2)).sum();
            -0.5 * rss - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
        }
    }
}

/// Bernoulli log-likelihood of given fitted probabilities (clamped).
pub fn bernoulli_log_likelihood(y: &[f64], probs: &[f64]) -> f64 {
    y.iter()
        .zip(probs)
        .map(|(&yi, &p)| {
            let m = clamp_prob(p);
            yi * m.ln() + (1.0 - yi) * (1.0 - m).ln()
        })
        .sum()
}

fn xlogy_ratio(a: f64, b: f64) -> f64 {
    // a * ln(a / b) with 0 ln 0 = 0
    if a == 0.0 {
        0.0
    } else {
        a * (a / b).ln()
    }
}

/// `-2 Q = -2 sum_i int_{y_i}^{mu_i} (y_i - t) / sigma^2(t) dt`, in closed form.
pub fn quasi_deviance(design: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, link: LinkSpec) -> f64 {
    let eta = design * beta;
    match link {
        LinkSpec::Logit => {
            2.0 * eta
                .iter()
                .zip(y.iter())
                .map(|(&e, &yi)| {
                    let m = clamp_prob(logistic(e));
                    xlogy_ratio(yi, m) + xlogy_ratio(1.0 - yi, 1.0 - m)
                })
                .sum::<f64>()
        }
        LinkSpec::Identity => eta.iter().zip(y.iter()).map(|(e, yi)| (yi - e).powi(2)).sum(),
    }
}

/// `(AIC, BIC) = (2K - 2 logL, -2 logL + K log n)`.
pub fn information_criteria(loglik: f64, k: usize, n: usize) -> (f64, f64) {
    let k = k as f64;
    (2.0 * k - 2.0 * loglik, -2.0 * loglik + k * (n as f64).ln())
}

/// Wald standard errors `sqrt(diag(F^-1))`.
pub fn standard_errors(fit: &GlmFit) -> Result<Vec<f64>> {
    if !fit.converged {
        return Err(PoiError::Numerical("standard errors need a converged fit".into()));
    }
    let se: Vec<f64> = (0..fit.k()).map(|j| fit.vcov[j][j].sqrt()).collect();
    if se.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(PoiError::Numerical("information matrix is not positive definite".into()));
    }
    Ok(se)
}

/// Prepend an intercept column.
pub fn with_intercept(predictors: &DMatrix<f64>) -> DMatrix<f64> {
    let n = predictors.nrows();
    let mut design = DMatrix::from_element(n, predictors.ncols() + 1, 1.0);
    design.view_mut((0, 1), (n, predictors.ncols())).copy_from(predictors);
    design
}
