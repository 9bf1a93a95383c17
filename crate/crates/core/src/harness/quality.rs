//! Fit-quality measures and coefficient tables for binary-response models.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{PoiError, Result};
use crate::glm::{bernoulli_log_likelihood, fisher_scoring, standard_errors, with_intercept, FitOptions, GlmFit, LinkSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitQuality {
    pub mcfadden_r2: f64,
    pub somers_dxy: f64,
}

fn check_binary(y: &[f64]) -> Result<()> {
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(PoiError::InvalidData("responses must be 0 or 1".into()));
    }
    Ok(())
}

/// `(concordant - discordant) / #{pairs with y_i != y_j}`; tied
/// probabilities count as neither.
pub fn somers_dxy(y: &[f64], probs: &[f64]) -> Result<f64> {
    if y.len() != probs.len() {
        return Err(PoiError::DimensionMismatch(format!("{} responses vs {} probabilities", y.len(), probs.len())));
    }
    check_binary(y)?;
    let ones: Vec<f64> = y.iter().zip(probs).filter(|(v, _)| **v == 1.0).map(|(_, p)| *p).collect();
    let mut zeros: Vec<f64> = y.iter().zip(probs).filter(|(v, _)| **v == 0.0).map(|(_, p)| *p).collect();
    if ones.is_empty() || zeros.is_empty() {
        return Err(PoiError::InvalidData("Somers' D needs both response classes".into()));
    }
    zeros.sort_by(f64::total_cmp);
    let (mut conc, mut disc) = (0u64, 0u64);
    for p in ones {
        let below = zeros.partition_point(|&z| z < p);
        let not_above = zeros.partition_point(|&z| z <= p);
        conc += below as u64;
        disc += (zeros.len() - not_above) as u64;
    }
    let pairs = (y.len() - zeros.len()) as f64 * zeros.len() as f64;
    Ok((conc as f64 - disc as f64) / pairs)
}

pub fn mcfadden_r2(loglik: f64, null_loglik: f64) -> f64 {
    1.0 - loglik / null_loglik
}

/// Maximized log-likelihood of the intercept-only Bernoulli model.
pub fn null_log_likelihood(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    bernoulli_log_likelihood(y, &vec![ybar; y.len()])
}

pub fn fit_quality(y: &[f64], fitted_probs: &[f64], loglik: f64, null_loglik: f64) -> Result<FitQuality> {
    if fitted_probs.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return Err(PoiError::InvalidData("fitted probabilities must lie in (0, 1)".into()));
    }
    Ok(FitQuality {
        mcfadden_r2: mcfadden_r2(loglik, null_loglik),
        somers_dxy: somers_dxy(y, fitted_probs)?,
    })
}

/// Wald two-sided p-value.
pub fn wald_p_value(z: f64) -> f64 {
    let normal = Normal::standard();
    2.0 * normal.sf(z.abs())
}

/// `***` below 0.01, `**` below 0.05, `*` below 0.1.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub z: Option<f64>,
    pub p_value: Option<f64>,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub terms: Vec<Term>,
    pub converged: bool,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub n: usize,
    /// Only for binary responses under the logit link.
    pub quality: Option<FitQuality>,
}

/// Coefficient table and fit statistics for an already fitted model whose
/// design is `[1, predictors]`.
pub fn summarize_fit(name: &str, term_names: &[String], predictors: &DMatrix<f64>, y: &DVector<f64>, fit: &GlmFit) -> Result<ModelSummary> {
    if term_names.len() + 1 != fit.k() {
        return Err(PoiError::DimensionMismatch(format!("{} names for {} coefficients", term_names.len(), fit.k())));
    }
    let se = standard_errors(fit).ok();
    let names = std::iter::once("(Intercept)".to_string()).chain(term_names.iter().cloned());
    let terms = names
        .enumerate()
        .map(|(j, name)| {
            let std_error = se.as_ref().map(|s| s[j]);
            let z = std_error.map(|s| fit.beta[j] / s);
            let p_value = z.map(wald_p_value);
            Term {
                name,
                estimate: fit.beta[j],
                std_error,
                z,
                p_value,
                stars: p_value.map_or("", significance_stars).to_string(),
            }
        })
        .collect();
    let yv: Vec<f64> = y.iter().copied().collect();
    let quality = if fit.link == LinkSpec::Logit && check_binary(&yv).is_ok() {
        let probs: Vec<f64> = fit.fitted(&with_intercept(predictors)).iter().copied().collect();
        fit_quality(&yv, &probs, fit.loglik_or_quasi, null_log_likelihood(&yv)).ok()
    } else {
        None
    };
    Ok(ModelSummary {
        name: name.to_string(),
        terms,
        converged: fit.converged,
        loglik: fit.loglik_or_quasi,
        aic: fit.aic,
        bic: fit.bic,
        n: fit.n,
        quality,
    })
}

/// Fit `y ~ 1 + predictors` and summarize.
pub fn fit_and_summarize(
    name: &str,
    term_names: &[String],
    predictors: &DMatrix<f64>,
    y: &DVector<f64>,
    link: LinkSpec,
    options: &FitOptions,
) -> Result<ModelSummary> {
    let fit = fisher_scoring(&with_intercept(predictors), y, link, None, options)?;
    summarize_fit(name, term_names, predictors, y, &fit)
}
