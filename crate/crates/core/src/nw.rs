//! Multivariate Nadaraya-Watson regression on curve values at impact points.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::FunctionalDataset;
use crate::error::{PoiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `prod_r exp(-u_r^2 / 2)`; normalizing constants cancel in the ratio.
    #[default]
    GaussianProduct,
    /// `prod_r 0.75 (1 - u_r^2)_+`
    EpanechnikovProduct,
}

impl KernelKind {
    pub fn weight(&self, scaled: impl Iterator<Item = f64>) -> f64 {
        match self {
            KernelKind::GaussianProduct => {
                let q: f64 = scaled.map(|u| u * u).sum();
                (-0.5 * q).exp()
            }
            KernelKind::EpanechnikovProduct => scaled
                .map(|u| 0.75 * (1.0 - u * u).max(0.0))
                .product(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BandwidthRule {
    Explicit { h: Vec<f64> },
    /// `h_r = c_h * sd(X(tau_r)) * n^(-1/(S+4))`
    RateRule { c_h: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kernel: KernelKind,
    pub bandwidths: BandwidthRule,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            kernel: KernelKind::GaussianProduct,
            bandwidths: BandwidthRule::RateRule { c_h: 1.0 },
        }
    }
}

/// Exponent of the bandwidth rate for `s` impact points.
pub fn bandwidth_rate_exponent(s: usize) -> f64 {
    -1.0 / (s as f64 + 4.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NwFit {
    /// Grid indices of the impact points used.
    pub indices: Vec<usize>,
    /// `n x S`, row `i` is `(X_i(tau_1), ..., X_i(tau_S))`.
    pub anchors: DMatrix<f64>,
    pub responses: DVector<f64>,
    pub bandwidths: Vec<f64>,
    pub kernel: KernelKind,
}

fn sample_sd(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Store anchors at the grid points nearest to `taus_hat` and resolve bandwidths.
pub fn fit_nw(data: &FunctionalDataset, taus_hat: &[f64], config: &KernelConfig) -> Result<NwFit> {
    let indices: Vec<usize> = taus_hat.iter().map(|&t| data.grid.nearest_index(t)).collect();
    fit_nw_at_indices(data, &indices, config)
}

pub fn fit_nw_at_indices(data: &FunctionalDataset, indices: &[usize], config: &KernelConfig) -> Result<NwFit> {
    let s = indices.len();
    if s == 0 {
        return Err(PoiError::InvalidParameter(
            "kernel regression needs at least one impact point".into(),
        ));
    }
    let n = data.n();
    if n < 2 {
        return Err(PoiError::InvalidParameter("kernel regression needs n >= 2".into()));
    }
    if let Some(&j) = indices.iter().find(|&&j| j >= data.p()) {
        return Err(PoiError::InvalidParameter(format!("grid index {j} out of range")));
    }
    let anchors = data.columns_at(indices);
    let bandwidths = match &config.bandwidths {
        BandwidthRule::Explicit { h } => {
            if h.len() != s {
                return Err(PoiError::DimensionMismatch(format!(
                    "{} bandwidths for {s} impact points",
                    h.len()
                )));
            }
            h.clone()
        }
        BandwidthRule::RateRule { c_h } => {
            let rate = (n as f64).powf(bandwidth_rate_exponent(s));
            (0..s)
                .map(|r| c_h * sample_sd(anchors.column(r).iter().copied()) * rate)
                .collect()
        }
    };
    if let Some(h) = bandwidths.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
        return Err(PoiError::InvalidParameter(format!("bandwidth must be > 0, got {h}")));
    }
    Ok(NwFit {
        indices: indices.to_vec(),
        anchors,
        responses: data.y.clone(),
        bandwidths,
        kernel: config.kernel,
    })
}

impl NwFit {
    pub fn s(&self) -> usize {
        self.bandwidths.len()
    }

    /// Kernel-weighted mean of the responses at `query`. When every weight is
    /// zero the response of the nearest anchor (Euclidean) is returned.
    pub fn predict(&self, query: &[f64]) -> Result<f64> {
        if query.len() != self.s() {
            return Err(PoiError::DimensionMismatch(format!(
                "query has {} coordinates, fit has {}",
                query.len(),
                self.s()
            )));
        }
        if query.iter().any(|q| !q.is_finite()) {
            return Err(PoiError::InvalidParameter("query must be finite".into()));
        }
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..self.anchors.nrows() {
            let w = self.kernel.weight(
                (0..self.s()).map(|r| (self.anchors[(i, r)] - query[r]) / self.bandwidths[r]),
            );
            num += w * self.responses[i];
            den += w;
        }
        if den > 0.0 {
            return Ok(num / den);
        }
        let mut nearest = 0;
        let mut best = f64::INFINITY;
        for i in 0..self.anchors.nrows() {
            let d: f64 = (0..self.s()).map(|r| (self.anchors[(i, r)] - query[r]).powi(2)).sum();
            if d < best {
                best = d;
                nearest = i;
            }
        }
        Ok(self.responses[nearest])
    }

    /// Predictions at every anchor (the in-sample fit).
    pub fn fitted(&self) -> Vec<f64> {
        (0..self.anchors.nrows())
            .map(|i| {
                let q: Vec<f64> = self.anchors.row(i).iter().copied().collect();
                self.predict(&q).expect("anchor rows are finite and correctly sized")
            })
            .collect()
    }
}

/// `R^-1 sum_r n_r^-1 sum_i (truth - prediction)^2`.
pub fn mase(predictions: &[Vec<f64>], truths: &[Vec<f64>]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(PoiError::DimensionMismatch(format!(
            "{} prediction sets vs {} truth sets",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(PoiError::InvalidParameter("no replications".into()));
    }
    let mut total = 0.0;
    for (r, (pred, truth)) in predictions.iter().zip(truths).enumerate() {
        if pred.len() != truth.len() || pred.is_empty() {
            return Err(PoiError::DimensionMismatch(format!(
                "replication {r}: {} predictions vs {} truths",
                pred.len(),
                truth.len()
            )));
        }
        total += average_squared_error(pred, truth);
    }
    Ok(total / predictions.len() as f64)
}

pub fn average_squared_error(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, t)| (t - p).powi(2)).sum::<f64>() / pred.len() as f64
}
