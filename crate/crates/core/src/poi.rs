//! Model-free point-of-impact detection.
//!
//! The detector works on the empirical cross-moment `f_XY(t_j) = n^-1 sum_i X_i(t_j) Y_i`.
//! A symmetric second difference with lag `delta` (or the modified fourth
//! difference) removes the smooth part of `f_XY`; what survives are kinks, which
//! sit at the points of impact. Candidates are extracted greedily by largest
//! absolute transformed value, each one masking an interval of total width
//! `sqrt(delta)`, and the number of impact points is estimated by thresholding a
//! standardized statistic along the extraction order.

use serde::{Deserialize, Serialize};

use crate::data::{FunctionalDataset, GridSpec};
use crate::error::{PoiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DeltaRule {
    /// `delta = k_delta * (b - a) / (p - 1)`.
    Explicit { k_delta: usize },
    /// `delta = c_delta / sqrt(n)`, rounded onto the grid lattice.
    RateRule { c_delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifferenceOrder {
    #[default]
    Second,
    /// Modified fourth central difference. Thresholding with it reuses the
    /// second-order `lambda` and is heuristic.
    Fourth,
}

impl DifferenceOrder {
    /// Largest multiple of `k_delta` the stencil reaches.
    pub fn reach(&self) -> usize {
        match self {
            DifferenceOrder::Second => 1,
            DifferenceOrder::Fourth => 2,
        }
    }
}

/// `sqrt(2 * sqrt(3))`
pub fn default_threshold_a() -> f64 {
    (2.0 * 3f64.sqrt()).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiConfig {
    pub delta: DeltaRule,
    #[serde(default = "default_threshold_a")]
    pub threshold_a: f64,
    #[serde(default)]
    pub difference_order: DifferenceOrder,
    #[serde(default)]
    pub max_candidates: Option<usize>,
    /// Subtract the pointwise sample mean from the curves first, so the
    /// cross-moments are sample covariances.
    #[serde(default = "default_center")]
    pub center: bool,
}

fn default_center() -> bool {
    true
}

impl Default for PoiConfig {
    fn default() -> Self {
        PoiConfig {
            delta: DeltaRule::RateRule { c_delta: 1.5 },
            threshold_a: default_threshold_a(),
            difference_order: DifferenceOrder::Second,
            max_candidates: None,
            center: true,
        }
    }
}

impl PoiConfig {
    pub fn with_k_delta(k_delta: usize) -> Self {
        PoiConfig {
            delta: DeltaRule::Explicit { k_delta },
            ..Default::default()
        }
    }

    pub fn with_c_delta(c_delta: f64) -> Self {
        PoiConfig {
            delta: DeltaRule::RateRule { c_delta },
            ..Default::default()
        }
    }
}

/// Whether `k_delta` fits on a grid of `p` points for the given stencil.
pub fn k_delta_admissible(k_delta: usize, p: usize, order: DifferenceOrder) -> bool {
    let reach = order.reach() * k_delta;
    k_delta >= 1 && 2 * reach < p - 1
}

pub fn max_k_delta(p: usize, order: DifferenceOrder) -> Option<usize> {
    (1..p).take_while(|&k| k_delta_admissible(k, p, order)).last()
}

/// Resolve the lag on the grid lattice.
pub fn resolve_k_delta(
    rule: &DeltaRule,
    grid: &GridSpec,
    n: usize,
    order: DifferenceOrder,
) -> Result<usize> {
    let k = match *rule {
        DeltaRule::Explicit { k_delta } => k_delta,
        DeltaRule::RateRule { c_delta } => {
            if !(c_delta.is_finite() && c_delta > 0.0) {
                return Err(PoiError::InvalidParameter(format!("c_delta must be > 0, got {c_delta}")));
            }
            let delta = c_delta / (n as f64).sqrt();
            ((delta / grid.step()).round() as usize).max(1)
        }
    };
    if !k_delta_admissible(k, grid.p, order) {
        return Err(PoiError::InvalidParameter(format!(
            "k_delta = {k} is not admissible for p = {} ({order:?} difference)",
            grid.p
        )));
    }
    Ok(k)
}

/// Step 1: `f_XY(t_j) = n^-1 sum_i X_i(t_j) Y_i`, no centering.
pub fn cross_covariance(data: &FunctionalDataset) -> Vec<f64> {
    let n = data.n();
    (0..data.p())
        .map(|j| {
            let mut acc = 0.0;
            for i in 0..n {
                acc += data.x[(i, j)] * data.y[i];
            }
            acc / n as f64
        })
        .collect()
}

/// A transformed sequence on the interior index set; `values[m]` belongs to
/// grid index `first_index + m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceTransform {
    pub first_index: usize,
    pub values: Vec<f64>,
}

impl DifferenceTransform {
    pub fn indices(&self) -> std::ops::Range<usize> {
        self.first_index..self.first_index + self.values.len()
    }

    pub fn at(&self, grid_index: usize) -> Option<f64> {
        grid_index
            .checked_sub(self.first_index)
            .and_then(|m| self.values.get(m).copied())
    }
}

#[inline]
fn stencil(f: &[f64], j: usize, k: usize, order: DifferenceOrder) -> f64 {
    match order {
        DifferenceOrder::Second => f[j] - 0.5 * (f[j - k] + f[j + k]),
        DifferenceOrder::Fourth => {
            f[j] - 2.0 / 3.0 * (f[j - k] + f[j + k]) + 1.0 / 6.0 * (f[j - 2 * k] + f[j + 2 * k])
        }
    }
}

/// Step 3: second (or modified fourth) central difference of `f_xy` with lag `k_delta`.
pub fn difference_transform(
    f_xy: &[f64],
    k_delta: usize,
    order: DifferenceOrder,
) -> Result<DifferenceTransform> {
    let p = f_xy.len();
    if p < 3 || !k_delta_admissible(k_delta, p, order) {
        return Err(PoiError::InvalidParameter(format!(
            "k_delta = {k_delta} is not admissible for p = {p} ({order:?} difference)"
        )));
    }
    let edge = order.reach() * k_delta;
    let values = (edge..p - edge).map(|j| stencil(f_xy, j, k_delta, order)).collect();
    Ok(DifferenceTransform {
        first_index: edge,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// 0-based grid index.
    pub index: usize,
    pub location: f64,
    /// `|f_ZY|` at extraction time.
    pub score: f64,
}

/// Step 4: greedy arg-max extraction with exclusion zones of half-width `sqrt(delta)/2`.
/// Ties go to the smallest grid index.
pub fn extract_candidates(
    f_zy: &DifferenceTransform,
    grid: &GridSpec,
    delta: f64,
    max_candidates: Option<usize>,
) -> Vec<Candidate> {
    let half_width = delta.sqrt() / 2.0;
    let mut alive = vec![true; f_zy.values.len()];
    let limit = max_candidates.unwrap_or(usize::MAX);
    let mut out = Vec::new();
    while out.len() < limit {
        let mut best: Option<(usize, f64)> = None;
        for (m, &v) in f_zy.values.iter().enumerate() {
            if alive[m] && best.is_none_or(|(_, b)| v.abs() > b) {
                best = Some((m, v.abs()));
            }
        }
        let Some((m, score)) = best else { break };
        let index = f_zy.first_index + m;
        let location = grid.point(index);
        for (q, flag) in alive.iter_mut().enumerate() {
            if *flag && (grid.point(f_zy.first_index + q) - location).abs() <= half_width {
                *flag = false;
            }
        }
        out.push(Candidate {
            index,
            location,
            score,
        });
    }
    out
}

/// Practical threshold `A * (sqrt(E^(Y^4)) * log((b - a) / delta) / n)^(1/2)`.
pub fn threshold_lambda(data: &FunctionalDataset, delta: f64, a: f64) -> Result<f64> {
    let width = data.grid.width();
    if !(delta > 0.0 && delta < width) {
        return Err(PoiError::InvalidParameter(format!(
            "delta must lie in (0, {width}), got {delta}"
        )));
    }
    let n = data.n() as f64;
    let m4 = data.y.iter().map(|y| y.powi(4)).sum::<f64>() / n;
    Ok(a * (m4.sqrt() * (width / delta).ln() / n).sqrt())
}

/// Per-curve difference process at grid index `j`.
#[inline]
pub fn z_value(data: &FunctionalDataset, i: usize, j: usize, k: usize, order: DifferenceOrder) -> f64 {
    let x = |jj: usize| data.x[(i, jj)];
    match order {
        DifferenceOrder::Second => x(j) - 0.5 * (x(j - k) + x(j + k)),
        DifferenceOrder::Fourth => {
            x(j) - 2.0 / 3.0 * (x(j - k) + x(j + k)) + 1.0 / 6.0 * (x(j - 2 * k) + x(j + 2 * k))
        }
    }
}

/// `n^-1 sum Z_i Y_i / (n^-1 sum Z_i^2)^(1/2)` at grid index `j`; `None` when
/// every curve has `Z_i(t_j) = 0`.
pub fn standardized_statistic(
    data: &FunctionalDataset,
    j: usize,
    k_delta: usize,
    order: DifferenceOrder,
) -> Option<f64> {
    let n = data.n() as f64;
    let (mut zy, mut zz) = (0.0, 0.0);
    for i in 0..data.n() {
        let z = z_value(data, i, j, k_delta, order);
        zy += z * data.y[i];
        zz += z * z;
    }
    if zz == 0.0 {
        return None;
    }
    Some((zy / n) / (zz / n).sqrt())
}

/// Number of leading candidates whose standardized statistic clears `lambda`,
/// plus the statistics themselves (in candidate order).
pub fn select_s_hat(
    data: &FunctionalDataset,
    candidates: &[Candidate],
    k_delta: usize,
    order: DifferenceOrder,
    lambda: f64,
) -> (usize, Vec<Option<f64>>) {
    let stats: Vec<Option<f64>> = candidates
        .iter()
        .map(|c| standardized_statistic(data, c.index, k_delta, order))
        .collect();
    let s_hat = stats
        .iter()
        .position(|s| match s {
            Some(v) => v.abs() < lambda,
            None => true,
        })
        .unwrap_or(candidates.len());
    (s_hat, stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiEstimate {
    pub candidates: Vec<Candidate>,
    pub statistics: Vec<Option<f64>>,
    pub s_hat: usize,
    pub lambda: f64,
    pub f_xy: Vec<f64>,
    pub f_zy: DifferenceTransform,
    pub delta: f64,
    pub k_delta: usize,
    pub order: DifferenceOrder,
}

impl PoiEstimate {
    pub fn selected(&self) -> &[Candidate] {
        &self.candidates[..self.s_hat]
    }
}

/// The full detector: cross-moment, difference transform, extraction, threshold.
pub fn estimate_poi(data: &FunctionalDataset, config: &PoiConfig) -> Result<PoiEstimate> {
    if config.center {
        return estimate_poi(
            &data.centered(),
            &PoiConfig {
                center: false,
                ..config.clone()
            },
        );
    }
    if !(config.threshold_a.is_finite() && config.threshold_a > 0.0) {
        return Err(PoiError::InvalidParameter("threshold A must be > 0".into()));
    }
    let order = config.difference_order;
    let k_delta = resolve_k_delta(&config.delta, &data.grid, data.n(), order)?;
    let delta = k_delta as f64 * data.grid.step();
    let f_xy = cross_covariance(data);
    let f_zy = difference_transform(&f_xy, k_delta, order)?;
    let candidates = extract_candidates(&f_zy, &data.grid, delta, config.max_candidates);
    let lambda = threshold_lambda(data, delta, config.threshold_a)?;
    let (s_hat, statistics) = select_s_hat(data, &candidates, k_delta, order, lambda);
    Ok(PoiEstimate {
        candidates,
        statistics,
        s_hat,
        lambda,
        f_xy,
        f_zy,
        delta,
        k_delta,
        order,
    })
}
