//! BIC best-subset selection over detector candidates and lags.
//!
//! For each lag `delta` on the grid, the detector yields a candidate list
//! `tau_1..tau_M`. Every subset up to a size cap (always including the empty,
//! intercept-only model) is fitted, scored by `-2 logL + K log n` (or the
//! quasi-deviance version), and the global minimizer over all lags wins.
//! Ties go to fewer predictors, then to the smaller lag.

use std::collections::HashMap;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::data::{FunctionalDataset, GridSpec};
use crate::error::{PoiError, Result};
use crate::glm::{fisher_scoring, with_intercept, FitOptions, GlmFit, LinkSpec};
use crate::poi::{estimate_poi, k_delta_admissible, Candidate, DeltaRule, DifferenceOrder, PoiConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionLimits {
    pub max_subset_size: usize,
    /// Candidate pools larger than this are cut to the strongest entries by
    /// absolute standardized statistic.
    pub max_pool: usize,
    /// Skip subset sizes whose BIC cannot beat the incumbent. The bound uses
    /// the fit on the whole pool, so the winner is the same as without pruning.
    #[serde(default = "default_prune")]
    pub prune: bool,
    #[serde(default)]
    pub fit: FitOptions,
}

fn default_prune() -> bool {
    true
}

impl Default for SelectionLimits {
    fn default() -> Self {
        SelectionLimits {
            max_subset_size: 6,
            max_pool: 20,
            prune: true,
            fit: FitOptions::default(),
        }
    }
}

/// About ten log-spaced lags with `step < delta <= (b - a) / 4`, rounded to
/// whole steps. Grids too coarse for `k_delta >= 2` fall back to `[1]`.
pub fn default_k_grid(grid: &GridSpec, order: DifferenceOrder) -> Vec<usize> {
    const POINTS: usize = 10;
    let hi = (grid.width() / 4.0 / grid.step() + 1e-9).floor().max(1.0);
    let mut ks: Vec<usize> = (1..=POINTS)
        .map(|m| hi.powf(m as f64 / POINTS as f64).round() as usize)
        .filter(|&k| k >= 2 && k_delta_admissible(k, grid.p, order))
        .collect();
    ks.dedup();
    if ks.is_empty() && k_delta_admissible(1, grid.p, order) {
        ks.push(1);
    }
    ks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k_delta: usize,
    pub delta: f64,
    /// Positions in this lag's candidate list.
    pub subset: Vec<usize>,
    pub grid_indices: Vec<usize>,
    pub n_params: usize,
    /// `None` when the fit failed or did not converge.
    pub bic: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub delta_grid: Vec<f64>,
    pub k_grid: Vec<usize>,
    pub best_delta: f64,
    pub best_k_delta: usize,
    /// Positions in the winning lag's candidate list.
    pub best_subset: Vec<usize>,
    /// Selected grid indices in ascending order; `fit.beta[1..]` follows this order.
    pub selected_indices: Vec<usize>,
    pub selected_locations: Vec<f64>,
    pub fit: GlmFit,
    pub candidates: HashMap<usize, Vec<Candidate>>,
    pub trace: Vec<TraceRecord>,
    /// Subsets skipped by the pruning bound.
    pub pruned: usize,
    pub warnings: Vec<String>,
}

impl SelectionResult {
    pub fn s_hat(&self) -> usize {
        self.selected_indices.len()
    }
}

/// Fit of `y ~ 1 + X(t_j), j in indices` (indices ascending).
pub fn fit_at_indices(
    data: &FunctionalDataset,
    indices: &[usize],
    link: LinkSpec,
    options: &FitOptions,
) -> Result<GlmFit> {
    let design = with_intercept(&data.columns_at(indices));
    fisher_scoring(&design, &data.y, link, None, options)
}

pub fn best_subset_over_delta(
    data: &FunctionalDataset,
    k_grid: &[usize],
    link: LinkSpec,
    limits: &SelectionLimits,
    detector: &PoiConfig,
) -> Result<SelectionResult> {
    if k_grid.is_empty() {
        return Err(PoiError::InvalidParameter("empty delta grid".into()));
    }
    let order = detector.difference_order;
    if let Some(&k) = k_grid.iter().find(|&&k| !k_delta_admissible(k, data.p(), order)) {
        return Err(PoiError::InvalidParameter(format!("k_delta = {k} is not admissible")));
    }
    let data = if detector.center { data.centered() } else { data.clone() };
    let n = data.n();
    let mut cache: HashMap<Vec<usize>, Option<GlmFit>> = HashMap::new();
    let mut fit_cached = |indices: Vec<usize>| -> Option<GlmFit> {
        cache
            .entry(indices)
            .or_insert_with_key(|idx| fit_at_indices(&data, idx, link, &limits.fit).ok())
            .clone()
    };

    let mut trace = Vec::new();
    let mut candidates_by_k = HashMap::new();
    let mut delta_grid = Vec::with_capacity(k_grid.len());
    let mut pruned = 0;
    // (bic, size, delta, k, subset, indices, fit)
    let mut best: Option<(f64, usize, f64, usize, Vec<usize>, Vec<usize>, GlmFit)> = None;

    for &k in k_grid {
        let cfg = PoiConfig {
            delta: DeltaRule::Explicit { k_delta: k },
            center: false,
            ..detector.clone()
        };
        let est = estimate_poi(&data, &cfg)?;
        let delta = est.delta;
        delta_grid.push(delta);

        let mut pool: Vec<usize> = (0..est.candidates.len()).collect();
        if pool.len() > limits.max_pool {
            let strength = |m: usize| est.statistics[m].map_or(0.0, f64::abs);
            pool.sort_by(|&l, &r| strength(r).total_cmp(&strength(l)).then(l.cmp(&r)));
            pool.truncate(limits.max_pool);
            pool.sort_unstable();
        }
        let max_size = limits.max_subset_size.min(pool.len());
        // lower bound on -2 logL over every subset of the pool
        let floor = if limits.prune && !pool.is_empty() {
            let mut all: Vec<usize> = pool.iter().map(|&m| est.candidates[m].index).collect();
            all.sort_unstable();
            all.dedup();
            match fit_cached(all) {
                Some(f) if f.converged && f.loglik_or_quasi.is_finite() => {
                    (-2.0 * f.loglik_or_quasi - 1e-6 * (1.0 + f.loglik_or_quasi.abs())).max(0.0)
                }
                _ => 0.0,
            }
        } else {
            f64::NEG_INFINITY
        };
        for size in 0..=max_size {
            if let Some((b, ..)) = &best {
                if floor + (size + 1) as f64 * (n as f64).ln() > *b {
                    pruned += (size..=max_size).map(|s| binomial(pool.len(), s)).sum::<usize>();
                    break;
                }
            }
            for subset in pool.iter().copied().combinations(size) {
                let mut indices: Vec<usize> = subset.iter().map(|&m| est.candidates[m].index).collect();
                indices.sort_unstable();
                let fit = fit_cached(indices.clone());
                let usable = fit.as_ref().filter(|f| f.converged && f.bic.is_finite());
                trace.push(TraceRecord {
                    k_delta: k,
                    delta,
                    subset: subset.clone(),
                    grid_indices: indices.clone(),
                    n_params: size + 1,
                    bic: usable.map(|f| f.bic),
                    converged: usable.is_some(),
                });
                if let Some(f) = usable {
                    let better = match &best {
                        None => true,
                        Some((b, s, d, ..)) => {
                            f.bic < *b || (f.bic == *b && (size < *s || (size == *s && delta < *d)))
                        }
                    };
                    if better {
                        best = Some((f.bic, size, delta, k, subset, indices, f.clone()));
                    }
                }
            }
        }
        candidates_by_k.insert(k, est.candidates);
    }

    let mut warnings = Vec::new();
    let (best_k, best_delta, best_subset, selected_indices, fit) = match best {
        Some((_, _, d, k, subset, indices, fit)) => (k, d, subset, indices, fit),
        None => {
            warnings.push("no candidate model converged; reporting the intercept-only fit".to_string());
            let fit = fit_at_indices(&data, &[], link, &limits.fit)?;
            (k_grid[0], delta_grid[0], Vec::new(), Vec::new(), fit)
        }
    };
    let selected_locations = selected_indices.iter().map(|&j| data.grid.point(j)).collect();
    log::debug!(
        "selection over {} lags, {} fits cached, n = {n}",
        k_grid.len(),
        trace.len()
    );
    Ok(SelectionResult {
        delta_grid,
        k_grid: k_grid.to_vec(),
        best_delta,
        best_k_delta: best_k,
        best_subset,
        selected_indices,
        selected_locations,
        fit,
        candidates: candidates_by_k,
        trace,
        pruned,
        warnings,
    })
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}
