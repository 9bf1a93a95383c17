//! Monte Carlo experiments over sample sizes and grid resolutions.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{FunctionalDataset, GridSpec};
use crate::error::{PoiError, Result};
use crate::glm::LinkSpec;
use crate::harness::matching::{match_candidates, matching_intervals};
use crate::nw::{average_squared_error, fit_nw_at_indices, KernelConfig};
use crate::poi::{default_threshold_a, estimate_poi, k_delta_admissible, resolve_k_delta, DeltaRule, DifferenceOrder, PoiConfig};
use crate::rng::{mix64, replication_seed};
use crate::selection::{best_subset_over_delta, default_k_grid, fit_at_indices, SelectionLimits};
use crate::sim::{generate_responses, sample_process, Dgp, ImpactModelSpec, ProcessSpec, ResponseKind, SamplingMethod};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DgpChoice {
    Preset(Dgp),
    Custom { process: ProcessSpec, model: ImpactModelSpec },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Estimator {
    /// Threshold rule on the standardized statistics.
    #[serde(rename = "TRH")]
    Trh,
    /// BIC best subset over candidates and lags.
    #[serde(rename = "POI")]
    Poi,
}

impl Estimator {
    pub fn label(&self) -> &'static str {
        match self {
            Estimator::Trh => "TRH",
            Estimator::Poi => "POI",
        }
    }
}

fn default_domain() -> [f64; 2] {
    [0.0, 1.0]
}
fn default_reps() -> usize {
    200
}
fn default_estimators() -> Vec<Estimator> {
    vec![Estimator::Trh, Estimator::Poi]
}
fn default_sampling() -> SamplingMethod {
    SamplingMethod::Auto
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub dgp: DgpChoice,
    #[serde(default = "default_domain")]
    pub domain: [f64; 2],
    pub n_list: Vec<usize>,
    pub p_list: Vec<usize>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Estimator>,
    /// Rate constant of the threshold estimator's lag; the design default when absent.
    #[serde(default)]
    pub c_delta: Option<f64>,
    pub seed: u64,
    /// Also fit Nadaraya-Watson on the selected points and record MASE.
    #[serde(default)]
    pub nonparametric: bool,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub selection: SelectionLimits,
    /// Lags searched by the BIC estimator; the default log-spaced grid when absent.
    #[serde(default)]
    pub k_grid: Option<Vec<usize>>,
    #[serde(default = "default_sampling")]
    pub sampling: SamplingMethod,
    #[serde(default = "default_threshold_a")]
    pub threshold_a: f64,
    #[serde(default)]
    pub difference_order: DifferenceOrder,
    /// Center the curves pointwise before detection.
    #[serde(default = "default_true")]
    pub center_curves: bool,
}

fn default_true() -> bool {
    true
}

impl ExperimentSpec {
    pub fn new(dgp: Dgp, n_list: Vec<usize>, p_list: Vec<usize>, reps: usize, seed: u64) -> Self {
        ExperimentSpec {
            dgp: DgpChoice::Preset(dgp),
            domain: default_domain(),
            n_list,
            p_list,
            reps,
            estimators: default_estimators(),
            c_delta: None,
            seed,
            nonparametric: false,
            kernel: KernelConfig::default(),
            selection: SelectionLimits::default(),
            k_grid: None,
            sampling: default_sampling(),
            threshold_a: default_threshold_a(),
            difference_order: DifferenceOrder::Second,
            center_curves: true,
        }
    }

    pub fn process(&self) -> ProcessSpec {
        match &self.dgp {
            DgpChoice::Preset(d) => d.process(),
            DgpChoice::Custom { process, .. } => process.clone(),
        }
    }

    pub fn model(&self) -> ImpactModelSpec {
        match &self.dgp {
            DgpChoice::Preset(d) => d.model(),
            DgpChoice::Custom { model, .. } => model.clone(),
        }
    }

    pub fn resolved_c_delta(&self) -> f64 {
        self.c_delta.unwrap_or(match &self.dgp {
            DgpChoice::Preset(d) => d.default_c_delta(),
            DgpChoice::Custom { .. } => 1.5,
        })
    }

    pub fn link(&self) -> LinkSpec {
        match self.model().response {
            ResponseKind::BernoulliLogit => LinkSpec::Logit,
            ResponseKind::GaussianIdentity { .. } => LinkSpec::Identity,
        }
    }

    pub fn grid(&self, p: usize) -> Result<GridSpec> {
        GridSpec::new(self.domain[0], self.domain[1], p)
    }

    fn detector(&self, delta: DeltaRule) -> PoiConfig {
        PoiConfig {
            delta,
            threshold_a: self.threshold_a,
            difference_order: self.difference_order,
            max_candidates: None,
            center: self.center_curves,
        }
    }

    fn k_grid_for(&self, grid: &GridSpec) -> Vec<usize> {
        self.k_grid
            .clone()
            .unwrap_or_else(|| default_k_grid(grid, self.difference_order))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(PoiError::Config(m));
        if self.reps == 0 {
            return cfg("reps must be >= 1".into());
        }
        if self.n_list.is_empty() || self.p_list.is_empty() {
            return cfg("n_list and p_list must be non-empty".into());
        }
        if self.estimators.is_empty() {
            return cfg("at least one estimator is required".into());
        }
        if let Some(&n) = self.n_list.iter().find(|&&n| n < 2) {
            return cfg(format!("n = {n} is too small"));
        }
        let c_delta = self.resolved_c_delta();
        if !(c_delta.is_finite() && c_delta > 0.0) {
            return cfg(format!("c_delta must be > 0, got {c_delta}"));
        }
        let process = self.process();
        process.validate()?;
        let model = self.model();
        for &p in &self.p_list {
            let grid = self.grid(p)?;
            process.check_domain(&grid)?;
            model.validate(&grid)?;
            for &n in &self.n_list {
                resolve_k_delta(&DeltaRule::RateRule { c_delta }, &grid, n, self.difference_order)?;
            }
            if self.estimators.contains(&Estimator::Poi) {
                let ks = self.k_grid_for(&grid);
                if ks.is_empty() || ks.iter().any(|&k| !k_delta_admissible(k, p, self.difference_order)) {
                    return cfg(format!("lag grid {ks:?} is not admissible for p = {p}"));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical (sorted-key) JSON encoding.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("spec serializes");
        let text = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Outcome of one estimator on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub n: usize,
    pub p: usize,
    pub rep: usize,
    pub estimator: Estimator,
    pub seed: u64,
    pub error: Option<String>,
    pub delta: Option<f64>,
    pub s_hat: usize,
    pub taus_hat: Vec<f64>,
    /// Per truth: the matched estimate, if any.
    pub matched: Vec<Option<f64>>,
    /// Per truth: squared error, `(half interval width)^2` when unmatched.
    pub sq_err: Vec<f64>,
    pub unmatched: usize,
    /// `max_r |tau_hat_r - tau_r|` under the same penalty convention.
    pub max_abs_err: f64,
    pub alpha_hat: Option<f64>,
    /// Per truth: coefficient of the matched estimate.
    pub beta_hat: Vec<Option<f64>>,
    pub glm_converged: bool,
    /// `n^-1 sum_i (g(eta_i) - g_hat(X_i(tau_hat)))^2`
    pub ase: Option<f64>,
}

impl RepRecord {
    fn failed(n: usize, p: usize, rep: usize, estimator: Estimator, seed: u64, s: usize, err: String) -> Self {
        RepRecord {
            n,
            p,
            rep,
            estimator,
            seed,
            error: Some(err),
            delta: None,
            s_hat: 0,
            taus_hat: Vec::new(),
            matched: vec![None; s],
            sq_err: Vec::new(),
            unmatched: s,
            max_abs_err: f64::NAN,
            alpha_hat: None,
            beta_hat: vec![None; s],
            glm_converged: false,
            ase: None,
        }
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q10: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q90: f64,
}

/// Linear interpolation between order statistics (R type 7).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn quantiles(values: &[f64]) -> Option<Quantiles> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(Quantiles {
        q10: quantile(&v, 0.10),
        q25: quantile(&v, 0.25),
        q50: quantile(&v, 0.50),
        q75: quantile(&v, 0.75),
        q90: quantile(&v, 0.90),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub name: String,
    pub truth: f64,
    pub count: usize,
    pub quantiles: Option<Quantiles>,
}

/// Aggregates for one `(n, p, estimator)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub p: usize,
    pub estimator: Estimator,
    pub reps: usize,
    pub failures: usize,
    /// `P(S_hat = S)` over successful replications.
    pub p_correct: Option<f64>,
    pub s_hat_counts: BTreeMap<usize, usize>,
    pub mse_penalized: Vec<f64>,
    pub avg_mse_penalized: Option<f64>,
    pub mse_matched: Vec<Option<f64>>,
    pub avg_mse_matched: Option<f64>,
    pub matched_counts: Vec<usize>,
    pub reps_with_unmatched: usize,
    pub median_max_abs_err: Option<f64>,
    pub coefficients: Vec<CoefficientSummary>,
    pub mase: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn summarize_cell(records: &[&RepRecord], model: &ImpactModelSpec, n: usize, p: usize, estimator: Estimator) -> CellSummary {
    let s = model.s();
    let ok: Vec<&RepRecord> = records.iter().copied().filter(|r| r.ok()).collect();
    let count = ok.len() as f64;
    let mut s_hat_counts = BTreeMap::new();
    for r in &ok {
        *s_hat_counts.entry(r.s_hat).or_insert(0) += 1;
    }
    let p_correct = (!ok.is_empty()).then(|| ok.iter().filter(|r| r.s_hat == s).count() as f64 / count);

    let mse_penalized: Vec<f64> = if ok.is_empty() {
        Vec::new()
    } else {
        (0..s).map(|j| ok.iter().map(|r| r.sq_err[j]).sum::<f64>() / count).collect()
    };
    let matched_sq = |j: usize| -> Vec<f64> {
        ok.iter()
            .filter_map(|r| r.matched[j].map(|m| (m - model.taus[j]).powi(2)))
            .collect()
    };
    let mse_matched: Vec<Option<f64>> = (0..s).map(|j| mean(&matched_sq(j))).collect();
    let matched_counts: Vec<usize> = (0..s).map(|j| matched_sq(j).len()).collect();
    let avg_mse_matched = if s == 0 || ok.is_empty() {
        None
    } else {
        mse_matched.iter().copied().collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / s as f64)
    };
    let avg_mse_penalized = if s == 0 { None } else { mean(&mse_penalized) };

    let max_errs: Vec<f64> = ok.iter().map(|r| r.max_abs_err).collect();
    let median_max_abs_err = quantiles(&max_errs).map(|q| q.q50);

    let mut coefficients = Vec::with_capacity(s + 1);
    let alphas: Vec<f64> = ok.iter().filter_map(|r| r.alpha_hat).collect();
    coefficients.push(CoefficientSummary {
        name: "alpha".into(),
        truth: model.alpha,
        count: alphas.len(),
        quantiles: quantiles(&alphas),
    });
    for j in 0..s {
        let b: Vec<f64> = ok.iter().filter_map(|r| r.beta_hat[j]).collect();
        coefficients.push(CoefficientSummary {
            name: format!("beta_{}", j + 1),
            truth: model.betas[j],
            count: b.len(),
            quantiles: quantiles(&b),
        });
    }

    let ases: Vec<f64> = ok.iter().filter_map(|r| r.ase).collect();
    CellSummary {
        n,
        p,
        estimator,
        reps: records.len(),
        failures: records.len() - ok.len(),
        p_correct,
        s_hat_counts,
        mse_penalized,
        avg_mse_penalized,
        mse_matched,
        avg_mse_matched,
        matched_counts,
        reps_with_unmatched: ok.iter().filter(|r| r.unmatched > 0).count(),
        median_max_abs_err,
        coefficients,
        mase: mean(&ases),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub spec: ExperimentSpec,
    pub spec_hash: String,
    pub seed: u64,
    pub records: Vec<RepRecord>,
    pub cells: Vec<CellSummary>,
    pub runtime_secs: f64,
    pub threads: usize,
}

impl McReport {
    pub fn cell(&self, n: usize, p: usize, estimator: Estimator) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.n == n && c.p == p && c.estimator == estimator)
    }
}

/// Seed of the `(n, p)` cell; every replication seed derives from it.
pub fn cell_seed(master: u64, n: usize, p: usize) -> u64 {
    mix64(master ^ mix64(((n as u64) << 32) ^ p as u64))
}

struct Cell {
    n: usize,
    p: usize,
    grid: GridSpec,
    k_grid: Vec<usize>,
    seed: u64,
}

/// Estimates for one estimator: selected grid indices ascending, fitted
/// coefficients (intercept first) when a fit exists, and the lag used.
struct Selection {
    indices: Vec<usize>,
    beta: Option<Vec<f64>>,
    converged: bool,
    delta: f64,
}

fn select(spec: &ExperimentSpec, cell: &Cell, data: &FunctionalDataset, estimator: Estimator) -> Result<Selection> {
    let link = spec.link();
    match estimator {
        Estimator::Trh => {
            let cfg = spec.detector(DeltaRule::RateRule { c_delta: spec.resolved_c_delta() });
            let est = estimate_poi(data, &cfg)?;
            let mut indices: Vec<usize> = est.selected().iter().map(|c| c.index).collect();
            indices.sort_unstable();
            let fit = fit_at_indices(data, &indices, link, &spec.selection.fit).ok();
            Ok(Selection {
                indices,
                converged: fit.as_ref().is_some_and(|f| f.converged),
                beta: fit.map(|f| f.beta),
                delta: est.delta,
            })
        }
        Estimator::Poi => {
            let cfg = spec.detector(DeltaRule::Explicit { k_delta: 1 });
            let res = best_subset_over_delta(data, &cell.k_grid, link, &spec.selection, &cfg)?;
            Ok(Selection {
                converged: res.fit.converged,
                beta: Some(res.fit.beta),
                indices: res.selected_indices,
                delta: res.best_delta,
            })
        }
    }
}

fn run_replication(spec: &ExperimentSpec, model: &ImpactModelSpec, process: &ProcessSpec, cell: &Cell, rep: usize) -> Vec<RepRecord> {
    let seed = replication_seed(cell.seed, rep as u64);
    let s = model.s();
    let simulated = sample_process(process, &cell.grid, cell.n, seed, spec.sampling).and_then(|x| {
        let sim = generate_responses(&x, &cell.grid, model, seed)?;
        let data = FunctionalDataset::new(cell.grid, x, sim.y.clone())?;
        Ok((data, sim))
    });
    let (data, sim) = match simulated {
        Ok(v) => v,
        Err(e) => {
            return spec
                .estimators
                .iter()
                .map(|&est| RepRecord::failed(cell.n, cell.p, rep, est, seed, s, e.to_string()))
                .collect()
        }
    };
    let (a, b) = (cell.grid.a, cell.grid.b);
    let intervals = matching_intervals(&model.taus, a, b);

    spec.estimators
        .iter()
        .map(|&estimator| {
            let sel = match select(spec, cell, &data, estimator) {
                Ok(sel) => sel,
                Err(e) => return RepRecord::failed(cell.n, cell.p, rep, estimator, seed, s, e.to_string()),
            };
            let taus_hat: Vec<f64> = sel.indices.iter().map(|&j| cell.grid.point(j)).collect();
            let matched = match_candidates(&model.taus, &taus_hat, a, b);
            let abs_err: Vec<f64> = (0..s)
                .map(|j| match matched[j] {
                    Some(m) => (m - model.taus[j]).abs(),
                    None => 0.5 * (intervals[j].1 - intervals[j].0),
                })
                .collect();
            let beta_hat: Vec<Option<f64>> = matched
                .iter()
                .map(|m| {
                    let l = taus_hat.iter().position(|t| Some(*t) == *m)?;
                    sel.beta.as_ref().map(|beta| beta[l + 1])
                })
                .collect();
            let ase = spec.nonparametric.then(|| {
                let truth: Vec<f64> = sim.mean.iter().copied().collect();
                let pred = if sel.indices.is_empty() {
                    vec![data.y.mean(); data.n()]
                } else {
                    fit_nw_at_indices(&data, &sel.indices, &spec.kernel).ok()?.fitted()
                };
                Some(average_squared_error(&pred, &truth))
            });
            let ase = ase.flatten();
            let nonparametric_failed = spec.nonparametric && ase.is_none();
            RepRecord {
                n: cell.n,
                p: cell.p,
                rep,
                estimator,
                seed,
                error: nonparametric_failed.then(|| "kernel regression failed".to_string()),
                delta: Some(sel.delta),
                s_hat: sel.indices.len(),
                unmatched: matched.iter().filter(|m| m.is_none()).count(),
                matched,
                sq_err: abs_err.iter().map(|e| e * e).collect(),
                max_abs_err: abs_err.iter().copied().fold(0.0, f64::max),
                alpha_hat: sel.beta.as_ref().map(|b| b[0]),
                beta_hat,
                glm_converged: sel.converged,
                ase,
                taus_hat,
            }
        })
        .collect()
}

/// Runs on the global rayon pool.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<McReport> {
    spec.validate()?;
    let start = Instant::now();
    let model = spec.model();
    let process = spec.process();
    let mut cells = Vec::new();
    for &p in &spec.p_list {
        let grid = spec.grid(p)?;
        for &n in &spec.n_list {
            cells.push(Cell {
                n,
                p,
                grid,
                k_grid: spec.k_grid_for(&grid),
                seed: cell_seed(spec.seed, n, p),
            });
        }
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.reps).map(move |r| (c, r)))
        .collect();
    let records: Vec<RepRecord> = jobs
        .par_iter()
        .map(|&(c, r)| run_replication(spec, &model, &process, &cells[c], r))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let mut summaries = Vec::new();
    for cell in &cells {
        for &est in &spec.estimators {
            let recs: Vec<&RepRecord> = records
                .iter()
                .filter(|r| r.n == cell.n && r.p == cell.p && r.estimator == est)
                .collect();
            summaries.push(summarize_cell(&recs, &model, cell.n, cell.p, est));
        }
    }
    let failures = records.iter().filter(|r| !r.ok()).count();
    if failures > 0 {
        log::warn!("{failures} of {} replication records failed", records.len());
    }
    Ok(McReport {
        spec: spec.clone(),
        spec_hash: spec.hash(),
        seed: spec.seed,
        records,
        cells: summaries,
        runtime_secs: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    })
}

/// Runs on a dedicated pool of `threads` workers.
pub fn run_experiment_with_threads(spec: &ExperimentSpec, threads: usize) -> Result<McReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| PoiError::Config(format!("cannot start {threads} worker threads: {e}")))?;
    pool.install(|| run_experiment(spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_type7() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.1), 1.4);
        assert_eq!(quantile(&v, 0.9), 4.6);
        assert_eq!(quantile(&[7.0], 0.25), 7.0);
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = ExperimentSpec::new(Dgp::Dgp2, vec![100], vec![100], 5, 7);
        let text = serde_json::to_string(&spec).unwrap();
        let back: ExperimentSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.hash(), spec.hash());
        let minimal: ExperimentSpec =
            serde_json::from_str(r#"{"dgp": "DGP5", "n_list": [50], "p_list": [30], "seed": 1}"#).unwrap();
        assert_eq!(minimal.reps, 200);
        assert_eq!(minimal.resolved_c_delta(), 3.0);
        assert_eq!(minimal.sampling, SamplingMethod::Auto);
    }

    #[test]
    fn validation() {
        let mut spec = ExperimentSpec::new(Dgp::Dgp1, vec![100], vec![100], 1, 0);
        assert!(spec.validate().is_ok());
        spec.reps = 0;
        assert!(spec.validate().is_err());
        spec.reps = 1;
        spec.p_list = vec![3];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn cell_seeds_differ() {
        assert_ne!(cell_seed(1, 100, 100), cell_seed(1, 200, 100));
        assert_ne!(cell_seed(1, 100, 100), cell_seed(1, 100, 200));
        assert_ne!(cell_seed(1, 100, 100), cell_seed(2, 100, 100));
    }

    #[test]
    fn small_run_is_complete() {
        let mut spec = ExperimentSpec::new(Dgp::Dgp2, vec![100], vec![50], 3, 11);
        spec.nonparametric = true;
        let report = run_experiment(&spec).unwrap();
        assert_eq!(report.records.len(), 6);
        for cell in &report.cells {
            assert_eq!(cell.reps, 3);
            let ases: Vec<f64> = report
                .records
                .iter()
                .filter(|r| r.estimator == cell.estimator)
                .filter_map(|r| r.ase)
                .collect();
            assert_eq!(cell.mase, Some(ases.iter().sum::<f64>() / ases.len() as f64));
        }
    }
}
