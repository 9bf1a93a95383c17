//! Functional predictors and point-of-impact responses on an equidistant grid.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::GridSpec;
use crate::error::{PoiError, Result};
use crate::glm::logistic;
use crate::rng::{self, streams};

/// Positive random multiplier for elliptical processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ScaleLaw {
    Constant { value: f64 },
    /// `|N(0,1)| + shift`
    AbsNormalShift { shift: f64 },
    Uniform { low: f64, high: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

impl ScaleLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ScaleLaw::Constant { value } => value,
            ScaleLaw::AbsNormalShift { shift } => {
                let z: f64 = rng.sample(StandardNormal);
                z.abs() + shift
            }
            ScaleLaw::Uniform { low, high } => rng.random_range(low..high),
            ScaleLaw::LogNormal { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                (mu + sigma * z).exp()
            }
        }
    }

    /// `E(V^2)`, the factor relating the elliptical covariance to its base.
    pub fn second_moment(&self) -> f64 {
        match *self {
            ScaleLaw::Constant { value } => value * value,
            ScaleLaw::AbsNormalShift { shift } => {
                1.0 + 2.0 * shift * (2.0 / std::f64::consts::PI).sqrt() + shift * shift
            }
            ScaleLaw::Uniform { low, high } => (low * low + low * high + high * high) / 3.0,
            ScaleLaw::LogNormal { mu, sigma } => (2.0 * mu + 2.0 * sigma * sigma).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProcessKind {
    /// Ornstein-Uhlenbeck started at zero at `t = 0`.
    Oup { theta: f64, sigma_u2: f64 },
    /// Gaussian covariance model `exp(-(|s-t|/d)^2)`.
    Gcm { d: f64 },
    /// Brownian motion with variance `scale * t`.
    Bm { scale: f64 },
    /// `exp(B(t))` for a standard Brownian motion `B`.
    Ebm,
    Elliptical {
        base: Box<ProcessSpec>,
        scale_law: ScaleLaw,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub kind: ProcessKind,
    /// Roughness exponent of the covariance at the diagonal. Informational.
    #[serde(default)]
    pub kappa: Option<f64>,
}

impl ProcessSpec {
    pub fn oup(theta: f64, sigma_u2: f64) -> Self {
        ProcessSpec {
            kind: ProcessKind::Oup { theta, sigma_u2 },
            kappa: Some(1.0),
        }
    }

    pub fn gcm(d: f64) -> Self {
        ProcessSpec {
            kind: ProcessKind::Gcm { d },
            kappa: None,
        }
    }

    pub fn bm(scale: f64) -> Self {
        ProcessSpec {
            kind: ProcessKind::Bm { scale },
            kappa: Some(1.0),
        }
    }

    pub fn ebm() -> Self {
        ProcessSpec {
            kind: ProcessKind::Ebm,
            kappa: Some(1.0),
        }
    }

    pub fn elliptical(base: ProcessSpec, scale_law: ScaleLaw) -> Self {
        let kappa = base.kappa;
        ProcessSpec {
            kind: ProcessKind::Elliptical {
                base: Box::new(base),
                scale_law,
            },
            kappa,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(
            self.kind,
            ProcessKind::Oup { .. } | ProcessKind::Gcm { .. } | ProcessKind::Bm { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(PoiError::InvalidParameter(format!("{name} must be > 0, got {v}")))
            }
        };
        if let Some(k) = self.kappa {
            if !(k > 0.0 && k < 2.0) {
                return Err(PoiError::InvalidParameter(format!("kappa must lie in (0, 2), got {k}")));
            }
        }
        match &self.kind {
            ProcessKind::Oup { theta, sigma_u2 } => {
                positive("theta", *theta)?;
                positive("sigma_u2", *sigma_u2)
            }
            ProcessKind::Gcm { d } => positive("d", *d),
            ProcessKind::Bm { scale } => positive("scale", *scale),
            ProcessKind::Ebm => Ok(()),
            ProcessKind::Elliptical { base, scale_law } => {
                if !base.is_gaussian() {
                    return Err(PoiError::InvalidParameter(
                        "elliptical base process must be Gaussian".into(),
                    ));
                }
                base.validate()?;
                match *scale_law {
                    ScaleLaw::Constant { value } => positive("scale value", value),
                    ScaleLaw::AbsNormalShift { shift } => positive("scale shift", shift),
                    ScaleLaw::Uniform { low, high } => {
                        positive("scale low", low)?;
                        if high > low {
                            Ok(())
                        } else {
                            Err(PoiError::InvalidParameter("scale high must exceed low".into()))
                        }
                    }
                    ScaleLaw::LogNormal { mu, sigma } => {
                        if mu.is_finite() && sigma.is_finite() && sigma >= 0.0 {
                            Ok(())
                        } else {
                            Err(PoiError::InvalidParameter("invalid log-normal scale law".into()))
                        }
                    }
                }
            }
        }
    }

    /// Closed-form covariance for the Gaussian kinds.
    pub fn covariance_at(&self, s: f64, t: f64) -> Result<f64> {
        match self.kind {
            ProcessKind::Oup { theta, sigma_u2 } => Ok(sigma_u2 / (2.0 * theta)
                * ((-theta * (s - t).abs()).exp() - (-theta * (s + t)).exp())),
            ProcessKind::Gcm { d } => {
                let r = (s - t).abs() / d;
                Ok((-r * r).exp())
            }
            ProcessKind::Bm { scale } => Ok(scale * s.min(t)),
            ProcessKind::Ebm => Err(PoiError::UnsupportedKind("EBM")),
            ProcessKind::Elliptical { .. } => Err(PoiError::UnsupportedKind("elliptical")),
        }
    }

    pub fn check_domain(&self, grid: &GridSpec) -> Result<()> {
        let starts_at_zero = matches!(
            self.kind,
            ProcessKind::Oup { .. } | ProcessKind::Bm { .. } | ProcessKind::Ebm
        );
        if starts_at_zero && grid.a < 0.0 {
            return Err(PoiError::InvalidGrid(format!(
                "process is defined for t >= 0 but the grid starts at {}",
                grid.a
            )));
        }
        Ok(())
    }
}

/// Grid covariance of a Gaussian process (no nugget).
pub fn covariance_matrix(spec: &ProcessSpec, grid: &GridSpec) -> Result<DMatrix<f64>> {
    grid.validate()?;
    if !spec.is_gaussian() {
        return Err(match spec.kind {
            ProcessKind::Ebm => PoiError::UnsupportedKind("EBM"),
            _ => PoiError::UnsupportedKind("elliptical"),
        });
    }
    spec.validate()?;
    spec.check_domain(grid)?;
    let t = grid.points();
    let p = grid.p;
    let mut cov = DMatrix::zeros(p, p);
    for j in 0..p {
        for k in j..p {
            let v = spec.covariance_at(t[j], t[k])?;
            cov[(j, k)] = v;
            cov[(k, j)] = v;
        }
    }
    Ok(cov)
}

/// Lower Cholesky factor of a covariance restricted to its non-degenerate
/// coordinates, plus the nugget that was needed.
#[derive(Debug, Clone)]
pub struct CovarianceFactor {
    /// Grid indices with positive variance; the rest are identically zero.
    pub active: Vec<usize>,
    pub lower: DMatrix<f64>,
    pub nugget: f64,
}

const NUGGET_START: f64 = 1e-10;
const NUGGET_MAX: f64 = 1e-6;

/// Cholesky with escalating diagonal jitter `1e-10 .. 1e-6` times the largest
/// variance. Coordinates whose row is identically zero (e.g. an OU process at
/// `t = 0`) are held at zero instead of being jittered.
pub fn factor_covariance(cov: &DMatrix<f64>) -> Result<CovarianceFactor> {
    let p = cov.nrows();
    let active: Vec<usize> = (0..p)
        .filter(|&j| cov.row(j).iter().any(|&v| v != 0.0))
        .collect();
    let sub = DMatrix::from_fn(active.len(), active.len(), |r, c| cov[(active[r], active[c])]);
    let max_diag = sub.diagonal().iter().cloned().fold(0.0_f64, f64::max);
    if let Some(ch) = Cholesky::new(sub.clone()) {
        return Ok(CovarianceFactor {
            active,
            lower: ch.l(),
            nugget: 0.0,
        });
    }
    let mut rel = NUGGET_START;
    while rel <= NUGGET_MAX * (1.0 + 1e-9) {
        let nugget = rel * max_diag;
        let mut jittered = sub.clone();
        for d in 0..jittered.nrows() {
            jittered[(d, d)] += nugget;
        }
        if let Some(ch) = Cholesky::new(jittered) {
            log::debug!("covariance factorized with nugget {nugget:e}");
            return Ok(CovarianceFactor {
                active,
                lower: ch.l(),
                nugget,
            });
        }
        rel *= 10.0;
    }
    Err(PoiError::Factorization {
        dim: p,
        nugget: NUGGET_MAX * max_diag,
        max_diag,
    })
}

/// How Gaussian paths are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMethod {
    /// Dense Cholesky of the grid covariance; works for every Gaussian kind.
    #[default]
    Cholesky,
    /// Exact Markov recursion for OU and Brownian motion, Cholesky otherwise.
    Auto,
}

fn standard_normals<R: Rng + ?Sized>(rng: &mut R, n: usize, p: usize) -> DMatrix<f64> {
    // row-major draw order so both sampling paths consume the stream identically
    let mut z = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            z[(i, j)] = rng.sample(StandardNormal);
        }
    }
    z
}

/// `n` i.i.d. zero-mean Gaussian paths on the grid via Cholesky.
pub fn sample_gaussian_paths(
    spec: &ProcessSpec,
    grid: &GridSpec,
    n: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    sample_gaussian_paths_with(spec, grid, n, seed, SamplingMethod::Cholesky)
}

pub fn sample_gaussian_paths_with(
    spec: &ProcessSpec,
    grid: &GridSpec,
    n: usize,
    seed: u64,
    method: SamplingMethod,
) -> Result<DMatrix<f64>> {
    let mut rng = rng::stream(seed, streams::CURVES);
    gaussian_paths_from_rng(spec, grid, n, &mut rng, method)
}

fn gaussian_paths_from_rng<R: Rng + ?Sized>(
    spec: &ProcessSpec,
    grid: &GridSpec,
    n: usize,
    rng: &mut R,
    method: SamplingMethod,
) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(PoiError::InvalidParameter("need at least one path".into()));
    }
    match (method, &spec.kind) {
        (SamplingMethod::Auto, ProcessKind::Oup { .. } | ProcessKind::Bm { .. }) => {
            spec.validate()?;
            spec.check_domain(grid)?;
            let z = standard_normals(rng, n, grid.p);
            Ok(markov_paths(spec, grid, &z))
        }
        _ => {
            let cov = covariance_matrix(spec, grid)?;
            let factor = factor_covariance(&cov)?;
            let z = standard_normals(rng, n, grid.p);
            Ok(apply_factor(&factor, &z))
        }
    }
}

fn apply_factor(factor: &CovarianceFactor, z: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = z.shape();
    let z_active = DMatrix::from_fn(n, factor.active.len(), |i, k| z[(i, factor.active[k])]);
    let x_active = z_active * factor.lower.transpose();
    let mut x = DMatrix::zeros(n, p);
    for (k, &j) in factor.active.iter().enumerate() {
        x.set_column(j, &x_active.column(k));
    }
    x
}

/// Innovations form of OU / Brownian paths: `X_j = rho_j X_{j-1} + s_j z_j`.
fn markov_paths(spec: &ProcessSpec, grid: &GridSpec, z: &DMatrix<f64>) -> DMatrix<f64> {
    let t = grid.points();
    let p = grid.p;
    let (rho, sd): (Vec<f64>, Vec<f64>) = match spec.kind {
        ProcessKind::Oup { theta, sigma_u2 } => {
            let stationary = sigma_u2 / (2.0 * theta);
            (0..p)
                .map(|j| {
                    if j == 0 {
                        let v = stationary * (1.0 - (-2.0 * theta * t[0]).exp());
                        (0.0, v.max(0.0).sqrt())
                    } else {
                        let dt = t[j] - t[j - 1];
                        let r = (-theta * dt).exp();
                        (r, (stationary * (1.0 - (-2.0 * theta * dt).exp())).sqrt())
                    }
                })
                .unzip()
        }
        ProcessKind::Bm { scale } => (0..p)
            .map(|j| {
                if j == 0 {
                    (0.0, (scale * t[0]).sqrt())
                } else {
                    (1.0, (scale * (t[j] - t[j - 1])).sqrt())
                }
            })
            .unzip(),
        _ => unreachable!("markov path requested for a non-Markov kind"),
    };
    let n = z.nrows();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut prev = 0.0;
        for j in 0..p {
            let v = rho[j] * prev + sd[j] * z[(i, j)];
            x[(i, j)] = v;
            prev = v;
        }
    }
    x
}

/// `exp(B(t))` paths with `B(0) = 0` and independent `N(0, dt)` increments.
pub fn sample_ebm_paths(grid: &GridSpec, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    grid.validate()?;
    let mut rng = rng::stream(seed, streams::CURVES);
    let bm = ProcessSpec::bm(1.0);
    let mut x = gaussian_paths_from_rng(&bm, grid, n, &mut rng, SamplingMethod::Auto)?;
    x.apply(|v| *v = v.exp());
    Ok(x)
}

/// Multiply row `i` by an independent draw `V_i` from `scale_law`.
pub fn apply_elliptical_scaling(
    x: &DMatrix<f64>,
    scale_law: &ScaleLaw,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let mut rng = rng::stream(seed, streams::SCALING);
    let mut out = x.clone();
    for i in 0..out.nrows() {
        let v = scale_law.sample(&mut rng);
        if !(v.is_finite() && v > 0.0) {
            return Err(PoiError::InvalidParameter(format!(
                "scale law produced a nonpositive draw {v} for curve {}",
                i + 1
            )));
        }
        out.row_mut(i).scale_mut(v);
    }
    Ok(out)
}

/// Paths for any process kind.
pub fn sample_process(
    spec: &ProcessSpec,
    grid: &GridSpec,
    n: usize,
    seed: u64,
    method: SamplingMethod,
) -> Result<DMatrix<f64>> {
    spec.validate()?;
    match &spec.kind {
        ProcessKind::Ebm => sample_ebm_paths(grid, n, seed),
        ProcessKind::Elliptical { base, scale_law } => {
            let x = sample_gaussian_paths_with(base, grid, n, seed, method)?;
            apply_elliptical_scaling(&x, scale_law, seed)
        }
        _ => sample_gaussian_paths_with(spec, grid, n, seed, method),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ResponseKind {
    BernoulliLogit,
    GaussianIdentity { sigma_eps: f64 },
}

/// `E(Y | X) = g(alpha + sum_r beta_r X(tau_r))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactModelSpec {
    pub alpha: f64,
    pub betas: Vec<f64>,
    pub taus: Vec<f64>,
    pub response: ResponseKind,
}

impl ImpactModelSpec {
    pub fn s(&self) -> usize {
        self.taus.len()
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.betas.len() != self.taus.len() {
            return Err(PoiError::InvalidParameter(format!(
                "{} betas but {} taus",
                self.betas.len(),
                self.taus.len()
            )));
        }
        if self.taus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PoiError::InvalidParameter("taus must be strictly increasing".into()));
        }
        if let Some(t) = self.taus.iter().find(|&&t| !(t > grid.a && t < grid.b)) {
            return Err(PoiError::InvalidParameter(format!(
                "tau {t} lies outside ({}, {})",
                grid.a, grid.b
            )));
        }
        if let ResponseKind::GaussianIdentity { sigma_eps } = self.response {
            if !(sigma_eps >= 0.0 && sigma_eps.is_finite()) {
                return Err(PoiError::InvalidParameter("sigma_eps must be >= 0".into()));
            }
        }
        Ok(())
    }

    /// Grid indices the impact points are evaluated at.
    pub fn tau_indices(&self, grid: &GridSpec) -> Vec<usize> {
        self.taus.iter().map(|&t| grid.nearest_index(t)).collect()
    }

    pub fn mean_function(&self, eta: f64) -> f64 {
        match self.response {
            ResponseKind::BernoulliLogit => logistic(eta),
            ResponseKind::GaussianIdentity { .. } => eta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedResponses {
    pub y: DVector<f64>,
    pub eta: DVector<f64>,
    /// `g(eta_i)`, the true regression function at each observation.
    pub mean: DVector<f64>,
    pub tau_indices: Vec<usize>,
}

pub fn generate_responses(
    x: &DMatrix<f64>,
    grid: &GridSpec,
    model: &ImpactModelSpec,
    seed: u64,
) -> Result<SimulatedResponses> {
    model.validate(grid)?;
    if x.ncols() != grid.p {
        return Err(PoiError::DimensionMismatch(format!(
            "curves have {} columns, grid has {} points",
            x.ncols(),
            grid.p
        )));
    }
    let tau_indices = model.tau_indices(grid);
    let n = x.nrows();
    let eta = DVector::from_fn(n, |i, _| {
        model.alpha
            + model
                .betas
                .iter()
                .zip(&tau_indices)
                .map(|(b, &j)| b * x[(i, j)])
                .sum::<f64>()
    });
    let mean = eta.map(|e| model.mean_function(e));
    let mut rng = rng::stream(seed, streams::RESPONSES);
    let y = match model.response {
        ResponseKind::BernoulliLogit => mean.map(|m| {
            let u: f64 = rng.random();
            if u < m {
                1.0
            } else {
                0.0
            }
        }),
        ResponseKind::GaussianIdentity { sigma_eps } => mean.map(|m| {
            let z: f64 = rng.sample(StandardNormal);
            m + sigma_eps * z
        }),
    };
    Ok(SimulatedResponses {
        y,
        eta,
        mean,
        tau_indices,
    })
}

/// The five simulation designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dgp {
    #[serde(rename = "DGP1")]
    Dgp1,
    #[serde(rename = "DGP2")]
    Dgp2,
    #[serde(rename = "DGP3")]
    Dgp3,
    #[serde(rename = "DGP4")]
    Dgp4,
    #[serde(rename = "DGP5")]
    Dgp5,
}

pub const OUP_THETA: f64 = 5.0;
pub const OUP_SIGMA_U2: f64 = 3.5;
pub const GCM_D: f64 = 0.1;

impl Dgp {
    pub fn process(&self) -> ProcessSpec {
        match self {
            Dgp::Dgp1 | Dgp::Dgp2 | Dgp::Dgp3 => ProcessSpec::oup(OUP_THETA, OUP_SIGMA_U2),
            Dgp::Dgp4 => ProcessSpec::gcm(GCM_D),
            Dgp::Dgp5 => ProcessSpec::ebm(),
        }
    }

    pub fn model(&self) -> ImpactModelSpec {
        let (betas, taus) = match self {
            Dgp::Dgp1 => (vec![4.0], vec![0.5]),
            Dgp::Dgp3 => (
                vec![-6.0, 6.0, -5.0, 5.0],
                vec![1.0 / 6.0, 2.0 / 6.0, 4.0 / 6.0, 5.0 / 6.0],
            ),
            Dgp::Dgp2 | Dgp::Dgp4 | Dgp::Dgp5 => (vec![-6.0, 5.0], vec![1.0 / 3.0, 2.0 / 3.0]),
        };
        ImpactModelSpec {
            alpha: 1.0,
            betas,
            taus,
            response: ResponseKind::BernoulliLogit,
        }
    }

    /// Rate constant for the threshold estimator's `delta`.
    pub fn default_c_delta(&self) -> f64 {
        match self {
            Dgp::Dgp5 => 3.0,
            _ => 1.5,
        }
    }
}
