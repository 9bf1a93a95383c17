//! Estimation of points of impact in scalar-on-function regression.
//!
//! A point of impact is a location `tau` on the curve domain where the value
//! `X(tau)` of a functional predictor enters a scalar regression directly.
//! The crate covers the full pipeline:
//!
//! * [`sim`]: Gaussian, exponential-Brownian and elliptical predictor
//!   processes and point-of-impact responses on an equidistant grid,
//! * [`poi`]: the model-free detector (threshold estimator, "TRH"),
//! * [`glm`] and [`selection`]: quasi-likelihood GLM fits on the detected
//!   points and BIC best-subset selection over candidate sets and lags ("POI"),
//! * [`nw`]: Nadaraya-Watson regression on the detected points,
//! * [`harness`]: Monte Carlo experiments, matching and error metrics,
//!   peak-and-end benchmark models and fit-quality measures,
//! * [`cli`]: the `poikit` command line.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod glm;
pub mod harness;
pub mod nw;
pub mod output;
pub mod poi;
pub mod rng;
pub mod selection;
pub mod sim;

pub use data::{FunctionalDataset, GridSpec};
pub use error::{PoiError, Result};
pub use glm::{GlmFit, LinkSpec};
pub use nw::{KernelConfig, NwFit};
pub use poi::{PoiConfig, PoiEstimate};
pub use selection::{SelectionLimits, SelectionResult};
pub use sim::{Dgp, ImpactModelSpec, ProcessSpec};
