//! Monte Carlo experiments, truth matching, error metrics and comparator models.

pub mod experiment;
pub mod matching;
pub mod per;
pub mod quality;
pub mod report;

pub use experiment::{run_experiment, run_experiment_with_threads, CellSummary, DgpChoice, Estimator, ExperimentSpec, McReport, RepRecord};
pub use matching::match_candidates;
pub use per::{per_models, PerDesigns};
pub use quality::{fit_quality, somers_dxy, FitQuality, ModelSummary};
