//! Monte Carlo experiments built on coupled trajectories.

mod convergence;
mod coupled;
mod dependence;
mod fit;
mod residual;

pub use convergence::{
    lp_error, run_coupled_ensemble, ConvergenceRecord, ConvergenceSetup, CoupledEnsemble, LevelError,
    MAX_EXCLUSION_FRACTION, MIN_REFERENCE_RATIO,
};
pub use coupled::{
    collect_sups, run_ensemble, run_sample, CoupledSpec, EnsembleSummary, MemberDiagnostics, MemberSpec,
    SampleOutcome,
};
pub use dependence::{
    exp_moment_probe, initial_dependence, initial_dependence_study, noise_scaling, DependencePoint,
    ExpMomentEstimate, InitialDependenceStudy, NoiseLevel, NoiseScalingRecord,
};
pub use fit::{bootstrap_rate, fit_log_log, moment_estimates, LogLogFit, MomentEstimate, RateFit};
pub use residual::{residual_study, truncation_residual, AnalyticProfile, ResidualLevel, ResidualReport};

use crate::grid::GridError;
use crate::scheme::{ConfigError, SchemeError};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("need ≥ {need} grids, got {got}")]
    InsufficientGrids { need: usize, got: usize },
    #[error("incompatible setup: {0}")]
    Incompatible(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
}
