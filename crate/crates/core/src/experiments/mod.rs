//! Experiment harness: the ε-sweep and its rate fit, the bound audit
//! (calibration and validation), and refinement studies.

mod audit;
mod ics;
mod refine;
mod sweep;

use thiserror::Error;

use crate::bounds::BoundsError;
use crate::grid::GridError;
use crate::solver::SolverError;

pub use audit::{
    calibrate, fit_c6, laplacian_resolution, transfer_exponent, verify_bounds, verify_diffineq,
    BoundCheck, BoundReport, DiffIneqAudit, IntervalCheck, DEFAULT_DIFFINEQ_TOL, DEFAULT_SLACK,
};
pub use ics::Profile;
pub use refine::{
    refinement_study, spatial_order, temporal_order, Oracle, OrderEstimate, OrderStatus,
    RefinementConfig, RefinementResult,
};
pub use sweep::{
    epsilon_sweep, fit_loglog_slope, summarize_deviation, sup_time_error, GridSpec, LogLogFit,
    SweepConfig, SweepResult, SweepRun,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("missing diagnostics: {0}")]
    MissingDiagnostics(String),
    #[error("trajectories do not match: {0}")]
    Mismatch(String),
    #[error("sweep incomplete: epsilon {failed_epsilons:?} failed ({source}); {} runs completed", completed.runs.len())]
    PartialSweep {
        completed: Box<SweepResult>,
        failed_epsilons: Vec<f64>,
        source: Box<ExperimentError>,
    },
}
