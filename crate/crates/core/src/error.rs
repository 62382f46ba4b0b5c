//! Error type shared by all grid operations.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Clone, Error)]
pub enum CoreError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("metric not positive definite at node {node}: smallest eigenvalue {lambda_min:e}")]
    NotPositiveDefinite { node: usize, lambda_min: f64 },

    #[error("degenerate metric at node {node}: determinant {det:e}")]
    DegenerateMetric { node: usize, det: f64 },

    #[error("time step {dt:e} violates stability limit {limit:e}; use dt <= {limit:e}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("flow stopped at t = {t:e} (step {step}): {reason}")]
    BlowUp { t: f64, step: usize, reason: String },

    #[error("rough metric spec produced an identically zero perturbation; cannot rescale")]
    EmptyPerturbation,

    #[error("invalid cutoff radii: inner {inner}, outer {outer}, period {period}")]
    InvalidRadii { inner: f64, outer: f64, period: f64 },

    #[error("test function must be nonnegative; node {node} has value {value:e}")]
    NegativeTestFunction { node: usize, value: f64 },

    #[error("field must be strictly positive; node {node} has value {value:e}")]
    NonPositiveField { node: usize, value: f64 },

    #[error("need at least {needed} snapshots, got {got}")]
    InsufficientSnapshots { needed: usize, got: usize },

    #[error("sigma = {sigma} outside admissible range {range}")]
    SigmaOutOfRange { sigma: f64, range: &'static str },

    #[error("map is no longer a diffeomorphism at node {node}, t = {t:e}: det = {det:e}")]
    DiffeoDegenerate { node: usize, t: f64, det: f64 },

    #[error("conjugate heat solution went negative beyond tolerance: min {min:e} at t = {t:e}")]
    NegativityExceeded { min: f64, t: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
