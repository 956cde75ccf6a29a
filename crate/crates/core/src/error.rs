use thiserror::Error;

use crate::integrator::TrajectoryRecord;

/// Errors produced by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field contains a non-finite sample at index {index} ({value})")]
    NonFinite { index: usize, value: f64 },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("cutoff radius {radius} does not fit: need 0 < r and 2r < L = {half_width}")]
    CutoffRadius { radius: f64, half_width: f64 },

    #[error("negative coefficient {value} at sample {index}")]
    NegativeCoefficient { index: usize, value: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("conjugate gradient hit the iteration cap ({iterations}) with relative residual {residual:e}")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("overflow evaluating {what} at sample {index}")]
    Overflow { what: &'static str, index: usize },

    #[error("blow-up guard: {what} = {value:e} exceeds {limit:e}")]
    BlowUp {
        what: &'static str,
        value: f64,
        limit: f64,
    },

    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
        /// Trajectory recorded up to the failing step.
        partial: Option<Box<TrajectoryRecord>>,
    },

    #[error("scenario violates hypotheses: {0}")]
    HypothesisViolation(String),

    #[error("trajectory lacks {0}")]
    MissingObservable(String),

    #[error("empty candidate list")]
    EmptyCandidates,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("ensemble member {index} (seed {seed}) failed: {reason}")]
    EnsembleMember { index: usize, seed: u64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
