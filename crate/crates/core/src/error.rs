use thiserror::Error;

use crate::model::Diagnostic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch between {first} and {second}: {detail}")]
    Dimension {
        first: &'static str,
        second: &'static str,
        detail: String,
    },

    #[error("invalid probability table ({what}): {detail}")]
    Probability { what: String, detail: String },

    #[error("invalid distortion specification: {0}")]
    Distortion(String),

    #[error("sequence length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("lagrange multiplier must satisfy s <= 0, got {0}")]
    PositiveMultiplier(f64),

    #[error("infeasible distortion {distortion}: feasible range is (0, {max}]")]
    InfeasibleDistortion { distortion: f64, max: f64 },

    #[error("invalid eigenvalue {value} at index {index}: must be finite and positive")]
    InvalidEigenvalue { index: usize, value: f64 },

    #[error("degenerate support at step {step}, reproduction history {history:?}: tilt normalizer is zero")]
    DegenerateSupport { step: usize, history: Vec<usize> },

    #[error("s-grid must be nonempty and sorted descending toward -inf")]
    UnsortedGrid,

    #[error("rate-distortion curve not monotone between s={s_prev} and s={s_next}: {detail}")]
    NonMonotoneCurve {
        s_prev: f64,
        s_next: f64,
        detail: String,
    },

    #[error("model failed validation: {}", join_diagnostics(.0))]
    InvalidModel(Vec<Diagnostic>),

    #[error("channel noise variance must be positive, got {0}")]
    ChannelNoise(f64),

    #[error("allocation does not match the eigenvalues of the innovation covariance")]
    AllocationMismatch,

    #[error("innovation-mix covariance is singular (condition number {condition:e})")]
    SingularInnovationMix { condition: f64 },

    #[error("riccati iteration did not converge after {iterations} iterations (last change {change:e})")]
    RiccatiNonConvergence { iterations: usize, change: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn join_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
