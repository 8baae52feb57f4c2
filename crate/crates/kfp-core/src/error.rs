//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by geometry, control, solver and verification routines.
///
/// Variants are split between *validation* failures (bad inputs, violated
/// preconditions) and *numerical* failures (divergence, unresolvable chain
/// steps). [`CoreError::is_numerical`] drives the CLI exit-code mapping.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("non-finite coordinate in {what}")]
    NonFinite { what: &'static str },

    #[error("dilation scale must be positive, got {0}")]
    InvalidScale(f64),

    #[error("invalid constants: {0}")]
    InvalidConstants(String),

    #[error("box kind {kind} requires attached constants")]
    MissingConstants { kind: &'static str },

    #[error("point lies outside the required domain: {what}")]
    OutOfDomain { what: String },

    #[error("target time {t1} is not below start time {t0}")]
    TimeDirection { t0: f64, t1: f64 },

    #[error("invalid interval [{a}, {b}]")]
    IntervalOrder { a: f64, b: f64 },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("curve escapes the domain at sample {index}")]
    CurveEscape { index: usize },

    #[error("chain construction failed at step {step}: {reason}")]
    ChainConstruction { step: usize, reason: String },

    #[error("point not attainable from the base point: {what}")]
    Unattainable { what: String },

    #[error("time step {ht} violates the stability bound; maximal admissible h_t = {max_ht}")]
    Stability { ht: f64, max_ht: f64 },

    #[error("solution diverged (non-finite value) at time step {step}")]
    Divergence { step: usize },

    #[error("discrete maximum principle violated at time step {step} (excess {excess:.3e})")]
    MaxPrincipleViolation { step: usize, excess: f64 },

    #[error("not enough samples: {got} < {need}")]
    Statistics { got: usize, need: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl CoreError {
    /// True for failures of the numerics themselves rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            CoreError::Divergence { .. }
                | CoreError::MaxPrincipleViolation { .. }
                | CoreError::ChainConstruction { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
