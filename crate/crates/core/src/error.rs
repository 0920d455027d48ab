use thiserror::Error;

/// Errors raised by orbit generation, the shadowing solvers and the report
/// pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("system `{system}` is a {found}, operation requires a {expected}")]
    KindMismatch {
        system: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("trajectory diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },
    #[error("index {index} out of range for orbit with {len} states")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("degenerate basis at step {step}: |R_ii| = {value:e}")]
    DegenerateBasis { step: usize, value: f64 },
    #[error("magnitude exceeded cap {cap:e} at step {step}; segment the solve")]
    Overflow { step: usize, cap: f64 },
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("ill-conditioned constraint system: {0}")]
    Conditioning(String),
    #[error("|F| = {norm:e} below threshold at step {step} (center direction degenerate)")]
    CenterDegeneracy { step: usize, norm: f64 },
    #[error("pair is not admissible: |F(psi) - omega(F)| = {defect:e} at step {step}")]
    InvalidPair { step: usize, defect: f64 },
    #[error("near tangency of splitting subspaces at step {step}: angle {angle:e} rad")]
    NearTangency { step: usize, angle: f64 },
    #[error("orbit too short: need {needed} steps, have {available}")]
    InsufficientLength { needed: usize, available: usize },
    #[error("step {step} outside the converged range [{lo}, {hi}]")]
    BufferAccess { step: usize, lo: usize, hi: usize },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("malformed container: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
