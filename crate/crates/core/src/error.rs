use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("infeasible margin floor {floor}: acceptance rate {rate:.2e} over {probe} probe draws")]
    InfeasibleMargin { floor: f64, rate: f64, probe: usize },

    #[error("divergence at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },

    #[error("linear system is singular: {0}")]
    Singular(String),

    #[error("width {width} too small for {needed} atoms")]
    WidthTooSmall { width: usize, needed: usize },

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("problem too large for exhaustive enumeration: {0}")]
    Scale(String),

    #[error("simplex did not terminate within {0} pivots")]
    IterationCap(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("particle {index} became non-finite")]
    ParticleNonFinite { index: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
