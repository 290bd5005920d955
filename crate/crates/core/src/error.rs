use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("level {level} exceeds the hard cap of {cap} materialized levels")]
    LevelCap { level: usize, cap: usize },

    #[error("level {level} lies beyond the truncation level {max} of this tower")]
    BeyondTruncation { level: usize, max: usize },

    #[error("operands belong to different towers ({left} vs {right})")]
    MixedTowers { left: &'static str, right: &'static str },

    #[error("invalid tower: {0}")]
    InvalidTower(String),

    #[error("invalid coefficient sequence: {0}")]
    InvalidSequence(String),

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("radius {0} is not in the radius value set of this metric")]
    ForeignRadius(f64),

    #[error("{what} did not converge: {detail}")]
    NoConvergence { what: &'static str, detail: String },

    #[error("enumeration mismatch: {0}")]
    Enumeration(String),

    #[error("operation not supported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
