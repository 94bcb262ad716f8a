use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("singular system in {what} (condition indicator {condition:e})")]
    Singular { what: &'static str, condition: f64 },

    #[error("matrix is not Hermitian (relative defect {defect:e})")]
    NotHermitian { defect: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("power normalization impossible: precoder product is zero")]
    NormalizationImpossible,

    #[error("null space too small for block diagonalization: need {needed}, have {available}")]
    NullSpace { needed: usize, available: usize },

    #[error("scheme {scheme} is incompatible with the configuration: {reason}")]
    SchemeIncompatible { scheme: String, reason: String },

    #[error("detector hypothesis space {hypotheses} exceeds cap {cap}")]
    HypothesisCap { hypotheses: u128, cap: u128 },

    #[error("symbol is not a point of the {0} constellation")]
    UnknownSymbol(&'static str),

    #[error("unknown {kind} `{name}`; valid values: {valid}")]
    UnknownName {
        kind: &'static str,
        name: String,
        valid: String,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
