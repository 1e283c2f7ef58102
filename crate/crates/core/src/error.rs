use thiserror::Error;

use crate::topology::Violation;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum HamError {
    #[error("shape mismatch in {context}: expected {expected} values, found {found}")]
    ShapeMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("layer '{layer}' has tau = 0 but only the top layer may be adiabatic")]
    ZeroTauBelowTop { layer: String },

    #[error("layer '{layer}' has tau = 0; equilibrate the top layer and use the reduced forms")]
    AdiabaticLayer { layer: String },

    #[error("top layer '{layer}' is not adiabatic (tau = {tau})")]
    NotAdiabatic { layer: String, tau: f64 },

    #[error("top layer '{layer}' is not equilibrated (residual {residual:e})")]
    NotEquilibrated { layer: String, residual: f64 },

    #[error("non-finite activity in layer '{layer}'")]
    NonFinite { layer: String },

    #[error("energy is no longer finite at t = {t}; the dynamics are unbounded")]
    EnergyOverflow { t: f64 },

    #[error("invalid network: {}", format_violations(.0))]
    InvalidNetwork(Vec<Violation>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("malformed container: {0}")]
    Container(String),

    #[error("malformed pattern file: {0}")]
    PatternFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, HamError>;
