use thiserror::Error;

/// Errors raised by the factorization pipeline.
///
/// Display strings start with the variant name so that command-line front
/// ends can surface them verbatim.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("NonSymmetric: entries ({row},{col}) and ({col},{row}) disagree ({a} vs {b})")]
    NonSymmetric {
        row: usize,
        col: usize,
        a: f64,
        b: f64,
    },

    #[error("NonFinite: entry ({row},{col}) is not finite")]
    NonFinite { row: usize, col: usize },

    #[error("IndexOutOfBounds: entry ({row},{col}) outside a {n}x{n} matrix")]
    IndexOutOfBounds { row: usize, col: usize, n: usize },

    #[error("DimensionMismatch: expected length {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("NotSddm: {0}")]
    NotSddm(String),

    #[error("NotSdd: {0}")]
    NotSdd(String),

    #[error("NotPositiveDefinite: {0}")]
    NotPositiveDefinite(String),

    #[error("NoConvergence: {what} did not converge (best estimate {best})")]
    NoConvergence { what: &'static str, best: f64 },

    #[error("ChainDiverged: {0}")]
    ChainDiverged(String),

    #[error("SpectrumEstimateFailed: {0}")]
    SpectrumEstimateFailed(String),

    #[error("WrongExponent: expected p = {expected}, chain has p = {actual}")]
    WrongExponent { expected: f64, actual: f64 },

    #[error("TooLargeForDenseCheck: n = {n} exceeds the dense limit {limit}")]
    TooLargeForDenseCheck { n: usize, limit: usize },

    #[error("InvalidParams: {0}")]
    InvalidParams(String),

    #[error("Parse: {0}")]
    Parse(String),

    #[error("Io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
