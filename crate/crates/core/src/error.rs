use thiserror::Error;

use crate::interval::Interval;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid map specification: {0}")]
    InvalidMap(String),

    #[error("point {x} lies in the truncated tail (0, {tail_edge}]")]
    PointInTail { x: f64, tail_edge: f64 },

    #[error("x = 0 lies outside every branch")]
    ZeroPoint,

    #[error("point {0} lies outside (0, 1]")]
    OutOfDomain(f64),

    #[error("cell count exceeded cap of {cap} at depth {depth}")]
    CellExplosion { cap: usize, depth: usize },

    #[error("tail contribution {error_bar:.3e} exceeds 10% of the one-step sum {value:.6}")]
    TailDominates { value: f64, error_bar: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no acip: lambda = {0} must lie in (0, 1/2)")]
    NoAcip(f64),

    #[error("power iteration did not converge: residual {residual:.3e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },

    #[error("density is zero somewhere on its support {0}")]
    ZeroDensity(Interval),

    #[error("support mismatch: expected {expected}, found {found}")]
    SupportMismatch { expected: Interval, found: Interval },

    #[error("family has infinite Z (weight on a degenerate interval)")]
    InfiniteZ,

    #[error("one-step expansion fails: theta_hat = {0:.6} >= 1")]
    H1Failure(f64),

    #[error("family is not proper (Z = {z:.4} > C_p = {c_p:.4}); iterate {required} steps first")]
    NotProper { z: f64, c_p: f64, required: usize },

    #[error("covering ratio vanished at round {round}: U is not a magnet or n_c is too small")]
    CoveringRatioZero { round: usize },

    #[error("proof-mode constants are not computable at desk scale: {0}")]
    ProofConstantsInfeasible(String),

    #[error("tower node cap {0} exceeded")]
    NodeCapExceeded(usize),

    #[error("observable is not integrable: {0}")]
    NonIntegrable(String),

    #[error("method requires a piecewise-affine map")]
    RequiresAffine,

    #[error("sigma^2 must be positive for a CLT diagnostic (got {0:.3e})")]
    DegenerateVariance(f64),

    #[error("tail-norm series diverges: t = {t} must exceed tau = {tau}")]
    Divergence { tau: f64, t: f64 },

    #[error("io: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Parse(_) => 3,
            Error::InvalidMap(_) | Error::InvalidParameter(_) => 4,
            Error::PointInTail { .. } | Error::ZeroPoint | Error::OutOfDomain(_) => 5,
            Error::CellExplosion { .. } | Error::NodeCapExceeded(_) => 6,
            Error::TailDominates { .. } | Error::H1Failure(_) | Error::NoAcip(_) => 7,
            Error::NonConvergence { .. } => 8,
            Error::ZeroDensity(_) | Error::SupportMismatch { .. } | Error::InfiniteZ => 9,
            Error::NotProper { .. }
            | Error::CoveringRatioZero { .. }
            | Error::ProofConstantsInfeasible(_) => 10,
            Error::NonIntegrable(_)
            | Error::RequiresAffine
            | Error::DegenerateVariance(_)
            | Error::Divergence { .. } => 11,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
