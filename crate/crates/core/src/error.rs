use thiserror::Error;

use crate::matcore::MatError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mat(#[from] MatError),

    #[error("invalid {what}: {detail}")]
    InvalidArgument { what: &'static str, detail: String },

    #[error("non-finite value in {context} at t = {t} (x = {x:?})")]
    NonFinite {
        context: &'static str,
        t: f64,
        x: Vec<f64>,
    },

    #[error("state diverged at t = {t}: |x| = {norm:e} exceeds guard {guard:e}")]
    Diverged { t: f64, norm: f64, guard: f64 },

    #[error("{context}: matrix is not Hurwitz")]
    NotHurwitz { context: &'static str },

    #[error("Lyapunov solution is not positive definite")]
    LyapunovIndefinite,

    #[error("Riccati solver needs a stabilizing initial gain: state matrix is not Hurwitz")]
    NoStabilizingStart,

    #[error("Riccati iteration stalled after {iterations} iterations with residual {residual:e}")]
    CareStall { iterations: usize, residual: f64 },

    #[error("matching condition violated: |A + B theta* - A_h| = {residual:e}")]
    MatchingViolation { residual: f64 },

    #[error(
        "adaptive update produced non-finite parameters (|e| = {e_norm:e}, |phi| = {phi_norm:e})"
    )]
    AdaptiveUpdateNonFinite { e_norm: f64, phi_norm: f64 },

    #[error("{what} series is empty")]
    EmptySeries { what: &'static str },

    #[error("reference target is not reachable: {detail}")]
    Unreachable { detail: String },

    #[error("{path}: row {row}: {detail}")]
    Csv {
        path: String,
        row: usize,
        detail: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument {
            what,
            detail: detail.into(),
        }
    }

    /// True for errors caused by the inputs (configuration, files) rather than the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument { .. } | Error::Csv { .. } | Error::Config(_) | Error::Io { .. }
        )
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Mat(_) => "matrix",
            Error::InvalidArgument { .. } => "invalid_argument",
            Error::NonFinite { .. } => "non_finite",
            Error::Diverged { .. } => "diverged",
            Error::NotHurwitz { .. } => "not_hurwitz",
            Error::LyapunovIndefinite => "lyapunov_indefinite",
            Error::NoStabilizingStart => "no_stabilizing_start",
            Error::CareStall { .. } => "care_stall",
            Error::MatchingViolation { .. } => "matching_violation",
            Error::AdaptiveUpdateNonFinite { .. } => "adaptive_update_non_finite",
            Error::EmptySeries { .. } => "empty_series",
            Error::Unreachable { .. } => "unreachable_target",
            Error::Csv { .. } => "csv",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
