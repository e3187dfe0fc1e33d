use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field is missing or malformed. `path` is the dotted
    /// location of the offending field in the config document.
    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error("config not found: {0}")]
    ConfigNotFound(String),

    #[error("control point {0:?} is not in the control mesh")]
    ControlNotInMesh(Vec<f64>),

    #[error("invalid argument `{name}`: {message}")]
    InvalidArgument { name: &'static str, message: String },

    #[error("explicit scheme unstable: dt = {dt:.3e} exceeds bound {bound:.3e}; need nt >= {required_nt}")]
    Unstable {
        dt: f64,
        bound: f64,
        required_nt: usize,
    },

    #[error("non-finite value at time level {level}, node {node}")]
    NonFinite { level: usize, node: usize },

    #[error("time {t} outside grid range [{t0}, {t1}]")]
    TimeOutOfRange { t: f64, t0: f64, t1: f64 },

    #[error("regression matrix rank deficient at step {step} (basis: {basis})")]
    RankDeficient { step: usize, basis: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{0}")]
    Refused(String),

    #[error("study inconclusive: {0}")]
    Inconclusive(String),

    #[error("H1 violated at probe: no (v, w) reproduces the barycenter within tol (closest miss {miss:.3e})")]
    NoBarycenterMatch { miss: f64, barycenter: Vec<f64> },

    #[error("internal inconsistency: alpha = {alpha:.3e} < -tol")]
    NegativeAlpha { alpha: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::ConfigNotFound(_) | Error::Json(_) => 2,
            Error::Unstable { .. } => 3,
            Error::Inconclusive(_) => 4,
            _ => 1,
        }
    }

    /// Short machine-readable tag for error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::ConfigNotFound(_) => "config_not_found",
            Error::ControlNotInMesh(_) => "control_not_in_mesh",
            Error::InvalidArgument { .. } => "invalid_argument",
            Error::Unstable { .. } => "unstable",
            Error::NonFinite { .. } => "non_finite",
            Error::TimeOutOfRange { .. } => "time_out_of_range",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::Refused(_) => "refused",
            Error::Inconclusive(_) => "inconclusive",
            Error::NoBarycenterMatch { .. } => "no_barycenter_match",
            Error::NegativeAlpha { .. } => "negative_alpha",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
