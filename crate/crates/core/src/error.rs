use thiserror::Error;

/// Every failure the toolkit can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid polyhedral set: {0}")]
    InvalidSet(String),

    #[error("set is unbounded along coordinate {coord}")]
    Unbounded { coord: usize },

    #[error("set is empty")]
    EmptySet,

    #[error("exact vertex enumeration supports n <= 3, got n = {0}")]
    DimensionTooLarge(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("expansion point must be nonzero")]
    ZeroExpansionPoint,

    #[error("expansion point {0:?} lies outside the safe set")]
    OutsideSafeSet(Vec<f64>),

    #[error("disturbance inf-norm {norm} exceeds bound {bound}")]
    DisturbanceOutOfBounds { norm: f64, bound: f64 },

    #[error("too few samples: T = {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("experiment trajectory left the admissible region at step {step}")]
    TrajectoryEscaped { step: usize },

    #[error("malformed linear program: {0}")]
    MalformedProgram(String),

    #[error("unknown variable block `{0}`")]
    UnknownBlock(String),

    #[error("program infeasible (phase-1 residual {phase1_residual:.3e}){}", context_suffix(.context))]
    Infeasible {
        phase1_residual: f64,
        context: String,
    },

    #[error("linear program is unbounded")]
    LpUnbounded,

    #[error("rank deficient data: {0}")]
    RankDeficientData(String),

    #[error("no expansion point candidate yields a feasible program:\n{}", .0.join("\n"))]
    ExpansionPointSearchFailed(Vec<String>),

    #[error("no contraction level in (0, 1] is feasible")]
    NoneFeasible,

    #[error("certificate rejected: {0}")]
    CertificateRejected(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error at `{path}`: {message}")]
    Validation { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(": {context}")
    }
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Infeasible { .. })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
