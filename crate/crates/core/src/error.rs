use thiserror::Error;

/// Errors raised by the library.
///
/// Each variant belongs to one of the exit-code classes used by the command
/// line front end (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("size cap exceeded: {what} has {count} points, cap is {cap}")]
    Size {
        what: &'static str,
        count: usize,
        cap: usize,
    },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("structure error: {0}")]
    Structure(String),

    #[error("boundary error: {0}")]
    Boundary(String),

    #[error("divergent series: {0}")]
    Divergence(String),

    #[error("clan of mark {mark} is not closed within window starting at {window_start}")]
    WindowTooSmall { mark: usize, window_start: f64 },

    #[error(
        "perfect sampler did not terminate: window {window} after {doublings} doublings, {marks} marks, {unresolved} unresolved roots"
    )]
    Nontermination {
        window: f64,
        doublings: u32,
        marks: usize,
        unresolved: usize,
    },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for this error class: 2 parameter, 3 cap exceeded,
    /// 4 nontermination, 5 internal invariant breach.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_)
            | Error::Domain(_)
            | Error::Boundary(_)
            | Error::Divergence(_)
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::Size { .. } => 3,
            Error::Nontermination { .. } | Error::WindowTooSmall { .. } => 4,
            Error::Consistency(_) | Error::Structure(_) | Error::ContractViolation(_) => 5,
        }
    }
}
