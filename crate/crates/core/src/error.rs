use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller broke an operation's documented precondition (shapes, ranges, labels).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A numeric function was evaluated outside its domain, e.g. `log` of a non-positive value.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Divergence { epoch: usize, reason: String },

    #[error("optimization failed at iteration {iteration}: {reason}")]
    Optimization { iteration: usize, reason: String },

    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("degenerate estimate: {0}")]
    DegenerateEstimate(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),

    #[error("invariant violated by {method} on example {index} at epsilon {epsilon}: {detail}")]
    Invariant {
        method: String,
        index: usize,
        epsilon: f64,
        detail: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 for bad input or configuration, 2 for
    /// runtime and invariant failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Contract(_)
            | Error::Parse { .. }
            | Error::Validation(_)
            | Error::Incompatible(_)
            | Error::RejectedInput(_) => 1,
            _ => 2,
        }
    }
}
