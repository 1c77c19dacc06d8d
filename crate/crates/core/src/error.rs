use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A link function was evaluated outside the set where it is defined.
    #[error("{link} link is undefined at u = {u} (requires u >= 0)")]
    Domain { link: &'static str, u: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A computation would exceed its configured size cap.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("degenerate utility distribution: second moment is zero")]
    DegenerateDistribution,

    #[error("cost of fairness undefined: unconstrained optimal revenue is {0}")]
    UndefinedRatio(f64),

    #[error("no observations supplied")]
    EmptyData,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
