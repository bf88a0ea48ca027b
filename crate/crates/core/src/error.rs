use std::path::PathBuf;

/// Errors raised across the crate.
///
/// Each variant maps onto one CLI exit-code class (see [`Error::exit_code`]).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("state error: {0}")]
    State(String),

    #[error("checkpoint at {} is incomplete, missing: {}", dir.display(), missing.join(", "))]
    Checkpoint { dir: PathBuf, missing: Vec<String> },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Process exit status for this error: 1 usage/config, 2 data/parse,
    /// 3 numeric failure, 4 state (missing or corrupt artifacts).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) => 1,
            Error::Parse { .. } | Error::Data(_) | Error::Io { .. } => 2,
            Error::Numeric(_) => 3,
            Error::State(_) | Error::Checkpoint { .. } => 4,
        }
    }
}
