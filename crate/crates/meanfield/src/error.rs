use meanfield_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Model(#[from] CoreError),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Violation(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

impl Error {
    /// Stable machine-readable category.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Model(e) => match e {
                CoreError::Syntax { .. }
                | CoreError::UnknownIdentifier(_)
                | CoreError::DuplicateState(_)
                | CoreError::NegativeRateCap(_) => "parse",
                CoreError::CapacityExceeded { .. } => "capacity",
                CoreError::NegativeRate { .. } | CoreError::RateCapExceeded { .. } | CoreError::NotSimulable { .. } => {
                    "violation"
                }
                CoreError::InvalidModel(_) => "model",
                _ => "numeric",
            },
            Error::Io(_) => "io",
            Error::Config(_) => "config",
            Error::Violation(_) => "violation",
        }
    }

    /// 2 for anything that fails while reading input, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "parse" | "config" | "model" => 2,
            _ => 1,
        }
    }
}
