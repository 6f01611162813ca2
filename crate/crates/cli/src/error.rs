use std::fmt;
use std::path::Path;

use ddrsm::Error;
use serde::Serialize;
use serde_json::Value;

/// Failure classes, each with its own exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    MissingInput,
    InvalidConfig,
    UnwritableOutput,
    ValidationFailed,
    SolverDiverged,
    Runtime,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::MissingInput => 3,
            Kind::InvalidConfig => 4,
            Kind::UnwritableOutput => 5,
            Kind::ValidationFailed => 6,
            Kind::SolverDiverged => 7,
            Kind::Runtime => 8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub kind: Kind,
    pub exit_code: i32,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        CliError { kind, exit_code: kind.exit_code(), message: message.into(), details: None }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    /// Classifies a library error raised while reading `path`.
    pub fn reading(path: &Path, err: Error) -> Self {
        match err {
            Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => {
                CliError::new(Kind::MissingInput, format!("{}: not found", path.display()))
            }
            Error::Io(e) => CliError::new(Kind::MissingInput, format!("{}: {e}", path.display())),
            other => CliError::new(Kind::InvalidConfig, other.to_string()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        match err {
            Error::Config(m) => CliError::new(Kind::InvalidConfig, m),
            Error::InvalidParameter(_) | Error::InvalidModulus(_) | Error::InvalidSet(_) | Error::Dimension(_) => {
                CliError::new(Kind::ValidationFailed, err.to_string())
            }
            other => CliError::new(Kind::Runtime, other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
