use std::fmt;
use std::path::PathBuf;

use serde::Serialize;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration file.
    Config(String),
    MissingInput(PathBuf),
    /// Inputs that exist but fail validation.
    Validation(String),
    Runtime(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingInput(_) => 3,
            CliError::Validation(_) => 4,
            CliError::Runtime(_) => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::MissingInput(_) => "missing_input",
            CliError::Validation(_) => "validation",
            CliError::Runtime(_) => "runtime",
        }
    }

    /// One-line JSON error record.
    pub fn record(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            error: &'a str,
            code: u8,
            message: String,
        }
        serde_json::to_string(&Record {
            error: self.kind(),
            code: self.code(),
            message: self.to_string(),
        })
        .expect("error record serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
            CliError::MissingInput(p) => write!(f, "input not found: {}", p.display()),
        }
    }
}

impl From<cspine_core::Error> for CliError {
    fn from(e: cspine_core::Error) -> Self {
        use cspine_core::Error as E;
        match e {
            E::Io { ref path, ref source } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::MissingInput(path.clone())
            }
            E::Io { .. } => CliError::Runtime(e.to_string()),
            E::InvalidConfig(_) | E::InvalidFraction(_) | E::InvalidTotalVariation(_) => CliError::Config(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}
