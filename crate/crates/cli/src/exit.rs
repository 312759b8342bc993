use std::fmt;
use std::process::ExitCode;

use datnet::Error;

/// Failure classes with their process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Config,
    Io,
    Numeric,
}

impl Failure {
    pub fn code(self) -> u8 {
        match self {
            Failure::Config => 2,
            Failure::Io => 3,
            Failure::Numeric => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Failure,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: Failure::Config,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            kind: Failure::Io,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self {
            kind: Failure::Numeric,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind.code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self.kind {
            Failure::Config => "configuration error",
            Failure::Io => "I/O error",
            Failure::Numeric => "numeric failure",
        };
        write!(f, "{label}: {}", self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::InvalidConfig(_) | Error::ShapeMismatch(_) | Error::Json(_) | Error::Empty(_) => Failure::Config,
            Error::MissingFile(_)
            | Error::Multichannel { .. }
            | Error::UnsupportedEncoding(_)
            | Error::Format(_)
            | Error::Io(_)
            | Error::Wav(_)
            | Error::Image(_) => Failure::Io,
            Error::ZeroPower(_) | Error::Numeric(_) => Failure::Numeric,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            CliError::io(e.to_string())
        } else {
            CliError::config(e.to_string())
        }
    }
}
