use std::fmt;
use std::path::Path;

use koopcert::ErrorKind;

#[derive(Debug)]
pub enum CliError {
    Config { field: String, message: String },
    Data { what: String, message: String },
    Core(koopcert::Error),
}

impl CliError {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        CliError::Config { field: field.to_string(), message: message.into() }
    }

    pub fn data(what: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Data { what: what.into(), message: message.into() }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::data(path.display().to_string(), err.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Data { .. } => 3,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { field, message } => write!(f, "config error in `{field}`: {message}"),
            CliError::Data { what, message } => write!(f, "data error in {what}: {message}"),
            CliError::Core(e) => {
                let label = match e.kind() {
                    ErrorKind::Config => "config error",
                    ErrorKind::Data => "data error",
                    ErrorKind::Numerical => "numerical error",
                };
                write!(f, "{label}: {e}")
            }
        }
    }
}

impl std::error::Error for CliError {}

impl From<koopcert::Error> for CliError {
    fn from(e: koopcert::Error) -> Self {
        CliError::Core(e)
    }
}
