use std::fmt;
use std::path::Path;

/// Failure classes of the command-line surface. The variant decides the
/// process exit code: configuration 2, data 3, numerical 4.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    /// IO failure wrapped with the path it happened on.
    pub fn io(path: &Path, err: std::io::Error) -> CliError {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Data(msg) => write!(f, "data error: {msg}"),
            CliError::Numerical(msg) => write!(f, "numerical error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<skelex_core::Error> for CliError {
    fn from(e: skelex_core::Error) -> Self {
        match e {
            skelex_core::Error::Config(_) => CliError::Config(e.to_string()),
            skelex_core::Error::Numerical(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}
