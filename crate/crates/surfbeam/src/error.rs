use std::fmt;

/// Failure of one command, carrying the process exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or parameters (exit 2).
    Usage(String),
    /// Data, IO or numerical failure while running (exit 3).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<surfbeam_core::Error> for CliError {
    fn from(e: surfbeam_core::Error) -> Self {
        let msg = format!("{}: {e}", e.code());
        if e.is_usage() {
            CliError::Usage(msg)
        } else {
            CliError::Runtime(msg)
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("IO_FAILURE: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
