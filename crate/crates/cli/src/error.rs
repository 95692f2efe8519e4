use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("trace line {line}: {source}")]
    Trace { line: usize, source: geospar::Error },
    #[error(transparent)]
    Core(#[from] geospar::Error),
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Config { .. } => "config",
            CliError::Parse { .. } => "parse",
            CliError::Trace { .. } => "trace",
            CliError::Core(_) => "core",
            CliError::Check(_) => "check",
        }
    }
}
