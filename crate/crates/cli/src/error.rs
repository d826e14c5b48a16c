use jnet_core::{ClusterError, MonteCarloError, NetworkError, PathError, RateError, SpectralError};
use thiserror::Error;

/// Failure classes with their process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid network: {0}")]
    Validation(#[from] NetworkError),
    #[error("{module}: {message}")]
    Numeric { module: &'static str, message: String },
    #[error("crosscheck failed: {0}")]
    Disagreement(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numeric { .. } | CliError::Disagreement(_) => 3,
        }
    }

    fn numeric(module: &'static str, e: impl std::fmt::Display) -> Self {
        CliError::Numeric {
            module,
            message: e.to_string(),
        }
    }
}

impl From<RateError> for CliError {
    fn from(e: RateError) -> Self {
        match e {
            RateError::Traffic(n) => CliError::Validation(n),
            e => Self::numeric("ratefn", e),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        Self::numeric("spectral", e)
    }
}

impl From<PathError> for CliError {
    fn from(e: PathError) -> Self {
        Self::numeric("pathopt", e)
    }
}

impl From<ClusterError> for CliError {
    fn from(e: ClusterError) -> Self {
        Self::numeric("cluster", e)
    }
}

impl From<MonteCarloError> for CliError {
    fn from(e: MonteCarloError) -> Self {
        match e {
            MonteCarloError::Network(n) => CliError::Validation(n),
            e => Self::numeric("montecarlo", e),
        }
    }
}
