use std::fmt;

use spikeshot_core::adapter::AdapterError;
use spikeshot_core::fusion::FusionError;
use spikeshot_core::gateway::GatewayError;

/// Process exit status for each failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Input = 2,
    MissingArtifact = 3,
    Config = 4,
    Insufficient = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn new(kind: ExitKind, error: impl Into<anyhow::Error>) -> Self {
        CliError {
            kind,
            error: error.into(),
        }
    }

    pub fn input(msg: impl fmt::Display) -> Self {
        Self::new(ExitKind::Input, anyhow::anyhow!("{msg}"))
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        Self::new(ExitKind::Config, anyhow::anyhow!("{msg}"))
    }

    pub fn missing(msg: impl fmt::Display) -> Self {
        Self::new(ExitKind::MissingArtifact, anyhow::anyhow!("{msg}"))
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        let kind = match &e {
            GatewayError::MissingArtifact(_) => ExitKind::MissingArtifact,
            _ => ExitKind::Input,
        };
        CliError::new(kind, e)
    }
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        let kind = match &e {
            FusionError::AllZeroWeights | FusionError::InvalidConfig(_) => ExitKind::Config,
            _ => ExitKind::Input,
        };
        CliError::new(kind, e)
    }
}

impl From<AdapterError> for CliError {
    fn from(e: AdapterError) -> Self {
        match e {
            AdapterError::InsufficientSamples { .. } => CliError::new(ExitKind::Insufficient, e),
            AdapterError::InvalidParams(_) => CliError::new(ExitKind::Config, e),
            AdapterError::Fusion(f) => f.into(),
            other => CliError::new(ExitKind::Input, other),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
