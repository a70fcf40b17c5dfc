use std::path::PathBuf;

use sisylab::error::{EngineError, FitError, ObservableError, ParamError, SpectroscopyError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Spectroscopy(#[from] SpectroscopyError),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Self::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable class for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Io { .. } => "io",
            Self::Format { .. } => "format",
            Self::Param(_) => "param",
            Self::Engine(EngineError::Param(_)) => "param",
            Self::Engine(EngineError::NumericalBlowup { .. }) => "numerical_blowup",
            Self::Engine(EngineError::TooManyFailures { .. }) => "numerical_blowup",
            Self::Observable(ObservableError::InsufficientData(_)) => "insufficient_data",
            Self::Observable(ObservableError::NonlinearRegime { .. }) => "nonlinear_regime",
            Self::Observable(ObservableError::NoRelaxation { .. }) => "no_relaxation",
            Self::Observable(ObservableError::StabilityViolation { .. }) => "stability_violation",
            Self::Observable(ObservableError::Fit(_)) | Self::Fit(_) => "fit",
            Self::Spectroscopy(SpectroscopyError::NotConverged { .. }) => "not_converged",
            Self::Spectroscopy(_) => "spectroscopy",
        }
    }

    /// Atom indices that failed, when the error is a blowup.
    pub fn failed_indices(&self) -> Vec<usize> {
        match self {
            Self::Engine(EngineError::TooManyFailures { failed, .. }) => failed.clone(),
            Self::Engine(EngineError::NumericalBlowup { atom_index, .. }) => vec![*atom_index],
            Self::Spectroscopy(SpectroscopyError::Engine(e)) => {
                Self::Engine(e.clone()).failed_indices()
            }
            _ => Vec::new(),
        }
    }
}
