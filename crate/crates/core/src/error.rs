use thiserror::Error;

/// A parameter violated its documented range.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid parameter `{name}`: {reason}")]
pub struct ParamError {
    pub name: &'static str,
    pub reason: String,
}

impl ParamError {
    pub fn new(name: &'static str, reason: impl Into<String>) -> Self {
        Self {
            name,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("numerical blowup for atom {atom_index} at step {step}: |p| = {momentum:.3e}")]
    NumericalBlowup {
        atom_index: usize,
        step: usize,
        momentum: f64,
    },
    #[error("{} of {n_atoms} atoms blew up (indices {failed:?})", failed.len())]
    TooManyFailures { n_atoms: usize, failed: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObservableError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("msd is not linear in the fit window (R² = {r_squared:.4})")]
    NonlinearRegime { r_squared: f64 },
    #[error("no relaxation detected: rate {rate:.4e} ± {error:.4e}")]
    NoRelaxation { rate: f64, error: f64 },
    #[error("explicit step {dt:.4e} exceeds the stability bound {bound:.4e}")]
    StabilityViolation { dt: f64, bound: f64 },
    #[error(transparent)]
    Fit(#[from] FitError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectroscopyError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("ensemble not in steady state after settling: ⟨p²⟩ changed by {relative_change:.3}")]
    NotConverged { relative_change: f64 },
}
