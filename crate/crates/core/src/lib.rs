//! Semiclassical Monte Carlo of atoms in a dissipative lin⊥lin optical lattice,
//! with pump-probe spectroscopy, transport observables and spectral fitting.
//!
//! Internal units: ħ = k = 1, energies in ħω_r, times in 1/ω_r (so M = 1/2).
//! Rates are reported in ω_r and diffusion coefficients in ħ/M.

pub mod engine;
pub mod error;
pub mod fit;
pub mod lattice;
pub mod observables;
pub mod rng;
pub mod specfit;
pub mod spectroscopy;

pub use engine::{
    run_ensemble, run_trajectory, AtomState, Drive, Ensemble, InitSpec, Integrator, PositionInit,
    SimConfig,
};
pub use error::{EngineError, FitError, ObservableError, ParamError, SpectroscopyError};
pub use lattice::{LatticeParams, Sublevel, SublevelField};
pub use observables::{
    fit_diffusion, gamma_d_general, gamma_d_lattice, msd_series, pde_relaxation_oracle,
    temperature_relaxation, DiffusionResult, MsdSeries, TemperatureRelaxation, TemperatureSeries,
};
pub use specfit::{fit_central, fit_wings, FitResult, WingFit};
pub use spectroscopy::{probe_gain, spectrum_scan, GainPoint, ProbeSpec, Spectrum, SpectrumPoint};
