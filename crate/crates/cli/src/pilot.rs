//! Short undriven run that measures the steady-state temperatures used by `auto`
//! initial conditions.

use sisylab::engine::{run_ensemble, InitSpec, PositionInit, SimConfig};
use sisylab::lattice::LatticeParams;
use sisylab::observables::temperature_series;

use crate::error::HarnessError;

pub const PILOT_ATOMS: usize = 256;

/// Pilot length in units of 1/Γ₀′.
pub const PILOT_DURATION: f64 = 300.0;

/// Steady-state `[k_B T_x, k_B T_z]` in ħω_r, averaged over the last third of a
/// pilot run that starts hot (2|Δ₀′|, 0.8|Δ₀′|).
pub fn equilibrium_temperature(
    params: &LatticeParams,
    dt: f64,
    seed: u64,
) -> Result<[f64; 2], HarnessError> {
    let t_total = PILOT_DURATION / params.gamma0p;
    let depth = params.delta0p.abs();
    let config = SimConfig {
        dt,
        t_total,
        n_atoms: PILOT_ATOMS,
        seed,
        record_stride: ((t_total / dt) / 300.0).ceil().max(1.0) as usize,
        init: InitSpec {
            position: PositionInit::UnitCell,
            temperature: [2.0 * depth, 0.8 * depth],
        },
    };
    let ensemble = run_ensemble(params, &config)?;
    let series = temperature_series(&ensemble)?;
    let start = series.times.len() * 2 / 3;
    let mean = |v: &[f64]| v[start..].iter().sum::<f64>() / (v.len() - start) as f64;
    Ok([mean(&series.kt_x), mean(&series.kt_z)])
}
