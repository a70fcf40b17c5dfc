//! Shared fixtures for the benchmarks.

use sisylab::engine::{AtomState, SimConfig};
use sisylab::lattice::{LatticeParams, Sublevel};

/// Default desk-scale lattice.
pub fn lattice() -> LatticeParams {
    LatticeParams::default()
}

pub fn dt(params: &LatticeParams) -> f64 {
    SimConfig::suggested_dt(params)
}

/// A moderately hot atom away from any symmetry point.
pub fn atom() -> AtomState {
    AtomState {
        x: 0.3,
        z: 1.1,
        px: 4.0,
        pz: -2.5,
        m: Sublevel::Plus,
    }
}
