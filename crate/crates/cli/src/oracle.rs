//! `oracle`: independent cross-checks of the rate formulas and the lock-in.

use rand::Rng;
use sisylab::observables::{gamma_d_general, gamma_d_lattice, pde_relaxation_oracle, AxisDiffusion, DiffusionResult, PdeGrid};
use sisylab::lattice::LatticeParams;
use sisylab::rng::atom_stream;
use sisylab::specfit::fit_central;
use sisylab::spectroscopy::{OverdampedToy, ProbeSpec, Spectrum};

use crate::config::RunConfig;
use crate::error::HarnessError;
use crate::table::{write_csv, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: String,
    pub expected: f64,
    pub measured: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    pub fn relative_error(&self) -> f64 {
        ((self.measured - self.expected) / self.expected).abs()
    }

    pub fn passed(&self) -> bool {
        self.relative_error() <= self.tolerance
    }
}

fn axis(d: f64) -> AxisDiffusion {
    AxisDiffusion {
        d,
        d_err: 0.0,
        r_squared: 1.0,
        exponent: 1.0,
    }
}

/// γ_D from the closed form against the brute-force Fick evolution, for
/// `n` random `(D, Δk)` sets and `n` random `(D_x, D_z, θ)` lattice sets.
pub fn fick_checks(seed: u64, n: usize) -> Result<Vec<OracleCheck>, HarnessError> {
    let mut rng = atom_stream(seed, 0);
    let mut out = Vec::new();
    for i in 0..n {
        let d = [rng.random_range(0.1..5.0), rng.random_range(0.1..5.0), rng.random_range(0.1..5.0)];
        let dk = [rng.random_range(0.2..1.5), 0.0, rng.random_range(0.2..1.5)];
        let expected = gamma_d_general(d, dk);
        let measured = pde_relaxation_oracle(d, dk, PdeGrid::default(), 0.5 / expected)?;
        out.push(OracleCheck {
            name: format!("fick_general_{i}"),
            expected,
            measured,
            tolerance: 0.01,
        });
    }
    for i in 0..n {
        let params = LatticeParams {
            theta: rng.random_range(0.2..1.4),
            ..LatticeParams::default()
        };
        let (dx, dz) = (rng.random_range(1.0..200.0), rng.random_range(1.0..200.0));
        let result = DiffusionResult {
            x: axis(dx),
            z: axis(dz),
            window: (0.0, 1.0),
            n_points: 0,
        };
        let expected = gamma_d_lattice(&result, &params);
        let measured = pde_relaxation_oracle([dx, 0.0, dz], params.density_dk(), PdeGrid::default(), 0.5 / expected)?;
        out.push(OracleCheck {
            name: format!("fick_lattice_{i}"),
            expected,
            measured,
            tolerance: 0.01,
        });
    }
    Ok(out)
}

/// Symmetric toy grid in units of the relaxation rate.
pub const TOY_MULTIPLIERS: [f64; 12] = [0.1, 0.2, 0.35, 0.5, 0.7, 0.85, 1.0, 1.2, 1.5, 2.0, 2.8, 4.0];

/// Gain spectrum of the overdamped toy with relaxation rate `gamma`.
pub fn toy_spectrum(gamma: f64, n_particles: usize, seed: u64) -> Result<Spectrum, HarnessError> {
    let toy = OverdampedToy {
        diffusion: gamma,
        kappa: 1.0,
    };
    let mut deltas: Vec<f64> = TOY_MULTIPLIERS.iter().rev().map(|m| -m * gamma).collect();
    deltas.push(0.0);
    deltas.extend(TOY_MULTIPLIERS.iter().map(|m| m * gamma));
    let base = ProbeSpec {
        epsilon: 0.2,
        delta: 0.0,
        settle_time: 5.0 / gamma,
        measure_time: 40.0 / gamma,
    };
    Ok(toy.spectrum(&deltas, &base, 0.02 / gamma, n_particles, seed)?)
}

/// Width of the toy spectrum fitted with the central model against its known rate.
pub fn toy_check(seed: u64) -> Result<OracleCheck, HarnessError> {
    let gamma = 1.0;
    let spectrum = toy_spectrum(gamma, 2000, seed)?;
    let fit = fit_central(&spectrum, 4.0 * gamma)?;
    Ok(OracleCheck {
        name: "lockin_toy_width".into(),
        expected: gamma,
        measured: fit.gamma_r,
        tolerance: 0.1,
    })
}

pub fn cmd_oracle(cfg: &RunConfig) -> Result<Vec<OracleCheck>, HarnessError> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| HarnessError::io(&cfg.output_dir, e))?;
    let mut checks = fick_checks(cfg.seed, 5)?;
    checks.push(toy_check(cfg.seed)?);
    let meta: Vec<(String, String)> = checks
        .iter()
        .enumerate()
        .map(|(i, c)| (format!("check.{i}"), c.name.clone()))
        .collect();
    let rows = checks
        .iter()
        .enumerate()
        .map(|(i, c)| {
            vec![
                i as f64,
                c.expected,
                c.measured,
                c.relative_error(),
                c.tolerance,
                c.passed() as u8 as f64,
            ]
        })
        .collect();
    let table = Table {
        columns: &["check", "expected", "measured", "relative_error", "tolerance", "passed"],
        rows,
    };
    write_csv(&cfg.output_dir.join("oracle.csv"), "oracle", cfg, &meta, &table)?;
    Ok(checks)
}
