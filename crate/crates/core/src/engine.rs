//! Semiclassical Monte Carlo integrator.
//!
//! Each step advances the atom by velocity-Verlet on the potential of its current
//! sublevel (plus the probe perturbation when driven), then decides the jump
//! processes by exponential thinning at the new position:
//!
//! * optical pumping `m → −m` at rate `(2/9)Γ₀′ s₋ₘ`,
//! * sublevel-preserving scattering at rate `extra_scatter_scale · (2/9)Γ₀′ sₘ`.
//!
//! Every scattering event adds `recoil_kick_count` kicks of one ħk along independent
//! uniform directions in the plane.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{EngineError, ParamError};
use crate::lattice::{sublevel_potentials, FieldEvaluator, LatticeParams, Sublevel, SublevelField};
use crate::rng::{atom_stream, AtomRng};

/// Momentum magnitude (ħk) beyond which a trajectory is declared blown up.
pub const BLOWUP_MOMENTUM: f64 = 1.0e3;

/// Largest allowed `dt · max jump rate`.
pub const MAX_JUMP_PROBABILITY: f64 = 0.1;

/// Minimum number of steps per harmonic oscillation period.
pub const MIN_STEPS_PER_PERIOD: f64 = 20.0;

/// Phase-space point plus internal state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomState {
    pub x: f64,
    pub z: f64,
    pub px: f64,
    pub pz: f64,
    pub m: Sublevel,
}

impl AtomState {
    pub fn at_rest(x: f64, z: f64, m: Sublevel) -> Self {
        Self {
            x,
            z,
            px: 0.0,
            pz: 0.0,
            m,
        }
    }

    #[inline]
    pub fn momentum_sq(&self) -> f64 {
        self.px * self.px + self.pz * self.pz
    }

    #[inline]
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.z.is_finite() && self.px.is_finite() && self.pz.is_finite()
    }
}

/// Classical probe drive applied identically to both sublevels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drive {
    /// Modulation depth relative to |Δ₀′|.
    pub epsilon: f64,
    /// Probe-pump detuning δ in ω_r.
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PositionInit {
    /// Uniform over one lattice unit cell.
    UnitCell,
    /// Uniform over `[0, lx) × [0, lz)`.
    Box { lx: f64, lz: f64 },
    /// Every atom starts at the same point.
    Point { x: f64, z: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSpec {
    pub position: PositionInit,
    /// Initial kinetic temperatures `[k_B T_x, k_B T_z]` in ħω_r; ⟨pᵢ²⟩ = M k_B Tᵢ = k_B Tᵢ / 2.
    pub temperature: [f64; 2],
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            position: PositionInit::UnitCell,
            temperature: [0.0; 2],
        }
    }
}

impl InitSpec {
    pub fn isotropic(position: PositionInit, temperature: f64) -> Self {
        Self {
            position,
            temperature: [temperature; 2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Time step in 1/ω_r.
    pub dt: f64,
    /// Run length in 1/ω_r.
    pub t_total: f64,
    pub n_atoms: usize,
    pub seed: u64,
    /// Record every `record_stride` steps.
    pub record_stride: usize,
    pub init: InitSpec,
}

impl SimConfig {
    /// Check the step-size constraints against `params`.
    pub fn validate(&self, params: &LatticeParams) -> Result<(), ParamError> {
        self.validate_basic()?;
        let jump = self.dt * params.max_jump_rate();
        if jump > MAX_JUMP_PROBABILITY {
            return Err(ParamError::new(
                "dt",
                format!("dt · max jump rate = {jump:.4} exceeds {MAX_JUMP_PROBABILITY}"),
            ));
        }
        let limit = params.min_oscillation_period() / MIN_STEPS_PER_PERIOD;
        if self.dt > limit {
            return Err(ParamError::new(
                "dt",
                format!("dt = {} exceeds 1/20 of the oscillation period ({limit:.5})", self.dt),
            ));
        }
        Ok(())
    }

    fn validate_basic(&self) -> Result<(), ParamError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ParamError::new("dt", "must be positive"));
        }
        if !(self.t_total >= 0.0 && self.t_total.is_finite()) {
            return Err(ParamError::new("t_total", "must be non-negative"));
        }
        if self.n_atoms == 0 {
            return Err(ParamError::new("n_atoms", "must be at least 1"));
        }
        if self.record_stride == 0 {
            return Err(ParamError::new("record_stride", "must be at least 1"));
        }
        if !self.init.temperature.iter().all(|t| *t >= 0.0 && t.is_finite()) {
            return Err(ParamError::new("init.temperature", "must be non-negative"));
        }
        Ok(())
    }

    /// Largest step satisfying both constraints for `params`, with a safety margin.
    pub fn suggested_dt(params: &LatticeParams) -> f64 {
        let by_period = params.min_oscillation_period() / (2.0 * MIN_STEPS_PER_PERIOD);
        let rate = params.max_jump_rate();
        let by_rate = if rate > 0.0 {
            0.5 * MAX_JUMP_PROBABILITY / rate
        } else {
            f64::INFINITY
        };
        by_period.min(by_rate)
    }

    /// Number of recorded snapshots, `floor(t_total / (dt·stride)) + 1`.
    pub fn n_records(&self) -> usize {
        let ratio = self.t_total / (self.dt * self.record_stride as f64);
        (ratio * (1.0 + 1e-12)).floor() as usize + 1
    }

    pub fn n_steps(&self) -> usize {
        (self.n_records() - 1) * self.record_stride
    }

    pub fn record_times(&self) -> Vec<f64> {
        (0..self.n_records())
            .map(|j| (j * self.record_stride) as f64 * self.dt)
            .collect()
    }
}

/// Probability that a Poisson process with `rate` fires within `dt`.
#[inline]
pub fn jump_probability(rate: f64, dt: f64) -> f64 {
    -(-rate * dt).exp_m1()
}

/// Exponential-thinning jump decision.
#[inline]
pub fn jump_occurs(rate: f64, dt: f64, rng: &mut impl Rng) -> bool {
    let u: f64 = rng.random();
    // 1 − e^{−x} ≤ x, so most draws are decided without the exponential
    u < rate * dt && u < jump_probability(rate, dt)
}

/// Fixed-step integrator for one lattice, optionally driven by the probe.
#[derive(Debug, Clone)]
pub struct Integrator {
    params: LatticeParams,
    field: FieldEvaluator,
    dt: f64,
    drive: Option<Drive>,
    pump_scale: f64,
}

/// State plus the forces already evaluated at its position.
#[derive(Debug, Clone, Copy)]
pub struct Walker {
    pub state: AtomState,
    field: SublevelField,
    drive_force: [f64; 2],
}

impl Integrator {
    pub fn new(params: LatticeParams, dt: f64, drive: Option<Drive>) -> Self {
        Self {
            params,
            field: FieldEvaluator::new(&params),
            dt,
            drive: drive.filter(|d| d.epsilon != 0.0),
            pump_scale: 2.0 / 9.0 * params.gamma0p,
        }
    }

    pub fn params(&self) -> &LatticeParams {
        &self.params
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    fn evaluate(&self, x: f64, z: f64, t: f64) -> (SublevelField, [f64; 2]) {
        match self.drive {
            Some(d) => self.field.eval_driven(x, z, d.delta * t, d.epsilon),
            None => (self.field.eval(x, z), [0.0, 0.0]),
        }
    }

    pub fn walker(&self, state: AtomState, t: f64) -> Walker {
        let (field, drive_force) = self.evaluate(state.x, state.z, t);
        Walker {
            state,
            field,
            drive_force,
        }
    }

    /// Advance `walker` from `t` to `t + dt`. On blowup returns the offending |p|.
    #[inline]
    pub fn advance(&self, walker: &mut Walker, t: f64, rng: &mut AtomRng) -> Result<(), f64> {
        let dt = self.dt;
        let half = 0.5 * dt;
        let s = &mut walker.state;

        let f0 = walker.field.force(s.m);
        s.px += half * (f0[0] + walker.drive_force[0]);
        s.pz += half * (f0[1] + walker.drive_force[1]);
        // velocity = p / M = 2p
        s.x += 2.0 * dt * s.px;
        s.z += 2.0 * dt * s.pz;

        (walker.field, walker.drive_force) = self.evaluate(s.x, s.z, t + dt);
        let f1 = walker.field.force(s.m);
        s.px += half * (f1[0] + walker.drive_force[0]);
        s.pz += half * (f1[1] + walker.drive_force[1]);

        let own = walker.field.intensity(s.m);
        let other = walker.field.intensity(s.m.flipped());
        let elastic = jump_occurs(self.params.extra_scatter_scale * self.pump_scale * own, dt, rng);
        let flip = jump_occurs(self.pump_scale * other, dt, rng);
        if elastic {
            self.kick(s, rng);
        }
        if flip {
            s.m = s.m.flipped();
            self.kick(s, rng);
        }

        let p2 = s.momentum_sq();
        if !(p2 <= BLOWUP_MOMENTUM * BLOWUP_MOMENTUM) || !s.x.is_finite() || !s.z.is_finite() {
            return Err(p2.sqrt());
        }
        Ok(())
    }

    #[inline]
    fn kick(&self, s: &mut AtomState, rng: &mut AtomRng) {
        for _ in 0..self.params.recoil_kick_count {
            let phi = 2.0 * PI * rng.random::<f64>();
            let (sn, cs) = phi.sin_cos();
            s.px += cs;
            s.pz += sn;
        }
    }

    /// One step from a bare state; recomputes the cached forces.
    pub fn step(&self, state: AtomState, t: f64, rng: &mut AtomRng) -> Result<AtomState, f64> {
        let mut w = self.walker(state, t);
        self.advance(&mut w, t, rng)?;
        Ok(w.state)
    }

    /// Undriven Hamiltonian `p² + U_m`.
    pub fn energy(&self, state: &AtomState) -> f64 {
        hamiltonian(&self.params, state)
    }
}

/// `H = p²/2M + U_m` in ħω_r.
pub fn hamiltonian(params: &LatticeParams, state: &AtomState) -> f64 {
    let f = sublevel_potentials(state.x, state.z, params);
    state.momentum_sq() + f.potential(state.m)
}

/// Draw the initial state of one atom from its stream.
pub fn initial_state(params: &LatticeParams, init: &InitSpec, rng: &mut AtomRng) -> AtomState {
    let (x, z) = match init.position {
        PositionInit::UnitCell => {
            let (lx, lz) = params.unit_cell();
            (lx * rng.random::<f64>(), lz * rng.random::<f64>())
        }
        PositionInit::Box { lx, lz } => (lx * rng.random::<f64>(), lz * rng.random::<f64>()),
        PositionInit::Point { x, z } => (x, z),
    };
    let [px, pz] = init.temperature.map(|kt| {
        let sigma = (0.5 * kt).sqrt();
        if sigma > 0.0 {
            Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
        } else {
            0.0
        }
    });
    let m = if rng.random::<bool>() {
        Sublevel::Plus
    } else {
        Sublevel::Minus
    };
    AtomState { x, z, px, pz, m }
}

/// Run one atom for `n_steps`, calling `observe(step, t, state)` on the initial
/// state and after every step.
pub fn simulate_atom<F>(
    integrator: &Integrator,
    init: &InitSpec,
    seed: u64,
    atom_index: usize,
    n_steps: usize,
    mut observe: F,
) -> Result<AtomState, EngineError>
where
    F: FnMut(usize, f64, &AtomState),
{
    let mut rng = atom_stream(seed, atom_index as u64);
    let start = initial_state(integrator.params(), init, &mut rng);
    simulate_from(integrator, start, &mut rng, atom_index, n_steps, &mut observe)
}

/// Like [`simulate_atom`] but from an explicit state and stream.
pub fn simulate_from<F>(
    integrator: &Integrator,
    start: AtomState,
    rng: &mut AtomRng,
    atom_index: usize,
    n_steps: usize,
    mut observe: F,
) -> Result<AtomState, EngineError>
where
    F: FnMut(usize, f64, &AtomState),
{
    let dt = integrator.dt();
    let mut walker = integrator.walker(start, 0.0);
    observe(0, 0.0, &walker.state);
    for step in 0..n_steps {
        let t = step as f64 * dt;
        integrator
            .advance(&mut walker, t, rng)
            .map_err(|momentum| EngineError::NumericalBlowup {
                atom_index,
                step: step + 1,
                momentum,
            })?;
        observe(step + 1, (step + 1) as f64 * dt, &walker.state);
    }
    Ok(walker.state)
}

/// Recorded trajectory of atom `atom_index`, one state every `record_stride` steps.
pub fn run_trajectory(
    params: &LatticeParams,
    config: &SimConfig,
    atom_index: usize,
) -> Result<Vec<AtomState>, EngineError> {
    config.validate(params)?;
    trajectory_unchecked(&Integrator::new(*params, config.dt, None), config, atom_index)
}

fn trajectory_unchecked(
    integrator: &Integrator,
    config: &SimConfig,
    atom_index: usize,
) -> Result<Vec<AtomState>, EngineError> {
    let stride = config.record_stride;
    let mut out = Vec::with_capacity(config.n_records());
    simulate_atom(
        integrator,
        &config.init,
        config.seed,
        atom_index,
        config.n_steps(),
        |step, _, s| {
            if step % stride == 0 {
                out.push(*s);
            }
        },
    )?;
    Ok(out)
}

/// Result of running many atoms: successes in index order plus the failed indices.
#[derive(Debug)]
pub struct AtomResults<T> {
    pub values: Vec<(usize, T)>,
    pub failed: Vec<usize>,
}

impl<T> AtomResults<T> {
    /// Fails when more than 0.1% of the atoms blew up.
    pub fn check_failure_budget(&self, n_atoms: usize) -> Result<(), EngineError> {
        if self.failed.len() * 1000 > n_atoms {
            return Err(EngineError::TooManyFailures {
                n_atoms,
                failed: self.failed.clone(),
            });
        }
        Ok(())
    }
}

/// Run `job` for every atom index in parallel on the current rayon pool.
/// Output order is the index order regardless of scheduling.
pub fn run_atoms<T, F>(n_atoms: usize, job: F) -> Result<AtomResults<T>, EngineError>
where
    T: Send,
    F: Fn(usize) -> Result<T, EngineError> + Sync,
{
    let raw: Vec<Result<T, EngineError>> = (0..n_atoms).into_par_iter().map(&job).collect();
    let mut values = Vec::with_capacity(n_atoms);
    let mut failed = Vec::new();
    for (i, r) in raw.into_iter().enumerate() {
        match r {
            Ok(v) => values.push((i, v)),
            Err(EngineError::NumericalBlowup { .. }) => failed.push(i),
            Err(e) => return Err(e),
        }
    }
    Ok(AtomResults { values, failed })
}

/// Snapshots of an ensemble together with the inputs that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub params: LatticeParams,
    pub config: SimConfig,
    pub times: Vec<f64>,
    /// Atom-major: `trajectories[a][j]` is atom `atom_indices[a]` at `times[j]`.
    pub trajectories: Vec<Vec<AtomState>>,
    /// RNG stream identifier of each stored trajectory.
    pub atom_indices: Vec<usize>,
    /// Atoms dropped after a numerical blowup.
    pub failed: Vec<usize>,
}

impl Ensemble {
    /// Build from externally produced trajectories (synthetic data, stored runs).
    pub fn from_trajectories(
        params: LatticeParams,
        config: SimConfig,
        times: Vec<f64>,
        trajectories: Vec<Vec<AtomState>>,
    ) -> Self {
        let atom_indices = (0..trajectories.len()).collect();
        Self {
            params,
            config,
            times,
            trajectories,
            atom_indices,
            failed: Vec::new(),
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.trajectories.len()
    }

    pub fn n_snapshots(&self) -> usize {
        self.times.len()
    }

    /// All atoms at snapshot `j`.
    pub fn snapshot(&self, j: usize) -> Vec<AtomState> {
        self.trajectories.iter().map(|tr| tr[j]).collect()
    }

    /// Fraction of atoms in `m = +1/2` at snapshot `j`.
    pub fn plus_fraction(&self, j: usize) -> f64 {
        let n = self
            .trajectories
            .iter()
            .filter(|tr| tr[j].m == Sublevel::Plus)
            .count();
        n as f64 / self.n_atoms() as f64
    }
}

/// Run the undriven ensemble described by `(params, config)`.
pub fn run_ensemble(params: &LatticeParams, config: &SimConfig) -> Result<Ensemble, EngineError> {
    params.validate()?;
    config.validate(params)?;
    run_ensemble_unchecked(params, config)
}

/// [`run_ensemble`] without the step-size checks; for diagnostics and fixtures.
pub fn run_ensemble_unchecked(
    params: &LatticeParams,
    config: &SimConfig,
) -> Result<Ensemble, EngineError> {
    let integrator = Integrator::new(*params, config.dt, None);
    let results = run_atoms(config.n_atoms, |i| trajectory_unchecked(&integrator, config, i))?;
    results.check_failure_budget(config.n_atoms)?;
    let (atom_indices, trajectories) = results.values.into_iter().unzip();
    Ok(Ensemble {
        params: *params,
        config: *config,
        times: config.record_times(),
        trajectories,
        atom_indices,
        failed: results.failed,
    })
}
