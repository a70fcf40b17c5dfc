//! Pump-probe gain spectra from driven ensembles.
//!
//! The probe adds `ε|Δ₀′| cos(Kx) cos[(K₊ − k)z + δt]` to both sublevel
//! potentials. The responding observable is the density Fourier amplitude at the
//! drive wavevector,
//!
//! ```text
//! O(t) = (1/N) Σᵢ cos(K xᵢ) · exp[−i(K₊ − k) zᵢ]
//! ```
//!
//! and the lock-in amplitude `A(δ) = (2/T) ∫ O(t) e^{−iδt} dt` is taken over an
//! integer number of drive periods after a settling time. The gain is the
//! quadrature part `−Im A / ε`; the in-phase part `Re A / ε` is reported alongside.
//! For a single observable relaxing at rate γ the gain is dispersive,
//! `∝ δ / (γ² + δ²)`, with extrema at `δ = ±γ`.
//!
//! Error bars come from splitting the atoms into [`MIN_BLOCKS`] interleaved
//! batches and taking the spread of the batch amplitudes. At δ = 0 there is no
//! period; the window `measure_time` is then used as is and treated as a single
//! period of the static grating.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::engine::{
    initial_state, run_atoms, simulate_from, AtomState, Drive, InitSpec, Integrator,
    PositionInit, SimConfig,
};
use crate::error::{ParamError, SpectroscopyError};
use crate::lattice::LatticeParams;
use crate::rng::{atom_stream, derive_seed};

/// Number of independent atom batches used for the lock-in error bar.
pub const MIN_BLOCKS: usize = 10;

/// Minimum number of drive periods per measurement when δ ≠ 0.
pub const MIN_PERIODS: usize = 5;

/// Minimum number of integration steps per drive period.
pub const MIN_STEPS_PER_DRIVE_PERIOD: usize = 16;

/// Target number of lock-in samples per drive period; long periods are
/// subsampled down to about this many.
pub const SAMPLES_PER_DRIVE_PERIOD: usize = 64;

/// Largest relative change of ⟨p²⟩ between the last two quarters of the settling
/// window still accepted as steady state.
pub const STEADY_STATE_TOLERANCE: f64 = 0.1;

/// Relative change of gain/ε under ε → 2ε above which linear response is doubted.
pub const LINEARITY_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSpec {
    /// Drive amplitude relative to |Δ₀′|, in (0, 0.2].
    pub epsilon: f64,
    /// Probe detuning δ in ω_r.
    pub delta: f64,
    /// Time discarded before demodulation, 1/ω_r.
    pub settle_time: f64,
    /// Minimum demodulation window, 1/ω_r. Rounded up to whole drive periods.
    pub measure_time: f64,
}

impl ProbeSpec {
    /// Defaults: settle `20/Γ₀′`, measure `50/Γ₀′` (then rounded up to at least [`MIN_PERIODS`] whole periods).
    pub fn with_defaults(params: &LatticeParams, epsilon: f64, delta: f64) -> Self {
        let g = params.gamma0p.max(f64::MIN_POSITIVE);
        Self {
            epsilon,
            delta,
            settle_time: 20.0 / g,
            measure_time: 50.0 / g,
        }
    }

    pub fn at_delta(&self, delta: f64) -> Self {
        Self { delta, ..*self }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.epsilon > 0.0 && self.epsilon <= 0.2) {
            return Err(ParamError::new("epsilon", "must lie in (0, 0.2]"));
        }
        if !self.delta.is_finite() {
            return Err(ParamError::new("delta", "must be finite"));
        }
        if !(self.settle_time >= 0.0 && self.settle_time.is_finite()) {
            return Err(ParamError::new("settle_time", "must be non-negative"));
        }
        if !(self.measure_time > 0.0 && self.measure_time.is_finite()) {
            return Err(ParamError::new("measure_time", "must be positive"));
        }
        Ok(())
    }
}

/// Step schedule of one lock-in measurement.
///
/// The observable is sampled every `sample_stride` steps on absolute step
/// indices; one drive period holds a whole number of samples, so the reference
/// phasors repeat exactly and are tabulated once.
#[derive(Debug, Clone, PartialEq)]
pub struct LockInPlan {
    pub delta: f64,
    /// Step size, shrunk from the requested one so a drive period is a whole number of steps.
    pub dt: f64,
    pub settle_steps: usize,
    pub measure_steps: usize,
    pub sample_stride: usize,
    /// `e^{−iδt}·stride·dt` over one period of samples.
    phasors: Vec<Complex64>,
}

impl LockInPlan {
    /// The window is `measure_time` rounded up to whole drive periods, and at
    /// least [`MIN_PERIODS`] of them. At δ = 0 it is `measure_time` as given.
    pub fn new(delta: f64, dt_max: f64, settle_time: f64, measure_time: f64) -> Self {
        if delta == 0.0 {
            return Self {
                delta,
                dt: dt_max,
                settle_steps: (settle_time / dt_max).ceil() as usize,
                measure_steps: ((measure_time / dt_max).ceil() as usize).max(1),
                sample_stride: 1,
                phasors: vec![Complex64::new(dt_max, 0.0)],
            };
        }
        let period = 2.0 * PI / delta.abs();
        let raw = ((period / dt_max).ceil() as usize).max(MIN_STEPS_PER_DRIVE_PERIOD);
        let stride = (raw / SAMPLES_PER_DRIVE_PERIOD).max(1);
        let samples = raw.div_ceil(stride);
        let steps_per_period = samples * stride;
        let dt = period / steps_per_period as f64;
        let periods = ((measure_time / period * (1.0 - 1e-12)).ceil() as usize).max(MIN_PERIODS);
        let settle_steps = ((settle_time / dt).ceil() as usize).div_ceil(stride) * stride;
        let phasors = (0..samples)
            .map(|j| Complex64::from_polar(stride as f64 * dt, -delta * (j * stride) as f64 * dt))
            .collect();
        Self {
            delta,
            dt,
            settle_steps,
            measure_steps: periods * steps_per_period,
            sample_stride: stride,
            phasors,
        }
    }

    pub fn total_steps(&self) -> usize {
        self.settle_steps + self.measure_steps
    }

    pub fn settle_time(&self) -> f64 {
        self.settle_steps as f64 * self.dt
    }

    pub fn measure_time(&self) -> f64 {
        self.measure_steps as f64 * self.dt
    }

    /// Reference weight `e^{−iδt}·Δt` if `step` is a lock-in sample.
    #[inline]
    pub fn sample(&self, step: usize) -> Option<Complex64> {
        if step < self.settle_steps || step >= self.total_steps() || step % self.sample_stride != 0 {
            return None;
        }
        let j = (step / self.sample_stride) % self.phasors.len();
        Some(self.phasors[j])
    }

    /// Convert `Σ O e^{−iδt} Δt` over the window into the amplitude `(2/T)·sum`.
    pub fn amplitude(&self, sum: Complex64) -> Complex64 {
        sum * (2.0 / self.measure_time())
    }
}

/// Lock-in amplitude of a sampled signal `signal(t)` following `plan`.
pub fn lock_in_signal<F: Fn(f64) -> Complex64>(plan: &LockInPlan, signal: F) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    for step in plan.settle_steps..plan.total_steps() {
        if let Some(w) = plan.sample(step) {
            sum += signal(step as f64 * plan.dt) * w;
        }
    }
    plan.amplitude(sum)
}

/// Per-batch lock-in sums; atom `i` belongs to batch `i % MIN_BLOCKS`.
#[derive(Debug, Clone)]
struct BatchSums {
    sums: [Complex64; MIN_BLOCKS],
    counts: [usize; MIN_BLOCKS],
}

impl BatchSums {
    fn new() -> Self {
        Self {
            sums: [Complex64::new(0.0, 0.0); MIN_BLOCKS],
            counts: [0; MIN_BLOCKS],
        }
    }

    fn add(&mut self, atom_index: usize, sum: Complex64) {
        self.sums[atom_index % MIN_BLOCKS] += sum;
        self.counts[atom_index % MIN_BLOCKS] += 1;
    }

    /// Lock-in amplitude of each non-empty batch.
    fn amplitudes(&self, plan: &LockInPlan) -> Vec<Complex64> {
        self.sums
            .iter()
            .zip(&self.counts)
            .filter(|(_, &c)| c > 0)
            .map(|(s, &c)| plan.amplitude(s / c as f64))
            .collect()
    }
}

/// Drive-conjugate density amplitude of a set of atoms; `|O| ≤ 1`.
pub fn grating_observable(atoms: &[AtomState], params: &LatticeParams) -> Complex64 {
    let n = atoms.len().max(1) as f64;
    atoms
        .iter()
        .map(|a| atom_grating(a.x, a.z, params.grating_wavevector()))
        .sum::<Complex64>()
        / n
}

#[inline]
fn atom_grating(x: f64, z: f64, [kx, kz]: [f64; 2]) -> Complex64 {
    Complex64::from_polar((kx * x).cos(), -kz * z)
}

/// One measured spectrum point.
#[derive(Debug, Clone, PartialEq)]
pub struct GainPoint {
    pub delta: f64,
    /// −Im A / ε
    pub gain: f64,
    pub gain_err: f64,
    /// Re A / ε
    pub in_phase: f64,
    pub in_phase_err: f64,
    pub n_atoms: usize,
    pub settle_time: f64,
    pub measure_time: f64,
    pub n_blocks: usize,
}

impl GainPoint {
    fn from_blocks(
        plan: &LockInPlan,
        epsilon: f64,
        n_atoms: usize,
        blocks: &[Complex64],
    ) -> Self {
        let q: Vec<f64> = blocks.iter().map(|a| -a.im / epsilon).collect();
        let r: Vec<f64> = blocks.iter().map(|a| a.re / epsilon).collect();
        let (gain, gain_err) = mean_and_error(&q);
        let (in_phase, in_phase_err) = mean_and_error(&r);
        Self {
            delta: plan.delta,
            gain,
            gain_err,
            in_phase,
            in_phase_err,
            n_atoms,
            settle_time: plan.settle_time(),
            measure_time: plan.measure_time(),
            n_blocks: blocks.len(),
        }
    }
}

/// Mean and standard error of the mean.
pub(crate) fn mean_and_error(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-atom accumulator of a driven run.
struct AtomLockIn {
    sum: Complex64,
    p2_third: f64,
    p2_fourth: f64,
}

/// Default initial condition for driven runs: uniform over one lattice period
/// in x and one drive period in z.
pub fn probe_init(params: &LatticeParams, temperature: [f64; 2]) -> InitSpec {
    let [kx, kz] = params.grating_wavevector();
    InitSpec {
        position: PositionInit::Box {
            lx: 2.0 * PI / kx,
            lz: 2.0 * PI / kz.abs(),
        },
        temperature,
    }
}

/// Lock-in gain of the driven Monte Carlo ensemble at one detuning.
///
/// `config` supplies the step size, atom count, seed and initial condition; its
/// `t_total` and `record_stride` are not used.
pub fn probe_gain(
    params: &LatticeParams,
    probe: &ProbeSpec,
    config: &SimConfig,
) -> Result<GainPoint, SpectroscopyError> {
    params.validate()?;
    probe.validate()?;
    let mut check = *config;
    check.t_total = 0.0;
    check.validate(params)?;

    let plan = LockInPlan::new(probe.delta, config.dt, probe.settle_time, probe.measure_time);
    let integrator = Integrator::new(
        *params,
        plan.dt,
        Some(Drive {
            epsilon: probe.epsilon,
            delta: probe.delta,
        }),
    );
    let k = params.grating_wavevector();
    let q3 = plan.settle_steps / 2;
    let q4 = 3 * plan.settle_steps / 4;

    let results = run_atoms(config.n_atoms, |i| {
        let mut rng = atom_stream(config.seed, i as u64);
        let start = initial_state(params, &config.init, &mut rng);
        let mut acc = AtomLockIn {
            sum: Complex64::new(0.0, 0.0),
            p2_third: 0.0,
            p2_fourth: 0.0,
        };
        simulate_from(&integrator, start, &mut rng, i, plan.total_steps(), |step, _, s| {
            if step < plan.settle_steps {
                if step >= q4 {
                    acc.p2_fourth += s.momentum_sq();
                } else if step >= q3 {
                    acc.p2_third += s.momentum_sq();
                }
            } else if let Some(w) = plan.sample(step) {
                acc.sum += atom_grating(s.x, s.z, k) * w;
            }
        })?;
        Ok(acc)
    })?;
    results.check_failure_budget(config.n_atoms)?;

    let n = results.values.len();
    let mut batches = BatchSums::new();
    let (mut third, mut fourth) = (0.0, 0.0);
    for (i, acc) in &results.values {
        batches.add(*i, acc.sum);
        third += acc.p2_third;
        fourth += acc.p2_fourth;
    }
    let n_third = (q4 - q3) as f64;
    let n_fourth = (plan.settle_steps - q4) as f64;
    if n_third > 0.0 && n_fourth > 0.0 {
        let (a, b) = (third / n_third, fourth / n_fourth);
        let relative_change = (b - a).abs() / a.max(f64::MIN_POSITIVE);
        if relative_change > STEADY_STATE_TOLERANCE {
            return Err(SpectroscopyError::NotConverged { relative_change });
        }
    }
    Ok(GainPoint::from_blocks(
        &plan,
        probe.epsilon,
        n,
        &batches.amplitudes(&plan),
    ))
}

/// Outcome of the ε → 2ε linearity check.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearityCheck {
    pub at_epsilon: GainPoint,
    pub at_double: GainPoint,
    /// |g(2ε) − g(ε)| / |g(ε)|
    pub relative_change: f64,
    /// Set when the relative change exceeds [`LINEARITY_TOLERANCE`].
    pub warning: bool,
}

/// Measure at ε and 2ε with the same seed and flag departures from linear response.
pub fn probe_gain_linearity(
    params: &LatticeParams,
    probe: &ProbeSpec,
    config: &SimConfig,
) -> Result<LinearityCheck, SpectroscopyError> {
    let doubled = ProbeSpec {
        epsilon: 2.0 * probe.epsilon,
        ..*probe
    };
    let at_epsilon = probe_gain(params, probe, config)?;
    let at_double = probe_gain(params, &doubled, config)?;
    let relative_change =
        (at_double.gain - at_epsilon.gain).abs() / at_epsilon.gain.abs().max(f64::MIN_POSITIVE);
    Ok(LinearityCheck {
        warning: relative_change > LINEARITY_TOLERANCE,
        at_epsilon,
        at_double,
        relative_change,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum PointStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumPoint {
    pub delta: f64,
    pub gain: f64,
    pub gain_err: f64,
    pub n_atoms: usize,
    pub settle_time: f64,
    pub measure_time: f64,
    pub status: PointStatus,
}

impl From<GainPoint> for SpectrumPoint {
    fn from(g: GainPoint) -> Self {
        Self {
            delta: g.delta,
            gain: g.gain,
            gain_err: g.gain_err,
            n_atoms: g.n_atoms,
            settle_time: g.settle_time,
            measure_time: g.measure_time,
            status: PointStatus::Ok,
        }
    }
}

/// Gain spectrum ordered by strictly increasing δ.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Spectrum {
    pub points: Vec<SpectrumPoint>,
    pub params: Option<LatticeParams>,
    pub probe: Option<ProbeSpec>,
}

impl Spectrum {
    /// Spectrum from bare `(δ, gain, error)` triples, sorted by δ.
    pub fn from_triples(triples: impl IntoIterator<Item = (f64, f64, f64)>) -> Self {
        let mut points: Vec<SpectrumPoint> = triples
            .into_iter()
            .map(|(delta, gain, gain_err)| SpectrumPoint {
                delta,
                gain,
                gain_err,
                n_atoms: 0,
                settle_time: 0.0,
                measure_time: 0.0,
                status: PointStatus::Ok,
            })
            .collect();
        points.sort_by(|a, b| a.delta.total_cmp(&b.delta));
        Self {
            points,
            ..Self::default()
        }
    }

    /// Successfully measured points.
    pub fn ok_points(&self) -> impl Iterator<Item = &SpectrumPoint> {
        self.points.iter().filter(|p| p.status == PointStatus::Ok)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }
}

/// Check that a detuning grid is strictly increasing.
pub fn validate_grid(deltas: &[f64]) -> Result<(), ParamError> {
    if deltas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ParamError::new("delta_grid", "must be strictly increasing"));
    }
    Ok(())
}

/// One independent driven simulation per detuning; seeds derived from
/// `(config.seed, point index)`. Failed points are marked, not fatal.
pub fn spectrum_scan(
    params: &LatticeParams,
    deltas: &[f64],
    base: &ProbeSpec,
    config: &SimConfig,
) -> Result<Spectrum, ParamError> {
    validate_grid(deltas)?;
    let points = deltas
        .iter()
        .enumerate()
        .map(|(i, &delta)| {
            let probe = base.at_delta(delta);
            let cfg = SimConfig {
                seed: derive_seed(config.seed, i as u64),
                ..*config
            };
            match probe_gain(params, &probe, &cfg) {
                Ok(g) => g.into(),
                Err(e) => SpectrumPoint {
                    delta,
                    gain: f64::NAN,
                    gain_err: f64::NAN,
                    n_atoms: config.n_atoms,
                    settle_time: probe.settle_time,
                    measure_time: probe.measure_time,
                    status: PointStatus::Failed(e.to_string()),
                },
            }
        })
        .collect();
    Ok(Spectrum {
        points,
        params: Some(*params),
        probe: Some(*base),
    })
}

/// Overdamped Brownian particles in one dimension, driven by
/// `ε·cos(κx + δt)` (energy in units of k_BT). The density grating at κ relaxes
/// at `γ = Dκ²`, so the lock-in gain is `−γδ/(γ² + δ²)` to first order in ε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverdampedToy {
    /// Diffusion coefficient.
    pub diffusion: f64,
    /// Grating wavevector κ.
    pub kappa: f64,
}

impl OverdampedToy {
    pub fn relaxation_rate(&self) -> f64 {
        self.diffusion * self.kappa * self.kappa
    }

    /// Lock-in gain with the same estimator as [`probe_gain`].
    pub fn probe_gain(
        &self,
        probe: &ProbeSpec,
        dt: f64,
        n_particles: usize,
        seed: u64,
    ) -> Result<GainPoint, SpectroscopyError> {
        probe.validate()?;
        let plan = LockInPlan::new(probe.delta, dt, probe.settle_time, probe.measure_time);
        let d = self.diffusion;
        let kappa = self.kappa;
        let noise = (2.0 * d * plan.dt).sqrt();
        let eps = probe.epsilon;
        let results = run_atoms(n_particles, |i| {
            let mut rng = atom_stream(seed, i as u64);
            let mut x = 2.0 * PI / kappa * rng.random::<f64>();
            let mut sum = Complex64::new(0.0, 0.0);
            for step in 0..plan.total_steps() {
                if let Some(w) = plan.sample(step) {
                    sum += Complex64::from_polar(1.0, -kappa * x) * w;
                }
                let t = step as f64 * plan.dt;
                // −∂V/∂x with V = ε cos(κx + δt)
                let force = eps * kappa * (kappa * x + probe.delta * t).sin();
                let xi: f64 = rng.sample(StandardNormal);
                x += d * force * plan.dt + noise * xi;
            }
            Ok(sum)
        })?;
        let mut batches = BatchSums::new();
        for (i, s) in &results.values {
            batches.add(*i, *s);
        }
        Ok(GainPoint::from_blocks(
            &plan,
            eps,
            results.values.len(),
            &batches.amplitudes(&plan),
        ))
    }

    /// Toy counterpart of [`spectrum_scan`]: one independent run per detuning.
    pub fn spectrum(
        &self,
        deltas: &[f64],
        base: &ProbeSpec,
        dt: f64,
        n_particles: usize,
        seed: u64,
    ) -> Result<Spectrum, SpectroscopyError> {
        validate_grid(deltas)?;
        let points = deltas
            .iter()
            .enumerate()
            .map(|(i, &delta)| {
                self.probe_gain(&base.at_delta(delta), dt, n_particles, derive_seed(seed, i as u64))
                    .map(SpectrumPoint::from)
            })
            .collect::<Result<_, _>>()?;
        Ok(Spectrum {
            points,
            params: None,
            probe: Some(*base),
        })
    }
}
