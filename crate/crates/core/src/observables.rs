//! Transport and thermal observables of undriven ensembles.
//!
//! Positions are in 1/k and times in 1/ω_r, so a mean-square displacement slope
//! `2D` comes out in ω_r/k². Diffusion coefficients are reported in ħ/M, which
//! is 2 in internal units ([`HBAR_OVER_M`]). Rates are reported in ω_r.

use std::f64::consts::PI;

use crate::engine::{AtomState, Ensemble};
use crate::error::{FitError, ObservableError};
use crate::fit::{levenberg_marquardt, weighted_line, CurveModel, LmOptions, WeightedData};
use crate::lattice::LatticeParams;

/// ħ/M in internal units (ħ = k = 1, M = 1/2).
pub const HBAR_OVER_M: f64 = 2.0;

/// Minimum ensemble size accepted by the MSD estimator.
pub const MIN_MSD_ATOMS: usize = 16;

/// Minimum number of samples inside a diffusion fit window.
pub const MIN_WINDOW_POINTS: usize = 10;

/// R² below which an MSD window is rejected as non-diffusive.
pub const MIN_R_SQUARED: f64 = 0.95;

/// Per-axis mean-square displacement from each atom's initial position.
#[derive(Debug, Clone, PartialEq)]
pub struct MsdSeries {
    pub times: Vec<f64>,
    /// ⟨(x − x₀)²⟩ in 1/k².
    pub msd_x: Vec<f64>,
    /// ⟨(z − z₀)²⟩ in 1/k².
    pub msd_z: Vec<f64>,
    pub err_x: Vec<f64>,
    pub err_z: Vec<f64>,
    pub n_atoms: usize,
}

impl MsdSeries {
    /// Build from atom-major trajectories sampled at `times`.
    pub fn from_trajectories(
        times: &[f64],
        trajectories: &[Vec<AtomState>],
    ) -> Result<Self, ObservableError> {
        let n = trajectories.len();
        if n < MIN_MSD_ATOMS {
            return Err(ObservableError::InsufficientData(format!(
                "{n} atoms, need at least {MIN_MSD_ATOMS}"
            )));
        }
        if times.len() < 2 {
            return Err(ObservableError::InsufficientData(
                "need at least two snapshots".into(),
            ));
        }
        if trajectories.iter().any(|tr| tr.len() != times.len()) {
            return Err(ObservableError::InsufficientData(
                "trajectory length differs from the time axis".into(),
            ));
        }
        let r = times.len();
        let mut mx = Moments::new(r);
        let mut mz = Moments::new(r);
        for tr in trajectories {
            let (x0, z0) = (tr[0].x, tr[0].z);
            for (j, s) in tr.iter().enumerate() {
                let dx = s.x - x0;
                let dz = s.z - z0;
                mx.add(j, dx * dx);
                mz.add(j, dz * dz);
            }
        }
        let (msd_x, err_x) = mx.finish(n);
        let (msd_z, err_z) = mz.finish(n);
        Ok(Self {
            times: times.to_vec(),
            msd_x,
            msd_z,
            err_x,
            err_z,
            n_atoms: n,
        })
    }

    /// `[t_total/2, t_total]`.
    pub fn default_window(&self) -> (f64, f64) {
        let t_end = self.times.last().copied().unwrap_or(0.0);
        (0.5 * t_end, t_end)
    }
}

pub fn msd_series(ensemble: &Ensemble) -> Result<MsdSeries, ObservableError> {
    MsdSeries::from_trajectories(&ensemble.times, &ensemble.trajectories)
}

/// Running sums of a per-snapshot sample.
struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Moments {
    fn new(r: usize) -> Self {
        Self {
            sum: vec![0.0; r],
            sum_sq: vec![0.0; r],
        }
    }

    #[inline]
    fn add(&mut self, j: usize, v: f64) {
        self.sum[j] += v;
        self.sum_sq[j] += v * v;
    }

    /// Means and standard errors `std/√n`.
    fn finish(self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let nf = n as f64;
        self.sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(&s, &s2)| {
                let mean = s / nf;
                let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
                (mean, (var / nf).sqrt())
            })
            .unzip()
    }
}

/// Linear fit of one MSD axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisDiffusion {
    /// Diffusion coefficient in ħ/M.
    pub d: f64,
    pub d_err: f64,
    /// Unweighted R² of the fitted line over the window.
    pub r_squared: f64,
    /// Log-log slope of the MSD across the window; 1 for diffusion, 2 for free flight.
    pub exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionResult {
    pub x: AxisDiffusion,
    pub z: AxisDiffusion,
    pub window: (f64, f64),
    pub n_points: usize,
}

impl DiffusionResult {
    pub fn d_x(&self) -> f64 {
        self.x.d
    }

    pub fn d_z(&self) -> f64 {
        self.z.d
    }
}

/// Weighted linear fit of the MSD over `window`; `D = slope/2` per axis.
pub fn fit_diffusion(
    msd: &MsdSeries,
    window: (f64, f64),
) -> Result<DiffusionResult, ObservableError> {
    let idx: Vec<usize> = (0..msd.times.len())
        .filter(|&j| msd.times[j] >= window.0 && msd.times[j] <= window.1)
        .collect();
    if idx.len() < MIN_WINDOW_POINTS {
        return Err(ObservableError::InsufficientData(format!(
            "{} samples in window, need {MIN_WINDOW_POINTS}",
            idx.len()
        )));
    }
    let t: Vec<f64> = idx.iter().map(|&j| msd.times[j]).collect();
    let x = fit_axis(&t, &pick(&msd.msd_x, &idx), &pick(&msd.err_x, &idx));
    let z = fit_axis(&t, &pick(&msd.msd_z, &idx), &pick(&msd.err_z, &idx));
    for a in [&x, &z] {
        if a.r_squared < MIN_R_SQUARED {
            return Err(ObservableError::NonlinearRegime {
                r_squared: a.r_squared,
            });
        }
    }
    Ok(DiffusionResult {
        x,
        z,
        window,
        n_points: idx.len(),
    })
}

fn pick(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&j| v[j]).collect()
}

fn fit_axis(t: &[f64], y: &[f64], err: &[f64]) -> AxisDiffusion {
    // Noise-free series carry zero error bars; fall back to equal weights.
    let sigma: Vec<f64> = if err.iter().all(|&e| e > 0.0 && e.is_finite()) {
        err.to_vec()
    } else {
        vec![1.0; t.len()]
    };
    let data = WeightedData::new(t, y, &sigma).expect("positive weights");
    let (a, b, cov) = weighted_line(&data);
    let chi2: f64 = (0..t.len())
        .map(|i| ((y[i] - a - b * t[i]) / sigma[i]).powi(2))
        .sum();
    let red = chi2 / (t.len() as f64 - 2.0);
    let slope_err = (cov[1][1] * red.max(1.0)).sqrt();

    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res: f64 = (0..t.len()).map(|i| (y[i] - a - b * t[i]).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    let (t0, t1) = (t[0], t[t.len() - 1]);
    let (y0, y1) = (y[0], y[y.len() - 1]);
    let exponent = if t0 > 0.0 && y0 > 0.0 && y1 > 0.0 && t1 > t0 {
        (y1 / y0).ln() / (t1 / t0).ln()
    } else {
        f64::NAN
    };

    // slope is 2D in internal units
    let to_hbar_over_m = 0.5 / HBAR_OVER_M;
    AxisDiffusion {
        d: (b * to_hbar_over_m).max(0.0),
        d_err: slope_err * to_hbar_over_m,
        r_squared,
        exponent,
    }
}

/// Per-axis kinetic temperature `k_B T = 2⟨pᵢ²⟩` (ħω_r) versus time.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureSeries {
    pub times: Vec<f64>,
    pub kt_x: Vec<f64>,
    pub kt_z: Vec<f64>,
    pub err_x: Vec<f64>,
    pub err_z: Vec<f64>,
    pub n_atoms: usize,
}

impl TemperatureSeries {
    pub fn from_trajectories(
        times: &[f64],
        trajectories: &[Vec<AtomState>],
    ) -> Result<Self, ObservableError> {
        let n = trajectories.len();
        if n < 2 || times.is_empty() {
            return Err(ObservableError::InsufficientData(
                "need at least two atoms and one snapshot".into(),
            ));
        }
        let mut mx = Moments::new(times.len());
        let mut mz = Moments::new(times.len());
        for tr in trajectories {
            for (j, s) in tr.iter().enumerate().take(times.len()) {
                mx.add(j, 2.0 * s.px * s.px);
                mz.add(j, 2.0 * s.pz * s.pz);
            }
        }
        let (kt_x, err_x) = mx.finish(n);
        let (kt_z, err_z) = mz.finish(n);
        Ok(Self {
            times: times.to_vec(),
            kt_x,
            kt_z,
            err_x,
            err_z,
            n_atoms: n,
        })
    }
}

pub fn temperature_series(ensemble: &Ensemble) -> Result<TemperatureSeries, ObservableError> {
    TemperatureSeries::from_trajectories(&ensemble.times, &ensemble.trajectories)
}

/// `y = A e^{−Γt} + B` with parameters `[A, Γ, B]`.
struct ExpDecay;

impl CurveModel for ExpDecay {
    fn n_params(&self) -> usize {
        3
    }

    fn eval(&self, t: f64, p: &[f64]) -> f64 {
        p[0] * (-p[1] * t).exp() + p[2]
    }

    fn gradient(&self, t: f64, p: &[f64], g: &mut [f64]) {
        let e = (-p[1] * t).exp();
        g[0] = e;
        g[1] = -p[0] * t * e;
        g[2] = 1.0;
    }
}

/// Single-exponential relaxation fit of one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpFit {
    /// Γ in ω_r.
    pub rate: f64,
    pub rate_err: f64,
    pub amplitude: f64,
    pub amplitude_err: f64,
    /// Asymptotic value B.
    pub offset: f64,
    pub offset_err: f64,
    pub reduced_chi2: f64,
    /// Root-mean-square of the normalized residuals; large values flag
    /// multi-exponential behavior.
    pub rms_residual: f64,
}

/// Fit `A e^{−Γt} + B`; [`ObservableError::NoRelaxation`] when Γ is within 2σ of zero.
pub fn fit_exponential(t: &[f64], y: &[f64], err: &[f64]) -> Result<ExpFit, ObservableError> {
    if t.len() < 4 || y.len() != t.len() || err.len() != t.len() {
        return Err(ObservableError::InsufficientData(
            "need at least four samples with error bars".into(),
        ));
    }
    let sigma: Vec<f64> = if err.iter().all(|&e| e > 0.0 && e.is_finite()) {
        err.to_vec()
    } else {
        vec![1.0; t.len()]
    };
    let data = WeightedData::new(t, y, &sigma)?;
    let p0 = exp_initial_guess(t, y);
    let sol = levenberg_marquardt(&ExpDecay, &data, &p0, &LmOptions::default())?;
    if !sol.converged {
        return Err(FitError::NoConvergence {
            iterations: sol.iterations,
        }
        .into());
    }
    let e = sol.errors();
    let (amplitude, rate, offset) = (sol.params[0], sol.params[1], sol.params[2]);
    let rate_err = e[1];
    if !(rate > 2.0 * rate_err) {
        return Err(ObservableError::NoRelaxation {
            rate,
            error: rate_err,
        });
    }
    let rms_residual = (sol.chi2 / sol.n_points as f64).sqrt();
    Ok(ExpFit {
        rate,
        rate_err,
        amplitude,
        amplitude_err: e[0],
        offset,
        offset_err: e[2],
        reduced_chi2: sol.reduced_chi2(),
        rms_residual,
    })
}

/// B from the last fifth, A from the first sample, Γ from the 1/e crossing.
fn exp_initial_guess(t: &[f64], y: &[f64]) -> [f64; 3] {
    let n = t.len();
    let tail = (n / 5).max(1);
    let b = y[n - tail..].iter().sum::<f64>() / tail as f64;
    let a = y[0] - b;
    let span = (t[n - 1] - t[0]).max(f64::MIN_POSITIVE);
    let mut rate = 3.0 / span;
    if a != 0.0 {
        if let Some(j) = (0..n).find(|&j| (y[j] - b) / a < (-1.0f64).exp()) {
            let dt = t[j] - t[0];
            if dt > 0.0 {
                rate = 1.0 / dt;
            }
        }
    }
    [a, rate, b]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureRelaxation {
    pub x: ExpFit,
    pub z: ExpFit,
}

impl TemperatureRelaxation {
    /// Γ_Tx in ω_r.
    pub fn gamma_tx(&self) -> f64 {
        self.x.rate
    }

    /// Γ_Tz in ω_r.
    pub fn gamma_tz(&self) -> f64 {
        self.z.rate
    }
}

pub fn fit_temperature_relaxation(
    series: &TemperatureSeries,
) -> Result<TemperatureRelaxation, ObservableError> {
    Ok(TemperatureRelaxation {
        x: fit_exponential(&series.times, &series.kt_x, &series.err_x)?,
        z: fit_exponential(&series.times, &series.kt_z, &series.err_z)?,
    })
}

pub fn temperature_relaxation(ensemble: &Ensemble) -> Result<TemperatureRelaxation, ObservableError> {
    fit_temperature_relaxation(&temperature_series(ensemble)?)
}

/// Fick-law relaxation rate `Σ Dᵢ Δkᵢ²` of a density grating, in ω_r.
///
/// `d` in ħ/M, `dk` in k.
pub fn gamma_d_general(d: [f64; 3], dk: [f64; 3]) -> f64 {
    HBAR_OVER_M * d.iter().zip(&dk).map(|(d, k)| d * k * k).sum::<f64>()
}

/// γ_D for the probe grating, `Δk = (k sinθ, 0, k(1 − cosθ))`, in ω_r.
pub fn gamma_d_lattice(result: &DiffusionResult, params: &LatticeParams) -> f64 {
    gamma_d_from(result.d_x(), result.d_z(), params)
}

pub fn gamma_d_from(d_x: f64, d_z: f64, params: &LatticeParams) -> f64 {
    gamma_d_general([d_x, 0.0, d_z], params.density_dk())
}

/// Discretization of the brute-force Fick oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeGrid {
    /// Grid points per grating period along every modulated axis.
    pub points_per_period: usize,
    /// Explicit time step in 1/ω_r; `None` picks a quarter of the stability bound.
    pub dt: Option<f64>,
}

impl Default for PdeGrid {
    fn default() -> Self {
        Self {
            points_per_period: 64,
            dt: None,
        }
    }
}

/// Decay rate (ω_r) of the Fourier amplitude of `n = 1 + ε cos(Δk·r)` evolved by
/// the explicit centered scheme for `∂n/∂t = Σ Dᵢ ∂ᵢ²n` on a periodic box of one
/// grating period per modulated axis.
pub fn pde_relaxation_oracle(
    d: [f64; 3],
    dk: [f64; 3],
    grid: PdeGrid,
    t_end: f64,
) -> Result<f64, ObservableError> {
    if grid.points_per_period < 16 {
        return Err(ObservableError::InsufficientData(
            "need at least 16 grid points per period".into(),
        ));
    }
    if d.iter().any(|&v| !(v >= 0.0)) || !(t_end > 0.0) {
        return Err(ObservableError::InsufficientData(
            "diffusion coefficients must be non-negative and t_end positive".into(),
        ));
    }
    let n_ax: [usize; 3] = std::array::from_fn(|i| if dk[i] != 0.0 { grid.points_per_period } else { 1 });
    // coefficient D/h² per axis, internal units
    let coef: [f64; 3] = std::array::from_fn(|i| {
        if n_ax[i] == 1 {
            0.0
        } else {
            let h = 2.0 * PI / dk[i].abs() / n_ax[i] as f64;
            HBAR_OVER_M * d[i] / (h * h)
        }
    });
    let c_sum: f64 = coef.iter().sum();
    let bound = if c_sum > 0.0 { 0.5 / c_sum } else { f64::INFINITY };
    let dt = match grid.dt {
        Some(dt) if dt > bound => return Err(ObservableError::StabilityViolation { dt, bound }),
        Some(dt) => dt,
        None if bound.is_finite() => 0.25 * bound,
        None => t_end,
    };
    let n_steps = ((t_end / dt).ceil() as usize).max(1);
    let dt = t_end / n_steps as f64;

    let [nx, ny, nz] = n_ax;
    let total = nx * ny * nz;
    let eps = 0.1;
    let phase = |ix: usize, iy: usize, iz: usize| {
        2.0 * PI
            * (dk[0].signum() * ix as f64 / nx as f64
                + dk[1].signum() * iy as f64 / ny as f64
                + dk[2].signum() * iz as f64 / nz as f64)
    };
    let mut basis = vec![0.0; total];
    let mut n = vec![0.0; total];
    for ix in 0..nx {
        for iy in 0..ny {
            for iz in 0..nz {
                let j = (ix * ny + iy) * nz + iz;
                basis[j] = phase(ix, iy, iz).cos();
                n[j] = 1.0 + eps * basis[j];
            }
        }
    }
    let norm: f64 = basis.iter().map(|b| b * b).sum();
    let amplitude = |n: &[f64]| n.iter().zip(&basis).map(|(v, b)| (v - 1.0) * b).sum::<f64>() / norm;

    let strides = [ny * nz, nz, 1];
    let mut next = vec![0.0; total];
    let a0 = amplitude(&n);
    for _ in 0..n_steps {
        for ix in 0..nx {
            for iy in 0..ny {
                for iz in 0..nz {
                    let j = (ix * ny + iy) * nz + iz;
                    let idx = [ix, iy, iz];
                    let mut lap = 0.0;
                    for ax in 0..3 {
                        if n_ax[ax] == 1 {
                            continue;
                        }
                        let i = idx[ax];
                        let up = if i + 1 == n_ax[ax] { j + strides[ax] - n_ax[ax] * strides[ax] } else { j + strides[ax] };
                        let dn = if i == 0 { j + (n_ax[ax] - 1) * strides[ax] } else { j - strides[ax] };
                        lap += coef[ax] * (n[up] - 2.0 * n[j] + n[dn]);
                    }
                    next[j] = n[j] + dt * lap;
                }
            }
        }
        std::mem::swap(&mut n, &mut next);
    }
    let a1 = amplitude(&n);
    Ok((a0 / a1).ln() / t_end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{AtomState, InitSpec, PositionInit, SimConfig};
    use crate::lattice::Sublevel;
    use crate::rng::atom_stream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Brownian paths with diffusion coefficient `d` (ħ/M) on both axes.
    fn brownian(d: f64, n_atoms: usize, n_rec: usize, dt: f64, seed: u64) -> (Vec<f64>, Vec<Vec<AtomState>>) {
        let sd = (2.0 * HBAR_OVER_M * d * dt).sqrt();
        let times = (0..n_rec).map(|j| j as f64 * dt).collect();
        let trajs = (0..n_atoms)
            .map(|i| {
                let mut rng = atom_stream(seed, i as u64);
                let mut s = AtomState::at_rest(rng.random::<f64>() * 10.0, 0.0, Sublevel::Plus);
                let mut out = vec![s];
                for _ in 1..n_rec {
                    s.x += sd * rng.sample::<f64, _>(StandardNormal);
                    s.z += sd * rng.sample::<f64, _>(StandardNormal);
                    out.push(s);
                }
                out
            })
            .collect();
        (times, trajs)
    }

    #[test]
    fn frozen_dynamics_has_zero_msd() {
        let tr: Vec<Vec<AtomState>> = (0..20)
            .map(|i| vec![AtomState::at_rest(i as f64, -(i as f64), Sublevel::Minus); 5])
            .collect();
        let m = MsdSeries::from_trajectories(&[0.0, 1.0, 2.0, 3.0, 4.0], &tr).unwrap();
        assert!(m.msd_x.iter().chain(&m.msd_z).all(|&v| v == 0.0));
    }

    #[test]
    fn ballistic_msd_is_quadratic() {
        let times: Vec<f64> = (0..30).map(|j| j as f64 * 0.1).collect();
        let mut rng = atom_stream(5, 0);
        let mut v2 = 0.0;
        let tr: Vec<Vec<AtomState>> = (0..64)
            .map(|_| {
                let px: f64 = rng.sample(StandardNormal);
                v2 += (2.0 * px) * (2.0 * px);
                times
                    .iter()
                    .map(|&t| AtomState {
                        x: 1.0 + 2.0 * px * t,
                        z: 0.0,
                        px,
                        pz: 0.0,
                        m: Sublevel::Plus,
                    })
                    .collect()
            })
            .collect();
        v2 /= 64.0;
        let m = MsdSeries::from_trajectories(&times, &tr).unwrap();
        for (j, &t) in times.iter().enumerate() {
            assert_relative_eq!(m.msd_x[j], v2 * t * t, max_relative = 1e-12, epsilon = 1e-14);
        }
        // over the whole run the quadratic is far from a line
        let err = fit_diffusion(&m, (0.0, 2.9)).unwrap_err();
        assert!(matches!(err, ObservableError::NonlinearRegime { .. }), "{err:?}");
    }

    #[test]
    fn too_few_atoms() {
        let tr = vec![vec![AtomState::at_rest(0.0, 0.0, Sublevel::Plus); 3]; 15];
        assert!(matches!(
            MsdSeries::from_trajectories(&[0.0, 1.0, 2.0], &tr),
            Err(ObservableError::InsufficientData(_))
        ));
    }

    #[test]
    fn exact_line_gives_exact_coefficient() {
        let times: Vec<f64> = (0..40).map(|j| j as f64 * 0.5).collect();
        // msd = 2·D_internal·t with D = 3 ħ/M
        let y: Vec<f64> = times.iter().map(|t| 2.0 * 3.0 * HBAR_OVER_M * t).collect();
        let m = MsdSeries {
            times: times.clone(),
            msd_x: y.clone(),
            msd_z: y,
            err_x: vec![0.0; 40],
            err_z: vec![0.0; 40],
            n_atoms: 100,
        };
        let r = fit_diffusion(&m, m.default_window()).unwrap();
        assert_relative_eq!(r.d_x(), 3.0, max_relative = 1e-12);
        assert_relative_eq!(r.x.r_squared, 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.x.exponent, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn brownian_oracle_recovery() {
        for &d in &[0.5, 1.0, 5.0] {
            let (times, tr) = brownian(d, 10_000, 41, 0.25, 11);
            let m = MsdSeries::from_trajectories(&times, &tr).unwrap();
            let r = fit_diffusion(&m, m.default_window()).unwrap();
            assert!((r.d_x() / d - 1.0).abs() < 0.05, "D={d}: {}", r.d_x());
            assert!((r.d_z() / d - 1.0).abs() < 0.05, "D={d}: {}", r.d_z());
        }
    }

    #[test]
    fn translation_leaves_diffusion_bit_identical() {
        // dyadic coordinates keep every shift exact in floating point
        let (times, tr) = brownian(1.0, 200, 30, 0.5, 3);
        let snap = |v: f64| (v * 1024.0).round() / 1024.0;
        let base: Vec<Vec<AtomState>> = tr
            .iter()
            .map(|t| t.iter().map(|s| AtomState { x: snap(s.x), z: snap(s.z), ..*s }).collect())
            .collect();
        let shifted: Vec<Vec<AtomState>> = base
            .iter()
            .map(|t| t.iter().map(|s| AtomState { x: s.x + 4096.0, z: s.z - 512.0, ..*s }).collect())
            .collect();
        let a = fit_diffusion(&MsdSeries::from_trajectories(&times, &base).unwrap(), (7.0, 14.5)).unwrap();
        let b = fit_diffusion(&MsdSeries::from_trajectories(&times, &shifted).unwrap(), (7.0, 14.5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn window_needs_ten_points() {
        let (times, tr) = brownian(1.0, 20, 12, 1.0, 3);
        let m = MsdSeries::from_trajectories(&times, &tr).unwrap();
        assert!(matches!(
            fit_diffusion(&m, m.default_window()),
            Err(ObservableError::InsufficientData(_))
        ));
    }

    fn synthetic_exp(rate: f64, noise: f64, seed: u64, scale_t: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = atom_stream(seed, 0);
        let t: Vec<f64> = (0..120).map(|j| j as f64 * 0.1 * scale_t).collect();
        let mut y = Vec::new();
        let mut e = Vec::new();
        for &ti in &t {
            let v = 200.0 * (-rate * ti / scale_t).exp() + 60.0;
            let s = noise * v;
            y.push(v + s * rng.sample::<f64, _>(StandardNormal));
            e.push(s);
        }
        (t, y, e)
    }

    #[test]
    fn exponential_recovery_with_noise() {
        for seed in 0..5 {
            let (t, y, e) = synthetic_exp(0.4, 0.01, seed, 1.0);
            let f = fit_exponential(&t, &y, &e).unwrap();
            assert!((f.rate / 0.4 - 1.0).abs() < 0.03, "{}", f.rate);
        }
    }

    #[test]
    fn constant_series_has_no_relaxation() {
        let t: Vec<f64> = (0..50).map(|j| j as f64).collect();
        let y = vec![7.0; 50];
        let e = vec![0.1; 50];
        assert!(matches!(
            fit_exponential(&t, &y, &e),
            Err(ObservableError::NoRelaxation { .. })
        ));
    }

    #[test]
    fn rescaled_time_halves_rate() {
        let (t, y, e) = synthetic_exp(0.4, 0.01, 9, 1.0);
        let t2: Vec<f64> = t.iter().map(|v| 2.0 * v).collect();
        let a = fit_exponential(&t, &y, &e).unwrap();
        let b = fit_exponential(&t2, &y, &e).unwrap();
        assert_relative_eq!(b.rate, 0.5 * a.rate, max_relative = 1e-9);
    }

    #[test]
    fn gamma_d_examples() {
        assert_eq!(gamma_d_general([0.0; 3], [1.0, 0.5, 0.2]), 0.0);
        assert_eq!(gamma_d_general([1.0, 2.0, 3.0], [0.0; 3]), 0.0);
        // 3 ħk²/M
        assert_relative_eq!(gamma_d_general([1.0, 0.0, 2.0], [1.0, 0.0, 1.0]), 6.0);

        let p = LatticeParams::new(-50.0, 5.0, PI / 6.0).unwrap();
        let expect = 100.0 * (0.25 + (1.0 - 0.75f64.sqrt()).powi(2));
        assert_relative_eq!(gamma_d_from(100.0, 100.0, &p) / HBAR_OVER_M, expect, max_relative = 1e-12);
        assert_relative_eq!(expect, 26.795, epsilon = 1e-3);

        let near_zero = LatticeParams::new(-50.0, 5.0, 1e-4).unwrap();
        assert!(gamma_d_from(100.0, 100.0, &near_zero) < 1e-5);
        let right = LatticeParams::new(-50.0, 5.0, PI / 2.0 - 1e-9).unwrap();
        assert_relative_eq!(gamma_d_from(1.0, 0.0, &right) / HBAR_OVER_M, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn pde_oracle_examples() {
        let g = PdeGrid::default();
        assert_eq!(pde_relaxation_oracle([0.0; 3], [1.0, 0.0, 1.0], g, 1.0).unwrap(), 0.0);
        let r = pde_relaxation_oracle([1.0, 0.0, 2.0], [1.0, 0.0, 1.0], g, 0.2).unwrap();
        assert!((r / 6.0 - 1.0).abs() < 0.01, "{r}");
        let r2 = pde_relaxation_oracle([2.0, 0.0, 4.0], [1.0, 0.0, 1.0], g, 0.2).unwrap();
        assert!((r2 / (2.0 * r) - 1.0).abs() < 0.01);
    }

    #[test]
    fn pde_oracle_rejects_unstable_or_coarse_grids() {
        let coarse = PdeGrid {
            points_per_period: 8,
            dt: None,
        };
        assert!(pde_relaxation_oracle([1.0; 3], [1.0; 3], coarse, 1.0).is_err());
        let big_dt = PdeGrid {
            points_per_period: 32,
            dt: Some(1.0),
        };
        assert!(matches!(
            pde_relaxation_oracle([1.0, 0.0, 1.0], [1.0, 0.0, 1.0], big_dt, 1.0),
            Err(ObservableError::StabilityViolation { .. })
        ));
    }

    #[test]
    fn msd_of_unit_cell_ensemble_starts_at_zero() {
        let p = LatticeParams::default();
        let cfg = SimConfig {
            dt: SimConfig::suggested_dt(&p),
            t_total: 1.0,
            n_atoms: 16,
            seed: 2,
            record_stride: 10,
            init: InitSpec::isotropic(PositionInit::UnitCell, 30.0),
        };
        let ens = crate::engine::run_ensemble(&p, &cfg).unwrap();
        let m = msd_series(&ens).unwrap();
        assert_eq!(m.msd_x[0], 0.0);
        assert!(m.msd_x.iter().chain(&m.msd_z).all(|&v| v >= 0.0));
        let ts = temperature_series(&ens).unwrap();
        assert_eq!(ts.kt_x.len(), ens.n_snapshots());
    }

    proptest! {
        #[test]
        fn gamma_d_is_bilinear_diagonal(
            d in prop::array::uniform3(0.0f64..50.0),
            dk in prop::array::uniform3(-2.0f64..2.0),
            alpha in 0.0f64..10.0,
            beta in -5.0f64..5.0,
        ) {
            let g = gamma_d_general(d, dk);
            let da = d.map(|v| alpha * v);
            let kb = dk.map(|v| beta * v);
            prop_assert!((gamma_d_general(da, dk) - alpha * g).abs() <= 1e-10 * (1.0 + alpha * g));
            prop_assert!((gamma_d_general(d, kb) - beta * beta * g).abs() <= 1e-10 * (1.0 + beta * beta * g));
        }
    }
}
