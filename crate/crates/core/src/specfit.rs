//! Line-shape fits of gain spectra.
//!
//! The central model is
//!
//! ```text
//! f(δ) = a₁ + a₂δ + a₃/(δ² + γ²) + a₄δ/(δ² + γ²)
//! ```
//!
//! with a linear background for the sideband wings, a Lorentzian and a
//! dispersive term sharing the width γ. The dispersive extrema sit at `δ = ±γ`,
//! so γ is half the peak-to-peak distance. Internally γ = g² keeps the width positive.

use nalgebra::DMatrix;

use crate::error::FitError;
use crate::fit::{levenberg_marquardt, weighted_line, CurveModel, LmOptions, WeightedData};
use crate::spectroscopy::Spectrum;

/// Minimum number of spectrum points inside the central window.
pub const MIN_CENTRAL_POINTS: usize = 15;

/// Minimum number of wing points.
pub const MIN_WING_POINTS: usize = 6;

/// Relative width uncertainty above which a fit is declared unidentifiable.
pub const MAX_RELATIVE_WIDTH_ERROR: f64 = 1.0;

/// Evaluate the central line-shape model.
pub fn line_shape(delta: f64, a1: f64, a2: f64, a3: f64, a4: f64, gamma: f64) -> f64 {
    let den = delta * delta + gamma * gamma;
    a1 + a2 * delta + (a3 + a4 * delta) / den
}

/// Partial derivatives of [`line_shape`] with respect to `(a₁, a₂, a₃, a₄, γ)`.
pub fn line_shape_gradient(delta: f64, _a1: f64, _a2: f64, a3: f64, a4: f64, gamma: f64) -> [f64; 5] {
    let den = delta * delta + gamma * gamma;
    [
        1.0,
        delta,
        1.0 / den,
        delta / den,
        -2.0 * gamma * (a3 + a4 * delta) / (den * den),
    ]
}

/// Central model in the internal parameterization `(a₁, a₂, a₃, a₄, g)`, γ = g².
struct CentralModel;

impl CurveModel for CentralModel {
    fn n_params(&self) -> usize {
        5
    }
    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        line_shape(x, p[0], p[1], p[2], p[3], p[4] * p[4])
    }
    fn gradient(&self, x: f64, p: &[f64], g: &mut [f64]) {
        let d = line_shape_gradient(x, p[0], p[1], p[2], p[3], p[4] * p[4]);
        g[..4].copy_from_slice(&d[..4]);
        g[4] = d[4] * 2.0 * p[4];
    }
}

/// Dispersive wing model `a₁′ + a₄′δ/(δ² + γ_b²)` in `(a₁′, a₄′, g)`, γ_b = g².
struct WingModel;

impl CurveModel for WingModel {
    fn n_params(&self) -> usize {
        3
    }
    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        line_shape(x, p[0], 0.0, 0.0, p[1], p[2] * p[2])
    }
    fn gradient(&self, x: f64, p: &[f64], g: &mut [f64]) {
        let d = line_shape_gradient(x, p[0], 0.0, 0.0, p[1], p[2] * p[2]);
        g[0] = d[0];
        g[1] = d[3];
        g[2] = d[4] * 2.0 * p[2];
    }
}

/// Result of [`fit_central`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    /// Half the peak-to-peak distance of the dispersive term, ω_r.
    pub gamma_r: f64,
    /// Covariance of `(a₁, a₂, a₃, a₄, γ)`, inflated by χ²_red when above one.
    pub covariance: DMatrix<f64>,
    pub chi2: f64,
    pub reduced_chi2: f64,
    pub n_points: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Half-width δ_max of the fitted window.
    pub window: f64,
    /// Starting point `(a₁, a₂, a₃, a₄, γ)` of the minimization.
    pub initial: [f64; 5],
}

impl FitResult {
    pub fn errors(&self) -> [f64; 5] {
        std::array::from_fn(|k| self.covariance[(k, k)].max(0.0).sqrt())
    }

    pub fn gamma_r_err(&self) -> f64 {
        self.errors()[4]
    }

    pub fn eval(&self, delta: f64) -> f64 {
        line_shape(delta, self.a1, self.a2, self.a3, self.a4, self.gamma_r)
    }
}

struct Window {
    x: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
}

fn select(spectrum: &Spectrum, keep: impl Fn(f64) -> bool) -> Window {
    let mut w = Window {
        x: Vec::new(),
        y: Vec::new(),
        s: Vec::new(),
    };
    for p in spectrum.ok_points() {
        if keep(p.delta) && p.gain.is_finite() {
            w.x.push(p.delta);
            w.y.push(p.gain);
            w.s.push(p.gain_err);
        }
    }
    w
}

/// Documented starting point for the central fit.
///
/// a₁, a₂ from a weighted line through the outer 20% of the window, a₃ = 0,
/// γ₀ half the distance between the extrema of the baseline-subtracted gain,
/// a₄ from their peak-to-peak amplitude.
pub fn central_initial_guess(x: &[f64], y: &[f64], s: &[f64], window: f64) -> [f64; 5] {
    let outer: Vec<usize> = (0..x.len()).filter(|&i| x[i].abs() >= 0.8 * window).collect();
    let (a1, a2) = if outer.len() >= 2 {
        let ox: Vec<f64> = outer.iter().map(|&i| x[i]).collect();
        let oy: Vec<f64> = outer.iter().map(|&i| y[i]).collect();
        let os: Vec<f64> = outer.iter().map(|&i| s[i]).collect();
        let data = WeightedData { x: &ox, y: &oy, sigma: &os };
        let (a, b, _) = weighted_line(&data);
        if a.is_finite() && b.is_finite() {
            (a, b)
        } else {
            (0.0, 0.0)
        }
    } else {
        (0.0, 0.0)
    };
    let resid: Vec<f64> = (0..x.len()).map(|i| y[i] - a1 - a2 * x[i]).collect();
    let imax = (0..x.len()).max_by(|&i, &j| resid[i].total_cmp(&resid[j])).unwrap_or(0);
    let imin = (0..x.len()).min_by(|&i, &j| resid[i].total_cmp(&resid[j])).unwrap_or(0);
    let mut gamma0 = 0.5 * (x[imax] - x[imin]).abs();
    if !(gamma0 > 0.0) {
        gamma0 = 0.2 * window;
    }
    let sign = if x[imax] >= x[imin] { 1.0 } else { -1.0 };
    let a4 = sign * (resid[imax] - resid[imin]) * gamma0;
    [a1, a2, 0.0, a4, gamma0]
}

/// Fit the central line shape to the points with `|δ| ≤ window`.
pub fn fit_central(spectrum: &Spectrum, window: f64) -> Result<FitResult, FitError> {
    let w = select(spectrum, |d| d.abs() <= window);
    if w.x.len() < MIN_CENTRAL_POINTS {
        return Err(FitError::InsufficientData(format!(
            "{} points within |δ| ≤ {window}, need {MIN_CENTRAL_POINTS}",
            w.x.len()
        )));
    }
    let data = WeightedData::new(&w.x, &w.y, &w.s)?;
    let initial = central_initial_guess(&w.x, &w.y, &w.s, window);
    let p0 = [initial[0], initial[1], initial[2], initial[3], initial[4].sqrt()];
    let sol = levenberg_marquardt(&CentralModel, &data, &p0, &LmOptions::default())?;
    if !sol.converged {
        return Err(FitError::NoConvergence {
            iterations: sol.iterations,
        });
    }

    let g = sol.params[4];
    let gamma_r = g * g;
    // (a₁..a₄, g) → (a₁..a₄, γ): dγ/dg = 2g
    let mut jac = DMatrix::<f64>::identity(5, 5);
    jac[(4, 4)] = 2.0 * g;
    let covariance = &jac * sol.scaled_covariance() * jac.transpose();
    let result = FitResult {
        a1: sol.params[0],
        a2: sol.params[1],
        a3: sol.params[2],
        a4: sol.params[3],
        gamma_r,
        covariance,
        chi2: sol.chi2,
        reduced_chi2: sol.reduced_chi2(),
        n_points: sol.n_points,
        converged: sol.converged,
        iterations: sol.iterations,
        window,
        initial,
    };
    let gamma_err = result.gamma_r_err();
    if gamma_r >= window {
        return Err(FitError::DegenerateFit(format!(
            "width {gamma_r:.4} reached the window boundary {window}"
        )));
    }
    if !(gamma_r > 0.0) || !(gamma_err <= MAX_RELATIVE_WIDTH_ERROR * gamma_r) {
        return Err(FitError::DegenerateFit(format!(
            "width {gamma_r:.4e} ± {gamma_err:.4e} is not identifiable"
        )));
    }
    Ok(result)
}

/// Half-width of the central window: five times the initial width estimate made
/// from the points with `|δ| ≤ search`.
pub fn default_central_window(spectrum: &Spectrum, search: f64) -> Option<f64> {
    let w = select(spectrum, |d| d.abs() <= search);
    if w.x.len() < 3 {
        return None;
    }
    let g0 = central_initial_guess(&w.x, &w.y, &w.s, search)[4];
    Some((5.0 * g0).min(search))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WingFit {
    pub gamma_b: f64,
    pub gamma_b_err: f64,
    pub offset: f64,
    pub amplitude: f64,
    pub chi2: f64,
    pub reduced_chi2: f64,
    pub n_points: usize,
    pub cut: f64,
}

/// Fit `a₁′ + a₄′δ/(δ² + γ_b²)` to the points with `|δ| > cut`.
pub fn fit_wings(spectrum: &Spectrum, cut: f64) -> Result<WingFit, FitError> {
    let w = select(spectrum, |d| d.abs() > cut);
    let left = w.x.iter().filter(|&&d| d < 0.0).count();
    let right = w.x.len() - left;
    if left < 2 || right < 2 || w.x.len() < MIN_WING_POINTS {
        return Err(FitError::InsufficientData(format!(
            "wings beyond ±{cut} have {left} + {right} points"
        )));
    }
    let data = WeightedData::new(&w.x, &w.y, &w.s)?;
    // Offset from the mean, width from the location of the largest odd excursion.
    let offset = {
        let wsum: f64 = w.s.iter().map(|s| 1.0 / (s * s)).sum();
        w.y.iter().zip(&w.s).map(|(y, s)| y / (s * s)).sum::<f64>() / wsum
    };
    let ipk = (0..w.x.len())
        .max_by(|&i, &j| (w.y[i] - offset).abs().total_cmp(&(w.y[j] - offset).abs()))
        .unwrap_or(0);
    let g0 = w.x[ipk].abs();
    let a4 = (w.y[ipk] - offset) * 2.0 * g0 * w.x[ipk].signum();
    let sol = levenberg_marquardt(&WingModel, &data, &[offset, a4, g0.sqrt()], &LmOptions::default())?;
    if !sol.converged {
        return Err(FitError::NoConvergence {
            iterations: sol.iterations,
        });
    }
    let g = sol.params[2];
    let gamma_b = g * g;
    let err = sol.errors()[2] * 2.0 * g.abs();
    if !(gamma_b > cut) || !(err <= 0.5 * gamma_b) {
        return Err(FitError::DegenerateFit(format!(
            "wing width {gamma_b:.4e} ± {err:.4e} is not resolved beyond the cut {cut}"
        )));
    }
    Ok(WingFit {
        gamma_b,
        gamma_b_err: err,
        offset: sol.params[0],
        amplitude: sol.params[1],
        chi2: sol.chi2,
        reduced_chi2: sol.reduced_chi2(),
        n_points: sol.n_points,
        cut,
    })
}

/// Locate the extrema of the fitted dispersive term numerically; returns their distance.
pub fn dispersive_peak_to_peak(result: &FitResult) -> f64 {
    let f = |d: f64| result.a4 * d / (d * d + result.gamma_r * result.gamma_r);
    let span = 10.0 * result.gamma_r;
    let n = 200_001;
    let (mut imax, mut imin) = (0.0, 0.0);
    let (mut vmax, mut vmin) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        let d = -span + 2.0 * span * i as f64 / (n - 1) as f64;
        let v = f(d);
        if v > vmax {
            vmax = v;
            imax = d;
        }
        if v < vmin {
            vmin = v;
            imin = d;
        }
    }
    (imax - imin).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn dispersive_extrema_at_plus_minus_gamma() {
        let f = |d: f64| line_shape(d, 0.0, 0.0, 0.0, 1.0, 2.0);
        assert_relative_eq!(f(2.0), 0.25, epsilon = 1e-15);
        assert!(f(2.0) > f(1.99) && f(2.0) > f(2.01));
        assert!(f(-2.0) < f(-1.99) && f(-2.0) < f(-2.01));
        assert_relative_eq!(line_shape(0.0, 0.0, 0.0, 3.0, 0.0, 2.0), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let p: [f64; 5] = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.2..3.0),
            ];
            let d: f64 = rng.random_range(-5.0..5.0);
            let g = line_shape_gradient(d, p[0], p[1], p[2], p[3], p[4]);
            for k in 0..5 {
                let h = 1e-6 * p[k].abs().max(1.0);
                let mut up = p;
                let mut dn = p;
                up[k] += h;
                dn[k] -= h;
                let fd = (line_shape(d, up[0], up[1], up[2], up[3], up[4])
                    - line_shape(d, dn[0], dn[1], dn[2], dn[3], dn[4]))
                    / (2.0 * h);
                let scale = g[k].abs().max(1e-3);
                assert!((fd - g[k]).abs() <= 1e-5 * scale, "k={k} {fd} vs {}", g[k]);
            }
        }
    }

    fn synthetic(p: [f64; 5], noise: f64, seed: u64) -> Spectrum {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let deltas: Vec<f64> = (-30..=30).map(|i| i as f64 * 0.1333).collect();
        let scale = (p[3] / (2.0 * p[4])).abs();
        Spectrum::from_triples(deltas.into_iter().map(|d| {
            let y = line_shape(d, p[0], p[1], p[2], p[3], p[4]);
            let e: f64 = rng.sample(StandardNormal);
            (d, y + noise * scale * e, noise * scale)
        }))
    }

    #[test]
    fn noiseless_dispersive_recovery() {
        let truth = [0.0, 0.0, 0.0, 1.0, 0.8];
        let mut s = synthetic(truth, 0.0, 0);
        for p in &mut s.points {
            p.gain_err = 0.01;
        }
        let fit = fit_central(&s, 4.0).unwrap();
        assert!((fit.gamma_r - 0.8).abs() < 1e-8);
        assert!((fit.a4 - 1.0).abs() < 1e-8);
        assert!(fit.a3.abs() < 1e-8 && fit.a1.abs() < 1e-8 && fit.a2.abs() < 1e-8);
        assert_relative_eq!(dispersive_peak_to_peak(&fit), 2.0 * fit.gamma_r, epsilon = 1e-3);
    }

    #[test]
    fn noisy_full_model_recovery() {
        let truth = [0.01, 0.002, 0.05, 1.0, 0.8];
        let fit = fit_central(&synthetic(truth, 0.01, 9), 4.0).unwrap();
        assert!((fit.gamma_r / 0.8 - 1.0).abs() < 0.02, "{}", fit.gamma_r);
        assert!((fit.a4 - 1.0).abs() < 0.02);
        let c = &fit.covariance;
        for i in 0..5 {
            assert!(c[(i, i)] >= 0.0);
            for j in 0..5 {
                assert_relative_eq!(c[(i, j)], c[(j, i)], epsilon = 1e-12, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn negative_width_input_fits_positive() {
        let fit = fit_central(&synthetic([0.0, 0.0, 0.0, 1.0, -0.8], 0.01, 2), 4.0).unwrap();
        assert!((fit.gamma_r - 0.8).abs() < 0.02);
    }

    #[test]
    fn pure_line_is_degenerate() {
        let s = Spectrum::from_triples((-20..=20).map(|i| {
            let d = i as f64 * 0.2;
            (d, 0.3 + 0.1 * d, 0.01)
        }));
        match fit_central(&s, 4.0) {
            Err(FitError::DegenerateFit(_)) | Err(FitError::NoConvergence { .. }) => {}
            Ok(f) => assert!(f.a3.abs() < 1e-6 && f.a4.abs() < 1e-6, "{f:?}"),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn too_few_points() {
        let s = Spectrum::from_triples((0..10).map(|i| (i as f64, 0.0, 1.0)));
        assert!(matches!(fit_central(&s, 100.0), Err(FitError::InsufficientData(_))));
    }

    #[test]
    fn duplicated_points_leave_estimates_unchanged() {
        let s = synthetic([0.01, 0.002, 0.05, 1.0, 0.8], 0.01, 5);
        let mut doubled = s.clone();
        doubled.points.extend(s.points.iter().cloned());
        doubled.points.sort_by(|a, b| a.delta.total_cmp(&b.delta));
        let a = fit_central(&s, 4.0).unwrap();
        let b = fit_central(&doubled, 4.0).unwrap();
        assert_relative_eq!(a.gamma_r, b.gamma_r, max_relative = 1e-7);
        assert_relative_eq!(a.a4, b.a4, max_relative = 1e-7);
        assert!(b.gamma_r_err() < a.gamma_r_err());
    }

    fn two_scale(scale: f64) -> Spectrum {
        // narrow γ = 0.5 and broad γ = 500 with five times the broad peak height
        let (gn, gb) = (0.5 * scale, 500.0 * scale);
        let (an, ab) = (2.0 * gn, 5.0 * 2.0 * gb);
        let mut deltas: Vec<f64> = Vec::new();
        for k in 0..=40 {
            let d = 10f64.powf(-1.0 + 5.0 * k as f64 / 40.0) * scale;
            deltas.push(d);
            deltas.push(-d);
        }
        Spectrum::from_triples(deltas.into_iter().map(|d| {
            let y = an * d / (d * d + gn * gn) + ab * d / (d * d + gb * gb);
            (d, y, 0.01)
        }))
    }

    #[test]
    fn wing_fit_recovers_broad_width() {
        let w = fit_wings(&two_scale(1.0), 25.0).unwrap();
        assert!((w.gamma_b / 500.0 - 1.0).abs() < 0.1, "{}", w.gamma_b);
        let w10 = fit_wings(&two_scale(10.0), 250.0).unwrap();
        assert_relative_eq!(w10.gamma_b, 10.0 * w.gamma_b, max_relative = 1e-6);
    }

    #[test]
    fn wings_of_narrow_line_are_degenerate() {
        let s = Spectrum::from_triples((1..=60).flat_map(|k| {
            let d = 25.0 * 1.08f64.powi(k);
            let y = d / (d * d + 0.25);
            [(d, y, 1e-4), (-d, -y, 1e-4)]
        }));
        assert!(matches!(fit_wings(&s, 25.0), Err(FitError::DegenerateFit(_))));
    }

    #[test]
    fn wings_linear_in_delta_fail_instead_of_running_away() {
        // best fit sends γ_b to infinity; the fitter has to give up cleanly
        let s = Spectrum::from_triples([-40.0, -20.0, -10.0, -7.0, -4.0, 4.0, 7.0, 10.0, 20.0, 40.0].map(|d| {
            (d, -0.01 * d, 1e-3)
        }));
        assert!(fit_wings(&s, 3.0).is_err());
    }
}
