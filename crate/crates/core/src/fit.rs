//! Weighted nonlinear least squares.
//!
//! Damped Gauss–Newton with Marquardt's diagonal scaling: each iteration solves
//! `(JᵀJ + λ·diag(JᵀJ)) Δ = −Jᵀr` and adapts λ by the actual-versus-predicted
//! reduction. Iteration stops once the relative step falls below
//! `step_tolerance` or after `max_iterations`.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::FitError;

/// A model `y = f(x; p)` with analytic parameter gradient.
pub trait CurveModel {
    fn n_params(&self) -> usize;
    fn eval(&self, x: f64, p: &[f64]) -> f64;
    /// Writes `∂f/∂pₖ` into `grad`.
    fn gradient(&self, x: f64, p: &[f64], grad: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            step_tolerance: 1e-8,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmSolution {
    pub params: Vec<f64>,
    /// `(JᵀJ)⁻¹` of the weighted problem at the solution.
    pub covariance: DMatrix<f64>,
    /// Σ ((y − f)/σ)²
    pub chi2: f64,
    pub n_points: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl LmSolution {
    pub fn dof(&self) -> usize {
        self.n_points.saturating_sub(self.params.len())
    }

    pub fn reduced_chi2(&self) -> f64 {
        match self.dof() {
            0 => f64::NAN,
            d => self.chi2 / d as f64,
        }
    }

    /// Covariance inflated by the reduced χ² when the scatter exceeds the error bars.
    pub fn scaled_covariance(&self) -> DMatrix<f64> {
        let r = self.reduced_chi2();
        if r.is_finite() && r > 1.0 {
            &self.covariance * r
        } else {
            self.covariance.clone()
        }
    }

    /// 1σ uncertainties from [`scaled_covariance`](Self::scaled_covariance);
    /// unidentifiable parameters get an infinite error.
    pub fn errors(&self) -> Vec<f64> {
        let c = self.scaled_covariance();
        (0..self.params.len())
            .map(|k| match c[(k, k)] {
                v if v.is_nan() => f64::INFINITY,
                v => v.max(0.0).sqrt(),
            })
            .collect()
    }
}

/// Data with per-point standard errors.
#[derive(Debug, Clone, Copy)]
pub struct WeightedData<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub sigma: &'a [f64],
}

impl<'a> WeightedData<'a> {
    pub fn new(x: &'a [f64], y: &'a [f64], sigma: &'a [f64]) -> Result<Self, FitError> {
        if x.len() != y.len() || x.len() != sigma.len() {
            return Err(FitError::InsufficientData("length mismatch".into()));
        }
        if sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(FitError::InsufficientData(
                "every point needs a positive finite error bar".into(),
            ));
        }
        Ok(Self { x, y, sigma })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

fn residuals<M: CurveModel>(model: &M, data: &WeightedData, p: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        data.len(),
        (0..data.len()).map(|i| (data.y[i] - model.eval(data.x[i], p)) / data.sigma[i]),
    )
}

fn jacobian<M: CurveModel>(model: &M, data: &WeightedData, p: &[f64]) -> DMatrix<f64> {
    let n = model.n_params();
    let mut jac = DMatrix::zeros(data.len(), n);
    let mut g = vec![0.0; n];
    for i in 0..data.len() {
        model.gradient(data.x[i], p, &mut g);
        for k in 0..n {
            // residual derivative
            jac[(i, k)] = -g[k] / data.sigma[i];
        }
    }
    jac
}

/// Pseudo-inverse of a symmetric positive semidefinite matrix. Directions with
/// negligible eigenvalue get infinite variance.
fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let eig = match SymmetricEigen::try_new(m.clone(), f64::EPSILON, 500) {
        Some(eig) if m.iter().all(|v| v.is_finite()) => eig,
        _ => return DMatrix::from_element(n, n, f64::INFINITY),
    };
    let lmax = eig.eigenvalues.amax();
    let cutoff = lmax * 1e-14 * n as f64;
    let mut out = DMatrix::zeros(n, n);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        let inv = if l > cutoff { 1.0 / l } else { f64::INFINITY };
        for i in 0..n {
            for j in 0..n {
                let v = eig.eigenvectors[(i, k)] * eig.eigenvectors[(j, k)];
                if v.abs() > 1e-12 {
                    out[(i, j)] += v * inv;
                }
            }
        }
    }
    out
}

/// Minimize the weighted χ² of `model` on `data` starting from `p0`.
pub fn levenberg_marquardt<M: CurveModel>(
    model: &M,
    data: &WeightedData,
    p0: &[f64],
    options: &LmOptions,
) -> Result<LmSolution, FitError> {
    let n = model.n_params();
    if p0.len() != n {
        return Err(FitError::InsufficientData("initial guess has wrong length".into()));
    }
    if data.len() < n {
        return Err(FitError::InsufficientData(format!(
            "{} points for {n} parameters",
            data.len()
        )));
    }
    let mut p = p0.to_vec();
    let mut r = residuals(model, data, &p);
    let mut chi2 = r.norm_squared();
    if !chi2.is_finite() {
        return Err(FitError::DegenerateFit("non-finite residuals at the initial guess".into()));
    }
    let mut lambda = options.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let jac = jacobian(model, data, &p);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        if !jtj.iter().chain(grad.iter()).all(|v| v.is_finite()) {
            break;
        }
        let diag: Vec<f64> = (0..n).map(|k| jtj[(k, k)].max(1e-300)).collect();

        let mut accepted = false;
        for _ in 0..60 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * diag[k];
            }
            let step = match a.clone().cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                // SVD::new never returns on some ill-conditioned inputs; cap the sweeps
                None => SVD::try_new(a, true, true, f64::EPSILON, 500)
                    .and_then(|svd| svd.solve(&(-&grad), 1e-300).ok())
                    .unwrap_or(DVector::zeros(n)),
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let r_trial = residuals(model, data, &trial);
            let chi2_trial = r_trial.norm_squared();
            let step_norm = step.norm();
            let p_norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            if chi2_trial.is_finite() && chi2_trial <= chi2 {
                p = trial;
                r = r_trial;
                let tiny_step = step_norm <= options.step_tolerance * (p_norm + options.step_tolerance);
                chi2 = chi2_trial;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if tiny_step {
                    converged = true;
                }
                break;
            }
            if step_norm <= options.step_tolerance * (p_norm + options.step_tolerance) {
                // Even the damped step cannot reduce χ²: at a minimum to working precision.
                converged = true;
                break;
            }
            lambda *= 4.0;
        }
        if converged {
            break;
        }
        if !accepted {
            break;
        }
    }

    let jac = jacobian(model, data, &p);
    let covariance = pseudo_inverse(&(jac.transpose() * &jac));
    Ok(LmSolution {
        params: p,
        covariance,
        chi2,
        n_points: data.len(),
        iterations,
        converged,
    })
}

/// Weighted straight line `y = a + b·x`; returns `(a, b, cov)`.
pub fn weighted_line(data: &WeightedData) -> (f64, f64, [[f64; 2]; 2]) {
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..data.len() {
        let w = 1.0 / (data.sigma[i] * data.sigma[i]);
        s += w;
        sx += w * data.x[i];
        sy += w * data.y[i];
        sxx += w * data.x[i] * data.x[i];
        sxy += w * data.x[i] * data.y[i];
    }
    let det = s * sxx - sx * sx;
    let b = (s * sxy - sx * sy) / det;
    let a = (sxx * sy - sx * sxy) / det;
    (a, b, [[sxx / det, -sx / det], [-sx / det, s / det]])
}

/// Ordinary least-squares line with coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_err: f64,
    pub slope_err: f64,
    pub r_squared: f64,
}

pub fn ordinary_line(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - intercept - slope * a;
            e * e
        })
        .sum();
    let s2 = if x.len() > 2 { sse / (n - 2.0) } else { f64::NAN };
    LineFit {
        intercept,
        slope,
        intercept_err: (s2 * (1.0 / n + mx * mx / sxx)).sqrt(),
        slope_err: (s2 / sxx).sqrt(),
        r_squared: if syy > 0.0 { 1.0 - sse / syy } else { 1.0 },
    }
}
