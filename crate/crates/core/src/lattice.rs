//! Closed-form light field of the four-beam lin⊥lin lattice in the `xOz` plane.
//!
//! Units throughout the crate: ħ = k = 1 and energies in ħω_r, times in 1/ω_r.
//! With ω_r = ħk²/2M this fixes M = 1/2, so the kinetic energy is `p²` and the
//! velocity is `2p`.
//!
//! Local σ± intensities at `y = 0`, with `K = sinθ` and `K₊ = cosθ`:
//!
//! ```text
//! s±(x, z) = [1 + cos²(Kx) ± 2 cos(Kx) sin(2K₊z)] / 2
//! ```
//!
//! Ground sublevel light shifts for a J_g = 1/2 → J_e = 3/2 transition use
//! Clebsch–Gordan weights 1 and 1/3:
//!
//! ```text
//! U±(x, z) = (2Δ₀′/3) · [3 s± + s∓] / 2 = (2Δ₀′/3) · [1 + cos²(Kx) ± cos(Kx) sin(2K₊z)]
//! ```
//!
//! so a red-detuned lattice (Δ₀′ < 0) has its `m = +1/2` wells at the pure σ+
//! sites, with depth `2Δ₀′`. The overall normalization of Δ₀′ against well depth
//! is a convention; analysis code only relies on ratios and trends.

use std::f64::consts::PI;

use crate::error::ParamError;

/// Physical and geometric knobs of the lattice, in recoil units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeParams {
    /// Light shift per beam Δ₀′ in ω_r; negative for red detuning.
    pub delta0p: f64,
    /// Optical pumping rate per beam Γ₀′ in ω_r. Zero gives conservative dynamics.
    pub gamma0p: f64,
    /// Lattice half-angle θ in radians.
    pub theta: f64,
    /// Photon-recoil kicks per scattering event.
    pub recoil_kick_count: u32,
    /// Multiplier for the rate of scattering events that keep the sublevel.
    pub extra_scatter_scale: f64,
}

impl Default for LatticeParams {
    fn default() -> Self {
        Self {
            delta0p: -50.0,
            gamma0p: 5.0,
            theta: PI / 6.0,
            recoil_kick_count: 2,
            extra_scatter_scale: 1.0,
        }
    }
}

impl LatticeParams {
    pub fn new(delta0p: f64, gamma0p: f64, theta: f64) -> Result<Self, ParamError> {
        let params = Self {
            delta0p,
            gamma0p,
            theta,
            ..Self::default()
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.theta > 0.0 && self.theta < PI / 2.0) {
            return Err(ParamError::new("theta", "must lie in (0, π/2)"));
        }
        if !(self.gamma0p >= 0.0 && self.gamma0p.is_finite()) {
            return Err(ParamError::new("gamma0p", "must be finite and non-negative"));
        }
        if self.delta0p == 0.0 || !self.delta0p.is_finite() {
            return Err(ParamError::new("delta0p", "must be finite and non-zero"));
        }
        if !(self.extra_scatter_scale >= 0.0 && self.extra_scatter_scale.is_finite()) {
            return Err(ParamError::new(
                "extra_scatter_scale",
                "must be finite and non-negative",
            ));
        }
        Ok(())
    }

    /// K = k sinθ.
    #[inline]
    pub fn k_perp(&self) -> f64 {
        self.theta.sin()
    }

    /// K₊ = k cosθ.
    #[inline]
    pub fn k_par(&self) -> f64 {
        self.theta.cos()
    }

    /// Unit cell extents: `2π/K` along x and `π/K₊` along z.
    pub fn unit_cell(&self) -> (f64, f64) {
        (2.0 * PI / self.k_perp(), PI / self.k_par())
    }

    /// Probe-lattice grating wavevector `(K, K₊ − k)` in the xOz plane.
    pub fn grating_wavevector(&self) -> [f64; 2] {
        [self.k_perp(), self.k_par() - 1.0]
    }

    /// Wavevector difference used for density relaxation, `(k sinθ, 0, k(1 − cosθ))`.
    pub fn density_dk(&self) -> [f64; 3] {
        [self.k_perp(), 0.0, 1.0 - self.k_par()]
    }

    /// Harmonic frequencies (ω_x, ω_z) at the bottom of a well, in ω_r.
    ///
    /// Expanding U₊ around a pure σ+ site gives `|Δ₀′|K²x² + (4/3)|Δ₀′|K₊²ζ²`,
    /// and with H = p² + a·x² the frequency is `2√a`.
    pub fn well_frequencies(&self) -> (f64, f64) {
        let depth = self.delta0p.abs();
        let wx = 2.0 * self.k_perp() * depth.sqrt();
        let wz = 2.0 * self.k_par() * (4.0 * depth / 3.0).sqrt();
        (wx, wz)
    }

    /// Shortest harmonic oscillation period among the two axes.
    pub fn min_oscillation_period(&self) -> f64 {
        let (wx, wz) = self.well_frequencies();
        2.0 * PI / wx.max(wz)
    }

    /// Upper bound of any single jump rate (sublevel change or elastic scattering).
    pub fn max_jump_rate(&self) -> f64 {
        let flip = 2.0 / 9.0 * self.gamma0p * 2.0;
        flip * self.extra_scatter_scale.max(1.0)
    }
}

/// Ground-state sublevel `m = ±1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sublevel {
    Plus,
    Minus,
}

impl Sublevel {
    #[inline]
    pub fn flipped(self) -> Self {
        match self {
            Sublevel::Plus => Sublevel::Minus,
            Sublevel::Minus => Sublevel::Plus,
        }
    }

    /// Magnetic quantum number as ±0.5.
    #[inline]
    pub fn m(self) -> f64 {
        match self {
            Sublevel::Plus => 0.5,
            Sublevel::Minus => -0.5,
        }
    }

    pub fn from_m(m: f64) -> Option<Self> {
        if m == 0.5 {
            Some(Sublevel::Plus)
        } else if m == -0.5 {
            Some(Sublevel::Minus)
        } else {
            None
        }
    }
}

/// Local light field seen by both sublevels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SublevelField {
    pub s_plus: f64,
    pub s_minus: f64,
    pub u_plus: f64,
    pub u_minus: f64,
    /// −∇U₊ as (x, z).
    pub f_plus: [f64; 2],
    /// −∇U₋ as (x, z).
    pub f_minus: [f64; 2],
}

impl SublevelField {
    #[inline]
    pub fn intensity(&self, m: Sublevel) -> f64 {
        match m {
            Sublevel::Plus => self.s_plus,
            Sublevel::Minus => self.s_minus,
        }
    }

    #[inline]
    pub fn potential(&self, m: Sublevel) -> f64 {
        match m {
            Sublevel::Plus => self.u_plus,
            Sublevel::Minus => self.u_minus,
        }
    }

    #[inline]
    pub fn force(&self, m: Sublevel) -> [f64; 2] {
        match m {
            Sublevel::Plus => self.f_plus,
            Sublevel::Minus => self.f_minus,
        }
    }
}

/// σ+ and σ− intensities at `(x, z)`; each lies in [0, 2].
pub fn sigma_intensities(x: f64, z: f64, params: &LatticeParams) -> (f64, f64) {
    let c = (params.k_perp() * x).cos();
    let s = (2.0 * params.k_par() * z).sin();
    let common = 1.0 + c * c;
    let cross = 2.0 * c * s;
    (0.5 * (common + cross), 0.5 * (common - cross))
}

/// Light-shift potentials and forces for both sublevels.
pub fn sublevel_potentials(x: f64, z: f64, params: &LatticeParams) -> SublevelField {
    FieldEvaluator::new(params).eval(x, z)
}

/// [`sublevel_potentials`] and [`probe_force`] with the geometry precomputed,
/// for use inside integration loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldEvaluator {
    kp: f64,
    kz2: f64,
    pref: f64,
    q: f64,
    probe_scale: f64,
}

impl FieldEvaluator {
    pub fn new(params: &LatticeParams) -> Self {
        let [kp, q] = params.grating_wavevector();
        Self {
            kp,
            kz2: 2.0 * params.k_par(),
            pref: 2.0 * params.delta0p / 3.0,
            q,
            probe_scale: params.delta0p.abs(),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64, z: f64) -> SublevelField {
        let (sx, c) = (self.kp * x).sin_cos();
        self.assemble(sx, c, z)
    }

    /// Lattice field plus the probe force at drive phase `δt`.
    #[inline]
    pub fn eval_driven(&self, x: f64, z: f64, phase: f64, epsilon: f64) -> (SublevelField, [f64; 2]) {
        let (sx, c) = (self.kp * x).sin_cos();
        let (sp, cp) = (self.q * z + phase).sin_cos();
        let amp = epsilon * self.probe_scale;
        let probe = [amp * self.kp * sx * cp, amp * c * self.q * sp];
        (self.assemble(sx, c, z), probe)
    }

    #[inline]
    fn assemble(&self, sx: f64, c: f64, z: f64) -> SublevelField {
        let (s, cz) = (self.kz2 * z).sin_cos();
        let pref = self.pref;
        let common = 1.0 + c * c;
        let cross = c * s;

        // ∂U±/∂x = −pref·K·sin(Kx)·(2c ± s), ∂U±/∂z = ±pref·2K₊·c·cos(2K₊z)
        let gx_common = -pref * self.kp * sx;
        let gz = pref * self.kz2 * c * cz;

        SublevelField {
            s_plus: 0.5 * common + cross,
            s_minus: 0.5 * common - cross,
            u_plus: pref * (common + cross),
            u_minus: pref * (common - cross),
            f_plus: [-gx_common * (2.0 * c + s), -gz],
            f_minus: [-gx_common * (2.0 * c - s), gz],
        }
    }
}

/// Optical pumping rates `(γ₊→₋, γ₋→₊)` in ω_r.
pub fn pumping_rates(x: f64, z: f64, params: &LatticeParams) -> (f64, f64) {
    let (s_plus, s_minus) = sigma_intensities(x, z, params);
    let scale = 2.0 / 9.0 * params.gamma0p;
    (scale * s_minus, scale * s_plus)
}

/// Probe-induced potential perturbation, identical for both sublevels:
/// `ε·|Δ₀′|·cos(Kx)·cos[(K₊ − k)z + δt]`.
pub fn probe_modulation(
    x: f64,
    z: f64,
    t: f64,
    delta: f64,
    epsilon: f64,
    params: &LatticeParams,
) -> f64 {
    if epsilon.abs() > 0.2 {
        log::warn!("probe amplitude {epsilon} is outside the linear-response range");
    }
    let [gx, gz] = params.grating_wavevector();
    epsilon * params.delta0p.abs() * (gx * x).cos() * (gz * z + delta * t).cos()
}

/// −∇ of [`probe_modulation`] as (x, z).
pub fn probe_force(
    x: f64,
    z: f64,
    t: f64,
    delta: f64,
    epsilon: f64,
    params: &LatticeParams,
) -> [f64; 2] {
    let [gx, gz] = params.grating_wavevector();
    let amp = epsilon * params.delta0p.abs();
    let (sx, cx) = (gx * x).sin_cos();
    let (sp, cp) = (gz * z + delta * t).sin_cos();
    [amp * gx * sx * cp, amp * cx * gz * sp]
}
