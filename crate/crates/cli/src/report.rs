//! `compare`: the γ_R / γ_D / Γ_T sweep and its report.

use std::path::Path;

use log::{info, warn};
use sisylab::fit::{ordinary_line, LineFit};
use sisylab::observables::gamma_d_from;
use sisylab::rng::derive_seed;

use crate::commands::{
    analyse_msd, analyse_temps, fit_spectrum, run_simulation, run_spectrum, write_fit, write_msd,
    write_spectrum, write_summary, write_temps,
};
use crate::config::RunConfig;
use crate::error::HarnessError;
use crate::table::{num, write_csv, write_file, Table};

/// Value with a one-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measured {
    pub value: f64,
    pub err: f64,
}

impl Measured {
    pub fn new(value: f64, err: f64) -> Self {
        Self { value, err }
    }

    /// Ratio with uncorrelated relative errors added in quadrature.
    pub fn ratio(self, other: Measured) -> Measured {
        let value = self.value / other.value;
        let rel = ((self.err / self.value).powi(2) + (other.err / other.value).powi(2)).sqrt();
        Measured::new(value, value.abs() * rel)
    }
}

fn pair(m: Option<Measured>) -> [f64; 2] {
    m.map_or([f64::NAN; 2], |m| [m.value, m.err])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointReport {
    pub delta0p: f64,
    pub gamma0p: f64,
    pub seed: u64,
    pub gamma_r: Option<Measured>,
    pub gamma_d: Option<Measured>,
    pub gamma_tx: Option<Measured>,
    pub gamma_tz: Option<Measured>,
    pub d_x: Option<Measured>,
    pub d_z: Option<Measured>,
    pub gamma_b: Option<Measured>,
    /// Log-log MSD slopes over the diffusion window.
    pub msd_exponent: Option<[f64; 2]>,
    pub msd_r_squared: Option<[f64; 2]>,
    /// Fitted a₄ of the central fit.
    pub dispersive_weight: Option<f64>,
    /// Any stage that failed, as `stage: message`.
    pub failures: Vec<String>,
}

impl PointReport {
    pub fn ratio_d_over_r(&self) -> Option<Measured> {
        Some(self.gamma_d?.ratio(self.gamma_r?))
    }

    pub fn ratio_b_over_d(&self) -> Option<Measured> {
        Some(self.gamma_b?.ratio(self.gamma_d?))
    }
}

/// Regressions across the Γ₀′ points sharing one Δ₀′.
#[derive(Debug, Clone, PartialEq)]
pub struct Regression {
    pub delta0p: f64,
    pub n_points: usize,
    /// γ_R = c₀ + c₁ Γ_Tz.
    pub gamma_r_vs_tz: Option<LineFit>,
    /// Γ_Tz = b₀ + b₁ Γ₀′.
    pub tz_vs_gamma0p: Option<LineFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub points: Vec<PointReport>,
    pub regressions: Vec<Regression>,
}

impl ComparisonReport {
    /// Largest relative difference between the γ_D column and γ_D recomputed
    /// from the D columns.
    pub fn gamma_d_audit(&self, theta_deg: f64) -> f64 {
        self.points
            .iter()
            .filter_map(|p| {
                let (gd, dx, dz) = (p.gamma_d?, p.d_x?, p.d_z?);
                let params = sisylab::lattice::LatticeParams {
                    delta0p: p.delta0p,
                    gamma0p: p.gamma0p,
                    theta: theta_deg.to_radians(),
                    ..Default::default()
                };
                let again = gamma_d_from(dx.value, dz.value, &params);
                Some(((gd.value - again) / again).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Run one sweep point end to end, writing its files into `dir`.
pub fn run_point(cfg: &RunConfig, dir: &Path) -> Result<PointReport, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let cfg = RunConfig {
        output_dir: dir.to_path_buf(),
        ..cfg.resolve()?
    };
    let params = cfg.lattice()?;
    let mut report = PointReport {
        delta0p: cfg.delta0p,
        gamma0p: cfg.gamma0p,
        seed: cfg.seed,
        gamma_r: None,
        gamma_d: None,
        gamma_tx: None,
        gamma_tz: None,
        d_x: None,
        d_z: None,
        gamma_b: None,
        msd_exponent: None,
        msd_r_squared: None,
        dispersive_weight: None,
        failures: Vec::new(),
    };

    match run_simulation(&cfg) {
        Ok(ensemble) => {
            write_summary(&dir.join("summary.csv"), &cfg, &ensemble)?;
            match analyse_msd(&ensemble) {
                Ok((msd, fit)) => {
                    write_msd(dir, &cfg, &msd, &fit)?;
                    match fit {
                        Ok(d) => {
                            report.d_x = Some(Measured::new(d.x.d, d.x.d_err));
                            report.d_z = Some(Measured::new(d.z.d, d.z.d_err));
                            report.msd_exponent = Some([d.x.exponent, d.z.exponent]);
                            report.msd_r_squared = Some([d.x.r_squared, d.z.r_squared]);
                            let [kx, _, kz] = params.density_dk();
                            let value = gamma_d_from(d.x.d, d.z.d, &params);
                            // γ_D = 2(D_x Δk_x² + D_z Δk_z²) in ω_r
                            let err = 2.0 * ((kx * kx * d.x.d_err).powi(2) + (kz * kz * d.z.d_err).powi(2)).sqrt();
                            report.gamma_d = Some(Measured::new(value, err));
                        }
                        Err(e) => report.failures.push(format!("diffusion: {e}")),
                    }
                }
                Err(e) => report.failures.push(format!("msd: {e}")),
            }
            match analyse_temps(&ensemble) {
                Ok((series, fit)) => {
                    write_temps(dir, &cfg, &series, &fit)?;
                    match fit {
                        Ok(r) => {
                            report.gamma_tx = Some(Measured::new(r.x.rate, r.x.rate_err));
                            report.gamma_tz = Some(Measured::new(r.z.rate, r.z.rate_err));
                        }
                        Err(e) => report.failures.push(format!("temperature: {e}")),
                    }
                }
                Err(e) => report.failures.push(format!("temperature: {e}")),
            }
        }
        Err(e) => report.failures.push(format!("simulate: {e}")),
    }

    match run_spectrum(&cfg) {
        Ok(spectrum) => {
            write_spectrum(&dir.join("spectrum.csv"), &cfg, &spectrum)?;
            let failed = spectrum.len() - spectrum.ok_points().count();
            if failed > 0 {
                report.failures.push(format!("spectrum: {failed} points failed"));
            }
            let fits = fit_spectrum(&cfg, &spectrum);
            write_fit(dir, &cfg, &spectrum, &fits)?;
            match &fits.central {
                Ok(f) => {
                    report.gamma_r = Some(Measured::new(f.gamma_r, f.gamma_r_err()));
                    report.dispersive_weight = Some(f.a4);
                }
                Err(e) => report.failures.push(format!("central fit: {e}")),
            }
            match &fits.wings {
                Ok(w) => report.gamma_b = Some(Measured::new(w.gamma_b, w.gamma_b_err)),
                Err(e) => report.failures.push(format!("wing fit: {e}")),
            }
        }
        Err(e) => report.failures.push(format!("spectrum: {e}")),
    }
    for f in &report.failures {
        warn!("Δ₀′ = {}, Γ₀′ = {}: {f}", report.delta0p, report.gamma0p);
    }
    Ok(report)
}

pub fn regressions(points: &[PointReport]) -> Vec<Regression> {
    let mut deltas: Vec<f64> = points.iter().map(|p| p.delta0p).collect();
    deltas.sort_by(f64::total_cmp);
    deltas.dedup();
    deltas
        .into_iter()
        .map(|delta0p| {
            let at: Vec<&PointReport> = points.iter().filter(|p| p.delta0p == delta0p).collect();
            let line = |pts: Vec<(f64, f64)>| {
                (pts.len() >= 3).then(|| {
                    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
                    ordinary_line(&x, &y)
                })
            };
            let rt = at
                .iter()
                .filter_map(|p| Some((p.gamma_tz?.value, p.gamma_r?.value)))
                .collect();
            let tg = at
                .iter()
                .filter_map(|p| Some((p.gamma0p, p.gamma_tz?.value)))
                .collect();
            Regression {
                delta0p,
                n_points: at.len(),
                gamma_r_vs_tz: line(rt),
                tz_vs_gamma0p: line(tg),
            }
        })
        .collect()
}

/// Sweep every `(Δ₀′, Γ₀′)` pair; point `k` uses seed `derive_seed(seed, k)` and
/// writes into `point_kk/`.
pub fn cmd_compare(cfg: &RunConfig) -> Result<ComparisonReport, HarnessError> {
    cfg.validate_sweep()?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut points = Vec::new();
    let mut k = 0u64;
    for &delta0p in &cfg.sweep_delta0p {
        for &gamma0p in &cfg.sweep_gamma0p {
            let point_cfg = cfg.at_point(delta0p, gamma0p, derive_seed(cfg.seed, k));
            info!("sweep point {k}: Δ₀′ = {delta0p}, Γ₀′ = {gamma0p}");
            let sub = dir.join(format!("point_{k:02}"));
            points.push(match run_point(&point_cfg, &sub) {
                Ok(p) => p,
                Err(e) => PointReport {
                    delta0p,
                    gamma0p,
                    seed: point_cfg.seed,
                    gamma_r: None,
                    gamma_d: None,
                    gamma_tx: None,
                    gamma_tz: None,
                    d_x: None,
                    d_z: None,
                    gamma_b: None,
                    msd_exponent: None,
                    msd_r_squared: None,
                    dispersive_weight: None,
                    failures: vec![format!("point: {e}")],
                },
            });
            k += 1;
        }
    }
    let report = ComparisonReport {
        regressions: regressions(&points),
        points,
    };
    write_compare(cfg, &report)?;
    Ok(report)
}

pub const REPORT_COLUMNS: &[&str] = &[
    "delta0p", "gamma0p", "gamma_r", "gamma_r_err", "gamma_d", "gamma_d_err", "gamma_tx",
    "gamma_tx_err", "gamma_tz", "gamma_tz_err", "d_x", "d_x_err", "d_z", "d_z_err",
    "gamma_d_over_gamma_r", "gamma_d_over_gamma_r_err", "gamma_b", "gamma_b_err",
    "gamma_b_over_gamma_d", "gamma_b_over_gamma_d_err", "failed",
];

pub fn write_compare(cfg: &RunConfig, report: &ComparisonReport) -> Result<(), HarnessError> {
    let dir = &cfg.output_dir;
    let rows = report
        .points
        .iter()
        .map(|p| {
            let mut row = vec![p.delta0p, p.gamma0p];
            for m in [
                p.gamma_r,
                p.gamma_d,
                p.gamma_tx,
                p.gamma_tz,
                p.d_x,
                p.d_z,
                p.ratio_d_over_r(),
                p.gamma_b,
                p.ratio_b_over_d(),
            ] {
                row.extend(pair(m));
            }
            row.push((!p.failures.is_empty()) as u8 as f64);
            row
        })
        .collect();
    let meta: Vec<(String, String)> = report
        .points
        .iter()
        .flat_map(|p| {
            p.failures
                .iter()
                .map(move |f| ("failed".to_string(), format!("{},{}: {f}", p.delta0p, p.gamma0p)))
        })
        .collect();
    let table = Table {
        columns: REPORT_COLUMNS,
        rows,
    };
    write_csv(&dir.join("report.csv"), "compare", cfg, &meta, &table)?;
    write_file(&dir.join("report.txt"), &render_report(cfg, report))
}

fn fmt_m(m: Option<Measured>) -> String {
    m.map_or_else(|| "n/a".to_string(), |m| format!("{:.4e} ± {:.2e}", m.value, m.err))
}

fn render_report(cfg: &RunConfig, report: &ComparisonReport) -> String {
    let mut out = crate::table::provenance("compare", cfg, &[]);
    out.push_str("units: gamma_r = omega_r, gamma_d = omega_r, gamma_tx = omega_r, gamma_tz = omega_r, gamma_b = omega_r, d = hbar/M\n");
    out.push_str(&format!(
        "gamma_d_audit: max relative difference to gamma_d(D_x, D_z) = {}\n\n",
        num(report.gamma_d_audit(cfg.theta_deg))
    ));
    for p in &report.points {
        out.push_str(&format!("point delta0p = {}, gamma0p = {}, seed = {}\n", p.delta0p, p.gamma0p, p.seed));
        for (name, m) in [
            ("gamma_r", p.gamma_r),
            ("gamma_d", p.gamma_d),
            ("gamma_tx", p.gamma_tx),
            ("gamma_tz", p.gamma_tz),
            ("d_x", p.d_x),
            ("d_z", p.d_z),
            ("gamma_d/gamma_r", p.ratio_d_over_r()),
            ("gamma_b", p.gamma_b),
            ("gamma_b/gamma_d", p.ratio_b_over_d()),
        ] {
            out.push_str(&format!("  {name}: {}\n", fmt_m(m)));
        }
        if let Some([ex, ez]) = p.msd_exponent {
            out.push_str(&format!("  msd log-log exponent: x {ex:.3}, z {ez:.3}\n"));
        }
        for f in &p.failures {
            out.push_str(&format!("  failed: {f}\n"));
        }
    }
    out.push('\n');
    for r in &report.regressions {
        out.push_str(&format!("regression delta0p = {} ({} points)\n", r.delta0p, r.n_points));
        match &r.gamma_r_vs_tz {
            Some(l) => out.push_str(&format!(
                "  gamma_r = ({:.4} ± {:.4}) omega_r + ({:.4} ± {:.4}) gamma_tz, R² = {:.4}\n",
                l.intercept, l.intercept_err, l.slope, l.slope_err, l.r_squared
            )),
            None => out.push_str("  gamma_r vs gamma_tz: fewer than 3 usable points\n"),
        }
        match &r.tz_vs_gamma0p {
            Some(l) => out.push_str(&format!(
                "  gamma_tz = ({:.4} ± {:.4}) + ({:.5} ± {:.5}) gamma0p, R² = {:.4}\n",
                l.intercept, l.intercept_err, l.slope, l.slope_err, l.r_squared
            )),
            None => out.push_str("  gamma_tz vs gamma0p: fewer than 3 usable points\n"),
        }
    }
    out
}
