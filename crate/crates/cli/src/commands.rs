//! Subcommand implementations. Every command takes a resolved [`RunConfig`] and
//! writes into `config.output_dir`.

use std::path::{Path, PathBuf};

use log::info;
use sisylab::engine::{run_ensemble, AtomState, Ensemble};
use sisylab::observables::{
    fit_diffusion, fit_temperature_relaxation, msd_series, temperature_series, DiffusionResult,
    MsdSeries, TemperatureRelaxation, TemperatureSeries,
};
use sisylab::specfit::{default_central_window, fit_central, fit_wings, FitResult, WingFit};
use sisylab::spectroscopy::{spectrum_scan, PointStatus, Spectrum, SpectrumPoint};

use crate::config::RunConfig;
use crate::error::HarnessError;
use crate::store::TrajectoryStore;
use crate::table::{num, write_csv, write_report, CsvFile, Table};

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Undriven ensemble of a resolved config.
pub fn run_simulation(cfg: &RunConfig) -> Result<Ensemble, HarnessError> {
    let params = cfg.lattice()?;
    let sim = cfg.sim_config()?;
    info!(
        "simulating {} atoms for {} / ω_r (dt = {})",
        sim.n_atoms, sim.t_total, sim.dt
    );
    Ok(run_ensemble(&params, &sim)?)
}

/// Rebuild an ensemble from a trajectory store written by `simulate`.
pub fn load_ensemble(path: &Path) -> Result<(RunConfig, Ensemble), HarnessError> {
    let store = TrajectoryStore::load(path)?;
    let cfg = RunConfig::parse(&store.config_text)?;
    let times = store
        .atoms
        .iter()
        .max_by_key(|a| a.times.len())
        .map(|a| a.times.clone())
        .unwrap_or_default();
    let trajectories: Vec<Vec<AtomState>> = store.atoms.iter().map(|a| a.states.clone()).collect();
    let mut ensemble =
        Ensemble::from_trajectories(cfg.lattice()?, cfg.sim_config()?, times, trajectories);
    ensemble.atom_indices = store.atoms.iter().map(|a| a.index as usize).collect();
    Ok((cfg, ensemble))
}

fn msd_or_zero(ensemble: &Ensemble) -> Result<MsdSeries, HarnessError> {
    if ensemble.n_snapshots() == 1 {
        let zero = vec![0.0];
        return Ok(MsdSeries {
            times: ensemble.times.clone(),
            msd_x: zero.clone(),
            msd_z: zero.clone(),
            err_x: zero.clone(),
            err_z: zero,
            n_atoms: ensemble.n_atoms(),
        });
    }
    Ok(msd_series(ensemble)?)
}

pub fn write_summary(
    path: &Path,
    cfg: &RunConfig,
    ensemble: &Ensemble,
) -> Result<(), HarnessError> {
    let temps = temperature_series(ensemble)?;
    let msd = msd_or_zero(ensemble)?;
    let rows = (0..ensemble.n_snapshots())
        .map(|j| {
            vec![
                ensemble.times[j],
                temps.kt_x[j],
                temps.err_x[j],
                temps.kt_z[j],
                temps.err_z[j],
                msd.msd_x[j],
                msd.err_x[j],
                msd.msd_z[j],
                msd.err_z[j],
                ensemble.plus_fraction(j),
            ]
        })
        .collect();
    let table = Table {
        columns: &[
            "time", "kt_x", "kt_x_err", "kt_z", "kt_z_err", "msd_x", "msd_x_err", "msd_z",
            "msd_z_err", "plus_fraction",
        ],
        rows,
    };
    let meta = vec![
        ("n_atoms".into(), ensemble.n_atoms().to_string()),
        ("failed_atoms".into(), format!("{:?}", ensemble.failed)),
    ];
    write_csv(path, "simulate", cfg, &meta, &table)
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Ensemble, HarnessError> {
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    let ensemble = run_simulation(cfg)?;
    write_summary(&dir.join("summary.csv"), cfg, &ensemble)?;
    if cfg.write_trajectories {
        TrajectoryStore::from_ensemble(cfg.to_text(), &ensemble).save(&dir.join("trajectories.bin"))?;
    }
    Ok(ensemble)
}

pub fn write_msd(
    dir: &Path,
    cfg: &RunConfig,
    msd: &MsdSeries,
    fit: &Result<DiffusionResult, HarnessError>,
) -> Result<(), HarnessError> {
    let rows = (0..msd.times.len())
        .map(|j| vec![msd.times[j], msd.msd_x[j], msd.err_x[j], msd.msd_z[j], msd.err_z[j]])
        .collect();
    let table = Table {
        columns: &["time", "msd_x", "msd_x_err", "msd_z", "msd_z_err"],
        rows,
    };
    write_csv(&dir.join("msd.csv"), "msd", cfg, &[], &table)?;
    let (t0, t1) = msd.default_window();
    let mut entries = vec![
        ("units".to_string(), "D in hbar/M, times in 1/omega_r".to_string()),
        ("n_atoms".into(), msd.n_atoms.to_string()),
    ];
    match fit {
        Ok(d) => entries.extend([
            ("status".into(), "ok".into()),
            ("window_start".into(), num(d.window.0)),
            ("window_end".into(), num(d.window.1)),
            ("n_points".into(), d.n_points.to_string()),
            ("d_x".into(), num(d.x.d)),
            ("d_x_err".into(), num(d.x.d_err)),
            ("r_squared_x".into(), num(d.x.r_squared)),
            ("exponent_x".into(), num(d.x.exponent)),
            ("d_z".into(), num(d.z.d)),
            ("d_z_err".into(), num(d.z.d_err)),
            ("r_squared_z".into(), num(d.z.r_squared)),
            ("exponent_z".into(), num(d.z.exponent)),
        ]),
        Err(e) => entries.extend([
            ("status".into(), "failed".into()),
            ("window_start".into(), num(t0)),
            ("window_end".into(), num(t1)),
            ("error".into(), e.to_string()),
        ]),
    }
    write_report(&dir.join("diffusion.txt"), "msd", cfg, &entries)
}

pub fn analyse_msd(ensemble: &Ensemble) -> Result<(MsdSeries, Result<DiffusionResult, HarnessError>), HarnessError> {
    let msd = msd_series(ensemble)?;
    let fit = fit_diffusion(&msd, msd.default_window()).map_err(HarnessError::from);
    Ok((msd, fit))
}

pub fn cmd_msd(cfg: &RunConfig, ensemble: &Ensemble) -> Result<DiffusionResult, HarnessError> {
    ensure_dir(&cfg.output_dir)?;
    let (msd, fit) = analyse_msd(ensemble)?;
    write_msd(&cfg.output_dir, cfg, &msd, &fit)?;
    fit
}

pub fn write_temps(
    dir: &Path,
    cfg: &RunConfig,
    series: &TemperatureSeries,
    fit: &Result<TemperatureRelaxation, HarnessError>,
) -> Result<(), HarnessError> {
    let rows = (0..series.times.len())
        .map(|j| vec![series.times[j], series.kt_x[j], series.err_x[j], series.kt_z[j], series.err_z[j]])
        .collect();
    let table = Table {
        columns: &["time", "kt_x", "kt_x_err", "kt_z", "kt_z_err"],
        rows,
    };
    write_csv(&dir.join("temps.csv"), "temps", cfg, &[], &table)?;
    let mut entries = vec![
        ("units".to_string(), "rates in omega_r, temperatures in hbar*omega_r".to_string()),
        ("n_atoms".into(), series.n_atoms.to_string()),
    ];
    match fit {
        Ok(r) => {
            entries.push(("status".into(), "ok".into()));
            for (axis, f) in [("x", &r.x), ("z", &r.z)] {
                entries.extend([
                    (format!("gamma_t{axis}"), num(f.rate)),
                    (format!("gamma_t{axis}_err"), num(f.rate_err)),
                    (format!("kt_{axis}_asymptotic"), num(f.offset)),
                    (format!("kt_{axis}_asymptotic_err"), num(f.offset_err)),
                    (format!("reduced_chi2_{axis}"), num(f.reduced_chi2)),
                    (format!("rms_residual_{axis}"), num(f.rms_residual)),
                ]);
            }
        }
        Err(e) => entries.extend([("status".into(), "failed".into()), ("error".into(), e.to_string())]),
    }
    write_report(&dir.join("relaxation.txt"), "temps", cfg, &entries)
}

pub fn analyse_temps(
    ensemble: &Ensemble,
) -> Result<(TemperatureSeries, Result<TemperatureRelaxation, HarnessError>), HarnessError> {
    let series = temperature_series(ensemble)?;
    let fit = fit_temperature_relaxation(&series).map_err(HarnessError::from);
    Ok((series, fit))
}

pub fn cmd_temps(cfg: &RunConfig, ensemble: &Ensemble) -> Result<TemperatureRelaxation, HarnessError> {
    ensure_dir(&cfg.output_dir)?;
    let (series, fit) = analyse_temps(ensemble)?;
    write_temps(&cfg.output_dir, cfg, &series, &fit)?;
    fit
}

pub fn run_spectrum(cfg: &RunConfig) -> Result<Spectrum, HarnessError> {
    let params = cfg.lattice()?;
    let (sim, probe) = cfg.probe_config()?;
    let grid = cfg.grid()?;
    info!("spectrum: {} detunings, {} atoms each", grid.len(), sim.n_atoms);
    Ok(spectrum_scan(&params, grid, &probe, &sim)?)
}

pub fn write_spectrum(path: &Path, cfg: &RunConfig, spectrum: &Spectrum) -> Result<(), HarnessError> {
    let rows = spectrum
        .points
        .iter()
        .map(|p| {
            vec![
                p.delta,
                p.gain,
                p.gain_err,
                p.n_atoms as f64,
                p.settle_time,
                p.measure_time,
            ]
        })
        .collect();
    let meta: Vec<(String, String)> = spectrum
        .points
        .iter()
        .filter_map(|p| match &p.status {
            PointStatus::Failed(why) => Some(("failed".to_string(), format!("{}: {why}", p.delta))),
            PointStatus::Ok => None,
        })
        .collect();
    let table = Table {
        columns: &["delta_omega_r", "gain", "gain_err", "n_atoms", "settle", "measure"],
        rows,
    };
    write_csv(path, "spectrum", cfg, &meta, &table)
}

pub fn cmd_spectrum(cfg: &RunConfig) -> Result<Spectrum, HarnessError> {
    ensure_dir(&cfg.output_dir)?;
    let spectrum = run_spectrum(cfg)?;
    write_spectrum(&cfg.output_dir.join("spectrum.csv"), cfg, &spectrum)?;
    Ok(spectrum)
}

/// Read a spectrum CSV; rows with a NaN gain are restored as failed points.
pub fn read_spectrum(path: &Path) -> Result<(RunConfig, Spectrum), HarnessError> {
    let file = CsvFile::read(path)?;
    let cfg = file.config()?;
    let col = |name: &str| {
        file.column(name)
            .ok_or_else(|| HarnessError::format(path, format!("missing column `{name}`")))
    };
    let (delta, gain, err) = (col("delta_omega_r")?, col("gain")?, col("gain_err")?);
    let (n, settle, measure) = (col("n_atoms")?, col("settle")?, col("measure")?);
    let points = (0..delta.len())
        .map(|i| SpectrumPoint {
            delta: delta[i],
            gain: gain[i],
            gain_err: err[i],
            n_atoms: n[i] as usize,
            settle_time: settle[i],
            measure_time: measure[i],
            status: if gain[i].is_finite() {
                PointStatus::Ok
            } else {
                PointStatus::Failed("not measured".into())
            },
        })
        .collect();
    let spectrum = Spectrum {
        points,
        params: cfg.lattice().ok(),
        probe: None,
    };
    Ok((cfg, spectrum))
}

/// Central and wing fits of one spectrum.
#[derive(Debug)]
pub struct SpectrumFits {
    pub central: Result<FitResult, HarnessError>,
    pub wings: Result<WingFit, HarnessError>,
}

/// Largest central detuning of the config's grid recipe.
fn central_extent(cfg: &RunConfig) -> f64 {
    let m = cfg.central_multipliers.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    m * cfg.central_scale * cfg.gamma0p
}

pub fn fit_spectrum(cfg: &RunConfig, spectrum: &Spectrum) -> SpectrumFits {
    let central = (|| {
        let window = match cfg.fit_window {
            Some(w) => w,
            None => {
                let search = central_extent(cfg);
                default_central_window(spectrum, search).ok_or_else(|| {
                    HarnessError::Config(format!("fewer than 3 points within ±{search} to seed the fit"))
                })?
            }
        };
        Ok(fit_central(spectrum, window)?)
    })();
    let wings = (|| {
        let cut = match (cfg.wing_cut, &central) {
            (Some(c), _) => c,
            (None, Ok(f)) => 10.0 * f.gamma_r,
            (None, Err(_)) => {
                return Err(HarnessError::Config(
                    "fit.wing_cut = auto needs a successful central fit".into(),
                ))
            }
        };
        Ok(fit_wings(spectrum, cut)?)
    })();
    SpectrumFits { central, wings }
}

pub fn write_fit(dir: &Path, cfg: &RunConfig, spectrum: &Spectrum, fits: &SpectrumFits) -> Result<(), HarnessError> {
    let mut entries = vec![("units".to_string(), "detunings and widths in omega_r".to_string())];
    match &fits.central {
        Ok(f) => {
            let e = f.errors();
            entries.push(("central_status".into(), "ok".into()));
            for (k, name) in ["a1", "a2", "a3", "a4", "gamma_r"].iter().enumerate() {
                let v = [f.a1, f.a2, f.a3, f.a4, f.gamma_r][k];
                entries.push((name.to_string(), num(v)));
                entries.push((format!("{name}_err"), num(e[k])));
            }
            entries.extend([
                ("window".into(), num(f.window)),
                ("n_points".into(), f.n_points.to_string()),
                ("chi2".into(), num(f.chi2)),
                ("reduced_chi2".into(), num(f.reduced_chi2)),
                ("iterations".into(), f.iterations.to_string()),
                ("converged".into(), f.converged.to_string()),
            ]);
        }
        Err(e) => entries.extend([
            ("central_status".into(), "failed".into()),
            ("central_error".into(), e.to_string()),
        ]),
    }
    match &fits.wings {
        Ok(w) => entries.extend([
            ("wing_status".into(), "ok".into()),
            ("gamma_b".into(), num(w.gamma_b)),
            ("gamma_b_err".into(), num(w.gamma_b_err)),
            ("wing_cut".into(), num(w.cut)),
            ("wing_points".into(), w.n_points.to_string()),
            ("wing_reduced_chi2".into(), num(w.reduced_chi2)),
        ]),
        Err(e) => entries.extend([
            ("wing_status".into(), "failed".into()),
            ("wing_error".into(), e.to_string()),
        ]),
    }
    write_report(&dir.join("fit.txt"), "fit", cfg, &entries)?;

    let rows = spectrum
        .ok_points()
        .map(|p| {
            let (model, inside) = match &fits.central {
                Ok(f) => (f.eval(p.delta), (p.delta.abs() <= f.window) as u8 as f64),
                Err(_) => (f64::NAN, 0.0),
            };
            let r = p.gain - model;
            vec![p.delta, p.gain, p.gain_err, model, r, r / p.gain_err, inside]
        })
        .collect();
    let table = Table {
        columns: &["delta_omega_r", "gain", "gain_err", "model", "residual", "pull", "in_window"],
        rows,
    };
    write_csv(&dir.join("residuals.csv"), "fit", cfg, &[], &table)
}

pub fn cmd_fit(input: &Path, out: Option<PathBuf>) -> Result<SpectrumFits, HarnessError> {
    let (mut cfg, spectrum) = read_spectrum(input)?;
    if let Some(dir) = out {
        cfg.output_dir = dir;
    }
    ensure_dir(&cfg.output_dir)?;
    let fits = fit_spectrum(&cfg, &spectrum);
    write_fit(&cfg.output_dir, &cfg, &spectrum, &fits)?;
    Ok(fits)
}
