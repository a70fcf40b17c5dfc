//! Run configuration: flat `key = value` text with dotted section prefixes.
//!
//! Any value documented as accepting `auto` is filled in by [`RunConfig::resolve`];
//! the resolved text is what gets embedded in every output file, so a rerun from
//! an embedded config needs no further defaults.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `lattice.delta0p` | -50 | light shift per beam Δ₀′, ω_r |
//! | `lattice.gamma0p` | 5 | optical pumping rate Γ₀′, ω_r |
//! | `lattice.theta_deg` | 30 | lattice half-angle θ, degrees |
//! | `lattice.recoil_kick_count` | 2 | recoil kicks per scattering event |
//! | `lattice.extra_scatter_scale` | 1 | sublevel-preserving scattering multiplier |
//! | `sim.dt` | auto | step, 1/ω_r (auto: largest safe step) |
//! | `sim.t_total` | auto | run length, 1/ω_r (auto: 200/Γ₀′) |
//! | `sim.n_atoms` | 2000 | ensemble size |
//! | `sim.seed` | 1 | master seed |
//! | `sim.record_stride` | auto | steps between snapshots (auto: about 400 snapshots) |
//! | `sim.init_position` | unit_cell | `unit_cell` or `point:x,z` |
//! | `sim.init_temperature_x` | auto | initial k_BT_x, ħω_r (auto: 3× measured equilibrium) |
//! | `sim.init_temperature_z` | auto | initial k_BT_z, ħω_r (auto: 3× measured equilibrium) |
//! | `probe.epsilon` | 0.1 | drive amplitude relative to abs(Δ₀′) |
//! | `probe.settle_time` | auto | 1/ω_r (auto: 20/Γ₀′) |
//! | `probe.measure_time` | auto | 1/ω_r (auto: 50/Γ₀′) |
//! | `probe.temperature_x` | auto | initial k_BT_x of driven runs (auto: measured equilibrium) |
//! | `probe.temperature_z` | auto | initial k_BT_z of driven runs (auto: measured equilibrium) |
//! | `spectrum.deltas` | auto | explicit δ grid, ω_r (auto: central plus wing grid below) |
//! | `spectrum.central_scale` | 0.02 | central grid unit as a fraction of Γ₀′ |
//! | `spectrum.central_multipliers` | see source | positive central offsets in units of the central unit |
//! | `spectrum.wing_deltas` | see source | positive wing detunings, ω_r |
//! | `spectrum.n_atoms` | auto | atoms per spectrum point (auto: `sim.n_atoms`) |
//! | `fit.window` | auto | central fit half-width, ω_r (auto: 5× the initial width) |
//! | `fit.wing_cut` | auto | wing exclusion, ω_r (auto: 10 γ_R) |
//! | `sweep.gamma0p` | 2,4,6,8 | Γ₀′ values for `compare` |
//! | `sweep.delta0p` | -50,-100 | Δ₀′ values for `compare` |
//! | `output.dir` | out | output directory |
//! | `output.trajectories` | false | also write the binary trajectory store |

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use sisylab::engine::{InitSpec, PositionInit, SimConfig};
use sisylab::lattice::LatticeParams;
use sisylab::spectroscopy::{probe_init, ProbeSpec};

use crate::error::HarnessError;
use crate::pilot::equilibrium_temperature;

/// A value that may be left for the harness to choose.
pub type Auto<T> = Option<T>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitPosition {
    UnitCell,
    Point { x: f64, z: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub delta0p: f64,
    pub gamma0p: f64,
    pub theta_deg: f64,
    pub recoil_kick_count: u32,
    pub extra_scatter_scale: f64,

    pub dt: Auto<f64>,
    pub t_total: Auto<f64>,
    pub n_atoms: usize,
    pub seed: u64,
    pub record_stride: Auto<usize>,
    pub init_position: InitPosition,
    pub init_temperature: [Auto<f64>; 2],

    pub epsilon: f64,
    pub settle_time: Auto<f64>,
    pub measure_time: Auto<f64>,
    pub probe_temperature: [Auto<f64>; 2],

    pub deltas: Auto<Vec<f64>>,
    pub central_scale: f64,
    pub central_multipliers: Vec<f64>,
    pub wing_deltas: Vec<f64>,
    pub spectrum_atoms: Auto<usize>,

    pub fit_window: Auto<f64>,
    pub wing_cut: Auto<f64>,

    pub sweep_gamma0p: Vec<f64>,
    pub sweep_delta0p: Vec<f64>,

    pub output_dir: PathBuf,
    pub write_trajectories: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            delta0p: -50.0,
            gamma0p: 5.0,
            theta_deg: 30.0,
            recoil_kick_count: 2,
            extra_scatter_scale: 1.0,
            dt: None,
            t_total: None,
            n_atoms: 2000,
            seed: 1,
            record_stride: None,
            init_position: InitPosition::UnitCell,
            init_temperature: [None, None],
            epsilon: 0.1,
            settle_time: None,
            measure_time: None,
            probe_temperature: [None, None],
            deltas: None,
            central_scale: 0.02,
            central_multipliers: vec![0.35, 0.5, 0.7, 1.0, 1.4, 2.0, 2.8, 4.0, 5.6],
            wing_deltas: vec![1.0, 2.0, 4.0, 7.0, 10.0, 14.0, 20.0, 40.0, 100.0, 250.0],
            spectrum_atoms: None,
            fit_window: None,
            wing_cut: None,
            sweep_gamma0p: vec![2.0, 4.0, 6.0, 8.0],
            sweep_delta0p: vec![-50.0, -100.0],
            output_dir: PathBuf::from("out"),
            write_trajectories: false,
        }
    }
}

/// Every accepted key, in output order.
pub const KEYS: &[&str] = &[
    "lattice.delta0p",
    "lattice.gamma0p",
    "lattice.theta_deg",
    "lattice.recoil_kick_count",
    "lattice.extra_scatter_scale",
    "sim.dt",
    "sim.t_total",
    "sim.n_atoms",
    "sim.seed",
    "sim.record_stride",
    "sim.init_position",
    "sim.init_temperature_x",
    "sim.init_temperature_z",
    "probe.epsilon",
    "probe.settle_time",
    "probe.measure_time",
    "probe.temperature_x",
    "probe.temperature_z",
    "spectrum.deltas",
    "spectrum.central_scale",
    "spectrum.central_multipliers",
    "spectrum.wing_deltas",
    "spectrum.n_atoms",
    "fit.window",
    "fit.wing_cut",
    "sweep.gamma0p",
    "sweep.delta0p",
    "output.dir",
    "output.trajectories",
];

fn bad(key: &str, value: &str, why: &str) -> HarnessError {
    HarnessError::Config(format!("{key} = {value}: {why}"))
}

fn parse_f64(key: &str, v: &str) -> Result<f64, HarnessError> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| bad(key, v, "expected a finite number"))
}

fn parse_auto<T>(
    key: &str,
    v: &str,
    f: impl Fn(&str, &str) -> Result<T, HarnessError>,
) -> Result<Auto<T>, HarnessError> {
    if v == "auto" {
        Ok(None)
    } else {
        f(key, v).map(Some)
    }
}

fn parse_usize(key: &str, v: &str) -> Result<usize, HarnessError> {
    v.parse().map_err(|_| bad(key, v, "expected a non-negative integer"))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, HarnessError> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_f64(key, s.trim())).collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn fmt_auto<T: ToString>(v: &Auto<T>) -> String {
    v.as_ref().map_or_else(|| "auto".to_string(), |x| x.to_string())
}

impl RunConfig {
    /// Parse `key = value` lines on top of the defaults. `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(HarnessError::Config(format!("duplicate key `{key}`")));
            }
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), HarnessError> {
        match key {
            "lattice.delta0p" => self.delta0p = parse_f64(key, v)?,
            "lattice.gamma0p" => self.gamma0p = parse_f64(key, v)?,
            "lattice.theta_deg" => self.theta_deg = parse_f64(key, v)?,
            "lattice.recoil_kick_count" => {
                self.recoil_kick_count = v.parse().map_err(|_| bad(key, v, "expected an integer"))?
            }
            "lattice.extra_scatter_scale" => self.extra_scatter_scale = parse_f64(key, v)?,
            "sim.dt" => self.dt = parse_auto(key, v, parse_f64)?,
            "sim.t_total" => self.t_total = parse_auto(key, v, parse_f64)?,
            "sim.n_atoms" => self.n_atoms = parse_usize(key, v)?,
            "sim.seed" => self.seed = v.parse().map_err(|_| bad(key, v, "expected a u64"))?,
            "sim.record_stride" => self.record_stride = parse_auto(key, v, parse_usize)?,
            "sim.init_position" => self.init_position = parse_position(key, v)?,
            "sim.init_temperature_x" => self.init_temperature[0] = parse_auto(key, v, parse_f64)?,
            "sim.init_temperature_z" => self.init_temperature[1] = parse_auto(key, v, parse_f64)?,
            "probe.epsilon" => self.epsilon = parse_f64(key, v)?,
            "probe.settle_time" => self.settle_time = parse_auto(key, v, parse_f64)?,
            "probe.measure_time" => self.measure_time = parse_auto(key, v, parse_f64)?,
            "probe.temperature_x" => self.probe_temperature[0] = parse_auto(key, v, parse_f64)?,
            "probe.temperature_z" => self.probe_temperature[1] = parse_auto(key, v, parse_f64)?,
            "spectrum.deltas" => self.deltas = parse_auto(key, v, parse_list)?,
            "spectrum.central_scale" => self.central_scale = parse_f64(key, v)?,
            "spectrum.central_multipliers" => self.central_multipliers = parse_list(key, v)?,
            "spectrum.wing_deltas" => self.wing_deltas = parse_list(key, v)?,
            "spectrum.n_atoms" => self.spectrum_atoms = parse_auto(key, v, parse_usize)?,
            "fit.window" => self.fit_window = parse_auto(key, v, parse_f64)?,
            "fit.wing_cut" => self.wing_cut = parse_auto(key, v, parse_f64)?,
            "sweep.gamma0p" => self.sweep_gamma0p = parse_list(key, v)?,
            "sweep.delta0p" => self.sweep_delta0p = parse_list(key, v)?,
            "output.dir" => self.output_dir = PathBuf::from(v),
            "output.trajectories" => {
                self.write_trajectories = v.parse().map_err(|_| bad(key, v, "expected true or false"))?
            }
            _ => return Err(HarnessError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// All keys as `key = value` lines in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let pos = match self.init_position {
            InitPosition::UnitCell => "unit_cell".to_string(),
            InitPosition::Point { x, z } => format!("point:{x},{z}"),
        };
        let values = vec![
            self.delta0p.to_string(),
            self.gamma0p.to_string(),
            self.theta_deg.to_string(),
            self.recoil_kick_count.to_string(),
            self.extra_scatter_scale.to_string(),
            fmt_auto(&self.dt),
            fmt_auto(&self.t_total),
            self.n_atoms.to_string(),
            self.seed.to_string(),
            fmt_auto(&self.record_stride),
            pos,
            fmt_auto(&self.init_temperature[0]),
            fmt_auto(&self.init_temperature[1]),
            self.epsilon.to_string(),
            fmt_auto(&self.settle_time),
            fmt_auto(&self.measure_time),
            fmt_auto(&self.probe_temperature[0]),
            fmt_auto(&self.probe_temperature[1]),
            self.deltas.as_deref().map_or_else(|| "auto".to_string(), fmt_list),
            self.central_scale.to_string(),
            fmt_list(&self.central_multipliers),
            fmt_list(&self.wing_deltas),
            fmt_auto(&self.spectrum_atoms),
            fmt_auto(&self.fit_window),
            fmt_auto(&self.wing_cut),
            fmt_list(&self.sweep_gamma0p),
            fmt_list(&self.sweep_delta0p),
            self.output_dir.display().to_string(),
            self.write_trajectories.to_string(),
        ];
        KEYS.iter().copied().zip(values).collect()
    }

    pub fn lattice(&self) -> Result<LatticeParams, HarnessError> {
        let params = LatticeParams {
            delta0p: self.delta0p,
            gamma0p: self.gamma0p,
            theta: self.theta_deg.to_radians(),
            recoil_kick_count: self.recoil_kick_count,
            extra_scatter_scale: self.extra_scatter_scale,
        };
        params.validate()?;
        Ok(params)
    }

    /// Copy for one sweep point, with the lattice point set and the sweep lists
    /// collapsed to it.
    pub fn at_point(&self, delta0p: f64, gamma0p: f64, seed: u64) -> Self {
        Self {
            delta0p,
            gamma0p,
            seed,
            sweep_gamma0p: vec![gamma0p],
            sweep_delta0p: vec![delta0p],
            ..self.clone()
        }
    }

    fn needs_pilot(&self) -> bool {
        self.init_temperature.iter().chain(&self.probe_temperature).any(Option::is_none)
    }

    /// Fill every `auto` value. Temperatures left on `auto` come from a short
    /// pilot run (see [`equilibrium_temperature`]).
    pub fn resolve(&self) -> Result<RunConfig, HarnessError> {
        let params = self.lattice()?;
        let mut r = self.clone();
        let rate = params.gamma0p;
        let need_rate = |what: &str| {
            if rate > 0.0 {
                Ok(())
            } else {
                Err(HarnessError::Config(format!("{what} = auto needs lattice.gamma0p > 0")))
            }
        };
        let dt = *r.dt.get_or_insert_with(|| SimConfig::suggested_dt(&params));
        if r.t_total.is_none() {
            need_rate("sim.t_total")?;
            r.t_total = Some(200.0 / rate);
        }
        if r.record_stride.is_none() {
            let steps = (r.t_total.unwrap_or(0.0) / dt).ceil() as usize;
            r.record_stride = Some(steps.div_ceil(400).max(1));
        }
        if r.settle_time.is_none() {
            need_rate("probe.settle_time")?;
            r.settle_time = Some(20.0 / rate);
        }
        if r.measure_time.is_none() {
            need_rate("probe.measure_time")?;
            r.measure_time = Some(50.0 / rate);
        }
        if r.needs_pilot() {
            need_rate("temperature")?;
            let eq = equilibrium_temperature(&params, dt, sisylab::rng::derive_seed(self.seed, PILOT_STREAM))?;
            for i in 0..2 {
                r.init_temperature[i].get_or_insert(3.0 * eq[i]);
                r.probe_temperature[i].get_or_insert(eq[i]);
            }
        }
        if r.deltas.is_none() {
            r.deltas = Some(self.default_grid(&params));
        }
        if r.spectrum_atoms.is_none() {
            r.spectrum_atoms = Some(r.n_atoms);
        }
        Ok(r)
    }

    /// Symmetric grid: `±central_scale·Γ₀′·multipliers`, 0, and `±wing_deltas`.
    fn default_grid(&self, params: &LatticeParams) -> Vec<f64> {
        let unit = self.central_scale * params.gamma0p;
        let mut pos: Vec<f64> = self
            .central_multipliers
            .iter()
            .map(|m| m * unit)
            .chain(self.wing_deltas.iter().copied())
            .filter(|d| *d > 0.0)
            .collect();
        pos.sort_by(f64::total_cmp);
        pos.dedup();
        let mut grid: Vec<f64> = pos.iter().rev().map(|d| -d).collect();
        grid.push(0.0);
        grid.extend(pos);
        grid
    }

    fn resolved<T: Copy>(v: Auto<T>, key: &str) -> Result<T, HarnessError> {
        v.ok_or_else(|| HarnessError::Config(format!("{key} is unresolved")))
    }

    /// Engine configuration of the undriven run; requires a resolved config.
    pub fn sim_config(&self) -> Result<SimConfig, HarnessError> {
        let position = match self.init_position {
            InitPosition::UnitCell => PositionInit::UnitCell,
            InitPosition::Point { x, z } => PositionInit::Point { x, z },
        };
        Ok(SimConfig {
            dt: Self::resolved(self.dt, "sim.dt")?,
            t_total: Self::resolved(self.t_total, "sim.t_total")?,
            n_atoms: self.n_atoms,
            seed: self.seed,
            record_stride: Self::resolved(self.record_stride, "sim.record_stride")?,
            init: InitSpec {
                position,
                temperature: [
                    Self::resolved(self.init_temperature[0], "sim.init_temperature_x")?,
                    Self::resolved(self.init_temperature[1], "sim.init_temperature_z")?,
                ],
            },
        })
    }

    /// Engine configuration and base probe of driven runs; requires a resolved config.
    pub fn probe_config(&self) -> Result<(SimConfig, ProbeSpec), HarnessError> {
        let params = self.lattice()?;
        let temperature = [
            Self::resolved(self.probe_temperature[0], "probe.temperature_x")?,
            Self::resolved(self.probe_temperature[1], "probe.temperature_z")?,
        ];
        let config = SimConfig {
            dt: Self::resolved(self.dt, "sim.dt")?,
            t_total: 0.0,
            n_atoms: Self::resolved(self.spectrum_atoms, "spectrum.n_atoms")?,
            seed: sisylab::rng::derive_seed(self.seed, SPECTRUM_STREAM),
            record_stride: 1,
            init: probe_init(&params, temperature),
        };
        let probe = ProbeSpec {
            epsilon: self.epsilon,
            delta: 0.0,
            settle_time: Self::resolved(self.settle_time, "probe.settle_time")?,
            measure_time: Self::resolved(self.measure_time, "probe.measure_time")?,
        };
        probe.validate()?;
        Ok((config, probe))
    }

    pub fn grid(&self) -> Result<&[f64], HarnessError> {
        self.deltas
            .as_deref()
            .ok_or_else(|| HarnessError::Config("spectrum.deltas is unresolved".into()))
    }

    pub fn validate_sweep(&self) -> Result<(), HarnessError> {
        if self.sweep_gamma0p.is_empty() || self.sweep_delta0p.is_empty() {
            return Err(HarnessError::Config("sweep lists must be non-empty".into()));
        }
        Ok(())
    }
}

/// Seed-derivation indices of the auxiliary runs of one configuration.
pub const PILOT_STREAM: u64 = 0x5049_4c4f_54;
pub const SPECTRUM_STREAM: u64 = 0x5350_4543;

fn parse_position(key: &str, v: &str) -> Result<InitPosition, HarnessError> {
    if v == "unit_cell" {
        return Ok(InitPosition::UnitCell);
    }
    let coords = v
        .strip_prefix("point:")
        .ok_or_else(|| bad(key, v, "expected unit_cell or point:x,z"))?;
    match parse_list(key, coords)?.as_slice() {
        [x, z] => Ok(InitPosition::Point { x: *x, z: *z }),
        _ => Err(bad(key, v, "point needs two coordinates")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn unknown_and_duplicate_keys_are_errors() {
        assert!(RunConfig::parse("lattice.bogus = 1").is_err());
        assert!(RunConfig::parse("sim.seed = 1\nsim.seed = 2").is_err());
        assert!(RunConfig::parse("sim.seed 1").is_err());
        assert!(RunConfig::parse("sim.dt = fast").is_err());
    }

    #[test]
    fn values_parse() {
        let c = RunConfig::parse(
            "# comment\nlattice.delta0p = -100\nsweep.gamma0p = 1, 2.5\nsim.init_position = point:0.5,-1\nsim.dt = 0.001\n",
        )
        .unwrap();
        assert_eq!(c.delta0p, -100.0);
        assert_eq!(c.sweep_gamma0p, vec![1.0, 2.5]);
        assert_eq!(c.init_position, InitPosition::Point { x: 0.5, z: -1.0 });
        assert_eq!(c.dt, Some(0.001));
    }

    #[test]
    fn resolved_floats_round_trip_exactly() {
        let mut c = RunConfig::default();
        c.init_temperature = [Some(1.0 / 3.0), Some(0.1 + 0.2)];
        c.probe_temperature = [Some(2.0f64.sqrt()), Some(PI)];
        c.n_atoms = 32;
        let r = c.resolve().unwrap();
        let back = RunConfig::parse(&r.to_text()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.sim_config().unwrap(), r.sim_config().unwrap());
    }

    #[test]
    fn default_grid_is_symmetric_and_increasing() {
        let mut c = RunConfig::default();
        c.init_temperature = [Some(1.0); 2];
        c.probe_temperature = [Some(1.0); 2];
        let r = c.resolve().unwrap();
        let g = r.grid().unwrap();
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        let n = g.len();
        for i in 0..n {
            assert_eq!(g[i], -g[n - 1 - i]);
        }
        assert!(g.contains(&0.0));
    }
}
