//! Batch harness around the `sisylab` simulation library: configuration,
//! sweeps, persistence and the comparison report.

pub mod commands;
pub mod config;
pub mod error;
pub mod oracle;
pub mod pilot;
pub mod report;
pub mod store;
pub mod table;

use std::path::{Path, PathBuf};

pub use config::RunConfig;
pub use error::HarnessError;
pub use report::{ComparisonReport, Measured, PointReport, Regression};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Msd,
    Temps,
    Spectrum,
    Fit,
    Compare,
    Oracle,
}

/// Command-line inputs after argument parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Trajectory store for `msd`/`temps`, spectrum CSV for `fit`.
    pub input: Option<PathBuf>,
}

fn load_config(inv: &Invocation) -> Result<RunConfig, HarnessError> {
    let mut cfg = match &inv.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = inv.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &inv.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

/// Directory that receives the error record when `run` fails.
pub fn output_dir(inv: &Invocation) -> PathBuf {
    inv.out
        .clone()
        .or_else(|| load_config(inv).ok().map(|c| c.output_dir))
        .unwrap_or_else(|| PathBuf::from("out"))
}

pub fn run(inv: &Invocation) -> Result<(), HarnessError> {
    if inv.command == Command::Fit {
        let input = inv
            .input
            .as_deref()
            .ok_or_else(|| HarnessError::Config("fit needs --input <spectrum.csv>".into()))?;
        commands::cmd_fit(input, inv.out.clone())?;
        return Ok(());
    }
    let stored = match (inv.command, &inv.input) {
        (Command::Msd | Command::Temps, Some(path)) => Some(commands::load_ensemble(path)?),
        (_, Some(_)) => return Err(HarnessError::Config("--input is only used by msd, temps and fit".into())),
        _ => None,
    };
    let (cfg, ensemble) = match stored {
        Some((mut cfg, ensemble)) => {
            if let Some(out) = &inv.out {
                cfg.output_dir = out.clone();
            }
            (cfg, Some(ensemble))
        }
        // sweep points resolve their own auto values
        None if inv.command == Command::Compare => (load_config(inv)?, None),
        None => (load_config(inv)?.resolve()?, None),
    };
    let ensemble = || match &ensemble {
        Some(e) => Ok(e.clone()),
        None => commands::run_simulation(&cfg),
    };
    match inv.command {
        Command::Simulate => drop(commands::cmd_simulate(&cfg)?),
        Command::Msd => drop(commands::cmd_msd(&cfg, &ensemble()?)?),
        Command::Temps => drop(commands::cmd_temps(&cfg, &ensemble()?)?),
        Command::Spectrum => drop(commands::cmd_spectrum(&cfg)?),
        Command::Compare => drop(report::cmd_compare(&cfg)?),
        Command::Oracle => {
            let checks = oracle::cmd_oracle(&cfg)?;
            if let Some(c) = checks.iter().find(|c| !c.passed()) {
                return Err(HarnessError::Config(format!(
                    "oracle check {} failed: expected {}, measured {}",
                    c.name, c.expected, c.measured
                )));
            }
        }
        Command::Fit => unreachable!(),
    }
    Ok(())
}

/// Machine-readable failure record, `key: value` lines.
pub fn write_error_record(dir: &Path, err: &HarnessError) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let failed = err.failed_indices();
    let text = format!(
        "status: error\nkind: {}\nmessage: {}\nfailed_indices: {}\n",
        err.kind(),
        err.to_string().replace('\n', " "),
        failed.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
    );
    std::fs::write(dir.join("error.txt"), text)
}
