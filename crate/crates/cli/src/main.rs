use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sisylab_cli::{output_dir, run, write_error_record, Command, Invocation};

#[derive(Parser)]
#[command(name = "sisylab", version, about = "Monte Carlo pump-probe spectroscopy of a dissipative optical lattice")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Config file of `key = value` lines; built-in defaults otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overrides `sim.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "SISYLAB_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Undriven ensemble: temperature, MSD and population summary.
    Simulate,
    /// Mean-square displacement and diffusion coefficients.
    Msd {
        /// Analyse a stored trajectory file instead of simulating.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Temperature series and relaxation rates.
    Temps {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Probe-gain spectrum over the configured detuning grid.
    Spectrum,
    /// Central and wing fits of a spectrum CSV.
    Fit {
        #[arg(long)]
        input: PathBuf,
    },
    /// Sweep Γ₀′ and Δ₀′ and write the comparison report.
    Compare,
    /// Run the rate-formula and lock-in cross-checks.
    Oracle,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let (command, input) = match cli.command {
        Cmd::Simulate => (Command::Simulate, None),
        Cmd::Msd { input } => (Command::Msd, input),
        Cmd::Temps { input } => (Command::Temps, input),
        Cmd::Spectrum => (Command::Spectrum, None),
        Cmd::Fit { input } => (Command::Fit, Some(input)),
        Cmd::Compare => (Command::Compare, None),
        Cmd::Oracle => (Command::Oracle, None),
    };
    let inv = Invocation {
        command,
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        input,
    };
    match run(&inv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Err(io) = write_error_record(&output_dir(&inv), &e) {
                eprintln!("could not write the error record: {io}");
            }
            ExitCode::FAILURE
        }
    }
}
