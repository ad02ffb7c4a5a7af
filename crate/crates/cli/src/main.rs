//! `modulon`: traveling waves, Bloch spectra and instability experiments
//! from the command line.

mod commands;
mod config;
mod error;
mod output;

use clap::{Args, Parser, Subcommand};
use commands::Inputs;
use config::{RawConfig, RunConfig};
use error::CliError;
use output::{output_dir, Provenance};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "modulon", version, about = "Modulational stability of periodic traveling waves")]
struct Cli {
    /// Worker threads for parallel scans (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Configuration file with `[section]` headers and key=value lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides MODULON_OUT and output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Params {
    /// Load the wave from a snapshot written by `modulon wave` instead of
    /// solving for it again.
    #[arg(long)]
    wave: Option<PathBuf>,
    /// Inline configuration, e.g. `model=bbm m=2 a=0.05`.
    #[arg(value_name = "KEY=VALUE")]
    pairs: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for a periodic traveling wave.
    Wave(Params),
    /// Floquet-Bloch spectrum of a wave.
    Spectrum(Params),
    /// Semigroup probe: growth of the Bloch propagator in Sobolev norms.
    Verify(Params),
    /// Evolve a perturbed wave and record conserved-quantity drift.
    Evolve(Params),
    /// Nonlinear instability experiment (multiperiodic or localized).
    Experiment(Params),
    /// Stability boundary of a model family.
    Sweep(Params),
    /// Markdown digest of the outputs in the output directory.
    Report(Params),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Wave(_) => "wave",
            Command::Spectrum(_) => "spectrum",
            Command::Verify(_) => "verify",
            Command::Evolve(_) => "evolve",
            Command::Experiment(_) => "experiment",
            Command::Sweep(_) => "sweep",
            Command::Report(_) => "report",
        }
    }

    fn params(&self) -> &Params {
        match self {
            Command::Wave(p)
            | Command::Spectrum(p)
            | Command::Verify(p)
            | Command::Evolve(p)
            | Command::Experiment(p)
            | Command::Sweep(p)
            | Command::Report(p) => p,
        }
    }
}

fn configure_threads(jobs: Option<usize>) -> Result<(), CliError> {
    if jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    if let Some(j) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads(cli.jobs)?;
    let params = cli.command.params();
    let mut raw = RawConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
        raw.parse_text(&text)?;
    }
    raw.parse_args(&params.pairs)?;
    let cfg = RunConfig::from_raw(&raw)?;
    let name = cli.command.name();
    let mut prov = Provenance::new(name, &cfg.hash, &cfg.canonical);
    let dir = output_dir(cli.out.as_deref(), cfg.out_dir.as_deref());
    let inputs = Inputs { wave_file: params.wave.as_deref() };
    let outputs = match &cli.command {
        Command::Wave(_) => commands::cmd_wave(&cfg, &prov)?,
        Command::Spectrum(_) => commands::cmd_spectrum(&cfg, &inputs, &mut prov)?,
        Command::Verify(_) => commands::cmd_verify(&cfg, &inputs, &mut prov)?,
        Command::Evolve(_) => commands::cmd_evolve(&cfg, &inputs, &mut prov)?,
        Command::Experiment(_) => commands::cmd_experiment(&cfg, &inputs, &mut prov)?,
        Command::Sweep(_) => commands::cmd_sweep(&cfg, &prov)?,
        Command::Report(_) => commands::cmd_report(&dir, &mut prov)?,
    };
    for path in outputs.flush(&dir)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => error::EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("modulon: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
