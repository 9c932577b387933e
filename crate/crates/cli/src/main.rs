// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::RunConfig;

/// A rejected configuration value.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

/// A computation that ran but did not produce a trustworthy result.
#[derive(Debug)]
pub struct Numerical(pub String);

impl std::fmt::Display for Numerical {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Numerical {}

#[derive(Parser)]
#[command(
    name = "biphoton",
    version,
    about = "Narrowband biphoton simulator and analysis toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply to anything left out.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set system.delta_c=28.3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set output.dir=...`.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Stamp file headers with the wall-clock time (reruns then differ in the header).
    #[arg(long)]
    timestamps: bool,
}

impl Common {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(dir) = &self.out {
            overrides.push(format!("output.dir={:?}", dir.display().to_string()));
        }
        if self.timestamps {
            overrides.push("output.timestamps=true".into());
        }
        RunConfig::load(self.config.as_deref(), &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Dressed-mode frequencies, linewidths and beat period.
    Dressed(Common),
    /// Biphoton power spectrum, two-pole and full susceptibility.
    Spectrum(Common),
    /// Analytic and numeric wavepackets, plus spectra.
    Wavepacket(Common),
    /// Wavepacket before and after the configured etalons.
    Filter(Common),
    /// Synthetic coincidence histogram.
    Montecarlo(Common),
    /// Fit a coincidence histogram.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Histogram CSV; defaults to `histogram.csv` in the output directory.
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
    /// Apply a triggered modulation mask.
    Modulate(Common),
    /// Generated pair rate from a detected rate and a loss chain.
    Budget(Common),
    /// Linewidths and beat period over a range of Δc or Ωc.
    Sweep(Common),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Dressed(c) => commands::dressed(&c.load()?),
        Command::Spectrum(c) => commands::spectrum(&c.load()?),
        Command::Wavepacket(c) => commands::wavepacket(&c.load()?),
        Command::Filter(c) => commands::filter(&c.load()?),
        Command::Montecarlo(c) => commands::montecarlo(&c.load()?),
        Command::Fit { common, histogram } => commands::fit(&common.load()?, histogram),
        Command::Modulate(c) => commands::modulate(&c.load()?),
        Command::Budget(c) => commands::budget(&c.load()?),
        Command::Sweep(c) => commands::sweep(&c.load()?),
    }
}

/// 2 validation, 3 numerical, 4 I/O.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return 2;
        }
        if cause.is::<Numerical>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<biphoton::Error>() {
            return match e {
                biphoton::Error::Io(_) => 4,
                e if e.is_validation() => 2,
                _ => 3,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<csv::Error>() {
            return 4;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
