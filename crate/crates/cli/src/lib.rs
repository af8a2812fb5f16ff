//! Batch front end: loads a TOML run configuration, runs one analysis and
//! writes CSV tables plus a plain-text summary into an output directory.
//!
//! Exit codes: `0` success, `2` finished with warnings (for example no
//! uniqueness certificate), `1` error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod output;

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] lyap_core::Error),
}

#[derive(Debug, Parser)]
#[command(name = "lyap", version, about = "Lyapunov exponents of Markov linear cocycles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Do not print the summary.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Top exponent, spectrum, gap and Furstenberg estimate.
    EstimateLe,
    /// Stationary measure, commutation self-test and mixing rate.
    Mixing,
    /// Hölder exponent, contraction check and perturbation scan.
    Holder,
    /// Invariant line fields and directional exponent profile (m = 2).
    CheckIrreducibility,
}

/// Result of a command that ran to completion.
#[derive(Debug, Default)]
pub struct Outcome {
    pub summary: String,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.warnings.is_empty() {
            0
        } else {
            2
        }
    }
}

/// Runs a parsed command line and returns the outcome.
pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let path = cli.common.config.as_ref().ok_or_else(|| CliError::Config("missing --config".into()))?;
    let mut cfg = config::load(path)?;
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    std::fs::create_dir_all(&cli.common.out).map_err(|e| CliError::Io(format!("{}: {e}", cli.common.out.display())))?;
    let job = || commands::dispatch(cli.command, &cfg, &cli.common.out);
    let outcome = match cli.common.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CliError::Io(e.to_string()))?
            .install(job),
        None => job(),
    }?;
    output::write_text(&cli.common.out.join("summary.txt"), &outcome.summary)?;
    Ok(outcome)
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            if !cli.common.quiet {
                print!("{}", outcome.summary);
            } else {
                for w in &outcome.warnings {
                    eprintln!("warning: {w}");
                }
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
