//! `ultrawalk`: tables of spectral and random-walk quantities for a
//! coefficient sequence on a group tower, driven by a JSON config.

mod commands;
mod config;
mod error;
mod output;
mod validate;

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ultrawalk::Verdict;

use config::{Format, RunConfig};
use error::CliError;
use output::{Meta, Table};

#[derive(Debug, Parser)]
#[command(name = "ultrawalk", version, about = "Random walks on locally finite group towers")]
struct Cli {
    /// JSON run configuration; defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the truncation tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Overrides the hard cap on materialized levels.
    #[arg(long, global = true)]
    max_level: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Omit the generation time so reruns are byte-identical.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Step spectral distribution. Columns: level, lambda, n, n_left.
    Spectrum,
    /// Return probabilities. Columns: t, p, tail_bound, rate, convolution_power_bound.
    Return,
    /// Isospectral profile and Følner bound. Columns: u, t, lambda_f.
    Profile,
    /// Heat kernel with its two-sided band. Columns: t, level, rho, h, lower, upper, within.
    Heat,
    /// Monte-Carlo walks against exact laws.
    /// Columns: n, quantity, level, empirical, exact, ci_low, ci_high, z.
    Walk,
    /// Recurrence verdict. Columns: level, tail_term, lawler_term.
    Recurrence,
    /// Designs a coefficient sequence for a target decay. Columns: n, f, neg_ln_p, ratio.
    Design {
        /// Where to write the designed coefficient family (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Legendre and Köhlbecker transforms. Columns: x, legendre, kohlbecker, reference,
    /// legendre_over_reference, kohlbecker_over_legendre, s, m, conjugate_of_reference.
    Transform,
    /// Oracle suite on the canonical fixtures. Columns: check, status, measured, limit, detail.
    Validate,
    /// Prints the effective configuration as JSON.
    Config,
}

fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(tol) = cli.tol {
        cfg.tol = tol;
    }
    if let Some(max_level) = cli.max_level {
        cfg.max_level = max_level;
    }
    if let Some(format) = cli.format {
        cfg.format = format;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The table plus whether the run reached a definite answer.
fn execute(cli: &Cli, cfg: &RunConfig) -> Result<(Table, bool), CliError> {
    Ok(match &cli.command {
        Command::Spectrum => (commands::spectrum(cfg)?, true),
        Command::Return => (commands::return_probability(cfg)?, true),
        Command::Profile => (commands::profile(cfg)?, true),
        Command::Heat => (commands::heat(cfg)?, true),
        Command::Walk => (commands::walk(cfg)?, true),
        Command::Recurrence => {
            let (table, verdict) = commands::recurrence(cfg)?;
            (table, verdict != Verdict::Inconclusive)
        }
        Command::Design { out } => commands::design(cfg, out.as_deref())?,
        Command::Transform => (commands::transform(cfg)?, true),
        Command::Validate => validate::run(cfg.seed),
        Command::Config => unreachable!("handled before execution"),
    })
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let cfg = effective_config(cli)?;
    let mut stdout = io::stdout().lock();
    if let Command::Config = cli.command {
        writeln!(stdout, "{}", cfg.to_json())?;
        return Ok(true);
    }
    // Validate configs before any command-specific work.
    if !matches!(cli.command, Command::Design { .. } | Command::Transform | Command::Validate) {
        cfg.model()?;
    }
    let (table, definite) = execute(cli, &cfg)?;
    let meta = Meta { config_hash: cfg.hash(), seed: cfg.seed, timestamp: !cli.no_timestamp };
    output::write(&table, &meta, cfg.format, &mut stdout)?;
    stdout.flush()?;
    Ok(definite)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ultrawalk: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
