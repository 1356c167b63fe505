//! `mcre-lab`: runs assumption verifiers and convergence experiments on
//! Markov chains in random environments from a TOML config.
//!
//! Every run writes `report.toml` (resolved config, seed, derived constants,
//! verdicts) next to its CSV tables. The same config and seed reproduce the
//! CSV bytes exactly, whatever the thread count.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use mcre_core::SeedStream;

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use config::ExperimentConfig;
pub use error::LabError;
pub use report::{OutputDir, RunReport};

/// Environment variable holding the default seed when `--seed` is absent.
pub const SEED_ENV: &str = "MCRE_LAB_SEED";

#[derive(Debug, Parser)]
#[command(name = "mcre-lab", version, about = "Verifiers and convergence experiments for Markov chains in random environments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed; overrides the config. Falls back to the config, then MCRE_LAB_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory; defaults to the config's `out`, then `mcre-out/<command>`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Also write a plot-spec JSON next to each CSV.
    #[arg(long, global = true)]
    pub emit_plots: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check drift, long-time contractivity, smallness and small sets.
    Verify,
    /// Coupling-time curve and the total-variation bound it implies.
    Couple,
    /// L^p errors of ergodic averages.
    Lln,
    /// Shared-noise difference decay and stability for linear models.
    Contract,
    /// Exact laws and TV curves on a finite joint chain.
    Oracle,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Couple => "couple",
            Command::Lln => "lln",
            Command::Contract => "contract",
            Command::Oracle => "oracle",
        }
    }
}

fn resolve_seed(flag: Option<u64>, config: &ExperimentConfig) -> Result<u64, LabError> {
    if let Some(s) = flag.or(config.seed) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| LabError::Usage(format!("{SEED_ENV} = {v:?} is not a 64-bit unsigned integer"))),
        Err(_) => Ok(0),
    }
}

/// Everything a subcommand needs.
pub struct Context {
    pub config: ExperimentConfig,
    pub stream: SeedStream,
    pub out: OutputDir,
    pub report: RunReport,
}

/// Runs one subcommand. Assumption and experiment failures still write the
/// report before returning the error.
pub fn execute(command: Command, args: &CommonArgs) -> Result<RunReport, LabError> {
    let path = args.config.as_ref().ok_or_else(|| LabError::Usage("--config is required".into()))?;
    let mut config = config::load(path)?;
    let seed = resolve_seed(args.seed, &config)?;
    let out_root = args.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("mcre-out").join(command.name()));
    config.seed = Some(seed);
    config.out = Some(out_root.clone());
    let out = OutputDir::create(&out_root, args.emit_plots)?;
    let mut ctx = Context {
        stream: SeedStream::new(seed).derive(command.name()),
        report: RunReport::new(command.name(), seed, config.clone()),
        config,
        out,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
        .map_err(|e| LabError::Usage(format!("thread pool: {e}")))?;
    let result = pool.install(|| commands::run(command, &mut ctx));
    let failure = match result {
        Ok(()) => None,
        Err(e) if e.exit_code() == 1 => {
            if let Some(a) = e.assumption() {
                let a = a.to_string();
                ctx.report.verdict(&a, false, e.to_string());
            }
            ctx.report.error = Some(e.to_string());
            Some(e)
        }
        Err(e) => return Err(e),
    };
    let failed = failure.is_some() || ctx.report.first_failure().is_some();
    ctx.report.status = if failed { "fail" } else { "pass" }.into();
    ctx.out.write_report(&ctx.report)?;
    if let Some(e) = failure {
        return Err(match e.assumption() {
            Some(a) => LabError::Assumption { assumption: a.to_string(), detail: e.to_string() },
            None => e,
        });
    }
    if let Some(v) = ctx.report.first_failure() {
        return Err(LabError::Assumption { assumption: v.name.clone(), detail: v.detail.clone() });
    }
    Ok(ctx.report)
}

/// Parses arguments, runs, prints a summary and returns the exit status.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command, &cli.common) {
        Ok(report) => {
            let dir = report.config.out.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
            println!("{} {}: pass ({} checks, output in {dir})", report.command, report.model, report.assumptions.len());
            0
        }
        Err(e) => {
            eprintln!("mcre-lab {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
