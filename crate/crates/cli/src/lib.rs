//! File formats and the `hashmix` command line on top of `hashmix-core`.

pub mod commands;
pub mod config;
pub mod market;

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::Outcome;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_CHECK: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "hashmix",
    version,
    about = "Risk-averse hash-power allocation across mining pools"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON or TOML run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Override a config value after parsing, e.g. `rho=1e-4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct Parallel {
    #[command(flatten)]
    pub common: Common,
    /// Worker threads for independent grid points.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct Seeded {
    #[command(flatten)]
    pub common: Common,
    /// Overrides `mgf.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal allocation for one risk aversion.
    Optimize(Common),
    /// Allocations across a grid of risk aversions.
    Sweep(Parallel),
    /// Sweep after re-pricing currencies.
    Scenario(Parallel),
    /// Passive and/or active mining on historical data.
    Backtest(Common),
    /// Dual-scheme pool payouts per manager strategy.
    Payout(Common),
    /// Closed-form utility against a Monte-Carlo estimate.
    MgfCheck(Seeded),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Optimize(c) | Command::Backtest(c) | Command::Payout(c) => c,
            Command::Sweep(p) | Command::Scenario(p) => &p.common,
            Command::MgfCheck(s) => &s.common,
        }
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> u8 {
    let common = cli.command.common();
    let outcome = config::load(&common.config, &common.overrides)
        .map_err(anyhow::Error::from)
        .and_then(|cfg| match &cli.command {
            Command::Optimize(_) => commands::optimize(&cfg),
            Command::Sweep(p) => commands::sweep(&cfg, p.jobs),
            Command::Scenario(p) => commands::scenario(&cfg, p.jobs),
            Command::Backtest(_) => commands::backtest(&cfg),
            Command::Payout(_) => commands::payout(&cfg),
            Command::MgfCheck(s) => commands::mgf_check(&cfg, s.seed),
        })
        .and_then(|o| write_outcome(&o, common.out.as_ref()).map(|()| o));
    match outcome {
        Ok(o) if o.check_failed => {
            eprintln!("error: check failed");
            EXIT_CHECK
        }
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INPUT
        }
    }
}

/// Sections with a suffix go to `<out>.<suffix>`, or under a `# <suffix>`
/// line on stdout.
fn write_outcome(o: &Outcome, out: Option<&PathBuf>) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            for s in &o.sections {
                let target = match &s.suffix {
                    Some(suffix) => {
                        let mut p = path.clone().into_os_string();
                        p.push(format!(".{suffix}"));
                        PathBuf::from(p)
                    }
                    None => path.clone(),
                };
                fs::write(&target, &s.text)
                    .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", target.display()))?;
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            for s in &o.sections {
                if let Some(suffix) = &s.suffix {
                    writeln!(stdout, "# {suffix}")?;
                }
                stdout.write_all(s.text.as_bytes())?;
            }
        }
    }
    Ok(())
}
