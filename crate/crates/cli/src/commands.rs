//! One function per subcommand. Each returns the text to write and whether
//! a statistical check failed; input problems come back as errors.

use std::fmt::Write as _;
use std::thread;

use anyhow::{bail, Context, Result};
use hashmix_core::allocator::{self, AllocationReport, AllocatorError, SweepSeries};
use hashmix_core::backtest::{self, BacktestSummary};
use hashmix_core::montecarlo;
use hashmix_core::reward;
use hashmix_core::utility;
use hashmix_core::{Instance, SolverConfig, Variant};

use crate::config::{BacktestMode, RunConfig};
use crate::market;

/// A named piece of output; `suffix` distinguishes several files per run.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub suffix: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub sections: Vec<Section>,
    pub check_failed: bool,
}

impl Outcome {
    fn single(text: String) -> Self {
        Self {
            sections: vec![Section { suffix: None, text }],
            check_failed: false,
        }
    }
}

fn variant_of(cfg: &RunConfig, instance: &Instance) -> Variant {
    cfg.variant
        .unwrap_or_else(|| allocator::default_variant(instance))
}

pub fn optimize(cfg: &RunConfig) -> Result<Outcome> {
    let instance = cfg.instance()?;
    let variant = variant_of(cfg, &instance);
    let report = allocator::optimize(&instance, variant, &cfg.solver.to_config())?;
    Ok(Outcome::single(report_text(&instance, &report)))
}

/// `key=value` lines; allocations in hashes/second.
pub fn report_text(instance: &Instance, r: &AllocationReport) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k}={v}");
    };
    kv("variant", r.variant.name().into());
    kv("rho", r.rho.to_string());
    kv("status", r.status.name().into());
    kv("feasible", r.feasible.to_string());
    kv("evaluations", r.evaluations.to_string());
    kv("utility", r.utility.to_string());
    kv("expected_payoff", r.expected_payoff.to_string());
    kv("certainty_equivalent", r.certainty_equivalent.to_string());
    for p in instance.pools() {
        if r.pps_pool.as_deref() == Some(p.id.as_str()) {
            kv(&format!("pps.{}", p.id), r.allocation.pps_alloc.to_string());
        } else if p.scheme != hashmix_core::RewardScheme::Pps {
            kv(&format!("pool.{}", p.id), r.allocation.pool(&p.id).to_string());
        }
    }
    for c in instance.currencies() {
        kv(&format!("solo.{}", c.id), r.allocation.solo(&c.id).to_string());
    }
    for id in &r.dropped_pps {
        kv("ignored_pps", id.clone());
    }
    out
}

pub fn sweep(cfg: &RunConfig, jobs: usize) -> Result<Outcome> {
    let instance = cfg.instance()?;
    let variant = variant_of(cfg, &instance);
    let grid = cfg.sweep.grid()?;
    let series = parallel_sweep(&instance, variant, &grid, &cfg.solver.to_config(), jobs)?;
    Ok(Outcome::single(series.to_csv(&instance)))
}

pub fn scenario(cfg: &RunConfig, jobs: usize) -> Result<Outcome> {
    let base = cfg.instance()?;
    let variant = variant_of(cfg, &base);
    let rates = cfg.scenario.rates(&base)?;
    if rates.is_empty() {
        bail!("scenario needs `scenario.rates` or `scenario.quote`");
    }
    let instance = base.with_exchange_rates(&rates)?;
    let grid = cfg.sweep.grid()?;
    let series = parallel_sweep(&instance, variant, &grid, &cfg.solver.to_config(), jobs)?;
    Ok(Outcome::single(series.to_csv(&instance)))
}

/// Grid points split into `jobs` contiguous chunks; output order and values
/// do not depend on `jobs`.
pub fn parallel_sweep(
    instance: &Instance,
    variant: Variant,
    grid: &[f64],
    config: &SolverConfig,
    jobs: usize,
) -> Result<SweepSeries, AllocatorError> {
    allocator::check_grid(grid)?;
    if jobs <= 1 || grid.len() <= 1 {
        return allocator::sweep_rho(instance, variant, grid, config);
    }
    let chunk = grid.len().div_ceil(jobs);
    let results: Vec<Result<AllocationReport, AllocatorError>> = thread::scope(|s| {
        let handles: Vec<_> = grid
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|&rho| allocator::sweep_point(instance, variant, rho, config))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    let points = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(SweepSeries { variant, points })
}

pub fn backtest(cfg: &RunConfig) -> Result<Outcome> {
    let section = cfg.backtest_section()?;
    let config = cfg.backtest_config()?;
    let path = cfg.data_path()?;
    let mut series = market::load_market_data(&path)?;
    if let Some((start, end)) = cfg.backtest_period()? {
        series = series
            .between(start, end)
            .with_context(|| format!("period {start}..{end}"))?;
    }

    let mut sections = Vec::new();
    let both = section.mode == BacktestMode::Both;
    if section.mode != BacktestMode::Active {
        let pool = match &section.passive_pool {
            Some(p) => p.clone(),
            None => match config.pools.first() {
                Some(p) => p.id.clone(),
                None => bail!("config field `backtest.pools`: empty"),
            },
        };
        let summary = backtest::run_passive(&series, &config, &pool)
            .with_context(|| format!("passive run on `{pool}`"))?;
        sections.push(summary_section(&summary, both.then_some("passive")));
    }
    if section.mode != BacktestMode::Passive {
        let summary = backtest::run_active(&series, &config).context("active run")?;
        sections.push(summary_section(&summary, both.then_some("active")));
    }
    Ok(Outcome {
        sections,
        check_failed: false,
    })
}

fn summary_section(summary: &BacktestSummary, suffix: Option<&str>) -> Section {
    Section {
        suffix: suffix.map(String::from),
        text: summary.to_csv(),
    }
}

pub fn payout(cfg: &RunConfig) -> Result<Outcome> {
    let Some(p) = &cfg.payout else {
        bail!("config field `payout`: missing");
    };
    let ctx = p.context();
    let mut out = String::new();
    match p.strategy {
        Some(1) => writeln!(out, "strategy1={}", reward::strategy1_reward(&ctx)?)?,
        Some(2) => writeln!(out, "strategy2={}", reward::strategy2_reward(&ctx)?)?,
        Some(3) => writeln!(out, "strategy3={}", reward::strategy3_reward(&ctx)?)?,
        Some(n) => bail!("config field `payout.strategy`: {n} is not 1, 2 or 3"),
        None => {
            writeln!(out, "strategy1={}", reward::strategy1_reward(&ctx)?)?;
            writeln!(out, "strategy2={}", reward::strategy2_reward(&ctx)?)?;
            match reward::strategy3_reward(&ctx) {
                Ok(v) => writeln!(out, "strategy3={v}")?,
                Err(e) => writeln!(out, "strategy3_error={e}")?,
            }
        }
    }
    Ok(Outcome::single(out))
}

/// Closed-form CARA utility against a Monte-Carlo estimate; fails the check
/// outside three standard errors.
pub fn mgf_check(cfg: &RunConfig, seed: Option<u64>) -> Result<Outcome> {
    let instance = cfg.instance()?;
    let variant = variant_of(cfg, &instance);
    let (spec, _) = allocator::objective_for(&instance, variant)?;
    let alloc = match &cfg.mgf.allocation {
        Some(a) => a.clone(),
        None => utility::equal_split(&spec),
    };
    let seed = seed.unwrap_or(cfg.mgf.seed);
    let r = montecarlo::check_utility(&alloc, &spec, cfg.mgf.draws, seed)?;

    let mut out = String::new();
    writeln!(out, "draws={}", r.draws)?;
    writeln!(out, "seed={}", r.seed)?;
    writeln!(out, "closed_form={}", r.closed_form)?;
    writeln!(out, "estimate={}", r.estimate)?;
    writeln!(out, "std_error={}", r.std_error)?;
    writeln!(out, "z_score={}", r.z_score)?;
    writeln!(out, "utility={}", r.utility)?;
    writeln!(out, "implied_utility={}", r.implied_utility)?;
    for (label, f) in &r.factors {
        writeln!(out, "factor.{label}={f}")?;
    }
    let ok = r.within(3.0);
    writeln!(out, "within_3_sigma={ok}")?;
    Ok(Outcome {
        sections: vec![Section {
            suffix: None,
            text: out,
        }],
        check_failed: !ok,
    })
}
