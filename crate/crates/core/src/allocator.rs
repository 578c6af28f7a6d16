//! Optimal allocation of a miner's hash power for a given risk aversion.
//!
//! The solver works on fractions `x_i = lambda_i / lambda_A` of the miner's
//! power (per algorithm), with a single budget `sum x_i <= 1` and `x_i >= 0`,
//! and on an objective rescaled to order one.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::domain::{validate_catalog, Allocation, DomainError, Instance, RewardScheme};
use crate::math;
use crate::solver::{self, SolverConfig, SolverError, SolverStatus};
use crate::utility::{self, ObjectiveSpec, UtilityError, VarKind, Variant};

/// Normalized allocations below this are reported as exactly zero.
pub const DUST: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AllocatorError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Utility(#[from] UtilityError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("at rho = {rho}: {inner}")]
    AtRho { rho: f64, inner: Box<AllocatorError> },
    #[error("risk-aversion grid must be strictly increasing (entry {index} = {value})")]
    NonMonotoneGrid { index: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationReport {
    pub variant: Variant,
    pub rho: f64,
    pub allocation: Allocation,
    pub utility: f64,
    /// Expected USD payoff over one horizon.
    pub expected_payoff: f64,
    /// Sure USD amount over one horizon worth the same expected utility.
    pub certainty_equivalent: f64,
    pub status: SolverStatus,
    pub feasible: bool,
    pub evaluations: usize,
    pub radius_history: Vec<f64>,
    /// PPS pool in use, if any.
    pub pps_pool: Option<String>,
    /// PPS pools ignored because a cheaper one exists.
    pub dropped_pps: Vec<String>,
}

/// Model that fits an instance: single-currency unless there are several
/// currencies, `MULTI_POW` once they span several algorithms.
pub fn default_variant(instance: &Instance) -> Variant {
    if instance.algorithms().len() > 1 {
        Variant::MultiPow
    } else if instance.currencies().len() > 1 {
        Variant::MultiCurrency
    } else if instance.pools().iter().any(|p| p.scheme == RewardScheme::Pps) {
        Variant::SingleWithPps
    } else {
        Variant::SinglePplns
    }
}

/// Cheapest PPS pool (first on ties) and the ids of all other PPS pools.
pub fn select_pps_pool(instance: &Instance) -> Option<(String, Vec<String>)> {
    let pps: Vec<_> = instance
        .pools()
        .iter()
        .filter(|p| p.scheme == RewardScheme::Pps)
        .collect();
    let best = pps.iter().copied().reduce(|a, b| if b.fee < a.fee { b } else { a })?;
    let dropped = pps
        .iter()
        .filter(|p| p.id != best.id)
        .map(|p| p.id.clone())
        .collect();
    Some((best.id.clone(), dropped))
}

pub fn objective_for(
    instance: &Instance,
    variant: Variant,
) -> Result<(ObjectiveSpec, Vec<String>), AllocatorError> {
    let (pps, dropped) = if variant == Variant::SingleWithPps {
        match select_pps_pool(instance) {
            Some((id, dropped)) => (Some(id), dropped),
            None => return Err(UtilityError::MissingPpsPool.into()),
        }
    } else {
        (None, Vec::new())
    };
    for id in &dropped {
        log::warn!("PPS pool `{id}` ignored: only the cheapest PPS pool is considered");
    }
    Ok((ObjectiveSpec::new(variant, instance.clone(), pps)?, dropped))
}

pub fn optimize(
    instance: &Instance,
    variant: Variant,
    config: &SolverConfig,
) -> Result<AllocationReport, AllocatorError> {
    let (spec, dropped) = objective_for(instance, variant)?;
    let mut report = optimize_spec(&spec, config)?;
    report.dropped_pps = dropped;
    Ok(report)
}

/// Order-one normalization of the objective.
fn objective_scale(spec: &ObjectiveSpec) -> f64 {
    let rho = spec.rho();
    let inst = spec.instance();
    let mut scale = 0.0f64;
    for v in spec.vars() {
        let c = &inst.currencies()[v.currency];
        let reward = c.block_reward + c.avg_tx_fee;
        let weight = if spec.variant().is_single() {
            1.0
        } else {
            1.0 / (c.block_time * c.total_hashrate)
        };
        let term = match v.kind {
            VarKind::Pool(_) | VarKind::Pps(_) => rho * reward,
            VarKind::Solo(_) => math::one_minus_exp_neg(rho * reward),
        };
        scale = scale.max(weight * v.cap * term);
    }
    if spec.variant().is_single() {
        let c = &inst.currencies()[0];
        let cap = inst.power_for_currency(&c.id).unwrap_or(0.0);
        scale = scale.max(cap * math::one_minus_exp_neg(rho * c.block_reward));
    }
    if scale.is_finite() && scale > 0.0 {
        scale
    } else {
        1.0
    }
}

pub fn optimize_spec(
    spec: &ObjectiveSpec,
    config: &SolverConfig,
) -> Result<AllocationReport, AllocatorError> {
    let n = spec.dimension();
    let caps: Vec<f64> = spec.vars().iter().map(|v| v.cap).collect();
    let unit = ObjectiveSpec::new(
        spec.variant(),
        unit_power(spec.instance())?,
        spec.pps_pool().map(String::from),
    )?;

    let (lambdas, status, feasible, evaluations, radius_history) = if spec.rho() == 0.0 {
        let solo = utility::full_solo(spec);
        let dense = spec.to_dense(&solo)?;
        (dense, SolverStatus::Converged, true, 0, Vec::new())
    } else {
        let scale = objective_scale(&unit);
        let objective = |x: &[f64]| {
            let clamped: Vec<f64> = x.iter().map(|xi| xi.max(0.0)).collect();
            unit.evaluate_dense(&clamped) / scale
        };
        let constraints = |x: &[f64]| {
            let mut c = Vec::with_capacity(n + 1);
            c.push(1.0 - x.iter().sum::<f64>());
            c.extend_from_slice(x);
            c
        };
        let r = solver::maximize(objective, constraints, n, config)?;
        let x = project(&r.x);
        let lambdas = to_power(spec, &x, &caps);
        (lambdas, r.status, r.feasible, r.evaluations, r.radius_history)
    };

    let mut allocation = spec.allocation_of(&lambdas);
    // The implicit single-currency remainder can carry rounding dust too.
    for (cur, v) in allocation.solo_alloc.iter_mut() {
        let cap = spec.instance().power_for_currency(cur).unwrap_or(0.0);
        if *v < DUST * cap {
            *v = 0.0;
        }
    }
    let value = spec.evaluate_dense(&lambdas);
    let payoff = utility::expected_payoff_dense(spec, &lambdas);
    let rho = spec.rho();
    let certainty_equivalent = if rho > 0.0 {
        value / (spec.utility_scale() * rho)
    } else {
        payoff
    };
    Ok(AllocationReport {
        variant: spec.variant(),
        rho,
        allocation,
        utility: value,
        expected_payoff: payoff,
        certainty_equivalent,
        status,
        feasible,
        evaluations,
        radius_history,
        pps_pool: spec.pps_pool().map(String::from),
        dropped_pps: Vec::new(),
    })
}

/// The same catalog measured in units of the miner's power per algorithm.
/// Every objective is invariant (single-currency: homogeneous) under this
/// change of units, and the solver then sees identical numbers for catalogs
/// that differ only by a common hash-rate scale.
fn unit_power(instance: &Instance) -> Result<Instance, DomainError> {
    let (mut currencies, mut pools, mut miner) = instance.clone().into_parts();
    let power = |alg: &str| miner.power(alg).unwrap_or(1.0);
    for p in &mut pools {
        let alg = &currencies
            .iter()
            .find(|c| c.id == p.currency)
            .expect("validated instance")
            .algorithm;
        p.hashrate /= power(alg);
    }
    for c in &mut currencies {
        c.total_hashrate /= power(&c.algorithm);
    }
    for v in miner.power_by_algorithm.values_mut() {
        *v = 1.0;
    }
    validate_catalog(currencies, pools, miner)
}

/// Clamp negatives, drop dust, rescale onto the budget if it is exceeded.
fn project(x: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = x
        .iter()
        .map(|&v| if v < DUST { 0.0 } else { v })
        .collect();
    let sum: f64 = out.iter().sum();
    if sum > 1.0 {
        for v in &mut out {
            *v /= sum;
        }
    }
    out
}

/// Normalized fractions to hash rates, shrinking by an ulp at a time until
/// the budget residual is non-negative.
fn to_power(spec: &ObjectiveSpec, x: &[f64], caps: &[f64]) -> Vec<f64> {
    let mut lambdas: Vec<f64> = x.iter().zip(caps).map(|(v, c)| v * c).collect();
    while spec.residuals_dense(&lambdas)[0] < 0.0 {
        for l in &mut lambdas {
            *l *= 1.0 - f64::EPSILON;
        }
    }
    lambdas
}

/// 40 log-spaced points covering `[1e-6, 1e-4]`.
pub fn default_rho_grid() -> Vec<f64> {
    log_grid(1e-6, 1e-4, 40)
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => {
            let (a, b) = (math::ln(lo), math::ln(hi));
            let mut g: Vec<f64> = (0..points)
                .map(|i| math::exp(a + (b - a) * i as f64 / (points - 1) as f64))
                .collect();
            g[0] = lo;
            g[points - 1] = hi;
            g
        }
    }
}

pub fn check_grid(grid: &[f64]) -> Result<(), AllocatorError> {
    for (i, &r) in grid.iter().enumerate() {
        let bad = !(r.is_finite() && r >= 0.0) || (i > 0 && !(r > grid[i - 1]));
        if bad {
            return Err(AllocatorError::NonMonotoneGrid { index: i, value: r });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSeries {
    pub variant: Variant,
    pub points: Vec<AllocationReport>,
}

/// Solves independently at every grid point.
pub fn sweep_rho(
    instance: &Instance,
    variant: Variant,
    grid: &[f64],
    config: &SolverConfig,
) -> Result<SweepSeries, AllocatorError> {
    check_grid(grid)?;
    let points = grid
        .iter()
        .map(|&rho| sweep_point(instance, variant, rho, config))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepSeries { variant, points })
}

/// One sweep point; failures carry the offending rho.
pub fn sweep_point(
    instance: &Instance,
    variant: Variant,
    rho: f64,
    config: &SolverConfig,
) -> Result<AllocationReport, AllocatorError> {
    instance
        .with_rho(rho)
        .map_err(AllocatorError::from)
        .and_then(|inst| optimize(&inst, variant, config))
        .map_err(|e| AllocatorError::AtRho {
            rho,
            inner: Box::new(e),
        })
}

impl SweepSeries {
    /// CSV: `rho,utility,expected_payoff,alloc_<pool>...,solo_<currency>...[,pps]`.
    pub fn to_csv(&self, instance: &Instance) -> String {
        let mut out = String::new();
        out.push_str(&csv_header(instance, self.variant));
        out.push('\n');
        for p in &self.points {
            out.push_str(&csv_row(instance, p));
            out.push('\n');
        }
        out
    }
}

fn plain_pools(instance: &Instance) -> impl Iterator<Item = &str> {
    instance
        .pools()
        .iter()
        .filter(|p| p.scheme != RewardScheme::Pps)
        .map(|p| p.id.as_str())
}

pub fn csv_header(instance: &Instance, variant: Variant) -> String {
    let mut cols: Vec<String> = ["rho", "utility", "expected_payoff"]
        .iter()
        .map(|s| String::from(*s))
        .collect();
    cols.extend(plain_pools(instance).map(|id| format!("alloc_{id}")));
    cols.extend(instance.currencies().iter().map(|c| format!("solo_{}", c.id)));
    if variant == Variant::SingleWithPps {
        cols.push(String::from("pps"));
    }
    cols.join(",")
}

pub fn csv_row(instance: &Instance, report: &AllocationReport) -> String {
    let a = &report.allocation;
    let mut cols = alloc::vec![
        format!("{}", report.rho),
        format!("{}", report.utility),
        format!("{}", report.expected_payoff),
    ];
    cols.extend(plain_pools(instance).map(|id| format!("{}", a.pool(id))));
    cols.extend(instance.currencies().iter().map(|c| format!("{}", a.solo(&c.id))));
    if report.variant == Variant::SingleWithPps {
        cols.push(format!("{}", a.pps_alloc));
    }
    cols.join(",")
}

/// Re-prices currencies (USD per coin) and sweeps.
pub fn exchange_rate_scenario(
    instance: &Instance,
    variant: Variant,
    rates: &BTreeMap<String, f64>,
    grid: &[f64],
    config: &SolverConfig,
) -> Result<SweepSeries, AllocatorError> {
    sweep_rho(&instance.with_exchange_rates(rates)?, variant, grid, config)
}
