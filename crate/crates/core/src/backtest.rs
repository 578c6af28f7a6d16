//! Replays daily chain history for a passive single-pool miner and for a
//! miner that periodically re-optimizes across pools and solo mining.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use chrono::NaiveDate;
use thiserror::Error;

use crate::allocator::{self, AllocatorError};
use crate::domain::{
    validate_catalog, CurrencySpec, DomainError, MarketDay, MinerProfile, PoolSpec,
};
use crate::math;
use crate::solver::SolverConfig;
use crate::utility::Variant;

/// Hashes per unit of difficulty.
pub const HASHES_PER_DIFFICULTY: f64 = 4_294_967_296.0;
/// Target block interval, seconds.
pub const BLOCK_TIME: f64 = 600.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BacktestError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Allocator(#[from] AllocatorError),
    #[error("market series is empty")]
    EmptySeries,
    #[error("dates must be strictly increasing (row {index}, {date})")]
    NonMonotoneDates { index: usize, date: NaiveDate },
    #[error("market series has no column for pool `{0}`")]
    MissingColumn(String),
    #[error("no blocks at all in the estimation window ending {0}")]
    EmptyWindow(NaiveDate),
    #[error("daily rewards have zero variance")]
    ZeroVariance,
    #[error("need at least {needed} daily rewards, got {got}")]
    TooFewDays { needed: usize, got: usize },
    #[error("re-optimization on {date} failed: {inner}")]
    Reoptimize {
        date: NaiveDate,
        inner: Box<BacktestError>,
    },
    #[error("invalid backtest configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Validated, date-ordered market history plus the pools it tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSeries {
    pools: Vec<String>,
    days: Vec<MarketDay>,
}

impl MarketSeries {
    pub fn new(pools: Vec<String>, days: Vec<MarketDay>) -> Result<Self, BacktestError> {
        if days.is_empty() {
            return Err(BacktestError::EmptySeries);
        }
        for (i, d) in days.iter().enumerate() {
            d.validate()?;
            if i > 0 && d.date <= days[i - 1].date {
                return Err(BacktestError::NonMonotoneDates {
                    index: i,
                    date: d.date,
                });
            }
            if let Some(p) = d.pool_blocks.keys().find(|p| !pools.contains(p)) {
                return Err(BacktestError::MissingColumn(p.clone()));
            }
        }
        Ok(Self { pools, days })
    }

    pub fn pools(&self) -> &[String] {
        &self.pools
    }

    pub fn days(&self) -> &[MarketDay] {
        &self.days
    }

    pub fn require_pools<'a, I>(&self, ids: I) -> Result<(), BacktestError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        for id in ids {
            if !self.pools.iter().any(|p| p == id) {
                return Err(BacktestError::MissingColumn(String::from(id)));
            }
        }
        Ok(())
    }

    /// Consecutive dates more than one day apart.
    pub fn gaps(&self) -> Vec<(NaiveDate, NaiveDate)> {
        self.days
            .windows(2)
            .filter(|w| (w[1].date - w[0].date).num_days() > 1)
            .map(|w| (w[0].date, w[1].date))
            .collect()
    }

    /// Days with `start <= date <= end`.
    pub fn between(&self, start: NaiveDate, end: NaiveDate) -> Result<Self, BacktestError> {
        let days: Vec<MarketDay> = self
            .days
            .iter()
            .filter(|d| d.date >= start && d.date <= end)
            .cloned()
            .collect();
        Self::new(self.pools.clone(), days)
    }
}

/// Network hash rate implied by the day's difficulty.
pub fn network_hashrate(day: &MarketDay) -> f64 {
    HASHES_PER_DIFFICULTY / BLOCK_TIME * day.difficulty
}

/// Pool hash rate on day `index`: the network rate times the pool's share
/// of blocks over the trailing `window` days (fewer at the series start).
pub fn pool_hashrate_estimate(
    days: &[MarketDay],
    index: usize,
    pool: &str,
    window: usize,
) -> Result<f64, BacktestError> {
    let start = (index + 1).saturating_sub(window.max(1));
    let span = &days[start..=index];
    let total: u64 = span.iter().map(|d| u64::from(d.total_blocks)).sum();
    if total == 0 {
        return Err(BacktestError::EmptyWindow(days[index].date));
    }
    let mine: u64 = span.iter().map(|d| u64::from(d.blocks_of(pool))).sum();
    Ok(network_hashrate(&days[index]) * (mine as f64 / total as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestPool {
    pub id: String,
    pub fee: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    /// The miner's hash rate, hashes/second.
    pub miner_power: f64,
    pub rho: f64,
    /// Days between re-optimizations.
    pub reopt_interval_days: usize,
    pub window_days: usize,
    pub pps_fee: f64,
    pub pools: Vec<BacktestPool>,
    pub solver: SolverConfig,
}

impl BacktestConfig {
    pub fn new(miner_power: f64, rho: f64, pools: Vec<BacktestPool>) -> Self {
        Self {
            miner_power,
            rho,
            reopt_interval_days: 3,
            window_days: 14,
            pps_fee: 0.04,
            pools,
            solver: SolverConfig::default(),
        }
    }

    fn validate(&self) -> Result<(), BacktestError> {
        if !(self.miner_power.is_finite() && self.miner_power >= 0.0) {
            return Err(BacktestError::InvalidConfig("miner power must be non-negative"));
        }
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(BacktestError::InvalidConfig("rho must be non-negative"));
        }
        if self.reopt_interval_days == 0 {
            return Err(BacktestError::InvalidConfig("re-optimization interval must be positive"));
        }
        if self.window_days == 0 {
            return Err(BacktestError::InvalidConfig("window must be positive"));
        }
        if !(0.0..=1.0).contains(&self.pps_fee) {
            return Err(BacktestError::InvalidConfig("PPS fee must lie in [0, 1]"));
        }
        if self.pools.is_empty() {
            return Err(BacktestError::InvalidConfig("no pools"));
        }
        if self.pools.iter().any(|p| !(0.0..=1.0).contains(&p.fee)) {
            return Err(BacktestError::InvalidConfig("pool fee must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DailyResult {
    pub date: NaiveDate,
    pub reward_usd: f64,
    /// Hash rate per pool id, plus `solo` for the active miner.
    pub allocation: BTreeMap<String, f64>,
    pub network_hashrate: f64,
    /// Smoothed hash-rate estimate of each pool in play.
    pub pool_estimates: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestSummary {
    pub days: Vec<DailyResult>,
    /// Total reward.
    pub total: f64,
    pub pps_baseline: f64,
    /// Population standard deviation of daily rewards.
    pub sigma: f64,
    pub sharpe: f64,
}

impl BacktestSummary {
    pub fn new(days: Vec<DailyResult>, pps_baseline: f64) -> Result<Self, BacktestError> {
        let rewards: Vec<f64> = days.iter().map(|d| d.reward_usd).collect();
        let (sharpe, sigma) = sharpe_ratio(&rewards, pps_baseline)?;
        Ok(Self {
            total: rewards.iter().sum(),
            pps_baseline,
            sigma,
            sharpe,
            days,
        })
    }

    /// `date,reward_usd,alloc_<pool>...` then `P=`, `P_PPS=`, `sigma=`, `S=`.
    pub fn to_csv(&self) -> String {
        let cols: Vec<&String> = self
            .days
            .first()
            .map(|d| d.allocation.keys().collect())
            .unwrap_or_default();
        let mut out = String::from("date,reward_usd");
        for c in &cols {
            out.push_str(&format!(",alloc_{c}"));
        }
        out.push('\n');
        for d in &self.days {
            out.push_str(&format!("{},{}", d.date, d.reward_usd));
            for c in &cols {
                out.push_str(&format!(",{}", d.allocation.get(*c).copied().unwrap_or(0.0)));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "P={}\nP_PPS={}\nsigma={}\nS={}\n",
            self.total, self.pps_baseline, self.sigma, self.sharpe
        ));
        out
    }
}

/// `(sum r - baseline) / sigma` with the population standard deviation;
/// returns `(ratio, sigma)`.
pub fn sharpe_ratio(rewards: &[f64], baseline: f64) -> Result<(f64, f64), BacktestError> {
    if rewards.len() < 2 {
        return Err(BacktestError::TooFewDays {
            needed: 2,
            got: rewards.len(),
        });
    }
    let n = rewards.len() as f64;
    let total: f64 = rewards.iter().sum();
    let mean = total / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let sigma = math::sqrt(var);
    if !(sigma > 0.0) {
        return Err(BacktestError::ZeroVariance);
    }
    Ok(((total - baseline) / sigma, sigma))
}

/// Reward of mining the whole period under PPS at `pps_fee`.
pub fn pps_baseline(days: &[MarketDay], miner_power: f64, pps_fee: f64) -> f64 {
    days.iter()
        .map(|d| {
            miner_power / network_hashrate(d)
                * f64::from(d.total_blocks)
                * d.block_reward_usd()
                * (1.0 - pps_fee)
        })
        .sum()
}

/// PPLNS reward of `lambda` in a pool of (estimated) size `pool_rate` that
/// found `blocks` blocks of value `reward`.
fn pool_reward(lambda: f64, pool_rate: f64, fee: f64, blocks: u32, reward: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    lambda / (lambda + pool_rate) * (1.0 - fee) * f64::from(blocks) * reward
}

/// All power in `pool_id` for the whole series.
pub fn run_passive(
    series: &MarketSeries,
    config: &BacktestConfig,
    pool_id: &str,
) -> Result<BacktestSummary, BacktestError> {
    config.validate()?;
    series.require_pools([pool_id])?;
    let fee = config
        .pools
        .iter()
        .find(|p| p.id == pool_id)
        .map(|p| p.fee)
        .ok_or(BacktestError::MissingColumn(String::from(pool_id)))?;
    let days = series.days();
    let mut out = Vec::with_capacity(days.len());
    for (i, d) in days.iter().enumerate() {
        let est = pool_hashrate_estimate(days, i, pool_id, config.window_days)?;
        let reward = pool_reward(
            config.miner_power,
            est,
            fee,
            d.blocks_of(pool_id),
            d.block_reward_usd(),
        );
        let mut allocation = BTreeMap::new();
        allocation.insert(String::from(pool_id), config.miner_power);
        let mut pool_estimates = BTreeMap::new();
        pool_estimates.insert(String::from(pool_id), est);
        out.push(DailyResult {
            date: d.date,
            reward_usd: reward,
            allocation,
            network_hashrate: network_hashrate(d),
            pool_estimates,
        });
    }
    BacktestSummary::new(out, pps_baseline(days, config.miner_power, config.pps_fee))
}

/// Re-optimizes over the configured pools and solo mining every
/// `reopt_interval_days`, holding the allocation in between.
pub fn run_active(
    series: &MarketSeries,
    config: &BacktestConfig,
) -> Result<BacktestSummary, BacktestError> {
    config.validate()?;
    series.require_pools(config.pools.iter().map(|p| p.id.as_str()))?;
    let days = series.days();
    let mut out = Vec::with_capacity(days.len());
    let mut held: BTreeMap<String, f64> = BTreeMap::new();

    for (i, d) in days.iter().enumerate() {
        let estimates = config
            .pools
            .iter()
            .map(|p| pool_hashrate_estimate(days, i, &p.id, config.window_days))
            .collect::<Result<Vec<f64>, _>>()?;

        if i % config.reopt_interval_days == 0 {
            held = reoptimize(d, &estimates, config).map_err(|e| BacktestError::Reoptimize {
                date: d.date,
                inner: Box::new(e),
            })?;
        }

        let network = network_hashrate(d);
        let reward_usd = d.block_reward_usd();
        let mut reward = 0.0;
        for (p, &est) in config.pools.iter().zip(&estimates) {
            let lambda = held.get(&p.id).copied().unwrap_or(0.0);
            reward += pool_reward(lambda, est, p.fee, d.blocks_of(&p.id), reward_usd);
        }
        let solo = held.get("solo").copied().unwrap_or(0.0);
        reward += solo / network * f64::from(d.total_blocks) * reward_usd;

        out.push(DailyResult {
            date: d.date,
            reward_usd: reward,
            allocation: held.clone(),
            network_hashrate: network,
            pool_estimates: config
                .pools
                .iter()
                .map(|p| p.id.clone())
                .zip(estimates.iter().copied())
                .collect(),
        });
    }
    BacktestSummary::new(out, pps_baseline(days, config.miner_power, config.pps_fee))
}

fn reoptimize(
    day: &MarketDay,
    estimates: &[f64],
    config: &BacktestConfig,
) -> Result<BTreeMap<String, f64>, BacktestError> {
    let mut held: BTreeMap<String, f64> =
        config.pools.iter().map(|p| (p.id.clone(), 0.0)).collect();
    let pools: Vec<PoolSpec> = config
        .pools
        .iter()
        .zip(estimates)
        .filter(|(_, &est)| est > 0.0)
        .map(|(p, &est)| PoolSpec::pplns(&p.id, "BTC", est, p.fee))
        .collect();
    if config.miner_power == 0.0 {
        held.insert(String::from("solo"), 0.0);
        return Ok(held);
    }
    if pools.is_empty() {
        held.insert(String::from("solo"), config.miner_power);
        return Ok(held);
    }
    let currency = CurrencySpec {
        id: String::from("BTC"),
        algorithm: String::from("sha256d"),
        block_reward: day.block_reward_usd(),
        block_time: BLOCK_TIME,
        total_hashrate: network_hashrate(day),
        avg_tx_fee: 0.0,
        exchange_rate: if day.exchange_rate > 0.0 {
            day.exchange_rate
        } else {
            1.0
        },
    };
    let miner = MinerProfile::new("sha256d", config.miner_power, config.rho);
    let instance = validate_catalog(vec![currency], pools, miner)?;
    let report = allocator::optimize(&instance, Variant::SinglePplns, &config.solver)?;
    for (id, &v) in &report.allocation.pool_alloc {
        held.insert(id.clone(), v);
    }
    held.insert(String::from("solo"), report.allocation.solo("BTC"));
    Ok(held)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(i: u32, blocks: u32, pool_blocks: &[(&str, u32)]) -> MarketDay {
        MarketDay {
            date: NaiveDate::from_ymd_opt(2018, 2, 1).unwrap() + chrono::Days::new(u64::from(i)),
            exchange_rate: 10_000.0,
            difficulty: 3e12,
            coinbase_reward: 12.5,
            total_blocks: blocks,
            pool_blocks: pool_blocks.iter().map(|(p, n)| (String::from(*p), *n)).collect(),
        }
    }

    fn series() -> MarketSeries {
        let days = (0..20)
            .map(|i| day(i, 140 + i % 7, &[("a", 10 + i % 3), ("b", 2 * (i % 2)), ("c", 1)]))
            .collect();
        MarketSeries::new(vec!["a".into(), "b".into(), "c".into()], days).unwrap()
    }

    fn config() -> BacktestConfig {
        BacktestConfig::new(
            1.2e15,
            5e-5,
            vec![
                BacktestPool { id: "a".into(), fee: 0.02 },
                BacktestPool { id: "b".into(), fee: 0.02 },
                BacktestPool { id: "c".into(), fee: 0.01 },
            ],
        )
    }

    #[test]
    fn network_rate_from_difficulty() {
        let d = day(0, 144, &[]);
        assert_eq!(network_hashrate(&d), 4_294_967_296.0 / 600.0 * 3e12);
    }

    #[test]
    fn estimate_uses_truncated_window() {
        let s = series();
        let est = pool_hashrate_estimate(s.days(), 0, "a", 14).unwrap();
        assert_eq!(est, network_hashrate(&s.days()[0]) * 10.0 / 140.0);
        let days = s.days();
        let exp_share: u32 = (6..=19).map(|i| 10 + i % 3).sum::<u32>();
        let exp_total: u32 = (6..=19).map(|i| 140 + i % 7).sum::<u32>();
        let est = pool_hashrate_estimate(days, 19, "a", 14).unwrap();
        let want = network_hashrate(&days[19]) * (f64::from(exp_share) / f64::from(exp_total));
        assert!((est - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn empty_window_is_an_error() {
        let days = vec![day(0, 0, &[])];
        assert!(matches!(
            pool_hashrate_estimate(&days, 0, "a", 14),
            Err(BacktestError::EmptyWindow(_))
        ));
    }

    #[test]
    fn dates_must_increase() {
        let days = vec![day(1, 10, &[]), day(0, 10, &[])];
        assert!(matches!(
            MarketSeries::new(vec![], days),
            Err(BacktestError::NonMonotoneDates { index: 1, .. })
        ));
    }

    #[test]
    fn missing_pool_column() {
        let s = series();
        let mut cfg = config();
        cfg.pools.push(BacktestPool { id: "zzz".into(), fee: 0.0 });
        assert_eq!(run_active(&s, &cfg), Err(BacktestError::MissingColumn("zzz".into())));
    }

    #[test]
    fn sharpe_examples() {
        let (s, sigma) = sharpe_ratio(&[1.0, 3.0], 2.0).unwrap();
        assert_eq!(sigma, 1.0);
        assert_eq!(s, 2.0);
        assert_eq!(sharpe_ratio(&[2.0, 2.0], 0.0), Err(BacktestError::ZeroVariance));
        assert!(matches!(sharpe_ratio(&[2.0], 0.0), Err(BacktestError::TooFewDays { .. })));
    }

    #[test]
    fn passive_reward_formula() {
        let s = series();
        let cfg = config();
        let r = run_passive(&s, &cfg, "a").unwrap();
        let d = &s.days()[0];
        let est = pool_hashrate_estimate(s.days(), 0, "a", 14).unwrap();
        let want = 1.2e15 / (1.2e15 + est) * 0.98 * 10.0 * 125_000.0;
        assert!((r.days[0].reward_usd - want).abs() <= 1e-9 * want);
        assert_eq!(r.days.len(), 20);
        assert!(r.to_csv().lines().any(|l| l.starts_with("S=")));
        let _ = d;
    }

    #[test]
    fn active_holds_between_reoptimizations() {
        let s = series();
        let r = run_active(&s, &config()).unwrap();
        assert_eq!(r.days[1].allocation, r.days[0].allocation);
        assert_eq!(r.days[2].allocation, r.days[0].allocation);
        let total: f64 = r.days[0].allocation.values().sum();
        assert!(total <= 1.2e15 * (1.0 + 1e-12));
    }

    #[test]
    fn pps_baseline_formula() {
        let s = series();
        let d = &s.days()[0];
        let one = pps_baseline(&s.days()[..1], 1e15, 0.04);
        let want = 1e15 / network_hashrate(d) * 140.0 * 125_000.0 * 0.96;
        assert!((one - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn idle_miner_has_no_variance() {
        let mut cfg = config();
        cfg.miner_power = 0.0;
        assert_eq!(run_passive(&series(), &cfg, "a"), Err(BacktestError::ZeroVariance));
        assert_eq!(run_active(&series(), &cfg), Err(BacktestError::ZeroVariance));
    }

    #[test]
    fn small_stake_reward_is_linear() {
        let est = 1e18;
        let one = pool_reward(1e14, est, 0.02, 7, 1e5);
        let two = pool_reward(2e14, est, 0.02, 7, 1e5);
        assert!((two / one - 2.0).abs() < 0.01);
    }

    #[test]
    fn estimates_never_exceed_the_network() {
        let s = series();
        for i in 0..s.days().len() {
            let total: f64 = s
                .pools()
                .iter()
                .map(|p| pool_hashrate_estimate(s.days(), i, p, 14).unwrap())
                .sum();
            assert!(total <= network_hashrate(&s.days()[i]) * (1.0 + 1e-9));
        }
    }
}
