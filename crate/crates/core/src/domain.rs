//! Validated records shared by every other module.
//!
//! Hash rates are `f64` hashes/second, money is USD per block, times are
//! seconds. A pool's advertised hash rate never includes the candidate
//! miner; the objectives add the miner's share explicitly.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

/// Relative slack allowed on normalized budget sums.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("empty input: no {0}")]
    EmptyInput(&'static str),
    #[error("pool `{pool}` references unknown currency `{currency}`")]
    UnknownCurrency { pool: String, currency: String },
    #[error("`{record}` uses algorithm `{algorithm}` but the miner has no power for it")]
    UnknownAlgorithm { record: String, algorithm: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("field `{field}` of `{record}` is out of range: {value}")]
    OutOfRangeField {
        record: String,
        field: &'static str,
        value: f64,
    },
    #[error("wealth must be positive, got {0}")]
    NonPositiveWealth(f64),
    #[error("allocation references unknown pool `{0}`")]
    UnknownPool(String),
    #[error("allocation exceeds the power budget of algorithm `{algorithm}` (normalized load {load})")]
    InfeasibleAllocation { algorithm: String, load: f64 },
    #[error("market day {date}: {reason}")]
    InvalidMarketDay { date: NaiveDate, reason: &'static str },
}

fn out_of_range(record: &str, field: &'static str, value: f64) -> DomainError {
    DomainError::OutOfRangeField {
        record: record.to_string(),
        field,
        value,
    }
}

/// Identifier of a proof-of-work algorithm, e.g. `sha256d`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowAlgorithm(String);

impl PowAlgorithm {
    pub fn new(id: impl Into<String>) -> Result<Self, DomainError> {
        let id = id.into();
        if id.is_empty() {
            return Err(DomainError::EmptyInput("algorithm id"));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

fn default_exchange_rate() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurrencySpec {
    pub id: String,
    pub algorithm: String,
    /// Block reward in USD.
    pub block_reward: f64,
    /// Average block time in seconds.
    pub block_time: f64,
    /// Network hash rate in hashes/second.
    pub total_hashrate: f64,
    /// Average transaction fees per block in USD.
    #[serde(default)]
    pub avg_tx_fee: f64,
    /// USD per coin. `block_reward` is already expressed at this rate.
    #[serde(default = "default_exchange_rate")]
    pub exchange_rate: f64,
}

impl CurrencySpec {
    /// Block reward in coin units.
    pub fn coin_reward(&self) -> f64 {
        self.block_reward / self.exchange_rate
    }

    /// Re-prices the block reward (and average fees) at a new exchange rate.
    pub fn with_exchange_rate(&self, rate: f64) -> Result<Self, DomainError> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(out_of_range(&self.id, "exchange_rate", rate));
        }
        let mut next = self.clone();
        next.block_reward = self.coin_reward() * rate;
        next.avg_tx_fee = self.avg_tx_fee / self.exchange_rate * rate;
        next.exchange_rate = rate;
        Ok(next)
    }

    fn validate(&self) -> Result<(), DomainError> {
        if self.id.is_empty() {
            return Err(DomainError::EmptyInput("currency id"));
        }
        if self.algorithm.is_empty() {
            return Err(DomainError::EmptyInput("currency algorithm"));
        }
        let checks: [(&'static str, f64, bool); 5] = [
            ("block_reward", self.block_reward, self.block_reward >= 0.0),
            ("block_time", self.block_time, self.block_time > 0.0),
            ("total_hashrate", self.total_hashrate, self.total_hashrate > 0.0),
            ("avg_tx_fee", self.avg_tx_fee, self.avg_tx_fee >= 0.0),
            ("exchange_rate", self.exchange_rate, self.exchange_rate > 0.0),
        ];
        for (field, value, ok) in checks {
            if !(ok && value.is_finite()) {
                return Err(out_of_range(&self.id, field, value));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RewardScheme {
    /// PPLNS and its variance-sharing relatives (Score, proportional, ...).
    #[default]
    #[serde(rename = "PPLNS_LIKE", alias = "PPLNS")]
    PplnsLike,
    #[serde(rename = "PPS")]
    Pps,
}

fn default_true() -> bool {
    true
}

fn default_one() -> f64 {
    1.0
}

/// Accepts `true`/`false` as well as the `0`/`1` integer flags used in catalogs.
fn flag<'de, D: Deserializer<'de>>(de: D) -> Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Flag {
        Bool(bool),
        Int(i64),
    }
    match Flag::deserialize(de)? {
        Flag::Bool(b) => Ok(b),
        Flag::Int(0) => Ok(false),
        Flag::Int(1) => Ok(true),
        Flag::Int(_) => Err(serde::de::Error::custom("flag must be 0 or 1")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    pub id: String,
    pub currency: String,
    /// Pool hash rate in hashes/second, excluding the candidate miner.
    pub hashrate: f64,
    pub fee: f64,
    #[serde(default)]
    pub scheme: RewardScheme,
    /// Whether the pool passes transaction fees on to its miners.
    #[serde(default = "default_true", deserialize_with = "flag")]
    pub pays_tx_fees: bool,
    /// Share of the pool's power paid under the PPLNS contract (dual-scheme pools).
    #[serde(default = "default_one")]
    pub pps_fraction: f64,
}

impl PoolSpec {
    pub fn pplns(id: &str, currency: &str, hashrate: f64, fee: f64) -> Self {
        Self {
            id: id.to_string(),
            currency: currency.to_string(),
            hashrate,
            fee,
            scheme: RewardScheme::PplnsLike,
            pays_tx_fees: true,
            pps_fraction: 1.0,
        }
    }

    pub fn pps(id: &str, currency: &str, hashrate: f64, fee: f64) -> Self {
        Self {
            scheme: RewardScheme::Pps,
            ..Self::pplns(id, currency, hashrate, fee)
        }
    }

    fn validate(&self) -> Result<(), DomainError> {
        if self.id.is_empty() {
            return Err(DomainError::EmptyInput("pool id"));
        }
        if !(self.hashrate.is_finite() && self.hashrate > 0.0) {
            return Err(out_of_range(&self.id, "hashrate", self.hashrate));
        }
        if !(0.0..=1.0).contains(&self.fee) {
            return Err(out_of_range(&self.id, "fee", self.fee));
        }
        if !(0.0..=1.0).contains(&self.pps_fraction) {
            return Err(out_of_range(&self.id, "pps_fraction", self.pps_fraction));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinerProfile {
    /// Hash power per algorithm id, hashes/second.
    pub power_by_algorithm: BTreeMap<String, f64>,
    /// Constant absolute risk aversion, 1/USD.
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wealth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crra: Option<f64>,
}

impl MinerProfile {
    pub fn new(algorithm: &str, power: f64, rho: f64) -> Self {
        let mut power_by_algorithm = BTreeMap::new();
        power_by_algorithm.insert(algorithm.to_string(), power);
        Self {
            power_by_algorithm,
            rho,
            wealth: None,
            crra: None,
        }
    }

    /// Derives `rho` from relative risk aversion and wealth.
    pub fn with_crra(mut self, crra: f64, wealth: f64) -> Result<Self, DomainError> {
        self.rho = cara_from_crra(crra, wealth)?;
        self.crra = Some(crra);
        self.wealth = Some(wealth);
        Ok(self)
    }

    pub fn power(&self, algorithm: &str) -> Option<f64> {
        self.power_by_algorithm.get(algorithm).copied()
    }

    fn validate(&self) -> Result<(), DomainError> {
        if self.power_by_algorithm.is_empty() {
            return Err(DomainError::EmptyInput("miner power"));
        }
        for (alg, &p) in &self.power_by_algorithm {
            PowAlgorithm::new(alg.as_str())?;
            if !(p.is_finite() && p > 0.0) {
                return Err(out_of_range(alg, "power_by_algorithm", p));
            }
        }
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(out_of_range("miner", "rho", self.rho));
        }
        if let Some(w) = self.wealth {
            if !(w.is_finite() && w > 0.0) {
                return Err(DomainError::NonPositiveWealth(w));
            }
        }
        if let Some(c) = self.crra {
            if !(c.is_finite() && c > 0.0) {
                return Err(out_of_range("miner", "crra", c));
            }
        }
        if let (Some(w), Some(c)) = (self.wealth, self.crra) {
            let implied = c / w;
            if (self.rho - implied).abs() > 1e-12 * implied.abs().max(self.rho.abs()) {
                return Err(out_of_range("miner", "rho", self.rho));
            }
        }
        Ok(())
    }
}

/// CARA coefficient implied by a CRRA coefficient at the given wealth.
pub fn cara_from_crra(crra: f64, wealth: f64) -> Result<f64, DomainError> {
    if !(wealth.is_finite() && wealth > 0.0) {
        return Err(DomainError::NonPositiveWealth(wealth));
    }
    if !(crra.is_finite() && crra > 0.0) {
        return Err(out_of_range("miner", "crra", crra));
    }
    Ok(crra / wealth)
}

/// A catalog that passed [`validate_catalog`]. Immutable; derived instances
/// are produced by the `with_*` methods, which re-validate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Instance {
    currencies: Vec<CurrencySpec>,
    pools: Vec<PoolSpec>,
    miner: MinerProfile,
}

pub fn validate_catalog(
    currencies: Vec<CurrencySpec>,
    pools: Vec<PoolSpec>,
    miner: MinerProfile,
) -> Result<Instance, DomainError> {
    if currencies.is_empty() {
        return Err(DomainError::EmptyInput("currencies"));
    }
    if pools.is_empty() {
        return Err(DomainError::EmptyInput("pools"));
    }
    miner.validate()?;

    let mut seen = BTreeSet::new();
    for c in &currencies {
        c.validate()?;
        if !seen.insert(c.id.as_str()) {
            return Err(DomainError::DuplicateId(c.id.clone()));
        }
        if miner.power(&c.algorithm).is_none() {
            return Err(DomainError::UnknownAlgorithm {
                record: c.id.clone(),
                algorithm: c.algorithm.clone(),
            });
        }
    }

    let mut seen_pools = BTreeSet::new();
    for p in &pools {
        p.validate()?;
        if !seen_pools.insert(p.id.as_str()) {
            return Err(DomainError::DuplicateId(p.id.clone()));
        }
        let Some(c) = currencies.iter().find(|c| c.id == p.currency) else {
            return Err(DomainError::UnknownCurrency {
                pool: p.id.clone(),
                currency: p.currency.clone(),
            });
        };
        // The pool is part of the network and does not contain the miner.
        if p.hashrate > c.total_hashrate {
            return Err(out_of_range(&p.id, "hashrate", p.hashrate));
        }
    }

    Ok(Instance {
        currencies,
        pools,
        miner,
    })
}

impl Instance {
    pub fn currencies(&self) -> &[CurrencySpec] {
        &self.currencies
    }

    pub fn pools(&self) -> &[PoolSpec] {
        &self.pools
    }

    pub fn miner(&self) -> &MinerProfile {
        &self.miner
    }

    pub fn currency(&self, id: &str) -> Option<&CurrencySpec> {
        self.currencies.iter().find(|c| c.id == id)
    }

    pub fn pool(&self, id: &str) -> Option<&PoolSpec> {
        self.pools.iter().find(|p| p.id == id)
    }

    pub fn currency_index(&self, id: &str) -> Option<usize> {
        self.currencies.iter().position(|c| c.id == id)
    }

    /// Miner power available to the algorithm that mines `currency`.
    pub fn power_for_currency(&self, currency: &str) -> Option<f64> {
        self.currency(currency)
            .and_then(|c| self.miner.power(&c.algorithm))
    }

    /// Distinct algorithms referenced by the currencies, in catalog order.
    pub fn algorithms(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in &self.currencies {
            if !out.contains(&c.algorithm.as_str()) {
                out.push(&c.algorithm);
            }
        }
        out
    }

    pub fn into_parts(self) -> (Vec<CurrencySpec>, Vec<PoolSpec>, MinerProfile) {
        (self.currencies, self.pools, self.miner)
    }

    pub fn revalidate(&self) -> Result<Instance, DomainError> {
        validate_catalog(
            self.currencies.clone(),
            self.pools.clone(),
            self.miner.clone(),
        )
    }

    /// Same catalog with a different risk aversion. Any wealth/CRRA pair is
    /// dropped since it no longer implies the new coefficient.
    pub fn with_rho(&self, rho: f64) -> Result<Instance, DomainError> {
        let mut miner = self.miner.clone();
        miner.rho = rho;
        miner.wealth = None;
        miner.crra = None;
        validate_catalog(self.currencies.clone(), self.pools.clone(), miner)
    }

    /// Re-prices the named currencies at new USD exchange rates.
    pub fn with_exchange_rates(
        &self,
        overrides: &BTreeMap<String, f64>,
    ) -> Result<Instance, DomainError> {
        let mut currencies = self.currencies.clone();
        for (id, &rate) in overrides {
            let Some(c) = currencies.iter_mut().find(|c| &c.id == id) else {
                return Err(DomainError::UnknownCurrency {
                    pool: String::from("<exchange-rate override>"),
                    currency: id.clone(),
                });
            };
            *c = c.with_exchange_rate(rate)?;
        }
        validate_catalog(currencies, self.pools.clone(), self.miner.clone())
    }

    /// Multiplies every hash rate (miner, pools, networks) by `k`.
    pub fn with_scaled_hashrates(&self, k: f64) -> Result<Instance, DomainError> {
        if !(k.is_finite() && k > 0.0) {
            return Err(out_of_range("scale", "k", k));
        }
        let currencies = self
            .currencies
            .iter()
            .map(|c| CurrencySpec {
                total_hashrate: c.total_hashrate * k,
                ..c.clone()
            })
            .collect();
        let pools = self
            .pools
            .iter()
            .map(|p| PoolSpec {
                hashrate: p.hashrate * k,
                ..p.clone()
            })
            .collect();
        let mut miner = self.miner.clone();
        for v in miner.power_by_algorithm.values_mut() {
            *v *= k;
        }
        validate_catalog(currencies, pools, miner)
    }
}

/// Hash power per pool, per-currency solo power and PPS power, all in
/// hashes/second.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Allocation {
    #[serde(default)]
    pub pool_alloc: BTreeMap<String, f64>,
    #[serde(default)]
    pub solo_alloc: BTreeMap<String, f64>,
    #[serde(default)]
    pub pps_alloc: f64,
}

impl Allocation {
    pub fn with_pool(mut self, id: &str, power: f64) -> Self {
        self.pool_alloc.insert(id.to_string(), power);
        self
    }

    pub fn with_solo(mut self, currency: &str, power: f64) -> Self {
        self.solo_alloc.insert(currency.to_string(), power);
        self
    }

    pub fn with_pps(mut self, power: f64) -> Self {
        self.pps_alloc = power;
        self
    }

    pub fn pool(&self, id: &str) -> f64 {
        self.pool_alloc.get(id).copied().unwrap_or(0.0)
    }

    pub fn solo(&self, currency: &str) -> f64 {
        self.solo_alloc.get(currency).copied().unwrap_or(0.0)
    }

    /// Sum of every entry, hashes/second.
    pub fn total(&self) -> f64 {
        self.pool_alloc.values().sum::<f64>() + self.solo_alloc.values().sum::<f64>() + self.pps_alloc
    }

    /// Per-algorithm share of the miner's power in use.
    pub fn normalized_load(
        &self,
        instance: &Instance,
    ) -> Result<BTreeMap<String, f64>, DomainError> {
        let mut load: BTreeMap<String, f64> = BTreeMap::new();
        let mut add = |currency: &str, power: f64| -> Result<(), DomainError> {
            let c = instance.currency(currency).ok_or_else(|| DomainError::UnknownCurrency {
                pool: String::from("<solo>"),
                currency: currency.to_string(),
            })?;
            let cap = instance.miner.power(&c.algorithm).ok_or_else(|| {
                DomainError::UnknownAlgorithm {
                    record: c.id.clone(),
                    algorithm: c.algorithm.clone(),
                }
            })?;
            *load.entry(c.algorithm.clone()).or_insert(0.0) += power / cap;
            Ok(())
        };
        for (id, &v) in &self.pool_alloc {
            let pool = instance
                .pool(id)
                .ok_or_else(|| DomainError::UnknownPool(id.clone()))?;
            add(&pool.currency, v)?;
        }
        for (cur, &v) in &self.solo_alloc {
            add(cur, v)?;
        }
        if self.pps_alloc != 0.0 {
            let pps = instance
                .pools
                .iter()
                .find(|p| p.scheme == RewardScheme::Pps)
                .ok_or_else(|| DomainError::UnknownPool(String::from("<pps>")))?;
            add(&pps.currency, self.pps_alloc)?;
        }
        Ok(load)
    }

    /// Non-negativity plus the per-algorithm budget `sum(power / cap) <= 1`.
    pub fn check_feasible(&self, instance: &Instance) -> Result<(), DomainError> {
        let entries = self
            .pool_alloc
            .iter()
            .chain(self.solo_alloc.iter())
            .map(|(k, &v)| (k.as_str(), v))
            .chain(core::iter::once(("pps", self.pps_alloc)));
        for (id, v) in entries {
            if !(v.is_finite() && v >= 0.0) {
                return Err(out_of_range(id, "allocation", v));
            }
        }
        for (algorithm, load) in self.normalized_load(instance)? {
            if load > 1.0 + FEASIBILITY_TOLERANCE {
                return Err(DomainError::InfeasibleAllocation { algorithm, load });
            }
        }
        Ok(())
    }
}

/// One day of chain history.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketDay {
    pub date: NaiveDate,
    /// USD per coin.
    pub exchange_rate: f64,
    pub difficulty: f64,
    /// Coins minted per block.
    pub coinbase_reward: f64,
    pub total_blocks: u32,
    /// Blocks found by each tracked pool; absent pools found none.
    pub pool_blocks: BTreeMap<String, u32>,
}

impl MarketDay {
    pub fn blocks_of(&self, pool: &str) -> u32 {
        self.pool_blocks.get(pool).copied().unwrap_or(0)
    }

    /// Block reward in USD at the day's exchange rate.
    pub fn block_reward_usd(&self) -> f64 {
        self.coinbase_reward * self.exchange_rate
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let bad = |reason| DomainError::InvalidMarketDay {
            date: self.date,
            reason,
        };
        if !(self.difficulty.is_finite() && self.difficulty > 0.0) {
            return Err(bad("difficulty must be positive"));
        }
        if !(self.exchange_rate.is_finite() && self.exchange_rate >= 0.0) {
            return Err(bad("exchange rate must be non-negative"));
        }
        if !(self.coinbase_reward.is_finite() && self.coinbase_reward >= 0.0) {
            return Err(bad("coinbase reward must be non-negative"));
        }
        let tracked: u64 = self.pool_blocks.values().map(|&n| u64::from(n)).sum();
        if tracked > u64::from(self.total_blocks) {
            return Err(bad("pool blocks exceed total blocks"));
        }
        Ok(())
    }
}
