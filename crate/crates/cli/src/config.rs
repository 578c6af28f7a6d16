//! Run configuration: a JSON or TOML file, then `key=value` overrides, then
//! typed validation.
//!
//! Overrides address the parsed tree with dotted paths. Array elements are
//! picked by numeric index or by their `id` field (`pools.pool2.fee=0.01`).
//! Two shorthands exist: `rho` sets the risk aversion of every section that
//! has one, `miner.power` sets the power of a single-algorithm miner.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use hashmix_core::backtest::{BacktestConfig, BacktestPool};
use hashmix_core::domain::validate_catalog;
use hashmix_core::reward::DualSchemeContext;
use hashmix_core::{
    Allocation, CurrencySpec, DomainError, Instance, MinerProfile, PoolSpec, SolverConfig,
    StartStrategy, Variant,
};
use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("bad override `{key}`: {reason}")]
    Override { key: String, reason: String },
    #[error("config field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

fn field(name: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: name.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub currencies: Vec<CurrencySpec>,
    #[serde(default)]
    pub pools: Vec<PoolSpec>,
    pub miner: Option<MinerProfile>,
    pub variant: Option<Variant>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub scenario: ScenarioSection,
    pub backtest: Option<BacktestSection>,
    pub payout: Option<PayoutSection>,
    #[serde(default)]
    pub mgf: MgfSection,
    /// Directory of the config file; relative data paths resolve from here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StartSection {
    EqualSplit,
    VertexSweep,
    User(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub rho_begin: f64,
    pub rho_end: f64,
    pub max_evals: usize,
    pub start: StartSection,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            rho_begin: d.rho_begin,
            rho_end: d.rho_end,
            max_evals: d.max_evals,
            start: StartSection::VertexSweep,
        }
    }
}

impl SolverSection {
    pub fn to_config(&self) -> SolverConfig {
        SolverConfig {
            rho_begin: self.rho_begin,
            rho_end: self.rho_end,
            max_evals: self.max_evals,
            start: match &self.start {
                StartSection::EqualSplit => StartStrategy::EqualSplit,
                StartSection::VertexSweep => StartStrategy::VertexSweep,
                StartSection::User(x) => StartStrategy::User(x.clone()),
            },
        }
    }
}

/// Either an explicit `grid` or `points` log-spaced values in `[lo, hi]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub grid: Option<Vec<f64>>,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            grid: None,
            lo: 1e-6,
            hi: 1e-4,
            points: 40,
        }
    }
}

impl SweepSection {
    pub fn grid(&self) -> Result<Vec<f64>, ConfigError> {
        if let Some(g) = &self.grid {
            return Ok(g.clone());
        }
        if !(self.lo > 0.0 && self.hi >= self.lo && self.hi.is_finite()) {
            return Err(field("sweep", "need 0 < lo <= hi"));
        }
        Ok(hashmix_core::allocator::log_grid(self.lo, self.hi, self.points))
    }
}

/// A pair quote whose value moves against `currency`'s USD price: the new
/// rate is `rate * reference / value`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quote {
    pub currency: String,
    pub reference: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    /// USD per coin, by currency id.
    pub rates: BTreeMap<String, f64>,
    pub quote: Option<Quote>,
}

impl ScenarioSection {
    pub fn rates(&self, instance: &Instance) -> Result<BTreeMap<String, f64>, ConfigError> {
        let mut rates = self.rates.clone();
        if let Some(q) = &self.quote {
            if !(q.reference > 0.0 && q.value > 0.0) {
                return Err(field("scenario.quote", "reference and value must be positive"));
            }
            let base = match rates.get(&q.currency) {
                Some(&r) => r,
                None => {
                    instance
                        .currency(&q.currency)
                        .ok_or_else(|| {
                            field(
                                "scenario.quote.currency",
                                format!("unknown currency `{}`", q.currency),
                            )
                        })?
                        .exchange_rate
                }
            };
            rates.insert(q.currency.clone(), base * q.reference / q.value);
        }
        Ok(rates)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BacktestMode {
    Passive,
    Active,
    #[default]
    Both,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolFee {
    pub id: String,
    pub fee: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestSection {
    pub data: PathBuf,
    /// Defaults to the `miner` section's single power.
    pub miner_power: Option<f64>,
    /// Defaults to `miner.rho`.
    pub rho: Option<f64>,
    #[serde(default = "default_interval")]
    pub interval_days: usize,
    #[serde(default = "default_window")]
    pub smoothing_window: usize,
    #[serde(default = "default_pps_fee")]
    pub pps_fee: f64,
    pub pools: Vec<PoolFee>,
    /// `[start, end]`, ISO dates, inclusive.
    pub period: Option<[String; 2]>,
    #[serde(default)]
    pub mode: BacktestMode,
    /// Pool for the passive run; the first configured pool by default.
    pub passive_pool: Option<String>,
}

fn default_interval() -> usize {
    3
}

fn default_window() -> usize {
    14
}

fn default_pps_fee() -> f64 {
    0.04
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoutSection {
    /// 1, 2 or 3; all three when absent.
    pub strategy: Option<u8>,
    pub block_reward: f64,
    pub pps_fraction: f64,
    pub pool_hashrate: f64,
    pub miner_rate: f64,
    #[serde(default)]
    pub pps_paid_since_last_block: f64,
}

impl PayoutSection {
    pub fn context(&self) -> DualSchemeContext {
        DualSchemeContext {
            block_reward: self.block_reward,
            pps_fraction: self.pps_fraction,
            pool_hashrate: self.pool_hashrate,
            miner_rate: self.miner_rate,
            pps_paid_since_last_block: self.pps_paid_since_last_block,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MgfSection {
    /// Equal split over all options when absent.
    pub allocation: Option<Allocation>,
    pub draws: u64,
    pub seed: u64,
}

impl Default for MgfSection {
    fn default() -> Self {
        Self {
            allocation: None,
            draws: 1_000_000,
            seed: 42,
        }
    }
}

impl RunConfig {
    pub fn instance(&self) -> Result<Instance, ConfigError> {
        let miner = self.miner.clone().ok_or_else(|| field("miner", "missing"))?;
        Ok(validate_catalog(
            self.currencies.clone(),
            self.pools.clone(),
            miner,
        )?)
    }

    pub fn backtest_section(&self) -> Result<&BacktestSection, ConfigError> {
        self.backtest
            .as_ref()
            .ok_or_else(|| field("backtest", "missing"))
    }

    pub fn backtest_config(&self) -> Result<BacktestConfig, ConfigError> {
        let b = self.backtest_section()?;
        let miner_power = match (b.miner_power, &self.miner) {
            (Some(p), _) => p,
            (None, Some(m)) if m.power_by_algorithm.len() == 1 => {
                *m.power_by_algorithm.values().next().expect("one entry")
            }
            _ => return Err(field("backtest.miner_power", "missing")),
        };
        let rho = match (b.rho, &self.miner) {
            (Some(r), _) => r,
            (None, Some(m)) => m.rho,
            (None, None) => return Err(field("backtest.rho", "missing")),
        };
        let pools = b
            .pools
            .iter()
            .map(|p| BacktestPool {
                id: p.id.clone(),
                fee: p.fee,
            })
            .collect();
        let mut cfg = BacktestConfig::new(miner_power, rho, pools);
        cfg.reopt_interval_days = b.interval_days;
        cfg.window_days = b.smoothing_window;
        cfg.pps_fee = b.pps_fee;
        cfg.solver = self.solver.to_config();
        Ok(cfg)
    }

    pub fn backtest_period(&self) -> Result<Option<(NaiveDate, NaiveDate)>, ConfigError> {
        let Some([start, end]) = &self.backtest_section()?.period else {
            return Ok(None);
        };
        let parse = |s: &str| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map_err(|e| field("backtest.period", format!("`{s}`: {e}")))
        };
        let (start, end) = (parse(start)?, parse(end)?);
        if start >= end {
            return Err(field("backtest.period", "start must precede end"));
        }
        Ok(Some((start, end)))
    }

    pub fn data_path(&self) -> Result<PathBuf, ConfigError> {
        let p = &self.backtest_section()?.data;
        Ok(if p.is_absolute() {
            p.clone()
        } else {
            self.base_dir.join(p)
        })
    }
}

pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut tree = parse_tree(path, &text)?;
    for o in overrides {
        apply_override(&mut tree, o)?;
    }
    let mut cfg = from_tree(tree)?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(cfg)
}

pub fn from_tree(tree: Value) -> Result<RunConfig, ConfigError> {
    serde_path_to_error::deserialize(tree).map_err(|e| ConfigError::Field {
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

/// TOML for `.toml` files, JSON for `.json`, otherwise whichever parses.
pub fn parse_tree(path: &Path, text: &str) -> Result<Value, ConfigError> {
    let syntax = |message: String| ConfigError::Syntax {
        path: path.to_path_buf(),
        message,
    };
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(text).map_err(|e| syntax(e.to_string())),
        Some("json") => serde_json::from_str(text).map_err(|e| syntax(e.to_string())),
        _ => serde_json::from_str(text)
            .or_else(|_| toml::from_str(text))
            .map_err(|e: toml::de::Error| syntax(e.to_string())),
    }
}

/// `key=value`; the value is read as JSON when it parses, else as a string.
pub fn apply_override(tree: &mut Value, spec: &str) -> Result<(), ConfigError> {
    let bad = |reason: &str| ConfigError::Override {
        key: spec.into(),
        reason: reason.into(),
    };
    let (key, raw) = spec.split_once('=').ok_or_else(|| bad("expected KEY=VALUE"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(bad("empty key"));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.into()));
    let path: Vec<&str> = key.split('.').collect();

    match path.as_slice() {
        ["rho"] if tree.get("rho").is_none() => {
            let mut hit = false;
            for section in ["miner", "backtest"] {
                if let Some(Value::Object(m)) = tree.get_mut(section) {
                    m.insert("rho".into(), value.clone());
                    hit = true;
                }
            }
            if hit {
                Ok(())
            } else {
                Err(bad("no `miner` or `backtest` section"))
            }
        }
        ["miner", "power"] => {
            let powers = tree
                .get_mut("miner")
                .and_then(|m| m.get_mut("power_by_algorithm"))
                .and_then(Value::as_object_mut)
                .ok_or_else(|| bad("no `miner.power_by_algorithm`"))?;
            if powers.len() != 1 {
                return Err(bad("miner has several algorithms; set miner.power_by_algorithm.<id>"));
            }
            *powers.values_mut().next().expect("one entry") = value;
            Ok(())
        }
        _ => set_path(tree, &path, value).map_err(|r| bad(&r)),
    }
}

fn set_path(node: &mut Value, path: &[&str], value: Value) -> Result<(), String> {
    let (head, rest) = path.split_first().expect("non-empty path");
    let child = match node {
        Value::Object(map) => {
            if rest.is_empty() {
                map.insert((*head).into(), value);
                return Ok(());
            }
            map.entry(*head)
                .or_insert_with(|| Value::Object(Default::default()))
        }
        Value::Array(items) => {
            let idx = match head.parse::<usize>() {
                Ok(i) if i < items.len() => i,
                Ok(i) => return Err(format!("index {i} out of range")),
                Err(_) => items
                    .iter()
                    .position(|v| v.get("id").and_then(Value::as_str) == Some(head))
                    .ok_or_else(|| format!("no element with id `{head}`"))?,
            };
            if rest.is_empty() {
                items[idx] = value;
                return Ok(());
            }
            &mut items[idx]
        }
        _ => return Err(format!("`{head}` is not inside a table or list")),
    };
    set_path(child, rest, value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn tree() -> Value {
        json!({
            "currencies": [{"id": "BTC", "algorithm": "sha256d", "block_reward": 45441.0,
                            "block_time": 600.0, "total_hashrate": 4.233e19}],
            "pools": [{"id": "kano", "currency": "BTC", "hashrate": 4.8e16, "fee": 0.009}],
            "miner": {"power_by_algorithm": {"sha256d": 3e15}, "rho": 5e-5}
        })
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let mut t = tree();
        apply_override(&mut t, "rho=0").unwrap();
        apply_override(&mut t, "miner.power=125e12").unwrap();
        apply_override(&mut t, "pools.kano.fee=0.01").unwrap();
        apply_override(&mut t, "sweep.points=5").unwrap();
        let cfg = from_tree(t).unwrap();
        let m = cfg.miner.unwrap();
        assert_eq!(m.rho, 0.0);
        assert_eq!(m.power("sha256d"), Some(125e12));
        assert_eq!(cfg.pools[0].fee, 0.01);
        assert_eq!(cfg.sweep.points, 5);
    }

    #[test]
    fn bad_overrides_are_rejected() {
        let mut t = tree();
        assert!(apply_override(&mut t, "rho").is_err());
        assert!(apply_override(&mut t, "pools.nope.fee=1").is_err());
        assert!(apply_override(&mut t, "pools.7.fee=1").is_err());
    }

    #[test]
    fn field_errors_name_the_field() {
        let mut t = tree();
        t["pools"][0].as_object_mut().unwrap().remove("fee");
        match from_tree(t) {
            Err(ConfigError::Field { field, message }) => {
                assert_eq!(field, "pools[0]");
                assert!(message.contains("fee"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn quote_moves_against_the_currency() {
        let cfg = from_tree(tree()).unwrap();
        let inst = cfg.instance().unwrap();
        let s = ScenarioSection {
            rates: BTreeMap::new(),
            quote: Some(Quote {
                currency: "BTC".into(),
                reference: 0.034,
                value: 0.068,
            }),
        };
        assert_eq!(s.rates(&inst).unwrap()["BTC"], 0.5);
    }
}
