//! Daily market history from CSV:
//! `date,exchange_rate,difficulty,coinbase_reward,total_blocks,<pool>...`.
//!
//! Every column after the fixed ones is a pool's daily block count. Empty
//! pool cells read as zero blocks.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use hashmix_core::backtest::{BacktestError, MarketSeries};
use hashmix_core::MarketDay;
use thiserror::Error;

pub const FIXED_COLUMNS: [&str; 5] = [
    "date",
    "exchange_rate",
    "difficulty",
    "coinbase_reward",
    "total_blocks",
];

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("cannot open market data {path}")]
    Open {
        path: String,
        source: std::io::Error,
    },
    #[error("market data line {line}: {message}")]
    ParseError { line: u64, message: String },
    #[error("market data has no `{0}` column")]
    MissingColumn(String),
    #[error("market data line {line}: date {date} does not follow {previous}")]
    NonMonotoneDates {
        line: u64,
        date: NaiveDate,
        previous: NaiveDate,
    },
    #[error(transparent)]
    Series(#[from] BacktestError),
}

pub fn load_market_data(path: &Path) -> Result<MarketSeries, MarketError> {
    let file = File::open(path).map_err(|source| MarketError::Open {
        path: path.display().to_string(),
        source,
    })?;
    let series = parse_market_data(file)?;
    for (from, to) in series.gaps() {
        log::warn!("market data has no rows between {from} and {to}");
    }
    Ok(series)
}

pub fn parse_market_data<R: Read>(reader: R) -> Result<MarketSeries, MarketError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| MarketError::ParseError {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let position = |name: &str| header.iter().position(|h| h == name);
    let mut fixed = [0usize; 5];
    for (slot, name) in fixed.iter_mut().zip(FIXED_COLUMNS) {
        *slot = position(name).ok_or_else(|| MarketError::MissingColumn(name.into()))?;
    }
    let pools: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| !FIXED_COLUMNS.contains(h))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut days: Vec<MarketDay> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| MarketError::ParseError {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |message: String| MarketError::ParseError { line, message };
        let cell = |i: usize| record.get(i).unwrap_or("");
        let number = |i: usize| -> Result<f64, MarketError> {
            cell(i)
                .parse::<f64>()
                .map_err(|e| err(format!("`{}`: {e}", header.get(i).unwrap_or("?"))))
        };
        let count = |i: usize| -> Result<u32, MarketError> {
            match cell(i) {
                "" => Ok(0),
                s => s
                    .parse::<u32>()
                    .map_err(|e| err(format!("`{}`: {e}", header.get(i).unwrap_or("?")))),
            }
        };

        let date = NaiveDate::parse_from_str(cell(fixed[0]), "%Y-%m-%d")
            .map_err(|e| err(format!("`date`: {e}")))?;
        if let Some(prev) = days.last() {
            if date <= prev.date {
                return Err(MarketError::NonMonotoneDates {
                    line,
                    date,
                    previous: prev.date,
                });
            }
        }
        let total_blocks = match cell(fixed[4]) {
            "" => Err(err("`total_blocks` is empty".into())),
            _ => count(fixed[4]),
        }?;
        let mut pool_blocks = BTreeMap::new();
        for (i, id) in &pools {
            pool_blocks.insert(id.clone(), count(*i)?);
        }
        let day = MarketDay {
            date,
            exchange_rate: number(fixed[1])?,
            difficulty: number(fixed[2])?,
            coinbase_reward: number(fixed[3])?,
            total_blocks,
            pool_blocks,
        };
        day.validate().map_err(|e| err(e.to_string()))?;
        days.push(day);
    }
    Ok(MarketSeries::new(
        pools.into_iter().map(|(_, id)| id).collect(),
        days,
    )?)
}
