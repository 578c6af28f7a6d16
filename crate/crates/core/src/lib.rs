//! Optimal hash-power allocation for risk-averse proof-of-work miners.
//!
//! The crate is `no_std` and only needs `alloc`. It covers the whole
//! numerical side: validated catalogs of currencies, pools and miners, the
//! CARA expected-utility objectives, a COBYLA-family derivative-free solver,
//! the allocator that ties them together, and a day-by-day backtester that
//! works on in-memory market series. File formats and the command line live
//! in the `hashmix` crate.

#![no_std]
// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod allocator;
pub mod backtest;
pub mod domain;
mod math;
pub mod montecarlo;
pub mod reward;
pub mod solver;
pub mod utility;

pub use allocator::{AllocationReport, AllocatorError, SweepSeries};
pub use domain::{
    Allocation, CurrencySpec, DomainError, Instance, MarketDay, MinerProfile, PoolSpec,
    PowAlgorithm, RewardScheme,
};
pub use solver::{SolverConfig, SolverError, SolverResult, SolverStatus, StartStrategy};
pub use utility::{ObjectiveSpec, UtilityError, Variant};
