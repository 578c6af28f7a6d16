//! CARA expected-utility objectives and expected payoffs.
//!
//! Every objective is the exponent of the miner's expected CARA utility,
//! `E[-exp(-rho P)] = -exp(-U / scale)`, so maximizing `U` maximizes expected
//! utility. Each pool contributes an independent Poisson block count and the
//! Poisson moment generating function turns each into one additive term.
//!
//! Terms of the form `1 - e^{-x}` go through `expm1`, and every exponent is
//! built as `rho * R * (1 - f) * ratio` with the hash-rate ratio taken first.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Allocation, Instance, RewardScheme};
use crate::math;

/// Allowed budget overshoot, relative to the budget.
pub const RESIDUAL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UtilityError {
    #[error("allocation is infeasible: residual {residual} for `{constraint}`")]
    InfeasibleAllocation { constraint: String, residual: f64 },
    #[error("a PPS pool must be selected for this model")]
    MissingPpsPool,
    #[error("instance does not fit the {variant:?} model: {reason}")]
    VariantMismatch { variant: Variant, reason: &'static str },
    #[error("allocation references `{0}`, which is not a decision variable of this model")]
    UnknownEntry(String),
    #[error("Monte-Carlo estimate needs at least one draw")]
    ZeroDraws,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    /// One currency, PPLNS-like pools plus solo.
    SinglePplns,
    /// As above plus the cheapest PPS pool.
    SingleWithPps,
    /// Several currencies sharing one algorithm, explicit solo per currency.
    MultiCurrency,
    /// `MultiCurrency` with average transaction fees added to the reward.
    MultiCurrencyTxFees,
    /// Currencies over several algorithms; budgets are normalized per algorithm.
    MultiPow,
}

impl Variant {
    pub fn is_single(self) -> bool {
        matches!(self, Variant::SinglePplns | Variant::SingleWithPps)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::SinglePplns => "SINGLE_PPLNS",
            Variant::SingleWithPps => "SINGLE_WITH_PPS",
            Variant::MultiCurrency => "MULTI_CURRENCY",
            Variant::MultiCurrencyTxFees => "MULTI_CURRENCY_TXFEES",
            Variant::MultiPow => "MULTI_POW",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum VarKind {
    Pool(usize),
    Solo(usize),
    Pps(usize),
}

/// One decision variable with everything its objective term needs.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Var {
    pub kind: VarKind,
    /// Miner power of the variable's algorithm.
    pub cap: f64,
    pub currency: usize,
}

/// An objective bound to a validated instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    variant: Variant,
    instance: Instance,
    pps_pool: Option<String>,
    vars: Vec<Var>,
}

impl ObjectiveSpec {
    pub fn new(
        variant: Variant,
        instance: Instance,
        pps_pool: Option<String>,
    ) -> Result<Self, UtilityError> {
        let mismatch = |reason| UtilityError::VariantMismatch { variant, reason };
        let currencies = instance.currencies();
        let pools = instance.pools();
        let algorithms = instance.algorithms();

        if variant.is_single() && currencies.len() != 1 {
            return Err(mismatch("requires exactly one currency"));
        }
        match variant {
            Variant::MultiCurrency | Variant::MultiCurrencyTxFees if algorithms.len() != 1 => {
                return Err(mismatch("currencies must share one algorithm"));
            }
            Variant::MultiPow if algorithms.len() < 2 => {
                return Err(mismatch("requires at least two algorithms"));
            }
            _ => {}
        }

        let pps_index = match (variant, &pps_pool) {
            (Variant::SingleWithPps, None) => return Err(UtilityError::MissingPpsPool),
            (Variant::SingleWithPps, Some(id)) => {
                let idx = pools
                    .iter()
                    .position(|p| &p.id == id)
                    .ok_or_else(|| UtilityError::UnknownEntry(id.clone()))?;
                if pools[idx].scheme != RewardScheme::Pps {
                    return Err(mismatch("selected PPS pool does not use PPS"));
                }
                Some(idx)
            }
            (_, Some(_)) => return Err(mismatch("only SINGLE_WITH_PPS takes a PPS pool")),
            (_, None) => None,
        };
        if variant != Variant::SingleWithPps && pools.iter().any(|p| p.scheme == RewardScheme::Pps)
        {
            return Err(mismatch("PPS pools are only supported by SINGLE_WITH_PPS"));
        }

        let cap_of = |ci: usize| {
            instance
                .miner()
                .power(&currencies[ci].algorithm)
                .expect("validated instance")
        };
        let mut vars = Vec::new();
        for (i, p) in pools.iter().enumerate() {
            if p.scheme == RewardScheme::Pps {
                continue;
            }
            let ci = instance.currency_index(&p.currency).expect("validated instance");
            vars.push(Var {
                kind: VarKind::Pool(i),
                cap: cap_of(ci),
                currency: ci,
            });
        }
        if let Some(i) = pps_index {
            vars.push(Var {
                kind: VarKind::Pps(i),
                cap: cap_of(0),
                currency: 0,
            });
        }
        if !variant.is_single() {
            for ci in 0..currencies.len() {
                vars.push(Var {
                    kind: VarKind::Solo(ci),
                    cap: cap_of(ci),
                    currency: ci,
                });
            }
        }

        Ok(Self {
            variant,
            instance,
            pps_pool,
            vars,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn pps_pool(&self) -> Option<&str> {
        self.pps_pool.as_deref()
    }

    pub fn rho(&self) -> f64 {
        self.instance.miner().rho
    }

    pub(crate) fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Number of decision variables.
    pub fn dimension(&self) -> usize {
        self.vars.len()
    }

    /// Human-readable label per decision variable, e.g. `pool:slush`, `solo:BTC`, `pps:f2pool`.
    pub fn labels(&self) -> Vec<String> {
        self.vars.iter().map(|v| self.label(v)).collect()
    }

    fn label(&self, v: &Var) -> String {
        let mut s = String::new();
        match v.kind {
            VarKind::Pool(i) => {
                s.push_str("pool:");
                s.push_str(&self.instance.pools()[i].id);
            }
            VarKind::Pps(i) => {
                s.push_str("pps:");
                s.push_str(&self.instance.pools()[i].id);
            }
            VarKind::Solo(c) => {
                s.push_str("solo:");
                s.push_str(&self.instance.currencies()[c].id);
            }
        }
        s
    }

    fn include_tx_fees(&self) -> bool {
        self.variant == Variant::MultiCurrencyTxFees
    }

    /// Single-currency solo power: whatever the decision variables leave over.
    fn implicit_solo(&self, lambdas: &[f64]) -> f64 {
        let cap = self.vars.first().map(|v| v.cap).unwrap_or_else(|| {
            self.instance
                .power_for_currency(&self.instance.currencies()[0].id)
                .unwrap_or(0.0)
        });
        cap - lambdas.iter().sum::<f64>()
    }

    /// Allocation in hashes/second → dense vector in variable order.
    pub(crate) fn to_dense(&self, alloc: &Allocation) -> Result<Vec<f64>, UtilityError> {
        let mut out = vec![0.0; self.vars.len()];
        let pools = self.instance.pools();
        for (id, &v) in &alloc.pool_alloc {
            let idx = self
                .vars
                .iter()
                .position(|var| matches!(var.kind, VarKind::Pool(i) if pools[i].id == *id))
                .ok_or_else(|| UtilityError::UnknownEntry(id.clone()))?;
            out[idx] = v;
        }
        if !self.variant.is_single() {
            let currencies = self.instance.currencies();
            for (id, &v) in &alloc.solo_alloc {
                let idx = self
                    .vars
                    .iter()
                    .position(|var| {
                        matches!(var.kind, VarKind::Solo(c) if currencies[c].id == *id)
                    })
                    .ok_or_else(|| UtilityError::UnknownEntry(id.clone()))?;
                out[idx] = v;
            }
        }
        match self.vars.iter().position(|v| matches!(v.kind, VarKind::Pps(_))) {
            Some(idx) => out[idx] = alloc.pps_alloc,
            None if alloc.pps_alloc != 0.0 => {
                return Err(UtilityError::UnknownEntry(String::from("pps")))
            }
            None => {}
        }
        Ok(out)
    }

    /// Dense vector → allocation. Single-currency models get their solo
    /// remainder filled in.
    pub(crate) fn allocation_of(&self, lambdas: &[f64]) -> Allocation {
        let mut alloc = Allocation::default();
        for (v, &x) in self.vars.iter().zip(lambdas) {
            match v.kind {
                VarKind::Pool(i) => {
                    alloc
                        .pool_alloc
                        .insert(self.instance.pools()[i].id.clone(), x);
                }
                VarKind::Solo(c) => {
                    alloc
                        .solo_alloc
                        .insert(self.instance.currencies()[c].id.clone(), x);
                }
                VarKind::Pps(_) => alloc.pps_alloc = x,
            }
        }
        if self.variant.is_single() {
            alloc.solo_alloc.insert(
                self.instance.currencies()[0].id.clone(),
                self.implicit_solo(lambdas),
            );
        }
        alloc
    }

    /// Objective value for a dense vector of hash rates (original units).
    pub(crate) fn evaluate_dense(&self, lambdas: &[f64]) -> f64 {
        let rho = self.rho();
        let pools = self.instance.pools();
        let currencies = self.instance.currencies();
        let tx = self.include_tx_fees();

        if self.variant.is_single() {
            let reward = currencies[0].block_reward;
            let mut total = 0.0;
            for (v, &lambda) in self.vars.iter().zip(lambdas) {
                match v.kind {
                    VarKind::Pool(i) => {
                        let p = &pools[i];
                        total += pool_term(lambda, p.hashrate, rho, reward, p.fee);
                    }
                    VarKind::Pps(i) => {
                        total += lambda * (1.0 - pools[i].fee) * rho * reward;
                    }
                    VarKind::Solo(_) => unreachable!("single-currency solo is implicit"),
                }
            }
            let solo = self.implicit_solo(lambdas);
            return total + solo * math::one_minus_exp_neg(rho * reward);
        }

        let mut total = 0.0;
        for (v, &lambda) in self.vars.iter().zip(lambdas) {
            let c = &currencies[v.currency];
            let norm = c.block_time * c.total_hashrate;
            let term = match v.kind {
                VarKind::Pool(i) => {
                    let p = &pools[i];
                    let reward = if tx && p.pays_tx_fees {
                        c.block_reward + c.avg_tx_fee
                    } else {
                        c.block_reward
                    };
                    pool_term(lambda, p.hashrate, rho, reward, p.fee)
                }
                VarKind::Solo(_) => {
                    let reward = if tx {
                        c.block_reward + c.avg_tx_fee
                    } else {
                        c.block_reward
                    };
                    lambda * math::one_minus_exp_neg(rho * reward)
                }
                VarKind::Pps(_) => unreachable!("PPS is single-currency only"),
            };
            total += term / norm;
        }
        total
    }

    /// Residuals in original units: budget first, then one per variable.
    /// Multi-algorithm budgets are the dimensionless normalized sum.
    pub(crate) fn residuals_dense(&self, lambdas: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(lambdas.len() + 1);
        if self.variant == Variant::MultiPow {
            let load: f64 = self.vars.iter().zip(lambdas).map(|(v, &l)| l / v.cap).sum();
            out.push(1.0 - load);
        } else if self.variant.is_single() {
            out.push(self.implicit_solo(lambdas));
        } else {
            let cap = self.vars[0].cap;
            out.push(cap - lambdas.iter().sum::<f64>());
        }
        out.extend_from_slice(lambdas);
        out
    }

    /// Budget magnitude that residual tolerances are measured against.
    fn budget_scale(&self) -> f64 {
        if self.variant == Variant::MultiPow {
            1.0
        } else {
            self.vars.first().map(|v| v.cap).unwrap_or(1.0)
        }
    }

    fn check_dense(&self, lambdas: &[f64]) -> Result<(), UtilityError> {
        let tol = RESIDUAL_TOLERANCE * self.budget_scale();
        let residuals = self.residuals_dense(lambdas);
        for (i, &r) in residuals.iter().enumerate() {
            let cap_tol = if i == 0 { tol } else { 0.0 };
            if !(r >= -cap_tol) {
                let constraint = if i == 0 {
                    String::from("budget")
                } else {
                    self.label(&self.vars[i - 1])
                };
                return Err(UtilityError::InfeasibleAllocation {
                    constraint,
                    residual: r,
                });
            }
        }
        Ok(())
    }

    /// Checked evaluation of any variant.
    pub fn utility(&self, alloc: &Allocation) -> Result<f64, UtilityError> {
        let dense = self.to_dense(alloc)?;
        self.check_dense(&dense)?;
        Ok(self.evaluate_dense(&dense))
    }

    /// Time span the expected payoff and the Monte-Carlo draw refer to:
    /// one block of the fastest currency.
    pub fn horizon(&self) -> f64 {
        self.instance
            .currencies()
            .iter()
            .map(|c| c.block_time)
            .fold(f64::INFINITY, f64::min)
    }

    /// Poisson components of the payoff over [`Self::horizon`], plus the
    /// deterministic PPS income.
    pub(crate) fn payoff_components(&self, lambdas: &[f64]) -> (Vec<PayoffComponent>, f64) {
        let pools = self.instance.pools();
        let currencies = self.instance.currencies();
        let tx = self.include_tx_fees();
        let horizon = self.horizon();
        let mut comps = Vec::new();
        let mut fixed = 0.0;

        let mut push = |label: String, mean: f64, payout: f64| {
            if mean > 0.0 {
                comps.push(PayoffComponent {
                    label,
                    mean,
                    payout,
                });
            }
        };

        for (v, &lambda) in self.vars.iter().zip(lambdas) {
            let c = &currencies[v.currency];
            let blocks = horizon / c.block_time;
            match v.kind {
                VarKind::Pool(i) => {
                    let p = &pools[i];
                    if lambda <= 0.0 {
                        continue;
                    }
                    let reward = if tx && p.pays_tx_fees {
                        c.block_reward + c.avg_tx_fee
                    } else {
                        c.block_reward
                    };
                    let share = lambda / (lambda + p.hashrate);
                    push(
                        self.label(v),
                        blocks * (lambda + p.hashrate) / c.total_hashrate,
                        share * (1.0 - p.fee) * reward,
                    );
                }
                VarKind::Solo(_) => {
                    let reward = if tx {
                        c.block_reward + c.avg_tx_fee
                    } else {
                        c.block_reward
                    };
                    push(self.label(v), blocks * lambda / c.total_hashrate, reward);
                }
                VarKind::Pps(i) => {
                    fixed += blocks * c.block_reward * lambda * (1.0 - pools[i].fee)
                        / c.total_hashrate;
                }
            }
        }
        if self.variant.is_single() {
            let c = &currencies[0];
            let solo = self.implicit_solo(lambdas);
            let mut label = String::from("solo:");
            label.push_str(&c.id);
            push(label, solo / c.total_hashrate, c.block_reward);
        }
        (comps, fixed)
    }

    /// Conversion between the objective and the exponent of expected
    /// utility over one horizon: `E[-e^{-rho P}] = -exp(-U / utility_scale)`.
    pub fn utility_scale(&self) -> f64 {
        if self.variant.is_single() {
            self.instance.currencies()[0].total_hashrate
        } else {
            1.0 / self.horizon()
        }
    }
}

/// One independent Poisson block source: `mean` blocks over the horizon,
/// each paying `payout` USD to the miner.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffComponent {
    pub label: String,
    pub mean: f64,
    pub payout: f64,
}

/// `(λ+Λ)(1 - e^{-ρR(1-f)·λ/(λ+Λ)})`, defined as 0 at λ = 0.
pub(crate) fn pool_term(lambda: f64, pool: f64, rho: f64, reward: f64, fee: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let size = lambda + pool;
    let ratio = lambda / size;
    size * math::one_minus_exp_neg(rho * reward * (1.0 - fee) * ratio)
}

fn expect_variant(spec: &ObjectiveSpec, ok: &[Variant]) -> Result<(), UtilityError> {
    if ok.contains(&spec.variant) {
        Ok(())
    } else {
        Err(UtilityError::VariantMismatch {
            variant: spec.variant,
            reason: "wrong objective for this model",
        })
    }
}

/// Single currency, PPLNS-like pools, solo remainder.
pub fn utility_single_pplns(alloc: &Allocation, spec: &ObjectiveSpec) -> Result<f64, UtilityError> {
    expect_variant(spec, &[Variant::SinglePplns])?;
    spec.utility(alloc)
}

/// Single currency with the cheapest PPS pool as an extra, risk-free option.
pub fn utility_single_with_pps(
    alloc: &Allocation,
    spec: &ObjectiveSpec,
) -> Result<f64, UtilityError> {
    if spec.variant == Variant::SingleWithPps && spec.pps_pool.is_none() {
        return Err(UtilityError::MissingPpsPool);
    }
    expect_variant(spec, &[Variant::SingleWithPps])?;
    spec.utility(alloc)
}

/// Multi-currency objective; `include_tx_fees` selects the fee-aware form.
pub fn utility_multi_currency(
    alloc: &Allocation,
    spec: &ObjectiveSpec,
    include_tx_fees: bool,
) -> Result<f64, UtilityError> {
    expect_variant(
        spec,
        &[
            Variant::MultiCurrency,
            Variant::MultiCurrencyTxFees,
            Variant::MultiPow,
        ],
    )?;
    let wanted = if include_tx_fees {
        Variant::MultiCurrencyTxFees
    } else if spec.variant == Variant::MultiPow {
        Variant::MultiPow
    } else {
        Variant::MultiCurrency
    };
    if wanted == spec.variant {
        return spec.utility(alloc);
    }
    let respec = ObjectiveSpec::new(wanted, spec.instance.clone(), None)?;
    respec.utility(alloc)
}

/// Expected USD payoff over [`ObjectiveSpec::horizon`].
pub fn expected_payoff(alloc: &Allocation, spec: &ObjectiveSpec) -> Result<f64, UtilityError> {
    let dense = spec.to_dense(alloc)?;
    spec.check_dense(&dense)?;
    Ok(expected_payoff_dense(spec, &dense))
}

pub(crate) fn expected_payoff_dense(spec: &ObjectiveSpec, lambdas: &[f64]) -> f64 {
    let (comps, fixed) = spec.payoff_components(lambdas);
    comps.iter().map(|c| c.mean * c.payout).sum::<f64>() + fixed
}

/// Signed residuals, `>= 0` meaning satisfied: the budget first, then one
/// non-negativity residual per decision variable. Entries that are not
/// decision variables of the model are ignored.
pub fn constraint_residuals(alloc: &Allocation, spec: &ObjectiveSpec) -> Vec<f64> {
    let mut dense = vec![0.0; spec.vars.len()];
    let pools = spec.instance.pools();
    let currencies = spec.instance.currencies();
    for (slot, v) in dense.iter_mut().zip(&spec.vars) {
        *slot = match v.kind {
            VarKind::Pool(i) => alloc.pool(&pools[i].id),
            VarKind::Solo(c) => alloc.solo(&currencies[c].id),
            VarKind::Pps(_) => alloc.pps_alloc,
        };
    }
    spec.residuals_dense(&dense)
}

/// Label of each residual returned by [`constraint_residuals`].
pub fn residual_labels(spec: &ObjectiveSpec) -> Vec<String> {
    let mut out = vec![String::from("budget")];
    out.extend(spec.labels().into_iter().map(|mut l| {
        l.insert_str(0, "nonneg:");
        l
    }));
    out
}

/// Everything on solo mining; multi-currency models pick the currency
/// (and algorithm) with the best expected reward per second.
pub fn full_solo(spec: &ObjectiveSpec) -> Allocation {
    let currencies = spec.instance.currencies();
    if spec.variant.is_single() {
        let zeros = vec![0.0; spec.vars.len()];
        return spec.allocation_of(&zeros);
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in spec.vars.iter().enumerate() {
        if let VarKind::Solo(c) = v.kind {
            let cur = &currencies[c];
            let rate = v.cap * cur.block_reward / (cur.block_time * cur.total_hashrate);
            if best.is_none_or(|(_, b)| rate > b) {
                best = Some((i, rate));
            }
        }
    }
    let mut dense = vec![0.0; spec.vars.len()];
    if let Some((i, _)) = best {
        dense[i] = spec.vars[i].cap;
    }
    spec.allocation_of(&dense)
}

/// Equal split of the budget over every option (pools, PPS and solo).
pub fn equal_split(spec: &ObjectiveSpec) -> Allocation {
    let n = spec.vars.len();
    let options = if spec.variant.is_single() { n + 1 } else { n };
    let dense: Vec<f64> = spec
        .vars
        .iter()
        .map(|v| v.cap / options as f64)
        .collect();
    spec.allocation_of(&dense)
}

/// Pretty labels used in tabular outputs.
pub fn column_names(spec: &ObjectiveSpec) -> Vec<String> {
    let mut cols: Vec<String> = Vec::new();
    for v in &spec.vars {
        match v.kind {
            VarKind::Pool(i) => cols.push(spec.instance.pools()[i].id.to_string()),
            VarKind::Pps(i) => {
                let mut s = String::from("pps_");
                s.push_str(&spec.instance.pools()[i].id);
                cols.push(s)
            }
            VarKind::Solo(c) => {
                let mut s = String::from("solo_");
                s.push_str(&spec.instance.currencies()[c].id);
                cols.push(s)
            }
        }
    }
    if spec.variant.is_single() {
        let mut s = String::from("solo_");
        s.push_str(&spec.instance.currencies()[0].id);
        cols.push(s);
    }
    cols
}
