//! Per-block PPLNS payouts in pools that also sell PPS contracts.
//!
//! `pps_fraction` (z) is the share of the pool's power on the PPLNS
//! contract. The optimizer treats dual-scheme pools under strategy 1/2;
//! strategy 3 is only exposed here and through the `payout` command.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum RewardError {
    #[error("pool hashrate must be positive")]
    ZeroPoolHashrate,
    #[error("PPLNS fraction must be positive for strategy 3")]
    ZeroPplnsFraction,
    #[error("PPS bucket deficit: {paid} paid out since the last block exceeds the block reward {reward}")]
    BucketDeficit { paid: f64, reward: f64 },
    #[error("invalid payout context: {0}")]
    InvalidContext(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSchemeContext {
    /// Block reward R, USD.
    pub block_reward: f64,
    /// Share z of the pool's hash rate on the PPLNS contract.
    pub pps_fraction: f64,
    /// Pool hash rate, hashes/second.
    pub pool_hashrate: f64,
    /// The miner's PPLNS hash rate, hashes/second.
    pub miner_rate: f64,
    /// PPS payouts since the last block, USD (strategy 3 only).
    pub pps_paid_since_last_block: f64,
}

impl DualSchemeContext {
    fn check(&self) -> Result<(), RewardError> {
        if !(self.pool_hashrate > 0.0) {
            return Err(RewardError::ZeroPoolHashrate);
        }
        if !(self.miner_rate >= 0.0) {
            return Err(RewardError::InvalidContext("miner rate must be non-negative"));
        }
        if !(self.block_reward >= 0.0) {
            return Err(RewardError::InvalidContext("block reward must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.pps_fraction) {
            return Err(RewardError::InvalidContext("pps_fraction must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Manager splits R into a PPS part `(1-z)R` and a PPLNS part `zR`; the
/// miner's share of the PPLNS slice is `lambda / (z Lambda)`, so z cancels.
pub fn strategy1_reward(ctx: &DualSchemeContext) -> Result<f64, RewardError> {
    ctx.check()?;
    Ok(ctx.block_reward * (ctx.miner_rate / ctx.pool_hashrate))
}

/// PPLNS miners are paid against the whole pool's hash rate; the remainder
/// goes to the PPS bucket.
pub fn strategy2_reward(ctx: &DualSchemeContext) -> Result<f64, RewardError> {
    ctx.check()?;
    Ok(ctx.block_reward * (ctx.miner_rate / ctx.pool_hashrate))
}

/// The PPS bucket is refilled first; PPLNS miners split what is left.
pub fn strategy3_reward(ctx: &DualSchemeContext) -> Result<f64, RewardError> {
    ctx.check()?;
    if ctx.pps_fraction == 0.0 {
        return Err(RewardError::ZeroPplnsFraction);
    }
    if !(ctx.pps_paid_since_last_block >= 0.0) {
        return Err(RewardError::InvalidContext("PPS payouts must be non-negative"));
    }
    if ctx.pps_paid_since_last_block > ctx.block_reward {
        return Err(RewardError::BucketDeficit {
            paid: ctx.pps_paid_since_last_block,
            reward: ctx.block_reward,
        });
    }
    let pplns_pot = ctx.block_reward - ctx.pps_paid_since_last_block;
    Ok(pplns_pot * (ctx.miner_rate / (ctx.pps_fraction * ctx.pool_hashrate)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx(r: f64, z: f64, pool: f64, miner: f64, paid: f64) -> DualSchemeContext {
        DualSchemeContext {
            block_reward: r,
            pps_fraction: z,
            pool_hashrate: pool,
            miner_rate: miner,
            pps_paid_since_last_block: paid,
        }
    }

    #[test]
    fn strategy1_examples() {
        assert_eq!(strategy1_reward(&ctx(100.0, 0.5, 100.0, 10.0, 0.0)).unwrap(), 10.0);
        assert_eq!(strategy1_reward(&ctx(100.0, 0.5, 100.0, 0.0, 0.0)).unwrap(), 0.0);
        assert_eq!(
            strategy1_reward(&ctx(45441.0, 0.7, 3e15, 3e15, 0.0)).unwrap(),
            45441.0
        );
        assert_eq!(
            strategy1_reward(&ctx(100.0, 0.5, 0.0, 1.0, 0.0)),
            Err(RewardError::ZeroPoolHashrate)
        );
    }

    #[test]
    fn strategy2_examples() {
        assert_eq!(strategy2_reward(&ctx(100.0, 0.5, 100.0, 25.0, 0.0)).unwrap(), 25.0);
        assert_eq!(strategy2_reward(&ctx(100.0, 0.3, 100.0, 0.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn strategy3_examples() {
        assert_eq!(strategy3_reward(&ctx(100.0, 0.5, 100.0, 10.0, 20.0)).unwrap(), 16.0);
        let c = ctx(100.0, 1.0, 100.0, 10.0, 0.0);
        assert_eq!(strategy3_reward(&c).unwrap(), strategy1_reward(&c).unwrap());
        assert_eq!(strategy3_reward(&ctx(100.0, 0.5, 100.0, 10.0, 100.0)).unwrap(), 0.0);
        assert!(matches!(
            strategy3_reward(&ctx(100.0, 0.5, 100.0, 10.0, 120.0)),
            Err(RewardError::BucketDeficit { .. })
        ));
        assert_eq!(
            strategy3_reward(&ctx(100.0, 0.0, 100.0, 10.0, 0.0)),
            Err(RewardError::ZeroPplnsFraction)
        );
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }

    proptest! {
        #[test]
        fn strategies_one_and_two_agree(
            r in 0.0..1e6f64,
            z in 0.01..=1.0f64,
            pool in 1.0..1e18f64,
            share in 0.0..=1.0f64,
        ) {
            let c = ctx(r, z, pool, share * z * pool, 0.0);
            let a = strategy1_reward(&c).unwrap();
            let b = strategy2_reward(&c).unwrap();
            prop_assert!(close(a, b, 1e-12));
        }

        #[test]
        fn strategy3_without_bucket_matches_strategy1(
            r in 0.0..1e6f64,
            pool in 1.0..1e18f64,
            share in 0.0..=1.0f64,
        ) {
            let c = ctx(r, 1.0, pool, share * pool, 0.0);
            prop_assert!(close(strategy3_reward(&c).unwrap(), strategy1_reward(&c).unwrap(), 1e-12));
        }

        #[test]
        fn homogeneity(
            r in 1.0..1e6f64,
            z in 0.01..=1.0f64,
            pool in 1.0..1e12f64,
            share in 0.0..=1.0f64,
            paid_frac in 0.0..0.9f64,
            k in 1e-3..1e3f64,
        ) {
            let base = ctx(r, z, pool, share * z * pool, paid_frac * r);
            let mut hashes = base;
            hashes.pool_hashrate *= k;
            hashes.miner_rate *= k;
            let mut money = base;
            money.block_reward *= k;
            money.pps_paid_since_last_block *= k;

            prop_assert!(close(strategy1_reward(&hashes).unwrap(), strategy1_reward(&base).unwrap(), 1e-12));
            prop_assert!(close(strategy3_reward(&hashes).unwrap(), strategy3_reward(&base).unwrap(), 1e-12));
            prop_assert!(close(strategy1_reward(&money).unwrap(), k * strategy1_reward(&base).unwrap(), 1e-12));
            prop_assert!(close(strategy3_reward(&money).unwrap(), k * strategy3_reward(&base).unwrap(), 1e-9));
        }
    }
}
