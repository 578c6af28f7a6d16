//! Monte-Carlo check of the closed-form CARA utility.
//!
//! Each payoff component is sampled as an independent Poisson block count
//! over one horizon; the sample mean of `-exp(-rho P)` is compared with the
//! product of per-component moment generating functions.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::domain::Allocation;
use crate::math;
use crate::utility::{ObjectiveSpec, PayoffComponent, UtilityError};

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub draws: u64,
    pub seed: u64,
    /// Sample mean of `-exp(-rho P)`.
    pub estimate: f64,
    pub std_error: f64,
    /// `-exp(-U / scale)` from the objective.
    pub closed_form: f64,
    /// `(estimate - closed_form) / std_error`; 0 when both agree exactly.
    pub z_score: f64,
    /// Objective value implied by the estimate.
    pub implied_utility: f64,
    pub utility: f64,
    /// Per-component MGF factor `exp(mean (e^{-rho w} - 1))`.
    pub factors: Vec<(String, f64)>,
}

impl MonteCarloReport {
    pub fn within(&self, sigmas: f64) -> bool {
        self.z_score.abs() <= sigmas
    }
}

pub fn check_utility(
    alloc: &Allocation,
    spec: &ObjectiveSpec,
    draws: u64,
    seed: u64,
) -> Result<MonteCarloReport, UtilityError> {
    if draws == 0 {
        return Err(UtilityError::ZeroDraws);
    }
    let utility = spec.utility(alloc)?;
    let dense = spec.to_dense(alloc)?;
    let (comps, fixed) = spec.payoff_components(&dense);
    let rho = spec.rho();
    let scale = spec.utility_scale();

    let factors: Vec<(String, f64)> = comps
        .iter()
        .map(|c| (c.label.clone(), math::exp(c.mean * libm::expm1(-rho * c.payout))))
        .collect();
    let closed_form = -math::exp(-utility / scale);

    let (estimate, std_error) = sample(&comps, fixed, rho, draws, seed);
    let z_score = if std_error > 0.0 {
        (estimate - closed_form) / std_error
    } else if estimate == closed_form {
        0.0
    } else {
        f64::INFINITY
    };
    let implied_utility = -scale * math::ln(-estimate);

    Ok(MonteCarloReport {
        draws,
        seed,
        estimate,
        std_error,
        closed_form,
        z_score,
        implied_utility,
        utility,
        factors,
    })
}

fn sample(comps: &[PayoffComponent], fixed: f64, rho: f64, draws: u64, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dists: Vec<(Poisson<f64>, f64)> = comps
        .iter()
        .map(|c| (Poisson::new(c.mean).expect("positive mean"), c.payout))
        .collect();
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..draws {
        let mut payoff = fixed;
        for (d, w) in &dists {
            payoff += d.sample(&mut rng) * w;
        }
        let v = -math::exp(-rho * payoff);
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let std_error = if draws > 1 {
        math::sqrt(m2 / (draws - 1) as f64 / draws as f64)
    } else {
        0.0
    };
    (mean, std_error)
}
