//! Derivative-free maximization under inequality constraints.
//!
//! The allocator only needs `maximize f(x)` subject to `c_i(x) >= 0`, with
//! a handful of variables and linear constraints. Because the objectives are
//! concave a single local run is enough in principle; [`vertex_sweep_maximize`]
//! adds restarts from the simplex vertices to guard against flat regions.

mod cobyla;

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("objective returned a non-finite value at evaluation {evaluation}")]
    NonFiniteObjective { evaluation: usize },
    #[error("constraints returned a non-finite value at evaluation {evaluation}")]
    NonFiniteConstraint { evaluation: usize },
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverStatus {
    /// The trust radius reached `rho_end`.
    Converged,
    /// The evaluation budget ran out first.
    MaxEvals,
    /// The simplex degenerated; the best point so far is returned.
    Stalled,
}

impl SolverStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolverStatus::Converged => "CONVERGED",
            SolverStatus::MaxEvals => "MAX_EVALS",
            SolverStatus::Stalled => "STALLED",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StartStrategy {
    /// Every coordinate at `1 / (n + 1)`.
    EqualSplit,
    /// Restart from the origin, each unit vector and the equal split; keep the best.
    VertexSweep,
    User(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rho_begin: f64,
    pub rho_end: f64,
    pub max_evals: usize,
    pub start: StartStrategy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho_begin: 0.25,
            rho_end: 1e-10,
            max_evals: 10_000,
            start: StartStrategy::VertexSweep,
        }
    }
}

impl SolverConfig {
    fn validate(&self, n: usize) -> Result<(), SolverError> {
        if !(self.rho_begin.is_finite() && self.rho_begin > 0.0) {
            return Err(SolverError::InvalidConfig("rho_begin must be positive"));
        }
        if !(self.rho_end > 0.0 && self.rho_end <= self.rho_begin) {
            return Err(SolverError::InvalidConfig("rho_end must lie in (0, rho_begin]"));
        }
        if self.max_evals < n + 2 {
            return Err(SolverError::InvalidConfig("max_evals must be at least n + 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub constraints: Vec<f64>,
    pub status: SolverStatus,
    /// All constraints at `x` are `>= -rho_end`.
    pub feasible: bool,
    pub evaluations: usize,
    /// Trust radius after every reduction, starting with `rho_begin`.
    pub radius_history: Vec<f64>,
}

/// Maximizes `objective` subject to `constraints(x)[i] >= 0` over `n` variables.
pub fn maximize<F, C>(
    objective: F,
    constraints: C,
    n: usize,
    config: &SolverConfig,
) -> Result<SolverResult, SolverError>
where
    F: Fn(&[f64]) -> f64,
    C: Fn(&[f64]) -> Vec<f64>,
{
    config.validate(n)?;
    let x0 = match &config.start {
        StartStrategy::VertexSweep => {
            return vertex_sweep_maximize(objective, constraints, n, config)
        }
        StartStrategy::EqualSplit => equal_split(n),
        StartStrategy::User(x) => {
            if x.len() != n {
                return Err(SolverError::DimensionMismatch {
                    expected: n,
                    got: x.len(),
                });
            }
            x.clone()
        }
    };
    run(&objective, &constraints, &x0, config)
}

/// Runs from the origin, each unit vector and the equal split, returning
/// the best feasible result (highest objective; earliest start on ties).
/// Evaluations are summed over all runs.
pub fn vertex_sweep_maximize<F, C>(
    objective: F,
    constraints: C,
    n: usize,
    config: &SolverConfig,
) -> Result<SolverResult, SolverError>
where
    F: Fn(&[f64]) -> f64,
    C: Fn(&[f64]) -> Vec<f64>,
{
    config.validate(n)?;
    let mut starts = Vec::with_capacity(n + 2);
    starts.push(vec![0.0; n]);
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        starts.push(e);
    }
    starts.push(equal_split(n));

    let mut best: Option<SolverResult> = None;
    let mut evaluations = 0;
    for x0 in &starts {
        let r = run(&objective, &constraints, x0, config)?;
        evaluations += r.evaluations;
        let better = match &best {
            None => true,
            Some(b) => (r.feasible && !b.feasible) || (r.feasible == b.feasible && r.objective > b.objective),
        };
        if better {
            best = Some(r);
        }
    }
    let mut best = best.expect("at least one start");
    best.evaluations = evaluations;
    Ok(best)
}

fn equal_split(n: usize) -> Vec<f64> {
    vec![1.0 / (n as f64 + 1.0); n]
}

fn run<F, C>(
    objective: &F,
    constraints: &C,
    x0: &[f64],
    config: &SolverConfig,
) -> Result<SolverResult, SolverError>
where
    F: Fn(&[f64]) -> f64,
    C: Fn(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let m = constraints(x0).len();
    let mut evaluation = 0;
    let calcfc = |x: &[f64], c: &mut [f64]| -> Result<f64, SolverError> {
        evaluation += 1;
        let f = objective(x);
        if !f.is_finite() {
            return Err(SolverError::NonFiniteObjective { evaluation });
        }
        let values = constraints(x);
        if values.len() != m {
            return Err(SolverError::DimensionMismatch {
                expected: m,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFiniteConstraint { evaluation });
        }
        c.copy_from_slice(&values);
        Ok(-f)
    };

    let out = if n == 0 {
        let mut c = vec![0.0; m];
        let f = {
            let mut calc = calcfc;
            calc(x0, &mut c)?
        };
        cobyla::Outcome {
            x: Vec::new(),
            f,
            resmax: c.iter().fold(0.0f64, |r, &v| r.max(-v)),
            evaluations: 1,
            status: SolverStatus::Converged,
            radius_history: vec![config.rho_begin],
        }
    } else {
        cobyla::minimize(
            calcfc,
            n,
            m,
            x0,
            config.rho_begin,
            config.rho_end,
            config.max_evals,
            config.rho_end,
        )?
    };

    let constraints_at = constraints(&out.x);
    Ok(SolverResult {
        feasible: out.resmax <= config.rho_end,
        objective: -out.f,
        constraints: constraints_at,
        x: out.x,
        status: out.status,
        evaluations: out.evaluations,
        radius_history: out.radius_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(start: StartStrategy) -> SolverConfig {
        SolverConfig {
            rho_begin: 0.5,
            rho_end: 1e-9,
            max_evals: 5000,
            start,
        }
    }

    #[test]
    fn unconstrained_quadratic() {
        let r = maximize(
            |x| -((x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2)),
            |_| Vec::new(),
            2,
            &cfg(StartStrategy::EqualSplit),
        )
        .unwrap();
        assert_eq!(r.status, SolverStatus::Converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] + 2.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn linear_program_on_simplex() {
        // max 2x + 3y s.t. x + y <= 1, x, y >= 0.
        let r = maximize(
            |x| 2.0 * x[0] + 3.0 * x[1],
            |x| vec![1.0 - x[0] - x[1], x[0], x[1]],
            2,
            &cfg(StartStrategy::EqualSplit),
        )
        .unwrap();
        assert!(r.feasible);
        assert!((r.x[0]).abs() < 1e-7 && (r.x[1] - 1.0).abs() < 1e-7, "{:?}", r.x);
        assert!((r.objective - 3.0).abs() < 1e-7);
    }

    #[test]
    fn disk_constraint() {
        // max x + y on the unit disk.
        let r = maximize(
            |x| x[0] + x[1],
            |x| vec![1.0 - x[0] * x[0] - x[1] * x[1]],
            2,
            &cfg(StartStrategy::User(vec![0.0, 0.0])),
        )
        .unwrap();
        let h = core::f64::consts::FRAC_1_SQRT_2;
        assert!((r.x[0] - h).abs() < 1e-5 && (r.x[1] - h).abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn radius_never_grows() {
        let r = maximize(
            |x| -(x[0] - 0.3).powi(2) - (x[1] - 0.1).powi(2) - x[2].powi(2),
            |x| vec![1.0 - x[0] - x[1] - x[2], x[0], x[1], x[2]],
            3,
            &cfg(StartStrategy::EqualSplit),
        )
        .unwrap();
        assert!(r.radius_history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*r.radius_history.last().unwrap(), 1e-9);
    }

    #[test]
    fn deterministic() {
        let f = |x: &[f64]| -(x[0] - 0.2).powi(2) + x[1].sin();
        let c = |x: &[f64]| vec![1.0 - x[0] - x[1], x[0], x[1]];
        let a = maximize(f, c, 2, &SolverConfig::default()).unwrap();
        let b = maximize(f, c, 2, &SolverConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_finds_the_better_corner() {
        // Bimodal on [0,1]: a small bump near 0.1 and the global peak at 0.9.
        let f = |x: &[f64]| {
            0.5 * (-((x[0] - 0.1) / 0.05).powi(2)).exp() + (-((x[0] - 0.9) / 0.05).powi(2)).exp()
        };
        let c = |x: &[f64]| vec![1.0 - x[0], x[0]];
        let r = vertex_sweep_maximize(f, c, 1, &SolverConfig::default()).unwrap();
        assert!((r.x[0] - 0.9).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn nan_objective_aborts() {
        let r = maximize(
            |x| if x[0] > 0.3 { f64::NAN } else { x[0] },
            |x| vec![1.0 - x[0], x[0]],
            1,
            &cfg(StartStrategy::EqualSplit),
        );
        assert!(matches!(r, Err(SolverError::NonFiniteObjective { .. })));
    }

    #[test]
    fn changing_constraint_count_is_rejected() {
        let r = maximize(
            |x| x[0],
            |x| if x[0] > 0.6 { vec![1.0] } else { vec![1.0, 2.0] },
            1,
            &cfg(StartStrategy::EqualSplit),
        );
        assert!(matches!(r, Err(SolverError::DimensionMismatch { .. })));
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let r = maximize(
            |x| -(x[0] - 0.7).powi(2) - (x[1] - 0.1).powi(2),
            |x| vec![1.0 - x[0] - x[1], x[0], x[1]],
            2,
            &SolverConfig {
                max_evals: 5,
                ..cfg(StartStrategy::EqualSplit)
            },
        )
        .unwrap();
        assert_eq!(r.status, SolverStatus::MaxEvals);
        assert_eq!(r.evaluations, 5);
    }

    #[test]
    fn bad_config_is_rejected() {
        let r = maximize(
            |x| x[0],
            |_| Vec::new(),
            1,
            &SolverConfig {
                rho_end: 1.0,
                rho_begin: 0.1,
                ..SolverConfig::default()
            },
        );
        assert!(matches!(r, Err(SolverError::InvalidConfig(_))));
    }

    #[test]
    fn eval_budget_must_cover_a_simplex() {
        let run = |max_evals| {
            maximize(
                |x| x[0] + x[1],
                |x| vec![1.0 - x[0] - x[1]],
                2,
                &SolverConfig {
                    max_evals,
                    ..cfg(StartStrategy::EqualSplit)
                },
            )
        };
        assert!(matches!(run(3), Err(SolverError::InvalidConfig(_))));
        assert!(run(4).is_ok());
    }
}
