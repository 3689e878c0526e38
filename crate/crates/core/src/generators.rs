//! Instance constructors: the two families on which the price-of-robustness
//! bounds are tight, and seeded random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Instance;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("delta must lie in (0, 1), got {0}")]
    Delta(f64),
    #[error("n = {n} must exceed kappa = {kappa}")]
    TooFewActions { n: usize, kappa: usize },
    #[error("random instances need n >= 1 and m >= 1")]
    Empty,
}

/// Parameters of the lower-bound family: `κ` and the decreasing sequence `γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightLbParams {
    pub delta: f64,
    pub n: usize,
    pub kappa: usize,
    /// `gamma[i - kappa]` is `γ_i` for `i` in `kappa..=2n+1`.
    gamma: Vec<f64>,
}

/// Smallest positive integer `i` with `√δ < (i - 1) / i`.
pub fn kappa(delta: f64) -> usize {
    let s = delta.sqrt();
    (1..)
        .find(|&i| s < (i - 1) as f64 / i as f64)
        .expect("sqrt(delta) < 1 for delta < 1")
}

impl TightLbParams {
    pub fn new(delta: f64, n: usize) -> Result<Self, GenError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(GenError::Delta(delta));
        }
        let kappa = kappa(delta);
        if n <= kappa {
            return Err(GenError::TooFewActions { n, kappa });
        }
        let gamma = (kappa..=2 * n + 1)
            .map(|i| {
                if i <= n {
                    i as f64 / (i - 1) as f64
                } else if i == n + 1 {
                    1.0
                } else if i <= 2 * n {
                    (2 * n + 1 - i) as f64 / (2 * n + 2 - i) as f64
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            delta,
            n,
            kappa,
            gamma,
        })
    }

    /// `γ_i` for 1-based `i`; undefined (None) below `κ` and above `2n + 1`.
    pub fn gamma(&self, i: usize) -> Option<f64> {
        i.checked_sub(self.kappa)
            .and_then(|k| self.gamma.get(k))
            .copied()
    }

    /// Probability of the rewarded outcome under 1-based action `i`.
    pub fn success_prob(&self, i: usize) -> f64 {
        if i < self.kappa {
            0.0
        } else if i == 2 * self.n + 1 {
            1.0
        } else {
            1.0 - self.gamma(i).expect("kappa <= i <= 2n") * self.delta.sqrt()
        }
    }
}

/// Family with `2n + 1` zero-cost actions and two outcomes, `r = (1, 0)`,
/// whose optimal robust value is within `√δ / n` of the lower bound.
pub fn gen_tight_lb(delta: f64, n: usize) -> Result<Instance, GenError> {
    let params = TightLbParams::new(delta, n)?;
    let actions = 2 * n + 1;
    let outcome_probs = (1..=actions)
        .map(|i| {
            let q = params.success_prob(i);
            vec![q, 1.0 - q]
        })
        .collect();
    Ok(
        Instance::new(outcome_probs, vec![1.0, 0.0], vec![0.0; actions])
            .expect("family rows are stochastic by construction"),
    )
}

/// Two deterministic zero-cost actions, `r = (0, 1)`; optimal robust value
/// equals `SW - δ = 1 - δ`.
pub fn gen_tight_ub(delta: f64) -> Result<Instance, GenError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(GenError::Delta(delta));
    }
    Ok(Instance::new(
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![0.0, 1.0],
        vec![0.0, 0.0],
    )
    .expect("static instance is valid"))
}

/// Seeded random instance.
///
/// Rows are normalized uniform draws, rewards and costs are uniform in
/// `[0, 1]`, and action 0 has zero cost. With `with_opt_out`, outcome 0 gets
/// zero reward and action 0 deterministically produces it, making action 0 an
/// exact opt-out.
pub fn gen_random(n: usize, m: usize, seed: u64, with_opt_out: bool) -> Instance {
    try_gen_random(n, m, seed, with_opt_out).expect("n and m must be positive")
}

pub fn try_gen_random(
    n: usize,
    m: usize,
    seed: u64,
    with_opt_out: bool,
) -> Result<Instance, GenError> {
    if n == 0 || m == 0 {
        return Err(GenError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outcome_probs: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            // Open interval keeps the normalizer away from zero.
            let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(f64::EPSILON..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / total).collect()
        })
        .collect();
    let mut rewards: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
    let mut costs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    costs[0] = 0.0;
    if with_opt_out {
        rewards[0] = 0.0;
        outcome_probs[0] = (0..m).map(|w| if w == 0 { 1.0 } else { 0.0 }).collect();
    }
    Ok(Instance::new(outcome_probs, rewards, costs).expect("generated rows are stochastic"))
}
