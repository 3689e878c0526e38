//! Online learning of robust contracts.
//!
//! Each round an agent type is drawn from `λ`, the learner posts a contract
//! from the lattice `B_ε ⊂ [0,1]^m`, the agent plays its worst δ-best
//! response for that type and an outcome is drawn from the action's
//! distribution. The learner sees only the outcome's utility `r_ω - p_ω`.
//! Arms are chosen with UCB1.
//!
//! Regret is pseudo-regret: each round is charged the exact expected utility
//! of the posted contract, `Σ_θ λ_θ u^P(p, a^{θ,δ}(p), θ)`, against a
//! grid-approximated benchmark.

use std::io::{self, Write};

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    validate_instance, worst_delta_response, Contract, Instance, ModelError, ValidationIssue,
    ValidationReport,
};
use crate::oracle::{grid_opt_typed, grid_opt_typed_nonrobust, GridSpec, OracleError};
use crate::ROW_SUM_TOL;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Agents whose action data depends on a type drawn from `λ`. All types
/// share the outcome set, the rewards and the number of actions.
#[derive(Debug, Clone, PartialEq)]
pub struct TypedInstance {
    types: Vec<Instance>,
    lambda: Vec<f64>,
}

/// Checks a typed family before construction.
pub fn validate_typed(types: &[Instance], lambda: &[f64]) -> ValidationReport {
    let mut report = ValidationReport::default();
    if types.is_empty() {
        report.errors.push(ValidationIssue::NoTypes);
        return report;
    }
    if lambda.len() != types.len() {
        report.errors.push(ValidationIssue::LambdaLength {
            expected: types.len(),
            got: lambda.len(),
        });
    }
    for (index, &value) in lambda.iter().enumerate() {
        if !(value.is_finite() && value >= 0.0) {
            report
                .errors
                .push(ValidationIssue::LambdaNegative { index, value });
        }
    }
    let sum: f64 = lambda.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        report.errors.push(ValidationIssue::LambdaSum { sum });
    }
    let n = types[0].n();
    for (ty, inst) in types.iter().enumerate() {
        if inst.rewards != types[0].rewards {
            report.errors.push(ValidationIssue::RewardMismatch { ty });
        }
        if inst.n() != n {
            report.errors.push(ValidationIssue::TypeShape {
                ty,
                expected_actions: n,
                got_actions: inst.n(),
            });
        }
        let inner = validate_instance(inst);
        let wrap = |issue| ValidationIssue::InType {
            ty,
            issue: Box::new(issue),
        };
        report.errors.extend(inner.errors.into_iter().map(wrap));
        report.warnings.extend(inner.warnings.into_iter().map(wrap));
    }
    report
}

impl TypedInstance {
    /// Builds a typed instance from shared rewards and per-type
    /// `(outcome_probs, costs)`.
    pub fn new(
        rewards: Vec<f64>,
        types: Vec<(Vec<Vec<f64>>, Vec<f64>)>,
        lambda: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let types: Vec<Instance> = types
            .into_iter()
            .map(|(outcome_probs, costs)| Instance {
                outcome_probs,
                rewards: rewards.clone(),
                costs,
                labels: None,
            })
            .collect();
        Self::from_instances(types, lambda)
    }

    /// Builds from instances that must agree on rewards and action count.
    pub fn from_instances(types: Vec<Instance>, lambda: Vec<f64>) -> Result<Self, ModelError> {
        let report = validate_typed(&types, &lambda);
        if report.is_ok() {
            Ok(Self { types, lambda })
        } else {
            Err(ModelError::InvalidInstance(report))
        }
    }

    /// A single type with probability one.
    pub fn single(inst: Instance) -> Self {
        Self {
            types: vec![inst],
            lambda: vec![1.0],
        }
    }

    pub fn types(&self) -> &[Instance] {
        &self.types
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn m(&self) -> usize {
        self.types[0].m()
    }

    pub fn n(&self) -> usize {
        self.types[0].n()
    }

    pub fn rewards(&self) -> &[f64] {
        &self.types[0].rewards
    }

    /// `Σ_θ λ_θ Ψ_θ(p)`.
    pub fn robust_value(&self, p: &[f64], delta: f64) -> f64 {
        self.types
            .iter()
            .zip(&self.lambda)
            .map(|(inst, w)| w * worst_delta_response(inst, p, delta).1)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMode {
    Robust,
    NonRobust,
    #[default]
    Both,
}

impl BaselineMode {
    fn robust(self) -> bool {
        matches!(self, Self::Robust | Self::Both)
    }

    fn nonrobust(self) -> bool {
        matches!(self, Self::NonRobust | Self::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub horizon: usize,
    pub delta: f64,
    /// Lattice step; defaults to `T^{-1/(m+1)}`.
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub baseline: BaselineMode,
    /// Step of the benchmark grid; defaults to [`default_oracle_step`].
    pub oracle_step: Option<f64>,
}

impl LearnConfig {
    pub fn new(horizon: usize, delta: f64, seed: u64) -> Self {
        Self {
            horizon,
            delta,
            epsilon: None,
            seed,
            baseline: BaselineMode::Both,
            oracle_step: None,
        }
    }
}

pub fn default_epsilon(horizon: usize, m: usize) -> f64 {
    (horizon as f64).powf(-1.0 / (m as f64 + 1.0))
}

/// Finest step no smaller than 0.01 whose grid stays within 10^6 points.
pub fn default_oracle_step(m: usize) -> f64 {
    let per_axis = (1e6f64.powf(1.0 / m as f64) + 1e-9).floor();
    let coarsest = 1.0 / (per_axis - 1.0).max(1.0);
    coarsest.max(0.01)
}

/// The arm set `B_ε`: lattice `{0, ε, 2ε, ..., 1}^m` in lexicographic order.
pub fn build_grid(epsilon: f64, m: usize) -> Result<Vec<Contract>, OracleError> {
    GridSpec::unit(epsilon)?.points(m)
}

/// One round of interaction. `hidden_type` and `hidden_action` are recorded
/// for analysis; the learner never sees them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub hidden_type: usize,
    pub hidden_action: usize,
    pub outcome: usize,
    pub utility: f64,
}

/// Samples a type, lets it play its worst δ-best response to `p`, samples
/// the outcome and returns the principal's realized utility.
pub fn environment_step<R: Rng + ?Sized>(
    tinst: &TypedInstance,
    p: &[f64],
    delta: f64,
    rng: &mut R,
) -> StepOutcome {
    let types = WeightedIndex::new(&tinst.lambda).expect("lambda is a distribution");
    let hidden_type = types.sample(rng);
    let inst = &tinst.types[hidden_type];
    let (hidden_action, _) = worst_delta_response(inst, p, delta);
    let outcome = WeightedIndex::new(&inst.outcome_probs[hidden_action])
        .expect("rows are distributions")
        .sample(rng);
    StepOutcome {
        hidden_type,
        hidden_action,
        outcome,
        utility: inst.rewards[outcome] - p[outcome],
    }
}

/// UCB1 over a fixed arm set. Rewards in `[-1, 1]` are mapped to `[0, 1]`
/// by `(u + 1) / 2` before entering the index.
#[derive(Debug, Clone)]
pub struct Ucb1 {
    pulls: Vec<u64>,
    means: Vec<f64>,
    total: u64,
}

impl Ucb1 {
    pub fn new(arms: usize) -> Self {
        assert!(arms > 0, "UCB1 needs at least one arm");
        Self {
            pulls: vec![0; arms],
            means: vec![0.0; arms],
            total: 0,
        }
    }

    /// Unplayed arms first (lowest index), then the largest index
    /// `mean + sqrt(2 ln t / pulls)`, ties to the lowest arm.
    pub fn select(&self) -> usize {
        if let Some(arm) = self.pulls.iter().position(|&n| n == 0) {
            return arm;
        }
        let log_t = (self.total as f64).ln();
        let mut best = (0, f64::NEG_INFINITY);
        for (arm, (&n, &mean)) in self.pulls.iter().zip(&self.means).enumerate() {
            let index = mean + (2.0 * log_t / n as f64).sqrt();
            if index > best.1 {
                best = (arm, index);
            }
        }
        best.0
    }

    /// Feeds back the realized principal utility of `arm`.
    pub fn update(&mut self, arm: usize, realized_utility: f64) {
        let reward = (realized_utility + 1.0) / 2.0;
        self.pulls[arm] += 1;
        self.total += 1;
        self.means[arm] += (reward - self.means[arm]) / self.pulls[arm] as f64;
    }

    pub fn pulls(&self) -> &[u64] {
        &self.pulls
    }
}

/// Grid approximations of the two benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    /// `OPT(C, δ)`, robust benchmark.
    pub robust: Option<f64>,
    /// `OPT(C)`, non-robust benchmark.
    pub nonrobust: Option<f64>,
    pub grid_step: f64,
    pub grid_points: u64,
}

pub fn compute_baselines(
    tinst: &TypedInstance,
    delta: f64,
    grid: &GridSpec,
) -> Result<(f64, f64), OracleError> {
    let robust = grid_opt_typed(tinst, delta, grid)?.value;
    let nonrobust = grid_opt_typed_nonrobust(tinst, grid)?.value;
    Ok((robust, nonrobust))
}

fn baselines_for(
    tinst: &TypedInstance,
    delta: f64,
    grid: &GridSpec,
    mode: BaselineMode,
) -> Result<Baselines, OracleError> {
    let robust = if mode.robust() {
        Some(grid_opt_typed(tinst, delta, grid)?.value)
    } else {
        None
    };
    let nonrobust = if mode.nonrobust() {
        Some(grid_opt_typed_nonrobust(tinst, grid)?.value)
    } else {
        None
    };
    Ok(Baselines {
        robust,
        nonrobust,
        grid_step: grid.step,
        grid_points: grid.check_cap(tinst.m())?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub arm: usize,
    pub hidden_type: usize,
    pub hidden_action: usize,
    pub outcome: usize,
    pub realized_utility: f64,
    pub expected_utility: f64,
    pub cum_regret_robust: Option<f64>,
    pub cum_regret_nonrobust: Option<f64>,
}

/// Exact per-arm quantities used for accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    /// Expected principal utility of the arm.
    pub expected: f64,
    /// Variance of one round's realized utility.
    pub variance: f64,
    /// Worst δ-best response per type.
    pub responses: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnRun {
    pub config: LearnConfig,
    pub epsilon: f64,
    pub arms: Vec<Contract>,
    pub arm_stats: Vec<ArmStats>,
    pub baselines: Baselines,
    pub records: Vec<RoundRecord>,
}

fn arm_stats(tinst: &TypedInstance, p: &[f64], delta: f64) -> ArmStats {
    let mut expected = 0.0;
    let mut second = 0.0;
    let mut responses = Vec::with_capacity(tinst.types.len());
    for (inst, w) in tinst.types.iter().zip(&tinst.lambda) {
        let (a, _) = worst_delta_response(inst, p, delta);
        responses.push(a);
        for (o, f) in inst.outcome_probs[a].iter().enumerate() {
            let u = inst.rewards[o] - p[o];
            expected += w * f * u;
            second += w * f * u * u;
        }
    }
    ArmStats {
        expected,
        variance: (second - expected * expected).max(0.0),
        responses,
    }
}

/// Runs UCB1 over `B_ε` for `cfg.horizon` rounds.
pub fn run_ucb1(tinst: &TypedInstance, cfg: &LearnConfig) -> Result<LearnRun, LearnError> {
    if cfg.horizon == 0 {
        return Err(LearnError::Config("horizon must be positive".into()));
    }
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(ModelError::InvalidDelta(cfg.delta).into());
    }
    let m = tinst.m();
    let epsilon = cfg
        .epsilon
        .unwrap_or_else(|| default_epsilon(cfg.horizon, m));
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(LearnError::Config(format!(
            "epsilon must lie in (0, 1], got {epsilon}"
        )));
    }
    let arms = build_grid(epsilon, m)?;
    let oracle = GridSpec::unit(cfg.oracle_step.unwrap_or_else(|| default_oracle_step(m)))?;
    let baselines = baselines_for(tinst, cfg.delta, &oracle, cfg.baseline)?;

    let stats: Vec<ArmStats> = arms
        .iter()
        .map(|p| arm_stats(tinst, p, cfg.delta))
        .collect();
    let type_dist = WeightedIndex::new(&tinst.lambda).expect("lambda is a distribution");
    let outcome_dists: Vec<Vec<WeightedIndex<f64>>> = tinst
        .types
        .iter()
        .map(|inst| {
            inst.outcome_probs
                .iter()
                .map(|row| WeightedIndex::new(row).expect("rows are distributions"))
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut learner = Ucb1::new(arms.len());
    let mut records = Vec::with_capacity(cfg.horizon);
    let mut cum_expected = 0.0;
    for round in 1..=cfg.horizon {
        let arm = learner.select();
        let p = &arms[arm];
        // Same sampling sequence as `environment_step`, with responses cached.
        let hidden_type = type_dist.sample(&mut rng);
        let hidden_action = stats[arm].responses[hidden_type];
        let outcome = outcome_dists[hidden_type][hidden_action].sample(&mut rng);
        let realized_utility = tinst.types[hidden_type].rewards[outcome] - p[outcome];
        learner.update(arm, realized_utility);

        let expected_utility = stats[arm].expected;
        cum_expected += expected_utility;
        let t = round as f64;
        records.push(RoundRecord {
            round,
            arm,
            hidden_type,
            hidden_action,
            outcome,
            realized_utility,
            expected_utility,
            cum_regret_robust: baselines.robust.map(|opt| t * opt - cum_expected),
            cum_regret_nonrobust: baselines.nonrobust.map(|opt| t * opt - cum_expected),
        });
    }
    Ok(LearnRun {
        config: cfg.clone(),
        epsilon,
        arms,
        arm_stats: stats,
        baselines,
        records,
    })
}

impl LearnRun {
    pub fn horizon(&self) -> usize {
        self.records.len()
    }

    /// `R_T(C, δ)` at the final round.
    pub fn final_regret_robust(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.cum_regret_robust)
    }

    /// `R_T(C)` at the final round.
    pub fn final_regret_nonrobust(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.cum_regret_nonrobust)
    }

    /// Mean expected utility over the last `fraction` of rounds.
    pub fn tail_mean_expected(&self, fraction: f64) -> f64 {
        let len = self.records.len();
        let k = ((len as f64 * fraction).ceil() as usize).clamp(1, len);
        self.records[len - k..]
            .iter()
            .map(|r| r.expected_utility)
            .sum::<f64>()
            / k as f64
    }

    /// Writes the metadata header and one row per round:
    /// `round,arm,expected_utility,cum_regret_robust,cum_regret_nonrobust`.
    /// Benchmarks not computed leave their column empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(out, "# seed={}", self.config.seed)?;
        writeln!(out, "# T={}", self.config.horizon)?;
        writeln!(out, "# epsilon={}", self.epsilon)?;
        writeln!(out, "# delta={}", self.config.delta)?;
        writeln!(out, "# grid_size={}", self.arms.len())?;
        writeln!(out, "# oracle_step={}", self.baselines.grid_step)?;
        writeln!(out, "# opt_robust_grid={}", opt(self.baselines.robust))?;
        writeln!(
            out,
            "# opt_nonrobust_grid={}",
            opt(self.baselines.nonrobust)
        )?;
        writeln!(
            out,
            "round,arm,expected_utility,cum_regret_robust,cum_regret_nonrobust"
        )?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.round,
                r.arm,
                r.expected_utility,
                opt(r.cum_regret_robust),
                opt(r.cum_regret_nonrobust)
            )?;
        }
        Ok(())
    }
}
