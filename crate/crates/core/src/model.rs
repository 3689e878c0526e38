//! Problem data and response semantics.
//!
//! An [`Instance`] is the tuple of outcome distributions, principal rewards
//! and agent costs. Everything else in this module is a pure function of an
//! instance and a [`Contract`]: agent/principal utilities, exact best
//! responses (ties broken in the principal's favor) and the set of
//! δ-best responses together with the worst one for the principal.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{ROW_SUM_TOL, TAU_MEM};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid instance: {0}")]
    InvalidInstance(ValidationReport),
    #[error("contract entry {index} is {value}; payments must be finite and nonnegative")]
    NegativePayment { index: usize, value: f64 },
    #[error("contract has {got} entries but the instance has {expected} outcomes")]
    ContractLength { expected: usize, got: usize },
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
}

/// Optional presentation names for actions and outcomes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub actions: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outcomes: Vec<String>,
}

/// A single principal-agent problem.
///
/// `outcome_probs[a][w]` is the probability that action `a` yields outcome
/// `w`; `rewards[w]` is the principal's reward for outcome `w`; `costs[a]` is
/// the agent's cost of action `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub outcome_probs: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub costs: Vec<f64>,
    pub labels: Option<Labels>,
}

impl Instance {
    /// Builds an instance, rejecting it if validation reports any error.
    /// Warnings (such as a missing opt-out action) are tolerated.
    pub fn new(
        outcome_probs: Vec<Vec<f64>>,
        rewards: Vec<f64>,
        costs: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let inst = Self {
            outcome_probs,
            rewards,
            costs,
            labels: None,
        };
        let report = validate_instance(&inst);
        if report.is_ok() {
            Ok(inst)
        } else {
            Err(ModelError::InvalidInstance(report))
        }
    }

    pub fn with_labels(mut self, labels: Labels) -> Self {
        self.labels = Some(labels);
        self
    }

    /// Number of agent actions.
    pub fn n(&self) -> usize {
        self.outcome_probs.len()
    }

    /// Number of outcomes.
    pub fn m(&self) -> usize {
        self.rewards.len()
    }

    /// Expected principal reward `R_a = F_a · r`.
    pub fn expected_reward(&self, a: usize) -> f64 {
        dot(&self.outcome_probs[a], &self.rewards)
    }

    /// Welfare of action `a`: expected reward minus cost. Contract independent.
    pub fn welfare(&self, a: usize) -> f64 {
        self.expected_reward(a) - self.costs[a]
    }

    /// Expected payment `F_a · p`.
    pub fn expected_payment(&self, p: &[f64], a: usize) -> f64 {
        dot(&self.outcome_probs[a], p)
    }

    pub fn is_opt_out(&self, a: usize) -> bool {
        self.costs[a] == 0.0 && self.expected_reward(a) == 0.0
    }

    /// Lowest-indexed opt-out action, if any.
    pub fn opt_out_action(&self) -> Option<usize> {
        (0..self.n()).find(|&a| self.is_opt_out(a))
    }

    pub fn check_contract(&self, p: &[f64]) -> Result<(), ModelError> {
        if p.len() != self.m() {
            return Err(ModelError::ContractLength {
                expected: self.m(),
                got: p.len(),
            });
        }
        Ok(())
    }
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// A nonnegative payment per outcome (limited liability).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Contract(Vec<f64>);

impl Contract {
    pub fn new(payments: Vec<f64>) -> Result<Self, ModelError> {
        if let Some((index, &value)) = payments
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(ModelError::NegativePayment { index, value });
        }
        Ok(Self(payments))
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    /// Wraps payments that are nonnegative up to solver tolerance, clamping
    /// tiny negative entries to zero.
    pub(crate) fn from_solver(mut payments: Vec<f64>) -> Self {
        for v in &mut payments {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Self(payments)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Contract {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl fmt::Display for Contract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ValidationIssue {
    EmptyInstance,
    RowLength {
        row: usize,
        expected: usize,
        got: usize,
    },
    CostLength {
        expected: usize,
        got: usize,
    },
    NonFinite {
        field: &'static str,
        index: usize,
    },
    ProbabilityRange {
        row: usize,
        col: usize,
        value: f64,
    },
    RowNotStochastic {
        row: usize,
        sum: f64,
    },
    RewardRange {
        index: usize,
        value: f64,
    },
    CostRange {
        index: usize,
        value: f64,
    },
    NoOptOut,
    LambdaLength {
        expected: usize,
        got: usize,
    },
    LambdaNegative {
        index: usize,
        value: f64,
    },
    LambdaSum {
        sum: f64,
    },
    NoTypes,
    TypeShape {
        ty: usize,
        expected_actions: usize,
        got_actions: usize,
    },
    RewardMismatch {
        ty: usize,
    },
    InType {
        ty: usize,
        issue: Box<ValidationIssue>,
    },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyInstance => write!(f, "instance needs at least one action and one outcome"),
            Self::RowLength { row, expected, got } => {
                write!(f, "row {row} has {got} entries, expected {expected}")
            }
            Self::CostLength { expected, got } => {
                write!(f, "cost vector has {got} entries, expected {expected}")
            }
            Self::NonFinite { field, index } => write!(f, "{field} entry {index} is not finite"),
            Self::ProbabilityRange { row, col, value } => {
                write!(
                    f,
                    "row {row}: probability {value} at outcome {col} outside [0,1]"
                )
            }
            Self::RowNotStochastic { row, sum } => {
                write!(f, "row {row} not stochastic (sums to {sum})")
            }
            Self::RewardRange { index, value } => {
                write!(f, "reward {index} is {value}, outside [0,1]")
            }
            Self::CostRange { index, value } => write!(f, "cost {index} is {value}, outside [0,1]"),
            Self::NoOptOut => write!(f, "no opt-out action (zero cost and zero expected reward)"),
            Self::LambdaLength { expected, got } => {
                write!(
                    f,
                    "lambda has {got} entries, expected one per type ({expected})"
                )
            }
            Self::LambdaNegative { index, value } => write!(f, "lambda entry {index} is {value}"),
            Self::LambdaSum { sum } => write!(f, "lambda sums to {sum}, not 1"),
            Self::NoTypes => write!(f, "typed instance has no types"),
            Self::TypeShape {
                ty,
                expected_actions,
                got_actions,
            } => write!(
                f,
                "type {ty} has {got_actions} actions, expected {expected_actions}"
            ),
            Self::RewardMismatch { ty } => write!(f, "type {ty} has a different reward vector"),
            Self::InType { ty, issue } => write!(f, "type {ty}: {issue}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<ValidationIssue>,
    pub warnings: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.errors.extend(other.errors);
        self.warnings.extend(other.warnings);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (kind, issues) in [("error", &self.errors), ("warning", &self.warnings)] {
            for issue in issues {
                if !first {
                    write!(f, "; ")?;
                }
                first = false;
                write!(f, "{kind}: {issue}")?;
            }
        }
        if first {
            write!(f, "ok")?;
        }
        Ok(())
    }
}

/// Checks dimensions, ranges and row sums; warns when there is no opt-out
/// action.
pub fn validate_instance(inst: &Instance) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = inst.n();
    let m = inst.m();
    if n == 0 || m == 0 {
        report.errors.push(ValidationIssue::EmptyInstance);
        return report;
    }
    if inst.costs.len() != n {
        report.errors.push(ValidationIssue::CostLength {
            expected: n,
            got: inst.costs.len(),
        });
    }
    for (index, &value) in inst.rewards.iter().enumerate() {
        if !value.is_finite() {
            report.errors.push(ValidationIssue::NonFinite {
                field: "reward",
                index,
            });
        } else if !(0.0..=1.0).contains(&value) {
            report
                .errors
                .push(ValidationIssue::RewardRange { index, value });
        }
    }
    for (index, &value) in inst.costs.iter().enumerate() {
        if !value.is_finite() {
            report.errors.push(ValidationIssue::NonFinite {
                field: "cost",
                index,
            });
        } else if !(0.0..=1.0).contains(&value) {
            report
                .errors
                .push(ValidationIssue::CostRange { index, value });
        }
    }
    let mut shape_ok = report.errors.is_empty();
    for (row, probs) in inst.outcome_probs.iter().enumerate() {
        if probs.len() != m {
            report.errors.push(ValidationIssue::RowLength {
                row,
                expected: m,
                got: probs.len(),
            });
            shape_ok = false;
            continue;
        }
        let mut row_ok = true;
        for (col, &value) in probs.iter().enumerate() {
            if !value.is_finite() {
                report.errors.push(ValidationIssue::NonFinite {
                    field: "probability",
                    index: row * m + col,
                });
                row_ok = false;
            } else if !(0.0..=1.0).contains(&value) {
                report
                    .errors
                    .push(ValidationIssue::ProbabilityRange { row, col, value });
                row_ok = false;
            }
        }
        if row_ok {
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                report
                    .errors
                    .push(ValidationIssue::RowNotStochastic { row, sum });
            }
        } else {
            shape_ok = false;
        }
    }
    if shape_ok && inst.opt_out_action().is_none() {
        report.warnings.push(ValidationIssue::NoOptOut);
    }
    report
}

/// `u^A(p, a) = F_a · p - c_a`.
pub fn agent_utility(inst: &Instance, p: &[f64], a: usize) -> f64 {
    inst.expected_payment(p, a) - inst.costs[a]
}

/// `u^P(p, a) = F_a · (r - p)`.
pub fn principal_utility(inst: &Instance, p: &[f64], a: usize) -> f64 {
    inst.outcome_probs[a]
        .iter()
        .zip(inst.rewards.iter().zip(p))
        .map(|(f, (r, q))| f * (r - q))
        .sum()
}

/// How actions whose utility gap to the best is (numerically) exactly δ are
/// treated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MembershipMode {
    /// `u^A(p,a) - (max - δ) > TAU_MEM`: boundary actions are excluded.
    #[default]
    Strict,
    /// `u^A(p,a) - (max - δ) >= -TAU_MEM`: boundary actions are included.
    Pessimistic,
}

fn max_agent_utility(inst: &Instance, p: &[f64]) -> f64 {
    (0..inst.n())
        .map(|a| agent_utility(inst, p, a))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn in_delta_set(utility: f64, best: f64, delta: f64, mode: MembershipMode) -> bool {
    let gap = utility - (best - delta);
    match mode {
        MembershipMode::Strict => gap > TAU_MEM,
        MembershipMode::Pessimistic => gap >= -TAU_MEM,
    }
}

/// Actions whose agent utility is within δ of the best (see [`MembershipMode`]).
///
/// Accepts any positive δ; the model only uses δ in (0, 1) but the shift
/// argument evaluates responses at δ + ε.
pub fn delta_best_responses(
    inst: &Instance,
    p: &[f64],
    delta: f64,
    mode: MembershipMode,
) -> Vec<usize> {
    assert!(delta > 0.0, "delta must be positive, got {delta}");
    let utilities: Vec<f64> = (0..inst.n()).map(|a| agent_utility(inst, p, a)).collect();
    let best = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let set: Vec<usize> = utilities
        .iter()
        .enumerate()
        .filter(|(_, &u)| in_delta_set(u, best, delta, mode))
        .map(|(a, _)| a)
        .collect();
    // The exact best response always clears the threshold since δ > TAU_MEM.
    assert!(
        !set.is_empty(),
        "empty delta-best-response set at delta {delta}"
    );
    set
}

/// Worst δ-best response for the principal and its utility `Ψ(p)`.
/// Ties go to the lowest action index.
pub fn worst_delta_response(inst: &Instance, p: &[f64], delta: f64) -> (usize, f64) {
    worst_delta_response_with(inst, p, delta, MembershipMode::Strict)
}

pub fn worst_delta_response_with(
    inst: &Instance,
    p: &[f64],
    delta: f64,
    mode: MembershipMode,
) -> (usize, f64) {
    assert!(delta > 0.0, "delta must be positive, got {delta}");
    let best = max_agent_utility(inst, p);
    let mut worst: Option<(usize, f64)> = None;
    for a in 0..inst.n() {
        if !in_delta_set(agent_utility(inst, p, a), best, delta, mode) {
            continue;
        }
        let u = principal_utility(inst, p, a);
        if worst.is_none_or(|(_, w)| u < w) {
            worst = Some((a, u));
        }
    }
    worst.expect("delta-best-response set is never empty")
}

/// `Ψ(p)`: principal utility under the worst δ-best response (strict mode).
pub fn psi(inst: &Instance, p: &[f64], delta: f64) -> f64 {
    worst_delta_response(inst, p, delta).1
}

/// Exact best response with ties (within `TAU_MEM`) broken in favor of the
/// principal, then by lowest index.
pub fn optimistic_best_response(inst: &Instance, p: &[f64]) -> usize {
    let best = max_agent_utility(inst, p);
    let mut chosen: Option<(usize, f64)> = None;
    for a in 0..inst.n() {
        if agent_utility(inst, p, a) < best - TAU_MEM {
            continue;
        }
        let u = principal_utility(inst, p, a);
        if chosen.is_none_or(|(_, c)| u > c) {
            chosen = Some((a, u));
        }
    }
    chosen.expect("instance has at least one action").0
}

/// Everything the agent side does in response to one contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseReport {
    pub best_value: f64,
    pub best_set: Vec<usize>,
    pub optimistic_action: usize,
    pub delta_set: Vec<usize>,
    pub worst_delta_action: usize,
    pub psi: f64,
}

pub fn response_report(
    inst: &Instance,
    p: &[f64],
    delta: f64,
    mode: MembershipMode,
) -> ResponseReport {
    let best_value = max_agent_utility(inst, p);
    let best_set = (0..inst.n())
        .filter(|&a| agent_utility(inst, p, a) >= best_value - TAU_MEM)
        .collect();
    let (worst_delta_action, psi) = worst_delta_response_with(inst, p, delta, mode);
    ResponseReport {
        best_value,
        best_set,
        optimistic_action: optimistic_best_response(inst, p),
        delta_set: delta_best_responses(inst, p, delta, mode),
        worst_delta_action,
        psi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tight_ub() -> Instance {
        Instance::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0, 1.0],
            vec![0.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn validates_tight_ub_instance() {
        let inst = tight_ub();
        let report = validate_instance(&inst);
        assert!(report.is_ok());
        assert!(report.warnings.is_empty());
        assert_eq!(inst.opt_out_action(), Some(0));
    }

    #[test]
    fn rejects_non_stochastic_row() {
        let err = Instance::new(vec![vec![0.4, 0.5]], vec![0.0, 1.0], vec![0.0]).unwrap_err();
        let ModelError::InvalidInstance(report) = err else {
            panic!("unexpected error");
        };
        assert!(matches!(
            report.errors[0],
            ValidationIssue::RowNotStochastic { row: 0, .. }
        ));
        assert!(report.to_string().contains("row 0 not stochastic"));
    }

    #[test]
    fn warns_without_opt_out() {
        let inst = Instance::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0, 1.0],
            vec![0.5, 0.5],
        )
        .unwrap();
        let report = validate_instance(&inst);
        assert!(report.is_ok());
        assert_eq!(report.warnings, vec![ValidationIssue::NoOptOut]);
    }

    #[test]
    fn reports_dimension_mismatch() {
        let inst = Instance {
            outcome_probs: vec![vec![1.0], vec![0.5, 0.5]],
            rewards: vec![0.0, 1.0],
            costs: vec![0.0],
            labels: None,
        };
        let report = validate_instance(&inst);
        assert!(report.errors.contains(&ValidationIssue::CostLength {
            expected: 2,
            got: 1
        }));
        assert!(report
            .errors
            .iter()
            .any(|e| matches!(e, ValidationIssue::RowLength { row: 0, .. })));
    }

    #[test]
    fn contract_rejects_negative_payment() {
        assert!(Contract::new(vec![0.1, -0.2]).is_err());
        assert!(Contract::new(vec![0.1, f64::NAN]).is_err());
        assert_eq!(&*Contract::new(vec![0.0, 0.3]).unwrap(), &[0.0, 0.3]);
    }

    #[test]
    fn utilities() {
        let inst = tight_ub();
        assert!((agent_utility(&inst, &[0.0, 0.3], 1) - 0.3).abs() < 1e-15);
        assert_eq!(agent_utility(&inst, &[0.0, 0.0], 0), 0.0);
        assert!((principal_utility(&inst, &[0.0, 0.25], 1) - 0.75).abs() < 1e-15);
        assert!(principal_utility(&inst, &[0.7, 0.2], 0) <= 0.0);

        let half = Instance::new(vec![vec![0.5, 0.5]], vec![1.0, 0.0], vec![0.1]).unwrap();
        assert!((agent_utility(&half, &[0.2, 0.4], 0) - 0.2).abs() < 1e-15);
        assert!((principal_utility(&half, &[0.0, 0.0], 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn strict_membership_excludes_boundary() {
        let inst = tight_ub();
        let delta = 0.25;
        assert_eq!(
            delta_best_responses(&inst, &[0.0, delta], delta, MembershipMode::Strict),
            vec![1]
        );
        assert_eq!(
            delta_best_responses(&inst, &[0.0, delta], delta, MembershipMode::Pessimistic),
            vec![0, 1]
        );
        assert_eq!(
            delta_best_responses(&inst, &[0.0, 0.1], delta, MembershipMode::Strict),
            vec![0, 1]
        );
        assert_eq!(
            delta_best_responses(&inst, &[0.0, 0.0], delta, MembershipMode::Strict),
            vec![0, 1]
        );
    }

    #[test]
    fn worst_response_on_tight_ub() {
        let inst = tight_ub();
        let (a, v) = worst_delta_response(&inst, &[0.0, 0.25], 0.25);
        assert_eq!(a, 1);
        assert!((v - 0.75).abs() < 1e-12);
        assert_eq!(worst_delta_response(&inst, &[0.0, 0.0], 0.25), (0, 0.0));
    }

    #[test]
    fn worst_response_ties_lowest_index() {
        let inst = Instance::new(
            vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0, 1.0],
            vec![0.0, 0.0, 0.0],
        )
        .unwrap();
        assert_eq!(worst_delta_response(&inst, &[0.0, 0.0], 0.5).0, 0);
    }

    #[test]
    fn optimistic_tie_break() {
        let inst = tight_ub();
        assert_eq!(optimistic_best_response(&inst, &[0.0, 0.0]), 1);
        // a strict maximizer wins even though the principal prefers action 1
        assert_eq!(optimistic_best_response(&inst, &[0.01, 0.0]), 0);
        let single = Instance::new(vec![vec![0.3, 0.7]], vec![0.2, 0.9], vec![0.4]).unwrap();
        assert_eq!(optimistic_best_response(&single, &[0.5, 0.5]), 0);
    }

    #[test]
    fn response_report_invariants() {
        let inst = tight_ub();
        let rep = response_report(&inst, &[0.05, 0.2], 0.25, MembershipMode::Strict);
        assert!(rep.best_set.contains(&rep.optimistic_action));
        assert!(rep.delta_set.contains(&rep.worst_delta_action));
        assert!(rep.best_set.iter().all(|a| rep.delta_set.contains(a)));
        assert_eq!(
            rep.psi,
            principal_utility(&inst, &[0.05, 0.2], rep.worst_delta_action)
        );
    }
}
