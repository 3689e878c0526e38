//! Non-robust reference quantities and the price-of-robustness bounds.

use serde::{Deserialize, Serialize};

use crate::lp::{solve_lp, LinearProgram, LpError, LpStatus, Relation};
use crate::model::{Contract, Instance};

/// Largest welfare `F_a·r - c_a` over all actions.
pub fn social_welfare(inst: &Instance) -> f64 {
    (0..inst.n())
        .map(|a| inst.welfare(a))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonRobustOpt {
    pub value: f64,
    pub contract: Contract,
    pub action: usize,
}

/// Optimal contract against an exactly best-responding agent that breaks
/// ties in the principal's favor.
///
/// For each action, the cheapest contract making it a best response is an LP
/// (minimize expected payment subject to incentive compatibility). Actions
/// whose LP is infeasible are never best responses and are skipped. Ties in
/// value keep the lowest action index.
pub fn opt_nonrobust(inst: &Instance) -> Result<NonRobustOpt, LpError> {
    let m = inst.m();
    let mut best: Option<NonRobustOpt> = None;
    let mut row = vec![0.0; m];
    for a in 0..inst.n() {
        let objective = inst.outcome_probs[a].iter().map(|v| -v).collect();
        let mut lp = LinearProgram::maximize(objective, 0.0);
        for other in (0..inst.n()).filter(|&o| o != a) {
            // (F_o - F_a)·p <= c_o - c_a
            for (w, v) in row.iter_mut().enumerate() {
                *v = inst.outcome_probs[other][w] - inst.outcome_probs[a][w];
            }
            lp.add_constraint(&row, Relation::Le, inst.costs[other] - inst.costs[a])?;
        }
        let res = solve_lp(&lp)?;
        if res.status != LpStatus::Optimal {
            continue;
        }
        let value = inst.expected_reward(a) + res.objective;
        if best.as_ref().is_none_or(|b| value > b.value) {
            best = Some(NonRobustOpt {
                value,
                contract: Contract::from_solver(res.solution),
                action: a,
            });
        }
    }
    // Some action is always a best response at p = 0, so at least one LP is
    // feasible.
    Ok(best.expect("at least one implementable action"))
}

/// Closed-form bounds on the optimal robust value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub opt: f64,
    pub sw: f64,
    pub delta: f64,
    /// `opt - 2√δ + δ`
    pub lb: f64,
    /// `max(0, sw - δ)`
    pub ub: f64,
}

impl BoundsReport {
    pub fn from_values(opt: f64, sw: f64, delta: f64) -> Self {
        Self {
            opt,
            sw,
            delta,
            lb: opt - 2.0 * delta.sqrt() + delta,
            ub: (sw - delta).max(0.0),
        }
    }
}

pub fn bounds(inst: &Instance, delta: f64) -> Result<BoundsReport, LpError> {
    let opt = opt_nonrobust(inst)?.value;
    Ok(BoundsReport::from_values(opt, social_welfare(inst), delta))
}

/// Moves `p` towards the reward vector: `(1 - √ε) p + √ε r`.
pub fn shift_contract(p: &[f64], rewards: &[f64], eps: f64) -> Contract {
    assert_eq!(p.len(), rewards.len());
    let s = eps.sqrt();
    Contract::from_solver(
        p.iter()
            .zip(rewards)
            .map(|(q, r)| (1.0 - s) * q + s * r)
            .collect(),
    )
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
    fn welfare_examples() {
        assert_eq!(social_welfare(&tight_ub()), 1.0);
        let opt_out = Instance::new(vec![vec![1.0, 0.0]], vec![0.0, 1.0], vec![0.0]).unwrap();
        assert_eq!(social_welfare(&opt_out), 0.0);
        let two = Instance::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![1.0, 0.2],
            vec![0.0, 0.1],
        )
        .unwrap();
        assert_eq!(social_welfare(&two), 1.0);
    }

    #[test]
    fn nonrobust_opt_examples() {
        let opt = opt_nonrobust(&tight_ub()).unwrap();
        assert_eq!(opt.value, 1.0);
        assert_eq!(opt.action, 1);
        let opt_out = Instance::new(vec![vec![1.0, 0.0]], vec![0.0, 1.0], vec![0.0]).unwrap();
        assert_eq!(opt_nonrobust(&opt_out).unwrap().value, 0.0);
    }

    #[test]
    fn nonrobust_opt_pays_for_costly_action() {
        // action 1 costs 0.2 and must be paid 0.2 on outcome 1
        let inst = Instance::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0, 1.0],
            vec![0.0, 0.2],
        )
        .unwrap();
        let opt = opt_nonrobust(&inst).unwrap();
        assert_eq!(opt.action, 1);
        assert!((opt.value - 0.8).abs() < 1e-12);
        assert!(opt.value <= social_welfare(&inst) + 1e-9);
    }

    #[test]
    fn bounds_closed_forms() {
        let b = BoundsReport::from_values(0.7, 0.9, 0.04);
        assert!((b.lb - 0.34).abs() < 1e-12);
        assert!((b.ub - 0.86).abs() < 1e-12);
        let b = BoundsReport::from_values(0.7, 0.9, 1e-8);
        assert!((b.lb - (0.7 - 2e-4)).abs() < 1e-7);
        assert_eq!(BoundsReport::from_values(0.3, 0.3, 0.5).ub, 0.0);

        let b = bounds(&tight_ub(), 0.25).unwrap();
        assert_eq!((b.opt, b.sw), (1.0, 1.0));
        assert!(b.lb <= b.opt && b.ub <= b.sw);
    }

    #[test]
    fn shift_examples() {
        let q = shift_contract(&[0.0, 1.0], &[1.0, 0.0], 0.25);
        assert_eq!(&*q, &[0.5, 0.5]);
        let q = shift_contract(&[0.3, 0.6], &[1.0, 0.0], 1e-30);
        assert!((q[0] - 0.3).abs() < 1e-14 && (q[1] - 0.6).abs() < 1e-14);
        let q = shift_contract(&[0.2, 0.9], &[0.2, 0.9], 0.37);
        assert!((q[0] - 0.2).abs() < 1e-15 && (q[1] - 0.9).abs() < 1e-15);
    }
}
