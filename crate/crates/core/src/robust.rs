//! Exact optimal δ-robust contracts.
//!
//! Fix a guess `(a_star, a_delta)` for the agent's exact best response and
//! the principal's worst δ-best response at the optimum. Robustness then
//! requires, for every action `a`, that `a` is either at least δ worse than
//! `a_star` for the agent or no worse than `a_delta` for the principal. The
//! two alternatives are linear in `p`, and which one is the weaker one
//! depends only on where
//!
//! ```text
//! u^A(p, a_star) + u^P(p, a_delta) - δ
//! ```
//!
//! falls relative to the action welfares `ν_a = F_a·r - c_a`. Sorting actions
//! by welfare splits contract space into `n + 1` slabs, and within slab `j`
//! the problem is a single LP. Enumerating all `n² (n + 1)` LPs and keeping
//! the solution with the best robust value `Ψ` yields an optimal contract.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{solve_lp, LinearProgram, LpError, LpStatus, Relation};
use crate::model::{validate_instance, worst_delta_response, Contract, Instance, ModelError};

#[derive(Debug, Error)]
pub enum RobustError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("LP failure for pair ({a_star}, {a_delta}), slab {partition_index}: {source}")]
    Lp {
        a_star: usize,
        a_delta: usize,
        partition_index: usize,
        source: LpError,
    },
    #[error("subproblem for pair ({a_star}, {a_delta}), slab {partition_index} is unbounded")]
    Unbounded {
        a_star: usize,
        a_delta: usize,
        partition_index: usize,
    },
    #[error("every subproblem was infeasible")]
    NoFeasibleSubproblem,
}

/// Actions sorted ascending by welfare (stable, so ties keep index order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareOrder {
    /// `order[l]` is the action at 0-based position `l`.
    pub order: Vec<usize>,
    /// `values[l]` is the welfare of `order[l]`; non-decreasing.
    pub values: Vec<f64>,
    /// Inverse permutation: `position[a]` is the 0-based position of `a`.
    pub position: Vec<usize>,
}

impl WelfareOrder {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Slab boundary `ν_j` for `j` in `0..=n+1`, with `ν_0 = -∞` and
    /// `ν_{n+1} = +∞`.
    pub fn threshold(&self, j: usize) -> f64 {
        match j {
            0 => f64::NEG_INFINITY,
            j if j > self.len() => f64::INFINITY,
            j => self.values[j - 1],
        }
    }
}

pub fn welfare_order(inst: &Instance) -> WelfareOrder {
    let welfare: Vec<f64> = (0..inst.n()).map(|a| inst.welfare(a)).collect();
    let mut order: Vec<usize> = (0..inst.n()).collect();
    order.sort_by(|&a, &b| welfare[a].total_cmp(&welfare[b]));
    let mut position = vec![0; order.len()];
    for (l, &a) in order.iter().enumerate() {
        position[a] = l;
    }
    WelfareOrder {
        values: order.iter().map(|&a| welfare[a]).collect(),
        order,
        position,
    }
}

/// The LP for guess `(a_star, a_delta)` restricted to slab `j` (1-based,
/// `1..=n+1`).
///
/// Maximizes `F_{a_delta}·(r - p)` over `p >= 0` subject to
///
/// - `ν_{j-1} <= u^A(p,a_star) + u^P(p,a_delta) - δ <= ν_j` (infinite sides
///   omitted);
/// - for actions at positions `< j-1` (0-based) in the welfare order, whose
///   welfare is at most the sandwiched quantity: `F_a·p <= c_a + u^A(p,
///   a_star) - δ`, i.e. the action is kept out of the δ-set;
/// - for the remaining actions: `F_a·p <= F_a·r - u^P(p, a_delta)`, i.e. the
///   action is no worse for the principal than `a_delta`.
///
/// In each slab this picks, for every action, the larger right-hand side of
/// the disjunction "out of the δ-set or no worse than `a_delta`", so the
/// union over `j` is exactly the feasible set of the guessed problem.
pub fn build_subproblem(
    inst: &Instance,
    a_star: usize,
    a_delta: usize,
    j: usize,
    delta: f64,
    order: &WelfareOrder,
) -> LinearProgram {
    let n = inst.n();
    assert!(
        (1..=n + 1).contains(&j),
        "slab index {j} outside 1..={}",
        n + 1
    );
    let f = &inst.outcome_probs;
    let c = &inst.costs;
    let reward_delta = inst.expected_reward(a_delta);

    let objective: Vec<f64> = f[a_delta].iter().map(|v| -v).collect();
    let mut lp = LinearProgram::maximize(objective, reward_delta);

    let mut row = vec![0.0; inst.m()];
    let add = |lp: &mut LinearProgram, row: &[f64], rel, rhs| {
        lp.add_constraint(row, rel, rhs)
            .expect("rows are built with m coefficients");
    };

    // Slab sandwich: (F_{a*} - F_{aδ})·p + (R_{aδ} - c_{a*} - δ) in [ν_{j-1}, ν_j].
    for (w, v) in row.iter_mut().enumerate() {
        *v = f[a_star][w] - f[a_delta][w];
    }
    let constant = reward_delta - c[a_star] - delta;
    if j > 1 {
        add(
            &mut lp,
            &row,
            Relation::Ge,
            order.threshold(j - 1) - constant,
        );
    }
    if j <= n {
        add(&mut lp, &row, Relation::Le, order.threshold(j) - constant);
    }

    for (l, &a) in order.order.iter().enumerate() {
        if l + 1 < j {
            // (F_a - F_{a*})·p <= c_a - c_{a*} - δ
            for (w, v) in row.iter_mut().enumerate() {
                *v = f[a][w] - f[a_star][w];
            }
            add(&mut lp, &row, Relation::Le, c[a] - c[a_star] - delta);
        } else {
            // (F_a - F_{aδ})·p <= R_a - R_{aδ}
            for (w, v) in row.iter_mut().enumerate() {
                *v = f[a][w] - f[a_delta][w];
            }
            add(
                &mut lp,
                &row,
                Relation::Le,
                inst.expected_reward(a) - reward_delta,
            );
        }
    }
    lp
}

/// An optimal δ-robust contract with the subproblem that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustSolution {
    pub contract: Contract,
    /// Robust value `Ψ(contract)` recomputed from the model.
    pub psi: f64,
    pub a_star: usize,
    pub a_delta: usize,
    /// 1-based slab index in `1..=n+1`.
    pub partition_index: usize,
    /// Objective of the winning LP, `u^P(contract, a_delta)`.
    pub lp_value: f64,
    /// Number of subproblems solved and how many were feasible.
    pub subproblems: usize,
    pub feasible_subproblems: usize,
}

#[derive(Debug, Clone)]
struct Candidate {
    index: usize,
    a_star: usize,
    a_delta: usize,
    j: usize,
    contract: Vec<f64>,
    psi: f64,
    lp_value: f64,
}

/// Best Ψ wins; among equal Ψ the earliest subproblem in enumeration order.
fn better(x: Candidate, y: Candidate) -> Candidate {
    if x.psi > y.psi || (x.psi == y.psi && x.index < y.index) {
        x
    } else {
        y
    }
}

#[derive(Default)]
struct Tally {
    best: Option<Candidate>,
    solved: usize,
    feasible: usize,
}

impl Tally {
    fn merge(self, other: Tally) -> Tally {
        let best = match (self.best, other.best) {
            (Some(x), Some(y)) => Some(better(x, y)),
            (x, y) => x.or(y),
        };
        Tally {
            best,
            solved: self.solved + other.solved,
            feasible: self.feasible + other.feasible,
        }
    }
}

fn solve_pair(
    inst: &Instance,
    delta: f64,
    order: &WelfareOrder,
    a_star: usize,
    a_delta: usize,
) -> Result<Tally, RobustError> {
    let n = inst.n();
    let mut tally = Tally::default();
    // Once a_star falls in the prefix its own row reads 0 <= -δ, so slabs
    // j > position(a_star) + 1 are empty and skipped without solving.
    let last_j = order.position[a_star] + 1;
    for j in 1..=last_j {
        let lp = build_subproblem(inst, a_star, a_delta, j, delta, order);
        let res = solve_lp(&lp).map_err(|source| RobustError::Lp {
            a_star,
            a_delta,
            partition_index: j,
            source,
        })?;
        tally.solved += 1;
        match res.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                return Err(RobustError::Unbounded {
                    a_star,
                    a_delta,
                    partition_index: j,
                })
            }
            LpStatus::Optimal => {}
        }
        tally.feasible += 1;
        let contract = Contract::from_solver(res.solution).into_inner();
        let (_, psi) = worst_delta_response(inst, &contract, delta);
        let cand = Candidate {
            index: (a_star * n + a_delta) * (n + 1) + (j - 1),
            a_star,
            a_delta,
            j,
            contract,
            psi,
            lp_value: res.objective,
        };
        tally.best = Some(match tally.best.take() {
            Some(b) => better(b, cand),
            None => cand,
        });
    }
    Ok(tally)
}

/// Computes an optimal δ-robust contract.
///
/// Subproblems are solved in parallel on the current rayon pool; the
/// reduction keeps the maximum Ψ and breaks ties by enumeration order
/// (`a_star`, then `a_delta`, then `j`), so the result does not depend on
/// the number of threads.
pub fn solve_robust(inst: &Instance, delta: f64) -> Result<RobustSolution, RobustError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ModelError::InvalidDelta(delta).into());
    }
    let report = validate_instance(inst);
    if !report.is_ok() {
        return Err(ModelError::InvalidInstance(report).into());
    }
    let n = inst.n();
    let order = welfare_order(inst);
    let tally = (0..n * n)
        .into_par_iter()
        .map(|pair| solve_pair(inst, delta, &order, pair / n, pair % n))
        .try_reduce(Tally::default, |x, y| Ok(x.merge(y)))?;
    let best = tally.best.ok_or(RobustError::NoFeasibleSubproblem)?;
    Ok(RobustSolution {
        contract: Contract::from_solver(best.contract),
        psi: best.psi,
        a_star: best.a_star,
        a_delta: best.a_delta,
        partition_index: best.j,
        lp_value: best.lp_value,
        subproblems: tally.solved,
        feasible_subproblems: tally.feasible,
    })
}
