//! Optimal contracts for hidden-action principal-agent problems in which the
//! agent may play any δ-approximate best response.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: instances, contracts, utilities and (δ-)best responses.
//! - [`lp`]: a small dense simplex solver with Bland's pivoting rule.
//! - [`robust`]: exact computation of an optimal δ-robust contract by
//!   enumerating action pairs and welfare partitions.
//! - [`baseline`]: non-robust optimum, social welfare, price-of-robustness
//!   bounds and the reward-direction contract shift.
//! - [`generators`]: tight instance families and seeded random instances.
//! - [`oracle`]: brute-force grid references.
//! - [`learning`]: UCB1 over a contract lattice against typed δ-best-responding
//!   agents, with pseudo-regret accounting.
//! - [`format`]: the JSON instance file format.

pub mod baseline;
pub mod format;
pub mod generators;
pub mod learning;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod robust;

pub use baseline::{
    bounds, opt_nonrobust, shift_contract, social_welfare, BoundsReport, NonRobustOpt,
};
pub use lp::{solve_lp, LinearProgram, LpError, LpResult, LpStatus, Relation};
pub use model::{
    agent_utility, delta_best_responses, optimistic_best_response, principal_utility,
    response_report, validate_instance, worst_delta_response, Contract, Instance, Labels,
    MembershipMode, ModelError, ResponseReport, ValidationReport,
};
pub use robust::{
    build_subproblem, solve_robust, welfare_order, RobustError, RobustSolution, WelfareOrder,
};

/// Slack used when deciding δ-best-response membership.
///
/// An action belongs to the δ-set iff its utility exceeds `max - δ` by more
/// than this amount, so LP optima that sit exactly on the excluded boundary
/// stay excluded despite rounding.
pub const TAU_MEM: f64 = 1e-7;

/// Feasibility / optimality tolerance for linear programs.
pub const TAU_LP: f64 = 1e-9;

/// Allowed deviation of an outcome distribution's total mass from one.
pub const ROW_SUM_TOL: f64 = 1e-9;
