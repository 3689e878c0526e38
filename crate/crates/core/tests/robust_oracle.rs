//! The exact solver against grid search, closed-form bounds and the tight
//! families.

use std::time::Instant;

use robust_contracts::generators::{gen_random, gen_tight_lb, gen_tight_ub};
use robust_contracts::model::psi;
use robust_contracts::oracle::{grid_psi_max, GridSpec};
use robust_contracts::{bounds, build_subproblem, solve_robust, welfare_order, TAU_LP};

#[test]
fn dominates_grid_on_small_instances() {
    let grid = GridSpec::unit(0.02).unwrap();
    for seed in 0..40 {
        let n = 1 + (seed as usize % 4);
        let inst = gen_random(n, 2, seed, true);
        for delta in [0.1, 0.3] {
            let sol = solve_robust(&inst, delta).unwrap();
            let reference = grid_psi_max(&inst, delta, &grid).unwrap();
            assert!(
                sol.psi >= reference.value - 1e-6,
                "seed {seed} delta {delta}: {} < grid {}",
                sol.psi,
                reference.value
            );
        }
    }
}

#[test]
fn returned_contract_is_feasible_for_its_subproblem() {
    for seed in 0..30 {
        let inst = gen_random(4, 3, seed, true);
        let sol = solve_robust(&inst, 0.15).unwrap();
        assert_eq!(sol.psi, psi(&inst, &sol.contract, 0.15));
        let lp = build_subproblem(
            &inst,
            sol.a_star,
            sol.a_delta,
            sol.partition_index,
            0.15,
            &welfare_order(&inst),
        );
        assert!(lp.is_feasible(&sol.contract, TAU_LP));
        assert!(sol.psi >= sol.lp_value - 1e-9);
    }
}

#[test]
fn sandwiched_by_bounds_and_monotone() {
    for seed in 100..160 {
        let inst = gen_random(1 + seed as usize % 5, 2 + seed as usize % 3, seed, true);
        let mut previous = f64::INFINITY;
        for delta in [0.05, 0.1, 0.2, 0.3, 0.5] {
            let value = solve_robust(&inst, delta).unwrap().psi;
            let b = bounds(&inst, delta).unwrap();
            assert!(
                b.lb - 1e-6 <= value && value <= b.ub + 1e-6,
                "seed {seed} delta {delta}"
            );
            assert!(value <= previous + 1e-6);
            previous = value;
        }
    }
}

#[test]
fn tight_ub_family() {
    for delta in [0.1, 0.25, 0.5] {
        let start = Instant::now();
        let sol = solve_robust(&gen_tight_ub(delta).unwrap(), delta).unwrap();
        assert!((sol.psi - (1.0 - delta)).abs() <= 1e-6);
        assert!(start.elapsed().as_secs_f64() < 1.0);
    }
}

#[test]
fn tight_lb_family_small() {
    let delta: f64 = 0.25;
    let n = 10;
    let sol = solve_robust(&gen_tight_lb(delta, n).unwrap(), delta).unwrap();
    let lb = 1.0 - 2.0 * delta.sqrt() + delta;
    assert!(sol.psi >= lb - 1e-6, "{}", sol.psi);
    assert!(
        sol.psi <= lb + delta.sqrt() / n as f64 + 1e-6,
        "{}",
        sol.psi
    );
}
