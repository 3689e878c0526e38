use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust_contracts::generators::gen_tight_ub;
use robust_contracts::learning::{
    compute_baselines, environment_step, run_ucb1, LearnConfig, TypedInstance, Ucb1,
};
use robust_contracts::oracle::GridSpec;
use robust_contracts::Instance;

fn tight_ub() -> TypedInstance {
    TypedInstance::single(gen_tight_ub(0.2).unwrap())
}

#[test]
fn tight_ub_baselines() {
    let (robust, nonrobust) =
        compute_baselines(&tight_ub(), 0.2, &GridSpec::unit(0.01).unwrap()).unwrap();
    assert!((robust - 0.8).abs() < 1e-12);
    assert!((nonrobust - 1.0).abs() < 1e-12);

    let coarse = compute_baselines(&tight_ub(), 0.2, &GridSpec::unit(0.3).unwrap()).unwrap();
    assert!(robust >= coarse.0 && nonrobust >= coarse.1);
}

#[test]
fn degenerate_type_has_zero_baselines() {
    let inst = Instance::new(vec![vec![1.0, 0.0]], vec![0.0, 0.5], vec![0.0]).unwrap();
    let (r, nr) = compute_baselines(
        &TypedInstance::single(inst),
        0.2,
        &GridSpec::unit(0.1).unwrap(),
    )
    .unwrap();
    assert_eq!((r, nr), (0.0, 0.0));
}

#[test]
fn learner_only_sees_arm_and_utility() {
    let mut cfg = LearnConfig::new(3000, 0.2, 17);
    cfg.oracle_step = Some(0.05);
    let run = run_ucb1(&tight_ub(), &cfg).unwrap();
    let mut replay = Ucb1::new(run.arms.len());
    for r in &run.records {
        assert_eq!(replay.select(), r.arm);
        replay.update(r.arm, r.realized_utility);
    }
}

#[test]
fn exact_accounting_matches_monte_carlo() {
    let a = gen_random_typed();
    let mut cfg = LearnConfig::new(40_000, 0.1, 3);
    cfg.oracle_step = Some(0.1);
    let run = run_ucb1(&a, &cfg).unwrap();
    let realized: f64 = run.records.iter().map(|r| r.realized_utility).sum();
    let expected: f64 = run.records.iter().map(|r| r.expected_utility).sum();
    let variance: f64 = run
        .records
        .iter()
        .map(|r| run.arm_stats[r.arm].variance)
        .sum();
    assert!(
        (realized - expected).abs() <= 3.0 * variance.sqrt(),
        "realized {realized} expected {expected} sd {}",
        variance.sqrt()
    );
    assert!(run
        .records
        .iter()
        .all(|r| (-1.0..=1.0).contains(&r.realized_utility)));
}

fn gen_random_typed() -> TypedInstance {
    let a = robust_contracts::generators::gen_random(3, 2, 5, true);
    let mut b = robust_contracts::generators::gen_random(3, 2, 6, true);
    b.rewards = a.rewards.clone();
    TypedInstance::from_instances(vec![a, b], vec![0.3, 0.7]).unwrap()
}

#[test]
fn environment_is_reproducible() {
    let t = gen_random_typed();
    let trace = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..100)
            .map(|_| environment_step(&t, &[0.1, 0.4], 0.2, &mut rng))
            .collect::<Vec<_>>()
    };
    assert_eq!(trace(8), trace(8));
}

#[test]
fn regret_decomposition_holds() {
    let t = gen_random_typed();
    for seed in 0..5 {
        let mut cfg = LearnConfig::new(5000, 0.2, seed);
        cfg.oracle_step = Some(0.02);
        let run = run_ucb1(&t, &cfg).unwrap();
        for r in &run.records {
            let bound = r.cum_regret_robust.unwrap() + 2.0 * 0.2f64.sqrt() * r.round as f64 + 1e-6;
            assert!(r.cum_regret_nonrobust.unwrap() <= bound);
        }
    }
}
