use kmtl::env::{Environment, SyntheticNews, SyntheticNewsConfig};
use kmtl::history::History;
use kmtl::kernel::{ArmDescriptor, AugmentedContext, Context, KernelRole, KernelSpec, ProductKernel, TaskSimilarity};
use kmtl::policy::{
    base_kmtl_ucb, run_episode, sup_levels, Branch, FixedArm, KernelUcbInd, KernelUcbPool, KmtlUcb, OraclePolicy,
    Policy, PolicyConfig, SimilaritySource, SupKmtlUcb,
};
use kmtl::regressor::RegressionMode;
use proptest::prelude::*;

fn ctx(v: &[f64]) -> Context {
    Context::new(v.to_vec()).unwrap()
}

fn gauss() -> KernelSpec {
    KernelSpec::gaussian(1.0, KernelRole::Context).unwrap()
}

fn config(horizon: usize, beta: f64, regression: RegressionMode) -> PolicyConfig {
    PolicyConfig {
        beta,
        regression,
        ..PolicyConfig::theoretical(horizon, 2)
    }
}

fn kmtl(n: usize, ts: TaskSimilarity, cfg: PolicyConfig) -> KmtlUcb {
    KmtlUcb::new("kmtl-ucb", n, gauss(), SimilaritySource::Fixed(ts), cfg).unwrap()
}

fn synthetic(seed: u64, stream: u64) -> SyntheticNews {
    SyntheticNews::new(SyntheticNewsConfig::new(5).unwrap(), seed, stream).unwrap()
}

#[test]
fn equal_indices_pick_lowest_arm() {
    let mut p = kmtl(3, TaskSimilarity::independent(3), config(10, 1.0, RegressionMode::Weighted));
    let x = [ctx(&[0.2, 0.1]), ctx(&[0.2, 0.1]), ctx(&[0.2, 0.1])];
    assert_eq!(p.choose(1, &x, None).unwrap().arm, 0);
}

#[test]
fn zero_beta_is_greedy() {
    let mut p = kmtl(2, TaskSimilarity::independent(2), config(10, 0.0, RegressionMode::Weighted));
    let x = [ctx(&[0.0]), ctx(&[0.0])];
    let d = p.choose(1, &x, None).unwrap();
    p.observe(1, d.arm, 0.1).unwrap();
    // Arm 0 now estimates 0.05 against 0 for the unplayed arm 1.
    assert_eq!(p.choose(2, &x, None).unwrap().arm, 0);
    p.observe(2, 0, 0.0).unwrap();
    let d = p.choose(3, &x, None).unwrap();
    let best = d.indices.iter().map(|u| u.estimate).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(d.indices[d.arm].estimate, best);
}

#[test]
fn single_observation_index() {
    let mut p = kmtl(1, TaskSimilarity::independent(1), config(10, 1.0, RegressionMode::Unweighted));
    let x = [ctx(&[0.3])];
    p.choose(1, &x, None).unwrap();
    p.observe(1, 0, 1.0).unwrap();
    let u = p.indices(&x).unwrap();
    assert!((u[0].estimate - 0.5).abs() < 1e-12);
    assert!((u[0].width - 0.5f64.sqrt()).abs() < 1e-12);
    assert!((u[0].index - 1.20711).abs() < 1e-5);
}

#[test]
fn level_count_for_eight_rounds() {
    assert_eq!(sup_levels(8), 3);
    assert_eq!(sup_levels(128), 5);
    assert_eq!(sup_levels(1), 1);
}

#[test]
fn first_sup_round_explores_level_one() {
    let cfg = config(8, 1.0, RegressionMode::Unweighted);
    let mut p = SupKmtlUcb::new("sup", gauss(), TaskSimilarity::independent(2), cfg).unwrap().with_log();
    let d = p.choose(1, &[ctx(&[0.0]), ctx(&[1.0])], None).unwrap();
    assert_eq!(d.arm, 0);
    assert_eq!(p.log()[0].branch, Branch::Explore);
    assert_eq!(p.state().psi(1), &[0]);
    assert_eq!(p.state().levels(), 3);
}

#[test]
fn zero_widths_exploit() {
    let cfg = config(8, 1.0, RegressionMode::Unweighted);
    let linear = KernelSpec::linear(KernelRole::Context);
    let mut p = SupKmtlUcb::new("sup", linear, TaskSimilarity::independent(2), cfg).unwrap().with_log();
    let d = p.choose(1, &[ctx(&[0.0]), ctx(&[0.0])], None).unwrap();
    assert_eq!(d.arm, 0);
    assert_eq!(p.log()[0].branch, Branch::Exploit);
    assert!(p.state().sets().iter().all(Vec::is_empty));
}

#[test]
fn base_with_one_round() {
    let kernel = ProductKernel::new(TaskSimilarity::independent(1), gauss()).unwrap();
    let mut h = History::new(1);
    let x = AugmentedContext::new(ArmDescriptor::Arm(0), ctx(&[0.4, 0.4]));
    h.push(1, 0, x.clone(), 0.8).unwrap();
    let s = base_kmtl_ucb(&h, &[0], &[0], &[x], &kernel, &config(8, 1.0, RegressionMode::Unweighted)).unwrap();
    assert!((s[0].estimate - 0.4).abs() < 1e-12);
    assert!((s[0].width - 0.5f64.sqrt()).abs() < 1e-12);
    // An empty set leaves the prior estimate and width.
    let s = base_kmtl_ucb(&h, &[], &[0], &[h.records()[0].context.clone()], &kernel, &config(8, 1.0, RegressionMode::Unweighted))
        .unwrap();
    assert_eq!(s[0].estimate, 0.0);
    assert!((s[0].width - 1.0).abs() < 1e-12);
}

#[test]
fn oracle_has_zero_regret() {
    let out = run_episode(&mut synthetic(1, 0), &mut OraclePolicy, 200, false).unwrap();
    assert!(out.cum_regret.iter().all(|&r| r == 0.0));
}

#[test]
fn fixed_arm_regret_matches_gaps() {
    let mut env = synthetic(5, 2);
    let out = run_episode(&mut env, &mut FixedArm::new(4), 100, false).unwrap();
    let mut replay = synthetic(5, 2);
    let mut total = 0.0;
    for t in 0..100 {
        let obs = replay.next_round().unwrap().unwrap();
        total += obs.best_expected() - obs.expected[4];
        assert!((out.cum_regret[t] - total).abs() < 1e-12);
    }
    assert!(total > 0.0);
}

#[test]
fn kernel_policy_regret_nondecreasing_and_deterministic() {
    let run = || {
        let mut p = kmtl(5, SyntheticNewsConfig::new(5).unwrap().known_similarity(None).unwrap(), config(120, 1.0, RegressionMode::Weighted));
        run_episode(&mut synthetic(9, 1), &mut p, 120, true).unwrap()
    };
    let a = run();
    assert!(a.cum_regret.windows(2).all(|w| w[1] >= w[0]));
    let b = run();
    assert_eq!(a.actions, b.actions);
    assert_eq!(a.cum_regret, b.cum_regret);
    assert_eq!(a.width_audit.violations, 0);
    assert!(a.width_audit.checks > 0);
    assert!(a.lookahead.is_some());
}

fn actions(p: &mut dyn Policy, seed: u64, horizon: usize) -> Vec<usize> {
    run_episode(&mut synthetic(seed, 0), p, horizon, false).unwrap().actions
}

#[test]
fn specializations_match_reference_policies() {
    for mode in [RegressionMode::Weighted, RegressionMode::Unweighted] {
        for seed in 0..3 {
            let cfg = config(60, 0.7, mode);
            let mut pooled = kmtl(5, TaskSimilarity::pooled(5), cfg.clone());
            let mut reference = KernelUcbPool::new("pool", 5, gauss(), cfg.clone()).unwrap();
            assert_eq!(actions(&mut pooled, seed, 60), actions(&mut reference, seed, 60));
            let mut ind = kmtl(5, TaskSimilarity::independent(5), cfg.clone());
            let mut reference = KernelUcbInd::new("ind", 5, gauss(), cfg).unwrap();
            assert_eq!(actions(&mut ind, seed, 60), actions(&mut reference, seed, 60));
        }
    }
}

#[test]
fn sup_walk_invariants() {
    let horizon = 40;
    let cfg = config(horizon, 1.0, RegressionMode::Unweighted);
    let ts = SyntheticNewsConfig::new(5).unwrap().known_similarity(None).unwrap();
    let mut p = SupKmtlUcb::new("sup", gauss(), ts, cfg).unwrap().with_log();
    let out = run_episode(&mut synthetic(3, 0), &mut p, horizon, true).unwrap();
    let mut seen = std::collections::HashSet::new();
    for set in p.state().sets() {
        for &i in set {
            assert!(seen.insert(i), "history position {i} in two sets");
        }
    }
    let mut rounds = p.log().chunk_by(|a, b| a.round == b.round);
    for t in 1..=horizon {
        let walk = rounds.next().unwrap();
        assert!(walk.iter().all(|s| s.round == t));
        for (i, s) in walk.iter().enumerate() {
            assert_eq!(s.level, i + 1);
            let last = i + 1 == walk.len();
            assert_eq!(s.branch != Branch::Filter, last);
        }
        let last = walk.last().unwrap();
        let chosen = out.actions[t - 1];
        assert!(last.active.contains(&chosen));
    }
    assert!(rounds.next().is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn positive_reward_scaling_keeps_choices(scale in 0.1f64..10.0, seed in 0u64..1000) {
        let horizon = 30;
        let base = config(horizon, 0.8, RegressionMode::Weighted);
        let scaled = PolicyConfig { beta: base.beta * scale, ..base.clone() };
        let mut a = kmtl(3, TaskSimilarity::independent(3), base);
        let mut b = kmtl(3, TaskSimilarity::independent(3), scaled);
        let mut env = synthetic(seed, 0);
        for t in 1..=horizon {
            let obs = env.next_round().unwrap().unwrap();
            let x = &obs.contexts[..3];
            let da = a.choose(t, x, None).unwrap();
            let db = b.choose(t, x, None).unwrap();
            prop_assert_eq!(da.arm, db.arm);
            a.observe(t, da.arm, obs.expected[da.arm]).unwrap();
            b.observe(t, db.arm, scale * obs.expected[db.arm]).unwrap();
        }
    }
}
