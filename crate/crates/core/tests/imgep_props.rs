use imgep::goalspace::{GoalModule, GoalSampler, LatentVector};
use imgep::imgep::*;
use imgep::sim::{Context, Parameterization, BALL_INIT, THETA_DIM};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_policy(rng: &mut ChaCha8Rng, n: usize, dims: usize) -> (MetaPolicy, Vec<(Context, Parameterization, Vec<f64>)>) {
    let module = GoalModule { index: 0, dims: (0..dims).collect(), sampler: GoalSampler::GaussianPrior };
    let entries: Vec<(Context, Parameterization, Vec<f64>)> = (0..n)
        .map(|_| {
            let c = Context::sample(rng);
            let e: Vec<f64> = (0..dims).map(|_| rng.random_range(-1.0..1.0)).collect();
            (c, Parameterization::random(rng), e)
        })
        .collect();
    let boot: Vec<_> = entries.iter().map(|(c, t, e)| (*c, t.clone(), LatentVector(e.clone()))).collect();
    (MetaPolicy::init(&boot, &[module]).unwrap(), entries)
}

/// Exhaustive scan written directly over the raw entries.
fn brute_force(entries: &[(Context, Parameterization, Vec<f64>)], ctx: &Context, tau: &[f64]) -> Parameterization {
    let mut best = (f64::INFINITY, 0);
    for (i, (c, _, e)) in entries.iter().enumerate() {
        let mut d = 0.0;
        for (a, b) in c.as_array().iter().zip(ctx.as_array().iter()) {
            d += (a - b).powi(2);
        }
        for (a, b) in e.iter().zip(tau) {
            d += (a - b).powi(2);
        }
        if d < best.0 {
            best = (d, i);
        }
    }
    entries[best.1].1.clone()
}

#[test]
fn nearest_neighbour_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mp, entries) = random_policy(&mut rng, 200, 2);
    for _ in 0..50 {
        let ctx = Context::sample(&mut rng);
        let tau = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let got = mp.infer(&ctx, &tau, 0, 0.0, &mut rng).unwrap();
        assert_eq!(got, brute_force(&entries, &ctx, &tau));
    }
}

#[test]
fn self_retrieval_after_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let module = GoalModule { index: 0, dims: vec![0, 1], sampler: GoalSampler::GaussianPrior };
    let (mut mp, _) = random_policy(&mut rng, 30, 2);
    let ctx = Context::new([0.11, -0.42], BALL_INIT).unwrap();
    let theta = Parameterization::new([0.33; THETA_DIM]).unwrap();
    let e = LatentVector(vec![0.7, -0.7]);
    mp.update(&ctx, &theta, &e, std::slice::from_ref(&module));
    assert_eq!(mp.database(0).unwrap().len(), 31);
    assert_eq!(mp.infer(&ctx, &[0.7, -0.7], 0, 0.0, &mut rng).unwrap(), theta);
}

fn engineered_mge(n: usize, seed: u64) -> ExplorationHistory {
    let gsc = GoalSpaceConfig::engineered();
    let gs = gsc.build().unwrap();
    run_exploration(&ExplorationConfig::new(Algorithm::Mge, gsc, n, seed), &gs).unwrap()
}

#[test]
fn rpe_records_have_no_goals() {
    let gsc = GoalSpaceConfig::engineered();
    let gs = gsc.build().unwrap();
    let h = run_exploration(&ExplorationConfig::new(Algorithm::Rpe, gsc, 10, 0), &gs).unwrap();
    assert_eq!(h.len(), 10);
    assert!(h.modules.is_empty());
    for (i, r) in h.records.iter().enumerate() {
        assert_eq!(r.episode, i);
        assert!(r.module.is_none() && r.goal.is_none() && r.cost.is_none());
        assert!(r.upsilon.is_empty());
    }
}

#[test]
fn same_seed_same_log_bytes() {
    let a = engineered_mge(400, 3);
    let b = engineered_mge(400, 3);
    let (mut la, mut lb) = (Vec::new(), Vec::new());
    a.write_jsonl(&mut la).unwrap();
    b.write_jsonl(&mut lb).unwrap();
    assert_eq!(la, lb);
    assert_ne!(a, engineered_mge(400, 4));
}

#[test]
fn log_round_trip_is_exact() {
    let h = engineered_mge(300, 8);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.jsonl");
    h.save(&path).unwrap();
    assert_eq!(ExplorationHistory::load(&path).unwrap(), h);
}

#[test]
fn interest_only_moves_for_sampled_module() {
    let h = engineered_mge(600, 1);
    for w in h.records.windows(2) {
        let (prev, cur) = (&w[0], &w[1]);
        for k in 0..h.modules.len() {
            if cur.module != Some(k) {
                assert_eq!(cur.upsilon[k], prev.upsilon[k], "episode {}", cur.episode);
            }
        }
    }
}

#[test]
fn replay_reconstructs_interest_and_probabilities() {
    let h = engineered_mge(800, 2);
    let replay = replay_interest(&h);
    for (r, (u, p)) in h.records.iter().zip(replay) {
        assert_eq!(r.upsilon, u);
        assert_eq!(r.p, p);
    }
}

#[test]
fn probabilities_keep_exploration_floor() {
    let h = engineered_mge(800, 6);
    for r in &h.records {
        assert!((r.p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        if r.upsilon.iter().any(|u| *u > 0.0) {
            assert!(r.p.iter().all(|p| *p >= 0.1 / r.p.len() as f64 - 1e-12));
        }
    }
}

#[test]
fn goals_and_costs_are_consistent() {
    let h = engineered_mge(500, 9);
    for r in &h.records[100..] {
        let k = r.module.unwrap();
        let goal = r.goal.as_ref().unwrap();
        assert_eq!(goal.len(), h.modules[k].dims.len());
        assert!(goal.iter().all(|v| (-1.0..=1.0).contains(v)));
        let achieved = h.modules[k].project(&r.embedding);
        let c: f64 = achieved.iter().zip(goal).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert_eq!(r.cost, Some(c));
    }
    assert!(h.records[..100].iter().all(|r| r.module.is_none()));
}

#[test]
fn ball_module_wins_in_a_scaled_run() {
    let h = engineered_mge(2000, 0);
    let tail = &h.records[1500..];
    let ball = tail.iter().filter(|r| r.module == Some(0)).count();
    let distractor = tail.iter().filter(|r| r.module == Some(1)).count();
    assert!(ball > distractor, "ball {ball} vs distractor {distractor}");
}

#[test]
fn config_validation() {
    let gs = GoalSpaceConfig::engineered().build().unwrap();
    let mut cfg = ExplorationConfig::new(Algorithm::Mge, GoalSpaceConfig::engineered(), 10, 0);
    cfg.n_bootstrap = 1;
    assert!(matches!(run_exploration(&cfg, &gs), Err(ExploreError::Config(_))));
    cfg.n_bootstrap = 5;
    cfg.exploration_noise = -0.1;
    assert!(matches!(run_exploration(&cfg, &gs), Err(ExploreError::Config(_))));
    cfg.exploration_noise = 0.1;
    cfg.sigma_d = f64::NAN;
    assert!(matches!(run_exploration(&cfg, &gs), Err(ExploreError::Config(_))));
    let missing = GoalSpaceConfig { encoder_path: None, ..GoalSpaceConfig::mixed(0) };
    let cnn = GoalSpaceConfig { encoder: imgep::goalspace::EncoderKind::Cnn, ..missing };
    assert!(matches!(cnn.build(), Err(ExploreError::Config(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn database_sizes_track_episodes(seed in 0u64..1000, n in 110usize..260, boot in 2usize..40) {
        let gsc = GoalSpaceConfig::engineered();
        let gs = gsc.build().unwrap();
        let mut cfg = ExplorationConfig::new(Algorithm::Mge, gsc, n, seed);
        cfg.n_bootstrap = boot;
        let h = run_exploration(&cfg, &gs).unwrap();
        // every episode's outcome reached every module's archive
        let after_boot = h.records.iter().filter(|r| r.module.is_some()).count();
        prop_assert_eq!(after_boot, n - boot);
        let counts: Vec<usize> = (0..2).map(|k| h.records.iter().filter(|r| r.module == Some(k)).count()).collect();
        prop_assert_eq!(counts.iter().sum::<usize>(), n - boot);
    }
}
