use bandit_oco::conclab::summarize_many;
use bandit_oco::engine::{comparator, regret, run, RunConfig};
use bandit_oco::losses::AdversarySpec;
use bandit_oco::stats::quantile_nearest_rank;

#[test]
fn median_regret_of_centered_quadratic_is_small() {
    let base = RunConfig::fixed_quadratic_ball(2, 10_000, vec![0.0, 0.0], 1.0).with_seed(3, 0);
    let runs = summarize_many(&base, 50).unwrap();
    let regrets: Vec<f64> = runs.iter().map(|s| s.breakdown.regret).collect();
    let median = quantile_nearest_rank(&regrets, 0.5).unwrap();
    let g = runs[0].declared_g;
    let scale = 2.0 * g * g * (10_000f64).ln();
    assert!(median >= 0.0, "{median}");
    assert!(median <= 20.0 * scale, "median {median} vs 20 d G^2 ln T / mu = {}", 20.0 * scale);
    assert!(runs.iter().all(|s| s.feasible && s.norm_cap_ratio <= 1.0));
}

#[test]
fn player_cost_floor_for_fixed_losses() {
    for (center, seed) in [(vec![0.0, 0.0, 0.0], 1), (vec![0.4, -0.2, 0.1], 2), (vec![3.0, 0.0, 0.0], 3)] {
        let cfg = RunConfig::fixed_quadratic_ball(3, 3_000, center, 1.5).with_seed(seed, 0);
        let trace = run(&cfg).unwrap();
        let b = regret(&trace, &comparator(&trace).unwrap()).unwrap();
        let floor = b.comparator_cost - 2.0 * trace.rounds.len() as f64 * trace.declared_g * trace.alpha();
        assert!(b.player_cost >= floor);
    }
}

#[test]
fn summaries_agree_with_traces_for_every_adversary() {
    for adversary in [
        AdversarySpec::Fixed { center: None, center_scale: Some(2.0), curvature: 1.0, slope: None },
        AdversarySpec::Shifting { rho: 0.5, curvature: 1.0, step: None },
        AdversarySpec::Adaptive { rho: 0.7, curvature: 2.0 },
    ] {
        let cfg = RunConfig { adversary, ..RunConfig::fixed_quadratic_ball(4, 500, vec![0.0; 4], 1.0) }.with_seed(9, 0);
        let runs = summarize_many(&cfg, 3).unwrap();
        for (i, s) in runs.iter().enumerate() {
            let trace = run(&cfg.clone().with_seed(9, i as u64)).unwrap();
            let x = comparator(&trace).unwrap();
            let b = regret(&trace, &x).unwrap();
            assert!((s.breakdown.regret - b.regret).abs() <= 1e-9 * b.regret.abs().max(1.0));
            assert_eq!(s.comparator, x);
        }
    }
}
