mod common;

use common::median;
use mgpi::bellman::{lookahead, Rollout};
use mgpi::game::{sup_distance, GameModel, StochasticPolicyPair};
use mgpi::generate::{random_game_seeded, GeneratorConfig};
use mgpi::linear_fa::StateFeatureScheme;
use mgpi::model_rl::{
    evaluate_against, evaluate_learned_policy, generative_sample_seeded, plan_on_game, plan_on_model, sample_bound,
    ComputationInputs, SampleBoundInputs,
};
use mgpi::planners::{min_lookahead, solve_reference};
use mgpi::stochastic_pi::{
    check_sampled_condition, iteration_rng, sample_return, stochastic_pi, StepSchedule, StochasticConfig, Visitation,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

// E[Σ_{i<m} α^i g + α^m V(s_m)] by explicit matrix powers.
fn expected_return(game: &GameModel, pol: &StochasticPolicyPair, backed: &DVector<f64>, m: usize) -> DVector<f64> {
    let n = game.num_states();
    let mut p = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    for (s, u, v, _) in game.triples() {
        let w = pol.mu[s][u] * pol.nu[s][v];
        g[s] += w * game.reward(s, u, v);
        for &(t, q) in game.successors(s, u, v) {
            p[(s, t)] += w * q;
        }
    }
    let alpha = game.discount();
    let mut total = DVector::zeros(n);
    let mut power = DMatrix::identity(n, n);
    for i in 0..m {
        total += &power * &g * alpha.powi(i as i32);
        power = &power * &p;
    }
    total + power * backed * alpha.powi(m as i32)
}

#[test]
fn sampled_returns_are_unbiased() {
    let game = random_game_seeded(&GeneratorConfig::new(3, 2, 0.8), 17).unwrap();
    let backed = DVector::from_vec(vec![1.0, -0.5, 2.0]);
    let pol = lookahead(&game, &backed, 2).unwrap().policy;
    let mixed = StochasticPolicyPair::uniform(&game);
    for (policy, m) in [(&pol, 3), (&mixed, 5)] {
        let exact = expected_return(&game, policy, &backed, m);
        let mut rng = iteration_rng(123, m);
        for start in 0..3 {
            let draws: Vec<f64> = (0..100_000).map(|_| sample_return(&game, policy, &backed, m, start, &mut rng)).collect();
            let mean = draws.iter().sum::<f64>() / draws.len() as f64;
            let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
            let se = (var / draws.len() as f64).sqrt();
            assert!((mean - exact[start]).abs() <= 3.0 * se + 1e-12, "start {start}: {mean} vs {}", exact[start]);
        }
    }
}

#[test]
fn zero_step_return_is_the_backed_value() {
    let game = random_game_seeded(&GeneratorConfig::new(3, 2, 0.8), 1).unwrap();
    let backed = DVector::from_vec(vec![0.1, 0.2, 0.3]);
    let pol = StochasticPolicyPair::uniform(&game);
    let mut rng = iteration_rng(0, 0);
    assert_eq!(sample_return(&game, &pol, &backed, 0, 2, &mut rng), 0.3);
}

#[test]
fn empirical_transitions_are_close_at_large_n() {
    let game = random_game_seeded(&GeneratorConfig::new(4, 2, 0.7), 8).unwrap();
    let est = generative_sample_seeded(&game, 100_000, 3).unwrap();
    for (s, u, v, _) in game.triples() {
        let mut tv = 0.0;
        let truth = game.successors(s, u, v);
        let guess = est.induced.successors(s, u, v);
        for t in 0..4 {
            let p = truth.iter().find(|e| e.0 == t).map_or(0.0, |e| e.1);
            let q = guess.iter().find(|e| e.0 == t).map_or(0.0, |e| e.1);
            tv += (p - q).abs() / 2.0;
        }
        assert!(tv < 0.02, "({s},{u},{v}) total variation {tv}");
        assert_eq!(game.reward(s, u, v), est.induced.reward(s, u, v));
    }
}

#[test]
fn sampling_does_not_depend_on_thread_count() {
    let game = random_game_seeded(&GeneratorConfig::new(6, 3, 0.7), 2).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| generative_sample_seeded(&game, 500, 9).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn more_samples_give_better_policies() {
    let mut small = Vec::new();
    let mut large = Vec::new();
    for seed in 0..8u64 {
        let game = random_game_seeded(&GeneratorConfig::new(5, 3, 0.5).with_min_actions(2).with_sparsity(1.0), 50 + seed).unwrap();
        let star = solve_reference(&game).unwrap();
        for (n, out) in [(1_000u64, &mut small), (10_000, &mut large)] {
            let est = generative_sample_seeded(&game, n, seed).unwrap();
            let plan = plan_on_model(&est, Rollout::Steps(3), 4, 1e-9).unwrap();
            out.push(evaluate_against(&game, &plan.policy, &star).unwrap().q_error);
        }
    }
    assert!(median(large.clone()) < median(small.clone()), "{large:?} vs {small:?}");
}

#[test]
fn planning_on_the_true_game_meets_the_certificate() {
    for seed in 0..10u64 {
        let game = random_game_seeded(&GeneratorConfig::new(6, 3, 0.8), seed).unwrap();
        for eps in [1e-3, 1e-6] {
            let h = min_lookahead(0.8, Rollout::Steps(3)).unwrap();
            let plan = plan_on_game(&game, Rollout::Steps(3), h, eps).unwrap();
            let eval = evaluate_learned_policy(&game, &plan.policy).unwrap();
            assert!(eval.v_error <= eps, "seed {seed} eps {eps}: {}", eval.v_error);
        }
    }
}

#[test]
fn planning_refuses_a_non_contracting_configuration() {
    let game = random_game_seeded(&GeneratorConfig::new(3, 2, 0.9), 0).unwrap();
    assert!(plan_on_game(&game, Rollout::Steps(1), 1, 1e-3).is_err());
}

#[test]
fn stochastic_runs_are_reproducible() {
    let game = random_game_seeded(&GeneratorConfig::new(5, 2, 0.6), 4).unwrap();
    let scheme = StateFeatureScheme::tabular(5);
    let mut cfg = StochasticConfig::new(3, 2, 30, 77);
    cfg.visitation = Visitation::Sampled { starts_per_iter: 10 };
    let a = stochastic_pi(&game, &scheme, &DVector::zeros(5), &cfg).unwrap();
    let b = stochastic_pi(&game, &scheme, &DVector::zeros(5), &cfg).unwrap();
    assert_eq!(a.thetas, b.thetas);
    cfg.seed = 78;
    let c = stochastic_pi(&game, &scheme, &DVector::zeros(5), &cfg).unwrap();
    assert_ne!(a.thetas, c.thetas);
    assert_eq!(a.thetas.len(), 31);
    assert_eq!(a.trace.len(), 31);
}

#[test]
fn stochastic_iterates_approach_the_game_value() {
    let game = random_game_seeded(&GeneratorConfig::new(4, 2, 0.5), 12).unwrap();
    let star = solve_reference(&game).unwrap();
    let scheme = StateFeatureScheme::tabular(4);
    let mut cfg = StochasticConfig::new(3, 4, 2000, 5);
    cfg.reference = Some(star.clone());
    let out = stochastic_pi(&game, &scheme, &DVector::zeros(4), &cfg).unwrap();
    let err = sup_distance(&scheme.values(out.thetas.last().unwrap()), &star);
    assert!(err < 0.05, "final error {err}");
}

#[test]
fn unvisited_states_get_zero_in_the_padded_fit() {
    let game = random_game_seeded(&GeneratorConfig::new(6, 2, 0.6), 4).unwrap();
    let scheme = StateFeatureScheme::tabular(6);
    let mut cfg = StochasticConfig::new(2, 1, 1, 3);
    cfg.visitation = Visitation::Sampled { starts_per_iter: 2 };
    cfg.schedule = StepSchedule::Explicit(vec![1.0]);
    let out = stochastic_pi(&game, &scheme, &DVector::zeros(6), &cfg).unwrap();
    let batch = out.last_batch.unwrap();
    let padded = batch.padded(6);
    for s in 0..6 {
        if !batch.visited.contains(&s) {
            assert_eq!(padded[s], 0.0);
            assert!(out.thetas[1][s].abs() <= 1e-12);
        }
    }
}

#[test]
fn bad_schedules_are_rejected() {
    let game = random_game_seeded(&GeneratorConfig::new(3, 2, 0.6), 4).unwrap();
    let scheme = StateFeatureScheme::tabular(3);
    let mut cfg = StochasticConfig::new(2, 1, 3, 3);
    cfg.schedule = StepSchedule::Harmonic { c: 1.0, p: 0.5 };
    assert!(stochastic_pi(&game, &scheme, &DVector::zeros(3), &cfg).is_err());
    cfg.schedule = StepSchedule::Explicit(vec![0.5, 0.5]);
    assert!(stochastic_pi(&game, &scheme, &DVector::zeros(3), &cfg).is_err());
}

#[test]
fn iteration_streams_are_distinct() {
    let a: u64 = iteration_rng(1, 0).random();
    let b: u64 = iteration_rng(1, 1).random();
    let c: u64 = iteration_rng(1, 0).random();
    assert_ne!(a, b);
    assert_eq!(a, c);
}

#[test]
fn sampled_condition_reduces_to_its_parts() {
    let r = check_sampled_condition(0.5, Rollout::Infinite, 3, 7.0).unwrap();
    assert!((r.lhs - 1.0).abs() <= 1e-15);
    assert!(!r.satisfied);
    let r = check_sampled_condition(0.5, Rollout::Steps(2), 4, 1.0).unwrap();
    let expected = 0.25 * 0.125 * 1.5 / 0.5 + 2.0 * 0.125 / 0.5;
    assert!((r.lhs - expected).abs() <= 1e-15);
    assert!(r.satisfied);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sample_bound_is_monotone(
        alpha in 0.1f64..0.95, eps_frac in 0.05f64..1.0, delta in 0.01f64..0.5, states in 1u64..50, acts in 1u64..5,
    ) {
        let eps = eps_frac * (1.0 - alpha).powf(-0.5);
        let base = sample_bound(&SampleBoundInputs::new(alpha, eps, delta, states, acts, acts)).unwrap().n_required;
        let more_states = sample_bound(&SampleBoundInputs::new(alpha, eps, delta, states + 1, acts, acts)).unwrap().n_required;
        let smaller_eps = sample_bound(&SampleBoundInputs::new(alpha, eps * 0.9, delta, states, acts, acts)).unwrap().n_required;
        let smaller_delta = sample_bound(&SampleBoundInputs::new(alpha, eps, delta * 0.9, states, acts, acts)).unwrap().n_required;
        prop_assert!(base >= 1);
        prop_assert!(more_states >= base);
        prop_assert!(smaller_eps >= base);
        prop_assert!(smaller_delta >= base);
    }

    #[test]
    fn computation_bound_only_for_contracting_finite_rollouts(h in 1usize..10, m in 1usize..6) {
        let mut inputs = SampleBoundInputs::new(0.5, 0.5, 0.1, 5, 2, 2);
        inputs.computation = Some(ComputationInputs { m: Rollout::Steps(m), horizon: h, eps_opt: 1e-6, d: 4, r: 3, a_max: 2 });
        let rep = sample_bound(&inputs).unwrap();
        let tilde = rep.alpha_tilde.unwrap();
        prop_assert_eq!(rep.c_ops.is_some(), tilde < 1.0);
        inputs.computation = Some(ComputationInputs { m: Rollout::Infinite, horizon: h, eps_opt: 1e-6, d: 4, r: 3, a_max: 2 });
        prop_assert!(sample_bound(&inputs).unwrap().c_ops.is_none());
    }
}
