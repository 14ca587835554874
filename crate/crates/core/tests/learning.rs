mod common;

use common::{brute_force_projection, max_gradient_error, random_batch, random_distribution};
use mixflow::rl::{
    project_target, select_action, train, Adam, Agent, Checkpoint, Mlp, PrioritizedReplay, Sample, TrainConfig,
    Transition, ValueDistribution,
};
use mixflow::scenario::presets;
use mixflow::zone::{Observation, RvAction, OBS_LEN};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn projection_matches_brute_force_on_odd_supports() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for atoms in [2, 3, 11, 51] {
        for _ in 0..200 {
            let p = random_distribution(&mut rng, atoms);
            let r = rng.random_range(-15.0..15.0);
            let g = rng.random_range(0.0..1.0);
            let term = rng.random_bool(0.2);
            let a = project_target(&p, r, g, term, -3.0, 7.0);
            let b = brute_force_projection(&p, r, g, term, -3.0, 7.0);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9, "atoms {atoms}: {x} vs {y}");
            }
        }
    }
}

proptest! {
    #[test]
    fn projection_conserves_mass(
        raw in prop::collection::vec(0.001f64..1.0, 51),
        r in -20.0f64..20.0,
        g in 0.0f64..1.0,
        term: bool,
    ) {
        let s: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let m = project_target(&p, r, g, term, -10.0, 10.0);
        prop_assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(m.iter().all(|&x| x >= 0.0));
    }
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for sizes in [vec![4, 8, 22], vec![3, 5, 5, 6]] {
        let net = Mlp::init(&sizes, &mut rng);
        let batch = random_batch(&mut rng, sizes[0], sizes[sizes.len() - 1] / 2, 5);
        let err = max_gradient_error(&batch, &net, 1e-4);
        assert!(err < 1e-4, "{sizes:?}: {err}");
    }
}

fn terminal_transition(rng: &mut ChaCha8Rng, reward: f64) -> Transition {
    let mut obs = Observation::zeros();
    for x in obs.0.iter_mut() {
        *x = rng.random();
    }
    Transition {
        obs: obs.clone(),
        action: if rng.random_bool(0.5) { RvAction::Go } else { RvAction::Stop },
        reward,
        next_obs: obs,
        terminal: true,
    }
}

fn tiny_config() -> TrainConfig {
    TrainConfig { hidden: vec![16], atoms: 11, learning_rate: 1e-2, target_sync: 1_000_000, ..TrainConfig::default() }
}

#[test]
fn repeated_steps_overfit_one_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let config = tiny_config();
    let mut agent = Agent::new(config.clone(), &mut rng);
    // rewards on support points make the targets one-hot, so the loss can reach zero
    let z = agent.support().to_vec();
    let transitions: Vec<Transition> = (0..8).map(|k| terminal_transition(&mut rng, z[(3 * k) % z.len()])).collect();
    let sample = Sample { indices: (0..8).collect(), transitions, weights: vec![1.0; 8] };
    let losses: Vec<f64> = (0..100).map(|_| agent.train_step(&sample).unwrap().loss).collect();
    for w in losses[10..].windows(2) {
        assert!(w[1] < w[0], "{:?}", &losses[10..]);
    }
    assert!(losses[99] <= 0.5 * losses[0], "{} -> {}", losses[0], losses[99]);
}

#[test]
fn loss_at_target_distribution_is_its_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut net = Mlp::init(&[OBS_LEN, 6, 22], &mut rng);
    let mut batch = random_batch(&mut rng, OBS_LEN, 11, 4);
    for w in &mut batch.weights {
        *w = 1.0;
    }
    // zero the output layer so every action predicts the uniform distribution
    let out_params = 6 * 22 + 22;
    let n = net.params().len();
    for p in &mut net.params_mut()[n - out_params..] {
        *p = 0.0;
    }
    for t in &mut batch.targets {
        *t = vec![1.0 / 11.0; 11];
    }
    let (loss, _, grad) = batch.loss_and_grad(&net);
    assert!((loss - (11.0f64).ln()).abs() < 1e-12);
    assert!(grad.iter().all(|g| g.abs() < 1e-6));
}

#[test]
fn prioritized_draws_follow_priorities() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut b = PrioritizedReplay::new(2, 0.5);
    b.push(terminal_transition(&mut rng, 0.0));
    b.push(terminal_transition(&mut rng, 0.0));
    b.update_priority(0, 4.0);
    b.update_priority(1, 1.0);
    let draws = 100_000;
    let hits = (0..draws).filter(|_| b.sample(1, 0.4, &mut rng).unwrap().indices[0] == 0).count();
    let freq = hits as f64 / draws as f64;
    assert!((freq - 2.0 / 3.0).abs() < 0.005, "{freq}");
}

#[test]
fn importance_weights_normalized_by_batch_max() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut b = PrioritizedReplay::new(8, 0.5);
    for k in 0..8 {
        b.push(terminal_transition(&mut rng, 0.0));
        b.update_priority(k, 1.0 + k as f64);
    }
    let s = b.sample(4, 1.0, &mut rng).unwrap();
    let n = b.len() as f64;
    let raw: Vec<f64> = s.indices.iter().map(|&i| 1.0 / (n * b.probability(i))).collect();
    let max = raw.iter().copied().fold(0.0, f64::max);
    for (w, r) in s.weights.iter().zip(&raw) {
        assert!((w - r / max).abs() < 1e-12);
    }
}

#[test]
fn exploration_is_a_fair_coin() {
    let dist = ValueDistribution::from_logits(&[0.0; 22], 11);
    let z = mixflow::rl::support(-10.0, 10.0, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let go = (0..10_000).filter(|_| select_action(&dist, &z, 1.0, &mut rng) == RvAction::Go).count();
    assert!((go as f64 / 10_000.0 - 0.5).abs() < 0.015, "{go}");
    assert_eq!(select_action(&dist, &z, 0.0, &mut rng), RvAction::Stop);
}

#[test]
fn adam_matches_hand_computed_first_steps() {
    // two steps on f(x) = x^2 from x = 1 with lr 0.1
    let mut adam = Adam::<f64>::new(1);
    let mut x = vec![1.0];
    let mut expected = 1.0f64;
    let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 0.1);
    let (mut m, mut v) = (0.0, 0.0);
    for t in 1..=2 {
        let g = 2.0 * x[0];
        adam.step(&mut x, &[g], lr);
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t));
        let vh = v / (1.0 - b2.powi(t));
        expected -= lr * mh / (vh.sqrt() + eps);
        assert!((x[0] - expected).abs() < 1e-12, "step {t}: {} vs {expected}", x[0]);
    }
}

#[test]
fn short_training_run_round_trips_through_a_checkpoint() {
    let s = presets::single_intersection();
    let config = TrainConfig {
        iterations: 2,
        episode_horizon: Some(100.0),
        warmup: 64,
        hidden: vec![8],
        ..s.train().clone()
    };
    let out = train(&s, &config).unwrap();
    assert_eq!(out.log.len(), 2);
    assert!(out.grad_steps > 0);
    let bytes = out.checkpoint.to_bytes();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back.net().unwrap().params(), out.checkpoint.params.as_slice());
    let again = train(&s, &config).unwrap();
    assert_eq!(again.checkpoint.to_bytes(), bytes);
}
