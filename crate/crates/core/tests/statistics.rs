//! Chi-squared uniformity checks on the stochastic pieces: replay sampling,
//! environment resets, and fully random (epsilon = 1) action selection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use catch_options::agent::select_action;
use catch_options::env::{BallType, CatchEnv, TransferMode};
use catch_options::replay::{ReplayBuffer, Transition};

/// p-value of the chi-squared goodness-of-fit test against a uniform
/// distribution over `counts.len()` bins.
fn uniform_p_value(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

fn tagged_transition(tag: f64) -> Transition {
    let env = CatchEnv::reset_at(TransferMode::Positive, BallType::White, 0, 0);
    Transition {
        observation: env.observation().clone(),
        action: 1,
        reward: tag,
        next_observation: env.observation().clone(),
        terminal: false,
    }
}

#[test]
fn replay_sampling_is_uniform() {
    let bins = 50;
    let mut buf = ReplayBuffer::new(bins);
    for i in 0..bins {
        buf.push(tagged_transition(i as f64));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut counts = vec![0u64; bins];
    for _ in 0..200 {
        for t in buf.sample(bins, &mut rng).unwrap() {
            counts[t.reward as usize] += 1;
        }
    }
    let p = uniform_p_value(&counts);
    println!("replay uniformity: p = {p:.4}");
    assert!(p > 0.01, "replay sampling skewed, p = {p}");
}

#[test]
fn reset_ball_column_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = vec![0u64; 24];
    for ep in 0..4800u64 {
        let env = CatchEnv::reset(TransferMode::Positive, ep, &mut rng);
        counts[env.state.ball_col] += 1;
    }
    let p = uniform_p_value(&counts);
    println!("ball-column uniformity: p = {p:.4}");
    assert!(p > 0.01, "reset ball columns skewed, p = {p}");
}

#[test]
fn reset_paddle_position_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut counts = vec![0u64; 23];
    for ep in 0..4600u64 {
        let env = CatchEnv::reset(TransferMode::Positive, ep, &mut rng);
        counts[env.state.paddle_left] += 1;
    }
    let p = uniform_p_value(&counts);
    println!("paddle-position uniformity: p = {p:.4}");
    assert!(p > 0.01, "reset paddle positions skewed, p = {p}");
}

#[test]
fn fully_random_actions_are_uniform() {
    // With epsilon = 1 the Q-values must not matter at all.
    let q = [100.0, -3.0, 0.5];
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut counts = [0u64; 3];
    for _ in 0..6000 {
        counts[select_action(&q, 1.0, &mut rng)] += 1;
    }
    let p = uniform_p_value(&counts);
    println!("epsilon=1 action uniformity: p = {p:.4}");
    assert!(p > 0.01, "epsilon=1 actions skewed, p = {p}");
}

#[test]
fn greedy_actions_ignore_randomness() {
    let q = [0.1, 0.7, 0.2];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        assert_eq!(select_action(&q, 0.0, &mut rng), 1);
    }
}
