//! The training/evaluation protocol: warmup, epochs of 10000 training
//! steps, and 250-episode greedy validation passes.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{head_for_update, select_action, AgentState, EpsilonSchedule};
use crate::env::{
    Action, CatchEnv, EnvState, Observation, TransferMode, EPISODE_STEPS,
};
use crate::error::{Error, Result};
use crate::nn::argmax;
use crate::replay::Transition;
use crate::supervisor::{oracle_option, Supervisor};

use super::config::{RoutingSource, RunConfig};

/// One row of the learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub avg_score: f64,
    pub episodes: usize,
    pub duration_secs: f64,
    /// Held-out routing accuracy of the supervisory classifier, when one
    /// is being trained.
    pub supervisor_accuracy: Option<f64>,
}

pub struct RunOutcome {
    pub records: Vec<EpochRecord>,
    pub agent: AgentState,
    pub supervisor: Option<Supervisor>,
}

/// Distinct deterministic seed streams derived from the run seed.
fn stream_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 over (seed, stream)
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Run a generic policy for `steps` environment steps and return the total
/// reward divided by the number of completed episodes.
pub fn evaluate_policy<F>(
    mode: TransferMode,
    steps: u64,
    rng: &mut ChaCha8Rng,
    mut policy: F,
) -> Result<f64>
where
    F: FnMut(&EnvState, &Observation) -> Result<Action>,
{
    if !steps.is_multiple_of(EPISODE_STEPS as u64) {
        return Err(Error::InvalidConfig(format!(
            "evaluation steps {steps} not a multiple of {EPISODE_STEPS}"
        )));
    }
    let episodes = steps / EPISODE_STEPS as u64;
    let mut total = 0.0;
    for ep in 0..episodes {
        let mut env = CatchEnv::reset(mode, ep, rng);
        loop {
            let action = policy(&env.state, env.observation())?;
            let r = env.step(action)?;
            total += r.reward;
            if r.terminal {
                break;
            }
        }
    }
    Ok(total / episodes as f64)
}

/// Greedy evaluation of an agent, with the head chosen by the supervisory
/// classifier or by the oracle label.
///
/// Episodes all last exactly [`EPISODE_STEPS`] steps, so they run in lockstep
/// and each step is a few batched forward passes instead of one per episode.
/// Resets draw from `rng` in episode order, matching a sequential rollout.
pub fn validate(
    agent: &AgentState,
    supervisor: Option<&Supervisor>,
    routing: RoutingSource,
    mode: TransferMode,
    steps: u64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if !steps.is_multiple_of(EPISODE_STEPS as u64) {
        return Err(Error::InvalidConfig(format!(
            "evaluation steps {steps} not a multiple of {EPISODE_STEPS}"
        )));
    }
    let episodes = (steps / EPISODE_STEPS as u64) as usize;
    if episodes == 0 {
        return Ok(f64::NAN);
    }
    let mut envs: Vec<CatchEnv> = (0..episodes as u64)
        .map(|ep| CatchEnv::reset(mode, ep, rng))
        .collect();
    let mut total = 0.0;
    let mut actions = vec![Action::NoOp; episodes];
    for _ in 0..EPISODE_STEPS {
        let heads: Vec<usize> = if agent.head_count() == 1 {
            vec![0; episodes]
        } else {
            match routing {
                RoutingSource::Oracle => envs
                    .iter()
                    .map(|e| oracle_option(e.state.ball_type))
                    .collect(),
                RoutingSource::Classifier => {
                    let s = supervisor.ok_or_else(|| {
                        Error::InvalidConfig(
                            "classifier routing requested but no supervisor trained".into(),
                        )
                    })?;
                    let obs: Vec<&Observation> = envs.iter().map(|e| e.observation()).collect();
                    s.route_batch(&obs)?
                }
            }
        };
        for head in 0..agent.head_count() {
            let idxs: Vec<usize> = (0..episodes).filter(|&i| heads[i] == head).collect();
            if idxs.is_empty() {
                continue;
            }
            let obs: Vec<&Observation> = idxs.iter().map(|&i| envs[i].observation()).collect();
            let q = agent.q_values_batch(&obs, head)?;
            let width = q.shape[1];
            for (row, &i) in idxs.iter().enumerate() {
                actions[i] = Action::from_index(argmax(&q.data[row * width..(row + 1) * width]));
            }
        }
        for (env, action) in envs.iter_mut().zip(&actions) {
            total += env.step(*action)?.reward;
        }
    }
    Ok(total / episodes as f64)
}

/// Supervisor held-out accuracy over a fresh batch of evaluation states
/// with a visible ball.
fn supervisor_holdout_accuracy(
    supervisor: &Supervisor,
    mode: TransferMode,
    episodes: u64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut pairs: Vec<(Observation, usize)> = Vec::new();
    for ep in 0..episodes {
        let mut env = CatchEnv::reset(mode, ep, rng);
        loop {
            let action = Action::from_index(rng.gen_range(0..3));
            let r = env.step(action)?;
            if r.terminal {
                break;
            }
            if env.state.ball_row >= 0 {
                pairs.push((r.observation, oracle_option(env.state.ball_type)));
            }
        }
    }
    supervisor.accuracy_on(pairs.iter().map(|(o, l)| (o, *l)))
}

/// Execute one full run: warmup, then `epochs` epochs of training steps
/// followed by a validation pass. Deterministic in (config, seed).
pub fn run(config: &RunConfig) -> Result<Vec<EpochRecord>> {
    run_full(config).map(|o| o.records)
}

pub fn run_full(config: &RunConfig) -> Result<RunOutcome> {
    run_with(config, &mut |_| {})
}

/// Like [`run_full`], invoking `on_epoch` as each record is produced.
pub fn run_with(
    config: &RunConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<RunOutcome> {
    config.validate()?;
    let seed = config.seed;
    let schedule = EpsilonSchedule {
        start: 1.0,
        final_value: config.eps_final,
        warmup: config.warmup_steps,
        anneal_span: config.eps_anneal,
    };
    let mut agent = AgentState::new(
        config.variant,
        config.replay_capacity,
        schedule,
        config.gamma,
        config.sync_period,
        config.batch_size,
        config.train_period,
        config.optim(),
        stream_seed(seed, 1),
    )?;
    let mut supervisor = if agent.head_count() > 1 {
        Some(Supervisor::new(
            agent.head_count(),
            stream_seed(seed, 2),
            config.optim(),
            config.batch_size,
        )?)
    } else {
        None
    };

    let mut env_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 3));
    let mut action_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 4));
    let mut sample_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 5));
    let mut supervisor_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 6));

    let mut episode_index: u64 = 0;
    let mut env = CatchEnv::reset(config.mode, episode_index, &mut env_rng);
    let mut obs = env.observation().clone();

    // Warmup: uniform-random action selection, no parameter updates.
    for _ in 0..config.warmup_steps {
        let head = active_head(&agent, env.state.ball_type);
        let action = action_rng.gen_range(0..3);
        step_once(
            &mut env,
            &mut obs,
            action,
            head,
            &mut agent,
            supervisor.as_mut(),
            config.mode,
            &mut episode_index,
            &mut env_rng,
        )?;
        agent.env_steps += 1;
    }

    let mut records = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let started = Instant::now();
        for _ in 0..config.steps_per_epoch {
            let head = active_head(&agent, env.state.ball_type);
            let eps = agent.epsilon();
            let action = if eps >= 1.0 {
                action_rng.gen_range(0..3)
            } else {
                let q = agent.q_values(&obs, head)?;
                select_action(&q, eps, &mut action_rng)
            };
            step_once(
                &mut env,
                &mut obs,
                action,
                head,
                &mut agent,
                supervisor.as_mut(),
                config.mode,
                &mut episode_index,
                &mut env_rng,
            )?;
            agent.env_steps += 1;

            if agent.env_steps % config.train_period == 0 {
                let head_u = head_for_update(agent.update_count, agent.head_count());
                agent.train_update(head_u, &mut sample_rng).map_err(|e| {
                    Error::InvalidConfig(format!(
                        "training aborted at epoch {epoch}, env step {}: {e}",
                        agent.env_steps
                    ))
                })?;
            }
            if let Some(s) = supervisor.as_mut() {
                if agent.env_steps % config.supervisor_train_period == 0 {
                    s.train_step(&mut supervisor_rng)?;
                }
            }
            agent.maybe_sync_target()?;
        }

        let mut val_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 1_000 + epoch as u64));
        let avg_score = validate(
            &agent,
            supervisor.as_ref(),
            config.routing,
            config.mode,
            config.validation_steps,
            &mut val_rng,
        )?;
        let supervisor_accuracy = match supervisor.as_ref() {
            Some(s) => {
                let mut acc_rng =
                    ChaCha8Rng::seed_from_u64(stream_seed(seed, 2_000 + epoch as u64));
                Some(supervisor_holdout_accuracy(s, config.mode, 20, &mut acc_rng)?)
            }
            None => None,
        };
        let record = EpochRecord {
            epoch,
            avg_score,
            episodes: (config.validation_steps / EPISODE_STEPS as u64) as usize,
            duration_secs: started.elapsed().as_secs_f64(),
            supervisor_accuracy,
        };
        on_epoch(&record);
        records.push(record);
    }

    Ok(RunOutcome {
        records,
        agent,
        supervisor,
    })
}

fn active_head(agent: &AgentState, ball_type: crate::env::BallType) -> usize {
    if agent.head_count() > 1 {
        oracle_option(ball_type)
    } else {
        0
    }
}

#[allow(clippy::too_many_arguments)]
fn step_once(
    env: &mut CatchEnv,
    obs: &mut Observation,
    action: usize,
    head: usize,
    agent: &mut AgentState,
    supervisor: Option<&mut Supervisor>,
    mode: TransferMode,
    episode_index: &mut u64,
    env_rng: &mut ChaCha8Rng,
) -> Result<()> {
    let label = oracle_option(env.state.ball_type);
    let r = env.step(Action::from_index(action))?;
    agent.observe(
        head,
        Transition {
            observation: obs.clone(),
            action,
            reward: r.reward,
            next_observation: r.observation.clone(),
            terminal: r.terminal,
        },
    );
    if let Some(s) = supervisor {
        s.record(obs.clone(), label);
    }
    if r.terminal {
        *episode_index += 1;
        *env = CatchEnv::reset(mode, *episode_index, env_rng);
        *obs = env.observation().clone();
    } else {
        *obs = r.observation;
    }
    Ok(())
}

/// Per-epoch mean and sample standard deviation across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub seeds: usize,
}

pub fn aggregate(runs: &[Vec<EpochRecord>]) -> Result<AggregateCurve> {
    if runs.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "aggregate needs >= 2 seeds, got {}",
            runs.len()
        )));
    }
    let epochs = runs[0].len();
    if runs.iter().any(|r| r.len() != epochs) {
        return Err(Error::InvalidConfig(
            "mismatched epoch counts across seeds".into(),
        ));
    }
    let n = runs.len() as f64;
    let mut mean = Vec::with_capacity(epochs);
    let mut std = Vec::with_capacity(epochs);
    for e in 0..epochs {
        let scores: Vec<f64> = runs.iter().map(|r| r[e].avg_score).collect();
        if scores.iter().all(|s| *s == scores[0]) {
            mean.push(scores[0]);
            std.push(0.0);
            continue;
        }
        let m = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (n - 1.0);
        mean.push(m);
        std.push(var.sqrt());
    }
    Ok(AggregateCurve {
        mean,
        std,
        seeds: runs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::optimal_action;

    #[test]
    fn hand_coded_policy_scores_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let score = evaluate_policy(TransferMode::Positive, 6_000, &mut rng, |s, _| {
            Ok(optimal_action(s))
        })
        .unwrap();
        assert_eq!(score, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let score = evaluate_policy(TransferMode::Negative, 6_000, &mut rng, |s, _| {
            Ok(optimal_action(s))
        })
        .unwrap();
        assert_eq!(score, 0.5);
    }

    #[test]
    fn evaluate_rejects_partial_episodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(
            evaluate_policy(TransferMode::Positive, 100, &mut rng, |_, _| Ok(Action::NoOp))
                .is_err()
        );
    }

    #[test]
    fn aggregate_mean_and_std() {
        let mk = |score: f64| {
            vec![EpochRecord {
                epoch: 0,
                avg_score: score,
                episodes: 250,
                duration_secs: 0.0,
                supervisor_accuracy: None,
            }]
        };
        let curve = aggregate(&[mk(0.4), mk(0.6)]).unwrap();
        assert!((curve.mean[0] - 0.5).abs() < 1e-12);
        // identical runs -> zero std
        let curve = aggregate(&[mk(0.4), mk(0.4), mk(0.4)]).unwrap();
        assert_eq!(curve.std[0], 0.0);
        // permutation invariance
        let a = aggregate(&[mk(0.1), mk(0.5), mk(0.9)]).unwrap();
        let b = aggregate(&[mk(0.9), mk(0.1), mk(0.5)]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn aggregate_rejects_single_seed_and_mismatch() {
        let mk = |n: usize| {
            (0..n)
                .map(|epoch| EpochRecord {
                    epoch,
                    avg_score: 0.0,
                    episodes: 250,
                    duration_secs: 0.0,
                    supervisor_accuracy: None,
                })
                .collect::<Vec<_>>()
        };
        assert!(aggregate(&[mk(3)]).is_err());
        assert!(aggregate(&[mk(3), mk(4)]).is_err());
    }
}
