//! Checkpoints: a JSON dump of every parameter tensor (values plus shape
//! manifest) and enough bookkeeping to resume or re-evaluate a run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentState, EpsilonSchedule};
use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::nn::NetworkParams;
use crate::replay::ReplayBuffer;
use crate::supervisor::Supervisor;

#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub online: NetworkParams,
    pub target: NetworkParams,
    pub supervisor: Option<NetworkParams>,
    pub env_steps: u64,
    pub update_count: u64,
}

impl Checkpoint {
    pub fn from_run(
        config: &RunConfig,
        agent: &AgentState,
        supervisor: Option<&Supervisor>,
    ) -> Checkpoint {
        Checkpoint {
            config: config.clone(),
            online: agent.online.clone(),
            target: agent.target.clone(),
            supervisor: supervisor.map(|s| s.params.clone()),
            env_steps: agent.env_steps,
            update_count: agent.update_count,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        std::fs::write(path, json)
            .map_err(|e| Error::io(format!("writing checkpoint {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading checkpoint {}", path.display()), e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        if !ckpt.online.same_topology(&ckpt.target) {
            return Err(Error::TopologyMismatch(
                "checkpoint online/target disagree".into(),
            ));
        }
        Ok(ckpt)
    }

    /// Rebuild an agent (with empty replay buffers) and supervisor for
    /// evaluation or resumption.
    pub fn restore(&self) -> Result<(AgentState, Option<Supervisor>)> {
        let schedule = EpsilonSchedule {
            start: 1.0,
            final_value: self.config.eps_final,
            warmup: self.config.warmup_steps,
            anneal_span: self.config.eps_anneal,
        };
        let mut agent = AgentState::new(
            self.config.variant,
            self.config.replay_capacity,
            schedule,
            self.config.gamma,
            self.config.sync_period,
            self.config.batch_size,
            self.config.train_period,
            self.config.optim(),
            0,
        )?;
        if !agent.online.same_topology(&self.online) {
            return Err(Error::TopologyMismatch(
                "checkpoint parameters do not match its own config".into(),
            ));
        }
        agent.online = self.online.clone();
        agent.target = self.target.clone();
        agent.env_steps = self.env_steps;
        agent.update_count = self.update_count;
        agent.buffers = (0..self.config.variant.head_count())
            .map(|_| ReplayBuffer::new(self.config.replay_capacity))
            .collect();
        let supervisor = match &self.supervisor {
            Some(params) => {
                let mut s = Supervisor::new(
                    self.config.variant.head_count().max(2),
                    0,
                    self.config.optim(),
                    self.config.batch_size,
                )?;
                if !s.params.same_topology(params) {
                    return Err(Error::TopologyMismatch(
                        "checkpoint supervisor shape mismatch".into(),
                    ));
                }
                s.params = params.clone();
                Some(s)
            }
            None => None,
        };
        Ok((agent, supervisor))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::batch_tensor;
    use crate::env::{BallType, CatchEnv, TransferMode};
    use crate::nn::forward;
    use crate::variant::AgentVariant;

    #[test]
    fn checkpoint_round_trip_preserves_outputs() {
        let config = RunConfig {
            variant: AgentVariant::OptionHeads {
                capacity: 32,
                heads: 2,
            },
            ..RunConfig::default()
        };
        let agent = AgentState::new(
            config.variant,
            100,
            EpsilonSchedule::default(),
            config.gamma,
            config.sync_period,
            config.batch_size,
            config.train_period,
            config.optim(),
            99,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        Checkpoint::from_run(&config, &agent, None).save(&path).unwrap();
        let (restored, supervisor) = Checkpoint::load(&path).unwrap().restore().unwrap();
        assert!(supervisor.is_none());

        let env = CatchEnv::reset_at(TransferMode::Positive, BallType::Grey, 4, 9);
        let batch = batch_tensor(std::iter::once(env.observation()));
        let (a, _) = forward(&agent.online, &batch).unwrap();
        let (b, _) = forward(&restored.online, &batch).unwrap();
        assert_eq!(a, b);
    }
}
