//! Experiment configuration: one struct, serialized everywhere for
//! provenance, loadable from a TOML key-value file with CLI overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::TransferMode;
use crate::error::{Error, Result};
use crate::optim::OptimConfig;
use crate::variant::AgentVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoutingSource {
    /// Ground-truth ball-type label chooses the head.
    Oracle,
    /// The trained supervisory classifier chooses the head.
    Classifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub variant: AgentVariant,
    pub mode: TransferMode,
    pub seed: u64,
    pub epochs: usize,
    /// Training steps per epoch.
    pub steps_per_epoch: u64,
    /// Evaluation steps after each epoch; must be a multiple of 24.
    pub validation_steps: u64,
    /// Uniform-random steps filling replay before training starts.
    pub warmup_steps: u64,
    pub replay_capacity: usize,
    /// `None` picks the Appendix-style default: 2.5e-4, except the standard
    /// and half networks under negative transfer, which use 1.25e-4.
    pub learning_rate: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_stability: f64,
    pub max_grad_norm: f64,
    pub gamma: f64,
    pub batch_size: usize,
    /// Gradient update every this many environment steps.
    pub train_period: u64,
    /// Target-network sync every this many environment steps.
    pub sync_period: u64,
    pub eps_final: f64,
    pub eps_anneal: u64,
    pub routing: RoutingSource,
    pub supervisor_train_period: u64,
    pub supervisor_hidden: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: AgentVariant::Standard { capacity: 32 },
            mode: TransferMode::Positive,
            seed: 0,
            epochs: 30,
            steps_per_epoch: 10_000,
            validation_steps: 6_000,
            warmup_steps: 10_000,
            replay_capacity: 10_000,
            learning_rate: None,
            beta1: 0.9,
            beta2: 0.999,
            eps_stability: 1e-8,
            max_grad_norm: 10.0,
            gamma: 0.99,
            batch_size: 32,
            train_period: 4,
            sync_period: 4,
            eps_final: 0.01,
            eps_anneal: 10_000,
            routing: RoutingSource::Classifier,
            supervisor_train_period: 4,
            supervisor_hidden: 32,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn effective_learning_rate(&self) -> f64 {
        if let Some(lr) = self.learning_rate {
            return lr;
        }
        match (self.variant, self.mode) {
            (AgentVariant::Standard { .. } | AgentVariant::Half { .. }, TransferMode::Negative) => {
                1.25e-4
            }
            _ => 2.5e-4,
        }
    }

    pub fn optim(&self) -> OptimConfig {
        OptimConfig {
            learning_rate: self.effective_learning_rate(),
            beta1: self.beta1,
            beta2: self.beta2,
            eps_stability: self.eps_stability,
            max_grad_norm: self.max_grad_norm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.variant.head_layout()?;
        if !self.validation_steps.is_multiple_of(crate::env::EPISODE_STEPS as u64) {
            return Err(Error::InvalidConfig(format!(
                "validation_steps {} not a multiple of {}",
                self.validation_steps,
                crate::env::EPISODE_STEPS
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma {} not in [0,1]", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.eps_final) {
            return Err(Error::InvalidConfig(format!(
                "eps_final {} not in [0,1]",
                self.eps_final
            )));
        }
        if self.batch_size == 0 || self.train_period == 0 || self.sync_period == 0 {
            return Err(Error::InvalidConfig(
                "batch_size, train_period, sync_period must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        std::fs::write(path, text)
            .map_err(|e| Error::io(format!("writing config {}", path.display()), e))
    }

    /// Stable label for a configuration cell (everything but the seed).
    pub fn cell_name(&self) -> String {
        format!(
            "{}_{}_c{}_lr{}_tau{}_ef{}",
            self.variant.name(),
            self.mode.name(),
            self.variant.capacity(),
            self.effective_learning_rate(),
            self.sync_period,
            self.eps_final
        )
    }
}
