//! Architecture descriptors for the three agents under comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SUPPORTED_CAPACITIES: [usize; 3] = [16, 32, 64];

/// Which network architecture an agent uses.
///
/// `capacity` is always quoted in standard-DQN hidden units: the half DQN
/// gets `capacity / 2` hidden units, and each of the option heads gets
/// `capacity / heads`, so the hidden-layer parameter count of the
/// option-head network matches the standard one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AgentVariant {
    Standard { capacity: usize },
    Half { capacity: usize },
    OptionHeads { capacity: usize, heads: usize },
}

impl AgentVariant {
    pub fn capacity(&self) -> usize {
        match *self {
            AgentVariant::Standard { capacity }
            | AgentVariant::Half { capacity }
            | AgentVariant::OptionHeads { capacity, .. } => capacity,
        }
    }

    pub fn head_count(&self) -> usize {
        match *self {
            AgentVariant::OptionHeads { heads, .. } => heads,
            _ => 1,
        }
    }

    /// (number of heads, hidden units per head) after validation.
    pub fn head_layout(&self) -> Result<(usize, usize)> {
        let capacity = self.capacity();
        if !SUPPORTED_CAPACITIES.contains(&capacity) {
            return Err(Error::UnsupportedCapacity(capacity));
        }
        match *self {
            AgentVariant::Standard { .. } => Ok((1, capacity)),
            AgentVariant::Half { .. } => Ok((1, capacity / 2)),
            AgentVariant::OptionHeads { heads, .. } => {
                if heads < 1 {
                    return Err(Error::InvalidVariant("head count must be >= 1".into()));
                }
                if !capacity.is_multiple_of(heads) {
                    return Err(Error::InvalidVariant(format!(
                        "capacity {capacity} not divisible by {heads} heads"
                    )));
                }
                Ok((heads, capacity / heads))
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AgentVariant::Standard { .. } => "standard",
            AgentVariant::Half { .. } => "half",
            AgentVariant::OptionHeads { .. } => "option-heads",
        }
    }
}
