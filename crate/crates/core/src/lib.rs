//! Deep Q-learning with option heads and a supervisory network, evaluated
//! on the two-ball Catch environment under positive- and negative-transfer
//! reward schemes.
//!
//! Modules:
//! - [`nn`]/[`optim`]/[`tensor`]: the minimal differentiable compute stack
//!   (two conv layers, fully connected heads, Adam, global-norm clipping).
//! - [`env`]: the 24x24 Catch environment and its brute-force optimal-score
//!   oracle.
//! - [`replay`]: fixed-capacity uniform replay, one buffer per head.
//! - [`agent`]: the three DQN variants, double-DQN targets, head-alternating
//!   updates.
//! - [`supervisor`]: the option classifier that replaces the oracle at
//!   evaluation.
//! - [`harness`]: configs, the epoch protocol, sweeps, CSV/SVG output.

pub mod agent;
pub mod checkpoint;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod optim;
pub mod replay;
pub mod supervisor;
pub mod tensor;
pub mod variant;

pub use error::{Error, Result};
pub use variant::AgentVariant;
