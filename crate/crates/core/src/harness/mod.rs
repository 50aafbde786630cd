//! Experiment orchestration: configuration, the epoch protocol, metrics
//! aggregation, and file emission.

pub mod config;
pub mod output;
pub mod run;
pub mod sweep;

pub use config::{RoutingSource, RunConfig};
pub use run::{aggregate, evaluate_policy, run, run_full, validate, AggregateCurve, EpochRecord};
