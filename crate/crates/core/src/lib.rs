//! Lipschitz bandits under adversarial reward corruption: continuum-armed
//! environments, budgeted attacks, Zooming-style and elimination-style
//! policies, and a reproducible simulation harness.

// `!(x >= 0.0)` style checks are kept so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod bob;
pub mod cli;
pub mod environment;
pub mod harness;
pub mod error;
pub mod metric_space;
pub mod policy;
pub mod rmel;
pub mod zooming;

pub use error::{Error, Result};
pub use metric_space::{Arm, Metric, Region};
pub use policy::{Policy, PolicyRngs, SimRng};
pub use harness::{run_experiment, run_once, AggregateResult, ExperimentConfig, RegretTrace};
