//! Comparison policies.
//!
//! - [`centralized_policies`]: every queue plays the same sampled permutation
//!   of the dominant mapping computed from the true rates.
//! - [`Exp3Queue`]: independent EXP3.P bandits restarted on doubling windows.
//! - [`CounterexampleQueue`]: a deterministic two-stage schedule that has no
//!   policy regret yet is unstable.
//! - [`FixedPolicy`]: i.i.d. draws from a fixed distribution over servers.
//!
//! [`deviation_experiment`] pits compliant runs against runs where one queue
//! switches to a fixed distribution, paired by seed.

mod centralized;
mod counterexample;
mod deviation;
mod exp3;
mod fixed;

use thiserror::Error;

use crate::birkhoff::BirkhoffError;
use crate::mapping::MappingError;
use crate::model::ModelError;

pub use centralized::{centralized_policies, CentralizedQueue};
pub use counterexample::{CounterexampleConfig, CounterexampleQueue, Regimes, Stage};
pub use deviation::{
    deviation_experiment, paired_deviation, ActiveRounds, Deviation, PolicyFactory, DeviationReport, SwitchPolicy, WindowComparison,
};
pub use exp3::{Exp3Config, Exp3Queue, Exp3Window};
pub use fixed::FixedPolicy;

#[derive(Debug, PartialEq, Error)]
pub enum BaselineError {
    #[error("no stable stationary policy exists: margin {0} is not positive")]
    NonPositiveMargin(f64),
    #[error("invalid distribution over {expected} servers: {reason}")]
    InvalidDistribution { expected: usize, reason: String },
    #[error("counterexample needs an even number of queues, got {0}")]
    OddQueueCount(usize),
    #[error("invalid counterexample parameters: {0}")]
    InvalidCounterexample(String),
    #[error("queue {queue} out of range for {n_queues} queues")]
    UnknownQueue { queue: usize, n_queues: usize },
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Birkhoff(#[from] BirkhoffError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
