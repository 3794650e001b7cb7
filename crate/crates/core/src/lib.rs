//! Decentralized online queuing systems.
//!
//! A discrete-time simulator of `N` queues sending packets to `K` servers,
//! the ADeQuA cooperative learning strategy (estimation, a log-barrier
//! dominant mapping, an ordered Birkhoff–von Neumann decomposition and
//! shared-randomness synchronization), comparison baselines, and a batch
//! experiment harness.
//!
//! Module map:
//!
//! - [`model`]: instance parameters, slack and margin, per-round dynamics, episodes.
//! - [`mapping`]: the dominant mapping `phi` over bistochastic matrices.
//! - [`birkhoff`]: Hungarian matcher, ordered Birkhoff decomposition and the sampler `psi`.
//! - [`adequa`]: per-queue decision logic and estimators.
//! - [`baselines`]: centralized, EXP3.P, counterexample and fixed-distribution policies.
//! - [`harness`]: configuration, batch runs, reports and property suites.

pub mod adequa;
pub mod baselines;
pub mod birkhoff;
pub mod harness;
pub mod mapping;
pub mod model;
pub mod rng;
