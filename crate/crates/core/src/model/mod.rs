//! The queuing environment.
//!
//! `N` queues receive packets at Bernoulli rates `lambda`, `K` servers clear at
//! most one packet per round with probability `mu`. Servers always attempt the
//! oldest packet they received and break birth-time ties uniformly at random.

mod env;
mod episode;

pub use env::{env_step, Action, EnvRng, EnvState, PacketSelector, QueueRound, RoundOutcome, ServerRound};
pub use episode::{
    run_episode, Episode, EpisodeSeeds, QueuePolicy, QueueView, RecordedRound, Trajectory,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("instance needs at least one queue")]
    NoQueues,
    #[error("{what}[{index}] = {value} is outside [0, 1]")]
    RateOutOfRange {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("queue {queue} names server {server} but only {n_servers} servers exist")]
    UnknownServer {
        queue: usize,
        server: usize,
        n_servers: usize,
    },
    #[error("queue {queue} sends a packet but its buffer is empty")]
    EmptyBuffer { queue: usize },
    #[error("expected {expected} decisions, got {got}")]
    DecisionCount { expected: usize, got: usize },
}

/// Ground-truth instance. Servers are padded with zero-rate entries so that
/// `n_servers() >= n_queues()` always holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    lambda: Vec<f64>,
    mu: Vec<f64>,
}

impl SystemParams {
    pub fn new(lambda: Vec<f64>, mut mu: Vec<f64>) -> Result<Self, ModelError> {
        if lambda.is_empty() {
            return Err(ModelError::NoQueues);
        }
        check_rates("lambda", &lambda)?;
        check_rates("mu", &mu)?;
        if mu.len() < lambda.len() {
            mu.resize(lambda.len(), 0.0);
        }
        Ok(Self { lambda, mu })
    }

    pub fn n_queues(&self) -> usize {
        self.lambda.len()
    }

    pub fn n_servers(&self) -> usize {
        self.mu.len()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn slack(&self) -> f64 {
        compute_slack(self)
    }

    pub fn margin(&self) -> f64 {
        compute_margin(self)
    }
}

fn check_rates(what: &'static str, rates: &[f64]) -> Result<(), ModelError> {
    for (index, &value) in rates.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(ModelError::RateOutOfRange { what, index, value });
        }
    }
    Ok(())
}

fn sorted_desc(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Largest `eta` with `sum_{i<=k} mu_(i) >= eta * sum_{i<=k} lambda_(i)` for all
/// `k <= N`. Returns `f64::INFINITY` when every prefix of `lambda` sums to zero.
pub fn compute_slack(params: &SystemParams) -> f64 {
    slack_of(params.lambda(), params.mu())
}

/// Margin `min_k (1/k) sum_{i<=k} (mu_(i) - lambda_(i))`; may be non-positive.
pub fn compute_margin(params: &SystemParams) -> f64 {
    margin_of(params.lambda(), params.mu())
}

/// Slack of arbitrary rate vectors. Missing servers count as zero-rate.
pub fn slack_of(lambda: &[f64], mu: &[f64]) -> f64 {
    let l = sorted_desc(lambda);
    let m = sorted_desc(mu);
    let (mut sl, mut sm) = (0.0, 0.0);
    let mut eta = f64::INFINITY;
    for (k, lk) in l.iter().enumerate() {
        sl += lk;
        sm += m.get(k).copied().unwrap_or(0.0);
        if sl > 0.0 {
            eta = eta.min(sm / sl);
        }
    }
    eta
}

/// Margin of arbitrary rate vectors (used on estimates as well as on truth).
pub fn margin_of(lambda: &[f64], mu: &[f64]) -> f64 {
    let l = sorted_desc(lambda);
    let m = sorted_desc(mu);
    let mut acc = 0.0;
    let mut best = f64::INFINITY;
    for (k, lk) in l.iter().enumerate() {
        acc += m.get(k).copied().unwrap_or(0.0) - lk;
        best = best.min(acc / (k + 1) as f64);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn hard() -> SystemParams {
        SystemParams::new(vec![5.0 / 16.0; 4], vec![1.0, 3.0 / 16.0, 3.0 / 16.0, 3.0 / 16.0]).unwrap()
    }

    fn easy() -> SystemParams {
        let l = vec![0.45, 0.35, 0.25, 0.15];
        let m = l.iter().map(|x| 2.1 * x).collect();
        SystemParams::new(l, m).unwrap()
    }

    #[test]
    fn slack_examples() {
        let single = SystemParams::new(vec![0.3], vec![0.9]).unwrap();
        assert_abs_diff_eq!(compute_slack(&single), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(compute_slack(&hard()), 1.25, epsilon = 1e-12);
        let padded = SystemParams::new(vec![0.1, 0.1], vec![0.5]).unwrap();
        assert_eq!(padded.n_servers(), 2);
        assert_eq!(padded.mu(), &[0.5, 0.0]);
        assert_abs_diff_eq!(compute_slack(&padded), 2.5, epsilon = 1e-12);
    }

    #[test]
    fn slack_of_idle_instance_is_infinite() {
        let p = SystemParams::new(vec![0.0, 0.0], vec![0.5, 0.5]).unwrap();
        assert!(compute_slack(&p).is_infinite());
    }

    #[test]
    fn margin_examples() {
        let single = SystemParams::new(vec![0.3], vec![0.9]).unwrap();
        assert_abs_diff_eq!(compute_margin(&single), 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(compute_margin(&easy()), 0.33, epsilon = 1e-12);
        let same = SystemParams::new(vec![0.2, 0.7], vec![0.7, 0.2]).unwrap();
        assert_abs_diff_eq!(compute_margin(&same), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_rates() {
        assert_eq!(
            SystemParams::new(vec![1.5], vec![0.5]),
            Err(ModelError::RateOutOfRange { what: "lambda", index: 0, value: 1.5 })
        );
        assert!(SystemParams::new(vec![0.5], vec![-0.1]).is_err());
        assert_eq!(SystemParams::new(vec![], vec![0.5]), Err(ModelError::NoQueues));
    }

    proptest! {
        #[test]
        fn slack_and_margin_are_permutation_invariant(
            lam in proptest::collection::vec(0.01f64..1.0, 1..6),
            mu in proptest::collection::vec(0.0f64..1.0, 1..8),
            rot in 0usize..8,
        ) {
            let p = SystemParams::new(lam.clone(), mu.clone()).unwrap();
            let mut l2 = lam.clone();
            l2.rotate_left(rot % lam.len());
            l2.reverse();
            let mut m2 = mu.clone();
            m2.rotate_left(rot % mu.len());
            let q = SystemParams::new(l2, m2).unwrap();
            prop_assert!((compute_slack(&p) - compute_slack(&q)).abs() < 1e-12);
            prop_assert!((compute_margin(&p) - compute_margin(&q)).abs() < 1e-12);
        }

        #[test]
        fn slack_above_one_iff_positive_margin(
            lam in proptest::collection::vec(0.01f64..1.0, 1..6),
            mu in proptest::collection::vec(0.0f64..1.0, 1..8),
        ) {
            let p = SystemParams::new(lam, mu).unwrap();
            let (eta, delta) = (compute_slack(&p), compute_margin(&p));
            // the boundary eta == 1 <=> delta == 0 is measure zero
            if (eta - 1.0).abs() > 1e-9 {
                prop_assert_eq!(eta > 1.0, delta > 0.0);
            }
        }
    }
}
