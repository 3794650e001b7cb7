use crate::birkhoff::CostMatrix;
use crate::mapping::PhiConfig;
use crate::model::{Action, QueuePolicy, QueueRound, QueueView};
use crate::rng::StreamRng;

use super::{decide, epsilon, update_after_round, Decision, ExplorationSchedule, QueueEstimates, SharedDraws};

/// One queue running ADeQuA as an episode policy.
///
/// The queue owns a private copy of the shared stream. The cost matrix is the
/// first thing drawn from it, so every queue built from the same seed holds the
/// same matrix and then the same per-round draws.
#[derive(Debug, Clone)]
pub struct AdequaQueue {
    queue: usize,
    n_queues: usize,
    n_servers: usize,
    schedule: ExplorationSchedule,
    phi: PhiConfig,
    cost: CostMatrix,
    shared: StreamRng,
    estimates: QueueEstimates,
    own_arrivals: u64,
    last_time: u64,
    last_draws: Option<SharedDraws>,
    last_decision: Decision,
}

impl AdequaQueue {
    /// `queue` is 0-based.
    pub fn new(
        queue: usize,
        n_queues: usize,
        n_servers: usize,
        schedule: ExplorationSchedule,
        phi: PhiConfig,
        mut shared: StreamRng,
    ) -> Self {
        assert!(queue < n_queues && n_queues <= n_servers);
        let cost = CostMatrix::random(n_servers, &mut shared);
        Self {
            queue,
            n_queues,
            n_servers,
            schedule,
            phi,
            cost,
            shared,
            estimates: QueueEstimates::new(n_queues, n_servers),
            own_arrivals: 0,
            last_time: 0,
            last_draws: None,
            last_decision: Decision::Idle,
        }
    }

    pub fn estimates_state(&self) -> &QueueEstimates {
        &self.estimates
    }

    pub fn cost(&self) -> &CostMatrix {
        &self.cost
    }

    pub fn last_draws(&self) -> Option<&SharedDraws> {
        self.last_draws.as_ref()
    }

    pub fn last_decision(&self) -> Decision {
        self.last_decision
    }
}

impl QueuePolicy for AdequaQueue {
    fn decide(&mut self, view: &QueueView<'_>) -> Action {
        if view.arrived_now() {
            self.own_arrivals += 1;
        }
        self.last_time = view.time;
        let eps = epsilon(&self.schedule, view.time);
        let draws = SharedDraws::draw(&mut self.shared, eps, self.n_queues, self.n_servers);
        self.last_decision = decide(self.queue + 1, view, &mut self.estimates, &draws, &self.cost, &self.phi);
        self.last_draws = Some(draws);
        self.last_decision.action()
    }

    fn observe(&mut self, _view: &QueueView<'_>, _action: Action, result: QueueRound) {
        update_after_round(&mut self.estimates, &self.last_decision, result.sent_to.is_some(), result.cleared);
        // A queue sees its own arrivals directly; its own rate estimate is
        // refreshed together with the others so the mapping cache stays valid
        // between exploration rounds.
        if self.estimates.dirty && self.last_time > 0 {
            self.estimates.lambda_hat[self.queue] = self.own_arrivals as f64 / self.last_time as f64;
        }
    }

    fn explored(&self) -> bool {
        self.last_draws.is_some_and(|d| d.omega1)
    }

    fn label(&self) -> &str {
        "adequa"
    }

    fn estimates(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((self.estimates.lambda_hat.clone(), self.estimates.mu_hat.clone()))
    }
}
