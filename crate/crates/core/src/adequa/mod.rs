//! ADeQuA: decentralized learning for queuing systems.
//!
//! Each round every queue draws the same [`SharedDraws`] from a common seed.
//! With probability `eps_t` the round explores. Exploration either probes
//! servers along a collision-free rotation, or pairs queues through a
//! round-robin table to estimate one another's arrival rates from collision
//! statistics. Otherwise every queue applies the same sampled permutation of
//! its own estimate of the dominant mapping.
//!
//! Queue ids, round indices and the draws `n`, `r`, `l` are 1-based as in the
//! index formulas; servers returned in [`Decision`] are 0-based.

mod queue;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::birkhoff::{ordered_birkhoff, psi_sample, BvnDecomposition, CostMatrix};
use crate::mapping::{solve_phi, PhiConfig, PhiSolution};
use crate::model::{Action, PacketSelector, QueueView};

pub use queue::AdequaQueue;

/// `eps_t = min(1, x * t^(-alpha))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    pub x: f64,
    pub alpha: f64,
}

impl ExplorationSchedule {
    /// `x = N + K`, `alpha = 1/4`.
    pub fn practical(n_queues: usize, n_servers: usize) -> Self {
        Self { x: (n_queues + n_servers) as f64, alpha: 0.25 }
    }

    /// `x = N + K`, `alpha = 1/5`.
    pub fn theoretical(n_queues: usize, n_servers: usize) -> Self {
        Self { x: (n_queues + n_servers) as f64, alpha: 0.2 }
    }

    /// Explores every round.
    pub fn always() -> Self {
        Self { x: 1.0, alpha: 0.0 }
    }
}

pub fn epsilon(schedule: &ExplorationSchedule, t: u64) -> f64 {
    assert!(t >= 1, "rounds start at 1");
    (schedule.x * (t as f64).powf(-schedule.alpha)).min(1.0)
}

/// The per-round common randomness, identical for all queues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharedDraws {
    pub omega1: bool,
    pub omega2: f64,
    pub n: Option<usize>,
    pub r: Option<usize>,
    pub l: Option<usize>,
}

impl SharedDraws {
    /// Consumes `omega1`, `omega2`, then `n` if exploring, then `r` and `l`
    /// if `n > K`.
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, eps: f64, n_queues: usize, n_servers: usize) -> Self {
        let omega1 = rng.gen::<f64>() < eps;
        let omega2 = rng.gen::<f64>();
        let mut draws = Self { omega1, omega2, n: None, r: None, l: None };
        if omega1 {
            let n = rng.gen_range(1..=n_queues + n_servers);
            draws.n = Some(n);
            if n > n_servers {
                draws.r = Some(rng.gen_range(1..=n_queues));
                draws.l = Some(rng.gen_range(1..=n_servers));
            }
        }
        draws
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Opponent {
    Queue(usize),
    Bye,
}

fn padded(n: usize) -> usize {
    n + n % 2
}

/// Maps a draw `r` in `1..=N` onto the `N' - 1` rounds of the table.
pub fn reduce_round(r: usize, n: usize) -> usize {
    let rounds = (padded(n) - 1).max(1);
    (r - 1) % rounds + 1
}

/// Opponent of queue `i` in round `r` of the circle-method round robin over
/// `N'` positions (`N` rounded up to even), position `N'` being fixed.
/// Positions `i, j < N'` meet in the round `(i + j) mod (N' - 1)`; `i` meets
/// `N'` in round `2i mod (N' - 1)`. For odd `N` position `N'` is empty.
pub fn berger_opponent(i: usize, r: usize, n: usize) -> Opponent {
    let np = padded(n);
    let rounds = np - 1;
    assert!((1..=n).contains(&i), "queue {i} outside 1..={n}");
    assert!((1..=rounds.max(1)).contains(&r), "round {r} outside 1..={rounds}");
    let residue = r % rounds;
    let wrap = |x: usize| if x == 0 { rounds } else { x };
    let j = if i == np {
        let inv2 = (rounds + 1) / 2;
        wrap(residue * inv2 % rounds)
    } else {
        let j = wrap((residue + rounds - i % rounds) % rounds);
        if j == i { np } else { j }
    };
    if j > n { Opponent::Bye } else { Opponent::Queue(j) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Exploit,
    ExploreMu,
    /// Probing the arrival rate of the given 1-based queue.
    ExploreLambda(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Idle,
    Send { server: usize, packet: PacketSelector, purpose: Purpose },
}

impl Decision {
    pub fn action(&self) -> Action {
        match *self {
            Decision::Idle => Action::Idle,
            Decision::Send { server, packet, .. } => Action::Send { server, packet },
        }
    }

    pub fn is_exploration(&self) -> bool {
        matches!(self, Decision::Send { purpose: Purpose::ExploreMu | Purpose::ExploreLambda(_), .. })
    }
}

/// A queue's private statistics and its cached mapping.
#[derive(Debug, Clone)]
pub struct QueueEstimates {
    pub mu_hat: Vec<f64>,
    pub pull_counts: Vec<u64>,
    pub s_hat: Vec<f64>,
    pub s_counts: Vec<u64>,
    pub lambda_hat: Vec<f64>,
    pub cached_phi: Option<PhiSolution>,
    pub cached_decomposition: Option<BvnDecomposition>,
    pub dirty: bool,
}

impl QueueEstimates {
    /// `lambda_hat = 1`, `mu_hat = 0`.
    pub fn new(n_queues: usize, n_servers: usize) -> Self {
        Self {
            mu_hat: vec![0.0; n_servers],
            pull_counts: vec![0; n_servers],
            s_hat: vec![0.0; n_queues],
            s_counts: vec![0; n_queues],
            lambda_hat: vec![1.0; n_queues],
            cached_phi: None,
            cached_decomposition: None,
            dirty: true,
        }
    }

    /// Pull-weighted mean of `mu_hat`.
    pub fn mu_tilde(&self) -> Option<f64> {
        let pulls: u64 = self.pull_counts.iter().sum();
        (pulls > 0).then(|| {
            self.pull_counts.iter().zip(&self.mu_hat).map(|(&n, m)| n as f64 * m).sum::<f64>() / pulls as f64
        })
    }

    fn refresh_lambda(&mut self) {
        let Some(mt) = self.mu_tilde().filter(|&m| m > 0.0) else {
            return;
        };
        for j in 0..self.lambda_hat.len() {
            if self.s_counts[j] > 0 {
                self.lambda_hat[j] = (2.0 - 2.0 * self.s_hat[j] / mt).clamp(0.0, 1.0);
            }
        }
    }

    /// Recomputes the mapping and its decomposition if estimates changed.
    fn refresh_mapping(&mut self, cost: &CostMatrix, phi: &PhiConfig) {
        if !self.dirty && self.cached_decomposition.is_some() {
            return;
        }
        let solution = solve_phi(&self.lambda_hat, &self.mu_hat, phi, self.cached_phi.as_ref())
            .expect("estimate vectors have consistent lengths");
        let dec = ordered_birkhoff(&solution.matrix, cost).expect("a bistochastic matrix always decomposes");
        self.cached_decomposition = Some(dec);
        self.cached_phi = Some(solution);
        self.dirty = false;
    }
}

/// One round of the decision rule for queue `i` (1-based).
pub fn decide(
    i: usize,
    view: &QueueView<'_>,
    estimates: &mut QueueEstimates,
    draws: &SharedDraws,
    cost: &CostMatrix,
    phi: &PhiConfig,
) -> Decision {
    let k = estimates.mu_hat.len();
    let n_queues = estimates.lambda_hat.len();
    if !draws.omega1 {
        if view.is_empty() {
            return Decision::Idle;
        }
        estimates.refresh_mapping(cost, phi);
        let dec = estimates.cached_decomposition.as_ref().expect("refreshed above");
        let server = psi_sample(dec, draws.omega2).apply(i - 1);
        return Decision::Send { server, packet: PacketSelector::Oldest, purpose: Purpose::Exploit };
    }
    let n = draws.n.expect("exploration draws include n");
    if n <= k {
        if view.is_empty() {
            return Decision::Idle;
        }
        return Decision::Send { server: (n + i) % k, packet: PacketSelector::Oldest, purpose: Purpose::ExploreMu };
    }
    let r = reduce_round(draws.r.expect("lambda exploration draws r"), n_queues);
    let l = draws.l.expect("lambda exploration draws l");
    match berger_opponent(i, r, n_queues) {
        Opponent::Bye => Decision::Idle,
        Opponent::Queue(j) if view.arrived_now() => Decision::Send {
            server: (l + i.min(j)) % k,
            packet: PacketSelector::Newest,
            purpose: Purpose::ExploreLambda(j),
        },
        Opponent::Queue(_) => Decision::Idle,
    }
}

fn fold_mean(mean: &mut f64, count: &mut u64, x: f64) {
    *count += 1;
    *mean += (x - *mean) / *count as f64;
}

/// Folds the outcome of an exploration send into the estimates.
pub fn update_after_round(estimates: &mut QueueEstimates, decision: &Decision, sent: bool, cleared: bool) {
    let Decision::Send { server, purpose, .. } = *decision else {
        return;
    };
    if !sent {
        return;
    }
    let x = if cleared { 1.0 } else { 0.0 };
    match purpose {
        Purpose::Exploit => return,
        Purpose::ExploreMu => {
            fold_mean(&mut estimates.mu_hat[server], &mut estimates.pull_counts[server], x);
        }
        Purpose::ExploreLambda(j) => {
            fold_mean(&mut estimates.s_hat[j - 1], &mut estimates.s_counts[j - 1], x);
        }
    }
    estimates.refresh_lambda();
    estimates.dirty = true;
}
