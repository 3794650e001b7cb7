use std::collections::VecDeque;

use rand::Rng;

use super::{ModelError, SystemParams};
use crate::rng::{stream, Stream, StreamRng};

/// Which held packet a queue sends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketSelector {
    Oldest,
    /// The most recent packet; used by pairwise arrival-rate exploration.
    Newest,
}

/// One queue's decision for a round. Servers are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Idle,
    Send { server: usize, packet: PacketSelector },
}

impl Action {
    pub fn oldest(server: usize) -> Self {
        Action::Send { server, packet: PacketSelector::Oldest }
    }

    pub fn server(&self) -> Option<usize> {
        match *self {
            Action::Idle => None,
            Action::Send { server, .. } => Some(server),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QueueRound {
    pub sent_to: Option<usize>,
    pub cleared: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ServerRound {
    /// Whether the server would clear a packet this round (drawn every round).
    pub service_success: bool,
    /// Queue whose packet had priority, if any packet was received.
    pub winner: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundOutcome {
    pub queues: Vec<QueueRound>,
    pub servers: Vec<ServerRound>,
}

/// Environment randomness: arrivals and service share one stream, tie-breaks
/// use their own so that paired runs keep identical arrivals and service
/// indicators whatever the queues do.
#[derive(Debug, Clone)]
pub struct EnvRng {
    main: StreamRng,
    tiebreak: StreamRng,
}

impl EnvRng {
    pub fn new(seed: u64) -> Self {
        Self {
            main: stream(seed, Stream::Environment),
            tiebreak: stream(seed, Stream::TieBreak),
        }
    }
}

/// Carryover state: per-queue FIFO buffers of packet birth times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvState {
    time: u64,
    buffers: Vec<VecDeque<u64>>,
    arrived: Vec<u64>,
    cleared: Vec<u64>,
}

impl EnvState {
    /// Empty buffers at time 0. Call [`EnvState::advance`] to open round 1.
    pub fn new(n_queues: usize) -> Self {
        Self {
            time: 0,
            buffers: vec![VecDeque::new(); n_queues],
            arrived: vec![0; n_queues],
            cleared: vec![0; n_queues],
        }
    }

    /// Builds a state from explicit buffers (birth times ascending, all `<= time`).
    pub fn from_buffers(time: u64, buffers: Vec<Vec<u64>>) -> Self {
        let arrived = buffers.iter().map(|b| b.len() as u64).collect();
        let n = buffers.len();
        let buffers = buffers
            .into_iter()
            .map(|b| {
                debug_assert!(b.windows(2).all(|w| w[0] <= w[1]));
                debug_assert!(b.iter().all(|&x| x <= time));
                VecDeque::from(b)
            })
            .collect();
        Self { time, buffers, arrived, cleared: vec![0; n] }
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn n_queues(&self) -> usize {
        self.buffers.len()
    }

    pub fn buffer(&self, queue: usize) -> &VecDeque<u64> {
        &self.buffers[queue]
    }

    pub fn queue_len(&self, queue: usize) -> usize {
        self.buffers[queue].len()
    }

    /// Age of the oldest packet, `t - birth + 1`, or 0 for an empty queue.
    pub fn oldest_age(&self, queue: usize) -> u64 {
        self.buffers[queue].front().map_or(0, |&b| self.time - b + 1)
    }

    pub fn arrived(&self, queue: usize) -> u64 {
        self.arrived[queue]
    }

    pub fn cleared(&self, queue: usize) -> u64 {
        self.cleared[queue]
    }

    /// Moves to the next round and draws its arrivals (birth time = new time).
    pub fn advance(&mut self, params: &SystemParams, rng: &mut EnvRng) {
        self.time += 1;
        for (i, &rate) in params.lambda().iter().enumerate() {
            if rng.main.gen::<f64>() < rate {
                self.buffers[i].push_back(self.time);
                self.arrived[i] += 1;
            }
        }
    }

    /// Resolves the current round's sends.
    pub fn serve(
        &mut self,
        params: &SystemParams,
        actions: &[Action],
        rng: &mut EnvRng,
    ) -> Result<RoundOutcome, ModelError> {
        let n = self.n_queues();
        let k = params.n_servers();
        if actions.len() != n {
            return Err(ModelError::DecisionCount { expected: n, got: actions.len() });
        }
        let mut sent: Vec<Option<(usize, u64)>> = vec![None; n];
        for (queue, action) in actions.iter().enumerate() {
            if let Action::Send { server, packet } = *action {
                if server >= k {
                    return Err(ModelError::UnknownServer { queue, server, n_servers: k });
                }
                let buf = &self.buffers[queue];
                let birth = match packet {
                    PacketSelector::Oldest => buf.front(),
                    PacketSelector::Newest => buf.back(),
                };
                let birth = *birth.ok_or(ModelError::EmptyBuffer { queue })?;
                sent[queue] = Some((server, birth));
            }
        }

        let mut servers = vec![ServerRound::default(); k];
        for (j, s) in servers.iter_mut().enumerate() {
            s.service_success = rng.main.gen::<f64>() < params.mu()[j];
        }
        let mut queues = vec![QueueRound::default(); n];
        let mut tied = Vec::with_capacity(n);
        for (j, s) in servers.iter_mut().enumerate() {
            let oldest = sent
                .iter()
                .filter_map(|x| x.filter(|&(srv, _)| srv == j).map(|(_, b)| b))
                .min();
            let Some(oldest) = oldest else { continue };
            tied.clear();
            tied.extend((0..n).filter(|&q| sent[q] == Some((j, oldest))));
            let winner = if tied.len() > 1 {
                tied[rng.tiebreak.gen_range(0..tied.len())]
            } else {
                tied[0]
            };
            s.winner = Some(winner);
            if s.service_success {
                queues[winner].cleared = true;
            }
        }
        for (q, qr) in queues.iter_mut().enumerate() {
            qr.sent_to = sent[q].map(|(srv, _)| srv);
            if qr.cleared {
                match actions[q] {
                    Action::Send { packet: PacketSelector::Newest, .. } => self.buffers[q].pop_back(),
                    _ => self.buffers[q].pop_front(),
                };
                self.cleared[q] += 1;
            }
        }
        Ok(RoundOutcome { queues, servers })
    }
}

/// One full round from a state whose current-round arrivals are already in the
/// buffers: service resolution, then the next round's arrivals.
pub fn env_step(
    state: &mut EnvState,
    params: &SystemParams,
    actions: &[Action],
    rng: &mut EnvRng,
) -> Result<RoundOutcome, ModelError> {
    let outcome = state.serve(params, actions, rng)?;
    state.advance(params, rng);
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(lambda: Vec<f64>, mu: Vec<f64>) -> SystemParams {
        SystemParams::new(lambda, mu).unwrap()
    }

    #[test]
    fn certain_service_empties_buffer() {
        let p = params(vec![0.0], vec![1.0]);
        let mut s = EnvState::from_buffers(1, vec![vec![1]]);
        let mut rng = EnvRng::new(1);
        let out = env_step(&mut s, &p, &[Action::oldest(0)], &mut rng).unwrap();
        assert!(out.queues[0].cleared);
        assert_eq!(out.servers[0].winner, Some(0));
        assert_eq!(s.queue_len(0), 0);
        assert_eq!(s.time(), 2);
    }

    #[test]
    fn oldest_packet_has_priority() {
        let p = params(vec![0.0, 0.0], vec![1.0, 0.0]);
        for seed in 0..50 {
            let mut s = EnvState::from_buffers(5, vec![vec![5], vec![3]]);
            let mut rng = EnvRng::new(seed);
            let out = s.serve(&p, &[Action::oldest(0), Action::oldest(0)], &mut rng).unwrap();
            assert!(out.queues[1].cleared);
            assert!(!out.queues[0].cleared);
            assert_eq!(s.buffer(0).iter().copied().collect::<Vec<_>>(), vec![5]);
            assert_eq!(s.queue_len(1), 0);
        }
    }

    #[test]
    fn equal_births_split_evenly() {
        let p = params(vec![0.0, 0.0], vec![1.0, 0.0]);
        let mut rng = EnvRng::new(99);
        let trials = 100_000;
        let mut wins0 = 0;
        for _ in 0..trials {
            let mut s = EnvState::from_buffers(4, vec![vec![4], vec![4]]);
            let out = s.serve(&p, &[Action::oldest(0), Action::oldest(0)], &mut rng).unwrap();
            assert!(out.queues[0].cleared ^ out.queues[1].cleared);
            wins0 += out.queues[0].cleared as u32;
        }
        let frac = wins0 as f64 / trials as f64;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
    }

    #[test]
    fn newest_selector_removes_the_newest() {
        let p = params(vec![0.0], vec![1.0]);
        let mut s = EnvState::from_buffers(9, vec![vec![2, 7, 9]]);
        let mut rng = EnvRng::new(3);
        let act = Action::Send { server: 0, packet: PacketSelector::Newest };
        s.serve(&p, &[act], &mut rng).unwrap();
        assert_eq!(s.buffer(0).iter().copied().collect::<Vec<_>>(), vec![2, 7]);
    }

    #[test]
    fn contract_violations() {
        let p = params(vec![0.0], vec![1.0]);
        let mut rng = EnvRng::new(3);
        let mut s = EnvState::from_buffers(1, vec![vec![]]);
        assert_eq!(
            s.serve(&p, &[Action::oldest(0)], &mut rng),
            Err(ModelError::EmptyBuffer { queue: 0 })
        );
        let mut s = EnvState::from_buffers(1, vec![vec![1]]);
        assert_eq!(
            s.serve(&p, &[Action::oldest(3)], &mut rng),
            Err(ModelError::UnknownServer { queue: 0, server: 3, n_servers: 1 })
        );
    }

    #[test]
    fn failed_service_returns_every_packet() {
        let p = params(vec![0.0, 0.0], vec![0.0, 0.0]);
        let mut s = EnvState::from_buffers(3, vec![vec![1, 2], vec![3]]);
        let mut rng = EnvRng::new(3);
        let out = s.serve(&p, &[Action::oldest(1), Action::oldest(1)], &mut rng).unwrap();
        assert_eq!(out.servers[1].winner, Some(0));
        assert!(!out.queues[0].cleared && !out.queues[1].cleared);
        assert_eq!(s.queue_len(0) + s.queue_len(1), 3);
    }

    #[test]
    fn arrivals_are_stamped_with_the_new_time() {
        let p = params(vec![1.0], vec![0.0]);
        let mut s = EnvState::new(1);
        let mut rng = EnvRng::new(0);
        s.advance(&p, &mut rng);
        s.advance(&p, &mut rng);
        assert_eq!(s.buffer(0).iter().copied().collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(s.oldest_age(0), 2);
    }
}
