use crate::model::{Action, QueuePolicy, QueueView, SystemParams};

use super::BaselineError;

/// The symmetric instance `lambda_i = 1/N`, `mu_k = 2(N-d)/N^2`, played in
/// windows of length `k^2` whose first `ceil(alpha k^2)` rounds pair queues up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterexampleConfig {
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
}

/// Which theoretical regimes `alpha` falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Regimes {
    /// `alpha > 1 - d/(N-d)`.
    pub unstable: bool,
    /// `alpha < 1 - 1/(N-1)`.
    pub no_policy_regret: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Paired,
    Spread,
}

impl CounterexampleConfig {
    pub fn new(n: usize, d: usize, alpha: f64) -> Result<Self, BaselineError> {
        if n == 0 || n % 2 != 0 {
            return Err(BaselineError::OddQueueCount(n));
        }
        if d < 2 || 2 * d >= n {
            return Err(BaselineError::InvalidCounterexample(format!("need 2 <= d < N/2, got d = {d}, N = {n}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(BaselineError::InvalidCounterexample(format!("alpha {alpha} outside (0, 1)")));
        }
        Ok(Self { n, d, alpha })
    }

    pub fn params(&self) -> SystemParams {
        let nf = self.n as f64;
        let mu = 2.0 * (nf - self.d as f64) / (nf * nf);
        SystemParams::new(vec![1.0 / nf; self.n], vec![mu; self.n]).expect("rates lie in [0, 1]")
    }

    pub fn instability_threshold(&self) -> f64 {
        1.0 - self.d as f64 / (self.n - self.d) as f64
    }

    pub fn no_regret_threshold(&self) -> f64 {
        1.0 - 1.0 / (self.n - 1) as f64
    }

    pub fn regimes(&self) -> Regimes {
        Regimes {
            unstable: self.alpha > self.instability_threshold(),
            no_policy_regret: self.alpha < self.no_regret_threshold(),
        }
    }

    /// Per-round drift of a pair's total load averaged over a window, when
    /// every queue stays busy: `2[alpha(N-d) - (N-2d)] / N^2`.
    pub fn pair_drift(&self) -> f64 {
        let (n, d) = (self.n as f64, self.d as f64);
        2.0 * (self.alpha * (n - d) - (n - 2.0 * d)) / (n * n)
    }

    /// `w_k = k^2`.
    pub fn window_length(k: u64) -> u64 {
        k * k
    }

    /// `W_k = w_1 + ... + w_k`.
    pub fn window_end(k: u64) -> u64 {
        k * (k + 1) * (2 * k + 1) / 6
    }

    /// Rounds of window `k` spent in the paired stage.
    pub fn paired_rounds(&self, k: u64) -> u64 {
        (self.alpha * Self::window_length(k) as f64 - 1e-9).ceil() as u64
    }

    /// Window index and 1-based offset of round `t >= 1`.
    pub fn locate(t: u64) -> (u64, u64) {
        let mut k = 1;
        while Self::window_end(k) < t {
            k += 1;
        }
        (k, t - Self::window_end(k - 1))
    }

    pub fn stage(&self, t: u64) -> Stage {
        let (k, offset) = Self::locate(t);
        if offset <= self.paired_rounds(k) { Stage::Paired } else { Stage::Spread }
    }

    /// 0-based server of 0-based `queue` at round `t`.
    pub fn server(&self, queue: usize, t: u64) -> usize {
        let n = self.n as u64;
        let q = queue as u64 + 1;
        let expr = match self.stage(t) {
            Stage::Paired => 2 * q.div_ceil(2) + t,
            Stage::Spread => q + t,
        };
        ((expr - 1) % n) as usize
    }
}

/// One queue following the schedule.
#[derive(Debug, Clone)]
pub struct CounterexampleQueue {
    cfg: CounterexampleConfig,
    queue: usize,
}

impl CounterexampleQueue {
    pub fn new(cfg: CounterexampleConfig, queue: usize) -> Self {
        Self { cfg, queue }
    }
}

impl QueuePolicy for CounterexampleQueue {
    fn decide(&mut self, view: &QueueView<'_>) -> Action {
        if view.is_empty() {
            return Action::Idle;
        }
        Action::oldest(self.cfg.server(self.queue, view.time))
    }

    fn label(&self) -> &str {
        "counterexample"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::run_episode;
    use std::collections::HashSet;

    #[test]
    fn validation() {
        assert!(matches!(CounterexampleConfig::new(5, 2, 0.8), Err(BaselineError::OddQueueCount(5))));
        assert!(CounterexampleConfig::new(10, 1, 0.8).is_err());
        assert!(CounterexampleConfig::new(10, 2, 1.0).is_err());
    }

    #[test]
    fn reference_regimes() {
        let cfg = CounterexampleConfig::new(10, 2, 0.8).unwrap();
        assert!((cfg.instability_threshold() - 0.75).abs() < 1e-12);
        assert!((cfg.no_regret_threshold() - 8.0 / 9.0).abs() < 1e-12);
        assert_eq!(cfg.regimes(), Regimes { unstable: true, no_policy_regret: true });
        assert!((cfg.pair_drift() - 0.008).abs() < 1e-12);
        let p = cfg.params();
        assert_eq!(p.lambda(), &[0.1; 10]);
        assert!((p.mu()[0] - 0.16).abs() < 1e-12);
    }

    #[test]
    fn window_arithmetic() {
        assert_eq!(CounterexampleConfig::window_end(20), 2870);
        assert_eq!(CounterexampleConfig::window_end(40), 22_140);
        assert_eq!(CounterexampleConfig::locate(1), (1, 1));
        assert_eq!(CounterexampleConfig::locate(2), (2, 1));
        assert_eq!(CounterexampleConfig::locate(5), (2, 4));
        assert_eq!(CounterexampleConfig::locate(6), (3, 1));
        let half = CounterexampleConfig::new(4, 2, 0.5);
        assert!(half.is_err(), "d must be below N/2");
        let cfg = CounterexampleConfig { n: 4, d: 1, alpha: 0.5 };
        assert_eq!(cfg.paired_rounds(1), 1);
        assert_eq!(cfg.stage(1), Stage::Paired);
        // window 2 spans rounds 2..=5, two of them paired
        assert_eq!(cfg.stage(3), Stage::Paired);
        assert_eq!(cfg.stage(4), Stage::Spread);
    }

    #[test]
    fn pairs_share_then_everybody_spreads() {
        for n in [2, 4, 6, 10] {
            let cfg = CounterexampleConfig { n, d: 1, alpha: 0.7 };
            for t in 1..=CounterexampleConfig::window_end(12) {
                let servers: Vec<usize> = (0..n).map(|q| cfg.server(q, t)).collect();
                let distinct: HashSet<usize> = servers.iter().copied().collect();
                match cfg.stage(t) {
                    Stage::Paired => {
                        for p in 0..n / 2 {
                            assert_eq!(servers[2 * p], servers[2 * p + 1]);
                        }
                        assert_eq!(distinct.len(), n / 2);
                    }
                    Stage::Spread => assert_eq!(distinct.len(), n),
                }
            }
        }
    }

    #[test]
    fn second_pair_of_four_queues() {
        let cfg = CounterexampleConfig { n: 4, d: 1, alpha: 0.99 };
        for t in [1, 2, 3, 6, 7] {
            assert_eq!(cfg.stage(t), Stage::Paired);
            let expected = ((4 + t - 1) % 4) as usize;
            assert_eq!(cfg.server(2, t), expected);
            assert_eq!(cfg.server(3, t), expected);
        }
    }

    #[test]
    fn unstable_regime_accumulates_packets() {
        let cfg = CounterexampleConfig::new(10, 2, 0.8).unwrap();
        let pol: Vec<Box<dyn QueuePolicy>> =
            (0..10).map(|q| Box::new(CounterexampleQueue::new(cfg, q)) as _).collect();
        let horizon = CounterexampleConfig::window_end(30);
        let (traj, _) = run_episode(&cfg.params(), pol, horizon, 7, horizon).unwrap();
        let total: u64 = traj.rounds.last().unwrap().queue_len.iter().sum();
        assert!(total as f64 >= 0.5 * cfg.pair_drift() * horizon as f64, "{total}");
    }
}
