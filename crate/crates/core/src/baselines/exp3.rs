use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Action, QueuePolicy, QueueRound, QueueView};
use crate::rng::StreamRng;

/// EXP3.P settings. Window `k = 1, 2, ...` lasts `2^k` rounds and is run as a
/// fresh bandit tuned for that horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Exp3Config {
    /// Failure probability of the per-window high-probability bound.
    pub delta: f64,
}

impl Default for Exp3Config {
    fn default() -> Self {
        Self { delta: 0.05 }
    }
}

/// Parameters of the bandit run on one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exp3Window {
    pub index: u32,
    pub length: u64,
    /// Last round (cumulative) of the window.
    pub end: u64,
    pub alpha: f64,
    pub gamma: f64,
}

impl Exp3Window {
    pub fn new(index: u32, k: usize, cfg: &Exp3Config) -> Self {
        let length = 1u64 << index;
        let kf = k as f64;
        let lf = length as f64;
        let alpha = 2.0 * (kf * lf / cfg.delta).ln().sqrt();
        let gamma = (0.6f64).min(2.0 * (0.6 * kf * kf.ln() / lf).sqrt());
        Self { index, length, end: (1u64 << (index + 1)) - 2, alpha, gamma }
    }
}

/// A queue running EXP3.P with restarts, using its private stream.
#[derive(Debug, Clone)]
pub struct Exp3Queue {
    k: usize,
    cfg: Exp3Config,
    rng: StreamRng,
    window: Exp3Window,
    log_weights: Vec<f64>,
    probs: Vec<f64>,
    restarts: Vec<u64>,
}

impl Exp3Queue {
    pub fn new(n_servers: usize, cfg: Exp3Config, rng: StreamRng) -> Self {
        let mut q = Self {
            k: n_servers,
            cfg,
            rng,
            window: Exp3Window::new(1, n_servers, &cfg),
            log_weights: Vec::new(),
            probs: vec![0.0; n_servers],
            restarts: Vec::new(),
        };
        q.reset(1, 0);
        q
    }

    fn reset(&mut self, index: u32, at: u64) {
        self.window = Exp3Window::new(index, self.k, &self.cfg);
        let w = &self.window;
        let init = w.alpha * w.gamma / 3.0 * (w.length as f64 / self.k as f64).sqrt();
        self.log_weights = vec![init; self.k];
        self.restarts.push(at);
    }

    /// Rounds after which the bandit was restarted (the first entry is 0).
    pub fn restarts(&self) -> &[u64] {
        &self.restarts
    }

    pub fn window(&self) -> &Exp3Window {
        &self.window
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    fn refresh_probs(&mut self) {
        let max = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = self.log_weights.iter().map(|w| (w - max).exp()).sum();
        let g = self.window.gamma;
        let kf = self.k as f64;
        for (p, w) in self.probs.iter_mut().zip(&self.log_weights) {
            *p = (1.0 - g) * (w - max).exp() / total + g / kf;
        }
    }
}

impl QueuePolicy for Exp3Queue {
    fn decide(&mut self, view: &QueueView<'_>) -> Action {
        while view.time > self.window.end {
            let next = self.window.index + 1;
            let at = self.window.end;
            self.reset(next, at);
        }
        if self.k == 1 {
            return if view.is_empty() { Action::Idle } else { Action::oldest(0) };
        }
        if view.is_empty() {
            return Action::Idle;
        }
        self.refresh_probs();
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        let mut choice = self.k - 1;
        for (j, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                choice = j;
                break;
            }
        }
        Action::oldest(choice)
    }

    fn observe(&mut self, _view: &QueueView<'_>, _action: Action, result: QueueRound) {
        let Some(chosen) = result.sent_to else {
            return;
        };
        if self.k == 1 {
            return;
        }
        let w = self.window;
        let kf = self.k as f64;
        let bonus_scale = w.alpha / (kf * w.length as f64).sqrt();
        let reward = if result.cleared { 1.0 } else { 0.0 };
        for j in 0..self.k {
            let p = self.probs[j];
            let x_hat = if j == chosen { reward / p } else { 0.0 };
            self.log_weights[j] += w.gamma / (3.0 * kf) * (x_hat + bonus_scale / p);
        }
    }

    fn label(&self) -> &str {
        "exp3"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Episode, SystemParams};
    use crate::rng::{stream, Stream};

    #[test]
    fn windows_restart_on_doubling_schedule() {
        let mut q = Exp3Queue::new(2, Exp3Config::default(), stream(1, Stream::Private(0)));
        let buf = std::collections::VecDeque::new();
        for t in 1..=40 {
            q.decide(&QueueView { queue: 0, time: t, buffer: &buf });
        }
        assert_eq!(q.restarts(), &[0, 2, 6, 14, 30]);
    }

    #[test]
    fn window_parameters() {
        let w = Exp3Window::new(3, 4, &Exp3Config::default());
        assert_eq!(w.length, 8);
        assert_eq!(w.end, 14);
        assert!((w.gamma - 0.6).abs() < 1e-12);
        let w = Exp3Window::new(16, 4, &Exp3Config::default());
        assert!(w.gamma < 0.02);
    }

    #[test]
    fn single_server_is_trivial() {
        let p = SystemParams::new(vec![0.5], vec![0.5]).unwrap();
        let q = Exp3Queue::new(1, Exp3Config::default(), stream(2, Stream::Private(0)));
        let mut ep = Episode::new(p, vec![Box::new(q)], 2);
        for _ in 0..1000 {
            ep.step().unwrap();
            assert!(ep.actions()[0].server().unwrap_or(0) == 0);
        }
    }

    #[test]
    fn concentrates_on_the_best_server() {
        let p = SystemParams::new(vec![0.5], vec![0.9, 0.1]).unwrap();
        let q = Exp3Queue::new(2, Exp3Config::default(), stream(3, Stream::Private(0)));
        let mut ep = Episode::new(p, vec![Box::new(q)], 3);
        let (mut best, mut total) = (0u64, 0u64);
        for t in 1..=100_000u64 {
            ep.step().unwrap();
            // final window starts after round 65534
            if t > 65_534 {
                if let Some(s) = ep.actions()[0].server() {
                    total += 1;
                    best += (s == 0) as u64;
                }
            }
        }
        assert!(best as f64 / total as f64 >= 0.9, "{best}/{total}");
    }

    #[test]
    fn probabilities_form_a_distribution() {
        let mut q = Exp3Queue::new(3, Exp3Config::default(), stream(4, Stream::Private(0)));
        let buf: std::collections::VecDeque<u64> = [1].into();
        for t in 1..200 {
            let v = QueueView { queue: 0, time: t, buffer: &buf };
            let a = q.decide(&v);
            let s: f64 = q.probabilities().iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            q.observe(&v, a, QueueRound { sent_to: a.server(), cleared: t % 3 == 0 });
        }
    }
}
