use rand::Rng;

use crate::model::{Action, QueuePolicy, QueueView};
use crate::rng::StreamRng;

use super::BaselineError;

/// Sends the oldest packet to a server drawn i.i.d. from `p`.
#[derive(Debug, Clone)]
pub struct FixedPolicy {
    cumulative: Vec<f64>,
    rng: StreamRng,
}

impl FixedPolicy {
    pub fn new(p: &[f64], n_servers: usize, rng: StreamRng) -> Result<Self, BaselineError> {
        let invalid = |reason: String| BaselineError::InvalidDistribution { expected: n_servers, reason };
        if p.len() != n_servers {
            return Err(invalid(format!("{} entries", p.len())));
        }
        if let Some(v) = p.iter().find(|v| !(**v >= 0.0)) {
            return Err(invalid(format!("entry {v} is negative")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("entries sum to {total}")));
        }
        let mut acc = 0.0;
        let cumulative = p
            .iter()
            .map(|v| {
                acc += v / total;
                acc
            })
            .collect();
        Ok(Self { cumulative, rng })
    }
}

impl QueuePolicy for FixedPolicy {
    fn decide(&mut self, view: &QueueView<'_>) -> Action {
        let u: f64 = self.rng.gen();
        if view.is_empty() {
            return Action::Idle;
        }
        let last = self.cumulative.len() - 1;
        let server = self.cumulative.partition_point(|&c| c <= u).min(last);
        Action::oldest(server)
    }

    fn label(&self) -> &str {
        "fixed"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use std::collections::VecDeque;

    fn rng() -> StreamRng {
        stream(9, Stream::Private(0))
    }

    #[test]
    fn point_mass() {
        let mut f = FixedPolicy::new(&[1.0, 0.0, 0.0], 3, rng()).unwrap();
        let buf: VecDeque<u64> = [1].into();
        for t in 1..1000 {
            assert_eq!(f.decide(&QueueView { queue: 0, time: t, buffer: &buf }), Action::oldest(0));
        }
    }

    #[test]
    fn uniform_frequencies() {
        let mut f = FixedPolicy::new(&[0.25; 4], 4, rng()).unwrap();
        let buf: VecDeque<u64> = [1].into();
        let mut counts = [0u32; 4];
        for t in 1..=100_000 {
            counts[f.decide(&QueueView { queue: 0, time: t, buffer: &buf }).server().unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e5 - 0.25).abs() <= 0.01, "{counts:?}");
        }
    }

    #[test]
    fn rejects_bad_distributions() {
        assert!(FixedPolicy::new(&[1.2, -0.2], 2, rng()).is_err());
        assert!(FixedPolicy::new(&[0.5, 0.4], 2, rng()).is_err());
        assert!(FixedPolicy::new(&[0.5, 0.5], 3, rng()).is_err());
    }
}
