use std::sync::Arc;

use rayon::prelude::*;

use crate::model::{Action, Episode, EpisodeSeeds, QueuePolicy, QueueRound, QueueView, SystemParams};

use super::{BaselineError, CounterexampleConfig, CounterexampleQueue, FixedPolicy, Stage};

/// Round predicate deciding when a deviant queue uses its fixed distribution.
pub type ActiveRounds = Arc<dyn Fn(u64) -> bool + Send + Sync>;

/// Builds the compliant policies of one seed.
pub type PolicyFactory<'a> = dyn Fn(u64) -> Result<Vec<Box<dyn QueuePolicy>>, BaselineError> + Sync + 'a;

/// A queue that plays `deviant` on active rounds and `compliant` otherwise.
pub struct SwitchPolicy {
    compliant: Box<dyn QueuePolicy>,
    deviant: Box<dyn QueuePolicy>,
    active: ActiveRounds,
    deviated: bool,
}

impl SwitchPolicy {
    pub fn new(compliant: Box<dyn QueuePolicy>, deviant: Box<dyn QueuePolicy>, active: ActiveRounds) -> Self {
        Self { compliant, deviant, active, deviated: false }
    }
}

impl QueuePolicy for SwitchPolicy {
    fn decide(&mut self, view: &QueueView<'_>) -> Action {
        self.deviated = (self.active)(view.time);
        if self.deviated {
            self.deviant.decide(view)
        } else {
            self.compliant.decide(view)
        }
    }

    fn observe(&mut self, view: &QueueView<'_>, action: Action, result: QueueRound) {
        if self.deviated {
            self.deviant.observe(view, action, result);
        } else {
            self.compliant.observe(view, action, result);
        }
    }

    fn label(&self) -> &str {
        "deviant"
    }
}

/// Which queue deviates, to what distribution, and when.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    /// 0-based queue id.
    pub queue: usize,
    pub dist: Vec<f64>,
    /// Deviate during paired-stage rounds only instead of every round.
    pub stage1_only: bool,
}

/// Packets cleared by the focal queue during one window, per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowComparison {
    pub window: usize,
    pub end: u64,
    pub compliant: Vec<u64>,
    pub deviant: Vec<u64>,
}

impl WindowComparison {
    pub fn differences(&self) -> Vec<f64> {
        self.deviant.iter().zip(&self.compliant).map(|(d, c)| *d as f64 - *c as f64).collect()
    }

    pub fn mean_difference(&self) -> f64 {
        let d = self.differences();
        d.iter().sum::<f64>() / d.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub queue: usize,
    pub seeds: Vec<u64>,
    pub windows: Vec<WindowComparison>,
}

impl DeviationReport {
    /// Mean over seeds of the deviant-minus-compliant count averaged over the
    /// last `last` windows, with the standard error across seeds.
    pub fn tail_difference(&self, last: usize) -> (f64, f64) {
        let tail = &self.windows[self.windows.len().saturating_sub(last)..];
        if tail.is_empty() || self.seeds.is_empty() {
            return (0.0, 0.0);
        }
        let per_seed: Vec<f64> = (0..self.seeds.len())
            .map(|s| tail.iter().map(|w| w.deviant[s] as f64 - w.compliant[s] as f64).sum::<f64>() / tail.len() as f64)
            .collect();
        let n = per_seed.len() as f64;
        let mean = per_seed.iter().sum::<f64>() / n;
        if per_seed.len() < 2 {
            return (mean, 0.0);
        }
        let var = per_seed.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }
}

fn cleared_at_boundaries(
    params: &SystemParams,
    policies: Vec<Box<dyn QueuePolicy>>,
    seed: u64,
    queue: usize,
    boundaries: &[u64],
) -> Result<Vec<u64>, BaselineError> {
    let mut ep = Episode::new(params.clone(), policies, seed);
    let mut out = Vec::with_capacity(boundaries.len());
    let mut prev = 0;
    for &end in boundaries {
        while ep.state().time() < end {
            ep.step()?;
        }
        let cum = ep.state().cleared(queue);
        out.push(cum - prev);
        prev = cum;
    }
    Ok(out)
}

/// Paired compliant/deviant runs of arbitrary policies. `boundaries` are the
/// increasing last rounds of each window; windows ending after `horizon` are
/// dropped.
#[allow(clippy::too_many_arguments)]
pub fn paired_deviation(
    params: &SystemParams,
    compliant: &PolicyFactory<'_>,
    queue: usize,
    dist: &[f64],
    active: Option<ActiveRounds>,
    horizon: u64,
    seeds: &[u64],
    boundaries: &[u64],
) -> Result<DeviationReport, BaselineError> {
    let n = params.n_queues();
    if queue >= n {
        return Err(BaselineError::UnknownQueue { queue, n_queues: n });
    }
    // validate once up front so per-seed errors can only come from the runs
    FixedPolicy::new(dist, params.n_servers(), EpisodeSeeds { seed: 0 }.private(queue))?;
    let boundaries: Vec<u64> = boundaries.iter().copied().filter(|&b| b <= horizon).collect();

    let per_seed: Vec<(Vec<u64>, Vec<u64>)> = seeds
        .par_iter()
        .map(|&seed| {
            let base = cleared_at_boundaries(params, compliant(seed)?, seed, queue, &boundaries)?;
            let fixed: Box<dyn QueuePolicy> =
                Box::new(FixedPolicy::new(dist, params.n_servers(), EpisodeSeeds { seed }.private(queue))?);
            let mut fixed = Some(fixed);
            let policies: Vec<Box<dyn QueuePolicy>> = compliant(seed)?
                .into_iter()
                .enumerate()
                .map(|(q, original)| {
                    if q != queue {
                        return original;
                    }
                    let fixed = fixed.take().expect("one deviant queue");
                    match &active {
                        Some(active) => Box::new(SwitchPolicy::new(original, fixed, Arc::clone(active))),
                        None => fixed,
                    }
                })
                .collect();
            let dev = cleared_at_boundaries(params, policies, seed, queue, &boundaries)?;
            Ok((base, dev))
        })
        .collect::<Result<_, BaselineError>>()?;

    let windows = boundaries
        .iter()
        .enumerate()
        .map(|(w, &end)| WindowComparison {
            window: w + 1,
            end,
            compliant: per_seed.iter().map(|(c, _)| c[w]).collect(),
            deviant: per_seed.iter().map(|(_, d)| d[w]).collect(),
        })
        .collect();
    Ok(DeviationReport { queue, seeds: seeds.to_vec(), windows })
}

/// Deviation from the counterexample schedule, windowed by `W_k`.
pub fn deviation_experiment(
    cfg: &CounterexampleConfig,
    deviation: &Deviation,
    horizon: u64,
    seeds: &[u64],
) -> Result<DeviationReport, BaselineError> {
    let params = cfg.params();
    let cfg = *cfg;
    let factory = move |_seed: u64| -> Result<Vec<Box<dyn QueuePolicy>>, BaselineError> {
        Ok((0..cfg.n).map(|q| Box::new(CounterexampleQueue::new(cfg, q)) as Box<dyn QueuePolicy>).collect())
    };
    let active: Option<ActiveRounds> =
        deviation.stage1_only.then(|| Arc::new(move |t: u64| cfg.stage(t) == Stage::Paired) as ActiveRounds);
    let boundaries: Vec<u64> = (1..)
        .map(CounterexampleConfig::window_end)
        .take_while(|&b| b <= horizon)
        .collect();
    paired_deviation(&params, &factory, deviation.queue, &deviation.dist, active, horizon, seeds, &boundaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_horizon_gives_empty_report() {
        let cfg = CounterexampleConfig::new(10, 2, 0.8).unwrap();
        let dev = Deviation { queue: 0, dist: vec![0.1; 10], stage1_only: false };
        let report = deviation_experiment(&cfg, &dev, 0, &[1, 2]).unwrap();
        assert!(report.windows.is_empty());
        assert_eq!(report.tail_difference(10), (0.0, 0.0));
    }

    #[test]
    fn matching_point_mass_changes_nothing() {
        // The two-queue schedule alternates servers every round, so no point
        // mass reproduces it; a switch that never fires is the degenerate
        // deviation that must leave every window unchanged.
        let params = SystemParams::new(vec![0.3, 0.3], vec![0.5, 0.5]).unwrap();
        let cfg = CounterexampleConfig { n: 2, d: 0, alpha: 0.5 };
        let factory = move |_s: u64| -> Result<Vec<Box<dyn QueuePolicy>>, BaselineError> {
            Ok((0..2).map(|q| Box::new(CounterexampleQueue::new(cfg, q)) as Box<dyn QueuePolicy>).collect())
        };
        let never: ActiveRounds = Arc::new(|_| false);
        let report =
            paired_deviation(&params, &factory, 0, &[1.0, 0.0], Some(never), 500, &[3, 4], &[100, 200, 300, 400, 500])
                .unwrap();
        assert!(report.windows.iter().all(|w| w.compliant == w.deviant));
    }

    #[test]
    fn invalid_inputs() {
        let cfg = CounterexampleConfig::new(10, 2, 0.8).unwrap();
        let bad_queue = Deviation { queue: 10, dist: vec![0.1; 10], stage1_only: false };
        assert!(matches!(deviation_experiment(&cfg, &bad_queue, 100, &[1]), Err(BaselineError::UnknownQueue { .. })));
        let bad_dist = Deviation { queue: 0, dist: vec![0.5; 10], stage1_only: false };
        assert!(deviation_experiment(&cfg, &bad_dist, 100, &[1]).is_err());
    }

    #[test]
    fn windows_follow_square_lengths() {
        let cfg = CounterexampleConfig::new(10, 2, 0.8).unwrap();
        let dev = Deviation { queue: 3, dist: vec![0.1; 10], stage1_only: true };
        let report = deviation_experiment(&cfg, &dev, 100, &[5]).unwrap();
        let ends: Vec<u64> = report.windows.iter().map(|w| w.end).collect();
        assert_eq!(ends, vec![1, 5, 14, 30, 55, 91]);
    }
}
