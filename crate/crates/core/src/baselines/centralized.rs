use std::sync::Arc;

use rand::Rng;

use crate::birkhoff::{ordered_birkhoff, psi_sample, BvnDecomposition, CostMatrix};
use crate::mapping::{compute_phi, PhiConfig};
use crate::model::{Action, EpisodeSeeds, QueuePolicy, QueueView, SystemParams};
use crate::rng::StreamRng;

use super::BaselineError;

/// One queue of the centralized stationary policy.
#[derive(Debug, Clone)]
pub struct CentralizedQueue {
    queue: usize,
    decomposition: Arc<BvnDecomposition>,
    shared: StreamRng,
}

impl QueuePolicy for CentralizedQueue {
    fn decide(&mut self, view: &QueueView<'_>) -> Action {
        let omega: f64 = self.shared.gen();
        if view.is_empty() {
            return Action::Idle;
        }
        Action::oldest(psi_sample(&self.decomposition, omega).apply(self.queue))
    }

    fn label(&self) -> &str {
        "centralized"
    }
}

/// Builds one policy per queue, all sampling the decomposition of
/// `phi(lambda, mu)` with the same per-round draw.
pub fn centralized_policies(
    params: &SystemParams,
    phi: &PhiConfig,
    seeds: EpisodeSeeds,
) -> Result<Vec<Box<dyn QueuePolicy>>, BaselineError> {
    let margin = params.margin();
    if !(margin > 0.0) {
        return Err(BaselineError::NonPositiveMargin(margin));
    }
    let mut shared = seeds.shared();
    let cost = CostMatrix::random(params.n_servers(), &mut shared);
    let matrix = compute_phi(params.lambda(), params.mu(), phi)?;
    let decomposition = Arc::new(ordered_birkhoff(&matrix, &cost)?);
    Ok((0..params.n_queues())
        .map(|queue| {
            Box::new(CentralizedQueue { queue, decomposition: Arc::clone(&decomposition), shared: shared.clone() })
                as Box<dyn QueuePolicy>
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{run_episode, Episode};
    use std::collections::HashSet;

    fn easy() -> SystemParams {
        let l = vec![0.45, 0.35, 0.25, 0.15];
        let m = l.iter().map(|x| 2.1 * x).collect();
        SystemParams::new(l, m).unwrap()
    }

    #[test]
    fn single_queue_single_server() {
        let p = SystemParams::new(vec![0.5], vec![0.9]).unwrap();
        let (_, ep) = run_episode(
            &p,
            centralized_policies(&p, &PhiConfig::default(), EpisodeSeeds { seed: 1 }).unwrap(),
            1000,
            1,
            100,
        )
        .unwrap();
        assert!(ep.actions().iter().all(|a| a.server().unwrap_or(0) == 0));
    }

    #[test]
    fn refuses_unstable_instances() {
        let p = SystemParams::new(vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            centralized_policies(&p, &PhiConfig::default(), EpisodeSeeds { seed: 0 }),
            Err(BaselineError::NonPositiveMargin(_))
        ));
    }

    #[test]
    fn never_collides() {
        let p = easy();
        let pol = centralized_policies(&p, &PhiConfig::default(), EpisodeSeeds { seed: 4 }).unwrap();
        let mut ep = Episode::new(p, pol, 4);
        for _ in 0..20_000 {
            ep.step().unwrap();
            let sends: Vec<usize> = ep.actions().iter().filter_map(|a| a.server()).collect();
            let distinct: HashSet<usize> = sends.iter().copied().collect();
            assert_eq!(sends.len(), distinct.len());
        }
    }

    #[test]
    fn clears_at_least_arrival_rates() {
        let p = easy();
        for seed in 0..3 {
            let pol = centralized_policies(&p, &PhiConfig::default(), EpisodeSeeds { seed }).unwrap();
            let (traj, _) = run_episode(&p, pol, 100_000, seed, 1000).unwrap();
            let last = traj.rounds.last().unwrap();
            for q in 0..4 {
                let rate = last.cleared_cum[q] as f64 / 1e5;
                let sd = (p.lambda()[q] * (1.0 - p.lambda()[q]) / 1e5).sqrt();
                assert!(rate >= p.lambda()[q] - 3.0 * sd, "queue {q}: {rate}");
            }
        }
    }
}
