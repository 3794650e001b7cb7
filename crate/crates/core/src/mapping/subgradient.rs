use nalgebra::DMatrix;

use super::dykstra::dykstra;
use super::{barrier_objective, BistochasticMatrix, MappingError, PhiConfig, PhiSolution, SOLVER_TOL};

const POLISH_ITERS: usize = 10_000;

/// Objective values along a run of [`projected_subgradient`].
#[derive(Debug, Clone, Default)]
pub struct SubgradientTrace {
    /// Best objective among the raw iterates seen so far, per step.
    pub best_values: Vec<f64>,
    /// Objective of the averaged iterate, per step.
    pub averaged_values: Vec<f64>,
}

/// Averaged projected subgradient descent on the barrier objective over `X`.
///
/// Step `t` moves by `2N/(t+1)` along a subgradient, projects back with
/// Dykstra, and folds the iterate into the running average with weight
/// `2/(t+2)`.
pub fn projected_subgradient(
    lambda: &[f64],
    mu: &[f64],
    delta_hat: f64,
    start: &DMatrix<f64>,
    outer_iters: usize,
    dykstra_iters: usize,
) -> (DMatrix<f64>, SubgradientTrace) {
    let floor = delta_hat / std::f64::consts::E.sqrt();
    let n = lambda.len() as f64;
    let mut p = dykstra(start, lambda, mu, floor, dykstra_iters);
    let mut avg = p.clone();
    let mut trace = SubgradientTrace::default();
    let mut best = barrier_objective(&p, lambda, mu).0;
    for t in 1..=outer_iters {
        let tf = t as f64;
        let (_, grad) = barrier_objective(&p, lambda, mu);
        // Dykstra leaves residuals of ~1e-13; an iterate right on the barrier
        // has no subgradient, so nudge it toward the uniform matrix instead.
        let grad = grad.unwrap_or_else(|| &p - DMatrix::from_element(p.nrows(), p.ncols(), 1.0 / p.nrows() as f64));
        let step = 2.0 * n / (tf + 1.0);
        p = dykstra(&(&p - grad * step), lambda, mu, floor, dykstra_iters);
        avg = &avg * (tf / (tf + 2.0)) + &p * (2.0 / (tf + 2.0));
        best = best.min(barrier_objective(&p, lambda, mu).0);
        trace.best_values.push(best);
        trace.averaged_values.push(barrier_objective(&avg, lambda, mu).0);
    }
    (avg, trace)
}

pub(super) fn solve(
    lambda: &[f64],
    mu: &[f64],
    delta_hat: f64,
    cfg: &PhiConfig,
    previous: Option<&PhiSolution>,
) -> Result<PhiSolution, MappingError> {
    let k = mu.len();
    let start = cfg
        .warm_start
        .as_ref()
        .or(previous.map(|p| &p.matrix))
        .filter(|m| m.size() == k)
        .map(|m| m.matrix().clone())
        .unwrap_or_else(|| DMatrix::from_element(k, k, 1.0 / k as f64));
    let (avg, _) = projected_subgradient(lambda, mu, delta_hat, &start, cfg.max_outer_iters, cfg.dykstra_iters);
    let floor = delta_hat / std::f64::consts::E.sqrt();
    let avg = dykstra(&avg, lambda, mu, floor, POLISH_ITERS);
    let matrix = BistochasticMatrix::with_tolerance(avg.map(|v| v.clamp(0.0, 1.0)), SOLVER_TOL)?;
    Ok(PhiSolution {
        matrix,
        fallback: false,
        iterations: cfg.max_outer_iters,
        gap: f64::NAN,
        dual: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::dykstra::feasibility_violation;

    #[test]
    fn best_so_far_never_increases_and_average_stays_feasible() {
        let l = [0.45, 0.35, 0.25, 0.15];
        let m: Vec<f64> = l.iter().map(|x| 2.1 * x).collect();
        let start = DMatrix::from_element(4, 4, 0.25);
        let (avg, trace) = projected_subgradient(&l, &m, 0.33, &start, 150, 1000);
        assert!(trace.best_values.windows(2).all(|w| w[1] <= w[0]));
        let floor = 0.33 / std::f64::consts::E.sqrt();
        let v = feasibility_violation(&avg, &l, &m, floor);
        assert!(v < 1e-6, "{v}");
    }
}
