use nalgebra::DMatrix;

use super::{BistochasticMatrix, MappingError, SOLVER_TOL};
#[cfg(test)]
use super::{row_margins, sum_violation};

/// Approximate Euclidean projection onto
/// `X = { P bistochastic : (P mu)_i - lambda_i >= delta_hat / sqrt(e) }`.
///
/// Dykstra's cyclic scheme over four families of sets with closed-form
/// projections: unit row sums, unit column sums, the non-negative orthant and
/// one half-space per queue. Stops early once a full cycle moves no entry by
/// more than `1e-13`.
pub fn project_feasible(
    p: &DMatrix<f64>,
    lambda: &[f64],
    mu: &[f64],
    delta_hat: f64,
    iters: usize,
) -> Result<BistochasticMatrix, MappingError> {
    if !(delta_hat > 0.0) {
        return Err(MappingError::InfeasibleMargin(delta_hat));
    }
    let floor = delta_hat / std::f64::consts::E.sqrt();
    let x = dykstra(p, lambda, mu, floor, iters);
    BistochasticMatrix::with_tolerance(x.map(|v| v.clamp(0.0, 1.0)), SOLVER_TOL)
}

pub(crate) fn dykstra(p: &DMatrix<f64>, lambda: &[f64], mu: &[f64], floor: f64, iters: usize) -> DMatrix<f64> {
    let k = p.nrows();
    let kf = k as f64;
    let n = lambda.len();
    let mu_sq: f64 = mu.iter().map(|m| m * m).sum();
    let mut x = p.clone();
    // one correction term per set: rows, columns, orthant, then each half-space
    let mut corr: Vec<DMatrix<f64>> = vec![DMatrix::zeros(k, k); 3 + n];
    let mut y = DMatrix::zeros(k, k);
    for _ in 0..iters {
        let start = x.clone();

        y.copy_from(&x);
        y += &corr[0];
        for i in 0..k {
            let shift = (y.row(i).sum() - 1.0) / kf;
            y.row_mut(i).add_scalar_mut(-shift);
        }
        corr[0] = &x + &corr[0] - &y;
        x.copy_from(&y);

        y.copy_from(&x);
        y += &corr[1];
        for j in 0..k {
            let shift = (y.column(j).sum() - 1.0) / kf;
            y.column_mut(j).add_scalar_mut(-shift);
        }
        corr[1] = &x + &corr[1] - &y;
        x.copy_from(&y);

        y.copy_from(&x);
        y += &corr[2];
        y.apply(|v| *v = v.max(0.0));
        corr[2] = &x + &corr[2] - &y;
        x.copy_from(&y);

        for i in 0..n {
            y.copy_from(&x);
            y += &corr[3 + i];
            let value: f64 = (0..k).map(|j| y[(i, j)] * mu[j]).sum::<f64>() - lambda[i] - floor;
            if value < 0.0 && mu_sq > 0.0 {
                for j in 0..k {
                    y[(i, j)] -= value * mu[j] / mu_sq;
                }
            }
            corr[3 + i] = &x + &corr[3 + i] - &y;
            x.copy_from(&y);
        }

        if (&x - &start).amax() < 1e-13 {
            break;
        }
    }
    x
}

/// Largest violation of the constraints defining `X`.
#[cfg(test)]
pub(crate) fn feasibility_violation(p: &DMatrix<f64>, lambda: &[f64], mu: &[f64], floor: f64) -> f64 {
    let neg = p.iter().fold(0.0f64, |acc, v| acc.max(-v));
    let margin = row_margins(p, lambda, mu)
        .iter()
        .fold(0.0f64, |acc, m| acc.max(floor - m));
    sum_violation(p).max(neg).max(margin)
}
