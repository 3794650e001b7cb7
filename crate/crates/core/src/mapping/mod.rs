//! Dominant mapping `phi`.
//!
//! `phi(lambda, mu)` is the minimizer over `K x K` bistochastic matrices `P` of
//!
//! ```text
//! g(P) = max_{i<N} -ln((P mu)_i - lambda_i) + ||P||_F^2 / (2K)
//! ```
//!
//! or the identity when the margin of `(lambda, mu)` is not positive. The
//! objective is `1/K`-strongly convex, which makes the minimizer locally
//! Lipschitz in the rates. Two solvers are provided:
//!
//! - [`PhiMethod::Dual`] (default): projected Newton ascent on the Lagrange
//!   dual. Exact to ~1e-11 in a handful of iterations and supports warm starts.
//! - [`PhiMethod::Subgradient`]: averaged projected subgradient descent over
//!   the feasible set `X`, with [`project_feasible`] as the projection.

mod dual;
mod dykstra;
mod subgradient;

pub use dual::DualPoint;
pub use dykstra::project_feasible;
pub use subgradient::{projected_subgradient, SubgradientTrace};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::margin_of;

/// Row/column sum tolerance of [`BistochasticMatrix::new`].
pub const BISTOCHASTIC_TOL: f64 = 1e-9;
/// Row/column sum tolerance accepted for solver outputs.
pub const SOLVER_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum MappingError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("line {index} of the matrix sums to {sum}")]
    NotBistochastic { index: usize, sum: f64 },
    #[error("entry ({row}, {col}) = {value} is negative")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("empirical margin {0} is not positive: the feasible set is empty")]
    InfeasibleMargin(f64),
    #[error("rates have {lambda} queues and {mu} servers; need 1 <= queues <= servers")]
    Dimensions { lambda: usize, mu: usize },
}

/// Non-negative square matrix whose rows and columns sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BistochasticMatrix {
    entries: DMatrix<f64>,
}

impl BistochasticMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self, MappingError> {
        Self::with_tolerance(entries, BISTOCHASTIC_TOL)
    }

    /// Validates sums within `tol`; entries above `-1e-12` are clamped to zero.
    pub fn with_tolerance(mut entries: DMatrix<f64>, tol: f64) -> Result<Self, MappingError> {
        let (rows, cols) = entries.shape();
        if rows != cols {
            return Err(MappingError::NotSquare { rows, cols });
        }
        for ((row, col), v) in entries.iter_mut().enumerate().map(|(idx, v)| ((idx % rows, idx / rows), v)) {
            if *v < -1e-12 {
                return Err(MappingError::NegativeEntry { row, col, value: *v });
            }
            *v = v.max(0.0);
        }
        for i in 0..rows {
            let r = entries.row(i).sum();
            if (r - 1.0).abs() > tol {
                return Err(MappingError::NotBistochastic { index: i, sum: r });
            }
            let c = entries.column(i).sum();
            if (c - 1.0).abs() > tol {
                return Err(MappingError::NotBistochastic { index: i, sum: c });
            }
        }
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MappingError> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(MappingError::NotSquare { rows: k, cols: rows.first().map_or(0, Vec::len) });
        }
        Self::new(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
    }

    pub fn identity(k: usize) -> Self {
        Self { entries: DMatrix::identity(k, k) }
    }

    pub fn uniform(k: usize) -> Self {
        Self { entries: DMatrix::from_element(k, k, 1.0 / k as f64) }
    }

    /// Permutation matrix with a one at `(i, perm[i])`.
    pub fn from_permutation(perm: &[usize]) -> Self {
        let k = perm.len();
        Self { entries: DMatrix::from_fn(k, k, |i, j| if perm[i] == j { 1.0 } else { 0.0 }) }
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.size()).map(|i| self.entries.row(i).iter().copied().collect()).collect()
    }

    /// Largest deviation of a row or column sum from one.
    pub fn sum_violation(&self) -> f64 {
        sum_violation(&self.entries)
    }
}

pub(crate) fn sum_violation(m: &DMatrix<f64>) -> f64 {
    let k = m.nrows();
    (0..k)
        .flat_map(|i| [m.row(i).sum(), m.column(i).sum()])
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PhiMethod {
    #[default]
    Dual,
    Subgradient,
}

/// Solver settings for [`compute_phi`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhiConfig {
    pub method: PhiMethod,
    /// Newton iterations (dual) or subgradient steps.
    pub max_outer_iters: usize,
    /// Dykstra cycles per projection (subgradient method only).
    pub dykstra_iters: usize,
    /// Duality-gap target of the dual method.
    pub target_gap: f64,
    #[serde(skip)]
    pub warm_start: Option<BistochasticMatrix>,
}

impl Default for PhiConfig {
    fn default() -> Self {
        Self {
            method: PhiMethod::Dual,
            max_outer_iters: 200,
            dykstra_iters: 100,
            target_gap: 1e-4,
            warm_start: None,
        }
    }
}

/// Output of a `phi` evaluation with solver diagnostics.
#[derive(Debug, Clone)]
pub struct PhiSolution {
    pub matrix: BistochasticMatrix,
    /// `true` when the identity fallback was used.
    pub fallback: bool,
    pub iterations: usize,
    /// Certified suboptimality (dual method) or `NaN` when unknown.
    pub gap: f64,
    pub dual: Option<DualPoint>,
}

/// Margin of estimated rates; may be non-positive.
pub fn empirical_margin(lambda_hat: &[f64], mu_hat: &[f64]) -> f64 {
    margin_of(lambda_hat, mu_hat)
}

/// `(P mu)_i - lambda_i` for every queue `i`.
pub fn verify_domination(p: &BistochasticMatrix, lambda: &[f64], mu: &[f64]) -> Vec<f64> {
    row_margins(p.matrix(), lambda, mu)
}

pub(crate) fn row_margins(p: &DMatrix<f64>, lambda: &[f64], mu: &[f64]) -> Vec<f64> {
    let mu = DVector::from_column_slice(mu);
    let pm = p * mu;
    lambda.iter().enumerate().map(|(i, l)| pm[i] - l).collect()
}

/// Value of the barrier objective and one subgradient.
///
/// The value is `+inf` (and no subgradient is returned) when some row margin is
/// not positive. Ties in the max go to the smallest row index.
pub fn barrier_objective(p: &DMatrix<f64>, lambda: &[f64], mu: &[f64]) -> (f64, Option<DMatrix<f64>>) {
    let k = p.nrows();
    let margins = row_margins(p, lambda, mu);
    let mut worst = 0;
    for (i, &m) in margins.iter().enumerate() {
        if m <= 0.0 {
            return (f64::INFINITY, None);
        }
        if m < margins[worst] {
            worst = i;
        }
    }
    let kf = k as f64;
    let value = -margins[worst].ln() + p.norm_squared() / (2.0 * kf);
    let mut grad = p / kf;
    for j in 0..k {
        grad[(worst, j)] -= mu[j] / margins[worst];
    }
    (value, Some(grad))
}

fn check_dims(lambda: &[f64], mu: &[f64]) -> Result<(), MappingError> {
    if lambda.is_empty() || lambda.len() > mu.len() {
        return Err(MappingError::Dimensions { lambda: lambda.len(), mu: mu.len() });
    }
    Ok(())
}

/// The dominant mapping. `mu` must have at least as many entries as `lambda`.
pub fn compute_phi(lambda: &[f64], mu: &[f64], cfg: &PhiConfig) -> Result<BistochasticMatrix, MappingError> {
    solve_phi(lambda, mu, cfg, None).map(|s| s.matrix)
}

/// [`compute_phi`] with diagnostics and an optional previous solution to warm
/// start from.
pub fn solve_phi(
    lambda: &[f64],
    mu: &[f64],
    cfg: &PhiConfig,
    previous: Option<&PhiSolution>,
) -> Result<PhiSolution, MappingError> {
    check_dims(lambda, mu)?;
    let k = mu.len();
    let delta_hat = empirical_margin(lambda, mu);
    if !(delta_hat > 0.0) {
        return Ok(PhiSolution {
            matrix: BistochasticMatrix::identity(k),
            fallback: true,
            iterations: 0,
            gap: f64::NAN,
            dual: None,
        });
    }
    if k == 1 {
        return Ok(PhiSolution {
            matrix: BistochasticMatrix::identity(1),
            fallback: false,
            iterations: 0,
            gap: 0.0,
            dual: None,
        });
    }
    match cfg.method {
        PhiMethod::Dual => {
            let warm = previous.and_then(|p| p.dual.as_ref());
            if let Some(sol) = dual::solve(lambda, mu, delta_hat, cfg, warm) {
                return Ok(sol);
            }
            // Newton stalled; the subgradient route is slow but always returns
            // a feasible point.
            let fallback = PhiConfig { method: PhiMethod::Subgradient, ..cfg.clone() };
            subgradient::solve(lambda, mu, delta_hat, &fallback, previous)
        }
        PhiMethod::Subgradient => subgradient::solve(lambda, mu, delta_hat, cfg, previous),
    }
}
