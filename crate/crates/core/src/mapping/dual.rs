//! Projected Newton ascent on the Lagrange dual of the dominant-mapping program.
//!
//! With an epigraph variable `u` for the smallest row margin the primal reads
//!
//! ```text
//! min  -ln u + ||P||^2 / (2K)
//! s.t. P 1 = 1,  P^T 1 = 1,  P >= 0,  (P mu)_i - lambda_i >= u  (i < N)
//! ```
//!
//! Stationarity gives `P_ij = K (a_i + b_j + c_i mu_j)_+` and `u = 1 / sum(c)`,
//! so the dual is the concave, once-differentiable function
//!
//! ```text
//! D(a, b, c) = 1 + ln(sum c) - K/2 sum_ij (a_i + b_j + c_i mu_j)_+^2
//!              + sum a + sum b + sum_i c_i lambda_i,      c >= 0
//! ```
//!
//! whose gradient is exactly the primal residual. `D` is invariant under
//! `(a + s, b - s)`, so the last column multiplier is pinned to zero.

use nalgebra::{DMatrix, DVector};

use super::{barrier_objective, BistochasticMatrix, PhiConfig, PhiSolution};

const RESIDUAL_TOL: f64 = 1e-11;
const ARMIJO: f64 = 1e-4;

/// Dual multipliers of a solved program, reusable as a warm start.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    /// Row-sum multipliers `a`.
    pub rows: Vec<f64>,
    /// Column-sum multipliers `b` (last entry pinned at zero).
    pub cols: Vec<f64>,
    /// Margin multipliers `c >= 0`, one per queue.
    pub margins: Vec<f64>,
}

struct Program<'a> {
    lambda: &'a [f64],
    mu: &'a [f64],
    k: usize,
    n: usize,
}

impl Program<'_> {
    fn n_vars(&self) -> usize {
        2 * self.k - 1 + self.n
    }

    fn c_index(&self, i: usize) -> usize {
        2 * self.k - 1 + i
    }

    fn pack(&self, w: &DualPoint) -> DVector<f64> {
        let mut v = DVector::zeros(self.n_vars());
        for i in 0..self.k {
            v[i] = w.rows[i];
        }
        for j in 0..self.k - 1 {
            v[self.k + j] = w.cols[j];
        }
        for i in 0..self.n {
            v[self.c_index(i)] = w.margins[i];
        }
        v
    }

    fn unpack(&self, v: &DVector<f64>) -> DualPoint {
        let mut cols: Vec<f64> = (0..self.k - 1).map(|j| v[self.k + j]).collect();
        cols.push(0.0);
        DualPoint {
            rows: (0..self.k).map(|i| v[i]).collect(),
            cols,
            margins: (0..self.n).map(|i| v[self.c_index(i)]).collect(),
        }
    }

    fn arg(&self, w: &DualPoint, i: usize, j: usize) -> f64 {
        let c = if i < self.n { w.margins[i] * self.mu[j] } else { 0.0 };
        w.rows[i] + w.cols[j] + c
    }

    fn primal(&self, w: &DualPoint) -> DMatrix<f64> {
        let kf = self.k as f64;
        DMatrix::from_fn(self.k, self.k, |i, j| kf * self.arg(w, i, j).max(0.0))
    }

    fn value(&self, w: &DualPoint) -> f64 {
        let s: f64 = w.margins.iter().sum();
        if !(s > 0.0) {
            return f64::NEG_INFINITY;
        }
        let kf = self.k as f64;
        let mut quad = 0.0;
        for i in 0..self.k {
            for j in 0..self.k {
                let z = self.arg(w, i, j).max(0.0);
                quad += z * z;
            }
        }
        let lin: f64 = w.rows.iter().sum::<f64>()
            + w.cols.iter().sum::<f64>()
            + w.margins.iter().zip(self.lambda).map(|(c, l)| c * l).sum::<f64>();
        1.0 + s.ln() - 0.5 * kf * quad + lin
    }

    fn gradient(&self, w: &DualPoint, p: &DMatrix<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.n_vars());
        for i in 0..self.k {
            g[i] = 1.0 - p.row(i).sum();
        }
        for j in 0..self.k - 1 {
            g[self.k + j] = 1.0 - p.column(j).sum();
        }
        let u = 1.0 / w.margins.iter().sum::<f64>();
        for i in 0..self.n {
            let pm: f64 = (0..self.k).map(|j| p[(i, j)] * self.mu[j]).sum();
            g[self.c_index(i)] = u - pm + self.lambda[i];
        }
        g
    }

    /// Generalized negative Hessian (positive semi-definite).
    fn neg_hessian(&self, w: &DualPoint) -> DMatrix<f64> {
        let kf = self.k as f64;
        let nv = self.n_vars();
        let mut h = DMatrix::zeros(nv, nv);
        let mut idx = [0usize; 3];
        let mut coef = [0f64; 3];
        for i in 0..self.k {
            for j in 0..self.k {
                if self.arg(w, i, j) <= 0.0 {
                    continue;
                }
                let mut len = 0;
                idx[len] = i;
                coef[len] = 1.0;
                len += 1;
                if j < self.k - 1 {
                    idx[len] = self.k + j;
                    coef[len] = 1.0;
                    len += 1;
                }
                if i < self.n {
                    idx[len] = self.c_index(i);
                    coef[len] = self.mu[j];
                    len += 1;
                }
                for x in 0..len {
                    for y in 0..len {
                        h[(idx[x], idx[y])] += kf * coef[x] * coef[y];
                    }
                }
            }
        }
        let s: f64 = w.margins.iter().sum();
        let curv = 1.0 / (s * s);
        for x in 0..self.n {
            for y in 0..self.n {
                h[(self.c_index(x), self.c_index(y))] += curv;
            }
        }
        h
    }

    /// Gradient norm after zeroing components that push `c` below zero.
    fn residual(&self, v: &DVector<f64>, g: &DVector<f64>) -> f64 {
        (0..self.n_vars())
            .map(|x| {
                let at_bound = x >= 2 * self.k - 1 && v[x] <= 0.0 && g[x] < 0.0;
                if at_bound { 0.0 } else { g[x].abs() }
            })
            .fold(0.0, f64::max)
    }

    fn project(&self, v: &mut DVector<f64>) {
        for i in 0..self.n {
            let x = self.c_index(i);
            v[x] = v[x].max(0.0);
        }
    }

    fn initial(&self, delta_hat: f64) -> DualPoint {
        let kf = self.k as f64;
        let mean_mu = self.mu.iter().sum::<f64>() / kf;
        let c = 1.0 / (self.n as f64 * delta_hat.max(1e-9));
        let margins = vec![c; self.n];
        let rows = (0..self.k)
            .map(|i| 1.0 / (kf * kf) - if i < self.n { c * mean_mu } else { 0.0 })
            .collect();
        DualPoint { rows, cols: vec![0.0; self.k], margins }
    }
}

/// Solves the program; `None` if Newton fails to converge within the budget.
pub(super) fn solve(
    lambda: &[f64],
    mu: &[f64],
    delta_hat: f64,
    cfg: &PhiConfig,
    warm: Option<&DualPoint>,
) -> Option<PhiSolution> {
    let prog = Program { lambda, mu, k: mu.len(), n: lambda.len() };
    let start = warm
        .filter(|w| w.rows.len() == prog.k && w.margins.len() == prog.n && w.margins.iter().sum::<f64>() > 0.0)
        .cloned()
        .unwrap_or_else(|| prog.initial(delta_hat));
    let mut v = prog.pack(&start);
    let mut w = start;
    let max_iters = cfg.max_outer_iters.max(50);
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..max_iters {
        iterations = it;
        let p = prog.primal(&w);
        let g = prog.gradient(&w, &p);
        let r = prog.residual(&v, &g);
        if r <= RESIDUAL_TOL {
            converged = true;
            break;
        }

        // Margin multipliers sitting at (or near) zero whose gradient points
        // outward stay fixed for this step.
        let eps = r.min(1e-9);
        let free: Vec<usize> = (0..prog.n_vars())
            .filter(|&x| !(x >= 2 * prog.k - 1 && v[x] <= eps && g[x] < 0.0))
            .collect();
        let h = prog.neg_hessian(&w);
        let nf = free.len();
        let reg = 1e-3 * r + 1e-14;
        let m = DMatrix::from_fn(nf, nf, |x, y| h[(free[x], free[y])] + if x == y { reg } else { 0.0 });
        let gf = DVector::from_fn(nf, |x, _| g[free[x]]);
        let df = match m.cholesky() {
            Some(ch) => ch.solve(&gf),
            None => gf.clone(),
        };
        let mut d = DVector::zeros(prog.n_vars());
        for (x, &fx) in free.iter().enumerate() {
            d[fx] = df[x];
        }

        let f0 = prog.value(&w);
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-14 {
            let mut cand = &v + &d * alpha;
            prog.project(&mut cand);
            let wc = prog.unpack(&cand);
            let fc = prog.value(&wc);
            let ascent = g.dot(&(&cand - &v));
            let armijo = fc >= f0 + ARMIJO * ascent;
            // Near the optimum D changes by less than its rounding error, so a
            // full step that halves the residual is accepted on its own.
            let contracting = alpha == 1.0 && fc.is_finite() && {
                let pc = prog.primal(&wc);
                prog.residual(&cand, &prog.gradient(&wc, &pc)) <= 0.5 * r
            };
            if fc.is_finite() && (armijo || contracting) {
                accepted = Some((cand, wc));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((cand, wc)) => {
                v = cand;
                w = wc;
            }
            None => break,
        }
    }
    if !converged {
        return None;
    }

    let p = prog.primal(&w);
    let (primal_value, _) = barrier_objective(&p, lambda, mu);
    let gap = (primal_value - prog.value(&w)).max(0.0);
    let matrix = BistochasticMatrix::with_tolerance(p, 1e-9).ok()?;
    Some(PhiSolution { matrix, fallback: false, iterations, gap, dual: Some(w) })
}
