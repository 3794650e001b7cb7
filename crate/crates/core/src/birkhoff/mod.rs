//! Order-stable Birkhoff–von Neumann decomposition.
//!
//! A random cost matrix `C` induces a total order on permutations. The
//! decomposition repeatedly extracts the cheapest permutation supported by
//! the residual matrix, which makes the resulting sampler [`psi_sample`]
//! vary continuously with its input.

mod hungarian;

use nalgebra::DMatrix;
use rand::Rng;
use thiserror::Error;

use crate::mapping::BistochasticMatrix;

pub use hungarian::hungarian;

/// Entries at or below this value are treated as outside the support.
pub const SUPPORT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BirkhoffError {
    #[error("no perfect matching uses only finite-cost edges")]
    NoPerfectMatching,
    #[error("not a permutation of 0..{0}")]
    InvalidPermutation(usize),
    #[error("cost matrix must be square with no NaN or -inf entries")]
    InvalidCost,
    #[error("size mismatch: matrix is {matrix}x{matrix}, costs are {cost}x{cost}")]
    SizeMismatch { matrix: usize, cost: usize },
}

/// A bijection from rows (queues) to columns (servers).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self, BirkhoffError> {
        let k = mapping.len();
        let mut seen = vec![false; k];
        for &j in &mapping {
            if j >= k || seen[j] {
                return Err(BirkhoffError::InvalidPermutation(k));
            }
            seen[j] = true;
        }
        Ok(Self { mapping })
    }

    pub fn identity(k: usize) -> Self {
        Self { mapping: (0..k).collect() }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    /// Column assigned to row `i`.
    pub fn apply(&self, i: usize) -> usize {
        self.mapping[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.mapping
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let k = self.len();
        DMatrix::from_fn(k, k, |i, j| if self.mapping[i] == j { 1.0 } else { 0.0 })
    }
}

/// Square matrix of extended-real costs (`+inf` allowed).
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: DMatrix<f64>,
}

impl CostMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self, BirkhoffError> {
        if entries.nrows() != entries.ncols() || entries.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(BirkhoffError::InvalidCost);
        }
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, BirkhoffError> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(BirkhoffError::InvalidCost);
        }
        Self::new(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
    }

    /// I.i.d. uniform entries on `[0, 1)`, drawn row by row.
    pub fn random<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Self {
        let mut entries = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                entries[(i, j)] = rng.gen::<f64>();
            }
        }
        Self { entries }
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

    /// `<C, P>` for a permutation matrix `P`.
    pub fn cost(&self, p: &Permutation) -> f64 {
        (0..p.len()).map(|i| self.entries[(i, p.apply(i))]).sum()
    }

    /// Copy with `+inf` outside the support of `p`.
    fn masked(&self, p: &DMatrix<f64>) -> Self {
        Self {
            entries: self.entries.zip_map(p, |c, v| if v > SUPPORT_TOL { c } else { f64::INFINITY }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BvnTerm {
    pub weight: f64,
    pub permutation: Permutation,
}

/// Weighted permutations in extraction order, with running weight totals.
#[derive(Debug, Clone, PartialEq)]
pub struct BvnDecomposition {
    terms: Vec<BvnTerm>,
    cumulative: Vec<f64>,
}

impl BvnDecomposition {
    /// Builds a decomposition from explicit terms, normalizing the weights.
    pub fn from_terms(terms: Vec<(f64, Permutation)>) -> Self {
        let total: f64 = terms.iter().map(|t| t.0).sum();
        let terms: Vec<BvnTerm> = terms
            .into_iter()
            .map(|(w, permutation)| BvnTerm { weight: w / total, permutation })
            .collect();
        let mut acc = 0.0;
        let cumulative = terms
            .iter()
            .map(|t| {
                acc += t.weight;
                acc
            })
            .collect();
        Self { terms, cumulative }
    }

    pub fn terms(&self) -> &[BvnTerm] {
        &self.terms
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `sum_j z_j P_j`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let k = self.terms.first().map_or(0, |t| t.permutation.len());
        let mut out = DMatrix::zeros(k, k);
        for t in &self.terms {
            for i in 0..k {
                out[(i, t.permutation.apply(i))] += t.weight;
            }
        }
        out
    }
}

/// Greedy decomposition of `p` following the order induced by `cost`.
pub fn ordered_birkhoff(p: &BistochasticMatrix, cost: &CostMatrix) -> Result<BvnDecomposition, BirkhoffError> {
    let k = p.size();
    if cost.size() != k {
        return Err(BirkhoffError::SizeMismatch { matrix: k, cost: cost.size() });
    }
    let mut residual = p.matrix().map(|v| if v > SUPPORT_TOL { v } else { 0.0 });
    let mut terms = Vec::new();
    while terms.len() < k * k && residual.amax() > SUPPORT_TOL {
        let perm = match hungarian(&cost.masked(&residual)) {
            Ok(perm) => perm,
            Err(_) if residual.amax() <= 1e-6 => break,
            Err(e) => return Err(e),
        };
        let z = (0..k).map(|i| residual[(i, perm.apply(i))]).fold(f64::INFINITY, f64::min);
        for i in 0..k {
            let v = &mut residual[(i, perm.apply(i))];
            *v -= z;
            if *v <= SUPPORT_TOL {
                *v = 0.0;
            }
        }
        terms.push((z, perm));
    }
    Ok(BvnDecomposition::from_terms(terms))
}

/// The term selected by `omega`: the first whose running total exceeds it.
/// Values of `omega` at or beyond the final total select the last term.
pub fn psi_sample(dec: &BvnDecomposition, omega: f64) -> &Permutation {
    let idx = dec.cumulative.partition_point(|&c| c <= omega);
    &dec.terms[idx.min(dec.terms.len() - 1)].permutation
}

/// Lebesgue measure of `{omega in [0, 1) : psi(dec1)(omega) != psi(dec2)(omega)}`.
pub fn disagreement_volume(dec1: &BvnDecomposition, dec2: &BvnDecomposition) -> f64 {
    let mut cuts: Vec<f64> = std::iter::once(0.0)
        .chain(dec1.cumulative.iter().copied())
        .chain(dec2.cumulative.iter().copied())
        .map(|c| c.clamp(0.0, 1.0))
        .chain(std::iter::once(1.0))
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.windows(2)
        .filter(|w| psi_sample(dec1, w[0]) != psi_sample(dec2, w[0]))
        .map(|w| w[1] - w[0])
        .sum()
}
