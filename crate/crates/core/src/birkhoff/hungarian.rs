use nalgebra::DMatrix;

use super::{BirkhoffError, CostMatrix, Permutation};

/// Minimum-cost perfect matching of rows to columns.
///
/// Shortest augmenting paths with row/column potentials, `O(K^3)`. Infinite
/// entries are replaced by a finite sentinel that dominates every matching
/// made of finite edges; a result that still touches one means no finite
/// perfect matching exists.
pub fn hungarian(cost: &CostMatrix) -> Result<Permutation, BirkhoffError> {
    let k = cost.size();
    if k == 0 {
        return Ok(Permutation::identity(0));
    }
    let finite_max = cost
        .matrix()
        .iter()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let sentinel = 2.0 * k as f64 * finite_max + 1.0;
    let a = cost.matrix().map(|v| if v.is_finite() { v } else { sentinel });
    let row_of_col = assign(&a);

    let mut mapping = vec![0; k];
    for (j, &i) in row_of_col.iter().enumerate() {
        mapping[i] = j;
    }
    if (0..k).any(|i| !cost.get(i, mapping[i]).is_finite()) {
        return Err(BirkhoffError::NoPerfectMatching);
    }
    Ok(Permutation::new(mapping).expect("assignment is a bijection"))
}

/// Returns, for each column, the row assigned to it.
fn assign(a: &DMatrix<f64>) -> Vec<usize> {
    let n = a.nrows();
    // 1-based arrays with slot 0 as the virtual source column
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| p[j] - 1).collect()
}
