//! Minimum-cost assignment (Hungarian method with row/column potentials).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `columns[r]` is the column assigned to row `r`.
    pub columns: Vec<usize>,
    pub total: f64,
}

/// Assigns each of `rows` rows to a distinct column of the row-major
/// `rows x cols` matrix `cost` so the summed cost is minimal. Requires
/// `rows <= cols`.
pub fn hungarian(cost: &[f64], rows: usize, cols: usize) -> Result<Assignment> {
    if cost.len() != rows * cols {
        return Err(Error::usage(format!("cost matrix holds {} values, expected {rows}x{cols}", cost.len())));
    }
    if rows > cols {
        return Err(Error::usage(format!("cannot assign {rows} rows to {cols} columns")));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::usage("cost matrix has non-finite entries"));
    }
    if rows == 0 {
        return Ok(Assignment {
            columns: Vec::new(),
            total: 0.0,
        });
    }
    let a = |i: usize, j: usize| cost[(i - 1) * cols + (j - 1)];
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    // owner[j]: row matched to column j (1-based, 0 = free)
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = a(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut columns = vec![0; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            columns[owner[j] - 1] = j - 1;
        }
    }
    let total = columns.iter().enumerate().map(|(r, &c)| cost[r * cols + c]).sum();
    Ok(Assignment { columns, total })
}

/// Minimum total cost of a square `n x n` assignment by enumerating every
/// permutation (Heap's algorithm). Reference solver; `n!` time.
pub fn exhaustive_min_cost(cost: &[f64], n: usize) -> Result<f64> {
    if cost.len() != n * n {
        return Err(Error::usage(format!("cost matrix holds {} values, expected {n}x{n}", cost.len())));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let total = |p: &[usize]| p.iter().enumerate().map(|(r, &c)| cost[r * n + c]).sum::<f64>();
    let mut best = total(&perm);
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(total(&perm));
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best)
}
