//! Rectangular linear assignment: exhaustive enumeration and Hungarian.
//!
//! Costs are given row-major with `rows <= cols`; the result maps each row
//! to a distinct column.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// `columns[i]` is the column assigned to row `i`.
    pub columns: Vec<usize>,
    pub cost: f64,
}

fn check(cost: &[Vec<f64>]) -> Result<usize> {
    let cols = cost.first().map_or(0, Vec::len);
    if cost.iter().any(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch("ragged cost matrix".into()));
    }
    if cost.len() > cols {
        return Err(Error::DimensionMismatch(format!("{} rows exceed {cols} columns", cost.len())));
    }
    Ok(cols)
}

/// Minimum-cost assignment by depth-first enumeration in lexicographic
/// order; among equal costs the lexicographically smallest wins.
pub fn enumerate(cost: &[Vec<f64>]) -> Result<Assignment> {
    let cols = check(cost)?;
    let n = cost.len();
    let mut best = Assignment {
        columns: (0..n).collect(),
        cost: f64::INFINITY,
    };
    if n == 0 {
        best.cost = 0.0;
        return Ok(best);
    }
    let mut used = vec![false; cols];
    let mut current = Vec::with_capacity(n);
    search(cost, &mut used, &mut current, 0.0, &mut best);
    Ok(best)
}

fn search(cost: &[Vec<f64>], used: &mut [bool], current: &mut Vec<usize>, acc: f64, best: &mut Assignment) {
    let row = current.len();
    if row == cost.len() {
        if acc < best.cost {
            best.cost = acc;
            best.columns.clone_from(current);
        }
        return;
    }
    for c in 0..used.len() {
        if used[c] {
            continue;
        }
        used[c] = true;
        current.push(c);
        search(cost, used, current, acc + cost[row][c], best);
        current.pop();
        used[c] = false;
    }
}

/// Hungarian algorithm with row/column potentials, `O(n^2 m)`.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Assignment> {
    let m = check(cost)?;
    let n = cost.len();
    if n == 0 {
        return Ok(Assignment { columns: vec![], cost: 0.0 });
    }
    // 1-based arrays; column 0 is a virtual sink.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
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
    let mut columns = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            columns[owner[j] - 1] = j - 1;
        }
    }
    let total = columns.iter().enumerate().map(|(i, &c)| cost[i][c]).sum();
    Ok(Assignment { columns, cost: total })
}
