//! Minimum-cost assignment (Kuhn–Munkres with dual potentials).
//!
//! Rectangular problems are padded to square with zero-cost dummy rows or
//! columns. Among optimal assignments the lexicographically smallest one is
//! returned, comparing assigned columns row by row with "unassigned" ordered
//! after every real column.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Column assigned to each row; `None` when the row has no partner.
    pub row_to_col: Vec<Option<usize>>,
    pub total_cost: f64,
}

impl Assignment {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row_to_col
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| (r, c)))
    }
}

/// Solves a square problem given in row-major order. Returns, for each row,
/// its column.
fn solve_square(cost: &[f64], size: usize) -> Vec<usize> {
    if size == 0 {
        return Vec::new();
    }
    // 1-based potentials; index 0 is the virtual start column.
    let mut u = vec![0.0f64; size + 1];
    let mut v = vec![0.0f64; size + 1];
    let mut col_owner = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    for row in 1..=size {
        col_owner[0] = row;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=size {
                if used[j] {
                    continue;
                }
                let slack = cost[(i0 - 1) * size + (j - 1)] - u[i0] - v[j];
                if slack < min_slack[j] {
                    min_slack[j] = slack;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=size {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; size];
    for j in 1..=size {
        row_to_col[col_owner[j] - 1] = j - 1;
    }
    row_to_col
}

/// Optimal cost of the sub-problem on the given rows and columns (equal
/// counts).
fn sub_optimum(cost: &[f64], size: usize, rows: &[usize], cols: &[usize]) -> f64 {
    let n = rows.len();
    let mut sub = Vec::with_capacity(n * n);
    for &r in rows {
        for &c in cols {
            sub.push(cost[r * size + c]);
        }
    }
    solve_square(&sub, n)
        .iter()
        .enumerate()
        .map(|(i, &j)| sub[i * n + j])
        .sum()
}

pub fn hungarian(cost: &[Vec<f64>]) -> Result<Assignment> {
    let n_rows = cost.len();
    let n_cols = cost.first().map_or(0, Vec::len);
    for (r, row) in cost.iter().enumerate() {
        if row.len() != n_cols {
            return Err(Error::DimMismatch {
                expected: n_cols,
                found: row.len(),
            });
        }
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCost { row: r, col: c });
        }
    }
    if n_rows == 0 || n_cols == 0 {
        return Ok(Assignment {
            row_to_col: vec![None; n_rows],
            total_cost: 0.0,
        });
    }

    let size = n_rows.max(n_cols);
    let mut square = vec![0.0f64; size * size];
    for (r, row) in cost.iter().enumerate() {
        square[r * size..r * size + n_cols].copy_from_slice(row);
    }

    let optimum: f64 = solve_square(&square, size)
        .iter()
        .enumerate()
        .map(|(r, &c)| square[r * size + c])
        .sum();
    let scale = square.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tolerance = 1e-9 * scale * size as f64;

    // Fix rows in order, each to the smallest column that still admits an
    // optimal completion.
    let mut free_cols: Vec<usize> = (0..size).collect();
    let mut fixed_cost = 0.0;
    let mut row_to_col = vec![None; n_rows];
    for row in 0..n_rows {
        let rest_rows: Vec<usize> = (row + 1..size).collect();
        let first_dummy = free_cols.iter().position(|&c| c >= n_cols);
        let candidates = free_cols
            .iter()
            .enumerate()
            .filter(|&(i, &c)| c < n_cols || Some(i) == first_dummy)
            .map(|(i, _)| i)
            .collect::<Vec<_>>();
        let mut chosen = None;
        for (pos, &slot) in candidates.iter().enumerate() {
            let col = free_cols[slot];
            let here = fixed_cost + square[row * size + col];
            // The last candidate must be feasible if all others were not.
            if pos + 1 == candidates.len() {
                chosen = Some(slot);
                break;
            }
            let rest_cols: Vec<usize> = free_cols
                .iter()
                .copied()
                .filter(|&c| c != col)
                .collect();
            let completion = sub_optimum(&square, size, &rest_rows, &rest_cols);
            if here + completion <= optimum + tolerance {
                chosen = Some(slot);
                break;
            }
        }
        let slot = chosen.expect("an optimal completion always exists");
        let col = free_cols.remove(slot);
        fixed_cost += square[row * size + col];
        row_to_col[row] = (col < n_cols).then_some(col);
    }

    let total_cost = row_to_col
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| cost[r][c]))
        .sum();
    Ok(Assignment {
        row_to_col,
        total_cost,
    })
}
