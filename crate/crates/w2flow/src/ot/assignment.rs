//! Exact linear assignment on dense square cost matrices.
//!
//! Shortest augmenting path (Jonker–Volgenant style) with dual variable
//! maintenance, O(n^3). Ties in the augmenting search break toward the
//! lowest column index.

use ndarray::Array2;

pub struct LapResult {
    /// `row_to_col[i]` is the column matched to row `i`.
    pub row_to_col: Vec<usize>,
    pub row_duals: Vec<f64>,
    pub col_duals: Vec<f64>,
    pub cost: f64,
}

pub fn solve_lap(cost: &Array2<f64>) -> LapResult {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment requires a square cost matrix");

    let mut u = vec![0.0_f64; n];
    let mut v = vec![0.0_f64; n + 1]; // column n is the virtual start column
    let mut col_row = vec![usize::MAX; n + 1];

    for i in 0..n {
        col_row[n] = i;
        let mut j0 = n;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut way = vec![n; n + 1];
        let mut used = vec![false; n + 1];

        // grow the alternating tree until a free column is reached
        loop {
            used[j0] = true;
            let i0 = col_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = n;
            for j in 0..n {
                if !used[j] {
                    let cur = cost[[i0, j]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == usize::MAX {
                break;
            }
        }

        // augment along the recorded path
        loop {
            let j1 = way[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
            if j0 == n {
                break;
            }
        }
    }

    let mut row_to_col = vec![usize::MAX; n];
    for j in 0..n {
        row_to_col[col_row[j]] = j;
    }
    let total = (0..n).map(|i| cost[[i, row_to_col[i]]]).sum();
    LapResult {
        row_to_col,
        row_duals: u,
        col_duals: v[..n].to_vec(),
        cost: total,
    }
}
