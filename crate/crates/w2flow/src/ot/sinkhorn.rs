//! Log-domain Sinkhorn iterations for entropic optimal transport.

use ndarray::{Array1, Array2};

use crate::{Result, W2Error};

pub struct SinkhornSolution {
    pub coupling: Array2<f64>,
    /// Dual-feasible potentials: the raw entropic potentials shifted by
    /// the regularization slack so that `phi_i + psi_j <= cost_ij`.
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    /// Max violation `max_ij (f_i + g_j - cost_ij)` of the raw entropic
    /// potentials; shrinks linearly with `entropic_eps`.
    pub feasibility_slack: f64,
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.collect();
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Entropically regularized transport between weighted supports.
///
/// Runs alternating log-domain potential updates until the column-marginal
/// violation drops below `tol` or `max_iters` is reached; non-convergence
/// is flagged, not an error.
pub fn solve_sinkhorn(
    cost: &Array2<f64>,
    a: &[f64],
    b: &[f64],
    entropic_eps: f64,
    max_iters: usize,
    tol: f64,
) -> Result<SinkhornSolution> {
    if entropic_eps <= 0.0 {
        return Err(W2Error::OutOfRange("entropic_eps must be positive".into()));
    }
    let (n, m) = (a.len(), b.len());
    let log_a: Vec<f64> = a.iter().map(|&x| x.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|&x| x.ln()).collect();

    let mut f = Array1::<f64>::zeros(n);
    let mut g = Array1::<f64>::zeros(m);
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..max_iters {
        iterations = it + 1;
        for i in 0..n {
            let lse = log_sum_exp((0..m).map(|j| (g[j] - cost[[i, j]]) / entropic_eps + log_b[j]));
            f[i] = -entropic_eps * lse;
        }
        for j in 0..m {
            let lse = log_sum_exp((0..n).map(|i| (f[i] - cost[[i, j]]) / entropic_eps + log_a[i]));
            g[j] = -entropic_eps * lse;
        }
        // after a g-update the column marginals are exact; check rows
        let mut violation = 0.0;
        for i in 0..n {
            let row: f64 = (0..m)
                .map(|j| ((f[i] + g[j] - cost[[i, j]]) / entropic_eps + log_a[i] + log_b[j]).exp())
                .sum();
            violation += (row - a[i]).abs();
        }
        if violation < tol {
            converged = true;
            break;
        }
    }

    let coupling = Array2::from_shape_fn((n, m), |(i, j)| {
        ((f[i] + g[j] - cost[[i, j]]) / entropic_eps + log_a[i] + log_b[j]).exp()
    });
    let transport_cost = coupling
        .indexed_iter()
        .map(|((i, j), &gamma)| gamma * cost[[i, j]])
        .sum();

    let slack = cost
        .indexed_iter()
        .map(|((i, j), &c)| f[i] + g[j] - c)
        .fold(0.0_f64, f64::max);
    let phi: Vec<f64> = f.iter().map(|&v| v - slack).collect();

    Ok(SinkhornSolution {
        coupling,
        phi,
        psi: g.to_vec(),
        feasibility_slack: slack,
        cost: transport_cost,
        converged,
        iterations,
    })
}
