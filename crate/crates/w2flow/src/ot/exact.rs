//! Exact optimal transport for general nonnegative weights, via
//! successive shortest paths on the bipartite flow network.
//!
//! Each augmentation saturates a supply or demand node, so at most
//! `n + m` Dijkstra rounds run. Node potentials give dual-feasible
//! Kantorovich potentials with complementary slackness on the support.

use ndarray::Array2;

use crate::{Result, W2Error};

const MASS_TOL: f64 = 1e-9;
const FLOW_EPS: f64 = 1e-13;

pub struct ExactSolution {
    pub coupling: Array2<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub primal: f64,
}

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

/// Solves `min sum_ij gamma_ij cost_ij` over couplings with marginals
/// `a` and `b`. Costs must be nonnegative.
pub fn solve_transport(cost: &Array2<f64>, a: &[f64], b: &[f64]) -> Result<ExactSolution> {
    let n = a.len();
    let m = b.len();
    assert_eq!(cost.nrows(), n);
    assert_eq!(cost.ncols(), m);

    let mass_a: f64 = a.iter().sum();
    let mass_b: f64 = b.iter().sum();
    if (mass_a - mass_b).abs() > MASS_TOL {
        return Err(W2Error::MassMismatch(mass_a - mass_b));
    }

    // nodes: 0 = source, 1..=n rows, n+1..=n+m cols, n+m+1 = sink
    let v_count = n + m + 2;
    let (src, snk) = (0, n + m + 1);
    let mut edges: Vec<Edge> = Vec::with_capacity(2 * (n + m + n * m));
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); v_count];
    let push = |edges: &mut Vec<Edge>, adj: &mut Vec<Vec<usize>>, u: usize, v: usize, cap: f64, c: f64| {
        adj[u].push(edges.len());
        edges.push(Edge { to: v, cap, cost: c });
        adj[v].push(edges.len());
        edges.push(Edge { to: u, cap: 0.0, cost: -c });
    };
    for (i, &ai) in a.iter().enumerate() {
        push(&mut edges, &mut adj, src, 1 + i, ai, 0.0);
    }
    for i in 0..n {
        for j in 0..m {
            push(&mut edges, &mut adj, 1 + i, 1 + n + j, f64::INFINITY, cost[[i, j]]);
        }
    }
    for (j, &bj) in b.iter().enumerate() {
        push(&mut edges, &mut adj, 1 + n + j, snk, bj, 0.0);
    }

    let mut pot = vec![0.0_f64; v_count];
    loop {
        // Dijkstra on reduced costs
        let mut dist = vec![f64::INFINITY; v_count];
        let mut prev_edge = vec![usize::MAX; v_count];
        let mut done = vec![false; v_count];
        dist[src] = 0.0;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..v_count {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            for &ei in &adj[u] {
                let e = &edges[ei];
                if e.cap > FLOW_EPS {
                    let nd = dist[u] + e.cost + pot[u] - pot[e.to];
                    if nd < dist[e.to] - 1e-15 {
                        dist[e.to] = nd;
                        prev_edge[e.to] = ei;
                    }
                }
            }
        }
        if !dist[snk].is_finite() {
            break;
        }
        let d_snk = dist[snk];
        for v in 0..v_count {
            pot[v] += dist[v].min(d_snk);
        }

        // bottleneck along the path
        let mut bottleneck = f64::INFINITY;
        let mut v = snk;
        while v != src {
            let ei = prev_edge[v];
            bottleneck = bottleneck.min(edges[ei].cap);
            v = edges[ei ^ 1].to;
        }
        let mut v = snk;
        while v != src {
            let ei = prev_edge[v];
            edges[ei].cap -= bottleneck;
            edges[ei ^ 1].cap += bottleneck;
            v = edges[ei ^ 1].to;
        }
    }

    // flows on i->j arcs are the reverse-arc capacities
    let mut coupling = Array2::zeros((n, m));
    let mut primal = 0.0;
    for i in 0..n {
        for j in 0..m {
            // i->j edge index: after 2n source edges, in row-major order
            let ei = 2 * n + 2 * (i * m + j);
            let flow = edges[ei ^ 1].cap;
            if flow > 0.0 {
                coupling[[i, j]] = flow;
                primal += flow * cost[[i, j]];
            }
        }
    }

    // reduced cost c_ij + p_i - p_j >= 0 for every forward arc, so
    // phi_i = -p_i, psi_j = p_j is dual feasible, tight on the support.
    let mut phi: Vec<f64> = (0..n).map(|i| -pot[1 + i]).collect();
    let mut psi: Vec<f64> = (0..m).map(|j| pot[1 + n + j]).collect();
    // gauge: phi[0] = 0
    let shift = phi[0];
    for p in phi.iter_mut() {
        *p -= shift;
    }
    for p in psi.iter_mut() {
        *p += shift;
    }

    Ok(ExactSolution {
        coupling,
        phi,
        psi,
        primal,
    })
}
