//! Forward Euler scheme on the Wasserstein gradient flow, its
//! piecewise-constant measure flow, and the on-geodesic / convergence
//! diagnostics.
//!
//! Every step re-solves transport from the current snapshot. The scheme
//! never reuses the initial matching in the production path; the
//! permutation-reuse shortcut exists only behind `fast_path` for
//! benchmarking and is excluded from correctness tests.

use ndarray::Array2;
use serde::Serialize;
use std::path::Path;

use crate::geodesics::{flow_point, FlowCurve};
use crate::measures::ParticleCloud;
use crate::ot::{self, Matching};
use crate::{Result, W2Error};

/// Which solver backs the per-step potential gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backend {
    Exact,
    Sinkhorn {
        eps_entropy: f64,
        max_iters: usize,
        tol: f64,
    },
}

impl Backend {
    pub fn sinkhorn(eps_entropy: f64) -> Self {
        Backend::Sinkhorn {
            eps_entropy,
            max_iters: 10_000,
            tol: 1e-9,
        }
    }
}

/// Snapshots `mu_{0,eps}, ..., mu_{N,eps}` of one Euler run.
#[derive(Debug, Clone)]
pub struct EulerTrajectory {
    pub eps: f64,
    pub t_eps: f64,
    pub snapshots: Vec<ParticleCloud>,
}

impl EulerTrajectory {
    pub fn steps(&self) -> usize {
        self.snapshots.len() - 1
    }
}

/// Unique `t_eps > 0` with `eps = 1 - e^{-t_eps}`, i.e. `-ln(1 - eps)`.
pub fn t_eps(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(W2Error::OutOfRange(format!("eps = {eps} outside (0, 1)")));
    }
    Ok(-(1.0 - eps).ln())
}

/// One Euler step: each point moves to `x_i - eps * grad phi(x_i)`,
/// where the gradient comes from a fresh solve against `mud`.
pub fn euler_step(
    cloud: &ParticleCloud,
    mud: &ParticleCloud,
    eps: f64,
    backend: Backend,
) -> Result<ParticleCloud> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(W2Error::OutOfRange(format!("eps = {eps} outside (0, 1)")));
    }
    let grad = step_gradient(cloud, mud, backend)?;
    apply_step(cloud, &grad, eps)
}

/// Potential gradient at each point of `cloud` toward `mud`.
pub fn step_gradient(
    cloud: &ParticleCloud,
    mud: &ParticleCloud,
    backend: Backend,
) -> Result<Array2<f64>> {
    let matching = match backend {
        Backend::Exact => {
            if cloud.len() == mud.len() && cloud.is_uniform() && mud.is_uniform() {
                let (sigma, _) = ot::solve_assignment(cloud, mud)?;
                Matching::Permutation(sigma)
            } else {
                let (plan, _, _) = ot::solve_exact(cloud, mud, 2)?;
                Matching::Plan(plan)
            }
        }
        Backend::Sinkhorn {
            eps_entropy,
            max_iters,
            tol,
        } => {
            let sol = ot::sinkhorn(cloud, mud, eps_entropy, max_iters, tol)?;
            Matching::Plan(crate::ot::TransportPlan {
                coupling: sol.coupling,
            })
        }
    };
    ot::potential_gradient(cloud, &matching, mud)
}

fn apply_step(cloud: &ParticleCloud, grad: &Array2<f64>, eps: f64) -> Result<ParticleCloud> {
    let mut pts = cloud.points().clone();
    pts.scaled_add(-eps, grad);
    ParticleCloud::new(pts, cloud.weights().clone())
}

/// Runs `n_steps` Euler steps from `mu0`, re-solving transport each step.
pub fn run_euler(
    mu0: &ParticleCloud,
    mud: &ParticleCloud,
    eps: f64,
    n_steps: usize,
    backend: Backend,
) -> Result<EulerTrajectory> {
    let t = t_eps(eps)?;
    let mut snapshots = Vec::with_capacity(n_steps + 1);
    snapshots.push(mu0.clone());
    for _ in 0..n_steps {
        let next = euler_step(snapshots.last().unwrap(), mud, eps, backend)?;
        snapshots.push(next);
    }
    Ok(EulerTrajectory {
        eps,
        t_eps: t,
        snapshots,
    })
}

/// Benchmarking-only variant that reuses the initial matching: step `n`
/// is the affine interpolation `(1 - eps)^n`-weighted along the fixed
/// assignment. Not used by any correctness test.
pub fn run_euler_fast_path(
    curve: &FlowCurve,
    eps: f64,
    n_steps: usize,
) -> Result<EulerTrajectory> {
    let t = t_eps(eps)?;
    let mut snapshots = Vec::with_capacity(n_steps + 1);
    snapshots.push(curve.source().clone());
    for n in 1..=n_steps {
        let s = 1.0 - (1.0 - eps).powi(n as i32);
        snapshots.push(crate::geodesics::geodesic_point(curve, s)?);
    }
    Ok(EulerTrajectory {
        eps,
        t_eps: t,
        snapshots,
    })
}

/// Piecewise-constant flow: `snapshot[n]` on `[n eps, (n+1) eps)`.
pub fn piecewise_flow_at(traj: &EulerTrajectory, t: f64) -> Result<&ParticleCloud> {
    if t < 0.0 {
        return Err(W2Error::OutOfRange(format!("t = {t} < 0")));
    }
    let n = (t / traj.eps).floor() as usize;
    traj.snapshots
        .get(n)
        .ok_or_else(|| W2Error::OutOfRange(format!("t = {t} beyond trajectory horizon")))
}

/// `W2(snapshot[n], mu*_{n t_eps})` for every snapshot, by fresh solves.
pub fn on_geodesic_residuals(traj: &EulerTrajectory, curve: &FlowCurve) -> Result<Vec<f64>> {
    if traj.snapshots[0] != *curve.source() {
        return Err(W2Error::InvalidCloud(
            "trajectory does not start at the curve's source".into(),
        ));
    }
    traj.snapshots
        .iter()
        .enumerate()
        .map(|(n, snap)| {
            let reference = flow_point(curve, n as f64 * traj.t_eps)?;
            ot::w2_distance(snap, &reference)
        })
        .collect()
}

/// `| W2(snapshot[n-1], snapshot[n]) - eps * W2(snapshot[n-1], mu_d) |`.
pub fn step_distance_residual(
    traj: &EulerTrajectory,
    mud: &ParticleCloud,
    n: usize,
) -> Result<f64> {
    if n == 0 || n >= traj.snapshots.len() {
        return Err(W2Error::OutOfRange(format!("step index {n}")));
    }
    let step = ot::w2_distance(&traj.snapshots[n - 1], &traj.snapshots[n])?;
    let to_target = ot::w2_distance(&traj.snapshots[n - 1], mud)?;
    Ok((step - traj.eps * to_target).abs())
}

/// Deviation bound of the piecewise-constant flow from the gradient flow:
/// `(e^{t (t_eps / eps - 1) + t_eps} - 1) * W2(mu_0, mu_d)`.
pub fn convergence_bound(t: f64, eps: f64, w2_0d: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(W2Error::OutOfRange(format!("t = {t} < 0")));
    }
    let te = t_eps(eps)?;
    Ok(((t * (te / eps - 1.0) + te).exp() - 1.0) * w2_0d)
}

/// Max over the grid of `W2(piecewise_flow_at(t), mu*_t)`.
pub fn sup_deviation(traj: &EulerTrajectory, curve: &FlowCurve, t_grid: &[f64]) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for &t in t_grid {
        let snap = piecewise_flow_at(traj, t)?;
        let reference = flow_point(curve, t)?;
        sup = sup.max(ot::w2_distance(snap, &reference)?);
    }
    Ok(sup)
}

/// Manifest written next to exported trajectory snapshots.
#[derive(Debug, Serialize)]
pub struct TrajectoryManifest {
    pub eps: f64,
    pub t_eps: f64,
    pub n_steps: usize,
    pub seed: u64,
}

/// Exports one CSV per snapshot plus a JSON manifest.
pub fn export_trajectory(traj: &EulerTrajectory, seed: u64, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (n, snap) in traj.snapshots.iter().enumerate() {
        snap.write_csv(&dir.join(format!("snapshot_{n:04}.csv")))?;
    }
    let manifest = TrajectoryManifest {
        eps: traj.eps,
        t_eps: traj.t_eps,
        n_steps: traj.steps(),
        seed,
    };
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| W2Error::Config(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), body)?;
    Ok(())
}
