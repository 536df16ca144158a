//! Acceptance suite: one test per criterion, each printing a single
//! pass/fail line (visible under `--nocapture`). Every tolerance and
//! budget is asserted, so plain `cargo test` enforces the suite too.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

use w2flow::euler::{self, Backend};
use w2flow::geodesics::{self, build_flow, flow_point, FlowCurve};
use w2flow::measures::{sample_gaussian_ring, ParticleCloud};
use w2flow::neural::{Activation, Mlp};
use w2flow::ot;
use w2flow::trainer;

fn report(criterion: usize, name: &str, pass: bool) {
    println!(
        "criterion {criterion:2} [{}] {name}",
        if pass { "pass" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} ({name}) failed");
}

fn random_pair(n: usize, seed: u64) -> (ParticleCloud, ParticleCloud) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = ParticleCloud::uniform(Array2::from_shape_fn((n, 2), |_| rng.gen::<f64>() * 2.0))
        .unwrap();
    let b = ParticleCloud::uniform(Array2::from_shape_fn((n, 2), |_| {
        rng.gen::<f64>() * 2.0 + 3.0
    }))
    .unwrap();
    (a, b)
}

fn instances() -> Vec<(ParticleCloud, ParticleCloud, FlowCurve)> {
    (0..10)
        .map(|seed| {
            let (a, b) = random_pair(50, seed);
            let curve = build_flow(&a, &b).unwrap();
            (a, b, curve)
        })
        .collect()
}

#[test]
fn criterion_01_exponential_decay() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for (_, _, curve) in instances() {
        let tol = 1e-9 * (1.0 + curve.w2_0d());
        for t in [0.0, 0.1, 0.5, 1.0, 2.0, 5.0] {
            let r = geodesics::decay_residual(&curve, t).unwrap();
            worst = worst.max(r);
            pass &= r <= tol;
        }
    }
    pass &= start.elapsed().as_secs_f64() < 10.0;
    report(1, &format!("exponential decay, worst residual {worst:.2e}"), pass);
}

#[test]
fn criterion_02_constant_speed() {
    let mut worst: f64 = 0.0;
    let mut pass = true;
    let grid = [(0.0, 1.0), (0.0, 0.3), (0.25, 0.75), (0.3, 0.9), (0.5, 0.6), (0.1, 0.2)];
    for (_, _, curve) in instances() {
        let tol = 1e-9 * (1.0 + curve.w2_0d());
        for (s1, s2) in grid {
            let r = geodesics::geodesic_speed_residual(&curve, s1, s2).unwrap();
            worst = worst.max(r);
            pass &= r <= tol;
        }
    }
    report(2, &format!("constant-speed geodesic, worst residual {worst:.2e}"), pass);
}

/// Shared by criteria 3 and 4: trajectories for every instance and eps.
fn euler_runs() -> Vec<(ParticleCloud, FlowCurve, f64, euler::EulerTrajectory)> {
    let mut runs = Vec::new();
    for (a, b, curve) in instances() {
        for eps in [0.5_f64, 0.1, 0.01] {
            let n_steps = ((2.0 / eps).ceil() as usize).min(50);
            let traj = euler::run_euler(&a, &b, eps, n_steps, Backend::Exact).unwrap();
            runs.push((b.clone(), curve.clone(), eps, traj));
        }
    }
    runs
}

#[test]
fn criterion_03_steps_stay_on_geodesic() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for (_, curve, _, traj) in euler_runs() {
        let tol = 1e-9 * (1.0 + curve.w2_0d());
        for r in euler::on_geodesic_residuals(&traj, &curve).unwrap() {
            worst = worst.max(r);
            pass &= r <= tol;
        }
    }
    pass &= start.elapsed().as_secs_f64() < 60.0;
    report(3, &format!("Euler steps on geodesic, worst residual {worst:.2e}"), pass);
}

#[test]
fn criterion_04_step_distance_identity() {
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for (mud, _, _, traj) in euler_runs() {
        for n in 1..=traj.steps() {
            let r = euler::step_distance_residual(&traj, &mud, n).unwrap();
            worst = worst.max(r);
            pass &= r <= 1e-9;
        }
    }
    report(4, &format!("step-distance identity, worst residual {worst:.2e}"), pass);
}

#[test]
fn criterion_05_deviation_bound() {
    let grid: Vec<f64> = (0..40).map(|i| 2.0 * i as f64 / 39.0).collect();
    let mut pass = true;
    let mut worst_margin = f64::NEG_INFINITY;
    // three instances keep the eps = 0.01 horizon (200 steps) affordable
    for seed in 0..3 {
        let (a, b) = random_pair(50, seed);
        let curve = build_flow(&a, &b).unwrap();
        for eps in [0.5_f64, 0.1, 0.01] {
            let n_steps = (2.0 / eps).floor() as usize + 1;
            let traj = euler::run_euler(&a, &b, eps, n_steps, Backend::Exact).unwrap();
            for &t in &grid {
                let dev = ot::w2_distance(
                    euler::piecewise_flow_at(&traj, t).unwrap(),
                    &flow_point(&curve, t).unwrap(),
                )
                .unwrap();
                let bound = euler::convergence_bound(t, eps, curve.w2_0d()).unwrap();
                worst_margin = worst_margin.max(dev - bound);
                pass &= dev <= bound + 1e-9 * (1.0 + curve.w2_0d());
            }
            if eps == 0.01 {
                let sup = euler::sup_deviation(&traj, &curve, &grid).unwrap();
                pass &= sup <= 0.05 * curve.w2_0d();
            }
        }
    }
    report(
        5,
        &format!("piecewise flow within bound, worst margin {worst_margin:.2e}"),
        pass,
    );
}

#[test]
fn criterion_06_energy_identity() {
    let mut worst: f64 = 0.0;
    let mut pass = true;
    let grid = [(0.0, 0.5), (0.0, 2.0), (0.2, 1.0), (0.5, 1.5), (1.0, 3.0), (2.0, 5.0)];
    for (_, _, curve) in instances() {
        for (s, t) in grid {
            let r = geodesics::energy_identity_residual(&curve, s, t).unwrap();
            worst = worst.max(r);
            pass &= r <= 1e-9;
        }
    }
    report(6, &format!("energy identity, worst residual {worst:.2e}"), pass);
}

#[test]
fn criterion_07_maximal_slope() {
    let mut worst: f64 = 0.0;
    let mut pass = true;
    let h = 1e-5;
    for (_, b, curve) in instances() {
        for t in [0.2, 1.0] {
            let j_plus = geodesics::objective(&flow_point(&curve, t + h).unwrap(), &b).unwrap();
            let j_minus = geodesics::objective(&flow_point(&curve, t - h).unwrap(), &b).unwrap();
            let dj_dt = (j_plus - j_minus) / (2.0 * h);
            let md = ot::w2_distance(
                &flow_point(&curve, t + h).unwrap(),
                &flow_point(&curve, t - h).unwrap(),
            )
            .unwrap()
                / (2.0 * h);
            let slope = geodesics::local_slope(&flow_point(&curve, t).unwrap(), &b).unwrap();
            // steepest descent: dJ/dt = -|dJ| |mu'|
            let rel = (dj_dt + slope * md).abs() / dj_dt.abs();
            worst = worst.max(rel);
            pass &= rel <= 1e-3;
        }
    }
    report(7, &format!("maximal-slope identity, worst relative error {worst:.2e}"), pass);
}

#[test]
fn criterion_08_w2gan_equivalence() {
    let start = Instant::now();
    let mut pass = true;
    let mut worst_k1: f64 = 0.0;
    let mut floor_k2 = f64::INFINITY;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = trainer::sample_latent(2, 8, &mut rng);
        let g0 = Mlp::new(&[2, 8, 2], Activation::Tanh, seed + 100, 1.0).unwrap();
        let phi = Mlp::new(&[2, 8, 1], Activation::Tanh, seed + 200, 1.0).unwrap();
        for delta_t in [0.1, 0.5] {
            let r1 = trainer::equivalence_residual(&g0, &phi, &z, 0.1, delta_t).unwrap();
            let r2 = trainer::equivalence_residual_k(&g0, &phi, &z, 0.1, delta_t, 2).unwrap();
            worst_k1 = worst_k1.max(r1);
            floor_k2 = floor_k2.min(r2);
            pass &= r1 <= 1e-8 && r2 > 1e-6;
        }
    }
    pass &= start.elapsed().as_secs_f64() < 10.0;
    report(
        8,
        &format!("learning-rate equivalence, K=1 max {worst_k1:.2e}, K=2 min {floor_k2:.2e}"),
        pass,
    );
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn criterion_09_solver_oracles() {
    let mut pass = true;

    // exhaustive permutation oracle, 200 random instances with n <= 7
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..200 {
        let n = rng.gen_range(1..=7);
        let a = ParticleCloud::uniform(Array2::from_shape_fn((n, 2), |_| rng.gen::<f64>()))
            .unwrap();
        let b = ParticleCloud::uniform(Array2::from_shape_fn((n, 2), |_| rng.gen::<f64>()))
            .unwrap();
        let (_, w2) = ot::solve_assignment(&a, &b).unwrap();
        let cost = ot::cost_matrix(&a, &b, 2, false).unwrap();
        let brute = permutations(n)
            .iter()
            .map(|p| (0..n).map(|i| cost.entries[[i, p[i]]]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        pass &= (w2 - (brute / n as f64).sqrt()).abs() <= 1e-9;
    }

    // 1-D: optimal matching is the sorted order
    for _ in 0..50 {
        let n = rng.gen_range(2..=20);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 5.0).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 5.0).collect();
        let a = ParticleCloud::uniform_1d(&xs).unwrap();
        let b = ParticleCloud::uniform_1d(&ys).unwrap();
        let (_, w2) = ot::solve_assignment(&a, &b).unwrap();
        let mut sx = xs.clone();
        let mut sy = ys.clone();
        sx.sort_by(|p, q| p.partial_cmp(q).unwrap());
        sy.sort_by(|p, q| p.partial_cmp(q).unwrap());
        let sorted_w2 = (sx
            .iter()
            .zip(&sy)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / n as f64)
            .sqrt();
        pass &= (w2 - sorted_w2).abs() <= 1e-12;
    }

    // general weights: duality gap at most 1e-8 on 100 random instances
    for _ in 0..100 {
        let (n, m) = (rng.gen_range(1..=10), rng.gen_range(1..=10));
        let a_pts = Array2::from_shape_fn((n, 2), |_| rng.gen::<f64>() * 3.0);
        let b_pts = Array2::from_shape_fn((m, 2), |_| rng.gen::<f64>() * 3.0);
        let mut wa: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.05).collect();
        let mut wb: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() + 0.05).collect();
        let (sa, sb): (f64, f64) = (wa.iter().sum(), wb.iter().sum());
        wa.iter_mut().for_each(|w| *w /= sa);
        wb.iter_mut().for_each(|w| *w /= sb);
        let a = ParticleCloud::new(a_pts, wa.into()).unwrap();
        let b = ParticleCloud::new(b_pts, wb.into()).unwrap();
        let (plan, duals, _) = ot::solve_exact(&a, &b, 2).unwrap();
        let cost = ot::cost_matrix(&a, &b, 2, true).unwrap();
        let gap = ot::duality_gap(&plan, &duals, &cost);
        pass &= gap.abs() <= 1e-8;
    }

    report(9, "assignment/transport solver oracles", pass);
}

#[test]
fn criterion_10_gradient_correctness() {
    let mut worst: f64 = 0.0;
    let mut pass = true;
    let h = 1e-6;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let z = Array2::from_shape_fn((4, 2), |_| rng.gen::<f64>() * 2.0 - 1.0);

        // MSE head, parameter gradient
        let net = Mlp::new(&[2, 6, 2], Activation::Tanh, seed, 1.0).unwrap();
        let targets = Array2::from_shape_fn((4, 2), |_| rng.gen::<f64>());
        let (_, grad) = net.mse_loss_grad(&z, &targets).unwrap();
        let base = net.params_flat();
        for k in 0..base.len() {
            let eval = |delta: f64| {
                let mut p = base.clone();
                p[k] += delta;
                let mut pert = net.clone();
                pert.set_params_flat(&p).unwrap();
                pert.mse_loss_grad(&z, &targets).unwrap().0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let rel = (grad.0[k] - fd).abs() / (1.0 + fd.abs());
            worst = worst.max(rel);
            pass &= rel <= 1e-4;
        }

        // scalar head, parameter gradient
        let scalar = Mlp::new(&[2, 6, 1], Activation::Tanh, seed + 500, 1.0).unwrap();
        let (_, grad) = scalar.scalar_head_grad(&z, 1.0).unwrap();
        let base = scalar.params_flat();
        for k in 0..base.len() {
            let eval = |delta: f64| {
                let mut p = base.clone();
                p[k] += delta;
                let mut pert = scalar.clone();
                pert.set_params_flat(&p).unwrap();
                pert.scalar_head_grad(&z, 1.0).unwrap().0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let rel = (grad.0[k] - fd).abs() / (1.0 + fd.abs());
            worst = worst.max(rel);
            pass &= rel <= 1e-4;
        }

        // input gradient of the scalar output
        let x = ndarray::Array1::from_shape_fn(2, |_| rng.gen::<f64>() * 2.0 - 1.0);
        let g = scalar.input_gradient(&x).unwrap();
        for k in 0..2 {
            let eval = |delta: f64| {
                let mut xp = x.clone();
                xp[k] += delta;
                scalar
                    .scalar_values(&xp.clone().insert_axis(ndarray::Axis(0)))
                    .unwrap()[0]
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let rel = (g[k] - fd).abs() / (1.0 + fd.abs());
            worst = worst.max(rel);
            pass &= rel <= 1e-4;
        }
    }
    report(10, &format!("gradient correctness, worst relative error {worst:.2e}"), pass);
}

#[test]
fn criterion_11_persistency_speeds_convergence() {
    let start = Instant::now();
    // 8-Gaussian ring placed away from the generator's initial output so
    // every run's 5%-of-initial target sits above the finite-sample w2
    // floor of the evaluation batches
    let data = sample_gaussian_ring(8, 1.0, 0.3, 512, 0)
        .unwrap()
        .pushforward(|x| ndarray::array![x[0] + 30.0, x[1] + 30.0])
        .unwrap();

    let epochs_to_threshold = |records: &[trainer::MetricsRecord]| -> i64 {
        let target = 0.05 * records[0].w2_loss;
        records
            .iter()
            .find(|r| r.w2_loss <= target)
            .map(|r| r.epoch as i64)
            .unwrap_or(-1)
    };

    let run = |k: usize, seed: u64| -> i64 {
        let config = trainer::TrainConfig {
            m: 128,
            gamma_g: 0.01,
            gamma_d: 0.05,
            lambda: 1.0,
            delta_t: 0.5,
            k,
            epochs: 40,
            d_updates_per_epoch: 0,
            potential_backend: trainer::PotentialBackend::ExactOt,
            seed,
            architectures: trainer::Architectures::default(),
            eval_size: 200,
        };
        let init = trainer::GeneratorState::Neural(
            Mlp::new(&config.architectures.generator, Activation::Tanh, seed, 1.0).unwrap(),
        );
        let result = trainer::train(&config, &data, init).unwrap();
        epochs_to_threshold(&result.records)
    };

    let median = |k: usize| -> i64 {
        let mut vals: Vec<i64> = (1..=5).map(|seed| run(k, seed)).collect();
        vals.sort_unstable();
        vals[2]
    };
    let (m1, m5, m10) = (median(1), median(5), median(10));
    let reached = m1 >= 0 && m5 >= 0 && m10 >= 0;
    let pass = reached
        && m5 < m1
        && m10 <= m5 + 10
        && start.elapsed().as_secs_f64() < 900.0;
    report(
        11,
        &format!("persistency ordering, median epochs K=1:{m1} K=5:{m5} K=10:{m10}"),
        pass,
    );
}

#[test]
fn criterion_12_trainer_euler_cross_validation() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mu0 = ParticleCloud::uniform(trainer::sample_latent(2, 30, &mut rng)).unwrap();
    let data =
        ParticleCloud::uniform(trainer::sample_latent(2, 30, &mut rng).mapv(|v| v + 5.0)).unwrap();
    let delta_t = 0.25;
    let traj = euler::run_euler(&mu0, &data, delta_t, 20, Backend::Exact).unwrap();
    let mut buffer = mu0;
    let mut worst: f64 = 0.0;
    for n in 1..=20 {
        buffer = trainer::direct_particle_epoch(&buffer, &data, delta_t).unwrap();
        let diff = buffer
            .points()
            .iter()
            .zip(traj.snapshots[n].points().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        worst = worst.max(diff);
    }
    report(
        12,
        &format!("direct-particle trainer matches Euler, max diff {worst:.2e}"),
        worst <= 1e-12,
    );
}
