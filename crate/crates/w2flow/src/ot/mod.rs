//! Discrete optimal transport: exact solvers, entropic solver, dual
//! potentials, c-transform, and optimal-map extraction.
//!
//! Two cost conventions coexist deliberately. Distance reporting uses
//! un-halved `|x - y|^p` totals, so `W_p = cost^(1/p)`. Kantorovich
//! potentials use the halved quadratic cost `c(x, y) = |x - y|^2 / 2`,
//! under which the optimal map is `x - grad phi(x)` with no stray factor
//! of two. `CostMatrix::half` records which convention an object carries.

pub mod assignment;
pub mod exact;
pub mod sinkhorn;

use ndarray::{Array1, Array2};
use std::io::Write;
use std::path::Path;

use crate::measures::ParticleCloud;
use crate::{Result, W2Error};

pub use sinkhorn::SinkhornSolution;

/// Pairwise cost matrix with its convention recorded.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    pub entries: Array2<f64>,
    pub exponent: u32,
    pub half: bool,
}

/// Permutation coupling for uniform equal-size clouds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    sigma: Vec<usize>,
}

impl Assignment {
    pub fn new(sigma: Vec<usize>) -> Result<Self> {
        let n = sigma.len();
        let mut seen = vec![false; n];
        for &j in &sigma {
            if j >= n || seen[j] {
                return Err(W2Error::InvalidCloud("sigma is not a permutation".into()));
            }
            seen[j] = true;
        }
        Ok(Self { sigma })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            sigma: (0..n).collect(),
        }
    }

    pub fn map(&self, i: usize) -> usize {
        self.sigma[i]
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn sigma(&self) -> &[usize] {
        &self.sigma
    }
}

/// Dense coupling between weighted supports.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub coupling: Array2<f64>,
}

impl TransportPlan {
    pub fn row_marginals(&self) -> Array1<f64> {
        self.coupling.sum_axis(ndarray::Axis(1))
    }

    pub fn col_marginals(&self) -> Array1<f64> {
        self.coupling.sum_axis(ndarray::Axis(0))
    }

    /// Exports nonzero entries as `i,j,mass` triplets.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "i,j,mass")?;
        for ((i, j), &mass) in self.coupling.indexed_iter() {
            if mass > 0.0 {
                writeln!(f, "{i},{j},{mass}")?;
            }
        }
        Ok(())
    }
}

/// Kantorovich potential values on the two supports.
#[derive(Debug, Clone)]
pub struct DualPotentials {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

/// Either form of an optimal matching, for map extraction.
pub enum Matching {
    Permutation(Assignment),
    Plan(TransportPlan),
}

/// Builds the pairwise cost matrix `(1/2 if half) * |x_i - y_j|^p`.
pub fn cost_matrix(
    a: &ParticleCloud,
    b: &ParticleCloud,
    exponent: u32,
    half: bool,
) -> Result<CostMatrix> {
    if a.dim() != b.dim() {
        return Err(W2Error::DimensionMismatch(format!(
            "clouds have dims {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let scale = if half { 0.5 } else { 1.0 };
    let entries = Array2::from_shape_fn((a.len(), b.len()), |(i, j)| {
        let d2: f64 = a
            .point(i)
            .iter()
            .zip(b.point(j).iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        match exponent {
            1 => scale * d2.sqrt(),
            2 => scale * d2,
            p => scale * d2.sqrt().powi(p as i32),
        }
    });
    Ok(CostMatrix {
        entries,
        exponent,
        half,
    })
}

/// Exact optimal assignment between uniform equal-size clouds.
///
/// Returns the minimizing permutation and `W2 = sqrt(sum |x_i - y_sigma(i)|^2 / n)`.
pub fn solve_assignment(a: &ParticleCloud, b: &ParticleCloud) -> Result<(Assignment, f64)> {
    if a.len() != b.len() {
        return Err(W2Error::UseSolveExact(format!(
            "cloud sizes {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    if !a.is_uniform() || !b.is_uniform() {
        return Err(W2Error::UseSolveExact("weights are not uniform".into()));
    }
    let cost = cost_matrix(a, b, 2, false)?;
    let lap = assignment::solve_lap(&cost.entries);
    let w2 = (lap.cost / a.len() as f64).sqrt();
    Ok((Assignment { sigma: lap.row_to_col }, w2))
}

/// Exact optimal transport for arbitrary weights.
///
/// The returned cost is the un-halved total `sum gamma_ij |x_i - y_j|^p`,
/// so `W_p = cost^(1/p)`. For `p = 2` the potentials are solved under the
/// halved cost convention; for `p = 1` they match the plain cost.
pub fn solve_exact(
    a: &ParticleCloud,
    b: &ParticleCloud,
    exponent: u32,
) -> Result<(TransportPlan, DualPotentials, f64)> {
    let half = exponent == 2;
    let cost = cost_matrix(a, b, exponent, half)?;
    let sol = exact::solve_transport(
        &cost.entries,
        a.weights().as_slice().expect("contiguous weights"),
        b.weights().as_slice().expect("contiguous weights"),
    )?;
    let total = if half { 2.0 * sol.primal } else { sol.primal };
    Ok((
        TransportPlan {
            coupling: sol.coupling,
        },
        DualPotentials {
            phi: sol.phi,
            psi: sol.psi,
        },
        total,
    ))
}

/// Entropically regularized transport on the un-halved squared cost.
pub fn sinkhorn(
    a: &ParticleCloud,
    b: &ParticleCloud,
    entropic_eps: f64,
    max_iters: usize,
    tol: f64,
) -> Result<SinkhornSolution> {
    let cost = cost_matrix(a, b, 2, false)?;
    sinkhorn::solve_sinkhorn(
        &cost.entries,
        a.weights().as_slice().expect("contiguous weights"),
        b.weights().as_slice().expect("contiguous weights"),
        entropic_eps,
        max_iters,
        tol,
    )
}

/// c-transform of `phi` under the halved quadratic cost:
/// `psi[j] = min_i (|x_i - y_j|^2 / 2 - phi[i])`.
pub fn c_transform(phi: &[f64], a: &ParticleCloud, b: &ParticleCloud) -> Result<Vec<f64>> {
    if phi.len() != a.len() {
        return Err(W2Error::ShapeMismatch(format!(
            "{} potentials for {} points",
            phi.len(),
            a.len()
        )));
    }
    let cost = cost_matrix(a, b, 2, true)?;
    Ok((0..b.len())
        .map(|j| {
            (0..a.len())
                .map(|i| cost.entries[[i, j]] - phi[i])
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

/// Gradient of the Kantorovich potential at each source point:
/// `grad phi(x_i) = x_i - T(x_i)`, with `T` the matched target for
/// permutations or the barycentric projection of the plan row.
pub fn potential_gradient(
    a: &ParticleCloud,
    matching: &Matching,
    b: &ParticleCloud,
) -> Result<Array2<f64>> {
    let d = a.dim();
    let mut grad = Array2::zeros((a.len(), d));
    match matching {
        Matching::Permutation(assign) => {
            if assign.len() != a.len() {
                return Err(W2Error::ShapeMismatch("assignment size".into()));
            }
            for i in 0..a.len() {
                let j = assign.map(i);
                for k in 0..d {
                    grad[[i, k]] = a.points()[[i, k]] - b.points()[[j, k]];
                }
            }
        }
        Matching::Plan(plan) => {
            if plan.coupling.nrows() != a.len() || plan.coupling.ncols() != b.len() {
                return Err(W2Error::ShapeMismatch("plan shape".into()));
            }
            for i in 0..a.len() {
                let mass: f64 = plan.coupling.row(i).sum();
                if mass <= 0.0 {
                    return Err(W2Error::EmptyRowMass(i));
                }
                for k in 0..d {
                    let target: f64 = (0..b.len())
                        .map(|j| plan.coupling[[i, j]] * b.points()[[j, k]])
                        .sum::<f64>()
                        / mass;
                    grad[[i, k]] = a.points()[[i, k]] - target;
                }
            }
        }
    }
    Ok(grad)
}

/// Primal minus dual value; nonnegative for feasible potentials, at most
/// ~1e-8 for exact-solver output. Marginals are taken from the plan.
pub fn duality_gap(plan: &TransportPlan, potentials: &DualPotentials, cost: &CostMatrix) -> f64 {
    let primal: f64 = plan
        .coupling
        .indexed_iter()
        .map(|((i, j), &g)| g * cost.entries[[i, j]])
        .sum();
    let a = plan.row_marginals();
    let b = plan.col_marginals();
    let dual: f64 = a
        .iter()
        .zip(&potentials.phi)
        .map(|(w, p)| w * p)
        .sum::<f64>()
        + b.iter()
            .zip(&potentials.psi)
            .map(|(w, p)| w * p)
            .sum::<f64>();
    primal - dual
}

/// W2 distance, dispatching to the permutation solver when both clouds
/// are uniform with equal size.
pub fn w2_distance(a: &ParticleCloud, b: &ParticleCloud) -> Result<f64> {
    if a.len() == b.len() && a.is_uniform() && b.is_uniform() {
        let (_, w2) = solve_assignment(a, b)?;
        Ok(w2)
    } else {
        let (_, _, cost) = solve_exact(a, b, 2)?;
        Ok(cost.sqrt())
    }
}

/// W1 distance (exact, `p = 1`).
pub fn w1_distance(a: &ParticleCloud, b: &ParticleCloud) -> Result<f64> {
    if a.len() == b.len() && a.is_uniform() && b.is_uniform() {
        let cost = cost_matrix(a, b, 1, false)?;
        let lap = assignment::solve_lap(&cost.entries);
        Ok(lap.cost / a.len() as f64)
    } else {
        let (_, _, cost) = solve_exact(a, b, 1)?;
        Ok(cost)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::ParticleCloud;
    use ndarray::array;

    #[test]
    fn cost_matrix_values() {
        let a = ParticleCloud::uniform_1d(&[0.0]).unwrap();
        let c = cost_matrix(&a, &a, 2, false).unwrap();
        assert_eq!(c.entries, array![[0.0]]);

        let b = ParticleCloud::uniform_1d(&[3.0]).unwrap();
        let c = cost_matrix(&a, &b, 2, false).unwrap();
        assert_eq!(c.entries, array![[9.0]]);

        let a = ParticleCloud::uniform_1d(&[0.0, 1.0]).unwrap();
        let b = ParticleCloud::uniform_1d(&[2.0, 3.0]).unwrap();
        let c = cost_matrix(&a, &b, 2, true).unwrap();
        assert_eq!(c.entries, array![[2.0, 4.5], [0.5, 2.0]]);
    }

    #[test]
    fn cost_matrix_dimension_mismatch() {
        let a = ParticleCloud::uniform_1d(&[0.0]).unwrap();
        let b = ParticleCloud::uniform(array![[0.0, 1.0]]).unwrap();
        assert!(cost_matrix(&a, &b, 2, false).is_err());
    }

    #[test]
    fn assignment_two_points() {
        let a = ParticleCloud::uniform_1d(&[0.0, 1.0]).unwrap();
        let b = ParticleCloud::uniform_1d(&[2.0, 3.0]).unwrap();
        let (sigma, w2) = solve_assignment(&a, &b).unwrap();
        assert_eq!(sigma.sigma(), &[0, 1]);
        assert!((w2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn assignment_identity_on_equal_clouds() {
        let a = ParticleCloud::uniform(array![[1.0, 1.0], [2.0, 0.5], [0.0, 0.0]]).unwrap();
        let (sigma, w2) = solve_assignment(&a, &a).unwrap();
        assert_eq!(sigma.sigma(), &[0, 1, 2]);
        assert_eq!(w2, 0.0);
    }

    #[test]
    fn assignment_single_pair() {
        let a = ParticleCloud::uniform(array![[0.0, 0.0]]).unwrap();
        let b = ParticleCloud::uniform(array![[3.0, 4.0]]).unwrap();
        let (_, w2) = solve_assignment(&a, &b).unwrap();
        assert!((w2 - 5.0).abs() < 1e-12);
    }

    #[test]
    fn assignment_rejects_nonuniform() {
        let a = ParticleCloud::new(
            array![[0.0], [1.0]],
            ndarray::Array1::from_vec(vec![0.25, 0.75]),
        )
        .unwrap();
        let b = ParticleCloud::uniform_1d(&[2.0, 3.0]).unwrap();
        assert!(matches!(
            solve_assignment(&a, &b),
            Err(W2Error::UseSolveExact(_))
        ));
    }

    #[test]
    fn exact_split_mass() {
        let a = ParticleCloud::uniform_1d(&[0.0, 1.0]).unwrap();
        let b = ParticleCloud::uniform_1d(&[2.0]).unwrap();
        let (plan, _, cost) = solve_exact(&a, &b, 2).unwrap();
        assert!((cost - 2.5).abs() < 1e-12);
        assert!((plan.coupling[[0, 0]] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exact_matches_permutation_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pts_a = Array2::from_shape_fn((3, 2), |_| rng.gen::<f64>());
        let pts_b = Array2::from_shape_fn((3, 2), |_| rng.gen::<f64>());
        let a = ParticleCloud::uniform(pts_a).unwrap();
        let b = ParticleCloud::uniform(pts_b).unwrap();
        let (_, _, cost) = solve_exact(&a, &b, 2).unwrap();

        let c = cost_matrix(&a, &b, 2, false).unwrap();
        let perms: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let best = perms
            .iter()
            .map(|p| (0..3).map(|i| c.entries[[i, p[i]]] / 3.0).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        assert!((cost - best).abs() < 1e-10);
    }

    #[test]
    fn sinkhorn_close_to_exact() {
        let a = ParticleCloud::uniform_1d(&[0.0, 1.0]).unwrap();
        let b = ParticleCloud::uniform_1d(&[2.0, 3.0]).unwrap();
        let sol = sinkhorn(&a, &b, 1e-3, 5000, 1e-10).unwrap();
        assert!((sol.cost - 4.0).abs() < 1e-2);

        let same = sinkhorn(&a, &a, 1e-3, 5000, 1e-10).unwrap();
        assert!(same.cost < 1e-2);
    }

    #[test]
    fn c_transform_values_and_order() {
        let a = ParticleCloud::uniform_1d(&[0.0]).unwrap();
        let b = ParticleCloud::uniform_1d(&[2.0]).unwrap();
        let psi = c_transform(&[0.0], &a, &b).unwrap();
        assert!((psi[0] - 2.0).abs() < 1e-12);

        // double transform dominates the original potential
        let a = ParticleCloud::uniform_1d(&[0.0, 1.0, 3.0]).unwrap();
        let b = ParticleCloud::uniform_1d(&[2.0, 4.0, 5.0]).unwrap();
        let phi = [0.3, -0.7, 1.1];
        let psi = c_transform(&phi, &a, &b).unwrap();
        let phi_cc = c_transform_rev(&psi, &a, &b);
        for (orig, cc) in phi.iter().zip(&phi_cc) {
            assert!(cc + 1e-12 >= *orig);
        }
    }

    fn c_transform_rev(psi: &[f64], a: &ParticleCloud, b: &ParticleCloud) -> Vec<f64> {
        let cost = cost_matrix(a, b, 2, true).unwrap();
        (0..a.len())
            .map(|i| {
                (0..b.len())
                    .map(|j| cost.entries[[i, j]] - psi[j])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn exact_potentials_are_c_transform_pair() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a = ParticleCloud::uniform(Array2::from_shape_fn((5, 2), |_| rng.gen::<f64>())).unwrap();
        let b = ParticleCloud::uniform(Array2::from_shape_fn((5, 2), |_| rng.gen::<f64>())).unwrap();
        let (_, duals, _) = solve_exact(&a, &b, 2).unwrap();
        // gauge already fixed at phi[0] = 0 by the solver
        assert_eq!(duals.phi[0], 0.0);
        let psi = c_transform(&duals.phi, &a, &b).unwrap();
        for (got, expect) in duals.psi.iter().zip(&psi) {
            assert!((got - expect).abs() < 1e-8, "{got} vs {expect}");
        }
    }

    #[test]
    fn potential_gradient_cases() {
        let a = ParticleCloud::uniform_1d(&[0.0, 1.0]).unwrap();
        let ident = Matching::Permutation(Assignment::identity(2));
        let g = potential_gradient(&a, &ident, &a).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));

        let a1 = ParticleCloud::uniform_1d(&[0.0]).unwrap();
        let b1 = ParticleCloud::uniform_1d(&[2.0]).unwrap();
        let m = Matching::Permutation(Assignment::identity(1));
        let g = potential_gradient(&a1, &m, &b1).unwrap();
        assert_eq!(g[[0, 0]], -2.0);

        let b = ParticleCloud::uniform_1d(&[2.0, 3.0]).unwrap();
        let (sigma, _) = solve_assignment(&a, &b).unwrap();
        let g = potential_gradient(&a, &Matching::Permutation(sigma), &b).unwrap();
        assert_eq!(g.column(0).to_vec(), vec![-2.0, -2.0]);
    }

    #[test]
    fn duality_gap_exact_vs_zero_potentials() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let a = ParticleCloud::uniform(Array2::from_shape_fn((4, 2), |_| rng.gen::<f64>())).unwrap();
        let b = ParticleCloud::uniform(Array2::from_shape_fn((4, 2), |_| rng.gen::<f64>())).unwrap();
        let (plan, duals, _) = solve_exact(&a, &b, 2).unwrap();
        let cost = cost_matrix(&a, &b, 2, true).unwrap();
        let gap = duality_gap(&plan, &duals, &cost);
        assert!(gap.abs() <= 1e-8, "gap {gap}");

        let zeros = DualPotentials {
            phi: vec![0.0; 4],
            psi: vec![0.0; 4],
        };
        let gap0 = duality_gap(&plan, &zeros, &cost);
        assert!(gap0 >= 0.0);
    }

    #[test]
    fn sinkhorn_gap_decreases_with_eps() {
        let a = ParticleCloud::uniform_1d(&[0.0, 0.7, 1.3]).unwrap();
        let b = ParticleCloud::uniform_1d(&[2.0, 2.4, 3.1]).unwrap();
        let cost = cost_matrix(&a, &b, 2, false).unwrap();
        let mut gaps = Vec::new();
        for eps in [1e-1, 3e-2, 1e-2] {
            let sol = sinkhorn(&a, &b, eps, 50000, 1e-12).unwrap();
            let gap = duality_gap(
                &TransportPlan {
                    coupling: sol.coupling.clone(),
                },
                &DualPotentials {
                    phi: sol.phi.clone(),
                    psi: sol.psi.clone(),
                },
                &cost,
            );
            assert!(gap > -1e-9);
            gaps.push(gap);
        }
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "gaps {gaps:?}");
    }

    #[test]
    fn w2_symmetric() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let a = ParticleCloud::uniform(Array2::from_shape_fn((6, 2), |_| rng.gen::<f64>())).unwrap();
        let b = ParticleCloud::uniform(Array2::from_shape_fn((6, 2), |_| rng.gen::<f64>())).unwrap();
        let ab = w2_distance(&a, &b).unwrap();
        let ba = w2_distance(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-9);
        assert_eq!(w2_distance(&a, &a).unwrap(), 0.0);
    }

    use ndarray::Array2;
}
