//! Discrete probability measures on `R^d` as weighted particle clouds.

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::{Result, W2Error};

const MASS_TOL: f64 = 1e-12;

/// Weighted point set representing an empirical probability measure.
///
/// Immutable after construction; weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    points: Array2<f64>,
    weights: Array1<f64>,
}

impl ParticleCloud {
    /// Builds a cloud from explicit points and weights, validating the
    /// probability-measure invariants.
    pub fn new(points: Array2<f64>, weights: Array1<f64>) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(W2Error::EmptyCloud);
        }
        if points.ncols() == 0 {
            return Err(W2Error::InvalidCloud("zero-dimensional points".into()));
        }
        if weights.len() != n {
            return Err(W2Error::InvalidCloud(format!(
                "{} points but {} weights",
                n,
                weights.len()
            )));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(W2Error::NonFinite("cloud coordinates".into()));
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(W2Error::InvalidCloud("negative or non-finite weight".into()));
        }
        let total: f64 = weights.sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(W2Error::InvalidCloud(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { points, weights })
    }

    /// Uniform cloud over the given points (weight `1/n` each).
    pub fn uniform(points: Array2<f64>) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(W2Error::EmptyCloud);
        }
        let w = Array1::from_elem(n, 1.0 / n as f64);
        Self::new(points, w)
    }

    /// Uniform 1-D cloud, handy for tests.
    pub fn uniform_1d(xs: &[f64]) -> Result<Self> {
        let pts = Array2::from_shape_vec((xs.len(), 1), xs.to_vec())
            .map_err(|e| W2Error::InvalidCloud(e.to_string()))?;
        Self::uniform(pts)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 1 by construction
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    /// True iff every weight is exactly `1/n`.
    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|&x| x == w)
    }

    /// Applies a pointwise map to the support; weights are carried over
    /// unchanged.
    pub fn pushforward<F>(&self, map: F) -> Result<Self>
    where
        F: Fn(ArrayView1<'_, f64>) -> Array1<f64>,
    {
        let mut out = Array2::zeros((self.len(), self.dim()));
        for (i, x) in self.points.rows().into_iter().enumerate() {
            let y = map(x);
            if y.len() != self.dim() {
                return Err(W2Error::DimensionMismatch(format!(
                    "map returned {} coordinates, expected {}",
                    y.len(),
                    self.dim()
                )));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(W2Error::NonFinite(format!("pushforward of point {i}")));
            }
            out.row_mut(i).assign(&y);
        }
        Self::new(out, self.weights.clone())
    }

    /// Weighted second moment `sum_i w_i |x_i|^2`.
    pub fn second_moment(&self) -> f64 {
        self.points
            .rows()
            .into_iter()
            .zip(self.weights.iter())
            .map(|(x, &w)| w * x.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    /// Writes the cloud as CSV: header `x0,...,x{d-1},weight`, one row per point.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        writeln!(f, "{},weight", header.join(","))?;
        for (x, &w) in self.points.rows().into_iter().zip(self.weights.iter()) {
            let coords: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
            writeln!(f, "{},{w}", coords.join(","))?;
        }
        Ok(())
    }

    /// Reads a cloud from CSV. The `weight` column is optional; without it
    /// the cloud is uniform.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let header = lines
            .next()
            .ok_or_else(|| W2Error::InvalidCloud("empty csv".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        let has_weight = cols.last() == Some(&"weight");
        let d = if has_weight { cols.len() - 1 } else { cols.len() };
        let mut pts = Vec::new();
        let mut ws = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: std::result::Result<Vec<f64>, _> =
                line.trim().split(',').map(str::parse::<f64>).collect();
            let vals = vals.map_err(|e| W2Error::InvalidCloud(format!("bad csv row: {e}")))?;
            if vals.len() != cols.len() {
                return Err(W2Error::InvalidCloud("ragged csv row".into()));
            }
            pts.extend_from_slice(&vals[..d]);
            if has_weight {
                ws.push(vals[d]);
            }
        }
        let n = pts.len() / d;
        let points = Array2::from_shape_vec((n, d), pts)
            .map_err(|e| W2Error::InvalidCloud(e.to_string()))?;
        if has_weight {
            Self::new(points, Array1::from_vec(ws))
        } else {
            Self::uniform(points)
        }
    }
}

/// Mean and covariance of a Gaussian used as an analytic oracle source.
#[derive(Debug, Clone)]
pub struct GaussianSpec {
    pub mean: Array1<f64>,
    pub covariance: Array2<f64>,
}

impl GaussianSpec {
    pub fn new(mean: Array1<f64>, covariance: Array2<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(W2Error::DimensionMismatch(format!(
                "mean has {} entries but covariance is {}x{}",
                d,
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        for i in 0..d {
            for j in 0..d {
                if (covariance[[i, j]] - covariance[[j, i]]).abs() > 1e-12 {
                    return Err(W2Error::NotSpd);
                }
            }
        }
        // cholesky also certifies positive-definiteness
        cholesky(&covariance)?;
        Ok(Self { mean, covariance })
    }

    pub fn standard(d: usize) -> Self {
        Self {
            mean: Array1::zeros(d),
            covariance: Array2::eye(d),
        }
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut l: Array2<f64> = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(W2Error::NotSpd);
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// `n` i.i.d. draws from the Gaussian, deterministic for a fixed seed.
pub fn sample_gaussian(spec: &GaussianSpec, n: usize, seed: u64) -> Result<ParticleCloud> {
    if n == 0 {
        return Err(W2Error::EmptyCloud);
    }
    let d = spec.mean.len();
    let l = cholesky(&spec.covariance)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Array2::zeros((n, d));
    for i in 0..n {
        let z: Array1<f64> = Array1::from_iter((0..d).map(|_| rng.sample(StandardNormal)));
        let x = l.dot(&z) + &spec.mean;
        pts.row_mut(i).assign(&x);
    }
    ParticleCloud::uniform(pts)
}

/// Mixture of `k` equally weighted isotropic Gaussians with means on the
/// circle of the given radius, mode `j` at angle `2*pi*j/k` starting from
/// angle zero, counterclockwise. 2-D only.
pub fn sample_gaussian_ring(
    k: usize,
    radius: f64,
    sigma: f64,
    n: usize,
    seed: u64,
) -> Result<ParticleCloud> {
    if k == 0 {
        return Err(W2Error::OutOfRange("k must be >= 1".into()));
    }
    if !(radius > 0.0) || !(sigma > 0.0) {
        return Err(W2Error::OutOfRange("radius and sigma must be positive".into()));
    }
    if n == 0 {
        return Err(W2Error::EmptyCloud);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Array2::zeros((n, 2));
    for i in 0..n {
        let j = rng.gen_range(0..k);
        let angle = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
        let (cx, cy) = (radius * angle.cos(), radius * angle.sin());
        let gx: f64 = rng.sample(StandardNormal);
        let gy: f64 = rng.sample(StandardNormal);
        pts[[i, 0]] = cx + sigma * gx;
        pts[[i, 1]] = cy + sigma * gy;
    }
    ParticleCloud::uniform(pts)
}
