//! Constant-speed geodesics between particle clouds and the time-changed
//! gradient-flow curve, with residual diagnostics for their closed-form
//! identities.
//!
//! All residual operations re-solve transport on the interpolants with a
//! fresh exact solve, so the checks do not reuse the matching they are
//! meant to verify.

use ndarray::Array2;

use crate::measures::ParticleCloud;
use crate::ot::{self, Assignment};
use crate::{Result, W2Error};

/// Lazy geodesic from `source` to `target`: the assignment is solved once
/// at construction, evaluation is `O(n d)`.
#[derive(Debug, Clone)]
pub struct FlowCurve {
    source: ParticleCloud,
    target: ParticleCloud,
    matching: Assignment,
    w2_0d: f64,
}

impl FlowCurve {
    pub fn source(&self) -> &ParticleCloud {
        &self.source
    }

    pub fn target(&self) -> &ParticleCloud {
        &self.target
    }

    pub fn matching(&self) -> &Assignment {
        &self.matching
    }

    /// Cached `W2(mu_0, mu_d)`.
    pub fn w2_0d(&self) -> f64 {
        self.w2_0d
    }
}

/// Solves the assignment between uniform equal-size clouds and caches it.
pub fn build_flow(mu0: &ParticleCloud, mud: &ParticleCloud) -> Result<FlowCurve> {
    let (matching, w2_0d) = ot::solve_assignment(mu0, mud)?;
    Ok(FlowCurve {
        source: mu0.clone(),
        target: mud.clone(),
        matching,
        w2_0d,
    })
}

/// Displacement interpolation: point `i` at `(1-s) x_i + s y_sigma(i)`.
pub fn geodesic_point(curve: &FlowCurve, s: f64) -> Result<ParticleCloud> {
    if !(0.0..=1.0).contains(&s) {
        return Err(W2Error::OutOfRange(format!("s = {s} outside [0, 1]")));
    }
    let (n, d) = (curve.source.len(), curve.source.dim());
    let mut pts = Array2::zeros((n, d));
    for i in 0..n {
        let j = curve.matching.map(i);
        for k in 0..d {
            pts[[i, k]] =
                (1.0 - s) * curve.source.points()[[i, k]] + s * curve.target.points()[[j, k]];
        }
    }
    ParticleCloud::uniform(pts)
}

/// Gradient-flow curve: the geodesic at `s = 1 - e^{-t}`.
pub fn flow_point(curve: &FlowCurve, t: f64) -> Result<ParticleCloud> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(W2Error::OutOfRange(format!("t = {t} must be >= 0 and finite")));
    }
    geodesic_point(curve, 1.0 - (-t).exp())
}

/// `| W2(beta_s1, beta_s2) - (s2 - s1) W2(mu_0, mu_d) |`, fresh solve.
pub fn geodesic_speed_residual(curve: &FlowCurve, s1: f64, s2: f64) -> Result<f64> {
    if s1 > s2 {
        return Err(W2Error::OutOfRange("need s1 <= s2".into()));
    }
    let a = geodesic_point(curve, s1)?;
    let b = geodesic_point(curve, s2)?;
    let w2 = ot::w2_distance(&a, &b)?;
    Ok((w2 - (s2 - s1) * curve.w2_0d).abs())
}

/// `| W2(mu*_t, mu_d) - e^{-t} W2(mu_0, mu_d) |`, fresh solve.
pub fn decay_residual(curve: &FlowCurve, t: f64) -> Result<f64> {
    let p = flow_point(curve, t)?;
    let w2 = ot::w2_distance(&p, &curve.target)?;
    Ok((w2 - (-t).exp() * curve.w2_0d).abs())
}

/// `J(mu) = W2(mu, mu_d)^2 / 2`.
pub fn objective(cloud: &ParticleCloud, mud: &ParticleCloud) -> Result<f64> {
    let w2 = ot::w2_distance(cloud, mud)?;
    Ok(0.5 * w2 * w2)
}

/// Residual of `J(mu*_t) - J(mu*_s) = -(e^{-2s} - e^{-2t}) W2^2 / 2`.
pub fn energy_identity_residual(curve: &FlowCurve, s: f64, t: f64) -> Result<f64> {
    if !(s < t) {
        return Err(W2Error::OutOfRange(format!("need s < t, got s = {s}, t = {t}")));
    }
    let js = objective(&flow_point(curve, s)?, &curve.target)?;
    let jt = objective(&flow_point(curve, t)?, &curve.target)?;
    let drop = ((-2.0 * s).exp() - (-2.0 * t).exp()) * curve.w2_0d * curve.w2_0d / 2.0;
    Ok(((jt - js) + drop).abs())
}

/// Local slope of `J` at the cloud; the slope identity reduces it to the
/// distance to the target.
pub fn local_slope(cloud: &ParticleCloud, mud: &ParticleCloud) -> Result<f64> {
    ot::w2_distance(cloud, mud)
}
