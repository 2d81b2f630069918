//! Pseudo-Huber sparsity surrogate `rho(x) = sum sqrt(x^2 + delta^2)`, its
//! curvature and proximal map, plus the exact soft threshold it smooths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub lambda: f64,
    pub delta: f64,
}

impl SurrogateParams {
    pub fn new(lambda: f64, delta: f64) -> Result<Self> {
        let params = SurrogateParams { lambda, delta };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda", format!("must be positive, got {}", self.lambda)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid("delta", format!("must be positive, got {}", self.delta)));
        }
        Ok(())
    }

    /// The smoothing is only a faithful proxy for the l1 norm when `delta <= lambda`.
    pub fn delta_exceeds_lambda(&self) -> bool {
        self.delta > self.lambda
    }
}

pub fn rho(x: &[f64], delta: f64) -> f64 {
    x.iter().map(|v| v.hypot(delta)).sum()
}

/// Entrywise derivative `x / sqrt(x^2 + delta^2)`.
pub fn rho_grad(x: f64, delta: f64) -> f64 {
    x / x.hypot(delta)
}

/// Entrywise curvature `delta^2 / (x^2 + delta^2)^{3/2}`.
pub fn rho_curvature(x: f64, delta: f64) -> f64 {
    let r = x.hypot(delta);
    delta * delta / (r * r * r)
}

pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    let m = z.abs() - lambda;
    if m > 0.0 {
        m.copysign(z)
    } else {
        0.0
    }
}

pub fn soft_threshold_vec(z: &[f64], lambda: f64) -> Vec<f64> {
    z.iter().map(|v| soft_threshold(*v, lambda)).collect()
}

const PROX_MAX_ITERS: usize = 200;

/// Solve `lambda x / sqrt(x^2 + delta^2) + x = z` for `z >= 0`.
///
/// The residual is increasing in `x`, negative at `soft_threshold(z)` and
/// non-negative at `z`, so Newton steps are kept inside a shrinking bracket.
fn prox_scalar_nonneg(z: f64, params: &SurrogateParams) -> Option<f64> {
    let SurrogateParams { lambda, delta } = *params;
    if z == 0.0 {
        return Some(0.0);
    }
    // Newton converges quadratically, so this sits just above the rounding floor.
    let tol = 1e-14 * z.max(1.0);
    let residual = |x: f64| lambda * rho_grad(x, delta) + x - z;
    let mut lo = soft_threshold(z, lambda);
    let mut hi = z;
    // Near the kink the root sits around z delta / (lambda + delta).
    let mut x = if lo > 0.0 { lo } else { z * delta / (lambda + delta) };
    x = x.clamp(lo, hi);
    for _ in 0..PROX_MAX_ITERS {
        let r = residual(x);
        if r.abs() <= tol {
            return Some(x);
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let slope = lambda * rho_curvature(x, delta) + 1.0;
        let newton = x - r / slope;
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * hi {
            // The bracket is one ulp wide: x is as good as f64 allows.
            let r = residual(x);
            return (r.abs() <= 100.0 * tol).then_some(x);
        }
    }
    None
}

/// Scalar proximal map of `lambda * rho`, exactly odd in `z`.
pub fn prox_scalar(z: f64, params: &SurrogateParams) -> Option<f64> {
    prox_scalar_nonneg(z.abs(), params).map(|x| x.copysign(z))
}

pub fn prox_rho(z: &[f64], params: &SurrogateParams) -> Result<Vec<f64>> {
    z.iter()
        .enumerate()
        .map(|(index, &zi)| {
            prox_scalar(zi, params).ok_or(Error::ProxNonConvergence { index, z: zi })
        })
        .collect()
}

/// Diagonal of the Jacobian of `prox_rho`, evaluated at the prox output.
pub fn prox_derivative_at(x: &[f64], params: &SurrogateParams) -> Vec<f64> {
    x.iter()
        .map(|xi| 1.0 / (params.lambda * rho_curvature(*xi, params.delta) + 1.0))
        .collect()
}

pub fn prox_rho_derivative(z: &[f64], params: &SurrogateParams) -> Result<Vec<f64>> {
    Ok(prox_derivative_at(&prox_rho(z, params)?, params))
}
