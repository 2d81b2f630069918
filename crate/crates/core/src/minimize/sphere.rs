//! Exponential and logarithm maps of the unit sphere.

use crate::error::{Error, Result};
use crate::signal::{dot, norm2};

/// `cos(|u|) a + sin(|u|) u / |u|` for tangent `u` at `a`.
pub fn exp_map(a: &[f64], u: &[f64]) -> Vec<f64> {
    let nu = norm2(u);
    if nu < 1e-12 {
        return a.to_vec();
    }
    let (s, c) = nu.sin_cos();
    let out: Vec<f64> = a.iter().zip(u).map(|(x, v)| c * x + s * v / nu).collect();
    // Rounding in a long run of steps slowly pulls the iterate off the sphere.
    let r = norm2(&out);
    out.into_iter().map(|v| v / r).collect()
}

/// Tangent vector at `a` pointing along the geodesic to `b`, with length
/// equal to the geodesic angle.
pub fn log_map(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let c = dot(a, b).clamp(-1.0, 1.0);
    let d: Vec<f64> = b.iter().zip(a).map(|(y, x)| y - c * x).collect();
    let nd = norm2(&d);
    if nd < 1e-15 {
        return if c > 0.0 {
            Ok(vec![0.0; a.len()])
        } else {
            Err(Error::Antipodal)
        };
    }
    let angle = c.acos();
    Ok(d.iter().map(|v| angle * v / nd).collect())
}

/// Geodesic distance `arccos <a, b>`.
pub fn geodesic_distance(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b).clamp(-1.0, 1.0).acos()
}
