//! First phase of the pipeline: initialise from a window of `y`, then descend
//! `phi_rho` on the sphere until the iterate settles near a signed shift.

mod argd;
mod curvilinear;
mod init;
mod sphere;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surrogate::SurrogateParams;

pub use argd::{accelerated_rgd, riemannian_gd};
pub use curvilinear::curvilinear_search;
pub use init::{init_a0, InitObjective};
pub use sphere::{exp_map, geodesic_distance, log_map};

/// Solver knobs. Unset options are derived from `(n, p0, theta)` by
/// [`MinimizeConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimizeConfig {
    /// `c` in `lambda = c / sqrt(p0 theta)`.
    pub lambda_scale: f64,
    pub lambda: Option<f64>,
    /// `delta = delta_ratio * lambda` unless `delta` is set.
    pub delta_ratio: f64,
    pub delta: Option<f64>,
    /// `c'` in `eta_v = c' n theta lambda`.
    pub eta_v_scale: f64,
    pub eta_v: Option<f64>,
    /// Largest curvilinear step; defaults to `0.1 / (n theta)`.
    pub t_max: Option<f64>,
    pub k1: usize,
    /// Gradient-norm stopping tolerance; defaults to `1e-6 n theta`.
    pub grad_tol: Option<f64>,
    pub armijo_shrink: f64,
    pub max_halvings: usize,
    pub momentum_eta: f64,
    /// Sufficient-decrease constant `c` in `phi(a+) - phi(w) < -c t |g|^2`.
    pub argd_armijo: f64,
    /// Relative residual tolerance for the curvature eigenpair.
    pub eig_tol: f64,
    pub init: InitObjective,
    /// Start of the length-`p0` window of `y` used for initialisation.
    pub window_offset: usize,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        MinimizeConfig {
            lambda_scale: 0.5,
            lambda: None,
            delta_ratio: 1e-2,
            delta: None,
            eta_v_scale: 0.1,
            eta_v: None,
            t_max: None,
            k1: 500,
            grad_tol: None,
            armijo_shrink: 0.5,
            max_halvings: 60,
            momentum_eta: 0.9,
            argd_armijo: 0.5,
            eig_tol: 1e-3,
            init: InitObjective::Rho,
            window_offset: 0,
        }
    }
}

/// Concrete scalars for one solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub lambda: f64,
    pub delta: f64,
    pub eta_v: f64,
    pub t_max: f64,
    pub grad_tol: f64,
}

impl Resolved {
    pub fn surrogate(&self) -> Result<SurrogateParams> {
        SurrogateParams::new(self.lambda, self.delta)
    }
}

fn positive(field: &'static str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid(field, format!("must be positive and finite, got {v}")))
    }
}

impl MinimizeConfig {
    pub fn validate(&self) -> Result<()> {
        positive("lambda_scale", self.lambda_scale)?;
        positive("delta_ratio", self.delta_ratio)?;
        if !(self.eta_v_scale >= 0.0) {
            return Err(Error::invalid("eta_v_scale", "must be non-negative"));
        }
        if let Some(v) = self.eta_v {
            if !(v >= 0.0) {
                return Err(Error::invalid("eta_v", "must be non-negative"));
            }
        }
        for (field, v) in [("lambda", self.lambda), ("delta", self.delta), ("t_max", self.t_max), ("grad_tol", self.grad_tol)] {
            if let Some(v) = v {
                positive(field, v)?;
            }
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return Err(Error::invalid("armijo_shrink", "must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.momentum_eta) {
            return Err(Error::invalid("momentum_eta", "must lie in [0, 1)"));
        }
        if !(self.argd_armijo > 0.0 && self.argd_armijo <= 1.0) {
            return Err(Error::invalid("argd_armijo", "must lie in (0, 1]"));
        }
        positive("eig_tol", self.eig_tol)?;
        if self.k1 == 0 {
            return Err(Error::invalid("k1", "must be at least 1"));
        }
        Ok(())
    }

    pub fn resolve(&self, n: usize, p0: usize, theta: f64) -> Result<Resolved> {
        self.validate()?;
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::invalid("theta", format!("must lie in (0, 1), got {theta}")));
        }
        let nt = n as f64 * theta;
        let lambda = self
            .lambda
            .unwrap_or(self.lambda_scale / (p0 as f64 * theta).sqrt());
        let delta = self.delta.unwrap_or(self.delta_ratio * lambda);
        Ok(Resolved {
            lambda,
            delta,
            eta_v: self.eta_v.unwrap_or(self.eta_v_scale * nt * lambda),
            t_max: self.t_max.unwrap_or(0.1 / nt),
            grad_tol: self.grad_tol.unwrap_or(1e-6 * nt),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIterations,
    /// The line search ran out of halvings; the best iterate is returned.
    Stalled,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIterations => "max_iterations",
            Status::Stalled => "stalled",
        }
    }
}

/// One accepted step. `phi < phi_ref - required_decrease` is the sufficient
/// decrease test the step passed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iter: usize,
    pub phi: f64,
    pub phi_ref: f64,
    pub required_decrease: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub used_curvature: bool,
    pub min_eig: Option<f64>,
    pub momentum_restart: bool,
    pub elapsed_ms: f64,
}

impl StepRecord {
    pub fn satisfies_armijo(&self) -> bool {
        self.phi < self.phi_ref - self.required_decrease
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeTrace {
    pub initial_phi: f64,
    pub steps: Vec<StepRecord>,
    pub status: Status,
    pub final_grad_norm: f64,
}

impl MinimizeTrace {
    pub fn phis(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.initial_phi).chain(self.steps.iter().map(|s| s.phi))
    }

    pub fn is_monotone(&self) -> bool {
        let phis: Vec<f64> = self.phis().collect();
        phis.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn armijo_violations(&self) -> usize {
        self.steps.iter().filter(|s| !s.satisfies_armijo()).count()
    }

    /// CSV with columns `iter,phi,grad_norm,step,used_curvature`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iter,phi,grad_norm,step,used_curvature")?;
        for s in &self.steps {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{}",
                s.iter, s.phi, s.grad_norm, s.step, s.used_curvature as u8
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub a: Vec<f64>,
    pub phi: f64,
    pub trace: MinimizeTrace,
}

impl MinimizeOutcome {
    pub fn status(&self) -> Status {
        self.trace.status
    }

    pub fn iterations(&self) -> usize {
        self.trace.steps.len()
    }
}

pub(crate) fn check_start(a: &[f64], p: usize) -> Result<()> {
    if a.len() != p {
        return Err(Error::Dimension(format!(
            "starting point has length {}, expected {p}",
            a.len()
        )));
    }
    let norm = crate::signal::norm2(a);
    if (norm - 1.0).abs() > crate::objective::SPHERE_TOL {
        return Err(Error::NotNormalized { norm });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let r = MinimizeConfig::default().resolve(1 << 16, 64, 0.04).unwrap();
        assert!((r.lambda - 0.5 / (64.0f64 * 0.04).sqrt()).abs() < 1e-15);
        assert_eq!(r.delta, 1e-2 * r.lambda);
        let nt = 65536.0 * 0.04;
        assert!((r.eta_v - 0.1 * nt * r.lambda).abs() < 1e-9);
        assert!((r.t_max - 0.1 / nt).abs() < 1e-18);
        assert!((r.grad_tol - 1e-6 * nt).abs() < 1e-15);
    }

    #[test]
    fn bad_values_are_named() {
        let cfg = MinimizeConfig {
            momentum_eta: 1.0,
            ..MinimizeConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Invalid { field: "momentum_eta", .. })));
        let cfg = MinimizeConfig {
            t_max: Some(0.0),
            ..MinimizeConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Invalid { field: "t_max", .. })));
    }

    #[test]
    fn config_json_roundtrip() {
        let cfg = MinimizeConfig {
            lambda: Some(0.3),
            ..MinimizeConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: MinimizeConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        let partial: MinimizeConfig = serde_json::from_str(r#"{"k1": 7}"#).unwrap();
        assert_eq!(partial.k1, 7);
        assert!(serde_json::from_str::<MinimizeConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
