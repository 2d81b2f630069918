//! The marginalised objective `phi_rho(a) = min_x lambda rho(x) + 1/2 ||a * x - y||^2`
//! on the unit sphere, evaluated in closed form through the proximal map.
//!
//! With `K a = ccorr(y, a)` (so `K^T r = ccorr(y, r)[..p]`):
//!
//! * value  `lambda rho(x*) + 1/2 ||K a - x*||^2 - 1/2 ||K a||^2 + 1/2 ||y||^2`
//! * egrad  `-K^T x*`
//! * ehess  `-K^T diag(prox') K`
//!
//! where `x* = prox(K a)`.

use crate::eigen::{self, EigenOptions, EigenPair};
use crate::error::{Error, Result};
use crate::signal::{dot, norm2, project_tangent, Observation};
use crate::surrogate::{self, SurrogateParams};

pub(crate) const SPHERE_TOL: f64 = 1e-8;

/// Everything the objective needs besides the iterate.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveContext<'a> {
    pub y: &'a Observation,
    pub p: usize,
    pub params: SurrogateParams,
}

/// Objective value together with the intermediate vectors it was built from.
#[derive(Debug, Clone)]
pub struct EvalBundle {
    pub value: f64,
    pub corr: Vec<f64>,
    pub xstar: Vec<f64>,
}

impl<'a> ObjectiveContext<'a> {
    pub fn new(y: &'a Observation, p: usize, params: SurrogateParams) -> Result<Self> {
        params.validate()?;
        if p == 0 || p > y.len() {
            return Err(Error::Dimension(format!(
                "iterate length {p} must lie in 1..={}",
                y.len()
            )));
        }
        Ok(ObjectiveContext { y, p, params })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn check_point(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.p {
            return Err(Error::Dimension(format!(
                "iterate has length {}, expected {}",
                a.len(),
                self.p
            )));
        }
        let norm = norm2(a);
        if (norm - 1.0).abs() > SPHERE_TOL {
            return Err(Error::NotNormalized { norm });
        }
        Ok(())
    }

    pub fn eval_phi_rho(&self, a: &[f64]) -> Result<EvalBundle> {
        self.check_point(a)?;
        self.eval_phi_rho_ambient(a)
    }

    /// The same closed form at any `a` of length `p`, on the sphere or not.
    /// Euclidean derivative checks need it; solvers should not.
    pub fn eval_phi_rho_ambient(&self, a: &[f64]) -> Result<EvalBundle> {
        if a.len() != self.p {
            return Err(Error::Dimension(format!(
                "iterate has length {}, expected {}",
                a.len(),
                self.p
            )));
        }
        let corr = self.y.correlate(a)?;
        let xstar = surrogate::prox_rho(&corr, &self.params)?;
        let lambda = self.params.lambda;
        let mut value = 0.5 * self.y.norm_sq();
        for (c, x) in corr.iter().zip(&xstar) {
            let r = c - x;
            value += lambda * x.hypot(self.params.delta) + 0.5 * r * r - 0.5 * c * c;
        }
        Ok(EvalBundle { value, corr, xstar })
    }

    /// `1/2 ||y||^2 - 1/2 ||S_lambda[K a]||^2`, the exact l1 counterpart.
    pub fn eval_phi_ell1(&self, a: &[f64]) -> Result<f64> {
        self.check_point(a)?;
        let corr = self.y.correlate(a)?;
        let lambda = self.params.lambda;
        let shrunk: f64 = corr
            .iter()
            .map(|c| {
                let s = surrogate::soft_threshold(*c, lambda);
                s * s
            })
            .sum();
        Ok(0.5 * self.y.norm_sq() - 0.5 * shrunk)
    }

    /// `K^T r`: correlation of `y` with a length-`n` vector, kept on the window.
    pub(crate) fn adjoint(&self, r: &[f64]) -> Result<Vec<f64>> {
        let mut full = self.y.correlate(r)?;
        full.truncate(self.p);
        Ok(full)
    }

    pub fn egrad_phi_rho(&self, a: &[f64]) -> Result<Vec<f64>> {
        let bundle = self.eval_phi_rho(a)?;
        self.egrad_from(&bundle)
    }

    pub fn egrad_from(&self, bundle: &EvalBundle) -> Result<Vec<f64>> {
        let mut g = self.adjoint(&bundle.xstar)?;
        g.iter_mut().for_each(|v| *v = -*v);
        Ok(g)
    }

    /// Gradient of the l1 objective, `-K^T S_lambda[K a]`.
    pub fn egrad_phi_ell1(&self, a: &[f64]) -> Result<Vec<f64>> {
        self.check_point(a)?;
        let corr = self.y.correlate(a)?;
        let shrunk = surrogate::soft_threshold_vec(&corr, self.params.lambda);
        let mut g = self.adjoint(&shrunk)?;
        g.iter_mut().for_each(|v| *v = -*v);
        Ok(g)
    }

    pub fn rgrad_phi_rho(&self, a: &[f64]) -> Result<Vec<f64>> {
        let g = self.egrad_phi_rho(a)?;
        Ok(project_tangent(a, &g))
    }

    /// Value, gradients and prox curvature at `a`, reusable for many
    /// Hessian-vector products.
    pub fn linearize(&self, a: &[f64]) -> Result<Linearization<'a>> {
        let bundle = self.eval_phi_rho(a)?;
        let egrad = self.egrad_from(&bundle)?;
        let rgrad = project_tangent(a, &egrad);
        let radial = dot(&egrad, a);
        let dprox = surrogate::prox_derivative_at(&bundle.xstar, &self.params);
        Ok(Linearization {
            ctx: *self,
            a: a.to_vec(),
            value: bundle.value,
            egrad,
            rgrad,
            radial,
            dprox,
        })
    }

    pub fn rhess_vec(&self, a: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.linearize(a)?.rhess_vec(v)
    }

    /// Smallest eigenpair of the Riemannian Hessian by shifted power iteration.
    pub fn min_eigpair(&self, a: &[f64], tol: f64) -> Result<EigenPair> {
        self.linearize(a)?.min_eigpair(&EigenOptions::power(tol))
    }
}

/// Second-order information of `phi_rho` at a fixed sphere point.
#[derive(Debug, Clone)]
pub struct Linearization<'a> {
    ctx: ObjectiveContext<'a>,
    pub a: Vec<f64>,
    pub value: f64,
    pub egrad: Vec<f64>,
    pub rgrad: Vec<f64>,
    /// `<egrad, a>`, the curvature correction of the sphere.
    pub radial: f64,
    dprox: Vec<f64>,
}

impl Linearization<'_> {
    pub fn grad_norm(&self) -> f64 {
        norm2(&self.rgrad)
    }

    /// Euclidean Hessian product `-K^T D K u`.
    pub fn ehess_vec(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut ku = self.ctx.y.correlate(u)?;
        ku.iter_mut().zip(&self.dprox).for_each(|(k, d)| *k *= d);
        let mut out = self.ctx.adjoint(&ku)?;
        out.iter_mut().for_each(|v| *v = -*v);
        Ok(out)
    }

    /// Riemannian Hessian product `P(ehess P v) - <egrad, a> P v` for tangent `v`.
    pub fn rhess_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.a.len() {
            return Err(Error::Dimension(format!(
                "tangent vector has length {}, expected {}",
                v.len(),
                self.a.len()
            )));
        }
        let inner = dot(v, &self.a);
        if inner.abs() > SPHERE_TOL * norm2(v).max(1.0) {
            return Err(Error::NotTangent { inner });
        }
        Ok(self.rhess_tangent(&project_tangent(&self.a, v)))
    }

    /// Hessian product for an already-projected tangent vector.
    pub(crate) fn rhess_tangent(&self, pv: &[f64]) -> Vec<f64> {
        let hv = self
            .ehess_vec(pv)
            .expect("dimensions were checked when the point was linearised");
        let mut out = project_tangent(&self.a, &hv);
        out.iter_mut()
            .zip(pv)
            .for_each(|(o, v)| *o -= self.radial * v);
        out
    }

    pub fn min_eigpair(&self, opts: &EigenOptions) -> Result<EigenPair> {
        let mut pair = eigen::smallest_tangent_eig(&self.a, |v| self.rhess_tangent(v), opts)?;
        if dot(&pair.vector, &self.rgrad) < 0.0 {
            pair.vector.iter_mut().for_each(|v| *v = -*v);
        }
        Ok(pair)
    }
}
