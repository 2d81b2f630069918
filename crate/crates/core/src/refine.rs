//! Second phase: homotopy alternating minimisation. Each round solves a
//! support-reweighted Lasso for `x`, refits `a` by least squares, halves the
//! penalty and tracks the new support.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use realfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::datagen::truncated_shift_coherence;
use crate::error::{Error, Result};
use crate::shiftspace::{max_shift, truncated_shift};
use crate::signal::{dot, project_sphere, Observation, SparseMap};
use crate::spectral;
use crate::surrogate::soft_threshold;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum Lambda0Mode {
    /// `10 (p theta + log n)(mu + 1/p)`.
    Alg1,
    /// `5 kappa_I (mu + 1/p)`.
    Thm34,
    Explicit(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub lambda0_mode: Lambda0Mode,
    pub k2: usize,
    pub lasso_tol: f64,
    pub lasso_max_iters: usize,
    /// Support-density bound; defaults to `6 max(theta p, log n)`.
    pub kappa_i: Option<f64>,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            lambda0_mode: Lambda0Mode::Alg1,
            k2: 10,
            lasso_tol: 1e-9,
            lasso_max_iters: 3000,
            kappa_i: None,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k2 == 0 {
            return Err(Error::invalid("k2", "must be at least 1"));
        }
        if !(self.lasso_tol > 0.0) {
            return Err(Error::invalid("lasso_tol", "must be positive"));
        }
        if self.lasso_max_iters == 0 {
            return Err(Error::invalid("lasso_max_iters", "must be at least 1"));
        }
        if let Lambda0Mode::Explicit(v) = self.lambda0_mode {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid("lambda0", format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// What the refinement knows about the instance.
#[derive(Debug, Clone, Default)]
pub struct RefineMeta {
    pub theta: f64,
    /// Shift coherence of the true kernel, when known.
    pub mu: Option<f64>,
    /// Ground-truth kernel (length `p0`) for error reporting.
    pub a0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoOutcome {
    pub x: SparseMap,
    pub iterations: usize,
    pub converged: bool,
}

/// `min_x 1/2 ||a * x - y||^2 + lambda sum_{i not tracked} |x_i|` by FISTA
/// with gradient-based adaptive restart. Tracked entries are left unpenalised.
pub fn reweighted_lasso(
    a: &[f64],
    y: &Observation,
    lambda: f64,
    tracked: &[usize],
    tol: f64,
    max_iters: usize,
    warm: Option<&[f64]>,
) -> Result<LassoOutcome> {
    let n = y.len();
    if a.len() > n {
        return Err(Error::Dimension(format!("kernel length {} exceeds n = {n}", a.len())));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda", format!("must be non-negative, got {lambda}")));
    }
    let plan = spectral::plan(n);
    let spec_a = plan.forward(a);
    let gain: Vec<f64> = spec_a.iter().map(|c| c.norm_sqr()).collect();
    let lipschitz = gain.iter().fold(0.0f64, |m, v| m.max(*v));
    if lipschitz == 0.0 {
        return Err(Error::DegenerateProjection(Some("zero kernel".into())));
    }
    let aty: Vec<Complex64> = spectral::conj_mul(&spec_a, y.spectrum());
    let mut penalised = vec![true; n];
    for &i in tracked {
        if i >= n {
            return Err(Error::Dimension(format!("tracked index {i} outside 0..{n}")));
        }
        penalised[i] = false;
    }
    let step = 1.0 / lipschitz;
    let thresh = lambda * step;

    let mut x = match warm {
        Some(w) if w.len() == n => w.to_vec(),
        _ => vec![0.0; n],
    };
    let mut z = x.clone();
    let mut t = 1.0_f64;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let spec_z = plan.forward(&z);
        let grad_spec: Vec<Complex64> = spec_z
            .iter()
            .zip(&gain)
            .zip(&aty)
            .map(|((zk, g), b)| zk * g - b)
            .collect();
        let grad = plan.inverse(grad_spec);
        let x_new: Vec<f64> = z
            .iter()
            .zip(&grad)
            .zip(&penalised)
            .map(|((zi, gi), pen)| {
                let u = zi - step * gi;
                if *pen {
                    soft_threshold(u, thresh)
                } else {
                    u
                }
            })
            .collect();
        let mut change = 0.0_f64;
        let mut restart_test = 0.0;
        for i in 0..n {
            let d = x_new[i] - x[i];
            change = change.max(d.abs());
            restart_test += (z[i] - x_new[i]) * d;
        }
        if restart_test > 0.0 {
            t = 1.0;
            z.copy_from_slice(&x_new);
        } else {
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_new;
            for i in 0..n {
                z[i] = x_new[i] + beta * (x_new[i] - x[i]);
            }
            t = t_new;
        }
        x = x_new;
        if change <= tol {
            converged = true;
            break;
        }
    }
    Ok(LassoOutcome {
        x: SparseMap::from_dense(x),
        iterations,
        converged,
    })
}

/// Unnormalised least-squares kernel `argmin_a ||a * x - y||` over length `p`.
pub fn ls_kernel_unnormalized(x: &[f64], y: &Observation, p: usize) -> Result<Vec<f64>> {
    let n = y.len();
    if x.len() != n {
        return Err(Error::Dimension(format!("sparse map length {} != n = {n}", x.len())));
    }
    if p == 0 || p > n {
        return Err(Error::Dimension(format!("kernel length {p} must lie in 1..={n}")));
    }
    let plan = spectral::plan(n);
    let spec_x = plan.forward(x);
    let auto = plan.inverse(spec_x.iter().map(|c| Complex64::new(c.norm_sqr(), 0.0)).collect());
    let rhs = plan.inverse(spectral::conj_mul(&spec_x, y.spectrum()));
    let gram = DMatrix::from_fn(p, p, |i, j| auto[(j + n - i) % n]);
    let eig = SymmetricEigen::new(gram.clone());
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= 1e12) {
        return Err(Error::DegenerateSparseMap { condition });
    }
    let chol = gram
        .cholesky()
        .ok_or(Error::DegenerateSparseMap { condition })?;
    let sol = chol.solve(&DVector::from_column_slice(&rhs[..p]));
    Ok(sol.iter().copied().collect())
}

/// Least-squares kernel projected to the sphere.
pub fn ls_kernel(x: &[f64], y: &Observation, p: usize) -> Result<Vec<f64>> {
    project_sphere(&ls_kernel_unnormalized(x, y, p)?)
}

/// `min_{sigma, l} ||a - sigma t_l||` over signed truncated shifts of `a0`.
pub fn alignment_error(a: &[f64], a0: &[f64]) -> f64 {
    let m = max_shift(a0.len());
    let na = dot(a, a);
    (-m..=m)
        .map(|l| {
            let t = truncated_shift(a0, l);
            let c = dot(a, &t).abs();
            (na + dot(&t, &t) - 2.0 * c).max(0.0).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn lambda0(mode: Lambda0Mode, p: usize, n: usize, theta: f64, mu: f64, kappa_i: Option<f64>) -> f64 {
    let coh = mu + 1.0 / p as f64;
    let log_n = (n as f64).ln();
    match mode {
        Lambda0Mode::Alg1 => 10.0 * (p as f64 * theta + log_n) * coh,
        Lambda0Mode::Thm34 => {
            let kappa = kappa_i.unwrap_or(6.0 * (theta * p as f64).max(log_n));
            5.0 * kappa * coh
        }
        Lambda0Mode::Explicit(v) => v,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRecord {
    pub iter: usize,
    pub lambda: f64,
    pub err_a: Option<f64>,
    pub supp_size: usize,
    pub lasso_iters: usize,
    pub lasso_converged: bool,
    /// False when the Lasso returned zero and the kernel was left unchanged.
    pub kernel_updated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineTrace {
    pub lambda0: f64,
    pub mu_used: f64,
    pub initial_support: usize,
    pub initial_err: Option<f64>,
    pub records: Vec<RefineRecord>,
}

impl RefineTrace {
    /// CSV with columns `iter,lambda,err_a,supp_size,lasso_iters`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iter,lambda,err_a,supp_size,lasso_iters")?;
        for r in &self.records {
            let err = r.err_a.map_or(String::new(), |e| format!("{e:e}"));
            writeln!(w, "{},{:e},{},{},{}", r.iter, r.lambda, err, r.supp_size, r.lasso_iters)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub a: Vec<f64>,
    pub x: SparseMap,
    pub trace: RefineTrace,
}

/// Homotopy refinement from a solver output `a_bar` of length `p`.
pub fn refine_loop(a_bar: &[f64], y: &Observation, cfg: &RefineConfig, meta: &RefineMeta) -> Result<RefineOutcome> {
    cfg.validate()?;
    let p = a_bar.len();
    let n = y.len();
    let a_bar = project_sphere(a_bar)?;
    let mu = meta.mu.unwrap_or_else(|| truncated_shift_coherence(&a_bar));
    // Without a known coherence the larger Alg1 constant is not trusted.
    let mode = match (cfg.lambda0_mode, meta.mu) {
        (Lambda0Mode::Alg1, None) => Lambda0Mode::Thm34,
        (m, _) => m,
    };
    let lam0 = lambda0(mode, p, n, meta.theta, mu, cfg.kappa_i);
    let err = |a: &[f64]| meta.a0.as_deref().map(|a0| alignment_error(a, a0));

    let corr = y.correlate(&a_bar)?;
    let mut tracked: Vec<usize> = corr
        .iter()
        .enumerate()
        .filter(|(_, c)| soft_threshold(**c, lam0) != 0.0)
        .map(|(i, _)| i)
        .collect();
    let initial_support = tracked.len();
    let initial_err = err(&a_bar);

    let mut a = a_bar;
    let mut x = SparseMap::zeros(n);
    let mut lambda = lam0;
    let mut records = Vec::with_capacity(cfg.k2);
    for k in 0..cfg.k2 {
        let lasso = reweighted_lasso(
            &a,
            y,
            lambda,
            &tracked,
            cfg.lasso_tol,
            cfg.lasso_max_iters,
            Some(x.values()),
        )?;
        x = lasso.x;
        let kernel_updated = x.nnz() > 0;
        if kernel_updated {
            a = ls_kernel(x.values(), y, p)?;
        }
        records.push(RefineRecord {
            iter: k + 1,
            lambda,
            err_a: err(&a),
            supp_size: x.nnz(),
            lasso_iters: lasso.iterations,
            lasso_converged: lasso.converged,
            kernel_updated,
        });
        tracked = x.support().to_vec();
        lambda *= 0.5;
    }
    Ok(RefineOutcome {
        a,
        x,
        trace: RefineTrace {
            lambda0: lam0,
            mu_used: mu,
            initial_support,
            initial_err,
            records,
        },
    })
}

/// `||a * x - y|| / ||y||` with `a` placed at the start of the signal.
pub fn relative_residual(a: &[f64], x: &[f64], y: &Observation) -> Result<f64> {
    let recon = crate::signal::cconv(a, x)?;
    let num: f64 = recon
        .iter()
        .zip(y.values())
        .map(|(r, v)| (r - v) * (r - v))
        .sum::<f64>()
        .sqrt();
    Ok(num / y.norm_sq().sqrt().max(f64::MIN_POSITIVE))
}
