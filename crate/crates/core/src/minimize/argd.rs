use std::time::Instant;

use super::sphere::{exp_map, log_map};
use super::{check_start, MinimizeConfig, MinimizeOutcome, MinimizeTrace, Resolved, Status, StepRecord};
use crate::error::Result;
use crate::objective::ObjectiveContext;
use crate::signal::dot;

fn first_step(prev: Option<f64>) -> f64 {
    prev.map_or(0.999, |t| (2.0 * t).min(0.999))
}

/// Accelerated Riemannian gradient descent.
///
/// Each iteration extrapolates `w = Exp_{a_k}(eta * m)` with momentum
/// `m = -Log_{a_k}(a_{k-1})` (the geodesic velocity carried to `a_k`), falls
/// back to `w = a_k` whenever extrapolation does not lower `phi`, then takes
/// `a_{k+1} = Exp_w(t g)` with `g = -grad phi(w)` and `t` halved from
/// `min(2 t_prev, 0.999)` until `phi(a_{k+1}) - phi(w) < -c t |g|^2`.
pub fn accelerated_rgd(
    a0: &[f64],
    ctx: &ObjectiveContext<'_>,
    cfg: &MinimizeConfig,
    resolved: &Resolved,
) -> Result<MinimizeOutcome> {
    check_start(a0, ctx.p)?;
    let start = Instant::now();
    let eta = cfg.momentum_eta;
    let mut prev = a0.to_vec();
    let mut a = a0.to_vec();
    let mut lin_a = ctx.linearize(&a)?;
    let initial_phi = lin_a.value;
    let mut t_prev = None;
    let mut steps = Vec::new();
    let mut status = Status::MaxIterations;
    let mut final_point = None;

    for iter in 0..cfg.k1 {
        let mut restarted = false;
        let lin_w = if eta > 0.0 && iter > 0 {
            match log_map(&a, &prev) {
                Ok(back) => {
                    let m: Vec<f64> = back.iter().map(|v| -eta * v).collect();
                    let w = exp_map(&a, &m);
                    let lin = ctx.linearize(&w)?;
                    if lin.value < lin_a.value {
                        lin
                    } else {
                        restarted = true;
                        lin_a.clone()
                    }
                }
                Err(_) => {
                    restarted = true;
                    lin_a.clone()
                }
            }
        } else {
            lin_a.clone()
        };

        let g: Vec<f64> = lin_w.rgrad.iter().map(|v| -v).collect();
        let gn2 = dot(&g, &g);
        let gn = gn2.sqrt();
        if gn <= resolved.grad_tol {
            status = Status::Converged;
            final_point = Some(lin_w);
            break;
        }

        let mut t = first_step(t_prev);
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let step: Vec<f64> = g.iter().map(|v| t * v).collect();
            let cand = exp_map(&lin_w.a, &step);
            let phi = ctx.eval_phi_rho(&cand)?.value;
            let required = cfg.argd_armijo * t * gn2;
            if phi - lin_w.value < -required {
                accepted = Some((cand, phi, required));
                break;
            }
            t *= cfg.armijo_shrink;
        }
        let Some((cand, phi, required)) = accepted else {
            status = Status::Stalled;
            final_point = Some(lin_w);
            break;
        };
        steps.push(StepRecord {
            iter,
            phi,
            phi_ref: lin_w.value,
            required_decrease: required,
            grad_norm: gn,
            step: t,
            used_curvature: false,
            min_eig: None,
            momentum_restart: restarted,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        t_prev = Some(t);
        prev = std::mem::replace(&mut a, cand);
        lin_a = ctx.linearize(&a)?;
    }

    let last = final_point.unwrap_or(lin_a);
    Ok(MinimizeOutcome {
        phi: last.value,
        trace: MinimizeTrace {
            initial_phi,
            steps,
            status,
            final_grad_norm: last.grad_norm(),
        },
        a: last.a,
    })
}

/// Plain Riemannian gradient descent with the same step rule as
/// [`accelerated_rgd`] but no extrapolation.
pub fn riemannian_gd(
    a0: &[f64],
    ctx: &ObjectiveContext<'_>,
    cfg: &MinimizeConfig,
    resolved: &Resolved,
) -> Result<MinimizeOutcome> {
    check_start(a0, ctx.p)?;
    let start = Instant::now();
    let mut a = a0.to_vec();
    let mut lin = ctx.linearize(&a)?;
    let initial_phi = lin.value;
    let mut t_prev = None;
    let mut steps = Vec::new();
    let mut status = Status::MaxIterations;

    for iter in 0..cfg.k1 {
        let gn2 = dot(&lin.rgrad, &lin.rgrad);
        if gn2.sqrt() <= resolved.grad_tol {
            status = Status::Converged;
            break;
        }
        let mut t = first_step(t_prev);
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let step: Vec<f64> = lin.rgrad.iter().map(|v| -t * v).collect();
            let cand = exp_map(&a, &step);
            let phi = ctx.eval_phi_rho(&cand)?.value;
            if phi - lin.value < -cfg.argd_armijo * t * gn2 {
                accepted = Some((cand, phi));
                break;
            }
            t *= cfg.armijo_shrink;
        }
        let Some((cand, phi)) = accepted else {
            status = Status::Stalled;
            break;
        };
        steps.push(StepRecord {
            iter,
            phi,
            phi_ref: lin.value,
            required_decrease: cfg.argd_armijo * t * gn2,
            grad_norm: gn2.sqrt(),
            step: t,
            used_curvature: false,
            min_eig: None,
            momentum_restart: false,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        t_prev = Some(t);
        a = cand;
        lin = ctx.linearize(&a)?;
    }

    Ok(MinimizeOutcome {
        phi: lin.value,
        trace: MinimizeTrace {
            initial_phi,
            steps,
            status,
            final_grad_norm: lin.grad_norm(),
        },
        a,
    })
}
