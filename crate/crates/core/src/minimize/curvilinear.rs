use std::time::Instant;

use super::{check_start, MinimizeConfig, MinimizeOutcome, MinimizeTrace, Resolved, Status, StepRecord};
use crate::eigen::{EigenOptions, EigenPair};
use crate::error::{Error, Result};
use crate::objective::ObjectiveContext;
use crate::signal::{dot, project_sphere};

/// Curvilinear search: `a+ = P_S[a - t g - t^2 v]`, where `v` is the unit
/// eigenvector of the most negative Hessian eigenvalue when that eigenvalue
/// is below `-eta_v` (signed so `<v, g> >= 0`), and zero otherwise. The step
/// is the largest `t = t_max shrink^k` passing
/// `phi(a+) < phi(a) - (t |g|^2 + t^4 eta_v |v|^2 / 2) / 2`.
pub fn curvilinear_search(
    a0: &[f64],
    ctx: &ObjectiveContext<'_>,
    cfg: &MinimizeConfig,
    resolved: &Resolved,
) -> Result<MinimizeOutcome> {
    check_start(a0, ctx.p)?;
    let start = Instant::now();
    let mut a = a0.to_vec();
    let mut warm: Option<Vec<f64>> = None;
    let mut steps = Vec::new();
    let mut lin = ctx.linearize(&a)?;
    let initial_phi = lin.value;
    let mut status = Status::MaxIterations;

    for iter in 0..cfg.k1 {
        let g = lin.rgrad.clone();
        let gn2 = dot(&g, &g);
        let gn = gn2.sqrt();

        let curvature = if resolved.eta_v.is_finite() {
            let opts = EigenOptions {
                warm_start: warm.clone(),
                ..EigenOptions::lanczos(cfg.eig_tol)
            };
            let pair = match lin.min_eigpair(&opts) {
                Ok(pair) => Some(pair),
                Err(Error::EigenNonConvergence { best_value, best_vector, residual, iterations }) => {
                    let mut vector = best_vector;
                    if dot(&vector, &g) < 0.0 {
                        vector.iter_mut().for_each(|v| *v = -*v);
                    }
                    Some(EigenPair { value: best_value, vector, residual, iterations })
                }
                Err(e) => return Err(e),
            };
            if let Some(p) = &pair {
                warm = Some(p.vector.clone());
            }
            pair
        } else {
            None
        };
        let min_eig = curvature.as_ref().map(|p| p.value);
        let v: Option<Vec<f64>> = curvature
            .filter(|p| p.value < -resolved.eta_v)
            .map(|p| p.vector);

        if gn <= resolved.grad_tol && v.is_none() {
            status = Status::Converged;
            break;
        }

        let vn2 = v.as_ref().map_or(0.0, |v| dot(v, v));
        let mut t = resolved.t_max;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let cand: Vec<f64> = match &v {
                Some(v) => a
                    .iter()
                    .zip(&g)
                    .zip(v)
                    .map(|((x, gi), vi)| x - t * gi - t * t * vi)
                    .collect(),
                None => a.iter().zip(&g).map(|(x, gi)| x - t * gi).collect(),
            };
            let cand = project_sphere(&cand)?;
            let phi = ctx.eval_phi_rho(&cand)?.value;
            // With curvature disabled eta_v may be infinite while |v| = 0.
            let curv_term = if v.is_some() { 0.5 * t.powi(4) * resolved.eta_v * vn2 } else { 0.0 };
            let required = 0.5 * (t * gn2 + curv_term);
            if phi < lin.value - required {
                accepted = Some((cand, phi, required));
                break;
            }
            t *= cfg.armijo_shrink;
        }
        let Some((cand, phi, required)) = accepted else {
            status = Status::Stalled;
            break;
        };
        steps.push(StepRecord {
            iter,
            phi,
            phi_ref: lin.value,
            required_decrease: required,
            grad_norm: gn,
            step: t,
            used_curvature: v.is_some(),
            min_eig,
            momentum_restart: false,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
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
