use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::ObjectiveContext;
use crate::signal::{project_sphere, zero_pad_window};

/// Which objective's gradient seeds the initial point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitObjective {
    Rho,
    Ell1,
}

/// One generalised power step from a zero-padded window of `y`:
/// `a0 = -P_S[grad phi(P_S[0; y[off..off + p0]; 0])]`.
pub fn init_a0(
    ctx: &ObjectiveContext<'_>,
    p0: usize,
    window_offset: usize,
    objective: InitObjective,
) -> Result<Vec<f64>> {
    let y = ctx.y.values();
    if 3 * p0 - 2 != ctx.p {
        return Err(Error::Dimension(format!(
            "iterate length {} does not match 3 p0 - 2 for p0 = {p0}",
            ctx.p
        )));
    }
    if window_offset + p0 > y.len() {
        return Err(Error::invalid(
            "window_offset",
            format!("window {window_offset}..{} exceeds n = {}", window_offset + p0, y.len()),
        ));
    }
    let window = zero_pad_window(&y[window_offset..window_offset + p0]);
    let start = project_sphere(&window).map_err(|_| {
        Error::DegenerateProjection(Some(format!(
            "window at offset {window_offset} of y is zero; try another offset"
        )))
    })?;
    let grad = match objective {
        InitObjective::Rho => ctx.egrad_phi_rho(&start)?,
        InitObjective::Ell1 => ctx.egrad_phi_ell1(&start)?,
    };
    let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
    project_sphere(&neg).map_err(|_| {
        Error::DegenerateProjection(Some(format!(
            "gradient vanished at window offset {window_offset}; try another offset"
        )))
    })
}
