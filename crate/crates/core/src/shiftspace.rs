//! Shift-space coordinates of an iterate relative to the true kernel.
//!
//! A length-`p = 3 p0 - 2` iterate is read as living on the window
//! `W = {-(p0 - 1), ..., 2 p0 - 2}`, so `zero_pad_window(a0)` is the shift
//! `l = 0` of `a0` and the shifts fully inside the window are `|l| <= p0 - 1`.
//! Truncated shifts `t_l = (s_l[a0])|_W` are nonzero for `|l| <= 2 p0 - 2`;
//! they form the dictionary used by `d_alpha`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{ccorr, norm2, pad_to};
use crate::surrogate::soft_threshold;

/// Largest shift magnitude with a nonzero truncation in the window.
pub fn max_shift(p0: usize) -> i64 {
    2 * p0 as i64 - 2
}

/// Shift-indexed vector over `Z_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftVector {
    values: Vec<f64>,
}

impl ShiftVector {
    pub fn from_values(values: Vec<f64>) -> Self {
        ShiftVector { values }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, l: i64) -> f64 {
        self.values[l.rem_euclid(self.values.len() as i64) as usize]
    }

    /// Values in storage order, entry `i` holding shift `i mod n`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Shift label of storage index `i`, centred on zero.
    pub fn label(&self, i: usize) -> i64 {
        let n = self.values.len() as i64;
        let i = i as i64;
        if i <= n / 2 {
            i
        } else {
            i - n
        }
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// The `k` largest entries in magnitude as `(shift, value)`, ties broken by
    /// smaller shift magnitude.
    pub fn top_k(&self, k: usize) -> Vec<(i64, f64)> {
        let mut idx: Vec<(i64, f64)> = (0..self.values.len())
            .map(|i| (self.label(i), self.values[i]))
            .collect();
        idx.sort_by(|x, y| {
            y.1.abs()
                .total_cmp(&x.1.abs())
                .then(x.0.abs().cmp(&y.0.abs()))
                .then(x.0.cmp(&y.0))
        });
        idx.truncate(k);
        idx
    }
}

fn check_lengths(a: &[f64], a0: &[f64]) -> Result<usize> {
    let p0 = a0.len();
    if p0 < 2 || a.len() != 3 * p0 - 2 {
        return Err(Error::Dimension(format!(
            "iterate length {} must equal 3 p0 - 2 for p0 = {p0}",
            a.len()
        )));
    }
    Ok(p0)
}

/// `beta_l = <iota a, s_l[a0]>` over all cyclic shifts modulo `n`.
pub fn beta_of(a: &[f64], a0: &[f64], n: usize) -> Result<ShiftVector> {
    let p0 = check_lengths(a, a0)?;
    if n < a.len() {
        return Err(Error::Dimension(format!("n = {n} is shorter than the iterate")));
    }
    let mut placed = vec![0.0; n];
    let offset = p0 as i64 - 1;
    for (k, v) in a.iter().enumerate() {
        placed[(k as i64 - offset).rem_euclid(n as i64) as usize] += v;
    }
    Ok(ShiftVector {
        values: ccorr(&placed, a0)?,
    })
}

/// `max_l |<s_l[a0], a>|` over all relative shifts without wrap-around, with
/// the maximising shift labelled as in [`beta_of`] (`t_l` convention).
pub fn max_shift_correlation(a: &[f64], a0: &[f64]) -> Result<(i64, f64)> {
    let len = a.len() + a0.len() - 1;
    let r = ccorr(&pad_to(a, len), a0)?;
    let (mut best_i, mut best) = (0usize, 0.0f64);
    for (i, v) in r.iter().enumerate() {
        if v.abs() > best {
            best = v.abs();
            best_i = i;
        }
    }
    let shift = if best_i < a.len() {
        best_i as i64
    } else {
        best_i as i64 - len as i64
    };
    Ok((shift - (a0.len() as i64 - 1), best))
}

/// Truncated shift `t_l` of `a0` on the window, as a length-`p` vector.
pub fn truncated_shift(a0: &[f64], l: i64) -> Vec<f64> {
    let p0 = a0.len() as i64;
    let p = 3 * p0 - 2;
    (0..p)
        .map(|k| {
            let j = k - (p0 - 1) - l;
            if (0..p0).contains(&j) {
                a0[j as usize]
            } else {
                0.0
            }
        })
        .collect()
}

/// Dictionary `[t_l]` for `l = -(2 p0 - 2) ..= 2 p0 - 2`, one column per shift.
pub fn shift_dictionary(a0: &[f64]) -> DMatrix<f64> {
    let m = max_shift(a0.len());
    let p = 3 * a0.len() - 2;
    let cols: Vec<Vec<f64>> = (-m..=m).map(|l| truncated_shift(a0, l)).collect();
    DMatrix::from_fn(p, cols.len(), |i, j| cols[j][i])
}

/// Gram matrix of the truncated shifts, indexed like [`shift_dictionary`].
pub fn gram_m(a0: &[f64]) -> DMatrix<f64> {
    let a = shift_dictionary(a0);
    a.transpose() * &a
}

/// `chi[beta] = ccorr(x0, S_lambda[ccorr(x0, beta)])`.
pub fn chi(beta: &[f64], x0: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let inner = ccorr(x0, beta)?;
    let shrunk: Vec<f64> = inner.iter().map(|v| soft_threshold(*v, lambda)).collect();
    ccorr(x0, &shrunk)
}

fn pinv_solve(m: &DMatrix<f64>, rhs: &DVector<f64>, tol: f64) -> DVector<f64> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |a, b| a.max(*b));
    let u = svd.u.as_ref().expect("requested");
    let vt = svd.v_t.as_ref().expect("requested");
    let mut out = DVector::zeros(m.ncols());
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s > tol * smax.max(1.0) {
            let coef = u.column(k).dot(rhs) / s;
            out += vt.row(k).transpose() * coef;
        }
    }
    out
}

/// `d_alpha(a, S_tau) = min ||alpha_{tau^c}||` subject to `A alpha = a`, with
/// the coefficient vector indexed like [`shift_dictionary`].
///
/// Stationarity gives `alpha_c = A_c^T nu`, `A_tau^T nu = 0` and
/// `A_c A_c^T nu + A_tau alpha_tau = a`, which is solved as one symmetric
/// system by a truncated-SVD pseudo-inverse.
pub fn d_alpha(a: &[f64], a0: &[f64], tau: &[i64]) -> Result<(f64, Vec<f64>)> {
    let p0 = check_lengths(a, a0)?;
    let m = max_shift(p0);
    if let Some(bad) = tau.iter().find(|l| l.abs() > m) {
        return Err(Error::invalid("tau", format!("shift {bad} outside -{m}..={m}")));
    }
    let dict = shift_dictionary(a0);
    let p = dict.nrows();
    let in_tau: Vec<bool> = (-m..=m).map(|l| tau.contains(&l)).collect();
    let tau_cols: Vec<usize> = (0..dict.ncols()).filter(|&j| in_tau[j]).collect();
    let free_cols: Vec<usize> = (0..dict.ncols()).filter(|&j| !in_tau[j]).collect();
    let a_t = dict.select_columns(&tau_cols);
    let a_c = dict.select_columns(&free_cols);

    let k = tau_cols.len();
    let mut kkt = DMatrix::<f64>::zeros(p + k, p + k);
    kkt.view_mut((0, 0), (p, p)).copy_from(&(&a_c * a_c.transpose()));
    kkt.view_mut((0, p), (p, k)).copy_from(&a_t);
    kkt.view_mut((p, 0), (k, p)).copy_from(&a_t.transpose());
    let mut rhs = DVector::<f64>::zeros(p + k);
    rhs.rows_mut(0, p).copy_from_slice(a);
    let sol = pinv_solve(&kkt, &rhs, 1e-10);

    let nu = sol.rows(0, p).into_owned();
    let alpha_c = a_c.transpose() * &nu;
    let mut alpha = vec![0.0; dict.ncols()];
    for (i, &j) in tau_cols.iter().enumerate() {
        alpha[j] = sol[p + i];
    }
    for (i, &j) in free_cols.iter().enumerate() {
        alpha[j] = alpha_c[i];
    }
    let recon = &dict * DVector::from_column_slice(&alpha);
    let residual = recon
        .iter()
        .zip(a)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    if residual > 1e-8 * norm2(a).max(1.0) {
        return Err(Error::OutsideShiftSpan { residual });
    }
    Ok((alpha_c.norm(), alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    NegativeCurvature,
    LargeGradient,
    ConvexNearShift,
    Unclassified,
}

/// `nu_2(theta) = 1 / (4 log^2(1 / theta))`.
pub fn nu2(theta: f64) -> f64 {
    let l = (1.0 / theta).ln();
    1.0 / (4.0 * l * l)
}

pub const NU1: f64 = 0.8;

/// Region label from the two largest correlations `|beta_(0)| >= |beta_(1)|`.
pub fn classify_beta(b0: f64, b1: f64, theta: f64, lambda: f64) -> Region {
    if b0 == 0.0 {
        Region::Unclassified
    } else if b1 >= NU1 * b0 {
        Region::NegativeCurvature
    } else if b1 >= lambda * nu2(theta) {
        Region::LargeGradient
    } else {
        Region::ConvexNearShift
    }
}

/// Classify `a` by the sorted magnitudes of its correlation with all shifts.
pub fn classify_region(a: &[f64], a0: &[f64], theta: f64, lambda: f64) -> Result<(Region, f64, f64)> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::invalid("theta", format!("must lie in (0, 1), got {theta}")));
    }
    let p0 = check_lengths(a, a0)?;
    // Window correlations never wrap once n covers all nonzero shifts.
    let beta = beta_of(a, a0, a.len() + p0 - 1)?;
    let top = beta.top_k(2);
    let b0 = top.first().map_or(0.0, |x| x.1.abs());
    let b1 = top.get(1).map_or(0.0, |x| x.1.abs());
    Ok((classify_beta(b0, b1, theta, lambda), b0, b1))
}

/// Diagnostic coordinates of an iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpaceView {
    /// `(shift, beta)` for every shift with a nonzero truncation.
    pub beta: Vec<(i64, f64)>,
    pub alpha: Option<Vec<f64>>,
    pub tau: Vec<i64>,
    pub region: Region,
    pub beta_0: f64,
    pub beta_1: f64,
    pub d_alpha: Option<f64>,
}

pub fn view(a: &[f64], a0: &[f64], tau: &[i64], theta: f64, lambda: f64) -> Result<ShiftSpaceView> {
    let p0 = check_lengths(a, a0)?;
    let m = max_shift(p0);
    let beta = beta_of(a, a0, a.len() + p0 - 1)?;
    let (region, beta_0, beta_1) = classify_region(a, a0, theta, lambda)?;
    let (d, alpha) = match d_alpha(a, a0, tau) {
        Ok((d, alpha)) => (Some(d), Some(alpha)),
        Err(Error::OutsideShiftSpan { .. }) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(ShiftSpaceView {
        beta: (-m..=m).map(|l| (l, beta.get(l))).collect(),
        alpha,
        tau: tau.to_vec(),
        region,
        beta_0,
        beta_1,
        d_alpha: d,
    })
}

fn half_erf_ratio(num: f64, b: f64) -> f64 {
    if b == 0.0 {
        return if num > 0.0 {
            0.5
        } else if num < 0.0 {
            -0.5
        } else {
            0.0
        };
    }
    0.5 * libm::erf(num / (std::f64::consts::SQRT_2 * b.abs()))
}

/// `erf_b(lambda, s) = P(|b g + s| <= lambda)` for `g ~ N(0, 1)`.
pub fn oracle_erf_b(b: f64, lambda: f64, s: f64) -> f64 {
    half_erf_ratio(lambda + s, b) + half_erf_ratio(lambda - s, b)
}

/// `E[g S_lambda(b g + s)] = b (1 - erf_b(lambda, s))`.
pub fn oracle_smoothed_soft(b: f64, lambda: f64, s: f64) -> f64 {
    if b == 0.0 {
        return 0.0;
    }
    b * (1.0 - oracle_erf_b(b, lambda, s))
}

pub fn oracle_f_b(b: f64, lambda: f64, s: f64) -> f64 {
    if b == 0.0 {
        return 0.0;
    }
    let term = |u: f64| {
        let z = u / b.abs();
        z * (-0.5 * z * z).exp()
    };
    (term(lambda + s) + term(lambda - s)) / (2.0 * std::f64::consts::PI).sqrt()
}

/// `E[g^2 1{|b g + s| > lambda}] = 1 - erf_b + f_b`.
pub fn oracle_smoothed_indicator(b: f64, lambda: f64, s: f64) -> f64 {
    1.0 - oracle_erf_b(b, lambda, s) + oracle_f_b(b, lambda, s)
}

/// Summary written by the `diagnose` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub beta_top_k: Vec<(i64, f64)>,
    pub region: Region,
    pub beta_0: f64,
    pub beta_1: f64,
    pub tau: Vec<i64>,
    pub d_alpha: Option<f64>,
    pub mu: f64,
    pub truncated_mu: f64,
}

pub fn diagnose(
    a: &[f64],
    a0: &[f64],
    tau: &[i64],
    theta: f64,
    lambda: f64,
    n: usize,
    top_k: usize,
) -> Result<DiagnosticReport> {
    let p0 = check_lengths(a, a0)?;
    let v = view(a, a0, tau, theta, lambda)?;
    let beta = beta_of(a, a0, a.len() + p0 - 1)?;
    Ok(DiagnosticReport {
        beta_top_k: beta.top_k(top_k),
        region: v.region,
        beta_0: v.beta_0,
        beta_1: v.beta_1,
        tau: tau.to_vec(),
        d_alpha: v.d_alpha,
        mu: crate::datagen::shift_coherence(a0, n)?,
        truncated_mu: crate::datagen::truncated_shift_coherence(a0),
    })
}
