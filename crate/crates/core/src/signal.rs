//! Length-`n` cyclic signal algebra.
//!
//! Every convolution and correlation in the crate is circular modulo `n`.
//! Short vectors (kernels of length `m <= n`) are implicitly zero-padded to
//! length `n` by placing them at indices `0..m`.
//!
//! Correlation convention: `ccorr(y, a)[i] = <s_i[a], y> = sum_j a[j] y[i + j]`,
//! which makes `ccorr(., a)` the adjoint of `cconv(a, .)`:
//! `<cconv(a, x), y> == <x, ccorr(y, a)>`.

use std::sync::OnceLock;

use realfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Project `v` onto the tangent space at unit vector `a`: `v - <v, a> a`.
pub fn project_tangent(a: &[f64], v: &[f64]) -> Vec<f64> {
    let c = dot(a, v);
    v.iter().zip(a).map(|(vi, ai)| vi - c * ai).collect()
}

/// A short dense filter. Ground-truth kernels have length `p0`; solver
/// iterates live on the larger sphere of dimension `p = 3 p0 - 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Kernel {
    values: Vec<f64>,
}

impl Kernel {
    /// Wrap raw values without normalising.
    pub fn from_vec(values: Vec<f64>) -> Self {
        Kernel { values }
    }

    /// Project onto the unit sphere.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        Ok(Kernel {
            values: project_sphere(&values)?,
        })
    }

    /// Unit basis vector `e_index` of the given length.
    pub fn dirac(len: usize, index: usize) -> Self {
        let mut values = vec![0.0; len];
        values[index] = 1.0;
        Kernel { values }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.values)
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }
}

impl AsRef<[f64]> for Kernel {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// A length-`n` vector together with its sorted support.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMap {
    values: Vec<f64>,
    support: Vec<usize>,
}

impl SparseMap {
    /// Build from dense values; the support is every exactly-nonzero entry.
    pub fn from_dense(values: Vec<f64>) -> Self {
        let support = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        SparseMap { values, support }
    }

    pub fn zeros(n: usize) -> Self {
        SparseMap {
            values: vec![0.0; n],
            support: Vec::new(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.support.len()
    }
}

/// The observed signal `y = a0 * x0` with a lazily cached spectrum.
#[derive(Debug)]
pub struct Observation {
    values: Vec<f64>,
    spectrum: OnceLock<Vec<Complex64>>,
}

impl Clone for Observation {
    fn clone(&self) -> Self {
        Observation::new(self.values.clone())
    }
}

impl PartialEq for Observation {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values
    }
}

impl Observation {
    pub fn new(values: Vec<f64>) -> Self {
        Observation {
            values,
            spectrum: OnceLock::new(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.values, &self.values)
    }

    pub(crate) fn spectrum(&self) -> &[Complex64] {
        self.spectrum
            .get_or_init(|| spectral::plan(self.values.len()).forward(&self.values))
    }

    /// Inverse transform of the cached spectrum (for round-trip checks).
    pub fn spectrum_roundtrip(&self) -> Vec<f64> {
        spectral::plan(self.len()).inverse(self.spectrum().to_vec())
    }

    /// `ccorr(y, a)` using the cached spectrum of `y`.
    pub fn correlate(&self, a: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        check_short(a.len(), n)?;
        let plan = spectral::plan(n);
        let spec_a = plan.forward(a);
        Ok(plan.inverse(spectral::conj_mul(&spec_a, self.spectrum())))
    }
}

fn check_short(m: usize, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Dimension("signal length must be positive".into()));
    }
    if m > n {
        return Err(Error::Dimension(format!(
            "short vector length {m} exceeds signal length {n}"
        )));
    }
    Ok(())
}

/// Circular convolution of the zero-padded `a` (length `m <= n`) with `x`.
pub fn cconv(a: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    check_short(a.len(), n)?;
    let plan = spectral::plan(n);
    let fa = plan.forward(a);
    let fx = plan.forward(x);
    Ok(plan.inverse(spectral::mul(&fa, &fx)))
}

/// Cross-correlation `r[i] = <s_i[a], y>` of `y` (length `n`) against the
/// zero-padded `a` (length `m <= n`).
pub fn ccorr(y: &[f64], a: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    check_short(a.len(), n)?;
    let plan = spectral::plan(n);
    let fa = plan.forward(a);
    let fy = plan.forward(y);
    Ok(plan.inverse(spectral::conj_mul(&fa, &fy)))
}

/// Cyclic shift: `shift(v, l)[j] = v[(j - l) mod n]`.
pub fn shift(v: &[f64], l: i64) -> Vec<f64> {
    let n = v.len();
    if n == 0 {
        return Vec::new();
    }
    let l = l.rem_euclid(n as i64) as usize;
    let mut out = vec![0.0; n];
    for (j, o) in out.iter_mut().enumerate() {
        *o = v[(j + n - l) % n];
    }
    out
}

/// `[0; p0 - 1] ++ w ++ [0; p0 - 1]`, of length `3 p0 - 2`.
pub fn zero_pad_window(w: &[f64]) -> Vec<f64> {
    let p0 = w.len();
    let pad = p0.saturating_sub(1);
    let mut out = vec![0.0; p0 + 2 * pad];
    out[pad..pad + p0].copy_from_slice(w);
    out
}

/// Zero-pad (or truncate) `v` to length `n`.
pub fn pad_to(v: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let m = v.len().min(n);
    out[..m].copy_from_slice(&v[..m]);
    out
}

/// `v / ||v||`.
pub fn project_sphere(v: &[f64]) -> Result<Vec<f64>> {
    let norm = norm2(v);
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateProjection(None));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}
