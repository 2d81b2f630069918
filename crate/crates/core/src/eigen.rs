//! Smallest eigenpair of a symmetric operator restricted to the tangent
//! space `{v : <v, a> = 0}` of the sphere at `a`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::signal::{dot, norm2, project_tangent};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenMethod {
    /// Power iteration on `sigma I - H`, `sigma` slightly above `||H||`.
    ShiftedPower,
    /// Restarted Lanczos with full reorthogonalisation.
    Lanczos,
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    pub method: EigenMethod,
    /// Converged once `||H v - mu v|| <= tol * max(1, |mu|)`.
    pub tol: f64,
    /// Cap on operator applications.
    pub max_iters: usize,
    /// Power steps used to bound `||H||` before shifting.
    pub norm_steps: usize,
    /// Lanczos subspace size before a restart.
    pub krylov_dim: usize,
    pub warm_start: Option<Vec<f64>>,
    pub seed: u64,
}

impl EigenOptions {
    pub fn power(tol: f64) -> Self {
        EigenOptions {
            method: EigenMethod::ShiftedPower,
            tol,
            max_iters: 500,
            norm_steps: 20,
            krylov_dim: 40,
            warm_start: None,
            seed: 0x5eed,
        }
    }

    pub fn lanczos(tol: f64) -> Self {
        EigenOptions {
            method: EigenMethod::Lanczos,
            max_iters: 2000,
            ..EigenOptions::power(tol)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    /// Operator applications spent.
    pub iterations: usize,
}

fn start_vector(a: &[f64], opts: &EigenOptions) -> Result<Vec<f64>> {
    if let Some(w) = &opts.warm_start {
        if w.len() == a.len() {
            let v = project_tangent(a, w);
            let nv = norm2(&v);
            if nv > 1e-12 {
                return Ok(v.iter().map(|x| x / nv).collect());
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..8 {
        let raw: Vec<f64> = (0..a.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let v = project_tangent(a, &raw);
        let nv = norm2(&v);
        if nv > 1e-12 {
            return Ok(v.iter().map(|x| x / nv).collect());
        }
    }
    Err(Error::DegenerateProjection(Some("empty tangent space".into())))
}

fn normalize_in_place(v: &mut [f64]) -> f64 {
    let nv = norm2(v);
    if nv > 0.0 {
        v.iter_mut().for_each(|x| *x /= nv);
    }
    nv
}

fn residual_of(hv: &[f64], v: &[f64], mu: f64) -> f64 {
    hv.iter()
        .zip(v)
        .map(|(h, x)| (h - mu * x) * (h - mu * x))
        .sum::<f64>()
        .sqrt()
}

/// Smallest eigenpair of `op` on the tangent space at unit vector `a`.
///
/// `op` must map tangent vectors to tangent vectors symmetrically.
pub fn smallest_tangent_eig<F>(a: &[f64], op: F, opts: &EigenOptions) -> Result<EigenPair>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if a.len() < 2 {
        return Err(Error::Dimension("tangent space is trivial for p < 2".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    let apply = |v: &[f64]| project_tangent(a, &op(v));
    match opts.method {
        EigenMethod::ShiftedPower => shifted_power(a, apply, opts),
        EigenMethod::Lanczos => lanczos(a, apply, opts),
    }
}

fn shifted_power<F>(a: &[f64], apply: F, opts: &EigenOptions) -> Result<EigenPair>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut v = start_vector(a, opts)?;
    let mut estimate = 0.0_f64;
    let mut probe = v.clone();
    for _ in 0..opts.norm_steps {
        let mut hp = apply(&probe);
        let nh = normalize_in_place(&mut hp);
        estimate = estimate.max(nh);
        if nh == 0.0 {
            break;
        }
        probe = hp;
    }
    let sigma = 1.01 * estimate;
    let mut used = opts.norm_steps;

    let mut best = (f64::INFINITY, 0.0, v.clone());
    while used < opts.norm_steps + opts.max_iters {
        let hv = apply(&v);
        used += 1;
        let mu = dot(&v, &hv);
        let res = residual_of(&hv, &v, mu);
        if res < best.0 {
            best = (res, mu, v.clone());
        }
        if res <= opts.tol * mu.abs().max(1.0) {
            return Ok(EigenPair {
                value: mu,
                vector: v,
                residual: res,
                iterations: used,
            });
        }
        let mut next: Vec<f64> = v.iter().zip(&hv).map(|(x, h)| sigma * x - h).collect();
        next = project_tangent(a, &next);
        if normalize_in_place(&mut next) == 0.0 {
            // v is an exact eigenvector with eigenvalue sigma; nothing left to do.
            break;
        }
        v = next;
    }
    Err(Error::EigenNonConvergence {
        iterations: used,
        residual: best.0,
        best_value: best.1,
        best_vector: best.2,
    })
}

fn lanczos<F>(a: &[f64], apply: F, opts: &EigenOptions) -> Result<EigenPair>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let dim = (a.len() - 1).min(opts.krylov_dim.max(2));
    let mut start = start_vector(a, opts)?;
    let mut used = 0usize;
    let mut best = (f64::INFINITY, 0.0, start.clone());

    while used < opts.max_iters {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
        let mut alphas = Vec::with_capacity(dim);
        let mut betas: Vec<f64> = Vec::with_capacity(dim);
        let mut q = start.clone();
        let scale_hint = norm2(&q).max(1.0);
        loop {
            let mut w = apply(&q);
            used += 1;
            let alpha = dot(&q, &w);
            basis.push(q.clone());
            alphas.push(alpha);
            // Full reorthogonalisation, applied twice for stability.
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(b, &w);
                    w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
                let c = dot(a, &w);
                w.iter_mut().zip(a).for_each(|(x, y)| *x -= c * y);
            }
            let beta = norm2(&w);
            let scale = alphas.iter().fold(scale_hint, |m, x| m.max(x.abs()));
            if basis.len() >= dim || beta <= 1e-13 * scale || used >= opts.max_iters {
                break;
            }
            betas.push(beta);
            q = w.iter().map(|x| x / beta).collect();
        }

        let m = basis.len();
        let mut t = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let (k, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
        let mut ritz = vec![0.0; a.len()];
        for (j, b) in basis.iter().enumerate() {
            let c = eig.eigenvectors[(j, k)];
            ritz.iter_mut().zip(b).for_each(|(r, x)| *r += c * x);
        }
        ritz = project_tangent(a, &ritz);
        normalize_in_place(&mut ritz);
        let hr = apply(&ritz);
        used += 1;
        let mu = dot(&ritz, &hr);
        let res = residual_of(&hr, &ritz, mu);
        if res < best.0 {
            best = (res, mu, ritz.clone());
        }
        if res <= opts.tol * mu.abs().max(1.0) {
            return Ok(EigenPair {
                value: mu,
                vector: ritz,
                residual: res,
                iterations: used,
            });
        }
        start = ritz;
    }
    Err(Error::EigenNonConvergence {
        iterations: used,
        residual: best.0,
        best_value: best.1,
        best_vector: best.2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_symmetric(p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::<f64>::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        (&b + b.transpose()) * 0.5
    }

    /// Dense oracle: eigen-decompose `P H P` on an orthonormal tangent basis.
    fn dense_tangent_min(h: &DMatrix<f64>, a: &[f64]) -> f64 {
        let p = a.len();
        let av = DMatrix::from_column_slice(p, 1, a);
        let proj = DMatrix::<f64>::identity(p, p) - &av * av.transpose();
        let eig = SymmetricEigen::new(&proj * h * &proj);
        // One eigenvalue is the spurious zero along `a`; drop the one whose
        // eigenvector is closest to `a`.
        let mut vals: Vec<(f64, f64)> = (0..p)
            .map(|i| {
                let col = eig.eigenvectors.column(i);
                let overlap = col.iter().zip(a).map(|(x, y)| x * y).sum::<f64>().abs();
                (eig.eigenvalues[i], overlap)
            })
            .collect();
        vals.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap());
        vals.remove(0);
        vals.iter().map(|x| x.0).fold(f64::INFINITY, f64::min)
    }

    fn check(method: EigenMethod) {
        for seed in 0..5 {
            let p = 12;
            let h = random_symmetric(p, seed);
            let mut a = vec![0.0; p];
            a[seed as usize % p] = 1.0;
            a[(seed as usize + 3) % p] = 1.0;
            normalize_in_place(&mut a);
            let op = |v: &[f64]| {
                let hv = &h * DMatrix::from_column_slice(p, 1, v);
                hv.iter().copied().collect::<Vec<f64>>()
            };
            let mut opts = EigenOptions::power(1e-9);
            opts.method = method;
            opts.max_iters = 100_000;
            let pair = smallest_tangent_eig(&a, op, &opts).unwrap();
            let expect = dense_tangent_min(&h, &a);
            assert_abs_diff_eq!(pair.value, expect, epsilon = 1e-7);
            assert!(dot(&pair.vector, &a).abs() <= 1e-10);
            assert_abs_diff_eq!(norm2(&pair.vector), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn power_matches_dense_oracle() {
        check(EigenMethod::ShiftedPower);
    }

    #[test]
    fn lanczos_matches_dense_oracle() {
        check(EigenMethod::Lanczos);
    }

    #[test]
    fn cap_reports_best_iterate() {
        let h = random_symmetric(10, 9);
        let a: Vec<f64> = {
            let mut v = vec![1.0; 10];
            normalize_in_place(&mut v);
            v
        };
        let op = |v: &[f64]| {
            (&h * DMatrix::from_column_slice(10, 1, v))
                .iter()
                .copied()
                .collect::<Vec<f64>>()
        };
        let mut opts = EigenOptions::power(1e-14);
        opts.max_iters = 3;
        match smallest_tangent_eig(&a, op, &opts) {
            Err(Error::EigenNonConvergence { best_vector, .. }) => {
                assert_eq!(best_vector.len(), 10);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
