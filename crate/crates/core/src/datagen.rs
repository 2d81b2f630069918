//! Seeded synthesis of planted instances `y = a0 * x0`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{cconv, ccorr, pad_to, Kernel, Observation, SparseMap};

/// Identifies the random number generator and stream layout; bump when
/// either changes so stored instances are never silently reinterpreted.
pub const PRNG_TAG: &str = "chacha8-v1";

const KERNEL_STREAM: u64 = 1;
const SPARSE_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelFamily {
    /// Dirac plus off-peak uniform noise of half-width `noise / sqrt(p0)`.
    Spiky {
        #[serde(default = "default_spiky_noise")]
        noise: f64,
    },
    /// Uniform on the sphere.
    Generic,
    /// Random combination of the lowest `bandwidth` DFT frequencies under a
    /// Hamming window. `None` means `ceil(p0 / 3)`.
    TaperedLowpass {
        #[serde(default)]
        bandwidth: Option<usize>,
    },
}

fn default_spiky_noise() -> f64 {
    0.05
}

impl KernelFamily {
    pub fn spiky() -> Self {
        KernelFamily::Spiky {
            noise: default_spiky_noise(),
        }
    }

    pub fn tapered() -> Self {
        KernelFamily::TaperedLowpass { bandwidth: None }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Spiky { .. } => "spiky",
            KernelFamily::Generic => "generic",
            KernelFamily::TaperedLowpass { .. } => "tapered_lowpass",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub p0: usize,
    pub n: usize,
    pub theta: f64,
    pub family: KernelFamily,
    pub seed: u64,
}

impl InstanceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p0 < 2 {
            return Err(Error::invalid("p0", format!("must be at least 2, got {}", self.p0)));
        }
        if self.n < self.p0 {
            return Err(Error::invalid(
                "n",
                format!("must be at least p0 = {}, got {}", self.p0, self.n),
            ));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::invalid(
                "theta",
                format!("must lie strictly between 0 and 1, got {}", self.theta),
            ));
        }
        match self.family {
            KernelFamily::Spiky { noise } if !(noise >= 0.0 && noise.is_finite()) => {
                Err(Error::invalid("noise", format!("must be non-negative, got {noise}")))
            }
            KernelFamily::TaperedLowpass { bandwidth: Some(l) } if l == 0 || l > self.p0 => {
                Err(Error::invalid(
                    "bandwidth",
                    format!("must lie in 1..={}, got {l}", self.p0),
                ))
            }
            _ => Ok(()),
        }
    }

    /// Iterate length `3 p0 - 2` used by the solvers.
    pub fn p(&self) -> usize {
        3 * self.p0 - 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedInstance {
    pub a0: Kernel,
    pub x0: SparseMap,
    pub y: Observation,
    pub spec: InstanceSpec,
}

/// Order-independent per-trial seed: SplitMix64 finalisation folded over
/// `(base, p0, theta, trial)`.
pub fn derive_seed(base: u64, p0: usize, theta: f64, trial: usize) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    [p0 as u64, theta.to_bits(), trial as u64]
        .iter()
        .fold(mix(base), |h, v| mix(h ^ v))
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn bg_from_rng(n: usize, theta: f64, rng: &mut ChaCha8Rng) -> SparseMap {
    let values = (0..n)
        .map(|_| {
            let gate = rng.random::<f64>() < theta;
            let g: f64 = StandardNormal.sample(rng);
            if gate {
                g
            } else {
                0.0
            }
        })
        .collect();
    SparseMap::from_dense(values)
}

/// Bernoulli-Gaussian map: each entry is `omega * g` with `omega ~ Bern(theta)`
/// and `g ~ N(0, 1)`.
pub fn sample_bg(n: usize, theta: f64, seed: u64) -> Result<SparseMap> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::invalid("theta", format!("must lie in [0, 1], got {theta}")));
    }
    Ok(bg_from_rng(n, theta, &mut stream(seed, SPARSE_STREAM)))
}

fn hamming(p0: usize) -> Vec<f64> {
    if p0 == 1 {
        return vec![1.0];
    }
    (0..p0)
        .map(|t| 0.54 - 0.46 * (2.0 * PI * t as f64 / (p0 - 1) as f64).cos())
        .collect()
}

pub fn sample_kernel(spec: &InstanceSpec) -> Result<Kernel> {
    spec.validate()?;
    let p0 = spec.p0;
    let mut rng = stream(spec.seed, KERNEL_STREAM);
    let raw: Vec<f64> = match spec.family {
        KernelFamily::Spiky { noise } => {
            let half_width = noise / (p0 as f64).sqrt();
            let mut v = vec![0.0; p0];
            v[0] = 1.0;
            if half_width > 0.0 {
                for x in v.iter_mut().skip(1) {
                    *x = rng.random_range(-half_width..half_width);
                }
            }
            v
        }
        KernelFamily::Generic => (0..p0).map(|_| StandardNormal.sample(&mut rng)).collect(),
        KernelFamily::TaperedLowpass { bandwidth } => {
            let l = bandwidth.unwrap_or(p0.div_ceil(3));
            let coeffs: Vec<(f64, f64)> = (0..l)
                .map(|k| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    // DC and Nyquist must be real for a conjugate-symmetric spectrum.
                    let real_only = k == 0 || 2 * k == p0;
                    (re, if real_only { 0.0 } else { im })
                })
                .collect();
            let window = hamming(p0);
            (0..p0)
                .map(|t| {
                    let mut s = 0.0;
                    for (k, (re, im)) in coeffs.iter().enumerate() {
                        let w = 2.0 * PI * (k * t) as f64 / p0 as f64;
                        let term = re * w.cos() - im * w.sin();
                        s += if k == 0 || 2 * k == p0 { term } else { 2.0 * term };
                    }
                    s * window[t]
                })
                .collect()
        }
    };
    Kernel::normalized(raw)
}

pub fn make_instance(spec: &InstanceSpec) -> Result<PlantedInstance> {
    let a0 = sample_kernel(spec)?;
    let x0 = bg_from_rng(spec.n, spec.theta, &mut stream(spec.seed, SPARSE_STREAM));
    let y = Observation::new(cconv(a0.as_slice(), x0.values())?);
    Ok(PlantedInstance {
        a0,
        x0,
        y,
        spec: *spec,
    })
}

/// `max_{l != 0} |<a, s_l[a]>|` over all cyclic shifts in length `n`.
pub fn shift_coherence(a: &[f64], n: usize) -> Result<f64> {
    let auto = ccorr(&pad_to(a, n.max(a.len())), a)?;
    Ok(auto.iter().skip(1).fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// Largest `|<t_i, t_j>|` over distinct shifts `i != j` of `a` truncated to
/// the window `[0, p0)`, where `t_i[m] = a[m - i]`.
pub fn truncated_shift_coherence(a: &[f64]) -> f64 {
    let p0 = a.len() as i64;
    if p0 < 2 {
        return 0.0;
    }
    // For lag d = j - i >= 0, <t_i, t_j> = sum_{m in R} a[m - i] a[m - j] with
    // R = [max(0, j), min(p0, i + p0)). Writing k = m - j gives products
    // a[k + d] a[k], summed over a contiguous k range, so prefix sums per lag
    // make every pair O(1).
    let mut best = 0.0_f64;
    for d in 0..(2 * p0 - 1) {
        let prefix: Vec<f64> = {
            let mut acc = vec![0.0; (p0 + 1) as usize];
            for k in 0..p0 {
                let prod = if k + d < p0 { a[(k + d) as usize] * a[k as usize] } else { 0.0 };
                acc[(k + 1) as usize] = acc[k as usize] + prod;
            }
            acc
        };
        for i in (1 - p0)..p0 {
            let j = i + d;
            if j >= p0 || d == 0 {
                continue;
            }
            let lo = 0.max(j).max(i) - j;
            let hi = p0.min(i + p0).min(j + p0) - j;
            if hi <= lo {
                continue;
            }
            let s = prefix[hi as usize] - prefix[lo as usize];
            best = best.max(s.abs());
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{dot, shift};
    use approx::assert_abs_diff_eq;

    fn spec(p0: usize, n: usize, theta: f64, family: KernelFamily, seed: u64) -> InstanceSpec {
        InstanceSpec { p0, n, theta, family, seed }
    }

    fn brute_coherence(a: &[f64], n: usize) -> f64 {
        let padded = pad_to(a, n);
        (1..n)
            .map(|l| dot(&padded, &shift(&padded, l as i64)).abs())
            .fold(0.0, f64::max)
    }

    fn brute_truncated(a: &[f64]) -> f64 {
        let p0 = a.len() as i64;
        let trunc = |i: i64| -> Vec<f64> {
            (0..p0)
                .map(|m| {
                    let k = m - i;
                    if (0..p0).contains(&k) { a[k as usize] } else { 0.0 }
                })
                .collect()
        };
        let mut best = 0.0_f64;
        for i in (1 - p0)..p0 {
            for j in (1 - p0)..p0 {
                if i != j {
                    best = best.max(dot(&trunc(i), &trunc(j)).abs());
                }
            }
        }
        best
    }

    #[test]
    fn bg_degenerate_rates() {
        let zero = sample_bg(100, 0.0, 1).unwrap();
        assert_eq!(zero.nnz(), 0);
        assert!(zero.values().iter().all(|v| *v == 0.0));
        let full = sample_bg(100, 1.0, 1).unwrap();
        assert_eq!(full.support(), (0..100).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn bg_support_concentrates() {
        let (n, theta) = (100_000, 0.01);
        let slack = 4.0 * (theta * (1.0 - theta) / n as f64).sqrt();
        for seed in 0..50 {
            let x = sample_bg(n, theta, seed).unwrap();
            let rate = x.nnz() as f64 / n as f64;
            assert!((rate - theta).abs() <= slack, "seed {seed}: rate {rate}");
        }
    }

    #[test]
    fn bg_energy_matches_rate() {
        let (n, theta) = (20_000, 0.05);
        let nt = n as f64 * theta;
        for seed in 0..20 {
            let x = sample_bg(n, theta, seed).unwrap();
            let energy = dot(x.values(), x.values());
            assert!((energy - nt).abs() <= 4.0 * (3.0 * nt).sqrt(), "seed {seed}: {energy}");
        }
    }

    #[test]
    fn spiky_without_noise_is_dirac() {
        let s = spec(8, 64, 0.1, KernelFamily::Spiky { noise: 0.0 }, 3);
        let a = sample_kernel(&s).unwrap();
        assert_eq!(a.as_slice(), Kernel::dirac(8, 0).as_slice());
        assert_eq!(shift_coherence(a.as_slice(), 64).unwrap(), 0.0);
    }

    #[test]
    fn generic_kernels_are_incoherent() {
        let p0 = 1024;
        for seed in 0..50 {
            let s = spec(p0, 4 * p0, 0.1, KernelFamily::Generic, seed);
            let a = sample_kernel(&s).unwrap();
            assert_abs_diff_eq!(a.norm(), 1.0, epsilon = 1e-12);
            let mu = shift_coherence(a.as_slice(), 4 * p0).unwrap();
            assert!(mu <= 5.0 / (p0 as f64).sqrt(), "seed {seed}: mu {mu}");
        }
    }

    #[test]
    fn tapered_is_unit_and_reproducible() {
        let s = spec(30, 128, 0.1, KernelFamily::tapered(), 9);
        let a = sample_kernel(&s).unwrap();
        let b = sample_kernel(&s).unwrap();
        assert_eq!(a, b);
        assert!(a.as_slice().iter().all(|v| v.is_finite()));
        assert_abs_diff_eq!(a.norm(), 1.0, epsilon = 1e-12);
        // Lowpass kernels are far more coherent than generic ones.
        let g = sample_kernel(&spec(30, 128, 0.1, KernelFamily::Generic, 9)).unwrap();
        assert!(shift_coherence(a.as_slice(), 128).unwrap() > shift_coherence(g.as_slice(), 128).unwrap());
    }

    #[test]
    fn coherence_hand_values() {
        let a = [0.5_f64.sqrt(), 0.5_f64.sqrt()];
        assert_abs_diff_eq!(shift_coherence(&a, 4).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(truncated_shift_coherence(&a), 0.5, epsilon = 1e-15);
        assert_eq!(truncated_shift_coherence(&[1.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn coherence_matches_brute_force() {
        for seed in 0..50 {
            let p0 = 2 + (seed as usize % 9);
            let s = spec(p0, 3 * p0, 0.1, KernelFamily::Generic, seed);
            let a = sample_kernel(&s).unwrap();
            let n = 3 * p0;
            assert_abs_diff_eq!(
                shift_coherence(a.as_slice(), n).unwrap(),
                brute_coherence(a.as_slice(), n),
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                truncated_shift_coherence(a.as_slice()),
                brute_truncated(a.as_slice()),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn instance_reconstruction_and_determinism() {
        let s = spec(16, 256, 0.1, KernelFamily::Generic, 42);
        let first = make_instance(&s).unwrap();
        let second = make_instance(&s).unwrap();
        assert_eq!(first.y.values(), second.y.values());
        let y = cconv(first.a0.as_slice(), first.x0.values()).unwrap();
        assert_eq!(first.y.values(), y.as_slice());
        let zero = cconv(first.a0.as_slice(), &vec![0.0; 256]).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn validation_names_fields() {
        let bad = spec(8, 64, 1.5, KernelFamily::Generic, 0);
        match bad.validate() {
            Err(Error::Invalid { field, .. }) => assert_eq!(field, "theta"),
            other => panic!("{other:?}"),
        }
        assert!(spec(8, 4, 0.1, KernelFamily::Generic, 0).validate().is_err());
        assert!(spec(8, 64, 0.1, KernelFamily::TaperedLowpass { bandwidth: Some(9) }, 0)
            .validate()
            .is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(7, 32, 0.05, 0);
        assert_ne!(a, derive_seed(7, 32, 0.05, 1));
        assert_ne!(a, derive_seed(7, 64, 0.05, 0));
        assert_ne!(a, derive_seed(7, 32, 0.1, 0));
        assert_ne!(a, derive_seed(8, 32, 0.05, 0));
        assert_eq!(a, derive_seed(7, 32, 0.05, 0));
    }
}
