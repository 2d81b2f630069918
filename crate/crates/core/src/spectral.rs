//! Cached real-to-complex FFT plans, keyed by transform length.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

pub(crate) struct Plan {
    n: usize,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

fn cache() -> &'static Mutex<HashMap<usize, Arc<Plan>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plan>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

pub(crate) fn plan(n: usize) -> Arc<Plan> {
    let mut guard = cache().lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = RealFftPlanner::<f64>::new();
            Arc::new(Plan {
                n,
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

impl Plan {
    /// Spectrum of `x` zero-padded to the plan length.
    pub(crate) fn forward(&self, x: &[f64]) -> Vec<Complex64> {
        debug_assert!(x.len() <= self.n);
        let mut input = vec![0.0; self.n];
        input[..x.len()].copy_from_slice(x);
        let mut output = self.forward.make_output_vec();
        self.forward
            .process(&mut input, &mut output)
            .expect("buffer sizes come from the plan");
        output
    }

    /// Inverse transform, normalised so that `inverse(forward(x)) == x`.
    pub(crate) fn inverse(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        // Products of real spectra are real at DC and Nyquist up to rounding;
        // the c2r transform insists on exact zeros there.
        spectrum[0].im = 0.0;
        if self.n % 2 == 0 {
            if let Some(last) = spectrum.last_mut() {
                last.im = 0.0;
            }
        }
        let mut output = self.inverse.make_output_vec();
        self.inverse
            .process(&mut spectrum, &mut output)
            .expect("buffer sizes come from the plan");
        let scale = 1.0 / self.n as f64;
        output.iter_mut().for_each(|v| *v *= scale);
        output
    }
}

/// Pointwise `conj(a) * b`.
pub(crate) fn conj_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).collect()
}

/// Pointwise `a * b`.
pub(crate) fn mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}
