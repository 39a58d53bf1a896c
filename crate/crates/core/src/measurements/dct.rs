//! Orthonormal DCT-II and its inverse (DCT-III).
//!
//! `X[k] = s_k · Σ_i x[i]·cos(π(2i+1)k / 2n)` with `s_0 = √(1/n)` and
//! `s_k = √(2/n)` otherwise, so the transform matrix is orthogonal.
//!
//! The fast path is Makhoul's single complex FFT of length `n` over the
//! even/odd-reordered input, followed by a quarter-sample twiddle.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Reusable transform plan for one length.
pub struct Dct {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `e^{-iπk/(2n)}`
    twiddles: Vec<Complex64>,
    scale0: f64,
    scale: f64,
}

impl std::fmt::Debug for Dct {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dct").field("n", &self.n).finish()
    }
}

impl Dct {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "DCT length must be positive");
        let mut planner = FftPlanner::new();
        let twiddles = (0..n)
            .map(|k| Complex64::from_polar(1.0, -PI * k as f64 / (2.0 * n as f64)))
            .collect();
        Dct {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            twiddles,
            scale0: (1.0 / n as f64).sqrt(),
            scale: (2.0 / n as f64).sqrt(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn scale_of(&self, k: usize) -> f64 {
        if k == 0 {
            self.scale0
        } else {
            self.scale
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(x.len(), n, "DCT input length");
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n.div_ceil(2) {
            v[i].re = x[2 * i];
        }
        for i in 0..n / 2 {
            v[n - 1 - i].re = x[2 * i + 1];
        }
        self.forward.process(&mut v);
        v.iter()
            .zip(&self.twiddles)
            .enumerate()
            .map(|(k, (vk, tw))| self.scale_of(k) * (vk * tw).re)
            .collect()
    }

    pub fn inverse(&self, c: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(c.len(), n, "DCT input length");
        // unnormalized cosine sums C[k], with C[n] = 0
        let raw = |k: usize| if k < n { c[k] / self.scale_of(k) } else { 0.0 };
        let mut v: Vec<Complex64> = (0..n)
            .map(|k| self.twiddles[k].conj() * Complex64::new(raw(k), -raw(n - k)))
            .collect();
        self.inverse.process(&mut v);
        let norm = 1.0 / n as f64;
        let mut x = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            x[2 * i] = v[i].re * norm;
        }
        for i in 0..n / 2 {
            x[2 * i + 1] = v[n - 1 - i].re * norm;
        }
        x
    }
}

/// Orthonormal DCT-II of `x`.
pub fn dct_forward(x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    Dct::new(x.len()).forward(x)
}

/// Inverse of [`dct_forward`].
pub fn dct_inverse(c: &[f64]) -> Vec<f64> {
    if c.is_empty() {
        return Vec::new();
    }
    Dct::new(c.len()).inverse(c)
}

/// `O(n²)` evaluation of the defining sum.
pub fn dct_forward_direct(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let s = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            s * x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * (2 * i + 1) as f64 * k as f64 / (2.0 * n as f64)).cos())
                .sum::<f64>()
        })
        .collect()
}

/// `O(n²)` evaluation of the inverse (the transposed sum).
pub fn dct_inverse_direct(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    (0..n)
        .map(|i| {
            c.iter()
                .enumerate()
                .map(|(k, v)| {
                    let s = if k == 0 {
                        (1.0 / n as f64).sqrt()
                    } else {
                        (2.0 / n as f64).sqrt()
                    };
                    s * v * (PI * (2 * i + 1) as f64 * k as f64 / (2.0 * n as f64)).cos()
                })
                .sum()
        })
        .collect()
}
