//! Iterative radix-2 FFT.
//!
//! Kept in-crate (rather than a SIMD-dispatching library) so that spectra are
//! bit-identical on every CPU the pipeline runs on.

use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
    rev: Vec<usize>,
}

impl Fft {
    /// # Panics
    /// If `n` is not a power of two.
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two(), "fft length {n} is not a power of two");
        let half = n / 2;
        let cos = (0..half)
            .map(|k| (2.0 * PI * k as f64 / n as f64).cos())
            .collect();
        let sin = (0..half)
            .map(|k| (2.0 * PI * k as f64 / n as f64).sin())
            .collect();
        let bits = n.trailing_zeros();
        let rev = (0..n)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        Self { n, cos, sin, rev }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform, `X[k] = sum_n x[n] exp(-2 pi i k n / N)`.
    pub fn forward(&self, re: &mut [f64], im: &mut [f64]) {
        let n = self.n;
        assert_eq!(re.len(), n);
        assert_eq!(im.len(), n);
        for i in 0..n {
            let j = self.rev[i];
            if j > i {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let stride = n / size;
            for start in (0..n).step_by(size) {
                for k in 0..half {
                    let (wr, wi) = (self.cos[k * stride], -self.sin[k * stride]);
                    let a = start + k;
                    let b = a + half;
                    let tr = re[b] * wr - im[b] * wi;
                    let ti = re[b] * wi + im[b] * wr;
                    re[b] = re[a] - tr;
                    im[b] = im[a] - ti;
                    re[a] += tr;
                    im[a] += ti;
                }
            }
            size *= 2;
        }
    }

    /// One-sided power spectrum `|X[k]|^2`, `k = 0..=N/2`, of a real frame.
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let mut re = frame.to_vec();
        let mut im = vec![0.0; self.n];
        self.forward(&mut re, &mut im);
        (0..=self.n / 2)
            .map(|k| re[k] * re[k] + im[k] * im[k])
            .collect()
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}
