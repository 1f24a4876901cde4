use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Forward complex FFT of a fixed length with a preallocated scratch buffer.
#[derive(Clone)]
pub struct Fft {
    plan: Arc<dyn rustfft::Fft<f64>>,
    len: usize,
}

impl Fft {
    pub fn new(len: usize) -> Self {
        let plan = FftPlanner::new().plan_fft_forward(len);
        Self { plan, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Unnormalized in-place transform, `X[k] = sum_n x[n] exp(-2 pi i k n / N)`.
    pub fn process(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len, "fft length mismatch");
        self.plan.process(buf);
    }
}

impl std::fmt::Debug for Fft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft").field("len", &self.len).finish()
    }
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()).collect()
}

/// Hamming-windowed sinc low-pass, unit DC gain. `cutoff` is a fraction of
/// Nyquist in (0, 1].
pub fn sinc_lowpass(taps: usize, cutoff: f64) -> Vec<f64> {
    let mid = (taps as f64 - 1.0) / 2.0;
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let x = n as f64 - mid;
            let sinc = if x == 0.0 { 1.0 } else { (PI * cutoff * x).sin() / (PI * cutoff * x) };
            let window = if taps > 1 { 0.54 - 0.46 * (2.0 * PI * n as f64 / (taps as f64 - 1.0)).cos() } else { 1.0 };
            cutoff * sinc * window
        })
        .collect();
    let gain: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= gain);
    h
}

/// Swaps the two halves so that zero frequency lands at index `len / 2`.
pub fn fftshift<T: Copy>(x: &mut [T]) {
    let half = x.len() / 2;
    x.rotate_left(x.len() - half);
}
