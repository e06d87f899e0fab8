//! Welch power spectral density estimate.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchParams {
    /// Segment length in seconds; rounded to whole samples.
    pub window_s: f64,
    /// Overlap fraction in `[0, 1)`.
    pub overlap: f64,
    /// Subtract each segment's mean before windowing.
    pub detrend: bool,
}

impl Default for WelchParams {
    fn default() -> Self {
        WelchParams { window_s: 1.0, overlap: 0.5, detrend: false }
    }
}

impl WelchParams {
    pub fn segment_len(&self, fs: f64) -> usize {
        (fs * self.window_s).round().max(1.0) as usize
    }
}

/// One-sided frequency grid `k·fs/n` for `k = 0..=n/2`.
pub fn psd_grid(fs: f64, segment_len: usize) -> Vec<f64> {
    (0..=segment_len / 2).map(|k| k as f64 * fs / segment_len as f64).collect()
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Welch PSD with the default 1 s Hann window and 50% overlap.
pub fn welch_psd(signal: &[f64], fs: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    welch_psd_with(signal, fs, &WelchParams::default())
}

/// Density-scaled one-sided Welch PSD (units²/Hz).
pub fn welch_psd_with(signal: &[f64], fs: f64, params: &WelchParams) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(fs > 0.0) {
        return invalid(format!("sampling rate must be positive, got {fs}"));
    }
    if !(0.0..1.0).contains(&params.overlap) {
        return invalid(format!("overlap must be in [0, 1), got {}", params.overlap));
    }
    let n = params.segment_len(fs);
    if signal.len() < n {
        return invalid(format!("signal of {} samples is shorter than the {n}-sample window", signal.len()));
    }
    let step = ((n as f64) * (1.0 - params.overlap)).round().max(1.0) as usize;
    let win = hann(n);
    let win_power: f64 = win.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let bins = n / 2 + 1;
    let mut power = vec![0.0; bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut segments = 0usize;
    let mut start = 0;
    while start + n <= signal.len() {
        let seg = &signal[start..start + n];
        let mean = if params.detrend { seg.iter().sum::<f64>() / n as f64 } else { 0.0 };
        for ((b, x), w) in buf.iter_mut().zip(seg).zip(&win) {
            *b = Complex64::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p += c.norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let scale = 1.0 / (fs * win_power * segments as f64);
    for (k, p) in power.iter_mut().enumerate() {
        let one_sided = if k == 0 || (n.is_multiple_of(2) && k == n / 2) { 1.0 } else { 2.0 };
        *p *= scale * one_sided;
    }
    Ok((psd_grid(fs, n), power))
}
