//! Butterworth band-pass design and zero-phase second-order-section filtering.

use rustfft::num_complex::Complex64;

use crate::error::{invalid, Result};

/// One biquad `b0 + b1 z⁻¹ + b2 z⁻² / (1 + a1 z⁻¹ + a2 z⁻²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        (self.b[0] + z1 * self.b[1] + z2 * self.b[2]) / (self.a[0] + z1 * self.a[1] + z2 * self.a[2])
    }

    /// Initial state giving the steady-state response to a unit step.
    fn step_state(&self) -> [f64; 2] {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let y = (b0 + b1 + b2) / (1.0 + a1 + a2);
        let z1 = b2 - a2 * y;
        [b1 - a1 * y + z1, z1]
    }

    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }

    /// Transposed direct form II, in place.
    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        for v in x.iter_mut() {
            let xi = *v;
            let y = b0 * xi + z[0];
            z[0] = b1 * xi - a1 * y + z[1];
            z[1] = b2 * xi - a2 * y;
            *v = y;
        }
    }
}

/// Digital Butterworth band-pass as a cascade of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPass {
    pub sections: Vec<Biquad>,
    pub low_hz: f64,
    pub high_hz: f64,
    pub fs: f64,
}

impl BandPass {
    /// Designs a band-pass from an `order`-pole low-pass prototype (the
    /// resulting filter has `2·order` poles), via the bilinear transform
    /// with pre-warped edges.
    pub fn design(order: usize, low_hz: f64, high_hz: f64, fs: f64) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return invalid(format!("sampling rate must be positive, got {fs}"));
        }
        if !(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0) {
            return invalid(format!(
                "band edges must satisfy 0 < low < high < fs/2 = {}; got low = {low_hz}, high = {high_hz}",
                fs / 2.0
            ));
        }
        if order == 0 {
            return invalid("filter order must be at least 1");
        }
        let k = 2.0 * fs;
        let w1 = k * (std::f64::consts::PI * low_hz / fs).tan();
        let w2 = k * (std::f64::consts::PI * high_hz / fs).tan();
        let w0 = (w1 * w2).sqrt();
        let bw = w2 - w1;

        let mut sections = Vec::with_capacity(order);
        for i in 0..order {
            let theta = std::f64::consts::PI * (2 * i + order + 1) as f64 / (2 * order) as f64;
            let p = Complex64::from_polar(1.0, theta);
            let pb = p * bw;
            let disc = (pb * pb - 4.0 * w0 * w0).sqrt();
            for s in [(pb + disc) / 2.0, (pb - disc) / 2.0] {
                if s.im < 0.0 {
                    continue;
                }
                let z = (k + s) / (k - s);
                sections.push(Biquad { b: [1.0, 0.0, -1.0], a: [1.0, -2.0 * z.re, z.norm_sqr()] });
            }
        }
        // prototypes with odd order have a real pole whose pair is real; the
        // loop above only keeps upper-half-plane poles, so fill the rest
        if sections.len() != order {
            return invalid(format!("odd prototype order {order} is not supported"));
        }
        let wc = 2.0 * (w0 / k).atan();
        for s in &mut sections {
            let g = s.response(wc).norm();
            for b in &mut s.b {
                *b /= g;
            }
        }
        Ok(BandPass { sections, low_hz, high_hz, fs })
    }

    /// Magnitude response at `hz`.
    pub fn gain_at(&self, hz: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * hz / self.fs;
        self.sections.iter().map(|s| s.response(w)).product::<Complex64>().norm()
    }

    /// Samples of odd extension added at each end before filtering.
    pub fn pad_len(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }

    fn run_once(&self, x: &mut [f64]) {
        let x0 = x[0];
        let mut scale = 1.0;
        for s in &self.sections {
            let [z0, z1] = s.step_state();
            s.run(x, [z0 * scale * x0, z1 * scale * x0]);
            scale *= s.dc_gain();
        }
    }

    /// Forward-backward filtering with odd edge extension.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pad = self.pad_len();
        let n = x.len();
        if n <= pad {
            return invalid(format!("signal of {n} samples is too short for zero-phase filtering (needs more than {pad})"));
        }
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        self.run_once(&mut ext);
        ext.reverse();
        self.run_once(&mut ext);
        ext.reverse();
        Ok(ext[pad..pad + n].to_vec())
    }
}
