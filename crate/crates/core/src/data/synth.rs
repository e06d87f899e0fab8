//! Seeded synthetic generators with recorded ground truth.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Annotation, ContinuousRecord, EpochSet, Paradigm};
use crate::error::{invalid, Result};
use crate::preproc::BandPass;
use crate::tensor::Tensor;

/// AR(1) coefficient of the background; power falls off with frequency
/// up to roughly fs/4.
const BACKGROUND_POLE: f64 = 0.7;

/// Unit-variance red background: white noise through a leaky integrator,
/// started from the stationary distribution.
fn background(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let gain = (1.0 - BACKGROUND_POLE * BACKGROUND_POLE).sqrt();
    let mut y: f64 = StandardNormal.sample(rng);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(y);
        let w: f64 = StandardNormal.sample(rng);
        y = BACKGROUND_POLE * y + gain * w;
    }
    out
}

fn channel_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("ch{i}")).collect()
}

/// One class of the band-power task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub freq_hz: f64,
    /// Per-trial frequency is drawn uniformly from `freq_hz ± jitter_hz/2`.
    pub jitter_hz: f64,
    pub channels: Vec<usize>,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandpowerParams {
    pub n_trials: usize,
    pub n_channels: usize,
    pub n_times: usize,
    pub fs: f64,
    pub classes: Vec<ClassSpec>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl BandpowerParams {
    /// Two classes: 10 Hz on channels 3–4 versus 22 Hz on channels 5–6.
    pub fn two_class(n_trials: usize, n_channels: usize, n_times: usize, fs: f64, seed: u64) -> Self {
        BandpowerParams {
            n_trials,
            n_channels,
            n_times,
            fs,
            classes: vec![
                ClassSpec { freq_hz: 10.0, jitter_hz: 1.0, channels: vec![3, 4], amplitude: 1.0 },
                ClassSpec { freq_hz: 22.0, jitter_hz: 1.0, channels: vec![5, 6], amplitude: 1.0 },
            ],
            noise_sigma: 1.0,
            seed,
        }
    }
}

/// Metadata describing where the class information lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub generator: String,
    pub class_freqs_hz: Vec<f64>,
    pub informative_channels: Vec<Vec<usize>>,
    pub seed: u64,
}

/// Trials of red background plus a class-specific oscillation with random
/// phase on that class's channels. Labels cycle `0, 1, …, n_o − 1`.
pub fn synth_bandpower(p: &BandpowerParams) -> Result<(EpochSet, GroundTruth)> {
    if p.classes.len() < 2 {
        return invalid("need at least two classes");
    }
    if p.n_channels == 0 || p.n_times == 0 || !(p.fs > 0.0) {
        return invalid("channels, samples and sampling rate must be positive");
    }
    for (i, c) in p.classes.iter().enumerate() {
        if !(c.freq_hz > 0.0 && c.freq_hz + c.jitter_hz / 2.0 < p.fs / 2.0) || c.jitter_hz < 0.0 {
            return invalid(format!("class {i}: band {} ± {} Hz not below fs/2 = {}", c.freq_hz, c.jitter_hz / 2.0, p.fs / 2.0));
        }
        if let Some(ch) = c.channels.iter().find(|&&ch| ch >= p.n_channels) {
            return invalid(format!("class {i}: channel {ch} does not exist"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let n_o = p.classes.len();
    let mut epochs = Vec::with_capacity(p.n_trials);
    let mut labels = Vec::with_capacity(p.n_trials);
    for trial in 0..p.n_trials {
        let label = trial % n_o;
        let class = &p.classes[label];
        let mut rows: Vec<Vec<f64>> = (0..p.n_channels)
            .map(|_| {
                let mut b = background(&mut rng, p.n_times);
                b.iter_mut().for_each(|v| *v *= p.noise_sigma);
                b
            })
            .collect();
        let f = class.freq_hz + class.jitter_hz * (rng.random::<f64>() - 0.5);
        let phase = rng.random::<f64>() * 2.0 * PI;
        for &ch in &class.channels {
            for (t, v) in rows[ch].iter_mut().enumerate() {
                *v += class.amplitude * (2.0 * PI * f * t as f64 / p.fs + phase).sin();
            }
        }
        epochs.push(Tensor::from_channels(&rows)?);
        labels.push(label);
    }
    let set = EpochSet::new(epochs, labels, p.fs, channel_names(p.n_channels), n_o, Paradigm::Synthetic)?;
    let truth = GroundTruth {
        generator: "bandpower".into(),
        class_freqs_hz: p.classes.iter().map(|c| c.freq_hz).collect(),
        informative_channels: p.classes.iter().map(|c| c.channels.clone()).collect(),
        seed: p.seed,
    };
    Ok((set, truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsvepParams {
    pub n_trials: usize,
    pub n_channels: usize,
    pub n_times: usize,
    pub fs: f64,
    pub freqs_hz: Vec<f64>,
    /// Number of harmonics including the fundamental; harmonic h has amplitude 1/h.
    pub harmonics: usize,
    /// Fundamental amplitude over background standard deviation; infinite means noise-free.
    pub snr: f64,
    pub active_channels: Vec<usize>,
    pub seed: u64,
}

impl SsvepParams {
    pub const STIMULUS_HZ: [f64; 4] = [5.45, 6.67, 8.57, 12.0];

    pub fn four_class(n_trials: usize, n_channels: usize, n_times: usize, fs: f64, seed: u64) -> Self {
        let first = n_channels.saturating_sub(3);
        SsvepParams {
            n_trials,
            n_channels,
            n_times,
            fs,
            freqs_hz: Self::STIMULUS_HZ.to_vec(),
            harmonics: 2,
            snr: 1.0,
            active_channels: (first..n_channels).collect(),
            seed,
        }
    }
}

/// Class `c` is a sinusoid at `freqs_hz[c]` plus harmonics on the active
/// channels, over red background noise.
pub fn synth_ssvep(p: &SsvepParams) -> Result<(EpochSet, GroundTruth)> {
    if p.freqs_hz.len() < 2 || p.harmonics == 0 {
        return invalid("need at least two stimulus frequencies and one harmonic");
    }
    if let Some(f) = p.freqs_hz.iter().find(|&&f| !(f > 0.0 && f < p.fs / 2.0)) {
        return invalid(format!("stimulus {f} Hz not in (0, fs/2)"));
    }
    if let Some(ch) = p.active_channels.iter().find(|&&ch| ch >= p.n_channels) {
        return invalid(format!("channel {ch} does not exist"));
    }
    if !(p.snr > 0.0) {
        return invalid(format!("snr must be positive, got {}", p.snr));
    }
    let sigma = if p.snr.is_infinite() { 0.0 } else { 1.0 / p.snr };
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let n_o = p.freqs_hz.len();
    let mut epochs = Vec::with_capacity(p.n_trials);
    let mut labels = Vec::with_capacity(p.n_trials);
    for trial in 0..p.n_trials {
        let label = trial % n_o;
        let f = p.freqs_hz[label];
        let mut rows: Vec<Vec<f64>> = (0..p.n_channels)
            .map(|_| {
                if sigma == 0.0 {
                    return vec![0.0; p.n_times];
                }
                let mut b = background(&mut rng, p.n_times);
                b.iter_mut().for_each(|v| *v *= sigma);
                b
            })
            .collect();
        let phase = rng.random::<f64>() * 2.0 * PI;
        for &ch in &p.active_channels {
            for (t, v) in rows[ch].iter_mut().enumerate() {
                let w = 2.0 * PI * f * t as f64 / p.fs;
                for h in 1..=p.harmonics {
                    *v += (h as f64 * (w + phase)).sin() / h as f64;
                }
            }
        }
        epochs.push(Tensor::from_channels(&rows)?);
        labels.push(label);
    }
    let set = EpochSet::new(epochs, labels, p.fs, channel_names(p.n_channels), n_o, Paradigm::Ssvep)?;
    let truth = GroundTruth {
        generator: "ssvep".into(),
        class_freqs_hz: p.freqs_hz.clone(),
        informative_channels: vec![p.active_channels.clone(); n_o],
        seed: p.seed,
    };
    Ok((set, truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeizureParams {
    pub duration_s: f64,
    pub n_events: usize,
    pub event_s: f64,
    /// Pass band of the burst activity.
    pub burst_band_hz: (f64, f64),
    /// Burst RMS over background RMS.
    pub amplitude_ratio: f64,
    /// Minimum spacing between events and from the record edges.
    pub min_gap_s: f64,
    pub n_channels: usize,
    pub fs: f64,
    pub seed: u64,
}

impl SeizureParams {
    pub fn new(duration_s: f64, n_events: usize, event_s: f64, n_channels: usize, fs: f64, seed: u64) -> Self {
        SeizureParams {
            duration_s,
            n_events,
            event_s,
            burst_band_hz: (3.0, 8.0),
            amplitude_ratio: 3.0,
            min_gap_s: 20.0,
            n_channels,
            fs,
            seed,
        }
    }
}

/// Background noise with non-overlapping annotated rhythmic bursts.
pub fn synth_seizure_record(p: &SeizureParams) -> Result<ContinuousRecord> {
    let n = (p.duration_s * p.fs).round() as usize;
    let ev = (p.event_s * p.fs).round() as usize;
    let gap = (p.min_gap_s * p.fs).round() as usize;
    if n == 0 || ev == 0 || p.n_channels == 0 {
        return invalid("duration, event length and channel count must be positive");
    }
    let needed = p.n_events * ev + (p.n_events + 1) * gap;
    if needed > n {
        return invalid(format!(
            "cannot place {} events of {} s with {} s gaps in {} s",
            p.n_events, p.event_s, p.min_gap_s, p.duration_s
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    // spread the slack over the n_events + 1 gaps at random cut points
    let slack = n - needed;
    let mut cuts: Vec<usize> = (0..p.n_events).map(|_| rng.random_range(0..=slack)).collect();
    cuts.sort_unstable();
    let mut annotations = Vec::with_capacity(p.n_events);
    let mut prev_cut = 0;
    let mut cursor = 0;
    for &c in &cuts {
        cursor += gap + (c - prev_cut);
        annotations.push(Annotation { onset: cursor, offset: cursor + ev, label: 1 });
        cursor += ev;
        prev_cut = c;
    }

    let mut rows: Vec<Vec<f64>> = (0..p.n_channels).map(|_| background(&mut rng, n)).collect();
    let bp = BandPass::design(4, p.burst_band_hz.0, p.burst_band_hz.1, p.fs)?;
    for a in &annotations {
        for row in rows.iter_mut() {
            let white: Vec<f64> = (0..ev).map(|_| StandardNormal.sample(&mut rng)).collect();
            let burst = bp.filtfilt(&white)?;
            let rms = (burst.iter().map(|v| v * v).sum::<f64>() / ev as f64).sqrt();
            let g = p.amplitude_ratio / rms;
            for (v, b) in row[a.onset..a.offset].iter_mut().zip(&burst) {
                *v += g * b;
            }
        }
    }
    ContinuousRecord::new(rows, p.fs, channel_names(p.n_channels), annotations)
}

/// Maps continuous drowsiness scores to `0` (awake), `1` (tired) or `2`
/// (drowsy); a score equal to a threshold takes the higher class.
pub fn label_from_score(scores: &[f64], thresholds: (f64, f64)) -> Result<Vec<usize>> {
    let (t1, t2) = thresholds;
    if !(t1 < t2) {
        return invalid(format!("thresholds must satisfy t1 < t2, got ({t1}, {t2})"));
    }
    Ok(scores
        .iter()
        .map(|&s| if s < t1 { 0 } else if s < t2 { 1 } else { 2 })
        .collect())
}
