//! Signal preprocessing applied before training and, with frozen
//! statistics, at test time.

pub mod filter;
pub mod welch;

pub use filter::{BandPass, Biquad};
pub use welch::{hann, psd_grid, welch_psd, welch_psd_with, WelchParams};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::EpochSet;
use crate::error::{invalid, shape_err, MsnnError, Result};
use crate::tensor::Tensor;

/// Prototype order of the band-pass filter.
pub const BANDPASS_ORDER: usize = 4;

/// A continuous multichannel recording with its montage.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    samples: Vec<Vec<f64>>,
    fs: f64,
    channel_names: Vec<String>,
    /// Channel name → neighbour names used by the large Laplacian.
    montage: BTreeMap<String, Vec<String>>,
}

impl RawRecord {
    pub fn new(
        samples: Vec<Vec<f64>>,
        fs: f64,
        channel_names: Vec<String>,
        montage: BTreeMap<String, Vec<String>>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return invalid("a record needs at least one channel");
        }
        if !(fs > 0.0 && fs.is_finite()) {
            return invalid(format!("sampling rate must be positive, got {fs}"));
        }
        if channel_names.len() != samples.len() {
            return shape_err(format!("{} channel names for {} channels", channel_names.len(), samples.len()));
        }
        let n = samples[0].len();
        if samples.iter().any(|c| c.len() != n) {
            return shape_err("channels have different lengths");
        }
        for (name, row) in channel_names.iter().zip(&samples) {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(MsnnError::NonFinite(format!("channel {name}")));
            }
        }
        for (c, nbrs) in &montage {
            for nb in std::iter::once(c).chain(nbrs) {
                if !channel_names.contains(nb) {
                    return invalid(format!("montage names unknown channel {nb:?}"));
                }
            }
        }
        Ok(RawRecord { samples, fs, channel_names, montage })
    }

    /// Record without montage, with channels named `ch0, ch1, …`.
    pub fn from_samples(samples: Vec<Vec<f64>>, fs: f64) -> Result<Self> {
        let names = (0..samples.len()).map(|i| format!("ch{i}")).collect();
        Self::new(samples, fs, names, BTreeMap::new())
    }

    pub fn with_montage(mut self, montage: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let r = RawRecord::new(std::mem::take(&mut self.samples), self.fs, self.channel_names, montage)?;
        Ok(r)
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }
    pub fn fs(&self) -> f64 {
        self.fs
    }
    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }
    pub fn montage(&self) -> &BTreeMap<String, Vec<String>> {
        &self.montage
    }
    pub fn n_channels(&self) -> usize {
        self.samples.len()
    }
    pub fn n_samples(&self) -> usize {
        self.samples[0].len()
    }

    fn with_samples(&self, samples: Vec<Vec<f64>>) -> Self {
        RawRecord { samples, ..self.clone() }
    }
}

/// Zero-phase Butterworth band-pass of every channel.
pub fn bandpass(record: &RawRecord, low_hz: f64, high_hz: f64) -> Result<RawRecord> {
    let bp = BandPass::design(BANDPASS_ORDER, low_hz, high_hz, record.fs)?;
    let out = crate::par::map(&record.samples, |c| bp.filtfilt(c)).into_iter().collect::<Result<Vec<_>>>()?;
    Ok(record.with_samples(out))
}

/// Band-pass for a single series.
pub fn bandpass_series(x: &[f64], fs: f64, low_hz: f64, high_hz: f64) -> Result<Vec<f64>> {
    BandPass::design(BANDPASS_ORDER, low_hz, high_hz, fs)?.filtfilt(x)
}

/// Band-pass applied to every channel of every epoch.
pub fn bandpass_epochs(set: &EpochSet, low_hz: f64, high_hz: f64) -> Result<EpochSet> {
    let bp = BandPass::design(BANDPASS_ORDER, low_hz, high_hz, set.fs)?;
    let epochs = crate::par::map(&set.epochs, |e| {
        let rows = (0..e.channels())
            .map(|c| bp.filtfilt(&e.channel_series(c, 0)))
            .collect::<Result<Vec<_>>>()?;
        Tensor::from_channels(&rows)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(EpochSet { epochs, ..set.clone() })
}

/// Subtracts from each channel the mean of its montage neighbours.
/// Channels without neighbours pass through.
pub fn large_laplacian(record: &RawRecord) -> Result<RawRecord> {
    if record.montage.is_empty() {
        return invalid("large Laplacian needs a montage; the neighbour map is empty");
    }
    let index = |name: &str| record.channel_names.iter().position(|c| c == name).unwrap();
    let mut out = Vec::with_capacity(record.n_channels());
    for (c, name) in record.channel_names.iter().enumerate() {
        let row = &record.samples[c];
        match record.montage.get(name).filter(|n| !n.is_empty()) {
            None => out.push(row.clone()),
            Some(nbrs) => {
                let idx: Vec<usize> = nbrs.iter().map(|n| index(n)).collect();
                let inv = 1.0 / idx.len() as f64;
                out.push(
                    (0..row.len())
                        .map(|t| row[t] - inv * idx.iter().map(|&j| record.samples[j][t]).sum::<f64>())
                        .collect(),
                );
            }
        }
    }
    Ok(record.with_samples(out))
}

/// Shifts every channel of `epoch` by its baseline mean.
pub fn baseline_correct(epoch: &Tensor, baseline_mean: &[f64]) -> Result<Tensor> {
    if baseline_mean.len() != epoch.channels() {
        return shape_err(format!(
            "baseline has {} values for {} channels",
            baseline_mean.len(),
            epoch.channels()
        ));
    }
    let mut out = epoch.clone();
    let row = epoch.time() * epoch.maps();
    for (chunk, b) in out.data_mut().chunks_exact_mut(row).zip(baseline_mean) {
        for v in chunk {
            *v -= b;
        }
    }
    Ok(out)
}

/// Per-channel mean of a reference segment (e.g. a fixation period).
pub fn channel_means(segment: &Tensor) -> Vec<f64> {
    let row = segment.time() * segment.maps();
    segment.data().chunks_exact(row.max(1)).map(|c| c.iter().sum::<f64>() / row as f64).collect()
}

/// Channel-wise mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn n_channels(&self) -> usize {
        self.mean.len()
    }
}

/// Pools each channel over all trials and time points of the training set.
pub fn fit_normalization(train: &EpochSet) -> Result<NormStats> {
    if train.epochs.is_empty() {
        return invalid("cannot fit normalisation on an empty set");
    }
    let n_c = train.n_channels();
    let n_t = train.n_times();
    let count = (train.epochs.len() * n_t) as f64;
    let mut mean = vec![0.0; n_c];
    for e in &train.epochs {
        for (c, m) in mean.iter_mut().enumerate() {
            *m += e.data()[c * n_t..(c + 1) * n_t].iter().sum::<f64>();
        }
    }
    for m in &mut mean {
        *m /= count;
    }
    let mut var = vec![0.0; n_c];
    for e in &train.epochs {
        for (c, v) in var.iter_mut().enumerate() {
            *v += e.data()[c * n_t..(c + 1) * n_t].iter().map(|x| (x - mean[c]).powi(2)).sum::<f64>();
        }
    }
    let mut std = Vec::with_capacity(n_c);
    for (c, v) in var.iter().enumerate() {
        let s = (v / count).sqrt();
        if !(s > 0.0) {
            return Err(MsnnError::ZeroVariance(train.channel_names[c].clone()));
        }
        std.push(s);
    }
    Ok(NormStats { mean, std })
}

fn affine_epochs(set: &EpochSet, stats: &NormStats, f: impl Fn(f64, f64, f64) -> f64 + Sync + Send) -> Result<EpochSet> {
    if stats.n_channels() != set.n_channels() || stats.std.len() != stats.mean.len() {
        return shape_err(format!(
            "normalisation stats cover {} channels, data has {}",
            stats.n_channels(),
            set.n_channels()
        ));
    }
    let n_t = set.n_times();
    let epochs = crate::par::map(&set.epochs, |e| {
        let mut out = e.clone();
        for (c, chunk) in out.data_mut().chunks_exact_mut(n_t).enumerate() {
            for v in chunk {
                *v = f(*v, stats.mean[c], stats.std[c]);
            }
        }
        out
    });
    Ok(EpochSet { epochs, ..set.clone() })
}

/// `(x − mean) / std` per channel.
pub fn apply_normalization(stats: &NormStats, epochs: &EpochSet) -> Result<EpochSet> {
    affine_epochs(epochs, stats, |x, m, s| (x - m) / s)
}

/// Inverse of [`apply_normalization`].
pub fn invert_normalization(stats: &NormStats, epochs: &EpochSet) -> Result<EpochSet> {
    affine_epochs(epochs, stats, |x, m, s| x * s + m)
}

/// Normalises a continuous record with stats fitted on epochs.
pub fn normalize_record(stats: &NormStats, samples: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if samples.len() != stats.n_channels() {
        return shape_err(format!("stats cover {} channels, record has {}", stats.n_channels(), samples.len()));
    }
    Ok(samples
        .iter()
        .enumerate()
        .map(|(c, row)| row.iter().map(|x| (x - stats.mean[c]) / stats.std[c]).collect())
        .collect())
}

/// Drops `round(fs·head_s)` samples from the start and enough from the end
/// that `round(fs·(head_s + tail_s))` are removed in total.
pub fn crop_epoch(epoch: &Tensor, drop_head_s: f64, drop_tail_s: f64, fs: f64) -> Result<Tensor> {
    if drop_head_s < 0.0 || drop_tail_s < 0.0 {
        return invalid("crop durations must be non-negative");
    }
    let head = (fs * drop_head_s).round() as usize;
    let total = (fs * (drop_head_s + drop_tail_s)).round() as usize;
    if total >= epoch.time() {
        return invalid(format!(
            "cropping {total} of {} samples leaves nothing",
            epoch.time()
        ));
    }
    epoch.slice_time(head, epoch.time() - total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Paradigm;
    use proptest::prelude::*;

    fn montage(pairs: &[(&str, &[&str])]) -> BTreeMap<String, Vec<String>> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect())).collect()
    }

    fn sine(f: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin()).collect()
    }

    /// Least-squares amplitude of a known-frequency sinusoid.
    fn fit_amplitude(y: &[f64], f: f64, fs: f64, offset: usize) -> f64 {
        let (mut ss, mut cc, mut sc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (i, v) in y.iter().enumerate() {
            let w = 2.0 * std::f64::consts::PI * f * (i + offset) as f64 / fs;
            let (s, c) = w.sin_cos();
            ss += s * s;
            cc += c * c;
            sc += s * c;
            ys += v * s;
            yc += v * c;
        }
        let det = ss * cc - sc * sc;
        let a = (ys * cc - yc * sc) / det;
        let b = (yc * ss - ys * sc) / det;
        (a * a + b * b).sqrt()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn passband_sinusoid_is_preserved() {
        let fs = 200.0;
        let x = sine(10.0, fs, 2000);
        let y = bandpass_series(&x, fs, 4.0, 40.0).unwrap();
        let trim = 100;
        let a = fit_amplitude(&y[trim..2000 - trim], 10.0, fs, trim);
        assert!((0.95..=1.05).contains(&a), "{a}");
    }

    #[test]
    fn dc_is_removed() {
        let y = bandpass_series(&[5.0; 2000], 200.0, 4.0, 40.0).unwrap();
        let m = y[100..1900].iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(m < 0.05, "{m}");
    }

    #[test]
    fn stopband_attenuation() {
        let fs = 200.0;
        let x = sine(60.0, fs, 2000);
        let y = bandpass_series(&x, fs, 0.5, 40.0).unwrap();
        let db = 20.0 * (rms(&y[100..1900]) / rms(&x[100..1900])).log10();
        assert!(db <= -20.0, "{db}");
    }

    #[test]
    fn record_bandpass_keeps_shape() {
        let r = RawRecord::from_samples(vec![sine(10.0, 200.0, 400), vec![0.0; 400]], 200.0).unwrap();
        let y = bandpass(&r, 4.0, 40.0).unwrap();
        assert_eq!(y.n_channels(), 2);
        assert_eq!(y.n_samples(), 400);
        assert!(bandpass(&r, 50.0, 40.0).is_err());
    }

    #[test]
    fn laplacian_cases() {
        let names: Vec<String> = ["A", "B", "C", "D"].iter().map(|s| s.to_string()).collect();
        let r = RawRecord::new(
            vec![vec![2.0; 3], vec![5.0; 3], vec![1.0; 3], vec![3.0; 3]],
            100.0,
            names.clone(),
            montage(&[("A", &["C", "D"]), ("B", &["C"])]),
        )
        .unwrap();
        let y = large_laplacian(&r).unwrap();
        assert_eq!(y.samples()[0], vec![0.0; 3]);
        assert_eq!(y.samples()[1], vec![4.0; 3]);
        assert_eq!(y.samples()[2], vec![1.0; 3]);

        let flat = RawRecord::new(vec![vec![3.0; 5]; 4], 100.0, names.clone(), montage(&[("A", &["B", "C", "D"]), ("B", &["A"]), ("C", &["B", "D"])]))
            .unwrap();
        let y = large_laplacian(&flat).unwrap();
        for c in 0..3 {
            assert!(y.samples()[c].iter().all(|v| *v == 0.0));
        }
        let bare = RawRecord::new(vec![vec![1.0]; 4], 100.0, names, BTreeMap::new()).unwrap();
        assert!(large_laplacian(&bare).is_err());
    }

    #[test]
    fn montage_must_name_real_channels() {
        let r = RawRecord::new(vec![vec![0.0]], 10.0, vec!["A".into()], montage(&[("A", &["Z"])]));
        assert!(r.is_err());
    }

    #[test]
    fn baseline_cases() {
        let e = Tensor::from_channels(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(baseline_correct(&e, &[2.0]).unwrap().data(), &[-1.0, 0.0, 1.0]);
        assert_eq!(baseline_correct(&e, &[0.0]).unwrap(), e);
        let c = Tensor::filled(2, 4, 1, 2.0);
        assert!(baseline_correct(&c, &[2.0, 2.0]).unwrap().data().iter().all(|v| *v == 0.0));
        assert!(baseline_correct(&c, &[2.0]).is_err());
    }

    fn set(rows: Vec<Vec<Vec<f64>>>) -> EpochSet {
        let epochs: Vec<Tensor> = rows.iter().map(|r| Tensor::from_channels(r).unwrap()).collect();
        let n_c = epochs[0].channels();
        EpochSet::new(epochs.clone(), vec![0; epochs.len()], 100.0, (0..n_c).map(|i| format!("c{i}")).collect(), 2, Paradigm::Synthetic)
            .unwrap()
    }

    #[test]
    fn normalization_simple() {
        let s = set(vec![vec![vec![0.0, 2.0]]]);
        let st = fit_normalization(&s).unwrap();
        assert_eq!(st.mean, vec![1.0]);
        assert_eq!(st.std, vec![1.0]);
        assert_eq!(apply_normalization(&st, &s).unwrap().epochs[0].data(), &[-1.0, 1.0]);
    }

    #[test]
    fn zero_variance_names_channel() {
        let s = set(vec![vec![vec![0.0, 2.0], vec![1.0, 1.0]]]);
        match fit_normalization(&s) {
            Err(MsnnError::ZeroVariance(name)) => assert_eq!(name, "c1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn crop_cases() {
        let e = Tensor::zeros(2, 1536, 1);
        assert_eq!(crop_epoch(&e, 0.5, 0.5, 512.0).unwrap().time(), 1024);
        let e = Tensor::from_channels(&[(0..10).map(|v| v as f64).collect()]).unwrap();
        assert_eq!(crop_epoch(&e, 0.0, 0.0, 10.0).unwrap(), e);
        assert_eq!(crop_epoch(&e, 0.2, 0.1, 10.0).unwrap().data(), &[2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert!(crop_epoch(&Tensor::zeros(1, 100, 1), 0.6, 0.6, 100.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn bandpass_is_linear(
            x in prop::collection::vec(-10.0f64..10.0, 200),
            y in prop::collection::vec(-10.0f64..10.0, 200),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let fx = bandpass_series(&x, 100.0, 4.0, 30.0).unwrap();
            let fy = bandpass_series(&y, 100.0, 4.0, 30.0).unwrap();
            let fm = bandpass_series(&mix, 100.0, 4.0, 30.0).unwrap();
            for i in 0..200 {
                prop_assert!((fm[i] - (a * fx[i] + b * fy[i])).abs() < 1e-9);
            }
        }

        #[test]
        fn bandpass_is_deterministic(x in prop::collection::vec(-10.0f64..10.0, 100)) {
            let a = bandpass_series(&x, 100.0, 4.0, 30.0).unwrap();
            let b = bandpass_series(&x, 100.0, 4.0, 30.0).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn welch_is_nonnegative(x in prop::collection::vec(-1e3f64..1e3, 64..400)) {
            let (_, p) = welch_psd(&x, 64.0).unwrap();
            prop_assert!(p.iter().all(|v| *v >= 0.0));
        }

        #[test]
        fn normalization_round_trip(
            rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3 * 8), 2..6),
        ) {
            let s = set(rows.iter().map(|r| r.chunks(8).map(|c| c.to_vec()).collect()).collect());
            if let Ok(st) = fit_normalization(&s) {
                let n = apply_normalization(&st, &s).unwrap();
                let back = invert_normalization(&st, &n).unwrap();
                for (p, q) in s.epochs.iter().zip(&back.epochs) {
                    prop_assert!(p.max_abs_diff(q) < 1e-10);
                }
                let st2 = fit_normalization(&n).unwrap();
                for c in 0..3 {
                    prop_assert!(st2.mean[c].abs() < 1e-10);
                    prop_assert!((st2.std[c] - 1.0).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn laplacian_constant_is_zero(v in -100.0f64..100.0) {
            let names: Vec<String> = (0..3).map(|i| format!("c{i}")).collect();
            let r = RawRecord::new(vec![vec![v; 10]; 3], 10.0, names, montage(&[("c0", &["c1", "c2"]), ("c1", &["c0"]), ("c2", &["c0", "c1"])])).unwrap();
            let y = large_laplacian(&r).unwrap();
            prop_assert!(y.samples().iter().flatten().all(|x| x.abs() < 1e-12));
        }
    }
}
