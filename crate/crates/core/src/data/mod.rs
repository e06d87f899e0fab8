//! Datasets, splits, synthetic generators and the binary file formats.

pub mod io;
pub mod splits;
pub mod synth;

pub use io::{read_epochs, read_record, write_epochs, write_record};
pub use splits::{kfold, leave_one_record_out, stratified_split, Fold, RecordSplit};
pub use synth::{
    label_from_score, synth_bandpower, synth_seizure_record, synth_ssvep, BandpowerParams, ClassSpec, GroundTruth,
    SeizureParams, SsvepParams,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, MsnnError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    Mi,
    Ssvep,
    Vigilance,
    Seizure,
    Synthetic,
}

impl Paradigm {
    pub fn tag(self) -> u8 {
        match self {
            Paradigm::Mi => 0,
            Paradigm::Ssvep => 1,
            Paradigm::Vigilance => 2,
            Paradigm::Seizure => 3,
            Paradigm::Synthetic => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => Paradigm::Mi,
            1 => Paradigm::Ssvep,
            2 => Paradigm::Vigilance,
            3 => Paradigm::Seizure,
            4 => Paradigm::Synthetic,
            t => return Err(MsnnError::Format(format!("unknown paradigm tag {t}"))),
        })
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Paradigm::Mi => "mi",
            Paradigm::Ssvep => "ssvep",
            Paradigm::Vigilance => "vigilance",
            Paradigm::Seizure => "seizure",
            Paradigm::Synthetic => "synthetic",
        })
    }
}

impl FromStr for Paradigm {
    type Err = MsnnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mi" => Ok(Paradigm::Mi),
            "ssvep" => Ok(Paradigm::Ssvep),
            "vigilance" => Ok(Paradigm::Vigilance),
            "seizure" => Ok(Paradigm::Seizure),
            "synthetic" => Ok(Paradigm::Synthetic),
            other => invalid(format!("unknown paradigm {other:?}")),
        }
    }
}

/// Labelled fixed-length epochs, each a `[n_c, n_T, 1]` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    pub epochs: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub fs: f64,
    pub channel_names: Vec<String>,
    pub n_classes: usize,
    pub paradigm: Paradigm,
}

impl EpochSet {
    pub fn new(
        epochs: Vec<Tensor>,
        labels: Vec<usize>,
        fs: f64,
        channel_names: Vec<String>,
        n_classes: usize,
        paradigm: Paradigm,
    ) -> Result<Self> {
        let set = EpochSet { epochs, labels, fs, channel_names, n_classes, paradigm };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs.len() != self.labels.len() {
            return shape_err(format!("{} epochs but {} labels", self.epochs.len(), self.labels.len()));
        }
        if !(self.fs > 0.0) {
            return invalid(format!("sampling rate must be positive, got {}", self.fs));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= self.n_classes) {
            return invalid(format!("label {l} out of range for {} classes", self.n_classes));
        }
        if let Some(first) = self.epochs.first() {
            let s = first.shape();
            if s[2] != 1 || s[0] != self.channel_names.len() {
                return shape_err(format!(
                    "epochs must be [{}, t, 1], found {:?}",
                    self.channel_names.len(),
                    s
                ));
            }
            if self.epochs.iter().any(|e| e.shape() != s) {
                return shape_err("epochs have different shapes");
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }
    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }
    pub fn n_times(&self) -> usize {
        self.epochs.first().map_or(0, |e| e.time())
    }

    pub fn subset(&self, idx: &[usize]) -> EpochSet {
        EpochSet {
            epochs: idx.iter().map(|&i| self.epochs[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            ..self.without_epochs()
        }
    }

    fn without_epochs(&self) -> EpochSet {
        EpochSet {
            epochs: Vec::new(),
            labels: Vec::new(),
            fs: self.fs,
            channel_names: self.channel_names.clone(),
            n_classes: self.n_classes,
            paradigm: self.paradigm,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Copy with labels permuted by a seeded shuffle.
    pub fn with_shuffled_labels(&self, seed: u64) -> EpochSet {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut labels = self.labels.clone();
        labels.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        EpochSet { labels, ..self.clone() }
    }
}

/// Annotated event, sample indices `[onset, offset)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub onset: usize,
    pub offset: usize,
    pub label: usize,
}

/// Long multichannel recording with event annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousRecord {
    samples: Vec<Vec<f64>>,
    fs: f64,
    channel_names: Vec<String>,
    annotations: Vec<Annotation>,
}

impl ContinuousRecord {
    pub fn new(
        samples: Vec<Vec<f64>>,
        fs: f64,
        channel_names: Vec<String>,
        mut annotations: Vec<Annotation>,
    ) -> Result<Self> {
        if samples.is_empty() || channel_names.len() != samples.len() {
            return shape_err(format!("{} channel names for {} channels", channel_names.len(), samples.len()));
        }
        if !(fs > 0.0) {
            return invalid(format!("sampling rate must be positive, got {fs}"));
        }
        let n = samples[0].len();
        if samples.iter().any(|c| c.len() != n) {
            return shape_err("channels have different lengths");
        }
        annotations.sort_by_key(|a| a.onset);
        for a in &annotations {
            if a.onset >= a.offset || a.offset > n {
                return invalid(format!("annotation {a:?} outside [0, {n})"));
            }
        }
        if annotations.windows(2).any(|w| w[1].onset < w[0].offset) {
            return invalid("annotations overlap");
        }
        Ok(ContinuousRecord { samples, fs, channel_names, annotations })
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
    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }
    pub fn n_channels(&self) -> usize {
        self.samples.len()
    }
    pub fn n_samples(&self) -> usize {
        self.samples[0].len()
    }

    pub fn with_samples(&self, samples: Vec<Vec<f64>>) -> Result<Self> {
        ContinuousRecord::new(samples, self.fs, self.channel_names.clone(), self.annotations.clone())
    }

    /// `[n_c, len, 1]` slice starting at `start`.
    pub fn window(&self, start: usize, len: usize) -> Result<Tensor> {
        if start + len > self.n_samples() {
            return shape_err(format!("window [{start}, {}) exceeds {} samples", start + len, self.n_samples()));
        }
        let rows: Vec<Vec<f64>> = self.samples.iter().map(|c| c[start..start + len].to_vec()).collect();
        Tensor::from_channels(&rows)
    }

    /// Fraction of `[start, start + len)` covered by annotations.
    pub fn annotated_fraction(&self, start: usize, len: usize) -> f64 {
        let end = start + len;
        let covered: usize = self
            .annotations
            .iter()
            .map(|a| a.offset.min(end).saturating_sub(a.onset.max(start)))
            .sum();
        covered as f64 / len as f64
    }

    /// Cuts the record into windows labelled 1 when at least half of the
    /// window is annotated.
    pub fn segment(&self, window: usize, stride: usize) -> Result<EpochSet> {
        if window == 0 || stride == 0 || window > self.n_samples() {
            return invalid(format!("cannot cut {window}-sample windows every {stride} from {} samples", self.n_samples()));
        }
        let starts: Vec<usize> = (0..=(self.n_samples() - window)).step_by(stride).collect();
        let epochs = starts.iter().map(|&s| self.window(s, window)).collect::<Result<Vec<_>>>()?;
        let labels = starts.iter().map(|&s| usize::from(self.annotated_fraction(s, window) >= 0.5)).collect();
        EpochSet::new(epochs, labels, self.fs, self.channel_names.clone(), 2, Paradigm::Seizure)
    }
}
