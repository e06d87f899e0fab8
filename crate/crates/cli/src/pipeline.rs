//! Preprocess, fit and score, shared by the commands.

use anyhow::{Context, Result};
use msnn::data::{ContinuousRecord, EpochSet, Paradigm};
use msnn::eval::detect::{detect_onsets, DetectionResult};
use msnn::eval::sliding_window_trace;
use msnn::preproc::{apply_normalization, bandpass_epochs, bandpass_series, fit_normalization, normalize_record, NormStats};
use msnn::train::{fit_split, split_train_val, TrainReport};
use msnn::MsnnModel;

use crate::config::{Preprocess, RunConfig};

pub struct Trained {
    pub model: MsnnModel,
    pub norm: NormStats,
    pub report: TrainReport,
}

pub fn filter_epochs(pre: &Preprocess, data: &EpochSet) -> Result<EpochSet> {
    Ok(match pre.bandpass_hz {
        Some((lo, hi)) => bandpass_epochs(data, lo, hi)?,
        None => data.clone(),
    })
}

pub fn filter_record(pre: &Preprocess, rec: &ContinuousRecord) -> Result<ContinuousRecord> {
    match pre.bandpass_hz {
        Some((lo, hi)) => {
            let s = rec
                .samples()
                .iter()
                .map(|x| bandpass_series(x, rec.fs(), lo, hi))
                .collect::<msnn::Result<Vec<_>>>()?;
            Ok(rec.with_samples(s)?)
        }
        None => Ok(rec.clone()),
    }
}

/// Filter, split 9:1, fit normalisation on the training part only, train.
pub fn train(data: &EpochSet, cfg: &RunConfig) -> Result<Trained> {
    train_filtered(&filter_epochs(&cfg.preprocess, data)?, cfg)
}

/// [`train`] for data that has already been filtered.
pub fn train_filtered(data: &EpochSet, cfg: &RunConfig) -> Result<Trained> {
    let (tr, va) = split_train_val(data, &cfg.train)?;
    let norm = fit_normalization(&tr)?;
    let tr = apply_normalization(&norm, &tr)?;
    let va = apply_normalization(&norm, &va)?;
    let model = MsnnModel::build(cfg.model.clone())?;
    let (model, report) = fit_split(model, &tr, &va, &cfg.train).context("training failed")?;
    Ok(Trained { model, norm, report })
}

/// Applies the filter and normalisation of a trained run to new epochs.
pub fn prepare_epochs(cfg: &RunConfig, norm: &NormStats, data: &EpochSet) -> Result<EpochSet> {
    Ok(apply_normalization(norm, &filter_epochs(&cfg.preprocess, data)?)?)
}

pub fn prepare_record(cfg: &RunConfig, norm: &NormStats, rec: &ContinuousRecord) -> Result<ContinuousRecord> {
    let f = filter_record(&cfg.preprocess, rec)?;
    let s = normalize_record(norm, f.samples())?;
    Ok(f.with_samples(s)?)
}

pub struct RecordScore {
    pub trace: Vec<f64>,
    pub detection: DetectionResult,
}

/// Sliding-window trace over a prepared record and onset detection on it.
/// Each trace value is stamped at the end of its window.
pub fn score_record(
    model: &MsnnModel,
    cfg: &RunConfig,
    rec: &ContinuousRecord,
    stride: usize,
    positive_class: usize,
) -> Result<RecordScore> {
    let window = model.config.n_times;
    let trace = sliding_window_trace(model, rec, window, stride, positive_class)?;
    let detection = detect_onsets(&trace, &cfg.detect, rec.fs(), stride, window, rec.annotations())?;
    Ok(RecordScore { trace, detection })
}

pub fn trace_csv(trace: &[f64], fs: f64, stride: usize, window: usize) -> String {
    let mut out = String::from("sample,time_s,probability\n");
    for (i, p) in trace.iter().enumerate() {
        let s = i * stride + window;
        out.push_str(&format!("{s},{},{p}\n", s as f64 / fs));
    }
    out
}

/// Windows of several records pooled into one two-class set.
pub fn pooled_windows(records: &[&ContinuousRecord], window: usize, stride: usize) -> Result<EpochSet> {
    let first = records.first().context("no training records")?;
    let mut epochs = Vec::new();
    let mut labels = Vec::new();
    for r in records {
        let s = r.segment(window, stride)?;
        epochs.extend(s.epochs);
        labels.extend(s.labels);
    }
    Ok(EpochSet::new(epochs, labels, first.fs(), first.channel_names().to_vec(), 2, Paradigm::Seizure)?)
}
