//! Epoch classification metrics, sliding-window inference and onset
//! detection.

pub mod detect;

pub use detect::{detect_onsets, DetectConfig, DetectionResult, EventOutcome};

use std::collections::BTreeMap;

use serde::Serialize;

use crate::data::{ContinuousRecord, EpochSet};
use crate::error::{invalid, shape_err, Result};
use crate::model::MsnnModel;

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// Counts with rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn from_predictions(labels: &[usize], predicted: &[usize], n_classes: usize) -> Result<Self> {
        if labels.len() != predicted.len() {
            return shape_err("labels and predictions differ in length");
        }
        let mut counts = vec![vec![0; n_classes]; n_classes];
        for (&t, &p) in labels.iter().zip(predicted) {
            if t >= n_classes || p >= n_classes {
                return invalid(format!("class index out of range for {n_classes} classes"));
            }
            counts[t][p] += 1;
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.total().max(1) as f64
    }

    /// Row-normalised view; classes absent from the test set give `None`.
    pub fn normalized(&self) -> Vec<Option<Vec<f64>>> {
        self.counts
            .iter()
            .map(|row| {
                let s: usize = row.iter().sum();
                (s > 0).then(|| row.iter().map(|&c| c as f64 / s as f64).collect())
            })
            .collect()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn recall(&self) -> Vec<Option<f64>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let s: usize = row.iter().sum();
                (s > 0).then(|| row[i] as f64 / s as f64)
            })
            .collect()
    }

    pub fn precision(&self) -> Vec<Option<f64>> {
        let n = self.counts.len();
        (0..n)
            .map(|j| {
                let s: usize = (0..n).map(|i| self.counts[i][j]).sum();
                (s > 0).then(|| self.counts[j][j] as f64 / s as f64)
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let n = self.counts.len();
        let mut out = String::from("true");
        for j in 0..n {
            out.push_str(&format!(",pred_{j}"));
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            out.push_str(&i.to_string());
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub precision: Vec<Option<f64>>,
    pub recall: Vec<Option<f64>>,
    pub n: usize,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        EvalReport {
            accuracy: confusion.accuracy(),
            precision: confusion.precision(),
            recall: confusion.recall(),
            n: confusion.total(),
            confusion,
        }
    }
}

/// Eval-mode accuracy, confusion matrix and per-class precision/recall.
pub fn evaluate(model: &MsnnModel, test: &EpochSet) -> Result<EvalReport> {
    let n_o = model.config.n_classes;
    if let Some(l) = test.labels.iter().find(|&&l| l >= n_o) {
        return invalid(format!("label {l} out of range for a {n_o}-class model"));
    }
    let probs = model.predict(&test.epochs)?;
    let predicted: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    Ok(EvalReport::from_confusion(ConfusionMatrix::from_predictions(&test.labels, &predicted, n_o)?))
}

/// Windows evaluated per parallel chunk.
const TRACE_CHUNK: usize = 256;

/// `trace[i] = P(positive_class | window starting at i·stride)`.
pub fn sliding_window_trace(
    model: &MsnnModel,
    record: &ContinuousRecord,
    window: usize,
    stride: usize,
    positive_class: usize,
) -> Result<Vec<f64>> {
    if window > record.n_samples() {
        return invalid(format!("window of {window} samples is longer than the {}-sample record", record.n_samples()));
    }
    if stride == 0 {
        return invalid("stride must be at least one sample");
    }
    if window != model.config.n_times || record.n_channels() != model.config.n_channels {
        return shape_err(format!(
            "model expects [{}, {}] windows, record gives [{}, {window}]",
            model.config.n_channels,
            model.config.n_times,
            record.n_channels()
        ));
    }
    if positive_class >= model.config.n_classes {
        return invalid(format!("class {positive_class} out of range"));
    }
    let count = (record.n_samples() - window) / stride + 1;
    let mut trace = Vec::with_capacity(count);
    let mut start = 0;
    while start < count {
        let end = (start + TRACE_CHUNK).min(count);
        let wins = (start..end).map(|i| record.window(i * stride, window)).collect::<Result<Vec<_>>>()?;
        trace.extend(model.predict(&wins)?.into_iter().map(|p| p[positive_class]));
        start = end;
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
    pub n: usize,
    /// `"n=1"` when the spread is not informative.
    pub flag: Option<String>,
}

/// Mean and population std of every metric across fold reports.
pub fn aggregate_folds(reports: &[BTreeMap<String, f64>]) -> Result<BTreeMap<String, MetricSummary>> {
    if reports.is_empty() {
        return invalid("nothing to aggregate");
    }
    let mut keys: Vec<&String> = reports.iter().flat_map(|r| r.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut out = BTreeMap::new();
    for k in keys {
        let vals: Vec<f64> = reports.iter().filter_map(|r| r.get(k).copied()).collect();
        let n = vals.len();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        out.insert(k.clone(), MetricSummary { mean, std, n, flag: (n == 1).then(|| "n=1".to_string()) });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.3, 0.3]), 1);
    }

    #[test]
    fn confusion_cases() {
        let labels = vec![0, 0, 1, 1, 2];
        let perfect = ConfusionMatrix::from_predictions(&labels, &labels, 3).unwrap();
        assert_eq!(perfect.accuracy(), 1.0);
        assert_eq!(perfect.counts, vec![vec![2, 0, 0], vec![0, 2, 0], vec![0, 0, 1]]);
        let constant = ConfusionMatrix::from_predictions(&[0, 1, 0, 1], &[1, 1, 1, 1], 2).unwrap();
        assert_eq!(constant.accuracy(), 0.5);
        assert_eq!(constant.precision(), vec![None, Some(0.5)]);
        assert_eq!(constant.recall(), vec![Some(0.0), Some(1.0)]);
        let rows: Vec<usize> = constant.counts.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(rows, vec![2, 2]);
        let c = ConfusionMatrix::from_predictions(&[0, 0, 0], &[0, 1, 1], 3).unwrap();
        let n = c.normalized();
        assert!((n[0].as_ref().unwrap().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(n[1].is_none());
        assert!(ConfusionMatrix::from_predictions(&[3], &[0], 3).is_err());
    }

    #[test]
    fn aggregate_cases() {
        let r = |v: f64| BTreeMap::from([("accuracy".to_string(), v)]);
        let a = aggregate_folds(&[r(0.8), r(0.6)]).unwrap();
        assert!((a["accuracy"].mean - 0.7).abs() < 1e-12);
        assert!((a["accuracy"].std - 0.1).abs() < 1e-12);
        let same = aggregate_folds(&[r(0.5), r(0.5), r(0.5)]).unwrap();
        assert_eq!(same["accuracy"].std, 0.0);
        let one = aggregate_folds(&[r(0.9)]).unwrap();
        assert_eq!(one["accuracy"].std, 0.0);
        assert_eq!(one["accuracy"].flag.as_deref(), Some("n=1"));
        assert!(aggregate_folds(&[]).is_err());
    }
}
