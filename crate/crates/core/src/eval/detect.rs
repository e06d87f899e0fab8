//! Threshold-and-hold onset detection on a probability trace.

use serde::{Deserialize, Serialize};

use crate::data::Annotation;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub threshold: f64,
    /// The trace must stay at or above the threshold this long.
    pub min_hold_s: f64,
    /// Detections within this distance of an event belong to it.
    pub margin_s: f64,
    /// After firing, the detector re-arms once the trace drops below this
    /// level (or below the threshold, if lower).
    pub rearm_below: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig { threshold: 0.8, min_hold_s: 1.0, margin_s: 5.0, rearm_below: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventOutcome {
    pub onset: usize,
    pub offset: usize,
    pub detected: bool,
    /// Seconds from the annotated onset to the first associated detection,
    /// clipped at zero.
    pub latency_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionResult {
    /// Record sample index at which each detection fired.
    pub detections: Vec<usize>,
    pub events: Vec<EventOutcome>,
    pub false_detections: usize,
    pub mean_latency_s: Option<f64>,
    pub detected_events: usize,
    pub config: DetectConfig,
}

/// Scans `trace` (one value per window, `stride` samples apart) for
/// sustained threshold crossings and scores them against `annotations`.
///
/// `time_offset` maps trace index `i` to record sample `i·stride +
/// time_offset`; pass the window length to time-stamp each value at the
/// end of its window.
pub fn detect_onsets(
    trace: &[f64],
    cfg: &DetectConfig,
    fs: f64,
    stride: usize,
    time_offset: usize,
    annotations: &[Annotation],
) -> Result<DetectionResult> {
    if !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
        return invalid(format!("threshold must be in (0, 1), got {}", cfg.threshold));
    }
    if stride == 0 || !(fs > 0.0) {
        return invalid("stride and sampling rate must be positive");
    }
    let hold = (cfg.min_hold_s * fs).round() as usize;
    let rearm = cfg.rearm_below.min(cfg.threshold);
    let mut detections = Vec::new();
    let mut armed = true;
    let mut run_start: Option<usize> = None;
    for (i, &p) in trace.iter().enumerate() {
        if p < rearm {
            armed = true;
        }
        if p >= cfg.threshold {
            let s = *run_start.get_or_insert(i);
            if armed && (i - s) * stride >= hold {
                detections.push(i * stride + time_offset);
                armed = false;
            }
        } else {
            run_start = None;
        }
    }

    let margin = (cfg.margin_s * fs).round() as usize;
    let mut events: Vec<EventOutcome> = annotations
        .iter()
        .map(|a| EventOutcome { onset: a.onset, offset: a.offset, detected: false, latency_s: None })
        .collect();
    let mut false_detections = 0;
    for &d in &detections {
        let owner = events
            .iter_mut()
            .find(|e| d + margin >= e.onset && d <= e.offset + margin);
        match owner {
            Some(e) => {
                if !e.detected {
                    e.detected = true;
                    e.latency_s = Some(d.saturating_sub(e.onset) as f64 / fs);
                }
            }
            None => false_detections += 1,
        }
    }
    let lat: Vec<f64> = events.iter().filter_map(|e| e.latency_s).collect();
    Ok(DetectionResult {
        detected_events: lat.len(),
        mean_latency_s: (!lat.is_empty()).then(|| lat.iter().sum::<f64>() / lat.len() as f64),
        detections,
        events,
        false_detections,
        config: *cfg,
    })
}
