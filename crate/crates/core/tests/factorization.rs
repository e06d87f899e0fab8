mod common;

use common::{calibrated, random_tensor, rng, tiny_config};
use msnn::data::{ContinuousRecord, EpochSet, Paradigm};
use msnn::eval::{evaluate, sliding_window_trace};
use msnn::interpret::{activation_patterns, export_features, lrp, FeatureStage, PatternMode, DEFAULT_EPSILON};
use msnn::layers::softmax;
use msnn::Tensor;

fn tiny_set(n: usize, seed: u64) -> EpochSet {
    let mut r = rng(seed);
    let epochs: Vec<Tensor> = (0..n).map(|_| random_tensor(&mut r, [4, 48, 1])).collect();
    let labels = (0..n).map(|i| i % 3).collect();
    let names = (0..4).map(|c| format!("ch{c}")).collect();
    EpochSet::new(epochs, labels, 16.0, names, 3, Paradigm::Synthetic).unwrap()
}

#[test]
fn exported_gap_features_reproduce_probabilities() {
    let m = calibrated(tiny_config(1), 1);
    let set = tiny_set(12, 2);
    let feats = export_features(&m, &set, FeatureStage::GapConcat).unwrap();
    assert_eq!(feats.dim(), m.config.concat_maps());
    assert_eq!(feats.rows.len(), 12);
    assert_eq!(feats.labels, set.labels);
    let probs = m.predict(&set.epochs).unwrap();
    for (row, p) in feats.rows.iter().zip(&probs) {
        let z = m.classifier.logits(row).unwrap();
        let q = softmax(&z);
        for (a, b) in q.iter().zip(p) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn per_branch_features_have_branch_width() {
    let m = calibrated(tiny_config(3), 3);
    let set = tiny_set(5, 4);
    for k in 1..=3 {
        let f = export_features(&m, &set, FeatureStage::Sst(k)).unwrap();
        assert_eq!(f.dim(), m.config.feature_maps[k]);
    }
    assert!(export_features(&m, &set, FeatureStage::Sst(4)).is_err());
}

#[test]
fn patterns_have_one_weight_per_channel() {
    let m = calibrated(tiny_config(5), 5);
    let set = tiny_set(10, 6);
    for k in 1..=3 {
        let p = activation_patterns(&m, &set, k, PatternMode::PerFilter).unwrap();
        let f = m.config.feature_maps[k];
        assert_eq!(p.len(), f * f);
        for pat in &p {
            assert_eq!(pat.raw.len(), 4);
            assert!(pat.normalized.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn lrp_conserves_on_twenty_inputs() {
    let m = calibrated(tiny_config(7), 7);
    let mut r = rng(8);
    for i in 0..20 {
        let x = random_tensor(&mut r, [4, 48, 1]);
        let map = lrp(&m, &x, i % 3, DEFAULT_EPSILON).unwrap();
        assert!(map.conservation_error() < 0.05, "input {i}: {}", map.conservation_error());
    }
}

#[test]
fn trace_at_epoch_position_equals_predict() {
    let m = calibrated(tiny_config(9), 9);
    let mut r = rng(10);
    let long = random_tensor(&mut r, [4, 200, 1]);
    let rows: Vec<Vec<f64>> = (0..4).map(|c| long.channel_series(c, 0)).collect();
    let names = (0..4).map(|c| format!("ch{c}")).collect();
    let rec = ContinuousRecord::new(rows, 16.0, names, Vec::new()).unwrap();
    let trace = sliding_window_trace(&m, &rec, 48, 1, 2).unwrap();
    assert_eq!(trace.len(), 200 - 48 + 1);
    for start in [0, 17, 100, 152] {
        let p = m.predict(&[rec.window(start, 48).unwrap()]).unwrap();
        assert!((trace[start] - p[0][2]).abs() <= 1e-12);
    }
}

#[test]
fn accuracy_is_confusion_trace_over_total() {
    let m = calibrated(tiny_config(11), 11);
    let set = tiny_set(30, 12);
    let r = evaluate(&m, &set).unwrap();
    let diag: usize = (0..3).map(|i| r.confusion.counts[i][i]).sum();
    assert_eq!(r.accuracy, diag as f64 / 30.0);
    assert_eq!(r.n, 30);
}
