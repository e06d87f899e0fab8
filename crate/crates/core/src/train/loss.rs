//! Cross-entropy and the L1-L2 weight penalty.

use crate::error::{shape_err, Result};
use crate::model::{ModelGrads, MsnnModel};

/// Floor applied to probabilities before the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

pub fn one_hot(labels: &[usize], n_classes: usize) -> Vec<Vec<f64>> {
    labels
        .iter()
        .map(|&l| {
            let mut row = vec![0.0; n_classes];
            row[l] = 1.0;
            row
        })
        .collect()
}

/// `−Σ_b Σ_j y_bj · ln max(ŷ_bj, 1e−12)`, summed over the batch.
pub fn cross_entropy(targets: &[Vec<f64>], probs: &[Vec<f64>]) -> Result<f64> {
    if targets.len() != probs.len() || targets.iter().zip(probs).any(|(y, p)| y.len() != p.len()) {
        return shape_err("targets and probabilities differ in shape");
    }
    Ok(-targets
        .iter()
        .zip(probs)
        .map(|(y, p)| y.iter().zip(p).map(|(a, b)| if *a == 0.0 { 0.0 } else { a * b.max(LOG_FLOOR).ln() }).sum::<f64>())
        .sum::<f64>())
}

/// Cross-entropy against integer labels.
pub fn cross_entropy_labels(labels: &[usize], probs: &[Vec<f64>]) -> Result<f64> {
    let n = probs.first().map_or(0, |p| p.len());
    if labels.iter().any(|&l| l >= n) {
        return shape_err("label exceeds the number of classes");
    }
    cross_entropy(&one_hot(labels, n), probs)
}

/// Gradient of the summed cross-entropy with respect to the logits.
pub fn cross_entropy_logit_grad(labels: &[usize], probs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    probs
        .iter()
        .zip(labels)
        .map(|(p, &l)| {
            let mut g = p.clone();
            g[l] -= 1.0;
            g
        })
        .collect()
}

/// `l1·Σ|w| + l2·Σw²` over regularised weights only.
pub fn l1_l2_penalty(model: &MsnnModel, l1: f64, l2: f64) -> f64 {
    model
        .params()
        .iter()
        .filter(|p| p.kind.regularized())
        .flat_map(|p| p.data.iter())
        .map(|w| l1 * w.abs() + l2 * w * w)
        .sum()
}

/// Gradient of [`l1_l2_penalty`]; the subgradient of `|w|` at zero is zero.
pub fn l1_l2_grad(model: &MsnnModel, l1: f64, l2: f64) -> ModelGrads {
    ModelGrads {
        grads: model
            .params()
            .iter()
            .map(|p| {
                if p.kind.regularized() {
                    p.data.iter().map(|&w| l1 * sign(w) + 2.0 * l2 * w).collect()
                } else {
                    vec![0.0; p.len()]
                }
            })
            .collect(),
    }
}

fn sign(w: f64) -> f64 {
    if w > 0.0 {
        1.0
    } else if w < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::ParamKind;
    use crate::model::MsnnConfig;

    #[test]
    fn ce_cases() {
        let y = one_hot(&[1], 2);
        assert_eq!(cross_entropy(&y, &[vec![0.0, 1.0]]).unwrap(), 0.0);
        let u = cross_entropy(&one_hot(&[2], 4), &[vec![0.25; 4]]).unwrap();
        assert!((u - 4f64.ln()).abs() < 1e-15);
        assert!((u - 1.3863).abs() < 1e-4);
        let p = vec![0.3, 0.7];
        let one = cross_entropy_labels(&[0], std::slice::from_ref(&p)).unwrap();
        let two = cross_entropy_labels(&[0, 0], &[p.clone(), p]).unwrap();
        assert_eq!(two, 2.0 * one);
        assert!(cross_entropy(&one_hot(&[0], 2), &[vec![1.0, 0.0, 0.0]]).is_err());
        // floor keeps the loss finite
        assert!(cross_entropy_labels(&[0], &[vec![0.0, 1.0]]).unwrap().is_finite());
    }

    fn tiny() -> MsnnModel {
        let c = MsnnConfig {
            n_channels: 2,
            n_times: 32,
            sampling_rate: 16,
            n_classes: 2,
            kernel_sizes: vec![8, 4],
            feature_maps: vec![2, 4, 4],
            ..MsnnConfig::motor_imagery(2, 32, 16, 2)
        };
        MsnnModel::build(c).unwrap()
    }

    fn zero_weights(m: &mut MsnnModel) {
        for p in m.params_mut() {
            if p.kind == ParamKind::Weight {
                p.data.fill(0.0);
            }
        }
    }

    #[test]
    fn penalty_cases() {
        let mut m = tiny();
        zero_weights(&mut m);
        assert_eq!(l1_l2_penalty(&m, 0.01, 0.001), 0.0);
        assert!(l1_l2_grad(&m, 0.01, 0.001).grads.iter().flatten().all(|v| *v == 0.0));
        m.classifier.weight.data[0] = 2.0;
        assert!((l1_l2_penalty(&m, 0.01, 0.001) - 0.024).abs() < 1e-15);
        // biases and BN parameters are not penalised
        m.classifier.bias.data[0] = 5.0;
        m.stem.bn.gamma.data[0] = 3.0;
        assert!((l1_l2_penalty(&m, 0.01, 0.001) - 0.024).abs() < 1e-15);
    }

    #[test]
    fn penalty_gradient_matches_differences() {
        let mut m = tiny();
        zero_weights(&mut m);
        for w0 in [1.5, -1.5] {
            m.classifier.weight.data[3] = w0;
            let g = l1_l2_grad(&m, 0.01, 0.001);
            let slot = m.params().iter().position(|p| p.name == "classifier.weight").unwrap();
            let h = 1e-6;
            m.classifier.weight.data[3] = w0 + h;
            let up = l1_l2_penalty(&m, 0.01, 0.001);
            m.classifier.weight.data[3] = w0 - h;
            let down = l1_l2_penalty(&m, 0.01, 0.001);
            m.classifier.weight.data[3] = w0;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - g.grads[slot][3]).abs() < 1e-6);
        }
    }
}
