//! Central-difference verification of the analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::loss::{cross_entropy_labels, cross_entropy_logit_grad};
use crate::error::{invalid, Result};
use crate::model::{Mode, MsnnModel};
use crate::tensor::Tensor;

/// Denominator floor for the relative error of near-zero gradients.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct CoordCheck {
    pub slot: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords: Vec<CoordCheck>,
}

impl GradCheckReport {
    pub fn slots(&self) -> Vec<&str> {
        let mut s: Vec<&str> = self.coords.iter().map(|c| c.slot.as_str()).collect();
        s.dedup();
        s
    }
}

fn loss(model: &MsnnModel, batch: &[Tensor], labels: &[usize], mode: Mode) -> Result<f64> {
    let tape = model.forward_tape(batch, mode)?;
    cross_entropy_labels(labels, &tape.probs)
}

/// Compares analytic and central-difference gradients of the summed
/// cross-entropy on at least `min_coords` coordinates, sampling from every
/// trainable array.
///
/// `mode` selects batch statistics (`Train`, needs a batch of 2 or more) or
/// running statistics (`Eval`) for both sides alike.
pub fn grad_check(
    model: &MsnnModel,
    batch: &[Tensor],
    labels: &[usize],
    mode: Mode,
    h: f64,
    min_coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if mode == Mode::Train && batch.len() < 2 {
        return invalid("a training-mode gradient check needs at least two samples");
    }
    let mut tape = model.forward_tape(batch, mode)?;
    let dz = cross_entropy_logit_grad(labels, &tape.probs);
    let (grads, _) = model.backward(&mut tape, &dz)?;

    let params = model.params();
    let trainable: Vec<usize> = (0..params.len()).filter(|&i| params[i].kind.trainable()).collect();
    let per_slot = min_coords.div_ceil(trainable.len()).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = Vec::new();
    for &s in &trainable {
        let n = params[s].len();
        let k = per_slot.min(n);
        let mut idx = sample(&mut rng, n, k).into_vec();
        idx.sort_unstable();
        picks.extend(idx.into_iter().map(|i| (s, i)));
    }
    // top up from the largest arrays if small ones could not supply their share
    let mut s = 0;
    while picks.len() < min_coords {
        let slot = trainable[s % trainable.len()];
        let n = params[slot].len();
        let taken: Vec<usize> = picks.iter().filter(|p| p.0 == slot).map(|p| p.1).collect();
        if let Some(i) = (0..n).find(|i| !taken.contains(i)) {
            picks.push((slot, i));
        }
        s += 1;
        if s > trainable.len() * min_coords {
            break;
        }
    }
    picks.sort_unstable();
    let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
    drop(params);

    let mut work = model.clone();
    let mut coords = Vec::with_capacity(picks.len());
    for (slot, i) in picks {
        let orig = work.params()[slot].data[i];
        work.params_mut()[slot].data[i] = orig + h;
        let up = loss(&work, batch, labels, mode)?;
        work.params_mut()[slot].data[i] = orig - h;
        let down = loss(&work, batch, labels, mode)?;
        work.params_mut()[slot].data[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.grads[slot][i];
        let rel_error = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        coords.push(CoordCheck { slot: names[slot].clone(), index: i, analytic, numeric, rel_error });
    }
    let max_rel_error = coords.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { max_rel_error, coords })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MsnnConfig;
    use rand_distr::{Distribution, StandardNormal};

    pub(crate) fn tiny() -> MsnnConfig {
        MsnnConfig {
            n_channels: 3,
            n_times: 32,
            sampling_rate: 16,
            n_classes: 3,
            kernel_sizes: vec![8, 4, 3],
            feature_maps: vec![2, 3, 4, 3],
            leaky_slope: 0.01,
            bn_eps: 1e-5,
            bn_momentum: 0.9,
            effective_fs: 16.0,
            seed: 11,
        }
    }

    fn batch(seed: u64, n: usize, c: &MsnnConfig) -> Vec<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let len = c.n_channels * c.n_times;
                Tensor::from_vec([c.n_channels, c.n_times, 1], (0..len).map(|_| StandardNormal.sample(&mut rng)).collect())
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn every_trainable_slot_within_tolerance() {
        let cfg = tiny();
        let model = MsnnModel::build(cfg.clone()).unwrap();
        let xs = batch(1, 4, &cfg);
        let r = grad_check(&model, &xs, &[0, 1, 2, 1], Mode::Train, 1e-5, 200, 0).unwrap();
        assert!(r.coords.len() >= 200);
        let trainable = model.params().iter().filter(|p| p.kind.trainable()).count();
        assert_eq!(r.slots().len(), trainable);
        assert!(r.max_rel_error < 1e-4, "max rel error {}", r.max_rel_error);
    }

    #[test]
    fn eval_mode_check_and_single_sample_guard() {
        let cfg = tiny();
        let mut model = MsnnModel::build(cfg.clone()).unwrap();
        let xs = batch(2, 4, &cfg);
        assert!(grad_check(&model, &xs[..1], &[0], Mode::Train, 1e-5, 10, 0).is_err());
        model.calibrate(&xs).unwrap();
        let r = grad_check(&model, &xs[..2], &[2, 0], Mode::Eval, 1e-5, 60, 1).unwrap();
        assert!(r.max_rel_error < 1e-4, "max rel error {}", r.max_rel_error);
    }
}
