//! Layer-wise relevance propagation with the ε-rule.
//!
//! Batch norm is folded into the convolution in front of it, leaky ReLU
//! passes relevance through unchanged, and each affine layer redistributes
//! the bias share of its relevance uniformly over the inputs it is connected
//! to so the total is conserved up to the ε stabiliser.

use crate::error::{invalid, Result};
use crate::layers::{split_featuremaps, LinearMap};
use crate::model::{Block, MsnnModel};
use crate::preproc::welch::{welch_psd_with, WelchParams};
use crate::tensor::Tensor;

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Per-sample relevance of one input epoch, shape `[n_c, n_T, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMap {
    pub relevance: Tensor,
    pub target_class: usize,
    pub epsilon: f64,
    /// Pre-softmax score of the target class the relevance decomposes.
    pub target_logit: f64,
}

impl RelevanceMap {
    pub fn total(&self) -> f64 {
        self.relevance.data().iter().sum()
    }

    /// `|Σ R − z_target| / |z_target|`
    pub fn conservation_error(&self) -> f64 {
        (self.total() - self.target_logit).abs() / self.target_logit.abs().max(f64::MIN_POSITIVE)
    }

    /// Share of absolute relevance carried by the listed channels.
    pub fn channel_fraction(&self, channels: &[usize]) -> f64 {
        let per = self.channel_abs_mass();
        let total: f64 = per.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        channels.iter().filter_map(|&c| per.get(c)).sum::<f64>() / total
    }

    pub fn channel_abs_mass(&self) -> Vec<f64> {
        let t = self.relevance.time();
        self.relevance
            .data()
            .chunks(t.max(1))
            .map(|row| row.iter().map(|v| v.abs()).sum())
            .collect()
    }

    /// Relevance summed over channels at each time step.
    pub fn time_course(&self) -> Vec<f64> {
        let [c, t, _] = self.relevance.shape();
        (0..t).map(|ti| (0..c).map(|ci| self.relevance.get(ci, ti, 0)).sum()).collect()
    }
}

fn stabilize(z: f64, eps: f64) -> f64 {
    if z >= 0.0 {
        z + eps
    } else {
        z - eps
    }
}

/// ε-rule through one affine layer.
///
/// `r_out` is the relevance of the layer outputs; the returned tensor has the
/// shape of `x`.
pub fn epsilon_rule<L: LinearMap>(layer: &L, x: &Tensor, r_out: &Tensor, eps: f64) -> Result<Tensor> {
    let z = layer.apply(x)?;
    if z.shape() != r_out.shape() {
        return crate::error::shape_err(format!(
            "relevance {:?} does not match layer output {:?}",
            r_out.shape(),
            z.shape()
        ));
    }
    let mut s = r_out.clone();
    for (sv, &zv) in s.data_mut().iter_mut().zip(z.data()) {
        *sv /= stabilize(zv, eps);
    }
    let mut r = layer.apply_transpose(&s, x.shape());
    for (rv, &xv) in r.data_mut().iter_mut().zip(x.data()) {
        *rv *= xv;
    }

    let bias = layer.bias();
    if bias.iter().any(|&b| b != 0.0) {
        let ones = layer.ones_like();
        let [c, t, f] = x.shape();
        let fan_in = ones.apply(&Tensor::filled(c, t, f, 1.0))?;
        let maps = bias.len();
        let mut share = s;
        for (i, (u, &n)) in share.data_mut().iter_mut().zip(fan_in.data()).enumerate() {
            *u = if n > 0.0 { *u * bias[i % maps] / n } else { 0.0 };
        }
        let spread = ones.apply_transpose(&share, x.shape());
        for (rv, sv) in r.data_mut().iter_mut().zip(spread.data()) {
            *rv += sv;
        }
    }
    Ok(r)
}

fn folded<C: LinearMap>(block: &Block<C>) -> Result<C> {
    let (scale, shift) = block.bn.eval_affine()?;
    Ok(block.conv.fold_affine(&scale, &shift))
}

fn add_into(acc: &mut Tensor, other: &Tensor) {
    for (a, b) in acc.data_mut().iter_mut().zip(other.data()) {
        *a += b;
    }
}

/// Relevance of every input sample for the pre-softmax score of
/// `target_class`. Needs a calibrated model.
pub fn lrp(model: &MsnnModel, epoch: &Tensor, target_class: usize, epsilon: f64) -> Result<RelevanceMap> {
    if target_class >= model.config.n_classes {
        return invalid(format!(
            "target class {target_class} out of range for {} classes",
            model.config.n_classes
        ));
    }
    if !(epsilon > 0.0) {
        return invalid(format!("epsilon must be positive (got {epsilon})"));
    }
    let inter = model.forward_one(epoch)?;
    let n = model.separable.len();
    let nt = model.config.n_times_after_stem();

    // classifier: exact split of the logit over pooled features
    let w = &model.classifier.weight.data;
    let n_out = model.classifier.out_dim();
    let d = inter.gap.len();
    let bias_share = model.classifier.bias.data[target_class] / d as f64;
    let r_gap: Vec<f64> = inter
        .gap
        .iter()
        .enumerate()
        .map(|(i, g)| g * w[i * n_out + target_class] + bias_share)
        .collect();

    // GAP over time, then route each map slice back to its branch
    let mut r_concat = inter.concat.clone();
    {
        let maps = r_concat.maps();
        for (i, v) in r_concat.data_mut().iter_mut().enumerate() {
            let f = i % maps;
            *v = (*v / nt as f64) * r_gap[f] / stabilize(inter.gap[f], epsilon);
        }
    }
    let widths = &model.config.feature_maps[1..];
    let r_sst = split_featuremaps(&r_concat, widths)?;

    let mut r_st: Vec<Tensor> = Vec::with_capacity(n);
    for k in 0..n {
        let layer = folded(&model.spatial[k])?;
        r_st.push(epsilon_rule(&layer, &inter.st[k], &r_sst[k], epsilon)?);
    }

    let mut r_stem = None;
    for k in (0..n).rev() {
        let layer = folded(&model.separable[k])?;
        let input = if k == 0 { &inter.stem } else { &inter.st[k - 1] };
        let r_in = epsilon_rule(&layer, input, &r_st[k], epsilon)?;
        if k == 0 {
            r_stem = Some(r_in);
        } else {
            add_into(&mut r_st[k - 1], &r_in);
        }
    }
    let stem = folded(&model.stem)?;
    let relevance = epsilon_rule(&stem, epoch, &r_stem.expect("at least one branch"), epsilon)?;
    if !relevance.is_finite() {
        return Err(crate::error::MsnnError::NonFinite("relevance".into()));
    }
    Ok(RelevanceMap {
        relevance,
        target_class,
        epsilon,
        target_logit: inter.logits[target_class],
    })
}

/// Welch spectrum of the channel-summed relevance time course, on the same
/// grid as [`welch_psd_with`] for the given parameters.
pub fn relevance_spectrum(map: &RelevanceMap, fs: f64, params: &WelchParams) -> Result<(Vec<f64>, Vec<f64>)> {
    welch_psd_with(&map.time_course(), fs, params)
}
