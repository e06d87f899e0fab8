//! The multi-scale network: a shared stack of temporal convolutions whose
//! intermediate activations are tapped, spatially filtered, concatenated,
//! pooled and classified.
//!
//! ```text
//! x [n_c, n_T, 1]
//!   └ stem conv → BN → LReLU                       [n_c, n_T', F_0]
//!       └ sep_1 → BN → LReLU = f_1^ST ─ spatial_1 → BN → LReLU = f_1^SST [1, n_T', F_1]
//!           └ sep_2 → BN → LReLU = f_2^ST ─ spatial_2 → …                 [1, n_T', F_2]
//!               └ …
//! concat(f_1^SST … f_N^SST) → GAP → dense → softmax
//! ```

pub mod checkpoint;
pub mod config;

pub use checkpoint::{load, read_checkpoint, save, write_checkpoint};
pub use config::MsnnConfig;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, MsnnError, Result};
use crate::layers::activation::{leaky_relu_backward_inplace, leaky_relu_inplace};
use crate::layers::{
    concat_featuremaps, gap_backward, gap_forward, softmax, split_featuremaps,
    BatchNorm, BnBatchCache, Dense, Param, SeparableConv, SpatialConv, TemporalConv,
};
use crate::par;
use crate::tensor::Tensor;

pub use crate::layers::BnMode as Mode;

/// A convolution followed by batch norm (and a leaky ReLU at run time).
#[derive(Debug, Clone, PartialEq)]
pub struct Block<C> {
    pub conv: C,
    pub bn: BatchNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsnnModel {
    pub config: MsnnConfig,
    pub stem: Block<TemporalConv>,
    /// `𝒞_k^sep`, k = 1..N
    pub separable: Vec<Block<SeparableConv>>,
    /// `𝒮_k`, k = 1..N
    pub spatial: Vec<Block<SpatialConv>>,
    pub classifier: Dense,
}

/// Per-sample activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Intermediates {
    pub stem: Tensor,
    /// `f_k^ST`, shape `[n_c, n_T', F_k]`
    pub st: Vec<Tensor>,
    /// `f_k^SST`, shape `[1, n_T', F_k]`
    pub sst: Vec<Tensor>,
    /// `[1, n_T', ΣF_k]`
    pub concat: Tensor,
    /// GAP of the concatenation, `ΣF_k` values.
    pub gap: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub probs: Vec<Vec<f64>>,
    pub intermediates: Vec<Intermediates>,
}

#[derive(Debug, Clone)]
struct BlockCache {
    out: Vec<Tensor>,
    bn: BnBatchCache,
}

/// Everything a training-mode forward keeps for the backward pass.
///
/// A tape can be replayed once; a second [`MsnnModel::backward`] on the same
/// tape fails with [`MsnnError::TapeConsumed`].
#[derive(Debug)]
pub struct GradTape {
    mode: Mode,
    consumed: bool,
    inputs: Vec<Tensor>,
    stem: BlockCache,
    sep: Vec<(BlockCache, Vec<Tensor>)>,
    spatial: Vec<BlockCache>,
    gap: Vec<Vec<f64>>,
    pub logits: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
}

impl GradTape {
    pub fn mode(&self) -> Mode {
        self.mode
    }
    pub fn batch_size(&self) -> usize {
        self.inputs.len()
    }
    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    /// Batch statistics of every BN layer in parameter order.
    fn bn_caches(&self) -> Vec<&BnBatchCache> {
        let mut v = vec![&self.stem.bn];
        for k in 0..self.sep.len() {
            v.push(&self.sep[k].0.bn);
            v.push(&self.spatial[k].bn);
        }
        v
    }
}

/// Gradients aligned with [`MsnnModel::params`]; running statistics get
/// zero-filled entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub grads: Vec<Vec<f64>>,
}

impl ModelGrads {
    pub fn zeros_like(model: &MsnnModel) -> Self {
        ModelGrads { grads: model.params().iter().map(|p| vec![0.0; p.len()]).collect() }
    }

    pub fn add_assign(&mut self, other: &ModelGrads) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().flatten().all(|v| v.is_finite())
    }
}

/// Per-layer and summary parameter counts.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ParamCount {
    /// `(slot name, element count)` for every array, running statistics included.
    pub slots: Vec<(String, usize)>,
    pub total: usize,
    pub trainable: usize,
    /// `n_o · ΣF_k`
    pub classifier_weights: usize,
    /// `n_T' · n_o · ΣF_k`, the head size a flatten-instead-of-GAP design would need.
    pub classifier_weights_without_gap: usize,
    pub gap_reduction_factor: usize,
    /// `T_k + F_{k-1}·F_k`: one depthwise kernel shared by all input maps.
    pub separable_shared_kernel: Vec<usize>,
    /// `T_k·F_{k-1} + F_{k-1}·F_k`: one depthwise kernel per input map (what is built).
    pub separable_per_map: Vec<usize>,
    /// `T_k·F_{k-1}·F_k`: a full convolution with the same kernel length.
    pub conventional_conv: Vec<usize>,
}

impl MsnnModel {
    /// Builds a model with Xavier-uniform weights drawn from `config.seed`.
    pub fn build(config: MsnnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (eps, mom) = (config.bn_eps, config.bn_momentum);
        let f = &config.feature_maps;
        let stem = Block {
            conv: TemporalConv::new("stem.conv", config.stem_kernel(), f[0], &mut rng),
            bn: BatchNorm::new("stem.bn", f[0], eps, mom),
        };
        let mut separable = Vec::new();
        let mut spatial = Vec::new();
        for (k, &t) in config.kernel_sizes.iter().enumerate() {
            let b = k + 1;
            separable.push(Block {
                conv: SeparableConv::new(&format!("branch{b}.sep"), t, f[k], f[b], &mut rng),
                bn: BatchNorm::new(&format!("branch{b}.sep_bn"), f[b], eps, mom),
            });
            spatial.push(Block {
                conv: SpatialConv::new(&format!("branch{b}.spatial"), config.n_channels, f[b], f[b], &mut rng),
                bn: BatchNorm::new(&format!("branch{b}.spatial_bn"), f[b], eps, mom),
            });
        }
        let classifier = Dense::new("classifier", config.concat_maps(), config.n_classes, &mut rng);
        Ok(MsnnModel { config, stem, separable, spatial, classifier })
    }

    pub fn bn_layers(&self) -> Vec<&BatchNorm> {
        let mut v = vec![&self.stem.bn];
        for (s, p) in self.separable.iter().zip(&self.spatial) {
            v.push(&s.bn);
            v.push(&p.bn);
        }
        v
    }

    fn bn_layers_mut(&mut self) -> Vec<&mut BatchNorm> {
        let mut v = vec![&mut self.stem.bn];
        for (s, p) in self.separable.iter_mut().zip(self.spatial.iter_mut()) {
            v.push(&mut s.bn);
            v.push(&mut p.bn);
        }
        v
    }

    /// True once running statistics exist, i.e. eval mode is usable.
    pub fn is_calibrated(&self) -> bool {
        self.bn_layers().iter().all(|b| b.calibrated)
    }

    pub(crate) fn set_calibrated(&mut self, v: bool) {
        for b in self.bn_layers_mut() {
            b.calibrated = v;
        }
    }

    /// Every parameter array in a fixed slot order.
    pub fn params(&self) -> Vec<&Param> {
        fn bn(v: &mut Vec<*const Param>, b: &BatchNorm) {
            v.extend([&b.gamma as *const _, &b.beta, &b.running_mean, &b.running_var]);
        }
        let mut v: Vec<*const Param> = vec![&self.stem.conv.weight, &self.stem.conv.bias];
        bn(&mut v, &self.stem.bn);
        for (s, p) in self.separable.iter().zip(&self.spatial) {
            v.extend([&s.conv.depthwise as *const _, &s.conv.pointwise, &s.conv.bias]);
            bn(&mut v, &s.bn);
            v.extend([&p.conv.weight as *const _, &p.conv.bias]);
            bn(&mut v, &p.bn);
        }
        v.extend([&self.classifier.weight as *const _, &self.classifier.bias]);
        // SAFETY: every pointer was taken from a distinct field of `self`,
        // which outlives the returned borrows.
        v.into_iter().map(|p| unsafe { &*p }).collect()
    }

    /// Mutable view in the same order as [`params`](Self::params).
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        fn bn<'a>(v: &mut Vec<&'a mut Param>, b: &'a mut BatchNorm) {
            let BatchNorm { gamma, beta, running_mean, running_var, .. } = b;
            v.extend([gamma, beta, running_mean, running_var]);
        }
        let mut v: Vec<&mut Param> = Vec::new();
        let TemporalConv { weight, bias } = &mut self.stem.conv;
        v.extend([weight, bias]);
        bn(&mut v, &mut self.stem.bn);
        for (s, p) in self.separable.iter_mut().zip(self.spatial.iter_mut()) {
            let SeparableConv { depthwise, pointwise, bias } = &mut s.conv;
            v.extend([depthwise, pointwise, bias]);
            bn(&mut v, &mut s.bn);
            let SpatialConv { weight, bias } = &mut p.conv;
            v.extend([weight, bias]);
            bn(&mut v, &mut p.bn);
        }
        let Dense { weight, bias } = &mut self.classifier;
        v.extend([weight, bias]);
        v
    }

    pub fn param_count(&self) -> ParamCount {
        let slots: Vec<(String, usize)> = self.params().iter().map(|p| (p.name.clone(), p.len())).collect();
        let total = slots.iter().map(|s| s.1).sum();
        let trainable = self.params().iter().filter(|p| p.kind.trainable()).map(|p| p.len()).sum();
        let c = &self.config;
        let classifier_weights = self.classifier.weight.len();
        let nt = c.n_times_after_stem();
        let f = &c.feature_maps;
        let t = &c.kernel_sizes;
        ParamCount {
            slots,
            total,
            trainable,
            classifier_weights,
            classifier_weights_without_gap: nt * c.n_classes * c.concat_maps(),
            gap_reduction_factor: nt,
            separable_shared_kernel: (0..t.len()).map(|k| t[k] + f[k] * f[k + 1]).collect(),
            separable_per_map: self.separable.iter().map(|s| s.conv.weight_count()).collect(),
            conventional_conv: (0..t.len()).map(|k| t[k] * f[k] * f[k + 1]).collect(),
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let c = &self.config;
        if x.shape() != [c.n_channels, c.n_times, 1] {
            return shape_err(format!(
                "input {:?} does not match [{}, {}, 1]",
                x.shape(),
                c.n_channels,
                c.n_times
            ));
        }
        Ok(())
    }

    fn bn_act(&self, bn: &BatchNorm, pre: Vec<Tensor>, mode: Mode) -> Result<BlockCache> {
        let (mut out, cache) = bn.forward_owned(pre, mode)?;
        let slope = self.config.leaky_slope;
        for y in &mut out {
            leaky_relu_inplace(y, slope);
        }
        Ok(BlockCache { out, bn: cache })
    }

    fn run(&self, batch: &[Tensor], mode: Mode) -> Result<GradTape> {
        if batch.is_empty() {
            return shape_err("empty batch");
        }
        for x in batch {
            self.check_input(x)?;
        }
        let pre = par::map(batch, |x| self.stem.conv.forward(x)).into_iter().collect::<Result<Vec<_>>>()?;
        let stem = self.bn_act(&self.stem.bn, pre, mode)?;
        let mut sep = Vec::with_capacity(self.separable.len());
        let mut spatial = Vec::with_capacity(self.spatial.len());
        for k in 0..self.separable.len() {
            let input = if k == 0 { &stem.out } else { &sep.last().map(|s: &(BlockCache, Vec<Tensor>)| &s.0).unwrap().out };
            let conv = &self.separable[k].conv;
            let (pre, z): (Vec<Tensor>, Vec<Tensor>) = par::map(input, |x| conv.forward(x))
                .into_iter()
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip();
            let cache = self.bn_act(&self.separable[k].bn, pre, mode)?;
            let sconv = &self.spatial[k].conv;
            let spre = par::map(&cache.out, |x| sconv.forward(x)).into_iter().collect::<Result<Vec<_>>>()?;
            spatial.push(self.bn_act(&self.spatial[k].bn, spre, mode)?);
            sep.push((cache, z));
        }
        let gap = par::map_range(batch.len(), |b| {
            let parts: Vec<&Tensor> = spatial.iter().map(|s| &s.out[b]).collect();
            concat_featuremaps(&parts).and_then(|c| gap_forward(&c))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let logits = gap.iter().map(|g| self.classifier.logits(g)).collect::<Result<Vec<_>>>()?;
        let probs = logits.iter().map(|z| softmax(z)).collect();
        Ok(GradTape {
            mode,
            consumed: false,
            inputs: batch.to_vec(),
            stem,
            sep,
            spatial,
            gap,
            logits,
            probs,
        })
    }

    fn intermediates_from(&self, tape: &GradTape) -> Result<Vec<Intermediates>> {
        (0..tape.batch_size())
            .map(|b| {
                let sst: Vec<Tensor> = tape.spatial.iter().map(|s| s.out[b].clone()).collect();
                let concat = concat_featuremaps(&sst.iter().collect::<Vec<_>>())?;
                Ok(Intermediates {
                    stem: tape.stem.out[b].clone(),
                    st: tape.sep.iter().map(|s| s.0.out[b].clone()).collect(),
                    sst,
                    concat,
                    gap: tape.gap[b].clone(),
                    logits: tape.logits[b].clone(),
                    probs: tape.probs[b].clone(),
                })
            })
            .collect()
    }

    /// Full forward pass returning probabilities and every tapped feature.
    ///
    /// `Mode::Train` normalises with batch statistics but does not touch the
    /// running statistics; see [`apply_bn_update`](Self::apply_bn_update).
    pub fn forward(&self, batch: &[Tensor], mode: Mode) -> Result<ForwardOutput> {
        let tape = self.run(batch, mode)?;
        let intermediates = self.intermediates_from(&tape)?;
        Ok(ForwardOutput { probs: tape.probs, intermediates })
    }

    /// Forward pass that records a tape for [`backward`](Self::backward).
    pub fn forward_tape(&self, batch: &[Tensor], mode: Mode) -> Result<GradTape> {
        self.run(batch, mode)
    }

    /// Eval-mode intermediates of one sample.
    pub fn forward_one(&self, x: &Tensor) -> Result<Intermediates> {
        let tape = self.run(std::slice::from_ref(x), Mode::Eval)?;
        Ok(self.intermediates_from(&tape)?.remove(0))
    }

    /// Eval-mode class probabilities, one sample at a time.
    pub fn predict(&self, xs: &[Tensor]) -> Result<Vec<Vec<f64>>> {
        par::map(xs, |x| self.run(std::slice::from_ref(x), Mode::Eval).map(|t| t.probs[0].clone()))
            .into_iter()
            .collect()
    }

    /// Eval-mode GAP features, one sample at a time.
    pub fn gap_features(&self, xs: &[Tensor]) -> Result<Vec<Vec<f64>>> {
        par::map(xs, |x| self.run(std::slice::from_ref(x), Mode::Eval).map(|t| t.gap[0].clone()))
            .into_iter()
            .collect()
    }

    /// Folds the batch statistics recorded on a train-mode tape into the
    /// running statistics.
    pub fn apply_bn_update(&mut self, tape: &GradTape) -> Result<()> {
        if tape.mode != Mode::Train {
            return Err(MsnnError::InvalidArgument("running statistics need a train-mode tape".into()));
        }
        let stats: Vec<(Vec<f64>, Vec<f64>)> =
            tape.bn_caches().iter().map(|c| (c.mean.clone(), c.var.clone())).collect();
        for (bn, (m, v)) in self.bn_layers_mut().into_iter().zip(stats) {
            bn.update_running(&m, &v);
        }
        Ok(())
    }

    /// One train-mode pass over `batch` that only updates running statistics.
    pub fn calibrate(&mut self, batch: &[Tensor]) -> Result<()> {
        let tape = self.run(batch, Mode::Train)?;
        self.apply_bn_update(&tape)
    }

    fn block_backward<F>(
        &self,
        bn: &BatchNorm,
        cache: &BlockCache,
        mut d_out: Vec<Tensor>,
        conv_backward: F,
    ) -> (Vec<Tensor>, Vec<Vec<f64>>)
    where
        F: Fn(usize, &Tensor) -> (Tensor, Vec<Vec<f64>>) + Sync + Send,
    {
        let slope = self.config.leaky_slope;
        par::zip_mut(&mut d_out, &cache.out, |g, a| leaky_relu_backward_inplace(a, g, slope));
        let (d_pre, [dgamma, dbeta]) = bn.backward_owned(d_out, &cache.bn);
        let per = par::map_range(d_pre.len(), |b| conv_backward(b, &d_pre[b]));
        let mut grads: Vec<Vec<f64>> = per[0].1.iter().map(|g| vec![0.0; g.len()]).collect();
        let mut dxs = Vec::with_capacity(per.len());
        for (dx, g) in per {
            for (acc, gi) in grads.iter_mut().zip(&g) {
                for (a, v) in acc.iter_mut().zip(gi) {
                    *a += v;
                }
            }
            dxs.push(dx);
        }
        let maps = bn.maps();
        grads.extend([dgamma, dbeta, vec![0.0; maps], vec![0.0; maps]]);
        (dxs, grads)
    }

    /// Reverse pass from gradients on the logits (one row per sample).
    ///
    /// Returns parameter gradients summed over the batch and the gradient
    /// with respect to each input sample.
    pub fn backward(&self, tape: &mut GradTape, d_logits: &[Vec<f64>]) -> Result<(ModelGrads, Vec<Tensor>)> {
        if tape.consumed {
            return Err(MsnnError::TapeConsumed);
        }
        if d_logits.len() != tape.batch_size() || d_logits.iter().any(|d| d.len() != self.config.n_classes) {
            return shape_err("logit gradient does not match the tape's batch");
        }
        tape.consumed = true;
        let n = self.separable.len();
        let nt = self.config.n_times_after_stem();
        let widths: Vec<usize> = self.config.feature_maps[1..].to_vec();

        // classifier and GAP
        let mut dw = vec![0.0; self.classifier.weight.len()];
        let mut db = vec![0.0; self.classifier.bias.len()];
        let mut d_sst: Vec<Vec<Tensor>> = vec![Vec::with_capacity(tape.batch_size()); n];
        for (g, dz) in tape.gap.iter().zip(d_logits) {
            let (dg, [w, b]) = self.classifier.backward(g, dz);
            for (a, v) in dw.iter_mut().zip(&w) {
                *a += v;
            }
            for (a, v) in db.iter_mut().zip(&b) {
                *a += v;
            }
            let parts = split_featuremaps(&gap_backward(&dg, nt), &widths)?;
            for (k, p) in parts.into_iter().enumerate() {
                d_sst[k].push(p);
            }
        }

        // spatial blocks feed their gradient into the taps
        let mut spatial_grads = Vec::with_capacity(n);
        let mut d_st: Vec<Vec<Tensor>> = Vec::with_capacity(n);
        for k in 0..n {
            let conv = &self.spatial[k].conv;
            let inputs = &tape.sep[k].0.out;
            let (dx, g) = self.block_backward(&self.spatial[k].bn, &tape.spatial[k], std::mem::take(&mut d_sst[k]), |b, dy| {
                let (dx, g) = conv.backward(&inputs[b], dy);
                (dx, g.to_vec())
            });
            spatial_grads.push(g);
            d_st.push(dx);
        }

        // shared separable stack, deepest first
        let mut sep_grads = vec![Vec::new(); n];
        let mut carry: Option<Vec<Tensor>> = None;
        for k in (0..n).rev() {
            let mut d = std::mem::take(&mut d_st[k]);
            if let Some(c) = carry.take() {
                for (a, b) in d.iter_mut().zip(&c) {
                    for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                        *x += y;
                    }
                }
            }
            let conv = &self.separable[k].conv;
            let inputs = if k == 0 { &tape.stem.out } else { &tape.sep[k - 1].0.out };
            let zs = &tape.sep[k].1;
            let (dx, g) = self.block_backward(&self.separable[k].bn, &tape.sep[k].0, d, |b, dy| {
                let (dx, g) = conv.backward(&inputs[b], &zs[b], dy);
                (dx, g.to_vec())
            });
            sep_grads[k] = g;
            carry = Some(dx);
        }

        let conv = &self.stem.conv;
        let inputs = &tape.inputs;
        let (d_input, stem_grads) =
            self.block_backward(&self.stem.bn, &tape.stem, carry.expect("at least one branch"), |b, dy| {
                let (dx, g) = conv.backward(&inputs[b], dy);
                (dx, g.to_vec())
            });

        let mut grads = stem_grads;
        for k in 0..n {
            grads.append(&mut sep_grads[k]);
            grads.append(&mut spatial_grads[k]);
        }
        grads.push(dw);
        grads.push(db);
        debug_assert_eq!(grads.len(), self.params().len());
        Ok((ModelGrads { grads }, d_input))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    pub(crate) fn tiny_config() -> MsnnConfig {
        MsnnConfig {
            n_channels: 2,
            n_times: 32,
            sampling_rate: 16,
            n_classes: 2,
            kernel_sizes: vec![8, 4],
            feature_maps: vec![2, 4, 4],
            leaky_slope: 0.01,
            bn_eps: 1e-5,
            bn_momentum: 0.9,
            effective_fs: 16.0,
            seed: 3,
        }
    }

    fn random_batch(seed: u64, b: usize, c: &MsnnConfig) -> Vec<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..b)
            .map(|_| {
                let n = c.n_channels * c.n_times;
                Tensor::from_vec([c.n_channels, c.n_times, 1], (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn build_is_deterministic() {
        let a = MsnnModel::build(tiny_config()).unwrap();
        let b = MsnnModel::build(tiny_config()).unwrap();
        assert_eq!(a, b);
        let c = MsnnModel::build(tiny_config().with_seed(4)).unwrap();
        assert_ne!(a.stem.conv.weight, c.stem.conv.weight);
    }

    #[test]
    fn build_rejects_long_kernel() {
        let mut c = tiny_config();
        c.kernel_sizes[0] = 40;
        let err = MsnnModel::build(c).unwrap_err().to_string();
        assert!(err.contains("kernel_sizes[1]"));
    }

    #[test]
    fn init_values() {
        let m = MsnnModel::build(tiny_config()).unwrap();
        for p in m.params() {
            match p.kind {
                crate::layers::ParamKind::Bias | crate::layers::ParamKind::BnShift | crate::layers::ParamKind::BnRunningMean => {
                    assert!(p.data.iter().all(|v| *v == 0.0), "{}", p.name)
                }
                crate::layers::ParamKind::BnScale | crate::layers::ParamKind::BnRunningVar => {
                    assert!(p.data.iter().all(|v| *v == 1.0))
                }
                crate::layers::ParamKind::Weight => assert!(p.data.iter().any(|v| *v != 0.0)),
            }
        }
    }

    #[test]
    fn slots_are_unique_and_cover_the_count() {
        let m = MsnnModel::build(MsnnConfig::motor_imagery(8, 256, 128, 2)).unwrap();
        let pc = m.param_count();
        let mut names: Vec<&str> = pc.slots.iter().map(|s| s.0.as_str()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), pc.slots.len());
        assert_eq!(pc.total, m.params().iter().map(|p| p.len()).sum::<usize>());
        let mut mm = m.clone();
        assert_eq!(mm.params_mut().len(), pc.slots.len());
        for (a, b) in m.params().iter().zip(mm.params_mut()) {
            assert_eq!(a.name, b.name);
        }
    }

    #[test]
    fn probabilities_sum_to_one_and_eval_is_deterministic() {
        let mut m = MsnnModel::build(tiny_config()).unwrap();
        let xs = random_batch(1, 4, &m.config);
        let out = m.forward(&xs, Mode::Train).unwrap();
        for p in &out.probs {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(matches!(m.forward(&xs, Mode::Eval), Err(MsnnError::BatchNormUninitialized)));
        m.calibrate(&xs).unwrap();
        let a = m.predict(&xs).unwrap();
        let b = m.predict(&xs).unwrap();
        assert_eq!(a, b);
        let c = m.forward(&xs, Mode::Eval).unwrap().probs;
        assert_eq!(a, c);
    }

    #[test]
    fn taps_equal_explicit_composition() {
        let mut m = MsnnModel::build(tiny_config()).unwrap();
        let xs = random_batch(2, 3, &m.config);
        m.calibrate(&xs).unwrap();
        let inter = m.forward_one(&xs[0]).unwrap();
        let block = |bn: &BatchNorm, pre: Tensor| {
            let (s, sh) = bn.eval_affine().unwrap();
            let mut y = pre;
            let f = y.maps();
            for row in y.data_mut().chunks_exact_mut(f) {
                for j in 0..f {
                    let v = s[j] * row[j] + sh[j];
                    row[j] = if v >= 0.0 { v } else { 0.01 * v };
                }
            }
            y
        };
        for k in 0..2 {
            let mut h = block(&m.stem.bn, m.stem.conv.forward(&xs[0]).unwrap());
            for j in 0..=k {
                h = block(&m.separable[j].bn, m.separable[j].conv.forward(&h).unwrap().0);
            }
            assert!(h.max_abs_diff(&inter.st[k]) < 1e-12);
            let s = block(&m.spatial[k].bn, m.spatial[k].conv.forward(&h).unwrap());
            assert!(s.max_abs_diff(&inter.sst[k]) < 1e-12);
        }
        let z = m.classifier.logits(&inter.gap).unwrap();
        let p = softmax(&z);
        for (a, b) in p.iter().zip(&inter.probs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tape_is_single_use() {
        let m = MsnnModel::build(tiny_config()).unwrap();
        let xs = random_batch(3, 2, &m.config);
        let mut tape = m.forward_tape(&xs, Mode::Train).unwrap();
        let dz = vec![vec![0.1, -0.1]; 2];
        m.backward(&mut tape, &dz).unwrap();
        assert!(matches!(m.backward(&mut tape, &dz), Err(MsnnError::TapeConsumed)));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let m = MsnnModel::build(tiny_config()).unwrap();
        let xs = random_batch(4, 2, &m.config);
        let mut tape = m.forward_tape(&xs, Mode::Train).unwrap();
        let (g, dx) = m.backward(&mut tape, &[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(g.grads.iter().flatten().all(|v| *v == 0.0));
        assert!(dx.iter().all(|t| t.data().iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn input_shape_is_checked() {
        let m = MsnnModel::build(tiny_config()).unwrap();
        assert!(m.forward(&[Tensor::zeros(3, 32, 1)], Mode::Train).is_err());
        assert!(m.forward(&[], Mode::Train).is_err());
    }
}
