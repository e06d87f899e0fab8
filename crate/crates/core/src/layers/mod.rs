//! Forward and reverse-mode kernels for the fixed layer set of the network.
//!
//! Every kernel operates on a single sample `Tensor` of shape
//! `[channels, time, maps]`; batch-coupled work (batch norm statistics) lives
//! in [`norm`].

pub mod activation;
pub mod conv;
pub mod dense;
pub mod norm;
pub mod pool;

pub use activation::{leaky_relu_backward, leaky_relu_forward};
pub use conv::{LinearMap, SeparableConv, SpatialConv, TemporalConv};
pub use dense::{softmax, Dense};
pub use norm::{BatchNorm, BnBatchCache, BnMode};
pub use pool::{concat_featuremaps, gap_backward, gap_forward, split_featuremaps};

use rand::Rng;
use rand_distr::{Distribution, Uniform};

/// What role an array plays; decides whether it is trained and regularised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    BnScale,
    BnShift,
    BnRunningMean,
    BnRunningVar,
}

impl ParamKind {
    pub fn trainable(self) -> bool {
        !matches!(self, ParamKind::BnRunningMean | ParamKind::BnRunningVar)
    }

    /// Only convolution and dense weights carry the L1-L2 penalty.
    pub fn regularized(self) -> bool {
        matches!(self, ParamKind::Weight)
    }

    pub fn tag(self) -> &'static str {
        match self {
            ParamKind::Weight => "weight",
            ParamKind::Bias => "bias",
            ParamKind::BnScale => "bn_scale",
            ParamKind::BnShift => "bn_shift",
            ParamKind::BnRunningMean => "bn_running_mean",
            ParamKind::BnRunningVar => "bn_running_var",
        }
    }
}

/// A named parameter array with its logical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub kind: ParamKind,
}

impl Param {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>, kind: ParamKind) -> Self {
        let n = shape.iter().product();
        Param { name: name.into(), shape, data: vec![0.0; n], kind }
    }

    pub fn filled(name: impl Into<String>, shape: Vec<usize>, kind: ParamKind, v: f64) -> Self {
        let mut p = Param::zeros(name, shape, kind);
        p.data.fill(v);
        p
    }

    /// Glorot/Xavier uniform initialisation with limit `sqrt(6 / (fan_in + fan_out))`.
    pub fn xavier<R: Rng>(
        name: impl Into<String>,
        shape: Vec<usize>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        let mut p = Param::zeros(name, shape, ParamKind::Weight);
        for v in &mut p.data {
            *v = dist.sample(rng);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}
