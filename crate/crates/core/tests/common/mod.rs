#![allow(dead_code)]

use msnn::data::{synth_bandpower, BandpowerParams, EpochSet};
use msnn::{MsnnConfig, MsnnModel, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 3]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| StandardNormal.sample(rng)).collect()).unwrap()
}

/// 4 channels, 48 samples at 16 Hz, 3 classes, three short branches.
pub fn tiny_config(seed: u64) -> MsnnConfig {
    MsnnConfig {
        kernel_sizes: vec![8, 4, 2],
        feature_maps: vec![3, 4, 4, 5],
        ..MsnnConfig::motor_imagery(4, 48, 16, 3)
    }
    .with_seed(seed)
}

pub fn calibrated(cfg: MsnnConfig, seed: u64) -> MsnnModel {
    let shape = [cfg.n_channels, cfg.n_times, 1];
    let mut m = MsnnModel::build(cfg).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    let batch: Vec<Tensor> = (0..6).map(|_| random_tensor(&mut r, shape)).collect();
    m.calibrate(&batch).unwrap();
    m
}

/// Small two-class band-power task: 8 channels, 1 s at 64 Hz.
pub fn small_bandpower(n: usize, seed: u64) -> EpochSet {
    synth_bandpower(&BandpowerParams::two_class(n, 8, 64, 64.0, seed)).unwrap().0
}

pub fn small_bandpower_config(seed: u64) -> MsnnConfig {
    MsnnConfig { kernel_sizes: vec![16, 8, 4], feature_maps: vec![4, 8, 8, 8], ..MsnnConfig::motor_imagery(8, 64, 64, 2) }
        .with_seed(seed)
}
