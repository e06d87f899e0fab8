mod common;

use common::{calibrated, random_tensor, rng, tiny_config};
use msnn::{MsnnConfig, MsnnModel};

#[test]
fn motor_imagery_default_shape_chain() {
    let cfg = MsnnConfig::motor_imagery(64, 1024, 512, 2);
    assert_eq!(cfg.n_times_after_stem(), 769);
    let m = calibrated(cfg, 1);
    let x = random_tensor(&mut rng(2), [64, 1024, 1]);
    let inter = m.forward_one(&x).unwrap();
    assert_eq!(inter.stem.shape(), [64, 769, 4]);
    let widths = [16, 32, 64];
    for (k, &w) in widths.iter().enumerate() {
        assert_eq!(inter.st[k].shape(), [64, 769, w], "f_{}^ST", k + 1);
        assert_eq!(inter.sst[k].shape(), [1, 769, w], "f_{}^SST", k + 1);
    }
    assert_eq!(inter.concat.shape(), [1, 769, 112]);
    assert_eq!(inter.gap.len(), 112);
    assert_eq!(inter.probs.len(), 2);
}

#[test]
fn motor_imagery_parameter_counts() {
    let m = MsnnModel::build(MsnnConfig::motor_imagery(64, 1024, 512, 2)).unwrap();
    let pc = m.param_count();
    // n_o · ΣF_k with ΣF_k = 16 + 32 + 64
    assert_eq!(pc.classifier_weights, 2 * 112);
    assert_eq!(pc.classifier_weights_without_gap, 769 * 2 * 112);
    assert_eq!(pc.gap_reduction_factor, 769);
    assert_eq!(pc.classifier_weights_without_gap / pc.classifier_weights, 769);
    assert_eq!(pc.separable_shared_kernel, vec![100 + 4 * 16, 60 + 16 * 32, 20 + 32 * 64]);
    assert_eq!(pc.separable_per_map, vec![100 * 4 + 4 * 16, 60 * 16 + 16 * 32, 20 * 32 + 32 * 64]);
    assert_eq!(pc.conventional_conv, vec![100 * 4 * 16, 60 * 16 * 32, 20 * 32 * 64]);
    assert_eq!(pc.slots.iter().map(|s| s.1).sum::<usize>(), pc.total);
}

#[test]
fn ssvep_counts_follow_the_formula() {
    let cfg = MsnnConfig::ssvep(8, 512, 256, 4);
    let m = MsnnModel::build(cfg.clone()).unwrap();
    let pc = m.param_count();
    let f = &cfg.feature_maps;
    let t = &cfg.kernel_sizes;
    assert_eq!(t, &vec![20, 10, 5]);
    for k in 0..3 {
        assert_eq!(pc.separable_shared_kernel[k], t[k] + f[k] * f[k + 1]);
        assert!(pc.separable_shared_kernel[k] < pc.conventional_conv[k]);
    }
    assert_eq!(pc.classifier_weights, 4 * 112);
    assert_eq!(pc.gap_reduction_factor, 512 - 128 + 1);
}

#[test]
fn every_forward_has_the_tiny_shape_chain() {
    let cfg = tiny_config(3);
    let nt = cfg.n_times_after_stem();
    let m = calibrated(cfg.clone(), 3);
    let mut r = rng(4);
    for _ in 0..5 {
        let i = m.forward_one(&random_tensor(&mut r, [4, 48, 1])).unwrap();
        assert_eq!(i.concat.shape(), [1, nt, cfg.concat_maps()]);
        assert!((i.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
