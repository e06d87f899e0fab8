use serde::{Deserialize, Serialize};

use crate::error::{MsnnError, Result};
use crate::kv::{render_list, KvDoc};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsnnConfig {
    pub n_channels: usize,
    pub n_times: usize,
    /// Sampling rate in Hz; the stem kernel spans half a second.
    pub sampling_rate: usize,
    pub n_classes: usize,
    /// Separable kernel lengths `T_1..T_N`.
    pub kernel_sizes: Vec<usize>,
    /// Map widths `F_0..F_N` (stem first).
    pub feature_maps: Vec<usize>,
    pub leaky_slope: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    /// Rate used to report the nominal frequency scale of each branch.
    pub effective_fs: f64,
    pub seed: u64,
}

pub const MI_KERNELS: [usize; 3] = [100, 60, 20];
pub const SSVEP_KERNELS: [usize; 3] = [20, 10, 5];
pub const DEFAULT_MAPS: [usize; 4] = [4, 16, 32, 64];

impl MsnnConfig {
    /// Motor-imagery defaults: `T = (100, 60, 20)`, `F = (4, 16, 32, 64)`.
    pub fn motor_imagery(n_channels: usize, n_times: usize, sampling_rate: usize, n_classes: usize) -> Self {
        MsnnConfig {
            n_channels,
            n_times,
            sampling_rate,
            n_classes,
            kernel_sizes: MI_KERNELS.to_vec(),
            feature_maps: DEFAULT_MAPS.to_vec(),
            leaky_slope: 0.01,
            bn_eps: 1e-5,
            bn_momentum: 0.9,
            effective_fs: sampling_rate as f64,
            seed: 0,
        }
    }

    /// Same as [`motor_imagery`](Self::motor_imagery) with `T = (20, 10, 5)`.
    pub fn ssvep(n_channels: usize, n_times: usize, sampling_rate: usize, n_classes: usize) -> Self {
        MsnnConfig {
            kernel_sizes: SSVEP_KERNELS.to_vec(),
            ..Self::motor_imagery(n_channels, n_times, sampling_rate, n_classes)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn branches(&self) -> usize {
        self.kernel_sizes.len()
    }

    pub fn stem_kernel(&self) -> usize {
        self.sampling_rate / 2
    }

    /// `n_T' = n_T - f_s/2 + 1`
    pub fn n_times_after_stem(&self) -> usize {
        (self.n_times + 1).saturating_sub(self.stem_kernel())
    }

    /// `Σ_{k=1..N} F_k`
    pub fn concat_maps(&self) -> usize {
        self.feature_maps.iter().skip(1).sum()
    }

    /// Nominal frequency (Hz) each branch kernel spans: `effective_fs / T_k`.
    pub fn branch_frequencies(&self) -> Vec<f64> {
        self.kernel_sizes.iter().map(|&t| self.effective_fs / t as f64).collect()
    }

    /// Checks every invariant and reports all failures at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.n_channels == 0 {
            bad.push("n_channels must be >= 1".to_string());
        }
        if self.sampling_rate == 0 || !self.sampling_rate.is_multiple_of(2) {
            bad.push(format!("sampling_rate must be even and positive (got {})", self.sampling_rate));
        }
        if self.n_classes < 2 {
            bad.push(format!("n_classes must be >= 2 (got {})", self.n_classes));
        }
        if self.kernel_sizes.is_empty() {
            bad.push("kernel_sizes must name at least one branch".to_string());
        }
        if self.feature_maps.len() != self.kernel_sizes.len() + 1 {
            bad.push(format!(
                "feature_maps needs {} entries (F_0..F_N), got {}",
                self.kernel_sizes.len() + 1,
                self.feature_maps.len()
            ));
        }
        if self.feature_maps.contains(&0) {
            bad.push("feature_maps entries must be positive".to_string());
        }
        if self.sampling_rate > 0 && self.n_times < self.stem_kernel() {
            bad.push(format!(
                "n_times ({}) is shorter than the stem kernel ({})",
                self.n_times,
                self.stem_kernel()
            ));
        } else {
            let nt = self.n_times_after_stem();
            for (k, &t) in self.kernel_sizes.iter().enumerate() {
                if t == 0 || t > nt {
                    bad.push(format!("kernel_sizes[{}] = {t} must be in 1..={nt} (n_T')", k + 1));
                }
            }
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            bad.push(format!("leaky_slope must be in (0, 1) (got {})", self.leaky_slope));
        }
        if !(self.bn_eps > 0.0) {
            bad.push("bn_eps must be positive".to_string());
        }
        if !(0.0..1.0).contains(&self.bn_momentum) {
            bad.push("bn_momentum must be in [0, 1)".to_string());
        }
        if !(self.effective_fs > 0.0) {
            bad.push("effective_fs must be positive".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(MsnnError::Config(bad.join("; ")))
        }
    }

    pub fn to_kv(&self, section: &str) -> KvDoc {
        let mut d = KvDoc::new();
        let key = |k: &str| if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
        d.set(key("n_channels"), self.n_channels);
        d.set(key("n_times"), self.n_times);
        d.set(key("sampling_rate"), self.sampling_rate);
        d.set(key("n_classes"), self.n_classes);
        d.set(key("kernel_sizes"), render_list(&self.kernel_sizes));
        d.set(key("feature_maps"), render_list(&self.feature_maps));
        d.set(key("leaky_slope"), self.leaky_slope);
        d.set(key("bn_eps"), self.bn_eps);
        d.set(key("bn_momentum"), self.bn_momentum);
        d.set(key("effective_fs"), self.effective_fs);
        d.set(key("seed"), self.seed);
        d
    }

    /// Reads every field from `doc`; all fields are required.
    pub fn from_kv(doc: &KvDoc, section: &str) -> Result<Self> {
        let key = |k: &str| if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
        fn req<T>(v: Option<T>, k: &str) -> Result<T> {
            v.ok_or_else(|| MsnnError::Config(format!("missing key {k}")))
        }
        let k = key("n_channels");
        let n_channels = req(doc.parse_value(&k)?, &k)?;
        let k = key("n_times");
        let n_times = req(doc.parse_value(&k)?, &k)?;
        let k = key("sampling_rate");
        let sampling_rate = req(doc.parse_value(&k)?, &k)?;
        let k = key("n_classes");
        let n_classes = req(doc.parse_value(&k)?, &k)?;
        let k = key("kernel_sizes");
        let kernel_sizes = req(doc.parse_list(&k)?, &k)?;
        let k = key("feature_maps");
        let feature_maps = req(doc.parse_list(&k)?, &k)?;
        let k = key("leaky_slope");
        let leaky_slope = req(doc.parse_value(&k)?, &k)?;
        let k = key("bn_eps");
        let bn_eps = req(doc.parse_value(&k)?, &k)?;
        let k = key("bn_momentum");
        let bn_momentum = req(doc.parse_value(&k)?, &k)?;
        let k = key("effective_fs");
        let effective_fs = req(doc.parse_value(&k)?, &k)?;
        let k = key("seed");
        let seed = req(doc.parse_value(&k)?, &k)?;
        Ok(MsnnConfig {
            n_channels,
            n_times,
            sampling_rate,
            n_classes,
            kernel_sizes,
            feature_maps,
            leaky_slope,
            bn_eps,
            bn_momentum,
            effective_fs,
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mi_defaults() {
        let c = MsnnConfig::motor_imagery(64, 1024, 512, 2);
        c.validate().unwrap();
        assert_eq!(c.n_times_after_stem(), 769);
        assert_eq!(c.concat_maps(), 112);
        assert_eq!(c.branch_frequencies()[0], 5.12);
    }

    #[test]
    fn validation_lists_every_failure() {
        let mut c = MsnnConfig::motor_imagery(8, 256, 128, 1);
        c.kernel_sizes = vec![500, 60, 20];
        c.feature_maps = vec![4, 16];
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("n_classes"));
        assert!(msg.contains("feature_maps"));
        assert!(msg.contains("kernel_sizes[1]"));
    }

    #[test]
    fn odd_sampling_rate_rejected() {
        let c = MsnnConfig::motor_imagery(8, 256, 127, 2);
        assert!(c.validate().is_err());
    }

    #[test]
    fn kv_round_trip() {
        let c = MsnnConfig::ssvep(8, 256, 128, 4).with_seed(42);
        let back = MsnnConfig::from_kv(&c.to_kv("model"), "model").unwrap();
        assert_eq!(back, c);
    }
}
