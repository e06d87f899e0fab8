//! Run configuration: model, training, preprocessing and detection settings
//! resolved from defaults, an optional config file and command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use msnn::data::EpochSet;
use msnn::eval::detect::DetectConfig;
use msnn::kv::KvDoc;
use msnn::train::TrainConfig;
use msnn::MsnnConfig;

use crate::UsageError;

pub const SEED_ENV: &str = "MSNN_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Mi,
    Ssvep,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::Mi => "mi",
            Preset::Ssvep => "ssvep",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Preset::from_str(s, true).map_err(|_| usage(format!("unknown preset {s:?} (expected mi or ssvep)")))
    }

    fn base(self, n_channels: usize, n_times: usize, fs: usize, n_classes: usize) -> MsnnConfig {
        match self {
            Preset::Mi => MsnnConfig::motor_imagery(n_channels, n_times, fs, n_classes),
            Preset::Ssvep => MsnnConfig::ssvep(n_channels, n_times, fs, n_classes),
        }
    }
}

/// Flags shared by every command that trains a model.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// key = value config file with [model], [train], [preprocess] and [detect] sections
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Architecture preset
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Separable kernel lengths, e.g. 100,60,20
    #[arg(long, value_name = "LIST", conflicts_with = "preset")]
    pub kernel_sizes: Option<String>,
    /// Feature-map widths, stem first, e.g. 4,16,32,64
    #[arg(long, value_name = "LIST")]
    pub feature_maps: Option<String>,
    /// Seed for initialisation, splits and batching (falls back to MSNN_SEED)
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Band-pass the data before normalisation, e.g. 4,40
    #[arg(long, value_name = "LOW,HIGH")]
    pub bandpass: Option<String>,
    /// Any other setting as section.key=value (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// Data dimensions the model has to match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dims {
    pub n_channels: usize,
    pub n_times: usize,
    pub fs: f64,
    pub n_classes: usize,
}

impl Dims {
    pub fn of(data: &EpochSet) -> Self {
        Dims { n_channels: data.n_channels(), n_times: data.n_times(), fs: data.fs, n_classes: data.n_classes }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Preprocess {
    pub bandpass_hz: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub model: MsnnConfig,
    pub train: TrainConfig,
    pub preprocess: Preprocess,
    pub detect: DetectConfig,
    pub config_file: Option<String>,
    pub overrides: Vec<String>,
}

const SECTIONS: [&str; 5] = ["run", "model", "train", "preprocess", "detect"];
const DIM_KEYS: [&str; 4] = ["n_channels", "n_times", "sampling_rate", "n_classes"];

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Seed from the environment, if set.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn parse_pair(s: &str, what: &str) -> Result<(f64, f64)> {
    match msnn::kv::parse_list::<f64>(s).as_deref() {
        Some([a, b]) => Ok((*a, *b)),
        _ => Err(usage(format!("{what} expects two comma-separated numbers, got {s:?}"))),
    }
}

impl ConfigArgs {
    /// Config file plus flags, flags last.
    pub fn to_doc(&self) -> Result<KvDoc> {
        let mut doc = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                KvDoc::parse(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
            }
            None => KvDoc::new(),
        };
        for (k, _) in doc.entries() {
            check_key(k)?;
        }
        if let Some(p) = self.preset {
            doc.set("model.preset", p.name());
        }
        if let Some(k) = &self.kernel_sizes {
            doc.set("model.kernel_sizes", k);
        }
        if let Some(f) = &self.feature_maps {
            doc.set("model.feature_maps", f);
        }
        if let Some(s) = self.seed {
            doc.set("model.seed", s);
            doc.set("train.seed", s);
        }
        if let Some(v) = self.max_epochs {
            doc.set("train.max_epochs", v);
        }
        if let Some(v) = self.patience {
            doc.set("train.patience", v);
        }
        if let Some(v) = self.batch_size {
            doc.set("train.batch_size", v);
        }
        if let Some(v) = self.lr {
            doc.set("train.lr0", v);
        }
        if let Some(b) = &self.bandpass {
            let (lo, hi) = parse_pair(b, "--bandpass")?;
            doc.set("preprocess.bandpass_low_hz", lo);
            doc.set("preprocess.bandpass_high_hz", hi);
        }
        for o in &self.overrides {
            let Some((k, v)) = o.split_once('=') else {
                return Err(usage(format!("--set expects section.key=value, got {o:?}")));
            };
            let k = k.trim();
            check_key(k)?;
            doc.set(k, v.trim());
        }
        Ok(doc)
    }

    pub fn override_summary(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push(format!("{k}={v}"));
            }
        };
        push("preset", self.preset.map(|p| p.name().to_string()));
        push("kernel_sizes", self.kernel_sizes.clone());
        push("feature_maps", self.feature_maps.clone());
        push("seed", self.seed.map(|v| v.to_string()));
        push("max_epochs", self.max_epochs.map(|v| v.to_string()));
        push("patience", self.patience.map(|v| v.to_string()));
        push("batch_size", self.batch_size.map(|v| v.to_string()));
        push("lr", self.lr.map(|v| v.to_string()));
        push("bandpass", self.bandpass.clone());
        out.extend(self.overrides.iter().cloned());
        out
    }

    pub fn resolve(&self, dims: Dims) -> Result<RunConfig> {
        let mut cfg = RunConfig::from_doc(&self.to_doc()?, dims)?;
        cfg.config_file = self.config.as_ref().map(|p| p.display().to_string());
        cfg.overrides = self.override_summary();
        Ok(cfg)
    }
}

fn check_key(k: &str) -> Result<()> {
    let Some((section, name)) = k.split_once('.') else {
        return Err(usage(format!("setting {k:?} is outside any section")));
    };
    if !SECTIONS.contains(&section) {
        return Err(usage(format!("unknown config section [{section}] (expected one of {})", SECTIONS.join(", "))));
    }
    let known: Vec<String> = match section {
        "run" => vec!["preset".into(), "config_file".into(), "overrides".into()],
        "model" => {
            let mut keys: Vec<String> = key_names(&MsnnConfig::motor_imagery(1, 1, 2, 2).to_kv("model"));
            keys.push("preset".into());
            keys
        }
        "train" => key_names(&TrainConfig::default().to_kv("train")),
        "preprocess" => vec!["bandpass_low_hz".into(), "bandpass_high_hz".into()],
        _ => vec!["threshold".into(), "min_hold_s".into(), "margin_s".into(), "rearm_below".into()],
    };
    if known.iter().any(|n| n == name) {
        Ok(())
    } else {
        Err(usage(format!("unknown key {k:?} (section [{section}] accepts {})", known.join(", "))))
    }
}

fn key_names(doc: &KvDoc) -> Vec<String> {
    doc.entries().iter().map(|(k, _)| k.split_once('.').map_or(k.clone(), |(_, n)| n.to_string())).collect()
}

fn cfg_err(e: msnn::MsnnError) -> anyhow::Error {
    usage(e.to_string())
}

impl RunConfig {
    /// Fills everything `doc` leaves open from the preset defaults and `dims`.
    pub fn from_doc(doc: &KvDoc, dims: Dims) -> Result<Self> {
        let preset = match doc.get("model.preset").or_else(|| doc.get("run.preset")) {
            Some(s) => Preset::parse(s)?,
            None => Preset::Mi,
        };
        if dims.fs.is_nan() || dims.fs <= 0.0 || (dims.fs - dims.fs.round()).abs() > 1e-9 {
            return Err(usage(format!("sampling rate {} Hz is not a whole number", dims.fs)));
        }
        let fs = dims.fs.round() as usize;
        let seed_fallback = env_seed()?.unwrap_or(0);

        let mut model_doc = preset.base(dims.n_channels, dims.n_times, fs, dims.n_classes).to_kv("model");
        model_doc.set("model.seed", seed_fallback);
        for (k, v) in doc.entries() {
            if k.starts_with("model.") && k != "model.preset" {
                model_doc.set(k.clone(), v);
            }
        }
        let expected = [dims.n_channels, dims.n_times, fs, dims.n_classes];
        for (name, want) in DIM_KEYS.iter().zip(expected) {
            let key = format!("model.{name}");
            let got: usize = model_doc.parse_value(&key).map_err(cfg_err)?.unwrap_or(want);
            if got != want {
                return Err(usage(format!("config sets {key} = {got} but the data has {want}")));
            }
        }
        let model = MsnnConfig::from_kv(&model_doc, "model").map_err(cfg_err)?;
        model.validate().map_err(cfg_err)?;

        let mut train_doc = doc.clone();
        if !train_doc.contains("train.seed") {
            train_doc.set("train.seed", seed_fallback);
        }
        let train = TrainConfig::from_kv(&train_doc, "train").map_err(cfg_err)?;
        train.validate().map_err(cfg_err)?;

        let lo: Option<f64> = doc.parse_value("preprocess.bandpass_low_hz").map_err(cfg_err)?;
        let hi: Option<f64> = doc.parse_value("preprocess.bandpass_high_hz").map_err(cfg_err)?;
        let bandpass_hz = match (lo, hi) {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            (None, None) => None,
            _ => return Err(usage("set both preprocess.bandpass_low_hz and preprocess.bandpass_high_hz")),
        };

        let mut detect = DetectConfig::default();
        if let Some(v) = doc.parse_value("detect.threshold").map_err(cfg_err)? {
            detect.threshold = v;
        }
        if let Some(v) = doc.parse_value("detect.min_hold_s").map_err(cfg_err)? {
            detect.min_hold_s = v;
        }
        if let Some(v) = doc.parse_value("detect.margin_s").map_err(cfg_err)? {
            detect.margin_s = v;
        }
        if let Some(v) = doc.parse_value("detect.rearm_below").map_err(cfg_err)? {
            detect.rearm_below = v;
        }

        Ok(RunConfig {
            preset,
            model,
            train,
            preprocess: Preprocess { bandpass_hz },
            detect,
            config_file: doc.get("run.config_file").map(str::to_string),
            overrides: doc.get("run.overrides").map(|s| s.split(' ').map(str::to_string).collect()).unwrap_or_default(),
        })
    }

    /// Same run with both seeds shifted, for fold `i`.
    pub fn with_seed_offset(&self, i: u64) -> Self {
        let mut c = self.clone();
        c.model.seed = c.model.seed.wrapping_add(i);
        c.train.seed = c.train.seed.wrapping_add(i);
        c
    }

    pub fn to_doc(&self) -> KvDoc {
        let mut d = KvDoc::new();
        d.set("run.preset", self.preset.name());
        if let Some(f) = &self.config_file {
            d.set("run.config_file", f);
        }
        if !self.overrides.is_empty() {
            d.set("run.overrides", self.overrides.join(" "));
        }
        d.merge(&self.model.to_kv("model"));
        d.merge(&self.train.to_kv("train"));
        if let Some((lo, hi)) = self.preprocess.bandpass_hz {
            d.set("preprocess.bandpass_low_hz", lo);
            d.set("preprocess.bandpass_high_hz", hi);
        }
        d.set("detect.threshold", self.detect.threshold);
        d.set("detect.min_hold_s", self.detect.min_hold_s);
        d.set("detect.margin_s", self.detect.margin_s);
        d.set("detect.rearm_below", self.detect.rearm_below);
        d
    }

    pub fn render(&self) -> String {
        self.to_doc().render()
    }

    /// Reads the `config.ini` a previous run wrote.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let doc = KvDoc::parse(&text)?;
        let get = |k: &str| -> Result<usize> {
            doc.parse_value(&format!("model.{k}"))?.with_context(|| format!("{} has no model.{k}", path.display()))
        };
        let dims = Dims {
            n_channels: get("n_channels")?,
            n_times: get("n_times")?,
            fs: get("sampling_rate")? as f64,
            n_classes: get("n_classes")?,
        };
        RunConfig::from_doc(&doc, dims)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims { n_channels: 8, n_times: 256, fs: 128.0, n_classes: 2 }
    }

    #[test]
    fn defaults_are_mi() {
        let c = ConfigArgs::default().resolve(dims()).unwrap();
        assert_eq!(c.model.kernel_sizes, vec![100, 60, 20]);
        assert_eq!(c.train, TrainConfig { seed: c.train.seed, ..TrainConfig::default() });
    }

    #[test]
    fn ssvep_preset_kernels() {
        let a = ConfigArgs { preset: Some(Preset::Ssvep), ..Default::default() };
        assert_eq!(a.resolve(dims()).unwrap().model.kernel_sizes, vec![20, 10, 5]);
    }

    #[test]
    fn render_round_trips() {
        let a = ConfigArgs {
            seed: Some(5),
            bandpass: Some("4,40".into()),
            overrides: vec!["detect.threshold=0.7".into()],
            ..Default::default()
        };
        let c = a.resolve(dims()).unwrap();
        let back = RunConfig::from_doc(&KvDoc::parse(&c.render()).unwrap(), dims()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.preprocess.bandpass_hz, Some((4.0, 40.0)));
        assert_eq!(back.detect.threshold, 0.7);
        assert_eq!(back.model.seed, 5);
    }

    #[test]
    fn unknown_key_is_usage_error() {
        let a = ConfigArgs { overrides: vec!["train.speed=3".into()], ..Default::default() };
        let e = a.resolve(dims()).unwrap_err();
        assert!(e.downcast_ref::<UsageError>().is_some());
    }

    #[test]
    fn dim_mismatch_rejected() {
        let a = ConfigArgs { overrides: vec!["model.n_channels=4".into()], ..Default::default() };
        assert!(a.resolve(dims()).is_err());
    }

    #[test]
    fn invariant_violation_rejected() {
        let a = ConfigArgs { patience: Some(50), max_epochs: Some(10), ..Default::default() };
        assert!(a.resolve(dims()).unwrap_err().downcast_ref::<UsageError>().is_some());
    }
}
