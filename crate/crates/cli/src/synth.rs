use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use msnn::data::{
    synth_bandpower, synth_seizure_record, synth_ssvep, write_epochs, write_record, BandpowerParams, SeizureParams,
    SsvepParams,
};
use serde_json::json;

use crate::config::env_seed;

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(subcommand)]
    pub kind: SynthKind,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output file; the ground truth goes next to it as <out>.truth.json
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    /// Sampling rate in Hz
    #[arg(long, default_value_t = 128.0)]
    pub fs: f64,
    /// Falls back to MSNN_SEED, then 0
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum SynthKind {
    /// Two-class band-power task: 10 Hz on channels 3-4 against 22 Hz on 5-6
    Bandpower {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Trial length in seconds
        #[arg(long, default_value_t = 2.0)]
        seconds: f64,
        /// Background noise standard deviation
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
    },
    /// Four-class steady-state visual evoked responses
    Ssvep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 2.0)]
        seconds: f64,
        /// Stimulus frequencies in Hz, one class each
        #[arg(long, value_delimiter = ',', default_values_t = SsvepParams::STIMULUS_HZ)]
        freqs: Vec<f64>,
        /// Fundamental amplitude over background standard deviation
        #[arg(long, default_value_t = 1.0)]
        snr: f64,
        #[arg(long, default_value_t = 2)]
        harmonics: usize,
    },
    /// Continuous records with annotated rhythmic bursts
    Seizure {
        #[command(flatten)]
        common: Common,
        /// Number of records; with more than one, files are named <stem>_<i>.<ext>
        #[arg(long, default_value_t = 1)]
        records: usize,
        /// Record length in seconds
        #[arg(long, default_value_t = 300.0)]
        duration: f64,
        /// Events per record
        #[arg(long, default_value_t = 3)]
        events: usize,
        /// Event length in seconds
        #[arg(long, default_value_t = 20.0)]
        event_seconds: f64,
    },
}

fn seed(s: Option<u64>) -> Result<u64> {
    Ok(match s {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    })
}

fn samples(seconds: f64, fs: f64) -> usize {
    (seconds * fs).round() as usize
}

fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".truth.json");
    PathBuf::from(s)
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn numbered(out: &Path, i: usize, n: usize) -> PathBuf {
    if n == 1 {
        return out.to_path_buf();
    }
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(e) => format!("{stem}_{i}.{}", e.to_string_lossy()),
        None => format!("{stem}_{i}"),
    };
    out.with_file_name(name)
}

pub fn run(args: &SynthArgs) -> Result<()> {
    match &args.kind {
        SynthKind::Bandpower { common, trials, seconds, noise } => {
            let mut p = BandpowerParams::two_class(*trials, common.channels, samples(*seconds, common.fs), common.fs, seed(common.seed)?);
            p.noise_sigma = *noise;
            let (set, truth) = synth_bandpower(&p)?;
            write_epochs(&common.out, &set).with_context(|| format!("writing {}", common.out.display()))?;
            write_json(&sidecar(&common.out), &json!({ "truth": truth, "params": p }))
        }
        SynthKind::Ssvep { common, trials, seconds, freqs, snr, harmonics } => {
            let mut p = SsvepParams::four_class(*trials, common.channels, samples(*seconds, common.fs), common.fs, seed(common.seed)?);
            p.freqs_hz = freqs.clone();
            p.snr = *snr;
            p.harmonics = *harmonics;
            let (set, truth) = synth_ssvep(&p)?;
            write_epochs(&common.out, &set).with_context(|| format!("writing {}", common.out.display()))?;
            write_json(&sidecar(&common.out), &json!({ "truth": truth, "params": p }))
        }
        SynthKind::Seizure { common, records, duration, events, event_seconds } => {
            let base = seed(common.seed)?;
            for i in 0..*records {
                let p = SeizureParams::new(*duration, *events, *event_seconds, common.channels, common.fs, base + i as u64);
                let rec = synth_seizure_record(&p)?;
                let out = numbered(&common.out, i, *records);
                write_record(&out, &rec).with_context(|| format!("writing {}", out.display()))?;
                write_json(&sidecar(&out), &json!({ "annotations": rec.annotations(), "params": p }))?;
            }
            Ok(())
        }
    }
}
