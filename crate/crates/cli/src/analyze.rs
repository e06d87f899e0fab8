use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use clap::{Args, ValueEnum};
use msnn::data::{read_epochs, EpochSet};
use msnn::interpret::{
    activation_patterns, export_features, lrp, patterns_csv, relevance_csv, relevance_spectrum, spectrum_csv,
    FeatureStage, PatternMode, DEFAULT_EPSILON,
};
use msnn::preproc::{welch_psd_with, WelchParams};
use msnn::Tensor;
use serde_json::{json, Value};

use crate::config::{usage, ConfigArgs};
use crate::eval::load_run;
use crate::output::RunDir;
use crate::pipeline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Analysis {
    /// Relevance map of the input for one class
    Lrp,
    /// Spectrum of the relevance time course next to the input PSD
    Spectrum,
    /// Activation patterns of the spatial filters
    Patterns,
    /// Learned feature matrices
    Features,
    /// Welch PSD of one channel
    Psd,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(value_enum)]
    pub analysis: Analysis,
    /// Directory written by `msnn train` (not needed for psd)
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Epoch file to analyse
    #[arg(long)]
    pub data: PathBuf,
    /// Fresh output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Target class; lrp and spectrum use the epochs of this class
    #[arg(long)]
    pub class: Option<usize>,
    /// Stabiliser of the relevance rule
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Analyse at most this many epochs (lrp, spectrum)
    #[arg(long)]
    pub limit: Option<usize>,
    /// Branches for patterns: a single index or a range such as 1..3
    #[arg(long, default_value = "1..3")]
    pub branch: String,
    /// Pattern covariance inversion: per-filter or joint
    #[arg(long, default_value = "per-filter")]
    pub mode: String,
    /// Feature stage: gap_concat or f<k>_sst
    #[arg(long, default_value = "gap_concat")]
    pub stage: String,
    /// Channel for psd, by name or index
    #[arg(long)]
    pub channel: Option<String>,
}

/// `"2"` or `"1..3"` (inclusive).
pub fn parse_branches(s: &str) -> Result<Vec<usize>> {
    let bad = || usage(format!("--branch expects k or a..b, got {s:?}"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim_start_matches('=').trim().parse().map_err(|_| bad())?),
        None => {
            let k = s.trim().parse().map_err(|_| bad())?;
            (k, k)
        }
    };
    if a == 0 || b < a {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

fn file_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn select(data: &EpochSet, class: Option<usize>, limit: Option<usize>) -> Vec<usize> {
    let idx = (0..data.len()).filter(|&i| class.is_none_or(|c| data.labels[i] == c));
    idx.take(limit.unwrap_or(usize::MAX)).collect()
}

pub fn run(args: &AnalyzeArgs) -> Result<()> {
    let data = read_epochs(&args.data).with_context(|| format!("reading {}", args.data.display()))?;
    if args.analysis == Analysis::Psd {
        return psd(args, &data);
    }
    let run_dir = args.run.as_ref().ok_or_else(|| usage("this analysis needs --run"))?;
    let (cfg, norm, model) = load_run(run_dir, &ConfigArgs::default())?;
    let c = &model.config;
    ensure!(
        data.n_channels() == c.n_channels && data.n_times() == c.n_times,
        "data epochs are [{}, {}], the model expects [{}, {}]",
        data.n_channels(),
        data.n_times(),
        c.n_channels,
        c.n_times
    );
    let data = pipeline::prepare_epochs(&cfg, &norm, &data)?;
    let class = args.class.unwrap_or(0);
    if let Some(k) = args.class {
        ensure!(k < c.n_classes, usage(format!("--class {k} out of range for {} classes", c.n_classes)));
    }
    let names = &data.channel_names;

    match args.analysis {
        Analysis::Lrp => {
            let idx = select(&data, Some(class), args.limit);
            ensure!(!idx.is_empty(), "no epochs of class {class}");
            let mut out = RunDir::create(&args.out)?;
            let maps = msnn::par::map(&idx, |&i| lrp(&model, &data.epochs[i], class, args.epsilon));
            let maps = maps.into_iter().collect::<msnn::Result<Vec<_>>>()?;
            let errs: Vec<f64> = maps.iter().map(|m| m.conservation_error()).collect();
            let mut mean = vec![0.0; c.n_channels * c.n_times];
            for m in &maps {
                mean.iter_mut().zip(m.relevance.data()).for_each(|(a, b)| *a += b / maps.len() as f64);
            }
            let mut avg = maps[0].clone();
            avg.relevance = Tensor::from_vec([c.n_channels, c.n_times, 1], mean)?;
            let name = format!("lrp_class{class}.csv");
            out.write(&name, relevance_csv(&avg, names))?;
            let mass = avg.channel_abs_mass();
            let channel_fraction: Vec<Value> = names
                .iter()
                .zip(&mass)
                .map(|(n, m)| json!({ "channel": n, "abs_fraction": m }))
                .collect();
            out.finish(
                "analyze lrp",
                json!({
                    "class": class,
                    "epsilon": args.epsilon,
                    "epochs": idx.len(),
                    "conservation": {
                        "max_relative_error": errs.iter().cloned().fold(0.0, f64::max),
                        "mean_relative_error": errs.iter().sum::<f64>() / errs.len() as f64,
                    },
                    "channel_mass": channel_fraction,
                }),
            )
        }
        Analysis::Spectrum => {
            let idx = select(&data, Some(class), args.limit);
            ensure!(!idx.is_empty(), "no epochs of class {class}");
            let params = WelchParams::default();
            let mut out = RunDir::create(&args.out)?;
            let per = msnn::par::map(&idx, |&i| -> msnn::Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
                let m = lrp(&model, &data.epochs[i], class, args.epsilon)?;
                let (f, r) = relevance_spectrum(&m, data.fs, &params)?;
                let x = &data.epochs[i];
                let mut p = vec![0.0; f.len()];
                for ch in 0..c.n_channels {
                    let (_, pc) = welch_psd_with(&x.channel_series(ch, 0), data.fs, &params)?;
                    p.iter_mut().zip(pc).for_each(|(a, b)| *a += b / c.n_channels as f64);
                }
                Ok((f, r, p))
            });
            let per = per.into_iter().collect::<msnn::Result<Vec<_>>>()?;
            let freqs = per[0].0.clone();
            let n = per.len() as f64;
            let mut rel = vec![0.0; freqs.len()];
            let mut psd = vec![0.0; freqs.len()];
            for (_, r, p) in &per {
                rel.iter_mut().zip(r).for_each(|(a, b)| *a += b / n);
                psd.iter_mut().zip(p).for_each(|(a, b)| *a += b / n);
            }
            out.write(&format!("relevance_spectrum_class{class}.csv"), spectrum_csv(&freqs, &rel, "relevance"))?;
            out.write(&format!("input_psd_class{class}.csv"), spectrum_csv(&freqs, &psd, "power"))?;
            out.finish("analyze spectrum", json!({ "class": class, "epochs": idx.len(), "epsilon": args.epsilon }))
        }
        Analysis::Patterns => {
            let branches = parse_branches(&args.branch)?;
            let mode: PatternMode = args.mode.parse().map_err(|e: msnn::MsnnError| usage(e.to_string()))?;
            let n = c.branches();
            if let Some(&b) = branches.iter().find(|&&b| b > n) {
                return Err(usage(format!("branch {b} out of range 1..={n}")));
            }
            let mut out = RunDir::create(&args.out)?;
            for b in &branches {
                let p = activation_patterns(&model, &data, *b, mode)?;
                out.write(&format!("patterns_branch{b}.csv"), patterns_csv(&p, names))?;
            }
            out.finish("analyze patterns", json!({ "branches": branches, "mode": args.mode }))
        }
        Analysis::Features => {
            let stage: FeatureStage = args.stage.parse().map_err(|e: msnn::MsnnError| usage(e.to_string()))?;
            let mut out = RunDir::create(&args.out)?;
            let m = export_features(&model, &data, stage)?;
            out.write(&format!("features_{stage}.csv"), m.to_csv())?;
            out.write(&format!("features_{stage}.bin"), m.to_bytes()?)?;
            out.finish("analyze features", json!({ "stage": stage.to_string(), "rows": m.rows.len(), "dim": m.dim() }))
        }
        Analysis::Psd => unreachable!("handled above"),
    }
}

fn psd(args: &AnalyzeArgs, data: &EpochSet) -> Result<()> {
    let want = args.channel.as_deref().ok_or_else(|| usage("psd needs --channel"))?;
    let ch = data
        .channel_names
        .iter()
        .position(|n| n == want)
        .or_else(|| want.parse::<usize>().ok().filter(|&i| i < data.n_channels()))
        .ok_or_else(|| usage(format!("no channel {want:?}; available: {}", data.channel_names.join(", "))))?;
    let data = match &args.run {
        Some(dir) => {
            let (cfg, _, _) = load_run(dir, &ConfigArgs::default())?;
            pipeline::filter_epochs(&cfg.preprocess, data)?
        }
        None => data.clone(),
    };
    let idx = select(&data, args.class, args.limit);
    ensure!(!idx.is_empty(), "no epochs selected");
    let params = WelchParams::default();
    let mut out = RunDir::create(&args.out)?;
    let mut acc: Option<(Vec<f64>, Vec<f64>)> = None;
    for &i in &idx {
        let x = &data.epochs[i];
        let (f, p) = welch_psd_with(&x.channel_series(ch, 0), data.fs, &params)?;
        match &mut acc {
            Some((_, sum)) => sum.iter_mut().zip(p).for_each(|(a, b)| *a += b),
            None => acc = Some((f, p)),
        }
    }
    let (freqs, mut power) = acc.expect("at least one epoch");
    power.iter_mut().for_each(|v| *v /= idx.len() as f64);
    let name = &data.channel_names[ch];
    out.write(&format!("psd_{}.csv", file_safe(name)), spectrum_csv(&freqs, &power, "power"))?;
    out.finish("analyze psd", json!({ "channel": name, "epochs": idx.len(), "class": args.class }))
}
