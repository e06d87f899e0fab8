use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use msnn::data::{kfold, leave_one_record_out, read_epochs, read_record, ContinuousRecord, EpochSet};
use msnn::eval::{aggregate_folds, evaluate, ConfusionMatrix};
use msnn::model::load;
use msnn::preproc::{normalize_record, NormStats};
use msnn::MsnnModel;
use serde_json::json;

use crate::config::{usage, ConfigArgs, Dims, RunConfig};
use crate::output::RunDir;
use crate::pipeline::{self, score_record, trace_csv};
use crate::train::{CONFIG_FILE, MODEL_FILE, NORM_FILE};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory written by `msnn train`
    #[arg(long, conflicts_with_all = ["kfold", "loro"])]
    pub run: Option<PathBuf>,
    /// Epoch file to score, or to cross-validate with --kfold
    #[arg(long, conflicts_with_all = ["record", "loro"])]
    pub data: Option<PathBuf>,
    /// Continuous record to scan for onsets (needs --run)
    #[arg(long, requires = "run")]
    pub record: Option<PathBuf>,
    /// Stratified k-fold cross-validation on --data
    #[arg(long, value_name = "K", requires = "data")]
    pub kfold: Option<usize>,
    /// Leave-one-record-out over these records
    #[arg(long, value_name = "RECORD", num_args = 1..)]
    pub loro: Vec<PathBuf>,
    /// Folds or splits trained at once
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Fresh output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Trace stride in samples
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Class whose probability forms the trace
    #[arg(long, default_value_t = 1)]
    pub positive_class: usize,
    /// Training window length for --loro
    #[arg(long, default_value_t = 2.0)]
    pub window_seconds: f64,
    /// Spacing of training windows for --loro
    #[arg(long, default_value_t = 1.0)]
    pub train_stride_seconds: f64,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn run(args: &EvalArgs) -> Result<()> {
    ensure!(args.jobs >= 1, usage("--jobs must be at least 1"));
    if let Some(run_dir) = &args.run {
        if args.config.config.is_some() || !args.config.override_summary().iter().all(|o| o.starts_with("detect.")) {
            bail!(usage("training flags cannot be combined with --run; only --set detect.* applies"));
        }
        let (cfg, norm, model) = load_run(run_dir, &args.config)?;
        return match (&args.data, &args.record) {
            (Some(d), None) => epoch_mode(args, &cfg, &norm, &model, d),
            (None, Some(r)) => record_mode(args, &cfg, &norm, &model, r),
            _ => Err(usage("--run needs exactly one of --data or --record")),
        };
    }
    if let Some(k) = args.kfold {
        return kfold_mode(args, k, args.data.as_deref().expect("clap enforces --data"));
    }
    if !args.loro.is_empty() {
        return loro_mode(args);
    }
    Err(usage("choose --run, --kfold or --loro"))
}

/// Loads a training run, applying detection overrides from `extra`.
pub fn load_run(dir: &Path, extra: &ConfigArgs) -> Result<(RunConfig, NormStats, MsnnModel)> {
    let model_path = dir.join(MODEL_FILE);
    let model = load(&model_path).with_context(|| format!("loading checkpoint {}", model_path.display()))?;
    let mut cfg = RunConfig::load(&dir.join(CONFIG_FILE))?;
    ensure!(
        cfg.model == model.config,
        "{} does not match the checkpoint in {}",
        CONFIG_FILE,
        dir.display()
    );
    let norm_path = dir.join(NORM_FILE);
    let text = std::fs::read_to_string(&norm_path).with_context(|| format!("reading {}", norm_path.display()))?;
    let norm: NormStats = serde_json::from_str(&text).with_context(|| format!("parsing {}", norm_path.display()))?;
    ensure!(
        norm.n_channels() == model.config.n_channels,
        "normalisation covers {} channels, model has {}",
        norm.n_channels(),
        model.config.n_channels
    );
    if !extra.overrides.is_empty() {
        let mut doc = cfg.to_doc();
        doc.merge(&extra.to_doc()?);
        let dims = Dims {
            n_channels: cfg.model.n_channels,
            n_times: cfg.model.n_times,
            fs: cfg.model.sampling_rate as f64,
            n_classes: cfg.model.n_classes,
        };
        cfg = RunConfig::from_doc(&doc, dims)?;
    }
    Ok((cfg, norm, model))
}

fn check_dims(model: &MsnnModel, n_channels: usize, n_times: Option<usize>, fs: f64) -> Result<()> {
    let c = &model.config;
    let times_ok = n_times.is_none_or(|t| t == c.n_times);
    ensure!(
        n_channels == c.n_channels && times_ok && (fs - c.sampling_rate as f64).abs() < 1e-9,
        "data has {n_channels} channels{} at {fs} Hz; the model expects {} channels, {} samples at {} Hz",
        n_times.map(|t| format!(", {t} samples")).unwrap_or_default(),
        c.n_channels,
        c.n_times,
        c.sampling_rate
    );
    Ok(())
}

fn epoch_mode(args: &EvalArgs, cfg: &RunConfig, norm: &NormStats, model: &MsnnModel, path: &Path) -> Result<()> {
    let data = read_epochs(path).with_context(|| format!("reading {}", path.display()))?;
    check_dims(model, data.n_channels(), Some(data.n_times()), data.fs)?;
    ensure!(data.n_classes <= model.config.n_classes, "data has more classes than the model");
    let mut out = RunDir::create(&args.out)?;
    out.write(CONFIG_FILE, cfg.render())?;
    let test = pipeline::prepare_epochs(cfg, norm, &data)?;
    let report = evaluate(model, &test)?;
    out.write_json("metrics.json", &report)?;
    out.write("confusion.csv", report.confusion.to_csv())?;
    out.finish("eval", json!({ "mode": "epochs", "accuracy": report.accuracy }))
}

fn record_mode(args: &EvalArgs, cfg: &RunConfig, norm: &NormStats, model: &MsnnModel, path: &Path) -> Result<()> {
    let rec = read_record(path).with_context(|| format!("reading {}", path.display()))?;
    check_dims(model, rec.n_channels(), None, rec.fs())?;
    let mut out = RunDir::create(&args.out)?;
    out.write(CONFIG_FILE, cfg.render())?;
    let prepared = pipeline::prepare_record(cfg, norm, &rec)?;
    let s = score_record(model, cfg, &prepared, args.stride, args.positive_class)?;
    out.write_json("detection.json", &s.detection)?;
    out.write("trace.csv", trace_csv(&s.trace, rec.fs(), args.stride, model.config.n_times))?;
    out.finish(
        "eval",
        json!({
            "mode": "record",
            "detected_events": s.detection.detected_events,
            "false_detections": s.detection.false_detections,
        }),
    )
}

/// Runs `n` jobs on up to `jobs` threads; results come back in index order.
fn run_jobs<T: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.min(n) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                slots.lock().expect("no job panicked")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("no job panicked").into_iter().map(|r| r.expect("every job ran")).collect()
}

fn kfold_mode(args: &EvalArgs, k: usize, path: &Path) -> Result<()> {
    let data = read_epochs(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = args.config.resolve(Dims::of(&data))?;
    let folds = kfold(&data.labels, k, cfg.train.seed).map_err(|e| usage(e.to_string()))?;
    let mut out = RunDir::create(&args.out)?;
    out.write(CONFIG_FILE, cfg.render())?;

    let results = run_jobs(folds.len(), args.jobs, |i| {
        let fold_cfg = cfg.with_seed_offset(i as u64);
        let t = pipeline::train(&data.subset(&folds[i].train), &fold_cfg).with_context(|| format!("fold {i}"))?;
        let test = pipeline::prepare_epochs(&fold_cfg, &t.norm, &data.subset(&folds[i].test))?;
        let report = evaluate(&t.model, &test)?;
        Ok((t.report, report))
    })?;

    let mut total = ConfusionMatrix::from_predictions(&[], &[], data.n_classes)?;
    let mut rows = Vec::new();
    for (i, (train, eval)) in results.iter().enumerate() {
        total.add(&eval.confusion);
        out.write_json(
            &format!("fold_{i}.json"),
            &json!({
                "fold": i,
                "n_train": folds[i].train.len(),
                "n_test": folds[i].test.len(),
                "model_seed": cfg.model.seed + i as u64,
                "train_seed": cfg.train.seed + i as u64,
                "epochs_run": train.epochs.len(),
                "best_epoch": train.best_epoch,
                "best_val_accuracy": train.best_val_accuracy,
                "metrics": eval,
            }),
        )?;
        rows.push(BTreeMap::from([
            ("accuracy".to_string(), eval.accuracy),
            ("best_val_accuracy".to_string(), train.best_val_accuracy),
        ]));
    }
    let summary = aggregate_folds(&rows)?;
    out.write_json("aggregate.json", &json!({ "folds": folds.len(), "metrics": summary }))?;
    out.write("confusion.csv", total.to_csv())?;
    out.finish("eval", json!({ "mode": "kfold", "folds": folds.len(), "accuracy": summary["accuracy"].mean }))
}

fn loro_mode(args: &EvalArgs) -> Result<()> {
    let records = args
        .loro
        .iter()
        .map(|p| read_record(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<ContinuousRecord>>>()?;
    let first = &records[0];
    for (r, p) in records.iter().zip(&args.loro) {
        ensure!(
            r.n_channels() == first.n_channels() && r.fs() == first.fs(),
            "{} differs in channels or sampling rate from {}",
            p.display(),
            args.loro[0].display()
        );
    }
    let fs = first.fs();
    let window = (args.window_seconds * fs).round() as usize;
    let train_stride = (args.train_stride_seconds * fs).round() as usize;
    ensure!(window > 0 && train_stride > 0, usage("window and training stride must be at least one sample"));
    let dims = Dims { n_channels: first.n_channels(), n_times: window, fs, n_classes: 2 };
    let cfg = args.config.resolve(dims)?;
    let seizure: Vec<bool> = records.iter().map(|r| !r.annotations().is_empty()).collect();
    let splits = leave_one_record_out(&seizure).map_err(|e| usage(e.to_string()))?;
    let mut out = RunDir::create(&args.out)?;
    out.write(CONFIG_FILE, cfg.render())?;

    let filtered = records
        .iter()
        .map(|r| pipeline::filter_record(&cfg.preprocess, r))
        .collect::<Result<Vec<_>>>()?;
    let results = run_jobs(splits.len(), args.jobs, |i| {
        let split = &splits[i];
        let split_cfg = cfg.with_seed_offset(i as u64);
        let train_recs: Vec<&ContinuousRecord> = split.train.iter().map(|&j| &filtered[j]).collect();
        let set: EpochSet = pipeline::pooled_windows(&train_recs, window, train_stride)?;
        let t = pipeline::train_filtered(&set, &split_cfg).with_context(|| format!("split {i}"))?;
        let held = &filtered[split.test];
        let held = held.with_samples(normalize_record(&t.norm, held.samples())?)?;
        let score = score_record(&t.model, &split_cfg, &held, args.stride, args.positive_class)?;
        Ok((t.report, score))
    })?;

    let (mut events, mut detected, mut false_det, mut latencies) = (0, 0, 0, Vec::new());
    for (i, (train, score)) in results.iter().enumerate() {
        let d = &score.detection;
        events += d.events.len();
        detected += d.detected_events;
        false_det += d.false_detections;
        latencies.extend(d.events.iter().filter_map(|e| e.latency_s));
        out.write_json(
            &format!("split_{i}.json"),
            &json!({
                "test_record": args.loro[splits[i].test].display().to_string(),
                "train_records": splits[i].train.iter().map(|&j| args.loro[j].display().to_string()).collect::<Vec<_>>(),
                "epochs_run": train.epochs.len(),
                "best_epoch": train.best_epoch,
                "best_val_accuracy": train.best_val_accuracy,
                "detection": d,
            }),
        )?;
        out.write(&format!("trace_{i}.csv"), trace_csv(&score.trace, fs, args.stride, window))?;
    }
    let mean_latency = (!latencies.is_empty()).then(|| latencies.iter().sum::<f64>() / latencies.len() as f64);
    let aggregate = json!({
        "splits": splits.len(),
        "events": events,
        "detected_events": detected,
        "sensitivity": if events > 0 { detected as f64 / events as f64 } else { f64::NAN },
        "false_detections": false_det,
        "mean_latency_s": mean_latency,
        "detect": cfg.detect,
    });
    out.write_json("aggregate.json", &aggregate)?;
    out.finish("eval", json!({ "mode": "loro", "splits": splits.len() }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jobs_keep_order() {
        let r = run_jobs(7, 3, |i| Ok(i * i)).unwrap();
        assert_eq!(r, vec![0, 1, 4, 9, 16, 25, 36]);
    }

    #[test]
    fn job_error_propagates() {
        let r = run_jobs(4, 2, |i| if i == 2 { bail!("boom") } else { Ok(i) });
        assert!(r.is_err());
    }
}
