use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use msnn::data::read_epochs;
use msnn::model::save;
use serde_json::json;

use crate::config::{ConfigArgs, Dims};
use crate::output::RunDir;
use crate::pipeline;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Epoch file (EPCH)
    #[arg(long)]
    pub data: PathBuf,
    /// Fresh output directory
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub const MODEL_FILE: &str = "model.msnn";
pub const NORM_FILE: &str = "norm_stats.json";
pub const CONFIG_FILE: &str = "config.ini";

pub fn run(args: &TrainArgs) -> Result<()> {
    let data = read_epochs(&args.data).with_context(|| format!("reading {}", args.data.display()))?;
    let cfg = args.config.resolve(Dims::of(&data))?;
    let mut out = RunDir::create(&args.out)?;
    out.write(CONFIG_FILE, cfg.render())?;

    let t = pipeline::train(&data, &cfg)?;
    save(&t.model, out.file(MODEL_FILE))?;
    out.register(MODEL_FILE);
    out.write_json(NORM_FILE, &t.norm)?;
    let mut report = t.report.to_json();
    report.push('\n');
    out.write("report.json", report)?;
    log::info!(
        "best epoch {:?}, validation accuracy {:.3}",
        t.report.best_epoch,
        t.report.best_val_accuracy
    );
    out.finish(
        "train",
        json!({
            "data": args.data.display().to_string(),
            "best_epoch": t.report.best_epoch,
            "best_val_accuracy": t.report.best_val_accuracy,
        }),
    )
}
