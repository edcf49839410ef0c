//! Command-line front end. Every subcommand reads the same config file;
//! stages that need earlier artifacts read them from the output directory.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use super::config::{DataSource, ExperimentConfig};
use super::experiment::{
    evaluation_windows, prepare, run_experiment, stage_evaluate, stage_pretrain, stage_train, write_timelines,
    OutputDir, Pretrained, GAN_FILE, HMM_FILE, NO_DIS_FILE, PRETRAINED_FILE,
};
use super::sweep::sweep_horizons;
use crate::baselines::HmmParams;
use crate::seqmodels::{Checkpoint, GeneratorParams, ModelConfig};
use crate::synthgen::{format_annotations, format_features};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "phasecast", version, about = "Future surgical phase trajectory prediction")]
pub struct Cli {
    /// Experiment config (TOML). Defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides `output_dir`; default `runs/default`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic dataset as annotation and feature files.
    GenerateData,
    /// Pretrain the encoder and fit the HMM.
    Pretrain,
    /// Train the generator with and without the discriminator.
    Train,
    /// Score all four models and write the report.
    Evaluate,
    /// Normalized edit distance over the configured horizon pairs.
    Sweep,
    /// Timeline figures for randomly chosen test transitions.
    Plot,
    /// Every stage in order.
    FullRun,
}

/// Machine-readable failure, printed to stderr as one JSON line.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub status: &'static str,
    pub kind: &'static str,
    pub message: String,
    pub violations: Vec<String>,
}

impl ErrorRecord {
    pub fn new(e: &Error) -> Self {
        ErrorRecord {
            status: "error",
            kind: e.kind(),
            message: e.to_string(),
            violations: match e {
                Error::Config(v) => v.clone(),
                _ => vec![],
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error record serializes")
    }
}

/// Exit status for an error: 2 for configuration problems, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

pub fn load_config(cli: &Cli) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs/default"));
    Ok((cfg, out))
}

fn load_generator(out: &OutputDir, name: &str, model: &ModelConfig) -> Result<GeneratorParams> {
    let path = out.path(name);
    let ck = Checkpoint::load(&path)?;
    if ck.model != *model {
        return Err(Error::Invalid(format!(
            "{}: model settings differ from the config; rerun the earlier stages",
            path.display()
        )));
    }
    Ok(ck.generator)
}

fn load_pretrained(out: &OutputDir, model: &ModelConfig) -> Result<Pretrained> {
    Ok(Pretrained {
        encoder: load_generator(out, PRETRAINED_FILE, model)?,
        hmm: HmmParams::load(&out.path(HMM_FILE))?,
        past_accuracy: f64::NAN,
    })
}

fn require(out: &Path, names: &[&str]) -> Result<()> {
    let missing: Vec<String> = names
        .iter()
        .filter(|n| !out.join(n).is_file())
        .map(|n| format!("missing {}", out.join(n).display()))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(missing))
    }
}

/// Runs one subcommand and returns a one-line summary for stdout.
pub fn run(cli: &Cli) -> Result<String> {
    let (cfg, out_path) = load_config(cli)?;
    let (data, model) = prepare(&cfg)?;
    match cli.command {
        Command::GenerateData => {
            if cfg.data.source != DataSource::Synthetic {
                return Err(Error::Config(vec!["generate-data needs data.source = \"synthetic\"".into()]));
            }
            let mut out = OutputDir::create(&out_path)?;
            let videos: Vec<_> = data.all_videos().collect();
            let seqs: Vec<_> = videos.iter().map(|v| v.seq.clone()).collect();
            out.write("annotations.csv", &format_annotations(&seqs))?;
            out.write(
                "features.csv",
                &format_features(videos.iter().map(|v| (v.seq.video_id.as_str(), &v.features))),
            )?;
            out.write("phases.txt", &(data.phase_names.join("\n") + "\n"))?;
            Ok(format!("wrote {} videos to {}", videos.len(), out_path.display()))
        }
        Command::Pretrain => {
            let mut out = OutputDir::create(&out_path)?;
            let pre = stage_pretrain(&cfg, &data, &model, &mut out)?;
            Ok(format!("held-out past phase accuracy {:.4}", pre.past_accuracy))
        }
        Command::Train => {
            require(&out_path, &[PRETRAINED_FILE])?;
            let mut out = OutputDir::create(&out_path)?;
            let encoder = load_generator(&out, PRETRAINED_FILE, &model)?;
            let t = stage_train(&cfg, &data, &model, &encoder, &mut out)?;
            Ok(format!("trained 2 variants, {} failure(s)", t.failures.len()))
        }
        Command::Evaluate => {
            require(&out_path, &[PRETRAINED_FILE, HMM_FILE, NO_DIS_FILE, GAN_FILE])?;
            let mut out = OutputDir::create(&out_path)?;
            let pre = load_pretrained(&out, &model)?;
            let no_dis = load_generator(&out, NO_DIS_FILE, &model)?;
            let gan = load_generator(&out, GAN_FILE, &model)?;
            let report = stage_evaluate(&cfg, &data, &model, &pre, &no_dis, &gan, &mut out)?;
            Ok(summary_line(&report))
        }
        Command::Sweep => {
            let rows = sweep_horizons(&cfg, Some(&out_path))?;
            let invalid = rows.iter().filter(|r| r.invalid.is_some()).count();
            Ok(format!("{} rows ({invalid} invalid) -> {}", rows.len(), out_path.join("sweep.csv").display()))
        }
        Command::Plot => {
            require(&out_path, &[GAN_FILE])?;
            let out = OutputDir::create(&out_path)?;
            let gan = load_generator(&out, GAN_FILE, &model)?;
            let eval = evaluation_windows(&data, &model)?;
            let files = write_timelines(&cfg, &model, &data, &gan, &eval.transitions, &out.path("plots"))?;
            Ok(format!("wrote {} figure(s)", files.len()))
        }
        Command::FullRun => {
            let o = run_experiment(&cfg, &out_path)?;
            Ok(format!("{}; {} failure(s)", summary_line(&o.report), o.failures.len()))
        }
    }
}

fn summary_line(report: &crate::metrics::MetricsReport) -> String {
    report
        .models
        .iter()
        .map(|m| match m.overall.accuracy() {
            Some(a) => format!("{}: {:.3}", m.name, a),
            None => format!("{}: -", m.name),
        })
        .collect::<Vec<_>>()
        .join(", ")
}
