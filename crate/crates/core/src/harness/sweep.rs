use std::fmt::Write as _;
use std::path::Path;

use super::config::ExperimentConfig;
use super::experiment::{
    build_report, fit_hmm, load_dataset, model_config, pretrain_windows, score_model, train_config, train_variant,
    EvalWindows, FailureRecord, Predictor, CONSTANT_MODEL, GAN_MODEL, HMM_MODEL, MODEL_COLUMNS, NO_DIS_MODEL,
};
use crate::metrics::MetricsReport;
use crate::seqmodels::ModelConfig;
use crate::synthgen::window_dataset;
use crate::training::pretrain_encoder;
use crate::{Error, Result};

pub const SWEEP_HEADER: &str = "t_past,t_future,status,Constant Model,HMM,Ours w/o Dis.,SUPR-GAN";

/// One `(T_p, T_f)` row of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub t_past: usize,
    pub t_future: usize,
    /// Why the row was skipped, if it was.
    pub invalid: Option<String>,
    pub report: Option<MetricsReport>,
    pub failures: Vec<FailureRecord>,
}

impl SweepRow {
    /// Normalized LD of `model`, if the row ran and scored it.
    pub fn normalized_ld(&self, model: &str) -> Option<f64> {
        self.report.as_ref()?.model(model).map(|m| m.normalized_ld_overall)
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        let status = match (&r.invalid, r.failures.is_empty()) {
            (Some(_), _) => "invalid",
            (None, true) => "ok",
            (None, false) => "diverged",
        };
        let _ = write!(s, "{},{},{status}", r.t_past, r.t_future);
        for m in MODEL_COLUMNS {
            match r.normalized_ld(m) {
                Some(v) => {
                    let _ = write!(s, ",{v:.4}");
                }
                None => s.push_str(",-"),
            }
        }
        s.push('\n');
    }
    s
}

/// Normalized edit distance per model for every configured horizon pair.
///
/// The encoder and HMM are trained once on the base `model` horizons and
/// shared by all rows. The generator is retrained per row from that encoder.
/// Rows whose horizons do not fit in the shortest video are marked invalid.
pub fn sweep_horizons(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let base = model_config(cfg, &data);
    base.validate()?;
    let pre = pretrain_windows(&data, &base)?;
    let (encoder, _) = pretrain_encoder(&pre, &base, &train_config(cfg))?;
    let hmm = fit_hmm(cfg, &encoder, &pre, base.n_phases)?;
    let shortest = data.all_videos().map(|v| v.seq.len()).min().unwrap_or(0);

    let mut rows = vec![];
    for &(tp, tf) in &cfg.sweep.horizons {
        let mut row = SweepRow {
            t_past: tp,
            t_future: tf,
            invalid: None,
            report: None,
            failures: vec![],
        };
        if tp + tf > shortest {
            row.invalid = Some(format!("T_p + T_f = {} exceeds the shortest video ({shortest} s)", tp + tf));
            rows.push(row);
            continue;
        }
        let model = ModelConfig {
            t_past: tp,
            t_future: tf,
            ..base.clone()
        };
        let eval = EvalWindows::build(&data, tp, tf)?;
        if eval.transitions.is_empty() || eval.ld.is_empty() {
            row.invalid = Some("no evaluation windows".into());
            rows.push(row);
            continue;
        }
        let gan_windows = window_dataset(&data.train, tp, tf, cfg.eval.gan_window_stride)?;
        let n_s = cfg.train.n_samples;
        let mut scores = vec![
            score_model(cfg, &model, CONSTANT_MODEL, &Predictor::Constant { encoder: &encoder }, &eval)?,
            score_model(cfg, &model, HMM_MODEL, &Predictor::Hmm { encoder: &encoder, hmm: &hmm }, &eval)?,
        ];
        let variants: &[bool] = if cfg.sweep.include_ablation { &[false, true] } else { &[true] };
        for &use_dis in variants {
            let (g, _, fail) = train_variant(cfg, &model, &gan_windows, &encoder, use_dis, None)?;
            let name = if use_dis { GAN_MODEL } else { NO_DIS_MODEL };
            let p = Predictor::Generator {
                params: &g,
                n_samples: n_s,
            };
            scores.push(score_model(cfg, &model, name, &p, &eval)?);
            row.failures.extend(fail);
        }
        row.report = Some(build_report(cfg, &data, &model, &eval, scores));
        rows.push(row);
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("sweep.csv");
        std::fs::write(&path, sweep_csv(&rows)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(rows)
}
