use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;

use super::config::{DataSource, ExperimentConfig};
use super::timeline::emit_timeline;
use crate::baselines::{constant_predict, hmm_baum_welch, hmm_forward, hmm_predict, BaumWelchOptions, HmmParams};
use crate::diffcore::{softmax, Tensor};
use crate::metrics::{
    avg_ld, paired_t_test, per_transition_accuracy, window_set_hash, MetricsReport, ModelScores,
    PairedComparison, Segment, TransitionCell, REFERENCE_HORIZON,
};
use crate::seqmodels::{past_logits_batch, sample_predictions, Checkpoint, GeneratorParams, ModelConfig, PredictionSampleSet};
use crate::synthgen::{
    generate_dataset, load_annotations, load_features, transition_windows, window_dataset, Dataset, Window,
};
use crate::training::{pretrain_encoder, train_gan, GanRun, TrainLog};
use crate::{derive_seed, seeded_rng, Error, Result};

pub const CONSTANT_MODEL: &str = "Constant Model";
pub const HMM_MODEL: &str = "HMM";
pub const NO_DIS_MODEL: &str = "Ours w/o Dis.";
pub const GAN_MODEL: &str = "SUPR-GAN";

/// Report columns, in order.
pub const MODEL_COLUMNS: [&str; 4] = [CONSTANT_MODEL, HMM_MODEL, NO_DIS_MODEL, GAN_MODEL];

/// Seed streams derived from `ExperimentConfig::seed`.
mod streams {
    pub const DATA: u64 = 101;
    pub const SPLIT: u64 = 102;
    pub const TRAIN: u64 = 103;
    pub const EVAL: u64 = 104;
    pub const PLOTS: u64 = 105;
    pub const HMM: u64 = 106;
}

/// Dataset described by the config (synthetic or from files).
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match cfg.data.source {
        DataSource::Synthetic => generate_dataset(&cfg.graph()?, &cfg.synth_config(), derive_seed(cfg.seed, streams::DATA)),
        DataSource::Files => {
            let phases = match &cfg.data.phases {
                Some(p) => p.clone(),
                None => cfg.graph()?.phases,
            };
            let ann = cfg.data.annotations.as_deref().expect("validated");
            let feat = cfg.data.features.as_deref().expect("validated");
            let seqs = load_annotations(ann, &phases)?;
            let features = load_features(feat)?;
            Dataset::from_parts(phases, seqs, features, cfg.data.train_fraction, derive_seed(cfg.seed, streams::SPLIT))
        }
    }
}

/// Model dimensions with the data-derived fields filled in.
pub fn model_config(cfg: &ExperimentConfig, data: &Dataset) -> ModelConfig {
    ModelConfig {
        n_phases: data.n_phases(),
        feature_dim: data.feature_dim(),
        ..cfg.model.clone()
    }
}

pub fn train_config(cfg: &ExperimentConfig) -> crate::training::TrainConfig {
    crate::training::TrainConfig {
        seed: derive_seed(cfg.seed, streams::TRAIN),
        ..cfg.train.clone()
    }
}

/// Non-overlapping training windows used for encoder pretraining and HMM fitting.
pub fn pretrain_windows(data: &Dataset, model: &ModelConfig) -> Result<Vec<Window>> {
    window_dataset(&data.train, model.t_past, model.t_future, model.t_past)
}

/// Encoder phase probabilities per frame of each window.
pub fn encoder_probabilities(encoder: &GeneratorParams, windows: &[Window]) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(256) {
        let feats: Vec<&Tensor> = chunk.iter().map(|w| &w.past_features).collect();
        for logits in past_logits_batch(encoder, &feats)? {
            out.push((0..logits.rows()).map(|t| softmax(logits.row_slice(t))).collect());
        }
    }
    Ok(out)
}

/// Baum-Welch on the encoder's outputs over the pretraining windows.
pub fn fit_hmm(cfg: &ExperimentConfig, encoder: &GeneratorParams, windows: &[Window], n_phases: usize) -> Result<HmmParams> {
    let obs = encoder_probabilities(encoder, windows)?;
    let fit = hmm_baum_welch(
        &obs,
        n_phases,
        &BaumWelchOptions {
            iters: cfg.eval.hmm_iters,
            seed: derive_seed(cfg.seed, streams::HMM),
            learn_confusion: cfg.eval.hmm_learn_confusion,
            init: None,
        },
    )?;
    Ok(fit.params)
}

/// A model that can be scored.
pub enum Predictor<'a> {
    Constant { encoder: &'a GeneratorParams },
    Hmm { encoder: &'a GeneratorParams, hmm: &'a HmmParams },
    Generator { params: &'a GeneratorParams, n_samples: usize },
}

impl Predictor<'_> {
    /// One prediction set per window. Windows must share their horizons.
    pub fn predict(&self, windows: &[Window], model: &ModelConfig, seed: u64) -> Result<Vec<PredictionSampleSet>> {
        let Some(first) = windows.first() else {
            return Ok(vec![]);
        };
        let t_f = first.t_future();
        let n_p = model.n_phases;
        match self {
            Predictor::Constant { encoder } => {
                let mut out = Vec::with_capacity(windows.len());
                for chunk in windows.chunks(256) {
                    let feats: Vec<&Tensor> = chunk.iter().map(|w| &w.past_features).collect();
                    for l in past_logits_batch(encoder, &feats)? {
                        let rows: Vec<Vec<f64>> = (0..l.rows()).map(|t| l.row_slice(t).to_vec()).collect();
                        out.push(PredictionSampleSet::from_labels(vec![constant_predict(&rows, t_f)?], n_p));
                    }
                }
                Ok(out)
            }
            Predictor::Hmm { encoder, hmm } => encoder_probabilities(encoder, windows)?
                .iter()
                .map(|obs| {
                    let f = hmm_forward(obs, hmm)?;
                    let last = f.posteriors.last().expect("non-empty past");
                    Ok(PredictionSampleSet::from_labels(
                        vec![hmm_predict(last, &hmm.transition, t_f)],
                        n_p,
                    ))
                })
                .collect(),
            Predictor::Generator { params, n_samples } => {
                let cfg = ModelConfig {
                    t_past: first.t_past(),
                    t_future: t_f,
                    ..model.clone()
                };
                let mut rng = seeded_rng(seed);
                let mut out = Vec::with_capacity(windows.len());
                for chunk in windows.chunks(64) {
                    let feats: Vec<&Tensor> = chunk.iter().map(|w| &w.past_features).collect();
                    out.extend(sample_predictions(params, &cfg, &feats, *n_samples, &mut rng)?);
                }
                Ok(out)
            }
        }
    }
}

/// Windows every model is scored on.
pub struct EvalWindows {
    /// One per ground-truth change, the change at the first future second.
    pub transitions: Vec<Window>,
    /// Non-overlapping futures for edit distances.
    pub ld: Vec<Window>,
}

impl EvalWindows {
    pub fn build(data: &Dataset, t_past: usize, t_future: usize) -> Result<Self> {
        Ok(EvalWindows {
            transitions: transition_windows(&data.test, t_past, t_future)?,
            ld: window_dataset(&data.test, t_past, t_future, t_future)?,
        })
    }

    pub fn hash(&self) -> String {
        let mut all = self.transitions.clone();
        all.extend(self.ld.iter().cloned());
        window_set_hash(&all)
    }
}

/// Scores one model on the shared windows.
pub fn score_model(
    cfg: &ExperimentConfig,
    model: &ModelConfig,
    name: &str,
    predictor: &Predictor,
    windows: &EvalWindows,
) -> Result<ModelScores> {
    let seed = derive_seed(cfg.seed, streams::EVAL);
    let trans_sets = predictor.predict(&windows.transitions, model, seed)?;
    let ld_sets = predictor.predict(&windows.ld, model, seed ^ 1)?;
    let transitions = per_transition_accuracy(&trans_sets, &windows.transitions, model.n_phases, cfg.eval.delta, cfg.eval.hit_mode)?;
    let mut overall = TransitionCell::default();
    transitions.iter().for_each(|c| overall.add(*c));
    let per_video = {
        let mut by_video: std::collections::BTreeMap<&str, TransitionCell> = Default::default();
        for (i, w) in windows.transitions.iter().enumerate() {
            let c = per_transition_accuracy(
                &trans_sets[i..=i],
                std::slice::from_ref(w),
                model.n_phases,
                cfg.eval.delta,
                cfg.eval.hit_mode,
            )?;
            let e = by_video.entry(&w.video_id).or_default();
            c.iter().for_each(|x| e.add(*x));
        }
        by_video
            .into_iter()
            .filter_map(|(v, c)| c.accuracy().map(|a| (v.to_string(), a)))
            .collect()
    };
    let ld_overall = avg_ld(&ld_sets, &windows.ld, cfg.eval.ld_mode, Segment::Overall)?;
    let ld_transitions = avg_ld(&ld_sets, &windows.ld, cfg.eval.ld_mode, Segment::TransitionsOnly)?;
    let t_f = windows.ld.first().map_or(1, Window::t_future);
    Ok(ModelScores {
        name: name.to_string(),
        transitions,
        overall,
        ld_overall,
        ld_transitions,
        normalized_ld_overall: ld_overall * REFERENCE_HORIZON as f64 / t_f as f64,
        per_video_accuracy: per_video,
    })
}

/// Paired t-tests of `reference` against every other model on per-video accuracy.
pub fn compare(models: &[ModelScores], reference: &str) -> Vec<PairedComparison> {
    let Some(r) = models.iter().find(|m| m.name == reference) else {
        return vec![];
    };
    models
        .iter()
        .filter(|m| m.name != reference)
        .map(|m| {
            let a: Vec<f64> = r.per_video_accuracy.iter().map(|x| x.1).collect();
            let b: Vec<f64> = m.per_video_accuracy.iter().map(|x| x.1).collect();
            let (t, p, note) = match paired_t_test(&a, &b) {
                Ok(res) => (Some(res.t), Some(res.p), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            PairedComparison {
                model_a: reference.to_string(),
                model_b: m.name.clone(),
                n_videos: a.len(),
                t,
                p,
                note,
            }
        })
        .collect()
}

pub fn build_report(
    cfg: &ExperimentConfig,
    data: &Dataset,
    model: &ModelConfig,
    windows: &EvalWindows,
    models: Vec<ModelScores>,
) -> MetricsReport {
    MetricsReport {
        phase_names: data.phase_names.clone(),
        t_past: model.t_past,
        t_future: model.t_future,
        delta: cfg.eval.delta,
        hit_mode: cfg.eval.hit_mode,
        ld_mode: cfg.eval.ld_mode,
        window_hash: windows.hash(),
        n_transition_windows: windows.transitions.len(),
        n_ld_windows: windows.ld.len(),
        n_ld_transition_windows: windows.ld.iter().filter(|w| w.has_future_transition()).count(),
        comparisons: compare(&models, GAN_MODEL),
        models,
    }
}

/// A training run that ended early.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FailureRecord {
    pub model: String,
    pub kind: String,
    pub epoch: Option<usize>,
    pub message: String,
}

/// Trains one GAN variant. On divergence the last good generator is returned
/// together with a failure record.
pub fn train_variant(
    cfg: &ExperimentConfig,
    model: &ModelConfig,
    windows: &[Window],
    pretrained: &GeneratorParams,
    use_discriminator: bool,
    checkpoint_dir: Option<&Path>,
) -> Result<(GeneratorParams, TrainLog, Option<FailureRecord>)> {
    let name = if use_discriminator { GAN_MODEL } else { NO_DIS_MODEL };
    match train_gan(
        windows,
        pretrained.clone(),
        model,
        &train_config(cfg),
        &cfg.loss,
        use_discriminator,
        checkpoint_dir,
    ) {
        Ok(GanRun { state, log, .. }) => Ok((state.generator, log, None)),
        Err(Error::Diverged {
            epoch,
            source,
            last_good,
        }) => {
            let rec = FailureRecord {
                model: name.into(),
                kind: "diverged".into(),
                epoch: Some(epoch),
                message: format!("training diverged at epoch {epoch}: {source}"),
            };
            Ok((last_good.generator, TrainLog::default(), Some(rec)))
        }
        Err(e) => Err(e),
    }
}

/// Everything `run_experiment` produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: MetricsReport,
    pub failures: Vec<FailureRecord>,
    pub past_accuracy: f64,
    pub files: Vec<PathBuf>,
}

/// Output directory with a record of every file written to it.
#[derive(Debug)]
pub struct OutputDir {
    pub root: PathBuf,
    pub files: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            files: vec![],
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.files.push(path.clone());
        Ok(path)
    }

    pub fn read(&self, name: &str) -> Result<String> {
        let path = self.path(name);
        std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
    }
}

pub const PRETRAINED_FILE: &str = "pretrained.json";
pub const HMM_FILE: &str = "hmm.txt";
pub const NO_DIS_FILE: &str = "no_dis.json";
pub const GAN_FILE: &str = "supr_gan.json";

/// Encoder pretraining and the HMM fit on its outputs.
pub struct Pretrained {
    pub encoder: GeneratorParams,
    pub hmm: HmmParams,
    /// Past phase accuracy on held-out windows.
    pub past_accuracy: f64,
}

pub fn stage_pretrain(cfg: &ExperimentConfig, data: &Dataset, model: &ModelConfig, out: &mut OutputDir) -> Result<Pretrained> {
    let pre = pretrain_windows(data, model)?;
    let (encoder, log) = pretrain_encoder(&pre, model, &train_config(cfg))?;
    let past_accuracy = crate::training::past_accuracy(&encoder, &pretrain_windows_test(data, model)?)?;
    out.write("pretrain_log.tsv", &log.to_tsv())?;
    let ck = Checkpoint {
        model: model.clone(),
        generator: encoder.clone(),
        discriminator: None,
    };
    out.write(PRETRAINED_FILE, &ck.to_json())?;
    let hmm = fit_hmm(cfg, &encoder, &pre, model.n_phases)?;
    out.write(HMM_FILE, &hmm.to_text())?;
    Ok(Pretrained {
        encoder,
        hmm,
        past_accuracy,
    })
}

/// Both generator variants, ablation first.
pub struct Trained {
    pub no_dis: GeneratorParams,
    pub gan: GeneratorParams,
    pub failures: Vec<FailureRecord>,
}

pub fn stage_train(
    cfg: &ExperimentConfig,
    data: &Dataset,
    model: &ModelConfig,
    encoder: &GeneratorParams,
    out: &mut OutputDir,
) -> Result<Trained> {
    let windows = window_dataset(&data.train, model.t_past, model.t_future, cfg.eval.gan_window_stride)?;
    let mut failures = vec![];
    let mut trained = vec![];
    for (use_dis, stem, file) in [(false, "no_dis", NO_DIS_FILE), (true, "supr_gan", GAN_FILE)] {
        let ck_dir = out.path("checkpoints").join(stem);
        let (g, log, fail) = train_variant(cfg, model, &windows, encoder, use_dis, Some(&ck_dir))?;
        out.write(&format!("{stem}_log.tsv"), &log.to_tsv())?;
        let ck = Checkpoint {
            model: model.clone(),
            generator: g.clone(),
            discriminator: None,
        };
        out.write(file, &ck.to_json())?;
        failures.extend(fail);
        trained.push(g);
    }
    if !failures.is_empty() {
        out.write("failures.json", &serde_json::to_string_pretty(&failures).expect("failures serialize"))?;
    }
    let gan = trained.pop().expect("two variants");
    let no_dis = trained.pop().expect("two variants");
    Ok(Trained { no_dis, gan, failures })
}

/// Scores all four models on the shared windows and writes the report.
pub fn stage_evaluate(
    cfg: &ExperimentConfig,
    data: &Dataset,
    model: &ModelConfig,
    pre: &Pretrained,
    no_dis: &GeneratorParams,
    gan: &GeneratorParams,
    out: &mut OutputDir,
) -> Result<MetricsReport> {
    let eval = evaluation_windows(data, model)?;
    let n_s = cfg.train.n_samples;
    let predictors = [
        (CONSTANT_MODEL, Predictor::Constant { encoder: &pre.encoder }),
        (HMM_MODEL, Predictor::Hmm { encoder: &pre.encoder, hmm: &pre.hmm }),
        (NO_DIS_MODEL, Predictor::Generator { params: no_dis, n_samples: n_s }),
        (GAN_MODEL, Predictor::Generator { params: gan, n_samples: n_s }),
    ];
    let scores = predictors
        .iter()
        .map(|(name, p)| score_model(cfg, model, name, p, &eval))
        .collect::<Result<Vec<_>>>()?;
    let report = build_report(cfg, data, model, &eval, scores);
    out.write("metrics.csv", &report.to_csv())?;
    out.write("summary.json", &report.to_json())?;
    Ok(report)
}

pub fn evaluation_windows(data: &Dataset, model: &ModelConfig) -> Result<EvalWindows> {
    let eval = EvalWindows::build(data, model.t_past, model.t_future)?;
    if eval.transitions.is_empty() || eval.ld.is_empty() {
        return Err(Error::Invalid(format!(
            "test split has no usable windows for T_p={}, T_f={}",
            model.t_past, model.t_future
        )));
    }
    Ok(eval)
}

/// Validated config, its dataset and model dimensions. Nothing is written.
pub fn prepare(cfg: &ExperimentConfig) -> Result<(Dataset, ModelConfig)> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let model = model_config(cfg, &data);
    model.validate()?;
    Ok((data, model))
}

/// End-to-end run: data, pretraining, HMM fit, both generator variants,
/// evaluation of all four models on the same windows, report, logs,
/// checkpoints and timeline figures under `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentOutcome> {
    let (data, model) = prepare(cfg)?;
    let eval = evaluation_windows(&data, &model)?;
    let mut out = OutputDir::create(out)?;
    out.write("config.toml", &cfg.to_toml())?;
    let pre = stage_pretrain(cfg, &data, &model, &mut out)?;
    let trained = stage_train(cfg, &data, &model, &pre.encoder, &mut out)?;
    let report = stage_evaluate(cfg, &data, &model, &pre, &trained.no_dis, &trained.gan, &mut out)?;
    let plots = write_timelines(cfg, &model, &data, &trained.gan, &eval.transitions, &out.path("plots"))?;
    out.files.extend(plots);
    Ok(ExperimentOutcome {
        report,
        failures: trained.failures,
        past_accuracy: pre.past_accuracy,
        files: out.files,
    })
}

/// Held-out windows for measuring past-phase recognition.
pub fn pretrain_windows_test(data: &Dataset, model: &ModelConfig) -> Result<Vec<Window>> {
    window_dataset(&data.test, model.t_past, model.t_future, model.t_past)
}

/// Timeline figures for `eval.n_plots` randomly chosen transition windows.
pub fn write_timelines(
    cfg: &ExperimentConfig,
    model: &ModelConfig,
    data: &Dataset,
    generator: &GeneratorParams,
    windows: &[Window],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    if cfg.eval.n_plots == 0 || windows.is_empty() {
        return Ok(vec![]);
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = seeded_rng(derive_seed(cfg.seed, streams::PLOTS));
    let chosen: Vec<&Window> = windows.choose_multiple(&mut rng, cfg.eval.n_plots).collect();
    let owned: Vec<Window> = chosen.iter().map(|w| (*w).clone()).collect();
    let sets = Predictor::Generator {
        params: generator,
        n_samples: cfg.train.n_samples,
    }
    .predict(&owned, model, derive_seed(cfg.seed, streams::PLOTS) ^ 1)?;
    let mut files = vec![];
    for (w, s) in owned.iter().zip(&sets) {
        let path = dir.join(format!("{}_t{}.svg", w.video_id, w.t0));
        emit_timeline(w, s, &data.phase_names, &path, &mut rng)?;
        files.push(path);
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.data.n_videos = 8;
        cfg.train.pretrain_epochs = 1;
        cfg.train.gan_epochs = 2;
        cfg.train.epoch_size = 8;
        cfg.train.validation_windows = 4;
        cfg.eval.hmm_iters = 2;
        cfg.eval.n_plots = 1;
        cfg
    }

    #[test]
    fn divergence_yields_partial_results() {
        let mut cfg = tiny();
        cfg.loss.w_rec = f64::MAX;
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&cfg, dir.path()).unwrap();
        assert_eq!(out.failures.len(), 2);
        assert!(out.failures.iter().all(|f| f.kind == "diverged" && f.epoch == Some(0)));
        assert_eq!(out.report.models.len(), 4);
        let text = std::fs::read_to_string(dir.path().join("failures.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 2);
        assert!(dir.path().join("metrics.csv").is_file());
    }

    #[test]
    fn comparisons_pair_the_reference_with_every_other_model() {
        let scores = |name: &str, acc: &[f64]| ModelScores {
            name: name.into(),
            transitions: vec![],
            overall: TransitionCell::default(),
            ld_overall: 0.0,
            ld_transitions: 0.0,
            normalized_ld_overall: 0.0,
            per_video_accuracy: acc.iter().enumerate().map(|(i, &a)| (format!("v{i}"), a)).collect(),
        };
        let models = vec![
            scores(CONSTANT_MODEL, &[0.0, 0.1, 0.0, 0.2]),
            scores(GAN_MODEL, &[0.5, 0.7, 0.6, 0.9]),
            scores(HMM_MODEL, &[0.5, 0.7, 0.6, 0.9]),
        ];
        let c = compare(&models, GAN_MODEL);
        assert_eq!(c.len(), 2);
        assert!(c[0].p.unwrap() < 0.01);
        assert!(c[1].t.is_none() && c[1].note.is_some());
        assert!(compare(&models, "missing").is_empty());
    }

    #[test]
    fn all_models_share_the_window_hash() {
        let cfg = tiny();
        let (data, model) = prepare(&cfg).unwrap();
        let a = evaluation_windows(&data, &model).unwrap().hash();
        let b = evaluation_windows(&data, &model).unwrap().hash();
        assert_eq!(a, b);
        let other = evaluation_windows(&data, &ModelConfig { t_future: 10, ..model }).unwrap().hash();
        assert_ne!(a, other);
    }
}
