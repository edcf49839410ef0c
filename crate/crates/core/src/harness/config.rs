//! Experiment configuration, read from TOML.
//!
//! ```toml
//! schema_version = 1
//! seed = 42
//!
//! [data]
//! source = "synthetic"      # or "files"
//! graph = "mgh12"           # built-in name or path to a graph file
//! n_videos = 200
//! noise_sigma = 0.3
//! # source = "files" reads these instead:
//! # annotations = "labels.csv"
//! # features = "features.csv"
//! # phases = ["Preparation", ...]   # or a graph file for the vocabulary
//!
//! [model]
//! t_past = 15
//! t_future = 15
//!
//! [train]
//! gan_epochs = 300
//! lr = 1e-3
//!
//! [loss]
//! w_dis = 0.6
//!
//! [eval]
//! delta = 15
//!
//! [sweep]
//! horizons = [[15, 10], [15, 15], [15, 45], [5, 15]]
//! ```
//!
//! Every table is optional and falls back to its defaults. Unknown keys are
//! rejected. `model.n_phases` and `model.feature_dim` are taken from the data.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::metrics::{HitMode, LdMode};
use crate::seqmodels::ModelConfig;
use crate::synthgen::{SynthConfig, WorkflowGraph};
use crate::training::{LossWeights, TrainConfig};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub graph: String,
    pub n_videos: usize,
    pub feature_dim: usize,
    pub noise_sigma: f64,
    pub train_fraction: f64,
    pub annotations: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub phases: Option<Vec<String>>,
}

impl Default for DataConfig {
    fn default() -> Self {
        let s = SynthConfig::default();
        DataConfig {
            source: DataSource::Synthetic,
            graph: "mgh12".into(),
            n_videos: s.n_videos,
            feature_dim: s.feature_dim,
            noise_sigma: s.noise_sigma,
            train_fraction: s.train_fraction,
            annotations: None,
            features: None,
            phases: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Seconds after a change within which the new phase must appear.
    pub delta: usize,
    pub hit_mode: HitMode,
    pub ld_mode: LdMode,
    /// Stride of the windows used for adversarial training.
    pub gan_window_stride: usize,
    pub hmm_iters: usize,
    pub hmm_learn_confusion: bool,
    /// Timeline figures written per run.
    pub n_plots: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            delta: 15,
            hit_mode: HitMode::AnySample,
            ld_mode: LdMode::AllSamplesMean,
            gan_window_stride: 5,
            hmm_iters: 20,
            hmm_learn_confusion: false,
            n_plots: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// `(T_p, T_f)` pairs, in report order.
    pub horizons: Vec<(usize, usize)>,
    /// Also train the no-discriminator ablation for every row.
    pub include_ablation: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            horizons: vec![(15, 10), (15, 15), (15, 45), (5, 15)],
            include_ablation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub loss: LossWeights,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            seed: 42,
            output_dir: None,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            loss: LossWeights::default(),
            eval: EvalConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}

impl ExperimentConfig {
    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string().trim().to_string()]))?;
        if let Some(p) = &cfg.data.annotations {
            cfg.data.annotations = Some(resolve(base_dir, p));
        }
        if let Some(p) = &cfg.data.features {
            cfg.data.features = Some(resolve(base_dir, p));
        }
        if WorkflowGraph::builtin(&cfg.data.graph).is_none() && !cfg.data.graph.is_empty() {
            cfg.data.graph = resolve(base_dir, Path::new(&cfg.data.graph)).display().to_string();
        }
        if let Some(p) = &cfg.output_dir {
            cfg.output_dir = Some(resolve(base_dir, p));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The workflow graph named by `data.graph`, built-in or from file.
    pub fn graph(&self) -> Result<WorkflowGraph> {
        match WorkflowGraph::builtin(&self.data.graph) {
            Some(g) => Ok(g),
            None => WorkflowGraph::load(Path::new(&self.data.graph)),
        }
    }

    /// Every problem found, without touching the output directory.
    pub fn violations(&self) -> Vec<String> {
        let mut v = vec![];
        if self.schema_version != SCHEMA_VERSION {
            v.push(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let d = &self.data;
        let graph_needed = d.source == DataSource::Synthetic || d.phases.is_none();
        if graph_needed {
            if let Err(e) = self.graph() {
                v.push(format!("data.graph '{}': {e}", d.graph));
            }
        }
        match d.source {
            DataSource::Synthetic => {
                if d.n_videos < 2 {
                    v.push("data.n_videos must be >= 2".into());
                }
                if !(d.noise_sigma >= 0.0 && d.noise_sigma.is_finite()) {
                    v.push("data.noise_sigma must be finite and >= 0".into());
                }
            }
            DataSource::Files => {
                for (k, p) in [("annotations", &d.annotations), ("features", &d.features)] {
                    match p {
                        None => v.push(format!("data.{k} is required when data.source = \"files\"")),
                        Some(p) if !p.is_file() => v.push(format!("data.{k}: {} does not exist", p.display())),
                        _ => {}
                    }
                }
            }
        }
        if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            v.push("data.train_fraction must be in (0, 1)".into());
        }
        // Data-derived fields are checked once the data is known.
        let mut m = self.model.clone();
        m.n_phases = m.n_phases.max(2);
        m.feature_dim = m.feature_dim.max(1);
        v.extend(m.violations());
        v.extend(self.train.violations());
        v.extend(self.loss.violations());
        let e = &self.eval;
        if e.delta == 0 {
            v.push("eval.delta must be >= 1".into());
        }
        if e.gan_window_stride == 0 {
            v.push("eval.gan_window_stride must be >= 1".into());
        }
        if e.hmm_iters == 0 {
            v.push("eval.hmm_iters must be >= 1".into());
        }
        for (i, &(p, f)) in self.sweep.horizons.iter().enumerate() {
            if p == 0 || f == 0 {
                v.push(format!("sweep.horizons[{i}] = ({p}, {f}): horizons must be positive"));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_videos: self.data.n_videos,
            feature_dim: self.data.feature_dim,
            noise_sigma: self.data.noise_sigma,
            train_fraction: self.data.train_fraction,
        }
    }
}
