//! Synthetic workflow benchmark and annotation ingestion.

pub mod features;
pub mod graph;
pub mod io;
pub mod sample;
pub mod window;

use serde::{Deserialize, Serialize};

pub use features::{emit_features, nearest_prototype, prototypes};
pub use graph::{DurationModel, WorkflowGraph};
pub use io::{
    format_annotations, format_features, load_annotations, load_features, parse_annotations, parse_features,
    save_annotations,
};
pub use sample::sample_trajectory;
pub use window::{split_by_video, transition_windows, window_dataset, Window};

use crate::diffcore::Tensor;
use crate::{derive_seed, seeded_rng, Error, Result};

/// Per-second phase labels of one video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseSequence {
    pub video_id: String,
    pub labels: Vec<usize>,
}

impl PhaseSequence {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn one_hot(&self, n_phases: usize) -> Tensor {
        Tensor::one_hot(&self.labels, n_phases)
    }

    /// `(t, from, to)` for every second `t` whose label differs from `t - 1`.
    pub fn transitions(&self) -> Vec<(usize, usize, usize)> {
        self.labels
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] != w[1])
            .map(|(i, w)| (i + 1, w[0], w[1]))
            .collect()
    }
}

/// A labelled video with its per-second feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub seq: PhaseSequence,
    pub features: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_videos: usize,
    pub feature_dim: usize,
    pub noise_sigma: f64,
    /// Fraction of videos (by id) used for training.
    pub train_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_videos: 200,
            feature_dim: 16,
            noise_sigma: 0.3,
            train_fraction: 0.75,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub phase_names: Vec<String>,
    pub train: Vec<Video>,
    pub test: Vec<Video>,
}

impl Dataset {
    pub fn n_phases(&self) -> usize {
        self.phase_names.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.train
            .iter()
            .chain(&self.test)
            .next()
            .map_or(0, |v| v.features.cols())
    }

    pub fn all_videos(&self) -> impl Iterator<Item = &Video> {
        self.train.iter().chain(&self.test)
    }

    /// Pairs annotation sequences with feature matrices of the same video id
    /// and splits them by id.
    pub fn from_parts(
        phase_names: Vec<String>,
        seqs: Vec<PhaseSequence>,
        mut features: std::collections::BTreeMap<String, Tensor>,
        train_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut videos = Vec::with_capacity(seqs.len());
        let mut dim = None;
        for seq in seqs {
            let f = features
                .remove(&seq.video_id)
                .ok_or_else(|| Error::Invalid(format!("no features for video {}", seq.video_id)))?;
            if f.rows() != seq.len() {
                return Err(Error::Invalid(format!(
                    "video {}: {} labels but {} feature rows",
                    seq.video_id,
                    seq.len(),
                    f.rows()
                )));
            }
            if *dim.get_or_insert(f.cols()) != f.cols() {
                return Err(Error::Invalid(format!("video {}: inconsistent feature width", seq.video_id)));
            }
            videos.push(Video { seq, features: f });
        }
        let (train, test) = split_by_video(videos, train_fraction, seed);
        Ok(Dataset {
            phase_names,
            train,
            test,
        })
    }
}

pub fn video_id(i: usize) -> String {
    format!("vid{i:04}")
}

/// Samples `cfg.n_videos` procedures from `graph` and emits their features.
/// Video `i` uses its own seed stream so the result does not depend on the
/// order of generation.
pub fn generate_dataset(graph: &WorkflowGraph, cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    graph.validate()?;
    if cfg.n_videos < 2 {
        return Err(Error::Invalid("need at least two videos".into()));
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::Invalid("train_fraction must be in (0, 1)".into()));
    }
    if !(cfg.noise_sigma >= 0.0 && cfg.noise_sigma.is_finite()) {
        return Err(Error::Invalid("noise_sigma must be finite and >= 0".into()));
    }
    let videos = (0..cfg.n_videos)
        .map(|i| {
            let mut rng = seeded_rng(derive_seed(seed, i as u64));
            let seq = sample_trajectory(graph, &video_id(i), &mut rng)?;
            let features = emit_features(&seq, graph.n_phases(), cfg.feature_dim, cfg.noise_sigma, None, &mut rng)?;
            Ok(Video { seq, features })
        })
        .collect::<Result<Vec<_>>>()?;
    let (train, test) = split_by_video(videos, cfg.train_fraction, derive_seed(seed, u64::MAX));
    Ok(Dataset {
        phase_names: graph.phases.clone(),
        train,
        test,
    })
}
