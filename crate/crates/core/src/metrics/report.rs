//! Evaluation report.
//!
//! `metrics.csv` has one row per destination phase and one column per model,
//! followed by summary rows:
//!
//! ```text
//! row,n,Constant Model,HMM,Ours w/o Dis.,SUPR-GAN
//! Preparation,41,0.0000,0.0244,0.3415,0.4146
//! ...
//! overall,512,...
//! ld_overall,1830,...
//! ld_transitions,702,...
//! normalized_ld_overall,1830,...
//! ```
//!
//! Accuracy cells are `-` for phases with no transition. `summary.json`
//! carries the same numbers plus per-video scores and paired t-tests.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HitMode, LdMode};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionCell {
    pub hits: usize,
    pub total: usize,
}

impl TransitionCell {
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.hits as f64 / self.total as f64)
    }

    pub fn add(&mut self, other: TransitionCell) {
        self.hits += other.hits;
        self.total += other.total;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScores {
    pub name: String,
    /// Indexed by destination phase.
    pub transitions: Vec<TransitionCell>,
    pub overall: TransitionCell,
    pub ld_overall: f64,
    pub ld_transitions: f64,
    pub normalized_ld_overall: f64,
    /// Per-transition accuracy of each test video with at least one scored
    /// transition, sorted by video id.
    pub per_video_accuracy: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub model_a: String,
    pub model_b: String,
    pub n_videos: usize,
    pub t: Option<f64>,
    pub p: Option<f64>,
    /// Why the test could not be run, if it could not.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub phase_names: Vec<String>,
    pub t_past: usize,
    pub t_future: usize,
    pub delta: usize,
    pub hit_mode: HitMode,
    pub ld_mode: LdMode,
    /// Digest of the transition windows followed by the LD windows.
    pub window_hash: String,
    pub n_transition_windows: usize,
    pub n_ld_windows: usize,
    pub n_ld_transition_windows: usize,
    pub models: Vec<ModelScores>,
    pub comparisons: Vec<PairedComparison>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

impl MetricsReport {
    pub fn model(&self, name: &str) -> Option<&ModelScores> {
        self.models.iter().find(|m| m.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,n");
        for m in &self.models {
            let _ = write!(out, ",{}", m.name);
        }
        out.push('\n');
        for (q, name) in self.phase_names.iter().enumerate() {
            let n = self.models.first().map_or(0, |m| m.transitions[q].total);
            let _ = write!(out, "{},{n}", name.replace(',', ";"));
            for m in &self.models {
                let _ = write!(out, ",{}", cell(m.transitions[q].accuracy()));
            }
            out.push('\n');
        }
        let rows: [(&str, usize, fn(&ModelScores) -> Option<f64>); 4] = [
            ("overall", self.n_transition_windows, |m| m.overall.accuracy()),
            ("ld_overall", self.n_ld_windows, |m| Some(m.ld_overall)),
            ("ld_transitions", self.n_ld_transition_windows, |m| Some(m.ld_transitions)),
            ("normalized_ld_overall", self.n_ld_windows, |m| Some(m.normalized_ld_overall)),
        ];
        for (label, n, f) in rows {
            let _ = write!(out, "{label},{n}");
            for m in &self.models {
                let _ = write!(out, ",{}", cell(f(m)));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Invalid(format!("summary.json: {e}")))
    }

    /// Writes `metrics.csv` and `summary.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join("metrics.csv");
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let json = dir.join("summary.json");
        std::fs::write(&json, self.to_json()).map_err(|e| Error::io(&json, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(name: &str, hits: usize) -> ModelScores {
        ModelScores {
            name: name.into(),
            transitions: vec![TransitionCell { hits, total: 2 }, TransitionCell::default()],
            overall: TransitionCell { hits, total: 2 },
            ld_overall: 1.25,
            ld_transitions: 2.5,
            normalized_ld_overall: 1.25,
            per_video_accuracy: vec![("v".into(), hits as f64 / 2.0)],
        }
    }

    #[test]
    fn csv_layout() {
        let r = MetricsReport {
            phase_names: vec!["A".into(), "B, late".into()],
            t_past: 15,
            t_future: 15,
            delta: 15,
            hit_mode: HitMode::AnySample,
            ld_mode: LdMode::AllSamplesMean,
            window_hash: "00".into(),
            n_transition_windows: 2,
            n_ld_windows: 4,
            n_ld_transition_windows: 2,
            models: vec![scores("Constant Model", 0), scores("SUPR-GAN", 1)],
            comparisons: vec![],
        };
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "row,n,Constant Model,SUPR-GAN");
        assert_eq!(lines[1], "A,2,0.0000,0.5000");
        assert_eq!(lines[2], "B; late,0,-,-");
        assert_eq!(lines[3], "overall,2,0.0000,0.5000");
        assert_eq!(lines.len(), 7);
        assert_eq!(MetricsReport::from_json(&r.to_json()).unwrap(), r);
    }
}
