//! Per-epoch training records.
//!
//! Written as tab-separated text with one header line:
//!
//! ```text
//! stage  epoch  gen_loss  disc_loss  variety_loss  past_loss  val_variety  seconds  checkpoint
//! ```
//!
//! `stage` is `pretrain` or `gan`; absent values are written as `-`.
//! `checkpoint` is the file name inside the run's checkpoint directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Pretrain,
    Gan,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Pretrain => "pretrain",
            Stage::Gan => "gan",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub stage: Stage,
    pub epoch: usize,
    pub gen_loss: f64,
    pub disc_loss: Option<f64>,
    pub variety_loss: Option<f64>,
    pub past_loss: f64,
    pub val_variety: Option<f64>,
    /// Wall-clock seconds since the stage started.
    pub seconds: f64,
    pub checkpoint: Option<PathBuf>,
}

impl EpochRecord {
    /// Everything except the wall clock.
    pub fn losses(&self) -> [Option<f64>; 5] {
        [
            Some(self.gen_loss),
            self.disc_loss,
            self.variety_loss,
            Some(self.past_loss),
            self.val_variety,
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

pub const TRAIN_LOG_HEADER: &str =
    "stage\tepoch\tgen_loss\tdisc_loss\tvariety_loss\tpast_loss\tval_variety\tseconds\tcheckpoint";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x}"))
}

impl TrainLog {
    pub fn push(&mut self, r: EpochRecord) {
        debug_assert!(self
            .records
            .last()
            .is_none_or(|l| l.stage != r.stage || l.epoch < r.epoch));
        self.records.push(r);
    }

    pub fn extend(&mut self, other: TrainLog) {
        self.records.extend(other.records);
    }

    pub fn stage(&self, stage: Stage) -> impl Iterator<Item = &EpochRecord> {
        self.records.iter().filter(move |r| r.stage == stage)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("{TRAIN_LOG_HEADER}\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.3}\t{}",
                r.stage.as_str(),
                r.epoch,
                r.gen_loss,
                opt(r.disc_loss),
                opt(r.variety_loss),
                r.past_loss,
                opt(r.val_variety),
                r.seconds,
                r.checkpoint
                    .as_ref()
                    .and_then(|p| p.file_name())
                    .map_or("-".into(), |n| n.to_string_lossy().into_owned()),
            );
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}
