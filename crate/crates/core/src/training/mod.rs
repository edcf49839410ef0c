//! Losses, encoder pretraining and adversarial training.

mod gan;
mod log;
mod losses;
mod pretrain;

use serde::{Deserialize, Serialize};

pub use gan::{train_gan, GanRun, GanState};
pub use log::{EpochRecord, Stage, TrainLog};
pub use losses::{
    discriminator_objective, gan_losses, generator_objective, past_encoding_loss, past_frames, past_loss_var,
    total_loss, variety_loss, GeneratorObjective, LossWeights,
};
pub use pretrain::{past_accuracy, pretrain_encoder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Futures drawn per window (`N_s`).
    pub n_samples: usize,
    pub pretrain_epochs: usize,
    pub gan_epochs: usize,
    /// Windows drawn (with replacement) per adversarial epoch.
    pub epoch_size: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub validate_every: usize,
    pub validation_windows: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_samples: 10,
            pretrain_epochs: 20,
            gan_epochs: 2000,
            epoch_size: 64,
            batch_size: 8,
            lr: 1e-4,
            seed: 0,
            checkpoint_every: 100,
            validate_every: 10,
            validation_windows: 32,
        }
    }
}

impl TrainConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = vec![];
        for (k, x) in [
            ("n_samples", self.n_samples),
            ("epoch_size", self.epoch_size),
            ("batch_size", self.batch_size),
            ("checkpoint_every", self.checkpoint_every),
            ("validate_every", self.validate_every),
        ] {
            if x == 0 {
                v.push(format!("train.{k} must be >= 1"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            v.push(format!("train.lr must be > 0, got {}", self.lr));
        }
        v
    }
}

/// Seed streams derived from `TrainConfig::seed`.
pub(crate) mod streams {
    pub const INIT_GENERATOR: u64 = 1;
    pub const INIT_DISCRIMINATOR: u64 = 2;
    pub const PRETRAIN_ORDER: u64 = 3;
    pub const GAN_WINDOWS: u64 = 4;
    pub const GAN_NOISE: u64 = 5;
    pub const VALIDATION: u64 = 6;
}
