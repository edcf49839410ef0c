//! Generator and discriminator networks.

mod checkpoint;
mod config;
mod discriminator;
mod generator;
mod gumbel;
mod lstm;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use discriminator::{discriminate, DiscriminatorParams, DiscriminatorVars, DISCRIMINATOR_TENSORS};
pub use generator::{
    encode_past, past_logits_batch, sample_predictions, stack_steps, DecoderOutput, EncodedPast,
    EncoderOutput, GeneratorOutput, GeneratorParams, GeneratorVars, GENERATOR_TENSORS,
};
pub use gumbel::{gumbel_noise, gumbel_softmax, gumbel_softmax_with_noise, GumbelSample};
pub use lstm::{lstm_cell, LstmVars, LstmWeights};

/// `N_s` sampled futures for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSampleSet {
    /// Hard labels, `N_s x T_f`.
    pub samples: Vec<Vec<usize>>,
    /// Relaxed one-hot outputs, `N_s x T_f x N_P`.
    pub soft: Vec<Vec<Vec<f64>>>,
    /// Decoder noise vectors, `N_s x noise_dim` (empty for baselines).
    pub noise: Vec<Vec<f64>>,
}

impl PredictionSampleSet {
    /// Deterministic predictions wrapped as a sample set with one-hot soft outputs.
    pub fn from_labels(samples: Vec<Vec<usize>>, n_phases: usize) -> Self {
        let soft = samples
            .iter()
            .map(|s| {
                s.iter()
                    .map(|&l| {
                        let mut row = vec![0.0; n_phases];
                        row[l] = 1.0;
                        row
                    })
                    .collect()
            })
            .collect();
        PredictionSampleSet {
            noise: vec![vec![]; samples.len()],
            samples,
            soft,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
