use std::time::Instant;

use rand::seq::SliceRandom;

use super::log::{EpochRecord, Stage, TrainLog};
use super::losses::{past_frames, past_loss_var};
use super::{streams, TrainConfig};
use crate::diffcore::{argmax, AdamState, Tape, Tensor};
use crate::seqmodels::{past_logits_batch, GeneratorParams, GeneratorVars, ModelConfig};
use crate::synthgen::Window;
use crate::{derive_seed, seeded_rng, Error, Result};

/// Trains the encoder and phase head on past-phase recognition, one shuffled
/// pass over `windows` per epoch. The decoder weights keep their
/// initialization.
pub fn pretrain_encoder(
    windows: &[Window],
    cfg: &ModelConfig,
    tc: &TrainConfig,
) -> Result<(GeneratorParams, TrainLog)> {
    if windows.is_empty() {
        return Err(Error::Invalid("pretrain_encoder: empty dataset".into()));
    }
    cfg.validate()?;
    let mut params = GeneratorParams::init(cfg, &mut seeded_rng(derive_seed(tc.seed, streams::INIT_GENERATOR)));
    let mut adam = AdamState::new(params.tensors());
    let mut order_rng = seeded_rng(derive_seed(tc.seed, streams::PRETRAIN_ORDER));
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut log = TrainLog::default();
    let start = Instant::now();
    for epoch in 0..tc.pretrain_epochs {
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(tc.batch_size) {
            let batch: Vec<&Window> = chunk.iter().map(|&i| &windows[i]).collect();
            let mut tape = Tape::new();
            let vars = GeneratorVars::bind(&mut tape, &params, true);
            let frames = past_frames(&mut tape, &batch)?;
            let enc = vars.encode(&mut tape, &frames)?;
            let loss = past_loss_var(&mut tape, &enc.logits, &batch, cfg.n_phases)?;
            let grads = tape.backward(loss)?.collect(&vars.all());
            adam.update(&mut params.tensors_mut(), &grads, tc.lr)?;
            total += tape.value(loss).item();
            batches += 1;
        }
        let mean = total / batches as f64;
        log.push(EpochRecord {
            stage: Stage::Pretrain,
            epoch,
            gen_loss: mean,
            disc_loss: None,
            variety_loss: None,
            past_loss: mean,
            val_variety: None,
            seconds: start.elapsed().as_secs_f64(),
            checkpoint: None,
        });
    }
    Ok((params, log))
}

/// Fraction of past frames whose phase-head argmax equals the label.
pub fn past_accuracy(params: &GeneratorParams, windows: &[Window]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Invalid("past_accuracy: no windows".into()));
    }
    let (mut hits, mut total) = (0usize, 0usize);
    for chunk in windows.chunks(256) {
        let feats: Vec<&Tensor> = chunk.iter().map(|w| &w.past_features).collect();
        let logits = past_logits_batch(params, &feats)?;
        for (w, l) in chunk.iter().zip(&logits) {
            for (t, &y) in w.past_labels.iter().enumerate() {
                hits += usize::from(argmax(l.row_slice(t)) == y);
                total += 1;
            }
        }
    }
    Ok(hits as f64 / total as f64)
}
