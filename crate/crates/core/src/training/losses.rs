use serde::{Deserialize, Serialize};

use crate::diffcore::{Tape, Tensor, Var};
use crate::seqmodels::{DiscriminatorVars, GeneratorOutput, GeneratorVars, ModelConfig, PredictionSampleSet};
use crate::synthgen::Window;
use crate::{Error, Result, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub w_dis: f64,
    pub w_rec: f64,
    pub w_past: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_dis: 0.6,
            w_rec: 0.2,
            w_past: 0.2,
        }
    }
}

impl LossWeights {
    pub fn violations(&self) -> Vec<String> {
        [("w_dis", self.w_dis), ("w_rec", self.w_rec), ("w_past", self.w_past)]
            .into_iter()
            .filter(|(_, v)| !(v.is_finite() && *v >= 0.0))
            .map(|(k, v)| format!("loss weight {k} must be finite and >= 0, got {v}"))
            .collect()
    }
}

fn neg_ln(p: f64) -> f64 {
    -p.max(f64::MIN_POSITIVE).ln()
}

/// Smallest summed cross-entropy between a sample's soft outputs and `gt`.
pub fn variety_loss(set: &PredictionSampleSet, gt: &[usize]) -> Result<f64> {
    if set.soft.is_empty() {
        return Err(Error::Invalid("variety_loss: empty sample set".into()));
    }
    let mut best = f64::INFINITY;
    for sample in &set.soft {
        if sample.len() != gt.len() {
            return Err(Error::Invalid(format!(
                "variety_loss: sample has {} steps, ground truth {}",
                sample.len(),
                gt.len()
            )));
        }
        let ce: f64 = sample.iter().zip(gt).map(|(row, &g)| neg_ln(row[g])).sum();
        best = best.min(ce);
    }
    Ok(best)
}

/// Summed per-step cross-entropy of phase logits against past labels.
pub fn past_encoding_loss(logits: &[Vec<f64>], gt: &[usize]) -> Result<f64> {
    if logits.len() != gt.len() {
        return Err(Error::Invalid(format!(
            "past_encoding_loss: {} logit rows for {} labels",
            logits.len(),
            gt.len()
        )));
    }
    Ok(logits
        .iter()
        .zip(gt)
        .map(|(row, &g)| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - row[g]
        })
        .sum())
}

/// `(discriminator loss, non-saturating generator loss)` from probabilities.
pub fn gan_losses(d_real: f64, d_fakes: &[f64]) -> Result<(f64, f64)> {
    let inside = |p: f64| p > 0.0 && p < 1.0;
    if !inside(d_real) || d_fakes.is_empty() || !d_fakes.iter().all(|&p| inside(p)) {
        return Err(Error::Invalid("gan_losses: probabilities must lie in (0, 1)".into()));
    }
    let n = d_fakes.len() as f64;
    let d = -d_real.ln() - d_fakes.iter().map(|p| (1.0 - p).ln()).sum::<f64>() / n;
    let g = -d_fakes.iter().map(|p| p.ln()).sum::<f64>() / n;
    Ok((d, g))
}

pub fn total_loss(l_dis: f64, l_rec: f64, l_past: f64, w: &LossWeights) -> f64 {
    w.w_dis * l_dis + w.w_rec * l_rec + w.w_past * l_past
}

/// Scalar nodes of one generator objective evaluation.
#[derive(Debug, Clone)]
pub struct GeneratorObjective {
    pub total: Var,
    pub rec: Var,
    pub past: Var,
    pub adv: Option<Var>,
    pub output: GeneratorOutput,
}

/// Per-step `[B, F]` constants from the windows' past features.
pub fn past_frames(tape: &mut Tape, batch: &[&Window]) -> Result<Vec<Var>> {
    let feats: Vec<&Tensor> = batch.iter().map(|w| &w.past_features).collect();
    Ok(crate::seqmodels::stack_steps(&feats)?
        .into_iter()
        .map(|t| tape.constant(t))
        .collect())
}

/// Per-step one-hot `[B, N_P]` constants of the labels chosen by `pick`.
fn label_steps(tape: &mut Tape, batch: &[&Window], steps: usize, n_p: usize, pick: impl Fn(&Window, usize) -> usize) -> Vec<Var> {
    (0..steps)
        .map(|t| {
            let labels: Vec<usize> = batch.iter().map(|w| pick(w, t)).collect();
            tape.constant(Tensor::one_hot(&labels, n_p))
        })
        .collect()
}

/// `[rows, 1]` summed log-probability of the target classes over the steps.
fn summed_log_prob(tape: &mut Tape, log_probs: &[Var], targets: &[Var]) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for (&lp, &y) in log_probs.iter().zip(targets) {
        let picked = tape.mul(lp, y)?;
        let s = tape.sum_cols(picked)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, s)?,
            None => s,
        });
    }
    acc.ok_or_else(|| Error::Invalid("empty sequence".into()))
}

/// Mean over the batch of the summed past cross-entropy.
pub fn past_loss_var(tape: &mut Tape, logits: &[Var], batch: &[&Window], n_p: usize) -> Result<Var> {
    let targets = label_steps(tape, batch, logits.len(), n_p, |w, t| w.past_labels[t]);
    let log_probs = logits
        .iter()
        .map(|&l| tape.log_softmax(l))
        .collect::<Result<Vec<_>, _>>()?;
    let lp = summed_log_prob(tape, &log_probs, &targets)?;
    let total = tape.sum(lp)?;
    Ok(tape.scale(total, -1.0 / batch.len() as f64)?)
}

/// Generator objective `w_rec L_rec + w_past L_past (+ w_dis L_adv)` on one
/// batch. `L_rec` is the batch mean of the best-of-samples cross-entropy
/// against the relaxed samples, `L_adv` is `-mean ln D` over the first sample
/// of every window.
#[allow(clippy::too_many_arguments)]
pub fn generator_objective(
    tape: &mut Tape,
    gen: &GeneratorVars,
    disc: Option<&DiscriminatorVars>,
    cfg: &ModelConfig,
    batch: &[&Window],
    n_samples: usize,
    w: &LossWeights,
    rng: &mut Rng,
) -> Result<GeneratorObjective> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    let n_p = cfg.n_phases;
    let frames = past_frames(tape, batch)?;
    let output = gen.generate(tape, cfg, &frames, n_samples, rng)?;

    let rep: Vec<&Window> = batch
        .iter()
        .flat_map(|w| std::iter::repeat_n(*w, n_samples))
        .collect();
    let fut_targets = label_steps(tape, &rep, cfg.t_future, n_p, |w, t| w.future_labels[t]);
    let log_soft: Vec<Var> = output.decoder.samples.iter().map(|s| s.log_soft).collect();
    let lp = summed_log_prob(tape, &log_soft, &fut_targets)?;
    let nll = tape.scale(lp, -1.0)?;
    let per_sample = (0..n_samples)
        .map(|j| {
            let rows: Vec<usize> = (0..batch.len()).map(|b| b * n_samples + j).collect();
            tape.gather_rows(nll, &rows)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let best = tape.min(&per_sample)?;
    let rec_sum = tape.sum(best)?;
    let rec = tape.scale(rec_sum, 1.0 / batch.len() as f64)?;

    let past = past_loss_var(tape, &output.encoder.logits, batch, n_p)?;

    let a = tape.scale(rec, w.w_rec)?;
    let b = tape.scale(past, w.w_past)?;
    let mut total = tape.add(a, b)?;
    let mut adv = None;
    if let Some(d) = disc {
        let first: Vec<usize> = (0..batch.len()).map(|b| b * n_samples).collect();
        let fake = output
            .decoder
            .samples
            .iter()
            .map(|s| tape.gather_rows(s.soft, &first))
            .collect::<Result<Vec<_>, _>>()?;
        let past_y = label_steps(tape, batch, cfg.t_past, n_p, |w, t| w.past_labels[t]);
        let logit = d.logit(tape, &past_y, &fake)?;
        let ls = tape.log_sigmoid(logit)?;
        let s = tape.sum(ls)?;
        let l_adv = tape.scale(s, -1.0 / batch.len() as f64)?;
        let c = tape.scale(l_adv, w.w_dis)?;
        total = tape.add(total, c)?;
        adv = Some(l_adv);
    }
    Ok(GeneratorObjective {
        total,
        rec,
        past,
        adv,
        output,
    })
}

/// `-mean ln D(real) - mean ln(1 - D(fake))`. `fakes[t]` holds the `[B, N_P]`
/// relaxed outputs of future step `t`, one row per window.
pub fn discriminator_objective(
    tape: &mut Tape,
    disc: &DiscriminatorVars,
    cfg: &ModelConfig,
    batch: &[&Window],
    fakes: &[Var],
) -> Result<Var> {
    let n_p = cfg.n_phases;
    let inv_b = 1.0 / batch.len() as f64;
    let past_y = label_steps(tape, batch, cfg.t_past, n_p, |w, t| w.past_labels[t]);
    let real_y = label_steps(tape, batch, cfg.t_future, n_p, |w, t| w.future_labels[t]);
    let real = disc.logit(tape, &past_y, &real_y)?;
    let fake = disc.logit(tape, &past_y, fakes)?;
    let real_ls = tape.log_sigmoid(real)?;
    let neg_fake = tape.scale(fake, -1.0)?;
    let fake_ls = tape.log_sigmoid(neg_fake)?;
    let both = tape.add(real_ls, fake_ls)?;
    let s = tape.sum(both)?;
    Ok(tape.scale(s, -inv_b)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variety_loss_hand_case() {
        let set = PredictionSampleSet {
            samples: vec![vec![0], vec![0]],
            soft: vec![vec![vec![0.5, 0.5]], vec![vec![0.9, 0.1]]],
            noise: vec![vec![], vec![]],
        };
        let l = variety_loss(&set, &[0]).unwrap();
        assert!((l - (-(0.9f64).ln())).abs() < 1e-12);
        assert!((l - 0.1054).abs() < 1e-4);
    }

    #[test]
    fn variety_loss_near_perfect_sample() {
        let row = vec![1.0 - 1e-9, 1e-9];
        let set = PredictionSampleSet {
            samples: vec![vec![0; 15]],
            soft: vec![vec![row; 15]],
            noise: vec![vec![]],
        };
        let l = variety_loss(&set, &[0; 15]).unwrap();
        assert!((0.0..1e-7).contains(&l));
    }

    #[test]
    fn variety_loss_rejects_empty() {
        let set = PredictionSampleSet {
            samples: vec![],
            soft: vec![],
            noise: vec![],
        };
        assert!(variety_loss(&set, &[0]).is_err());
    }

    #[test]
    fn past_loss_closed_forms() {
        let uniform = vec![vec![0.0; 7]; 15];
        let l = past_encoding_loss(&uniform, &[3; 15]).unwrap();
        assert!((l - 15.0 * 7f64.ln()).abs() < 1e-9);
        assert!((l - 29.19).abs() < 0.01);
        // Logits whose softmax gives p = 0.8 on the true class of two phases.
        let p: f64 = 0.8;
        let logits = vec![vec![(p / (1.0 - p)).ln(), 0.0]; 4];
        let l = past_encoding_loss(&logits, &[0; 4]).unwrap();
        assert!((l + 4.0 * p.ln()).abs() < 1e-12);
        assert!(past_encoding_loss(&uniform, &[0; 3]).is_err());
    }

    #[test]
    fn gan_loss_equilibrium() {
        let (d, g) = gan_losses(0.5, &[0.5, 0.5]).unwrap();
        assert!((d - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((g - 2f64.ln()).abs() < 1e-12);
        let (d, _) = gan_losses(1.0 - 1e-12, &[1e-12]).unwrap();
        assert!(d < 1e-10);
        let (_, g) = gan_losses(0.5, &[1.0 - 1e-12]).unwrap();
        assert!(g < 1e-10);
        assert!(gan_losses(1.0, &[0.5]).is_err());
        assert!(gan_losses(0.5, &[0.0]).is_err());
    }

    #[test]
    fn total_loss_uses_default_weights() {
        let w = LossWeights::default();
        assert!((total_loss(1.0, 2.0, 3.0, &w) - 1.6).abs() < 1e-12);
        assert_eq!(total_loss(0.0, 0.0, 0.0, &w), 0.0);
        let zero = LossWeights {
            w_dis: 0.0,
            w_rec: 0.0,
            w_past: 0.0,
        };
        assert_eq!(total_loss(1.0, 2.0, 3.0, &zero), 0.0);
    }
}
