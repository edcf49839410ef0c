use rand::Rng as _;

use crate::diffcore::{Tape, Tensor, Var};
use crate::{Error, Result, Rng};

/// Relaxed categorical sample for each row of a logits tensor.
#[derive(Debug, Clone)]
pub struct GumbelSample {
    /// `softmax((logits + g) / tau)`
    pub soft: Var,
    /// `log_softmax((logits + g) / tau)`, same rows as `soft`
    pub log_soft: Var,
    /// Argmax of each row of `soft`.
    pub hard: Vec<usize>,
}

/// Standard Gumbel draws `-ln(-ln u)`, `u ~ U(0, 1)`, filled row-major.
pub fn gumbel_noise(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let mut t = Tensor::zeros(rows, cols);
    for v in t.data_mut() {
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        *v = -(-u.ln()).ln();
    }
    t
}

/// Gumbel-Softmax with caller-supplied noise of the same shape as `logits`.
pub fn gumbel_softmax_with_noise(
    tape: &mut Tape,
    logits: Var,
    noise: Tensor,
    tau: f64,
) -> Result<GumbelSample> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Invalid(format!("gumbel_softmax: tau must be > 0, got {tau}")));
    }
    let g = tape.constant(noise);
    let perturbed = tape.add(logits, g)?;
    let scaled = tape.scale(perturbed, 1.0 / tau)?;
    let soft = tape.softmax(scaled)?;
    let log_soft = tape.log_softmax(scaled)?;
    let sv = tape.value(soft);
    let hard = (0..sv.rows()).map(|r| sv.argmax_row(r)).collect();
    Ok(GumbelSample {
        soft,
        log_soft,
        hard,
    })
}

pub fn gumbel_softmax(tape: &mut Tape, logits: Var, tau: f64, rng: &mut Rng) -> Result<GumbelSample> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Invalid(format!("gumbel_softmax: tau must be > 0, got {tau}")));
    }
    let (r, c) = (tape.value(logits).rows(), tape.value(logits).cols());
    let noise = gumbel_noise(r, c, rng);
    gumbel_softmax_with_noise(tape, logits, noise, tau)
}
