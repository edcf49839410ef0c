//! Constant-prediction and HMM baselines over the encoder's phase estimates.

mod hmm;

pub use hmm::{
    hmm_backward, hmm_baum_welch, hmm_forward, hmm_predict, BaumWelchFit, BaumWelchOptions, ForwardResult,
    HmmParams, HMM_FORMAT,
};

use crate::diffcore::argmax;
use crate::{Error, Result};

/// Repeats the argmax of the last past logit row `t_future` times.
pub fn constant_predict(past_logits: &[Vec<f64>], t_future: usize) -> Result<Vec<usize>> {
    let last = past_logits
        .last()
        .ok_or_else(|| Error::Invalid("constant_predict: empty past".into()))?;
    Ok(vec![argmax(last); t_future])
}
