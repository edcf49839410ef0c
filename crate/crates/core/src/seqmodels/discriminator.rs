use super::lstm::{lstm_cell, LstmVars, LstmWeights};
use super::ModelConfig;
use crate::diffcore::{Tape, Tensor, Var};
use crate::{Error, Result, Rng};

/// Two recurrent encoders over phase vectors and a binary head on the final
/// state of the future encoder. The future encoder starts from the past
/// encoder's final state.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorParams {
    pub past: LstmWeights,
    pub future: LstmWeights,
    /// `[H, 1]`
    pub head_w: Tensor,
    /// `[1, 1]`
    pub head_b: Tensor,
}

pub const DISCRIMINATOR_TENSORS: [&str; 6] = [
    "discriminator.past.w",
    "discriminator.past.b",
    "discriminator.future.w",
    "discriminator.future.b",
    "discriminator.head.w",
    "discriminator.head.b",
];

impl DiscriminatorParams {
    pub fn init(cfg: &ModelConfig, rng: &mut Rng) -> Self {
        use rand::Rng as _;
        let h = cfg.hidden;
        let bound = 1.0 / (h as f64).sqrt();
        let mut head_w = Tensor::zeros(h, 1);
        for v in head_w.data_mut() {
            *v = rng.random_range(-bound..bound);
        }
        DiscriminatorParams {
            past: LstmWeights::init(cfg.n_phases, h, rng),
            future: LstmWeights::init(cfg.n_phases, h, rng),
            head_w,
            head_b: Tensor::zeros(1, 1),
        }
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        DiscriminatorParams {
            past: LstmWeights::zeros(cfg.n_phases, cfg.hidden),
            future: LstmWeights::zeros(cfg.n_phases, cfg.hidden),
            head_w: Tensor::zeros(cfg.hidden, 1),
            head_b: Tensor::zeros(1, 1),
        }
    }

    pub fn tensors(&self) -> [&Tensor; 6] {
        [
            &self.past.w,
            &self.past.b,
            &self.future.w,
            &self.future.b,
            &self.head_w,
            &self.head_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 6] {
        [
            &mut self.past.w,
            &mut self.past.b,
            &mut self.future.w,
            &mut self.future.b,
            &mut self.head_w,
            &mut self.head_b,
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DiscriminatorVars {
    pub past: LstmVars,
    pub future: LstmVars,
    pub head_w: Var,
    pub head_b: Var,
}

impl DiscriminatorVars {
    pub fn bind(tape: &mut Tape, params: &DiscriminatorParams, trainable: bool) -> Self {
        let past = LstmVars::bind(tape, &params.past, trainable);
        let future = LstmVars::bind(tape, &params.future, trainable);
        let (head_w, head_b) = if trainable {
            (tape.leaf(params.head_w.clone()), tape.leaf(params.head_b.clone()))
        } else {
            (
                tape.constant(params.head_w.clone()),
                tape.constant(params.head_b.clone()),
            )
        };
        DiscriminatorVars {
            past,
            future,
            head_w,
            head_b,
        }
    }

    /// Rebuilds the binding from vars in [`DISCRIMINATOR_TENSORS`] order.
    pub fn from_vars(vars: &[Var], hidden: usize) -> Self {
        assert_eq!(vars.len(), DISCRIMINATOR_TENSORS.len(), "discriminator var count");
        DiscriminatorVars {
            past: LstmVars { w: vars[0], b: vars[1], hidden },
            future: LstmVars { w: vars[2], b: vars[3], hidden },
            head_w: vars[4],
            head_b: vars[5],
        }
    }

    /// Vars in [`DISCRIMINATOR_TENSORS`] order.
    pub fn all(&self) -> Vec<Var> {
        vec![
            self.past.w,
            self.past.b,
            self.future.w,
            self.future.b,
            self.head_w,
            self.head_b,
        ]
    }

    /// Real-vs-fake logit `[B, 1]` for per-step `[B, N_P]` phase vectors.
    pub fn logit(&self, tape: &mut Tape, past: &[Var], future: &[Var]) -> Result<Var> {
        let Some(&first) = past.first().or(future.first()) else {
            return Err(Error::Invalid("discriminate: empty sequences".into()));
        };
        let rows = tape.value(first).rows();
        let hd = self.past.hidden;
        let mut h = tape.constant(Tensor::zeros(rows, hd));
        let mut c = tape.constant(Tensor::zeros(rows, hd));
        for &y in past {
            (h, c) = lstm_cell(tape, y, h, c, &self.past)?;
        }
        for &y in future {
            (h, c) = lstm_cell(tape, y, h, c, &self.future)?;
        }
        let z = tape.matmul(h, self.head_w)?;
        Ok(tape.add(z, self.head_b)?)
    }
}

/// Probability in (0, 1) that `future` is a real continuation of `past_labels`.
/// `future` holds `[T_f, N_P]` (possibly relaxed) one-hot rows.
pub fn discriminate(params: &DiscriminatorParams, past_labels: &[usize], future: &Tensor) -> Result<f64> {
    let n_p = params.past.input_dim();
    if future.cols() != n_p || past_labels.iter().any(|&l| l >= n_p) {
        return Err(Error::Invalid(format!(
            "discriminate: expected {n_p} phases, got future {:?}",
            future.shape()
        )));
    }
    let mut tape = Tape::new();
    let vars = DiscriminatorVars::bind(&mut tape, params, false);
    let past: Vec<Var> = past_labels
        .iter()
        .map(|&l| tape.constant(Tensor::one_hot(&[l], n_p)))
        .collect();
    let fut: Vec<Var> = (0..future.rows())
        .map(|t| tape.constant(Tensor::row(future.row_slice(t).to_vec())))
        .collect();
    let logit = vars.logit(&mut tape, &past, &fut)?;
    let p = tape.sigmoid(logit)?;
    Ok(tape.value(p).item())
}
