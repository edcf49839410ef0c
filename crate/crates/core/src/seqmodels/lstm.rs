use rand::Rng as _;

use crate::diffcore::{DiffError, Tape, Tensor, Var};
use crate::Rng;

/// Single-layer LSTM weights. Gate blocks along the columns are ordered
/// input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    /// `[input + hidden, 4 * hidden]`
    pub w: Tensor,
    /// `[1, 4 * hidden]`
    pub b: Tensor,
}

impl LstmWeights {
    pub fn init(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut w = Tensor::zeros(input + hidden, 4 * hidden);
        for v in w.data_mut() {
            *v = rng.random_range(-bound..bound);
        }
        let mut b = Tensor::zeros(1, 4 * hidden);
        for v in &mut b.data_mut()[hidden..2 * hidden] {
            *v = 1.0;
        }
        LstmWeights { w, b }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmWeights {
            w: Tensor::zeros(input + hidden, 4 * hidden),
            b: Tensor::zeros(1, 4 * hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.rows() - self.hidden()
    }

    pub fn hidden(&self) -> usize {
        self.w.cols() / 4
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w: Var,
    pub b: Var,
    pub hidden: usize,
}

impl LstmVars {
    pub fn bind(tape: &mut Tape, weights: &LstmWeights, trainable: bool) -> Self {
        let (w, b) = if trainable {
            (tape.leaf(weights.w.clone()), tape.leaf(weights.b.clone()))
        } else {
            (
                tape.constant(weights.w.clone()),
                tape.constant(weights.b.clone()),
            )
        };
        LstmVars {
            w,
            b,
            hidden: weights.hidden(),
        }
    }
}

/// One LSTM step on a batch of rows: `x [B, in]`, `h, c [B, H]`.
pub fn lstm_cell(
    tape: &mut Tape,
    x: Var,
    h: Var,
    c: Var,
    weights: &LstmVars,
) -> Result<(Var, Var), DiffError> {
    let hd = weights.hidden;
    let xh = tape.concat(&[x, h])?;
    let z = tape.matmul(xh, weights.w)?;
    let z = tape.add(z, weights.b)?;
    let i = tape.slice(z, 0, hd)?;
    let i = tape.sigmoid(i)?;
    let f = tape.slice(z, hd, 2 * hd)?;
    let f = tape.sigmoid(f)?;
    let g = tape.slice(z, 2 * hd, 3 * hd)?;
    let g = tape.tanh(g)?;
    let o = tape.slice(z, 3 * hd, 4 * hd)?;
    let o = tape.sigmoid(o)?;
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let tc = tape.tanh(c_next)?;
    let h_next = tape.mul(o, tc)?;
    Ok((h_next, c_next))
}
