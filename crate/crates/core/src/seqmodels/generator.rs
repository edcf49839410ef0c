use rand_distr::{Distribution, StandardNormal};

use super::gumbel::{gumbel_softmax, GumbelSample};
use super::lstm::{lstm_cell, LstmVars, LstmWeights};
use super::{ModelConfig, PredictionSampleSet};
use crate::diffcore::{Tape, Tensor, Var};
use crate::{Error, Result, Rng};

/// Learnable weights of the generator: recurrent encoder over frame
/// features, recurrent decoder over phase vectors, a phase head shared by
/// both, and the map from `[h_last, z]` to the decoder's initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub encoder: LstmWeights,
    pub decoder: LstmWeights,
    /// `[H, N_P]`
    pub head_w: Tensor,
    /// `[1, N_P]`
    pub head_b: Tensor,
    /// `[H + noise_dim, H]`
    pub init_w: Tensor,
    /// `[1, H]`
    pub init_b: Tensor,
}

pub const GENERATOR_TENSORS: [&str; 8] = [
    "generator.encoder.w",
    "generator.encoder.b",
    "generator.decoder.w",
    "generator.decoder.b",
    "generator.head.w",
    "generator.head.b",
    "generator.init.w",
    "generator.init.b",
];

fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut Rng) -> Tensor {
    use rand::Rng as _;
    let mut t = Tensor::zeros(rows, cols);
    for v in t.data_mut() {
        *v = rng.random_range(-bound..bound);
    }
    t
}

impl GeneratorParams {
    pub fn init(cfg: &ModelConfig, rng: &mut Rng) -> Self {
        let h = cfg.hidden;
        let bound = 1.0 / (h as f64).sqrt();
        GeneratorParams {
            encoder: LstmWeights::init(cfg.feature_dim, h, rng),
            decoder: LstmWeights::init(cfg.n_phases, h, rng),
            head_w: uniform(h, cfg.n_phases, bound, rng),
            head_b: Tensor::zeros(1, cfg.n_phases),
            init_w: uniform(h + cfg.noise_dim, h, 1.0 / ((h + cfg.noise_dim) as f64).sqrt(), rng),
            init_b: Tensor::zeros(1, h),
        }
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        let h = cfg.hidden;
        GeneratorParams {
            encoder: LstmWeights::zeros(cfg.feature_dim, h),
            decoder: LstmWeights::zeros(cfg.n_phases, h),
            head_w: Tensor::zeros(h, cfg.n_phases),
            head_b: Tensor::zeros(1, cfg.n_phases),
            init_w: Tensor::zeros(h + cfg.noise_dim, h),
            init_b: Tensor::zeros(1, h),
        }
    }

    /// Tensors in [`GENERATOR_TENSORS`] order.
    pub fn tensors(&self) -> [&Tensor; 8] {
        [
            &self.encoder.w,
            &self.encoder.b,
            &self.decoder.w,
            &self.decoder.b,
            &self.head_w,
            &self.head_b,
            &self.init_w,
            &self.init_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.encoder.w,
            &mut self.encoder.b,
            &mut self.decoder.w,
            &mut self.decoder.b,
            &mut self.head_w,
            &mut self.head_b,
            &mut self.init_w,
            &mut self.init_b,
        ]
    }
}

/// Generator weights bound to a tape.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorVars {
    pub encoder: LstmVars,
    pub decoder: LstmVars,
    pub head_w: Var,
    pub head_b: Var,
    pub init_w: Var,
    pub init_b: Var,
}

#[derive(Debug, Clone)]
pub struct EncoderOutput {
    /// One `[B, H]` state per observed frame.
    pub hidden: Vec<Var>,
    /// One `[B, N_P]` logit row block per observed frame.
    pub logits: Vec<Var>,
    /// Final cell state.
    pub cell: Var,
}

#[derive(Debug, Clone)]
pub struct DecoderOutput {
    pub logits: Vec<Var>,
    pub samples: Vec<GumbelSample>,
}

/// Everything produced by one batched generator pass. Decoder rows are laid
/// out window-major: row `w * n_samples + j` is sample `j` of window `w`.
#[derive(Debug, Clone)]
pub struct GeneratorOutput {
    pub encoder: EncoderOutput,
    pub decoder: DecoderOutput,
    pub noise: Tensor,
    pub n_windows: usize,
    pub n_samples: usize,
}

impl GeneratorVars {
    pub fn bind(tape: &mut Tape, params: &GeneratorParams, trainable: bool) -> Self {
        let mut bind = |t: &Tensor| {
            if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let head_w = bind(&params.head_w);
        let head_b = bind(&params.head_b);
        let init_w = bind(&params.init_w);
        let init_b = bind(&params.init_b);
        GeneratorVars {
            encoder: LstmVars::bind(tape, &params.encoder, trainable),
            decoder: LstmVars::bind(tape, &params.decoder, trainable),
            head_w,
            head_b,
            init_w,
            init_b,
        }
    }

    /// Rebuilds the binding from vars in [`GENERATOR_TENSORS`] order.
    pub fn from_vars(vars: &[Var], hidden: usize) -> Self {
        assert_eq!(vars.len(), GENERATOR_TENSORS.len(), "generator var count");
        GeneratorVars {
            encoder: LstmVars { w: vars[0], b: vars[1], hidden },
            decoder: LstmVars { w: vars[2], b: vars[3], hidden },
            head_w: vars[4],
            head_b: vars[5],
            init_w: vars[6],
            init_b: vars[7],
        }
    }

    /// Vars in [`GENERATOR_TENSORS`] order.
    pub fn all(&self) -> Vec<Var> {
        vec![
            self.encoder.w,
            self.encoder.b,
            self.decoder.w,
            self.decoder.b,
            self.head_w,
            self.head_b,
            self.init_w,
            self.init_b,
        ]
    }

    pub fn phase_head(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        let z = tape.matmul(h, self.head_w)?;
        Ok(tape.add(z, self.head_b)?)
    }

    /// Runs the encoder from a zero state over per-frame `[B, feature_dim]` inputs.
    pub fn encode(&self, tape: &mut Tape, frames: &[Var]) -> Result<EncoderOutput> {
        let Some(&first) = frames.first() else {
            return Err(Error::Invalid("encode: no frames".into()));
        };
        let rows = tape.value(first).rows();
        let hd = self.encoder.hidden;
        let mut h = tape.constant(Tensor::zeros(rows, hd));
        let mut c = tape.constant(Tensor::zeros(rows, hd));
        let mut hidden = Vec::with_capacity(frames.len());
        let mut logits = Vec::with_capacity(frames.len());
        for &x in frames {
            (h, c) = lstm_cell(tape, x, h, c, &self.encoder)?;
            hidden.push(h);
            logits.push(self.phase_head(tape, h)?);
        }
        Ok(EncoderOutput {
            hidden,
            logits,
            cell: c,
        })
    }

    /// `tanh(W [h_last, z] + b)`
    pub fn init_decoder(&self, tape: &mut Tape, h_last: Var, z: Var) -> Result<Var> {
        let hz = tape.concat(&[h_last, z])?;
        let a = tape.matmul(hz, self.init_w)?;
        let a = tape.add(a, self.init_b)?;
        Ok(tape.tanh(a)?)
    }

    /// Autoregressive roll-out: each step consumes the previous step's relaxed sample.
    #[allow(clippy::too_many_arguments)]
    pub fn decode(
        &self,
        tape: &mut Tape,
        h0: Var,
        c0: Var,
        first_input: Var,
        t_future: usize,
        tau: f64,
        rng: &mut Rng,
    ) -> Result<DecoderOutput> {
        let (mut h, mut c, mut input) = (h0, c0, first_input);
        let mut logits = Vec::with_capacity(t_future);
        let mut samples = Vec::with_capacity(t_future);
        for _ in 0..t_future {
            (h, c) = lstm_cell(tape, input, h, c, &self.decoder)?;
            let l = self.phase_head(tape, h)?;
            let s = gumbel_softmax(tape, l, tau, rng)?;
            input = s.soft;
            logits.push(l);
            samples.push(s);
        }
        Ok(DecoderOutput { logits, samples })
    }

    /// Encodes `B` windows and draws `n_samples` futures for each.
    pub fn generate(
        &self,
        tape: &mut Tape,
        cfg: &ModelConfig,
        frames: &[Var],
        n_samples: usize,
        rng: &mut Rng,
    ) -> Result<GeneratorOutput> {
        if n_samples == 0 {
            return Err(Error::Invalid("generate: n_samples must be >= 1".into()));
        }
        let encoder = self.encode(tape, frames)?;
        let h_last = *encoder.hidden.last().expect("non-empty");
        let n_windows = tape.value(h_last).rows();
        let rep: Vec<usize> = (0..n_windows)
            .flat_map(|w| std::iter::repeat_n(w, n_samples))
            .collect();

        let mut noise = Tensor::zeros(rep.len(), cfg.noise_dim);
        for v in noise.data_mut() {
            *v = StandardNormal.sample(rng);
        }
        let z = tape.constant(noise.clone());
        let h_rep = tape.gather_rows(h_last, &rep)?;
        let c_rep = tape.gather_rows(encoder.cell, &rep)?;
        let h0 = self.init_decoder(tape, h_rep, z)?;

        let current = *encoder.logits.last().expect("non-empty");
        let current = tape.softmax(current)?;
        let first_input = tape.gather_rows(current, &rep)?;

        let decoder = self.decode(tape, h0, c_rep, first_input, cfg.t_future, cfg.gumbel_tau, rng)?;
        Ok(GeneratorOutput {
            encoder,
            decoder,
            noise,
            n_windows,
            n_samples,
        })
    }
}

impl GeneratorOutput {
    /// Splits the batched decoder rows into one sample set per window.
    pub fn sample_sets(&self, tape: &Tape) -> Vec<PredictionSampleSet> {
        let mut sets = Vec::with_capacity(self.n_windows);
        for w in 0..self.n_windows {
            let mut samples = Vec::with_capacity(self.n_samples);
            let mut soft = Vec::with_capacity(self.n_samples);
            let mut noise = Vec::with_capacity(self.n_samples);
            for j in 0..self.n_samples {
                let row = w * self.n_samples + j;
                samples.push(self.decoder.samples.iter().map(|s| s.hard[row]).collect());
                soft.push(
                    self.decoder
                        .samples
                        .iter()
                        .map(|s| tape.value(s.soft).row_slice(row).to_vec())
                        .collect(),
                );
                noise.push(self.noise.row_slice(row).to_vec());
            }
            sets.push(PredictionSampleSet {
                samples,
                soft,
                noise,
            });
        }
        sets
    }
}

/// Stacks row `t` of every window into a `[B, cols]` tensor for each `t`.
pub fn stack_steps(windows: &[&Tensor]) -> Result<Vec<Tensor>> {
    let Some(first) = windows.first() else {
        return Err(Error::Invalid("empty batch".into()));
    };
    let (steps, cols) = (first.rows(), first.cols());
    if windows.iter().any(|w| w.rows() != steps || w.cols() != cols) {
        return Err(Error::Invalid(format!(
            "batch windows disagree on shape (expected [{steps}, {cols}])"
        )));
    }
    Ok((0..steps)
        .map(|t| {
            let mut data = Vec::with_capacity(windows.len() * cols);
            for w in windows {
                data.extend_from_slice(w.row_slice(t));
            }
            Tensor::new(vec![windows.len(), cols], data).expect("consistent")
        })
        .collect())
}

/// Encoder hidden states and phase logits for one observed window.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPast {
    pub hidden: Vec<Vec<f64>>,
    pub logits: Vec<Vec<f64>>,
}

/// Encodes exactly `cfg.t_past` frames of `[t_past, feature_dim]` features.
pub fn encode_past(params: &GeneratorParams, cfg: &ModelConfig, features: &Tensor) -> Result<EncodedPast> {
    if features.rows() != cfg.t_past || features.cols() != cfg.feature_dim {
        return Err(Error::Invalid(format!(
            "encode_past: expected [{}, {}] features, got {:?}",
            cfg.t_past,
            cfg.feature_dim,
            features.shape()
        )));
    }
    let mut tape = Tape::new();
    let vars = GeneratorVars::bind(&mut tape, params, false);
    let frames: Vec<Var> = stack_steps(&[features])?
        .into_iter()
        .map(|t| tape.constant(t))
        .collect();
    let out = vars.encode(&mut tape, &frames)?;
    Ok(EncodedPast {
        hidden: out.hidden.iter().map(|&h| tape.value(h).data().to_vec()).collect(),
        logits: out.logits.iter().map(|&l| tape.value(l).data().to_vec()).collect(),
    })
}

/// Per-frame phase logits for a batch of equally long feature sequences.
/// Result `i` is `[len, N_P]`.
pub fn past_logits_batch(params: &GeneratorParams, features: &[&Tensor]) -> Result<Vec<Tensor>> {
    let steps = stack_steps(features)?;
    let mut tape = Tape::new();
    let vars = GeneratorVars::bind(&mut tape, params, false);
    let frames: Vec<Var> = steps.into_iter().map(|t| tape.constant(t)).collect();
    let out = vars.encode(&mut tape, &frames)?;
    let n_p = params.head_w.cols();
    Ok((0..features.len())
        .map(|w| {
            let data = out
                .logits
                .iter()
                .flat_map(|&l| tape.value(l).row_slice(w).to_vec())
                .collect();
            Tensor::new(vec![out.logits.len(), n_p], data).expect("consistent")
        })
        .collect())
}

/// Draws `n_samples` futures for each window of past features.
pub fn sample_predictions(
    params: &GeneratorParams,
    cfg: &ModelConfig,
    features: &[&Tensor],
    n_samples: usize,
    rng: &mut Rng,
) -> Result<Vec<PredictionSampleSet>> {
    let steps = stack_steps(features)?;
    let mut tape = Tape::new();
    let vars = GeneratorVars::bind(&mut tape, params, false);
    let frames: Vec<Var> = steps.into_iter().map(|t| tape.constant(t)).collect();
    let out = vars.generate(&mut tape, cfg, &frames, n_samples, rng)?;
    Ok(out.sample_sets(&tape))
}
