//! Discrete-state HMM whose observations are per-frame phase likelihoods.
//!
//! Parameter file layout (whitespace separated, `#` starts a comment):
//!
//! ```text
//! phasecast-hmm 1
//! states N
//! initial
//! p_0 ... p_{N-1}
//! transition
//! a_00 ... a_0{N-1}
//! ...                      (N rows)
//! confusion none | confusion
//! b_00 ... b_0{N-1}        (N rows, only when present)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;

use crate::diffcore::argmax;
use crate::{seeded_rng, Error, Result};

pub const HMM_FORMAT: &str = "phasecast-hmm";

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct HmmParams {
    /// Initial state distribution.
    pub initial: Vec<f64>,
    /// Row-stochastic transition matrix.
    pub transition: Vec<Vec<f64>>,
    /// Optional row-stochastic confusion matrix: the observation likelihood of
    /// state `s` is `sum_k confusion[s][k] * obs[k]`.
    pub confusion: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardResult {
    /// Filtered posteriors `p(s_t | o_1..o_t)`.
    pub posteriors: Vec<Vec<f64>>,
    /// Per-step normalizers; their logs sum to the log-likelihood.
    pub scales: Vec<f64>,
    pub log_likelihood: f64,
}

fn stochastic_violation(name: &str, row: &[f64], n: usize) -> Option<String> {
    if row.len() != n {
        return Some(format!("{name}: expected {n} entries, found {}", row.len()));
    }
    if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Some(format!("{name}: entries must be finite and >= 0"));
    }
    let s: f64 = row.iter().sum();
    ((s - 1.0).abs() > ROW_TOLERANCE).then(|| format!("{name}: sums to {s}, not 1"))
}

impl HmmParams {
    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    pub fn uniform(n: usize) -> Self {
        HmmParams {
            initial: vec![1.0 / n as f64; n],
            transition: vec![vec![1.0 / n as f64; n]; n],
            confusion: None,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let n = self.n_states();
        let mut v = vec![];
        if n == 0 {
            return vec!["HMM needs at least one state".into()];
        }
        v.extend(stochastic_violation("initial", &self.initial, n));
        if self.transition.len() != n {
            v.push(format!("transition: expected {n} rows"));
        }
        for (i, r) in self.transition.iter().enumerate() {
            v.extend(stochastic_violation(&format!("transition row {i}"), r, n));
        }
        if let Some(b) = &self.confusion {
            if b.len() != n {
                v.push(format!("confusion: expected {n} rows"));
            }
            for (i, r) in b.iter().enumerate() {
                v.extend(stochastic_violation(&format!("confusion row {i}"), r, n));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid HMM: {}", v.join("; "))))
        }
    }

    fn emission(&self, obs: &[f64], out: &mut [f64]) {
        match &self.confusion {
            None => out.copy_from_slice(obs),
            Some(b) => {
                for (o, row) in out.iter_mut().zip(b) {
                    *o = row.iter().zip(obs).map(|(x, y)| x * y).sum();
                }
            }
        }
    }

    pub fn to_text(&self) -> String {
        let n = self.n_states();
        let row = |r: &[f64]| r.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ");
        let mut out = format!("{HMM_FORMAT} 1\nstates {n}\ninitial\n{}\ntransition\n", row(&self.initial));
        for r in &self.transition {
            let _ = writeln!(out, "{}", row(r));
        }
        match &self.confusion {
            None => out.push_str("confusion none\n"),
            Some(b) => {
                out.push_str("confusion\n");
                for r in b {
                    let _ = writeln!(out, "{}", row(r));
                }
            }
        }
        out
    }

    pub fn from_text(path: &Path, text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let last_line = text.lines().count().max(1);
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| err(last_line, format!("unexpected end of file, expected {what}")))
        };
        let (l, header) = next("header")?;
        if header != format!("{HMM_FORMAT} 1") {
            return Err(err(l, format!("expected header '{HMM_FORMAT} 1'")));
        }
        let (l, states) = next("states")?;
        let n: usize = states
            .strip_prefix("states")
            .and_then(|s| s.trim().parse().ok())
            .filter(|&n| n > 0)
            .ok_or_else(|| err(l, "expected 'states N' with N >= 1".into()))?;
        let parse_row = |(l, s): (usize, &str)| -> Result<Vec<f64>> {
            let r = s
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| err(l, format!("bad number '{t}'"))))
                .collect::<Result<Vec<_>>>()?;
            if r.len() != n {
                return Err(err(l, format!("expected {n} values, found {}", r.len())));
            }
            Ok(r)
        };
        let expect = |(l, s): (usize, &str), word: &str| {
            if s == word {
                Ok(())
            } else {
                Err(err(l, format!("expected '{word}'")))
            }
        };
        expect(next("initial")?, "initial")?;
        let initial = parse_row(next("initial row")?)?;
        expect(next("transition")?, "transition")?;
        let transition = (0..n)
            .map(|_| parse_row(next("transition row")?))
            .collect::<Result<Vec<_>>>()?;
        let (l, c) = next("confusion")?;
        let confusion = match c {
            "confusion none" => None,
            "confusion" => Some(
                (0..n)
                    .map(|_| parse_row(next("confusion row")?))
                    .collect::<Result<Vec<_>>>()?,
            ),
            _ => return Err(err(l, "expected 'confusion' or 'confusion none'".into())),
        };
        let p = HmmParams {
            initial,
            transition,
            confusion,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(path, &text)
    }
}

fn check_obs(obs: &[Vec<f64>], n: usize) -> Result<()> {
    for (t, row) in obs.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Invalid(format!(
                "observation {t}: expected {n} likelihoods, found {}",
                row.len()
            )));
        }
        if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Invalid(format!("observation {t}: likelihoods must be finite and >= 0")));
        }
    }
    Ok(())
}

/// Scaled forward recursion.
pub fn hmm_forward(obs: &[Vec<f64>], params: &HmmParams) -> Result<ForwardResult> {
    let n = params.n_states();
    check_obs(obs, n)?;
    let mut posteriors = Vec::with_capacity(obs.len());
    let mut scales = Vec::with_capacity(obs.len());
    let mut e = vec![0.0; n];
    let mut prev: Option<Vec<f64>> = None;
    for (t, o) in obs.iter().enumerate() {
        params.emission(o, &mut e);
        let mut alpha: Vec<f64> = match &prev {
            None => params.initial.iter().zip(&e).map(|(p, x)| p * x).collect(),
            Some(p) => (0..n)
                .map(|j| {
                    let pred: f64 = (0..n).map(|i| p[i] * params.transition[i][j]).sum();
                    pred * e[j]
                })
                .collect(),
        };
        let c: f64 = alpha.iter().sum();
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Invalid(format!(
                "observation {t} has zero likelihood under every reachable state"
            )));
        }
        alpha.iter_mut().for_each(|a| *a /= c);
        scales.push(c);
        posteriors.push(alpha.clone());
        prev = Some(alpha);
    }
    let log_likelihood = scales.iter().map(|c| c.ln()).sum();
    Ok(ForwardResult {
        posteriors,
        scales,
        log_likelihood,
    })
}

/// Scaled backward recursion using the forward pass's normalizers.
pub fn hmm_backward(obs: &[Vec<f64>], params: &HmmParams, scales: &[f64]) -> Vec<Vec<f64>> {
    let n = params.n_states();
    let len = obs.len();
    let mut beta = vec![vec![1.0; n]; len];
    let mut e = vec![0.0; n];
    for t in (0..len.saturating_sub(1)).rev() {
        params.emission(&obs[t + 1], &mut e);
        for i in 0..n {
            beta[t][i] = (0..n)
                .map(|j| params.transition[i][j] * e[j] * beta[t + 1][j])
                .sum::<f64>()
                / scales[t + 1];
        }
    }
    beta
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaumWelchOptions {
    pub iters: usize,
    pub seed: u64,
    /// Learn a confusion matrix jointly with the dynamics.
    pub learn_confusion: bool,
    /// Start from these parameters instead of the count-based initialization.
    pub init: Option<HmmParams>,
}

impl Default for BaumWelchOptions {
    fn default() -> Self {
        BaumWelchOptions {
            iters: 20,
            seed: 0,
            learn_confusion: false,
            init: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaumWelchFit {
    pub params: HmmParams,
    /// Total log-likelihood before the first update and after every update.
    pub log_likelihoods: Vec<f64>,
}

const SMOOTHING: f64 = 1e-3;

/// Transition counts of the per-frame argmax labels plus smoothing. The seed
/// adds a jitter well below the smoothing term to break exact ties.
fn count_init(seqs: &[Vec<Vec<f64>>], n: usize, opts: &BaumWelchOptions) -> HmmParams {
    let mut rng = seeded_rng(opts.seed);
    let mut counts = vec![vec![0.0; n]; n];
    for s in seqs {
        for w in s.windows(2) {
            counts[argmax(&w[0])][argmax(&w[1])] += 1.0;
        }
    }
    for row in &mut counts {
        for c in row.iter_mut() {
            *c += SMOOTHING * (1.0 + 1e-3 * rng.random::<f64>());
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|c| *c /= s);
    }
    let confusion = opts.learn_confusion.then(|| {
        (0..n)
            .map(|i| (0..n).map(|k| if i == k { 0.9 } else { 0.1 / (n - 1).max(1) as f64 }).collect())
            .collect::<Vec<Vec<f64>>>()
    });
    let confusion = confusion.map(|mut b| {
        if n == 1 {
            b[0][0] = 1.0;
        }
        b
    });
    HmmParams {
        initial: vec![1.0 / n as f64; n],
        transition: counts,
        confusion,
    }
}

fn normalize_rows(m: &mut [Vec<f64>]) {
    for row in m {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        } else {
            let u = 1.0 / row.len() as f64;
            row.iter_mut().for_each(|v| *v = u);
        }
    }
}

/// Expectation-maximization of the initial distribution, the transition
/// matrix and optionally the confusion matrix.
pub fn hmm_baum_welch(seqs: &[Vec<Vec<f64>>], n_states: usize, opts: &BaumWelchOptions) -> Result<BaumWelchFit> {
    if seqs.is_empty() {
        return Err(Error::Invalid("baum_welch: no sequences".into()));
    }
    if opts.iters == 0 || n_states == 0 {
        return Err(Error::Invalid("baum_welch: iters and n_states must be >= 1".into()));
    }
    if seqs.iter().all(|s| s.len() < 2) {
        return Err(Error::Invalid("baum_welch: every sequence is shorter than 2".into()));
    }
    for s in seqs {
        check_obs(s, n_states)?;
    }
    let n = n_states;
    let mut params = match &opts.init {
        Some(p) => {
            p.validate()?;
            if p.n_states() != n {
                return Err(Error::Invalid("baum_welch: initial parameters have the wrong size".into()));
            }
            let mut p = p.clone();
            if !opts.learn_confusion {
                p.confusion = None;
            }
            p
        }
        None => count_init(seqs, n, opts),
    };
    let mut lls = Vec::with_capacity(opts.iters + 1);
    let mut e = vec![0.0; n];
    for iter in 0..=opts.iters {
        let mut ll = 0.0;
        let mut init_acc = vec![0.0; n];
        let mut trans_acc = vec![vec![0.0; n]; n];
        let mut conf_acc = vec![vec![0.0; n]; n];
        for s in seqs.iter().filter(|s| !s.is_empty()) {
            let f = hmm_forward(s, &params)?;
            ll += f.log_likelihood;
            if iter == opts.iters {
                continue;
            }
            let beta = hmm_backward(s, &params, &f.scales);
            for (t, o) in s.iter().enumerate() {
                let gamma: Vec<f64> = (0..n).map(|i| f.posteriors[t][i] * beta[t][i]).collect();
                if t == 0 {
                    init_acc.iter_mut().zip(&gamma).for_each(|(a, g)| *a += g);
                }
                if let Some(b) = &params.confusion {
                    params.emission(o, &mut e);
                    for i in 0..n {
                        if e[i] > 0.0 {
                            for k in 0..n {
                                conf_acc[i][k] += gamma[i] * b[i][k] * o[k] / e[i];
                            }
                        }
                    }
                }
                if t + 1 < s.len() {
                    params.emission(&s[t + 1], &mut e);
                    let c = f.scales[t + 1];
                    for i in 0..n {
                        let a = f.posteriors[t][i];
                        if a == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            trans_acc[i][j] += a * params.transition[i][j] * e[j] * beta[t + 1][j] / c;
                        }
                    }
                }
            }
        }
        lls.push(ll);
        if iter == opts.iters {
            break;
        }
        let total: f64 = init_acc.iter().sum();
        params.initial = init_acc.iter().map(|a| a / total).collect();
        // States never visited keep their previous rows.
        for (i, row) in trans_acc.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                params.transition[i] = row.iter().map(|v| v / s).collect();
            }
        }
        if let Some(b) = &mut params.confusion {
            for (i, row) in conf_acc.iter().enumerate() {
                if row.iter().sum::<f64>() > 0.0 {
                    b[i] = row.clone();
                }
            }
            normalize_rows(b);
        }
    }
    Ok(BaumWelchFit {
        params,
        log_likelihoods: lls,
    })
}

/// Pushes the belief through `transition` one step at a time and emits the
/// argmax after each step.
pub fn hmm_predict(last_posterior: &[f64], transition: &[Vec<f64>], t_future: usize) -> Vec<usize> {
    let n = last_posterior.len();
    let mut p = last_posterior.to_vec();
    let mut out = Vec::with_capacity(t_future);
    for _ in 0..t_future {
        p = (0..n)
            .map(|j| (0..n).map(|i| p[i] * transition[i][j]).sum())
            .collect();
        out.push(argmax(&p));
    }
    out
}
