use rand_distr::{Distribution, StandardNormal};

use super::sample::draw_categorical;
use super::PhaseSequence;
use crate::diffcore::Tensor;
use crate::{seeded_rng, Error, Result, Rng};

const PROTOTYPE_SEED: u64 = 0x5EED_0F_F00D;

/// `n_phases` orthonormal vectors in `feature_dim` dimensions (rows), from a
/// fixed Gram-Schmidt draw so every run shares the same prototypes.
pub fn prototypes(n_phases: usize, feature_dim: usize) -> Result<Tensor> {
    if feature_dim < n_phases {
        return Err(Error::Invalid(format!(
            "feature_dim {feature_dim} must be >= number of phases {n_phases}"
        )));
    }
    let mut rng = seeded_rng(PROTOTYPE_SEED ^ (feature_dim as u64) << 16);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n_phases);
    while basis.len() < n_phases {
        let mut v: Vec<f64> = (0..feature_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    Ok(Tensor::from_rows(&basis)?)
}

/// Per-second features: the prototype of the (possibly confused) phase plus
/// isotropic Gaussian noise of scale `noise_sigma`.
pub fn emit_features(
    seq: &PhaseSequence,
    n_phases: usize,
    feature_dim: usize,
    noise_sigma: f64,
    confusion: Option<&[Vec<f64>]>,
    rng: &mut Rng,
) -> Result<Tensor> {
    let protos = prototypes(n_phases, feature_dim)?;
    if let Some(c) = confusion {
        if c.len() != n_phases || c.iter().any(|r| r.len() != n_phases) {
            return Err(Error::Invalid(format!("confusion matrix must be {n_phases} x {n_phases}")));
        }
    }
    if seq.labels.iter().any(|&l| l >= n_phases) {
        return Err(Error::Invalid(format!("{}: label out of range", seq.video_id)));
    }
    let mut out = Tensor::zeros(seq.labels.len(), feature_dim);
    for (t, &label) in seq.labels.iter().enumerate() {
        let shown = match confusion {
            Some(c) => draw_categorical(c[label].iter().copied(), rng),
            None => label,
        };
        let row = &mut out.data_mut()[t * feature_dim..(t + 1) * feature_dim];
        for (x, &p) in row.iter_mut().zip(protos.row_slice(shown)) {
            let n: f64 = StandardNormal.sample(rng);
            *x = p + noise_sigma * n;
        }
    }
    Ok(out)
}

/// Label of the closest prototype for every row of `features`.
pub fn nearest_prototype(features: &Tensor, prototypes: &Tensor) -> Vec<usize> {
    (0..features.rows())
        .map(|t| {
            let f = features.row_slice(t);
            let mut best = (0, f64::INFINITY);
            for p in 0..prototypes.rows() {
                let d: f64 = f
                    .iter()
                    .zip(prototypes.row_slice(p))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d < best.1 {
                    best = (p, d);
                }
            }
            best.0
        })
        .collect()
}
