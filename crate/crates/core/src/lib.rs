//! Prediction of future surgical phase trajectories.
//!
//! A recurrent encoder reads a window of per-second frame features, a
//! noise-conditioned decoder rolls out several discrete future phase
//! sequences through a Gumbel-Softmax relaxation, and a discriminator judges
//! them against real continuations. The crate also carries the constant and
//! HMM baselines, a synthetic workflow benchmark, the evaluation metrics and
//! a command-line experiment harness.

pub mod baselines;
pub mod diffcore;
pub mod harness;
pub mod metrics;
pub mod seqmodels;
pub mod synthgen;
pub mod training;

use std::path::PathBuf;

pub use diffcore::{DiffError, Tensor};

/// Deterministic generator used everywhere a seed is accepted.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("training diverged at epoch {epoch}: {source}")]
    Diverged {
        epoch: usize,
        #[source]
        source: DiffError,
        last_good: Box<training::GanState>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable tag used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Diff(_) => "numeric",
            Error::Invalid(_) => "invalid",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Diverged { .. } => "diverged",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Independent seed for a named sub-stream (splitmix64 finalizer over the
/// base seed mixed with `stream`).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
