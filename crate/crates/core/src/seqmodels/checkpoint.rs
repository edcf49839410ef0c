//! Checkpoint files.
//!
//! JSON document:
//!
//! ```text
//! {
//!   "format": "phasecast-checkpoint",
//!   "version": 1,
//!   "model": { ModelConfig fields },
//!   "tensors": [ { "name": "generator.encoder.w", "shape": [48, 128], "values": [...] }, ... ]
//! }
//! ```
//!
//! Values are row-major and printed in shortest round-trip form, so a saved
//! checkpoint reloads bit-identically. Discriminator tensors are optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::discriminator::DISCRIMINATOR_TENSORS;
use super::generator::GENERATOR_TENSORS;
use super::{DiscriminatorParams, GeneratorParams, ModelConfig};
use crate::diffcore::Tensor;
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "phasecast-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub generator: GeneratorParams,
    pub discriminator: Option<DiscriminatorParams>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    version: u32,
    model: ModelConfig,
    tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let mut tensors: Vec<NamedTensor> = GENERATOR_TENSORS
            .iter()
            .zip(self.generator.tensors())
            .map(|(name, t)| named(name, t))
            .collect();
        if let Some(d) = &self.discriminator {
            tensors.extend(
                DISCRIMINATOR_TENSORS
                    .iter()
                    .zip(d.tensors())
                    .map(|(name, t)| named(name, t)),
            );
        }
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: self.model.clone(),
            tensors,
        };
        serde_json::to_string(&file).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile =
            serde_json::from_str(text).map_err(|e| Error::Invalid(format!("checkpoint: {e}")))?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(Error::Invalid(format!(
                "checkpoint: unsupported format {} v{}",
                file.format, file.version
            )));
        }
        file.model.validate()?;
        let mut generator = GeneratorParams::zeros(&file.model);
        let mut discriminator = DiscriminatorParams::zeros(&file.model);
        let mut seen_gen = [false; GENERATOR_TENSORS.len()];
        let mut seen_dis = [false; DISCRIMINATOR_TENSORS.len()];
        for nt in file.tensors {
            let (slot, seen) = if let Some(i) = GENERATOR_TENSORS.iter().position(|n| *n == nt.name) {
                (generator.tensors_mut().into_iter().nth(i).unwrap(), &mut seen_gen[i])
            } else if let Some(i) = DISCRIMINATOR_TENSORS.iter().position(|n| *n == nt.name) {
                (
                    discriminator.tensors_mut().into_iter().nth(i).unwrap(),
                    &mut seen_dis[i],
                )
            } else {
                return Err(Error::Invalid(format!("checkpoint: unknown tensor {}", nt.name)));
            };
            if *seen {
                return Err(Error::Invalid(format!("checkpoint: duplicate tensor {}", nt.name)));
            }
            if nt.shape != slot.shape() {
                return Err(Error::Invalid(format!(
                    "checkpoint: tensor {} has shape {:?}, config requires {:?}",
                    nt.name,
                    nt.shape,
                    slot.shape()
                )));
            }
            let t = Tensor::new(nt.shape, nt.values)
                .map_err(|e| Error::Invalid(format!("checkpoint: tensor {}: {e}", nt.name)))?;
            if !t.is_finite() {
                return Err(Error::Invalid(format!("checkpoint: tensor {} is not finite", nt.name)));
            }
            *slot = t;
            *seen = true;
        }
        if let Some(i) = seen_gen.iter().position(|s| !s) {
            return Err(Error::Invalid(format!(
                "checkpoint: missing tensor {}",
                GENERATOR_TENSORS[i]
            )));
        }
        let discriminator = match seen_dis.iter().filter(|s| **s).count() {
            0 => None,
            n if n == DISCRIMINATOR_TENSORS.len() => Some(discriminator),
            _ => {
                return Err(Error::Invalid(
                    "checkpoint: incomplete discriminator tensors".into(),
                ))
            }
        };
        Ok(Checkpoint {
            model: file.model,
            generator,
            discriminator,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Invalid(msg) => Error::Invalid(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn named(name: &str, t: &Tensor) -> NamedTensor {
    NamedTensor {
        name: name.to_string(),
        shape: t.shape().to_vec(),
        values: t.data().to_vec(),
    }
}
