use serde::{Deserialize, Serialize};

/// Dimensions of the generator and discriminator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub n_phases: usize,
    pub hidden: usize,
    pub feature_dim: usize,
    pub noise_dim: usize,
    /// Observed frames at 1 fps.
    pub t_past: usize,
    /// Predicted frames at 1 fps.
    pub t_future: usize,
    pub gumbel_tau: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_phases: 12,
            hidden: 32,
            feature_dim: 16,
            noise_dim: 8,
            t_past: 15,
            t_future: 15,
            gumbel_tau: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = vec![];
        if self.n_phases < 2 {
            v.push(format!("model.n_phases must be >= 2 (got {})", self.n_phases));
        }
        for (name, val) in [
            ("hidden", self.hidden),
            ("feature_dim", self.feature_dim),
            ("noise_dim", self.noise_dim),
            ("t_past", self.t_past),
            ("t_future", self.t_future),
        ] {
            if val == 0 {
                v.push(format!("model.{name} must be >= 1"));
            }
        }
        if !(self.gumbel_tau > 0.0 && self.gumbel_tau.is_finite()) {
            v.push(format!("model.gumbel_tau must be > 0 (got {})", self.gumbel_tau));
        }
        v
    }

    pub fn validate(&self) -> crate::Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(crate::Error::Config(v))
        }
    }
}
