use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::autodiff::AdamConfig;

/// Hyperparameters of the WGAN-GP loop. Missing fields in a config file
/// take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Gradient-penalty weight λ.
    pub gp_weight: f64,
    /// Critic updates per generator update.
    pub n_critic: usize,
    pub latent_dim: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Epochs between checkpoints; 0 disables them.
    pub checkpoint_interval: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 25_000,
            batch_size: 256,
            learning_rate: 1e-3,
            gp_weight: 10.0,
            n_critic: 15,
            latent_dim: 150,
            adam_beta1: 0.0,
            adam_beta2: 0.9,
            adam_eps: 1e-8,
            seed: 0,
            checkpoint_interval: 1_000,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.learning_rate, beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_owned()));
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 (batch norm needs two rows)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.gp_weight >= 0.0 && self.gp_weight.is_finite()) {
            return bad("gp_weight must be non-negative");
        }
        if self.n_critic == 0 {
            return bad("n_critic must be at least 1");
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        Ok(())
    }
}
