//! WGAN-GP training: alternating critic and generator updates with a
//! gradient penalty on real/fake interpolates, optimized with Adam.

mod config;
mod history;
mod step;
mod trainer;

use std::fmt;

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::networks::{ModelBundle, NetworkError};

pub use config::TrainConfig;
pub use history::{EpochRecord, TrainHistory};
pub use step::{critic_objective, critic_step, generator_step, gradient_penalty, interpolate, CriticStats};
pub use trainer::{epoch_rng, init_bundle, init_bundle_with, run_epoch, train};

/// The last checkpointed bundle before a divergence.
pub struct LastGood(pub Box<ModelBundle>);

impl fmt::Debug for LastGood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ModelBundle(epochs_completed = {})", self.0.epochs_completed)
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("{rows} training rows is fewer than the batch size {batch_size}")]
    TooFewRows { rows: usize, batch_size: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("training diverged at epoch {epoch}; last good checkpoint is from epoch {}", last_good.0.epochs_completed)]
    Diverged { epoch: u64, last_good: LastGood },
    #[error("checkpoint failed: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}
