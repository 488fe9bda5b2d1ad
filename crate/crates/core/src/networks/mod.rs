//! Generator and critic networks, frozen inference and model persistence.

mod bundle;
mod critic;
mod generator;
mod layers;

use thiserror::Error;

use crate::autodiff::AutodiffError;

pub use bundle::{load_bundle, save_bundle, ModelBundle, FORMAT_VERSION, MAGIC};
pub use critic::{build_critic, critic_score, CriticConfig, CriticNet};
pub use generator::{build_generator, generate, sample_latent, GeneratorConfig, GeneratorNet};
pub use layers::{
    he_uniform, BatchNorm, BatchStats, Dense, ForwardCtx, Layer, LayerRow, Sequential, SlrLayer,
};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("dimension error: {0}")]
    Shape(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("bundle format version {found}, this build reads version {expected}")]
    Version { found: u32, expected: u32 },
    #[error("corrupt bundle: {0}")]
    Corrupt(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}
