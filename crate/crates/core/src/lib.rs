//! Wasserstein GAN with gradient penalty for synthesizing tabular fuel-cell
//! test-bench data, with a reverse-mode autodiff engine, evaluation metrics
//! and a physics-flavoured reference simulator.

pub mod autodiff;
pub mod benchsynth;
pub mod data;
pub mod metrics;
pub mod networks;
pub mod training;

pub use benchsynth::{BenchConfig, SyntheticCorpus};
pub use data::{Dataset, Encoder, TableSchema};
pub use metrics::{Evaluation, MetricsReport};
pub use networks::ModelBundle;
pub use training::{TrainConfig, TrainHistory};
