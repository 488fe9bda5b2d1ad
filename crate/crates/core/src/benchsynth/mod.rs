//! Virtual test bench producing fuel-cell corpora with known structure.
//!
//! Cell voltages follow an empirical polarization law, gas flows follow
//! Faraday's law times the stoichiometry, and the remaining set-points
//! track the load current around per-day nominal values.

mod corpus;
mod model;

use thiserror::Error;

pub use corpus::{
    air_flow, hydrogen_flow, synth_corpus, BenchConfig, DayShift, GroundTruth, NoiseConfig, SetPoints,
    SyntheticCorpus, FARADAY, MOLAR_VOLUME, OXYGEN_FRACTION,
};
pub use model::{polarization_model, PolarizationParams};

use crate::data::DataError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid bench configuration: {0}")]
    Config(String),
    #[error("channel `{channel}` leaves its range at row {row}: {value}")]
    OutOfRange { channel: String, row: usize, value: f64 },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}
