//! Shared fixtures for the benchmarks.

use fcgan_core::benchsynth::{synth_corpus, BenchConfig};
use fcgan_core::data::{Dataset, Encoder};
use fcgan_core::networks::ModelBundle;
use fcgan_core::training::{init_bundle, TrainConfig};

/// A simulated bench table and an untrained bundle fitted to it.
pub fn fixture(rows: usize, cfg: &TrainConfig) -> (Dataset, ModelBundle) {
    let corpus = synth_corpus(&BenchConfig { rows, ..BenchConfig::default() }).expect("default bench config is valid");
    let enc = Encoder::fit(&corpus.dataset).expect("corpus has variance in every column");
    let bundle = init_bundle(&enc, cfg).expect("default networks build");
    (corpus.dataset, bundle)
}
