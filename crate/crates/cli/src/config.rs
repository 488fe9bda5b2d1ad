use std::path::Path;

use fcgan_core::benchsynth::BenchConfig;
use fcgan_core::data::STEP;
use fcgan_core::training::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{input, CliError, GlobalOpts};

/// Everything a config file can set. Each section falls back to its
/// defaults, so a file only needs the fields it changes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub bench: BenchConfig,
    pub train: TrainConfig,
    pub study: StudyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    /// Data acquisition factors.
    pub factors: Vec<f64>,
    /// Rows generated per inference.
    pub gen_rows: usize,
    /// Inferences averaged per factor.
    pub inferences: usize,
    pub stratify: String,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self { factors: vec![1.0, 0.5, 0.25], gen_rows: 100_000, inferences: 100, stratify: STEP.into() }
    }
}

impl RunConfig {
    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn apply_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed {
            self.bench.seed = s;
            self.train.seed = s;
        }
    }
}

/// Reads a TOML file, or JSON when the extension is `.json`. No path gives
/// the defaults. The global `--seed` overrides both seeds.
pub fn load_config(g: &GlobalOpts) -> Result<RunConfig, CliError> {
    let mut cfg = match &g.config {
        None => RunConfig::default(),
        Some(path) => parse_config(path)?,
    };
    cfg.apply_seed(g.seed);
    Ok(cfg)
}

fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(input)
    } else {
        toml::from_str(&text).map_err(input)
    };
    parsed.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
