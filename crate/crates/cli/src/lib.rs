//! The commands behind the `fcgan` binary. Each one writes its outputs and
//! a run manifest, and maps failures onto stable exit codes.

mod config;
mod evaluate;
mod generate;
mod manifest;
mod study;
mod synth;
mod train;

use std::path::{Path, PathBuf};

use fcgan_core::data::{DataError, Dataset, TableSchema};
use thiserror::Error;

pub use config::{load_config, RunConfig, StudyConfig};
pub use evaluate::{cmd_evaluate, evaluate_to_dir, EvaluateArgs, EvaluateOptions};
pub use generate::{cmd_generate, generate_dataset, GenerateReport};
pub use manifest::{manifest_path, write_atomic, HostInfo, RunManifest};
pub use study::{cmd_study, factor_label, format_ratio, MeanStd, StudyArgs, StudyReport, StudyRow};
pub use synth::{cmd_synth, SynthReport};
pub use train::{cmd_train, config_echo, TrainArgs, TrainReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, config, schema or input data.
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Diverged(String),
    /// Anything else, e.g. an output that cannot be written.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Diverged(_) => EXIT_DIVERGED,
            CliError::Runtime(_) => EXIT_FAILURE,
        }
    }
}

pub(crate) fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

pub(crate) fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct GlobalOpts {
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub strict_ranges: bool,
    /// Worker threads for the study; other commands run on one thread.
    pub threads: usize,
}

/// `<path>.<suffix>`, e.g. `model.fcgan` → `model.fcgan.history.csv`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

/// The schema for `data`: `explicit` if given, else `<data>.schema.json`
/// when present, else the 40-cell bench schema.
pub fn resolve_schema(explicit: Option<&Path>, data: &Path) -> Result<TableSchema, CliError> {
    if let Some(p) = explicit {
        return TableSchema::load(p).map_err(input);
    }
    let side = sidecar(data, "schema.json");
    if side.exists() {
        return TableSchema::load(&side).map_err(input);
    }
    Ok(TableSchema::fuel_cell())
}

/// Loads a CSV, logging range violations unless `strict` turns them into errors.
pub fn load_table(schema: &TableSchema, path: &Path, strict: bool) -> Result<Dataset, CliError> {
    let (ds, report) = Dataset::load_csv(schema, path, strict).map_err(|e| match e {
        DataError::Io(..) => CliError::Input(e.to_string()),
        other => CliError::Input(format!("{}: {other}", path.display())),
    })?;
    if let Some(first) = report.violations.first() {
        log::warn!(
            "{}: {} out-of-range values (first: row {}, {} = {})",
            path.display(),
            report.violations.len(),
            first.row,
            first.column,
            first.value
        );
    }
    Ok(ds)
}

pub(crate) fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

/// Derived per-task seed, stable across runs and independent of task order.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    use rand::{RngCore, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}
