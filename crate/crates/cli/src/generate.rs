use std::path::{Path, PathBuf};
use std::time::Instant;

use fcgan_core::data::Dataset;
use fcgan_core::networks::{generate, load_bundle, ModelBundle, NetworkError};

use crate::{input, load_config, manifest_path, runtime, CliError, GlobalOpts, RunManifest};

#[derive(Debug, Clone)]
pub struct GenerateReport {
    pub rows: usize,
    pub csv: PathBuf,
    pub seed: u64,
    /// Generation plus decoding, without the CSV write.
    pub seconds: f64,
}

/// `n` decoded rows in physical units from the frozen generator.
pub fn generate_dataset(bundle: &ModelBundle, n: usize, seed: u64) -> Result<Dataset, CliError> {
    let encoded = generate(&bundle.generator, n, seed).map_err(runtime)?;
    bundle.encoder.decode(&encoded).map_err(runtime)
}

/// Samples `rows` rows from the bundle at `bundle_path` into the CSV `out`.
/// The seed is `--seed` when given, else the bundle's training seed.
pub fn cmd_generate(g: &GlobalOpts, bundle_path: &Path, rows: usize, out: &Path) -> Result<GenerateReport, CliError> {
    let cfg = load_config(g)?;
    let bundle = load_bundle(bundle_path).map_err(|e| match e {
        NetworkError::Io(..) | NetworkError::Version { .. } | NetworkError::Corrupt(_) => input(e),
        other => runtime(other),
    })?;
    let seed = g.seed.unwrap_or(bundle.seed);
    let mut manifest = RunManifest::start("generate", &cfg, seed);
    let start = Instant::now();
    let ds = generate_dataset(&bundle, rows, seed)?;
    let seconds = start.elapsed().as_secs_f64();
    ds.write_csv(out).map_err(runtime)?;
    println!(
        "generated {rows} rows in {:.0} ms ({:.0} rows/s) -> {}",
        seconds * 1e3,
        rows as f64 / seconds.max(1e-9),
        out.display()
    );
    manifest.inputs = vec![bundle_path.into()];
    manifest.outputs = vec![out.into()];
    manifest.finish(&manifest_path(out, false))?;
    Ok(GenerateReport { rows, csv: out.into(), seed, seconds })
}
