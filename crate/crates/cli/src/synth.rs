use std::path::{Path, PathBuf};

use fcgan_core::benchsynth::{synth_corpus, BenchError};

use crate::{input, load_config, manifest_path, runtime, sidecar, CliError, GlobalOpts, RunManifest};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthReport {
    pub rows: usize,
    pub csv: PathBuf,
    pub truth: PathBuf,
    pub schema: PathBuf,
}

/// Writes a simulated bench corpus to `out`, plus its ground truth
/// (`<out>.truth.json`) and schema (`<out>.schema.json`).
pub fn cmd_synth(g: &GlobalOpts, rows: Option<usize>, out: &Path) -> Result<SynthReport, CliError> {
    let mut cfg = load_config(g)?;
    if let Some(n) = rows {
        cfg.bench.rows = n;
    }
    let mut manifest = RunManifest::start("synth", &cfg, cfg.bench.seed);
    let corpus = synth_corpus(&cfg.bench).map_err(|e| match e {
        BenchError::Config(_) | BenchError::OutOfRange { .. } => input(e),
        other => runtime(other),
    })?;
    let truth = sidecar(out, "truth.json");
    let schema = sidecar(out, "schema.json");
    corpus.write(out, &truth).map_err(runtime)?;
    corpus.dataset.schema().save(&schema).map_err(runtime)?;
    let report = SynthReport { rows: corpus.dataset.n_rows(), csv: out.into(), truth, schema };
    println!("wrote {} rows to {}", report.rows, out.display());
    manifest.outputs = vec![report.csv.clone(), report.truth.clone(), report.schema.clone()];
    manifest.finish(&manifest_path(out, false))?;
    Ok(report)
}
