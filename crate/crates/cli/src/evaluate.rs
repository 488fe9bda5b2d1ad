use std::io::Write;
use std::path::{Path, PathBuf};

use fcgan_core::data::{Dataset, EXPERIMENTAL_INPUTS, LOAD_CURRENT, STACK_VOLTAGE};
use fcgan_core::metrics::{
    correlation_matrix, evaluate, histogram, proximity_scores, shared_edges, triangle_export, Evaluation, MetricsError,
    MetricsReport, DEFAULT_NEIGHBOURS,
};
use fcgan_core::networks::{critic_score, load_bundle, ModelBundle};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{
    create_dir, input, load_config, load_table, manifest_path, resolve_schema, runtime, CliError, GlobalOpts,
    RunManifest,
};

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateOptions {
    /// Generated rows drawn at random for the proximity study.
    pub proximity_rows: usize,
    pub neighbours: usize,
    pub triangle_bins: usize,
    pub histogram_bins: usize,
    pub seed: u64,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        Self { proximity_rows: 10_000, neighbours: DEFAULT_NEIGHBOURS, triangle_bins: 30, histogram_bins: 50, seed: 0 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateArgs {
    pub real: PathBuf,
    pub generated: PathBuf,
    /// Needed for the critic-based outputs; they are skipped without it.
    pub bundle: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub options: EvaluateOptions,
}

fn metrics_error(e: MetricsError) -> CliError {
    match e {
        MetricsError::Io(..) | MetricsError::Network(_) => runtime(e),
        other => input(other),
    }
}

fn present<'a>(ds: &Dataset, names: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    names.into_iter().filter(|n| ds.schema().continuous_index(n).is_some()).map(String::from).collect()
}

/// The ten set-points plus the stack voltage when the schema has them,
/// otherwise every continuous column.
fn correlation_features(ds: &Dataset) -> Vec<String> {
    let f = present(ds, EXPERIMENTAL_INPUTS.into_iter().chain([STACK_VOLTAGE]));
    if f.len() >= 2 {
        f
    } else {
        ds.schema().continuous_names()
    }
}

fn triangle_features(ds: &Dataset) -> Vec<String> {
    let f = present(ds, EXPERIMENTAL_INPUTS.into_iter().chain([LOAD_CURRENT, STACK_VOLTAGE]));
    if f.len() >= 2 {
        f
    } else {
        ds.schema().continuous_names()
    }
}

fn write_file(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
    let err = |e: std::io::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(err)?);
    fill(&mut f).map_err(err)?;
    f.flush().map_err(err)
}

fn write_critic_histogram(path: &Path, real: &[f64], gen: &[f64], bins: usize) -> Result<(), CliError> {
    let edges = shared_edges(real, gen, bins);
    let (hr, hg) = (histogram(real, &edges), histogram(gen, &edges));
    write_file(path, |w| {
        writeln!(w, "lo,hi,real,generated")?;
        for b in 0..bins {
            writeln!(w, "{},{},{},{}", edges[b], edges[b + 1], hr[b], hg[b])?;
        }
        Ok(())
    })
}

/// Computes every metric and writes the report and figure data into `dir`.
/// Critic-score histograms and the proximity study need `bundle`.
pub fn evaluate_to_dir(
    real: &Dataset,
    gen: &Dataset,
    bundle: Option<&ModelBundle>,
    opts: &EvaluateOptions,
    dir: &Path,
) -> Result<Evaluation, CliError> {
    create_dir(dir)?;
    let mut ev = evaluate(real, gen).map_err(metrics_error)?;

    let corr = correlation_features(real);
    correlation_matrix(real, &corr).map_err(metrics_error)?.write_csv(&dir.join("correlation_real.csv")).map_err(runtime)?;
    correlation_matrix(gen, &corr).map_err(metrics_error)?.write_csv(&dir.join("correlation_gen.csv")).map_err(runtime)?;
    triangle_export(real, gen, &triangle_features(real), opts.triangle_bins)
        .map_err(metrics_error)?
        .write_csv(dir)
        .map_err(runtime)?;
    if let Some(p) = &ev.polarization {
        p.write_csv(&dir.join("polarization_bins.csv")).map_err(runtime)?;
    }

    match bundle {
        Some(b) => {
            let enc = &b.encoder;
            let real_m = enc.encode(real).map_err(input)?;
            let gen_m = enc.encode(gen).map_err(input)?;
            let sr = critic_score(&b.critic, &real_m).map_err(runtime)?;
            let sg = critic_score(&b.critic, &gen_m).map_err(runtime)?;
            write_critic_histogram(&dir.join("critic_scores.csv"), &sr, &sg, opts.histogram_bins)?;

            let take = opts.proximity_rows.min(gen.n_rows());
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut idx = sample(&mut rng, gen.n_rows(), take).into_vec();
            idx.sort_unstable();
            let subset = enc.encode(&gen.select_rows(&idx)).map_err(input)?;
            let inputs = present(real, EXPERIMENTAL_INPUTS);
            let inputs: Vec<&str> = inputs.iter().map(String::as_str).collect();
            if inputs.is_empty() || real.n_rows() < opts.neighbours || take == 0 {
                ev.report.notes.push("proximity study skipped: no set-point columns or too few rows".into());
            } else {
                let p = proximity_scores(&b.critic, enc, &subset, &real_m, &inputs, opts.neighbours)
                    .map_err(metrics_error)?;
                write_file(&dir.join("proximity_scores.csv"), |w| {
                    writeln!(w, "generated_row,critic,proximity")?;
                    for ((&row, s), c) in idx.iter().zip(&p.scores).zip(&p.critic_gen) {
                        match s {
                            Some(v) => writeln!(w, "{row},{c},{v}")?,
                            None => writeln!(w, "{row},{c},")?,
                        }
                    }
                    Ok(())
                })?;
                ev.attach_proximity(p);
            }
        }
        None => ev.report.notes.push("no model bundle given: critic scores and proximity study skipped".into()),
    }
    ev.report.write_json(&dir.join("report.json")).map_err(runtime)?;
    Ok(ev)
}

fn summary_line(r: &MetricsReport) -> String {
    let pct = |v: Option<f64>| v.map_or("n/a".into(), |v| format!("{v:.3}%"));
    format!(
        "S_ks={:.4} S_dim={:.4} S_kendall={:.4} (p={:.2e}) e_V={} e_I={}",
        r.s_ks,
        r.s_dim,
        r.s_kendall,
        r.kendall_p_value,
        pct(r.e_v),
        pct(r.e_i)
    )
}

/// Loads both tables with one schema (the bundle's, when given) and writes
/// the evaluation into `out_dir`.
pub fn cmd_evaluate(g: &GlobalOpts, args: &EvaluateArgs, out_dir: &Path) -> Result<MetricsReport, CliError> {
    let cfg = load_config(g)?;
    let bundle = match &args.bundle {
        Some(p) => Some(load_bundle(p).map_err(input)?),
        None => None,
    };
    let schema = match (&bundle, &args.schema) {
        (Some(b), None) => b.encoder.schema.clone(),
        _ => resolve_schema(args.schema.as_deref(), &args.real)?,
    };
    let mut opts = args.options.clone();
    opts.seed = g.seed.unwrap_or(opts.seed);
    let mut manifest = RunManifest::start("evaluate", &cfg, opts.seed);
    let real = load_table(&schema, &args.real, g.strict_ranges)?;
    let gen = load_table(&schema, &args.generated, g.strict_ranges)?;
    let ev = evaluate_to_dir(&real, &gen, bundle.as_ref(), &opts, out_dir)?;
    println!("{}", summary_line(&ev.report));
    manifest.inputs = [args.real.clone(), args.generated.clone()].into_iter().chain(args.bundle.clone()).collect();
    manifest.outputs = vec![out_dir.into()];
    manifest.finish(&manifest_path(out_dir, true))?;
    Ok(ev.report)
}
