use std::path::{Path, PathBuf};

use fcgan_core::data::Encoder;
use fcgan_core::networks::{load_bundle, save_bundle, NetworkError};
use fcgan_core::training::{init_bundle, train, TrainConfig, TrainError, TrainHistory};

use crate::{
    input, load_config, load_table, manifest_path, resolve_schema, runtime, sidecar, CliError, GlobalOpts,
    RunManifest,
};

/// Generator total quoted alongside the layer tables; the tables themselves
/// sum to a slightly smaller figure.
const QUOTED_GENERATOR_TOTAL: usize = 120_769;

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub data: PathBuf,
    pub schema: Option<PathBuf>,
    pub epochs: Option<u64>,
    /// Continue from this bundle instead of a fresh initialization.
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub bundle: PathBuf,
    pub history: PathBuf,
    pub epochs_completed: u64,
    pub history_rows: usize,
    pub seconds: f64,
    pub digest: String,
}

fn thousands(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// One-line summary of the hyperparameters that matter most.
pub fn config_echo(cfg: &TrainConfig) -> String {
    format!(
        "epochs={} batch={} λ={} ratio={} L={} lr={} β1={} β2={} seed={}",
        thousands(cfg.epochs),
        cfg.batch_size,
        cfg.gp_weight,
        cfg.n_critic,
        cfg.latent_dim,
        cfg.learning_rate,
        cfg.adam_beta1,
        cfg.adam_beta2,
        cfg.seed
    )
}

fn train_error(e: TrainError, checkpoint: &Path) -> CliError {
    match e {
        TrainError::Diverged { epoch, last_good } => {
            let kept = last_good.0.epochs_completed;
            match save_bundle(&last_good.0, checkpoint) {
                Ok(()) => CliError::Diverged(format!(
                    "training diverged at epoch {epoch}; last good checkpoint (epoch {kept}) is {}",
                    checkpoint.display()
                )),
                Err(w) => CliError::Diverged(format!("training diverged at epoch {epoch}; saving the checkpoint failed: {w}")),
            }
        }
        TrainError::Config(_) | TrainError::TooFewRows { .. } | TrainError::Shape(_) => input(e),
        other => runtime(other),
    }
}

/// Trains on `args.data` and writes the bundle to `out`, the per-epoch
/// history to `<out>.history.csv` and periodic checkpoints to `<out>.ckpt`.
pub fn cmd_train(g: &GlobalOpts, args: &TrainArgs, out: &Path) -> Result<TrainReport, CliError> {
    let mut cfg = load_config(g)?;
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    cfg.train.validate().map_err(input)?;
    let mut manifest = RunManifest::start("train", &cfg, cfg.train.seed);

    let schema = resolve_schema(args.schema.as_deref(), &args.data)?;
    let ds = load_table(&schema, &args.data, g.strict_ranges)?;
    let bundle = match &args.resume {
        Some(path) => {
            let b = load_bundle(path).map_err(|e| match e {
                NetworkError::Io(..) | NetworkError::Version { .. } | NetworkError::Corrupt(_) => input(e),
                other => runtime(other),
            })?;
            if b.encoder.schema.digest() != schema.digest() {
                return Err(CliError::Input(format!("{} was trained on a different schema", path.display())));
            }
            b
        }
        None => {
            let enc = Encoder::fit(&ds).map_err(input)?;
            init_bundle(&enc, &cfg.train).map_err(input)?
        }
    };
    let real = bundle.encoder.encode(&ds).map_err(input)?;

    println!("{}", config_echo(&cfg.train));
    let gen_total = bundle.generator.param_count();
    println!(
        "generator parameters: {gen_total} (quoted total {QUOTED_GENERATOR_TOTAL}, difference {}); critic parameters: {}",
        QUOTED_GENERATOR_TOTAL as i64 - gen_total as i64,
        bundle.critic.param_count()
    );

    let checkpoint = sidecar(out, "ckpt");
    let history_path = sidecar(out, "history.csv");
    let start = std::time::Instant::now();
    let mut on_checkpoint = |b: &fcgan_core::networks::ModelBundle, _: &TrainHistory| {
        log::info!("checkpoint at epoch {}", b.epochs_completed);
        save_bundle(b, &checkpoint).map_err(|e| e.to_string())
    };
    let (trained, history) = train(bundle, &real, &cfg.train, &mut on_checkpoint).map_err(|e| train_error(e, &checkpoint))?;
    let seconds = start.elapsed().as_secs_f64();

    save_bundle(&trained, out).map_err(runtime)?;
    history.write_csv(&history_path, args.resume.is_some()).map_err(runtime)?;
    let digest = trained.digest_hex();
    println!(
        "trained {} epochs in {seconds:.1} s; bundle {} (sha256 {digest})",
        history.records.len(),
        out.display()
    );

    manifest.inputs = std::iter::once(args.data.clone()).chain(args.resume.clone()).collect();
    manifest.outputs = vec![out.into(), history_path.clone()];
    manifest.finish(&manifest_path(out, false))?;
    Ok(TrainReport {
        bundle: out.into(),
        history: history_path,
        epochs_completed: trained.epochs_completed,
        history_rows: history.records.len(),
        seconds,
        digest,
    })
}
