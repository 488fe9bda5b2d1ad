use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::history::{EpochRecord, TrainHistory};
use super::step::{critic_step, generator_step};
use super::{LastGood, TrainConfig, TrainError};
use crate::autodiff::Tensor;
use crate::data::Encoder;
use crate::networks::{build_critic, build_generator, CriticConfig, GeneratorConfig, ModelBundle};

/// Freshly initialized networks sized for the encoder's layout.
pub fn init_bundle(encoder: &Encoder, cfg: &TrainConfig) -> Result<ModelBundle, TrainError> {
    cfg.validate()?;
    let gen_cfg = GeneratorConfig { latent_dim: cfg.latent_dim, ..GeneratorConfig::for_schema(&encoder.schema) };
    init_bundle_with(encoder, cfg, gen_cfg, CriticConfig::new(encoder.width()))
}

/// Like [`init_bundle`] with explicit architectures.
pub fn init_bundle_with(
    encoder: &Encoder,
    cfg: &TrainConfig,
    gen_cfg: GeneratorConfig,
    critic_cfg: CriticConfig,
) -> Result<ModelBundle, TrainError> {
    cfg.validate()?;
    if gen_cfg.output_width() != encoder.width() || critic_cfg.input_width != encoder.width() {
        return Err(TrainError::Shape(format!(
            "generator output {} and critic input {} must both equal the encoded width {}",
            gen_cfg.output_width(),
            critic_cfg.input_width,
            encoder.width()
        )));
    }
    if gen_cfg.latent_dim != cfg.latent_dim {
        return Err(TrainError::Config(format!(
            "generator latent dimension {} differs from the training config's {}",
            gen_cfg.latent_dim, cfg.latent_dim
        )));
    }
    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
    let generator = build_generator(&gen_cfg, seeds.random())?;
    let critic = build_critic(&critic_cfg, seeds.random())?;
    Ok(ModelBundle {
        generator,
        critic,
        encoder: encoder.clone(),
        train_config: cfg.clone(),
        seed: cfg.seed,
        epochs_completed: 0,
    })
}

/// The random stream of one epoch depends only on the seed and the epoch
/// index, so a resumed run replays exactly what an uninterrupted one does.
pub fn epoch_rng(seed: u64, epoch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch + 1);
    rng
}

/// Runs one epoch: `n_critic` critic updates on batches drawn with
/// replacement, then one generator update.
pub fn run_epoch(bundle: &mut ModelBundle, real: &Tensor, cfg: &TrainConfig) -> Result<EpochRecord, TrainError> {
    let epoch = bundle.epochs_completed;
    let mut rng = epoch_rng(cfg.seed, epoch);
    let n = real.rows();
    let mut acc = [0.0; 4];
    for _ in 0..cfg.n_critic {
        let idx: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..n)).collect();
        let batch = real.select_rows(&idx);
        let s = critic_step(&mut bundle.critic, &mut bundle.generator, &batch, cfg, &mut rng)?;
        acc[0] += s.loss;
        acc[1] += s.penalty;
        acc[2] += s.score_real;
        acc[3] += s.score_fake;
    }
    let g_loss = generator_step(&bundle.critic, &mut bundle.generator, cfg.batch_size, cfg, &mut rng)?;
    bundle.epochs_completed += 1;
    let k = cfg.n_critic as f64;
    Ok(EpochRecord {
        epoch: bundle.epochs_completed,
        critic_loss: acc[0] / k,
        generator_loss: g_loss,
        gradient_penalty: acc[1] / k,
        score_real: acc[2] / k,
        score_fake: acc[3] / k,
        seconds: 0.0,
    })
}

/// Trains `bundle` until `cfg.epochs` epochs are completed, resuming from
/// `bundle.epochs_completed`. `on_checkpoint` sees the bundle every
/// `checkpoint_interval` epochs. On divergence the error carries the most
/// recent checkpoint (or the starting bundle).
pub fn train(
    mut bundle: ModelBundle,
    real: &Tensor,
    cfg: &TrainConfig,
    on_checkpoint: &mut dyn FnMut(&ModelBundle, &TrainHistory) -> Result<(), String>,
) -> Result<(ModelBundle, TrainHistory), TrainError> {
    cfg.validate()?;
    let width = bundle.encoder.width();
    if real.shape().len() != 2 || real.cols() != width {
        return Err(TrainError::Shape(format!("training matrix {:?} does not have width {width}", real.shape())));
    }
    if real.rows() < cfg.batch_size {
        return Err(TrainError::TooFewRows { rows: real.rows(), batch_size: cfg.batch_size });
    }
    bundle.train_config = cfg.clone();
    bundle.seed = cfg.seed;
    let mut history = TrainHistory::default();
    let mut last_good = bundle.clone();
    let start = Instant::now();
    while bundle.epochs_completed < cfg.epochs {
        let epoch = bundle.epochs_completed + 1;
        let record = run_epoch(&mut bundle, real, cfg).and_then(|mut r| {
            r.seconds = start.elapsed().as_secs_f64();
            if r.is_finite() {
                Ok(r)
            } else {
                Err(TrainError::NonFinite("epoch summary"))
            }
        });
        let record = match record {
            Ok(r) => r,
            Err(TrainError::NonFinite(_)) => {
                return Err(TrainError::Diverged { epoch, last_good: LastGood(Box::new(last_good)) })
            }
            Err(e) => return Err(e),
        };
        if epoch % 100 == 0 {
            log::debug!(
                "epoch {epoch}: critic {:.4} generator {:.4} penalty {:.4}",
                record.critic_loss,
                record.generator_loss,
                record.gradient_penalty
            );
        }
        history.records.push(record);
        if cfg.checkpoint_interval > 0 && epoch % cfg.checkpoint_interval == 0 {
            on_checkpoint(&bundle, &history).map_err(TrainError::Checkpoint)?;
            last_good = bundle.clone();
        }
    }
    Ok((bundle, history))
}
