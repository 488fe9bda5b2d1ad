use rand::{Rng, RngCore};

use super::{TrainConfig, TrainError};
use crate::autodiff::{adam_step, Graph, Tensor, Var};
use crate::networks::{sample_latent, CriticNet, ForwardCtx, GeneratorNet};

/// Components of one critic update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticStats {
    /// `mean C(fake) − mean C(real) + penalty`.
    pub loss: f64,
    pub penalty: f64,
    pub score_real: f64,
    pub score_fake: f64,
}

/// `ε·real + (1−ε)·fake` with one ε per row.
pub fn interpolate(real: &Tensor, fake: &Tensor, eps: &[f64]) -> Tensor {
    assert_eq!(real.shape(), fake.shape());
    let w = real.cols();
    let mut out = real.clone();
    for (i, row) in out.data_mut().chunks_mut(w.max(1)).enumerate() {
        let e = eps[i];
        for (v, f) in row.iter_mut().zip(fake.row(i)) {
            *v = e * *v + (1.0 - e) * f;
        }
    }
    out
}

/// Records `λ·mean((‖∇ₓC(x)‖₂ − 1)²)` over the rows of `x`.
pub fn gradient_penalty(
    g: &mut Graph,
    critic: &CriticNet,
    x: Var,
    lambda: f64,
    ctx: &mut ForwardCtx<'_>,
) -> Result<Var, TrainError> {
    let scores = critic.forward(g, x, ctx)?;
    let grad = g.input_gradient_node(scores, x)?;
    let sq = g.mul(grad, grad)?;
    let norm_sq = g.sum_cols(sq)?;
    let norm = g.sqrt(norm_sq)?;
    let dev = g.add_scalar(norm, -1.0)?;
    let dev_sq = g.mul(dev, dev)?;
    let mean = g.mean_all(dev_sq)?;
    Ok(g.scale(mean, lambda)?)
}

/// Records the full critic objective on `g`.
pub fn critic_objective(
    g: &mut Graph,
    critic: &CriticNet,
    real: &Tensor,
    fake: &Tensor,
    eps: &[f64],
    lambda: f64,
    ctx: &mut ForwardCtx<'_>,
) -> Result<(Var, CriticStats), TrainError> {
    if real.shape() != fake.shape() || eps.len() != real.rows() {
        return Err(TrainError::Shape(format!(
            "real batch {:?}, fake batch {:?} and {} interpolation weights disagree",
            real.shape(),
            fake.shape(),
            eps.len()
        )));
    }
    let n = real.rows();
    let x_hat = g.constant(interpolate(real, fake, eps));
    // real and fake rows share one pass; a ±1/n column turns the scores
    // into mean C(fake) − mean C(real)
    let mut both = real.data().to_vec();
    both.extend_from_slice(fake.data());
    let xb = g.constant(Tensor::matrix(2 * n, real.cols(), both));
    let sb = critic.forward(g, xb, ctx)?;
    let signs: Vec<f64> = (0..2 * n).map(|i| (if i < n { -1.0 } else { 1.0 }) / n as f64).collect();
    let sv = g.constant(Tensor::matrix(2 * n, 1, signs));
    let weighted = g.mul(sb, sv)?;
    let wasserstein = g.sum_all(weighted)?;
    let scores = g.value(sb).data();
    let score_real = scores[..n].iter().sum::<f64>() / n as f64;
    let score_fake = scores[n..].iter().sum::<f64>() / n as f64;
    let penalty = gradient_penalty(g, critic, x_hat, lambda, ctx)?;
    let loss = g.add(wasserstein, penalty)?;
    let stats = CriticStats { loss: g.value(loss).item(), penalty: g.value(penalty).item(), score_real, score_fake };
    Ok((loss, stats))
}

fn finite(what: &'static str, v: f64) -> Result<f64, TrainError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(TrainError::NonFinite(what))
    }
}

/// Draws generator output in training mode without recording gradients,
/// folding the batch statistics into the generator's running estimates.
fn sample_fake(gen: &mut GeneratorNet, n: usize, rng: &mut dyn RngCore) -> Result<Tensor, TrainError> {
    let z = sample_latent(n, gen.config.latent_dim, rng);
    let mut g = Graph::new();
    let zv = g.constant(z);
    let mut ctx = ForwardCtx::train(rng).frozen(true);
    let y = gen.forward(&mut g, zv, &mut ctx)?;
    let stats = std::mem::take(&mut ctx.batch_stats);
    gen.apply_batch_stats(&stats);
    Ok(g.value(y).clone())
}

/// One Adam update of the critic on `real_batch` against fresh generator
/// output. Generator parameters are not touched.
pub fn critic_step(
    critic: &mut CriticNet,
    gen: &mut GeneratorNet,
    real_batch: &Tensor,
    cfg: &TrainConfig,
    rng: &mut dyn RngCore,
) -> Result<CriticStats, TrainError> {
    let n = real_batch.rows();
    let fake = sample_fake(gen, n, rng)?;
    let eps: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let mut g = Graph::new();
    let mut ctx = ForwardCtx::train(rng);
    let (loss, stats) = critic_objective(&mut g, critic, real_batch, &fake, &eps, cfg.gp_weight, &mut ctx)?;
    finite("critic loss", stats.loss)?;
    let grads = g.backward(loss)?;
    if grads.values().any(|t| !t.all_finite()) {
        return Err(TrainError::NonFinite("critic gradient"));
    }
    adam_step(&mut critic.parameters_mut(), &grads, &cfg.adam())?;
    Ok(stats)
}

/// One Adam update of the generator on `−mean C(G(z))`; the critic enters
/// as constants and is left bitwise unchanged.
pub fn generator_step(
    critic: &CriticNet,
    gen: &mut GeneratorNet,
    batch_size: usize,
    cfg: &TrainConfig,
    rng: &mut dyn RngCore,
) -> Result<f64, TrainError> {
    let z = sample_latent(batch_size, gen.config.latent_dim, rng);
    let mut g = Graph::new();
    let zv = g.constant(z);
    let mut gctx = ForwardCtx::train(rng);
    let fake = gen.forward(&mut g, zv, &mut gctx)?;
    let stats = std::mem::take(&mut gctx.batch_stats);
    drop(gctx);
    let mut cctx = ForwardCtx::train(rng).frozen(true);
    let scores = critic.forward(&mut g, fake, &mut cctx)?;
    let mean = g.mean_all(scores)?;
    let loss = g.scale(mean, -1.0)?;
    let value = finite("generator loss", g.value(loss).item())?;
    let grads = g.backward(loss)?;
    if grads.values().any(|t| !t.all_finite()) {
        return Err(TrainError::NonFinite("generator gradient"));
    }
    adam_step(&mut gen.parameters_mut(), &grads, &cfg.adam())?;
    gen.apply_batch_stats(&stats);
    Ok(value)
}
