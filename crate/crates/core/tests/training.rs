mod common;

use fcgan_core::autodiff::{Graph, Tensor};
use fcgan_core::data::{ColumnSpec, Dataset, Encoder, TableSchema};
use fcgan_core::networks::{
    build_critic, build_generator, critic_score, generate, CriticConfig, CriticNet, ForwardCtx, GeneratorConfig,
};
use fcgan_core::training::{
    critic_objective, critic_step, generator_step, init_bundle_with, train, TrainConfig,
    TrainError,
};
use fcgan_core::metrics::ks_score;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use common::{linear_critic, numeric_gradient, penalty_of};

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Tensor {
    Tensor::matrix(n, m, (0..n * m).map(|_| rng.random_range(-1.5..1.5)).collect())
}

#[test]
fn unit_norm_linear_critic_has_zero_penalty() {
    let c = linear_critic(&[0.6, 0.0, -0.8]);
    let x = random_matrix(&mut ChaCha8Rng::seed_from_u64(1), 7, 3);
    assert!(penalty_of(&c, &x, 10.0).abs() < 1e-12);
}

#[test]
fn slope_two_critic_penalty_is_lambda() {
    let c = linear_critic(&[2.0]);
    let x = random_matrix(&mut ChaCha8Rng::seed_from_u64(1), 5, 1);
    assert_eq!(penalty_of(&c, &x, 10.0), 10.0);
}

#[test]
fn identical_batches_have_zero_wasserstein_term() {
    let c = linear_critic(&[0.6, 0.8]);
    let x = random_matrix(&mut ChaCha8Rng::seed_from_u64(2), 6, 2);
    let mut g = Graph::new();
    let eps = vec![0.5; 6];
    let (_, s) = critic_objective(&mut g, &c, &x, &x, &eps, 10.0, &mut ForwardCtx::infer()).unwrap();
    assert_eq!(s.score_fake - s.score_real, 0.0);
}

fn small_critic(seed: u64) -> CriticNet {
    let cfg = CriticConfig { input_width: 4, hidden: vec![8, 6], dropout: vec![0.0, 0.0], leak: 0.2 };
    build_critic(&cfg, seed).unwrap()
}

#[test]
fn penalty_matches_finite_difference_input_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..10 {
        let c = small_critic(trial);
        let x = random_matrix(&mut rng, 9, 4);
        let lambda = 10.0;
        // independent: ∇ₓC per row by central differences of the scores
        let mut total = 0.0;
        for i in 0..x.rows() {
            let row = Tensor::matrix(1, 4, x.row(i).to_vec());
            let grad = numeric_gradient(&row, 1e-6, |p| critic_score(&c, p).unwrap()[0]);
            let norm = grad.data().iter().map(|v| v * v).sum::<f64>().sqrt();
            total += (norm - 1.0).powi(2);
        }
        let expected = lambda * total / x.rows() as f64;
        let got = penalty_of(&c, &x, lambda);
        assert!(((got - expected) / expected).abs() < 1e-4, "trial {trial}: {got} vs {expected}");
    }
}

#[test]
fn penalty_weight_gradients_match_finite_differences() {
    let worst = common::penalty_weight_gradient_worst(5, 100);
    assert!(worst < 1e-5, "{worst}");
}

fn toy_setup(rows: usize, seed: u64) -> (Encoder, Tensor) {
    let schema = TableSchema::new(vec![
        ColumnSpec::continuous("a", "", -100.0, 100.0),
        ColumnSpec::continuous("b", "", -100.0, 100.0),
        ColumnSpec::categorical("c", &["x", "y"]),
    ])
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cont = Vec::new();
    let mut cat = Vec::new();
    for _ in 0..rows {
        let k = rng.random_range(0..2u32);
        let centre = if k == 0 { -2.0 } else { 2.0 };
        cont.push(centre + rng.random_range(-0.5..0.5));
        cont.push(-centre + rng.random_range(-0.5..0.5));
        cat.push(k);
    }
    let ds = Dataset::new(schema, cont, cat, rows).unwrap();
    let enc = Encoder::fit(&ds).unwrap();
    let m = enc.encode(&ds).unwrap();
    (enc, m)
}

fn toy_cfg(epochs: u64, seed: u64) -> TrainConfig {
    TrainConfig { epochs, batch_size: 32, n_critic: 3, latent_dim: 8, seed, checkpoint_interval: 0, ..Default::default() }
}

fn toy_bundle(enc: &Encoder, cfg: &TrainConfig) -> fcgan_core::networks::ModelBundle {
    let gen_cfg = GeneratorConfig { latent_dim: cfg.latent_dim, trunk_widths: vec![16, 8], ..GeneratorConfig::new(2, vec![2]) };
    let crit_cfg = CriticConfig { input_width: 4, hidden: vec![16, 8], dropout: vec![0.0, 0.2], leak: 0.2 };
    init_bundle_with(enc, cfg, gen_cfg, crit_cfg).unwrap()
}

#[test]
fn steps_touch_only_their_own_parameters() {
    let (enc, real) = toy_setup(64, 0);
    let cfg = toy_cfg(1, 0);
    let mut b = toy_bundle(&enc, &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gen_before: Vec<_> = b.generator.parameters().into_iter().cloned().collect();
    let crit_before: Vec<_> = b.critic.parameters().into_iter().cloned().collect();
    let batch = real.slice_rows(0, 32);
    critic_step(&mut b.critic, &mut b.generator, &batch, &cfg, &mut rng).unwrap();
    let gen_mid: Vec<_> = b.generator.parameters().into_iter().cloned().collect();
    assert_eq!(gen_before, gen_mid);
    let crit_mid: Vec<_> = b.critic.parameters().into_iter().cloned().collect();
    assert_ne!(crit_before, crit_mid);
    generator_step(&b.critic, &mut b.generator, 32, &cfg, &mut rng).unwrap();
    let crit_after: Vec<_> = b.critic.parameters().into_iter().cloned().collect();
    assert_eq!(crit_mid, crit_after);
    let gen_after: Vec<_> = b.generator.parameters().into_iter().cloned().collect();
    assert_ne!(gen_mid, gen_after);
}

#[test]
fn constant_critic_gives_zero_generator_gradient() {
    let (enc, _) = toy_setup(64, 0);
    let cfg = toy_cfg(1, 0);
    let mut b = toy_bundle(&enc, &cfg);
    for p in b.critic.parameters_mut() {
        p.value = Tensor::zeros(p.value.shape());
    }
    b.critic.parameters_mut().pop().unwrap().value = Tensor::vector(vec![1.5]);
    let before: Vec<_> = b.generator.parameters().into_iter().cloned().map(|p| p.value).collect();
    let loss = generator_step(&b.critic, &mut b.generator, 32, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(loss, -1.5);
    let after: Vec<_> = b.generator.parameters().into_iter().cloned().map(|p| p.value).collect();
    assert_eq!(before, after);
}

#[test]
fn generator_moves_toward_higher_critic_scores() {
    // 1-D target; the critic rewards larger outputs, so one step must raise the mean
    let schema = TableSchema::new(vec![ColumnSpec::continuous("x", "", -1e3, 1e3)]).unwrap();
    let ds = Dataset::new(schema, (0..64).map(|i| i as f64).collect(), vec![], 64).unwrap();
    let enc = Encoder::fit(&ds).unwrap();
    let cfg = TrainConfig { learning_rate: 1e-2, ..toy_cfg(1, 0) };
    let gen_cfg = GeneratorConfig { latent_dim: 8, trunk_widths: vec![16, 8], ..GeneratorConfig::new(1, vec![]) };
    let crit_cfg = CriticConfig { input_width: 1, hidden: vec![], dropout: vec![], leak: 0.2 };
    let mut b = init_bundle_with(&enc, &cfg, gen_cfg, crit_cfg).unwrap();
    b.critic.parameters_mut()[0].value = Tensor::matrix(1, 1, vec![1.0]);
    let mean_out = |b: &fcgan_core::networks::ModelBundle| {
        let mut g = Graph::new();
        let z = g.constant(fcgan_core::networks::sample_latent(256, 8, &mut ChaCha8Rng::seed_from_u64(9)));
        let y = b.generator.forward(&mut g, z, &mut ForwardCtx::train(&mut ChaCha8Rng::seed_from_u64(1)).frozen(true)).unwrap();
        g.value(y).sum() / 256.0
    };
    let before = mean_out(&b);
    generator_step(&b.critic, &mut b.generator, 256, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert!(mean_out(&b) > before);
}

#[test]
fn training_is_deterministic_and_resumable() {
    let (enc, real) = toy_setup(200, 1);
    let cfg = toy_cfg(6, 42);
    let run = |cfg: &TrainConfig| train(toy_bundle(&enc, cfg), &real, cfg, &mut |_, _| Ok(())).unwrap();
    let (a, ha) = run(&cfg);
    let (b, _) = run(&cfg);
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_eq!(ha.records.len(), 6);
    assert!(ha.records.iter().all(|r| r.is_finite()));

    let half = TrainConfig { epochs: 3, ..cfg.clone() };
    let (mid, _) = run(&half);
    let (resumed, hr) = train(mid, &real, &cfg, &mut |_, _| Ok(())).unwrap();
    assert_eq!(hr.records.len(), 3);
    assert_eq!(resumed.to_bytes(), a.to_bytes());

    let (c, _) = run(&TrainConfig { seed: 43, ..cfg });
    assert_ne!(c.to_bytes(), a.to_bytes());
}

#[test]
fn zero_epochs_returns_the_initial_bundle() {
    let (enc, real) = toy_setup(64, 1);
    let cfg = toy_cfg(0, 1);
    let init = toy_bundle(&enc, &cfg);
    let (b, h) = train(init.clone(), &real, &cfg, &mut |_, _| Ok(())).unwrap();
    assert_eq!(b, init);
    assert!(h.records.is_empty());
}

#[test]
fn checkpoints_fire_on_schedule() {
    let (enc, real) = toy_setup(64, 1);
    let cfg = TrainConfig { checkpoint_interval: 2, ..toy_cfg(5, 1) };
    let mut seen = Vec::new();
    train(toy_bundle(&enc, &cfg), &real, &cfg, &mut |b, h| {
        seen.push((b.epochs_completed, h.records.len()));
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![(2, 2), (4, 4)]);
}

#[test]
fn divergence_reports_epoch_and_last_checkpoint() {
    let (enc, real) = toy_setup(64, 1);
    let cfg = TrainConfig { learning_rate: f64::MAX, checkpoint_interval: 1, ..toy_cfg(5, 1) };
    // an absurd step size blows the weights up within a few epochs
    let err = train(toy_bundle(&enc, &cfg), &real, &cfg, &mut |_, _| Ok(())).unwrap_err();
    match err {
        TrainError::Diverged { epoch, last_good } => {
            assert!(epoch >= 1);
            assert_eq!(last_good.0.epochs_completed, epoch - 1);
        }
        other => panic!("expected divergence, got {other}"),
    }
}

#[test]
fn too_few_rows_is_an_error() {
    let (enc, real) = toy_setup(10, 1);
    let cfg = toy_cfg(1, 1);
    assert!(matches!(
        train(toy_bundle(&enc, &cfg), &real, &cfg, &mut |_, _| Ok(())),
        Err(TrainError::TooFewRows { .. })
    ));
}

#[test]
fn trained_toy_critic_prefers_real_rows() {
    let (enc, real) = toy_setup(400, 2);
    let cfg = toy_cfg(60, 2);
    let (b, _) = train(toy_bundle(&enc, &cfg), &real, &cfg, &mut |_, _| Ok(())).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise = Tensor::matrix(400, 4, (0..1600).map(|_| rng.random_range(-6.0..6.0)).collect());
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let sr = mean(critic_score(&b.critic, &real).unwrap());
    let sn = mean(critic_score(&b.critic, &noise).unwrap());
    assert!(sr > sn, "{sr} <= {sn}");
    let _ = generate(&b.generator, 10, 0).unwrap();
    let _ = build_generator(&b.generator.config, 0).unwrap();
}

#[test]
fn gaussian_mixture_toy_reaches_ks_085() {
    let schema = TableSchema::new(vec![
        ColumnSpec::continuous("x", "", -100.0, 100.0),
        ColumnSpec::continuous("y", "", -100.0, 100.0),
    ])
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let centres = [(-2.0, -1.0), (1.5, 2.0), (2.5, -2.0)];
    let rows = 3000;
    let mut cont = Vec::with_capacity(2 * rows);
    for _ in 0..rows {
        let (cx, cy) = centres[rng.random_range(0..centres.len())];
        let zx: f64 = rng.sample(StandardNormal);
        let zy: f64 = rng.sample(StandardNormal);
        cont.push(cx + 0.5 * zx);
        cont.push(cy + 0.5 * zy);
    }
    let ds = Dataset::new(schema, cont, vec![], rows).unwrap();
    let enc = Encoder::fit(&ds).unwrap();
    let real = enc.encode(&ds).unwrap();
    let cfg = TrainConfig {
        epochs: 2000,
        batch_size: 128,
        learning_rate: 5e-4,
        n_critic: 10,
        latent_dim: 16,
        seed: 2,
        checkpoint_interval: 0,
        ..Default::default()
    };
    let gen_cfg = GeneratorConfig { latent_dim: 16, trunk_widths: vec![64, 32], ..GeneratorConfig::new(2, vec![]) };
    let crit_cfg = CriticConfig { input_width: 2, hidden: vec![64, 32, 16], dropout: vec![0.0; 3], leak: 0.2 };
    let bundle = init_bundle_with(&enc, &cfg, gen_cfg, crit_cfg).unwrap();
    let (b, _) = train(bundle, &real, &cfg, &mut |_, _| Ok(())).unwrap();
    let fake = enc.decode(&generate(&b.generator, rows, 5).unwrap()).unwrap();
    let ks = ks_score(&ds, &fake).unwrap();
    assert!(ks.score >= 0.85, "{ks:?}");
}
