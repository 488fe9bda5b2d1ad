mod common;

use fcgan_core::autodiff::{activate, affine, concat, ActivationSpec, AutodiffError, Graph, Mode, Tensor};
use fcgan_core::networks::{build_critic, build_generator, CriticConfig, ForwardCtx, GeneratorConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{component_error, numeric_gradient, FD_FLOOR, FD_STEP, LAYER_KINDS};

#[test]
fn every_layer_type_matches_finite_differences() {
    for (i, kind) in LAYER_KINDS.iter().enumerate() {
        let worst = common::layer_gradient_worst(kind, 100, 1000 + i as u64);
        assert!(worst < 1e-6, "{kind}: {worst}");
    }
}

#[test]
fn composed_critic_parameter_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for trial in 0..5 {
        let cfg = CriticConfig { input_width: 5, hidden: vec![7, 6, 4], dropout: vec![0.0, 0.5, 0.2], leak: 0.2 };
        let c = build_critic(&cfg, trial).unwrap();
        let x = Tensor::matrix(4, 5, (0..20).map(|_| rng.random_range(-2.0..2.0)).collect());
        let mask_seed = rng.random::<u64>();
        let loss = |c: &fcgan_core::networks::CriticNet, g: &mut Graph| {
            let xv = g.constant(x.clone());
            let mut mask_rng = ChaCha8Rng::seed_from_u64(mask_seed);
            let y = c.forward(g, xv, &mut ForwardCtx::train(&mut mask_rng)).unwrap();
            let sq = g.mul(y, y).unwrap();
            g.sum_all(sq).unwrap()
        };
        let mut g = Graph::new();
        let out = loss(&c, &mut g);
        let grads = g.backward(out).unwrap();
        for (k, p) in c.parameters().iter().enumerate() {
            let numeric = numeric_gradient(&p.value, FD_STEP, |probe| {
                let mut c2 = c.clone();
                c2.parameters_mut()[k].value = probe.clone();
                let mut g = Graph::new();
                let out = loss(&c2, &mut g);
                g.value(out).item()
            });
            let err = component_error(&grads[&p.name], &numeric, FD_FLOOR);
            assert!(err < 1e-6, "trial {trial} {}: {err}", p.name);
        }
    }
}

#[test]
fn composed_generator_parameter_gradients() {
    let cfg = GeneratorConfig { latent_dim: 4, trunk_widths: vec![6, 5], ..GeneratorConfig::new(2, vec![3]) };
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for trial in 0..3 {
        let gen = build_generator(&cfg, trial).unwrap();
        let z = Tensor::matrix(5, 4, (0..20).map(|_| rng.random_range(-2.0..2.0)).collect());
        let r = Tensor::matrix(5, 5, (0..25).map(|_| rng.random_range(-2.0..2.0)).collect());
        let loss = |gen: &fcgan_core::networks::GeneratorNet, g: &mut Graph| {
            let zv = g.constant(z.clone());
            let mut unused = ChaCha8Rng::seed_from_u64(0);
            let y = gen.forward(g, zv, &mut ForwardCtx::train(&mut unused)).unwrap();
            common::weighted_sum(g, y, &r)
        };
        let mut g = Graph::new();
        let out = loss(&gen, &mut g);
        let grads = g.backward(out).unwrap();
        for (k, p) in gen.parameters().iter().enumerate() {
            let numeric = numeric_gradient(&p.value, FD_STEP, |probe| {
                let mut g2 = gen.clone();
                g2.parameters_mut()[k].value = probe.clone();
                let mut g = Graph::new();
                let out = loss(&g2, &mut g);
                g.value(out).item()
            });
            let err = component_error(&grads[&p.name], &numeric, FD_FLOOR);
            assert!(err < 1e-6, "trial {trial} {}: {err}", p.name);
        }
    }
}

#[test]
fn second_order_through_the_critic_layer_set() {
    // d/dx of Σ leaky(xW + b) is a graph node; differentiating its squared
    // norm again must agree with finite differences of the first gradient
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let x = Tensor::matrix(3, 4, (0..12).map(|_| rng.random_range(-2.0..2.0)).collect());
    let w = Tensor::matrix(4, 3, (0..12).map(|_| rng.random_range(-2.0..2.0)).collect());
    let b = Tensor::vector(vec![0.1, -0.2, 0.3]);
    let worst = common::gradient_check(&[w], FD_STEP, FD_FLOOR, |g, v| {
        let xv = g.constant(x.clone());
        let bv = g.constant(b.clone());
        let h = affine(g, xv, v[0], bv).unwrap();
        let a = activate(g, &ActivationSpec::LeakyRelu { alpha: 0.2 }, h, None).unwrap();
        let both = concat(g, &[a, h]).unwrap();
        let dx = g.input_gradient_node(both, xv).unwrap();
        let sq = g.mul(dx, dx).unwrap();
        g.sum_all(sq).unwrap()
    });
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn batch_norm_has_no_second_order_path() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::matrix(2, 1, vec![0.0, 2.0]));
    let gamma = g.constant(Tensor::vector(vec![1.0]));
    let beta = g.constant(Tensor::vector(vec![0.0]));
    let (y, _) = fcgan_core::autodiff::batch_norm(&mut g, x, gamma, beta, Mode::Train, (&[], &[]), 1e-5).unwrap();
    assert!(matches!(g.input_gradient_node(y, x), Err(AutodiffError::UnsupportedSecondOrder(_))));
}
