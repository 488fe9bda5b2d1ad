//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use fcgan_core::autodiff::{activate, affine, batch_norm, concat, dropout, ActivationSpec, Graph, Mode, Sign, Tensor, Var};
use fcgan_core::networks::{build_critic, CriticConfig, CriticNet, ForwardCtx};
use fcgan_core::training::gradient_penalty;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference gradient of `f` at `x`.
pub fn numeric_gradient(x: &Tensor, h: f64, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut grad = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, zero when both vanish.
pub fn relative_error(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Builds `Σ (y ⊙ r)` for the op under test so that every output element
/// contributes with its own random weight.
pub fn weighted_sum(g: &mut Graph, y: Var, r: &Tensor) -> Var {
    let rv = g.constant(r.clone());
    let p = g.mul(y, rv).unwrap();
    g.sum_all(p).unwrap()
}

/// Largest per-component `|a − b| / max(|a|, |b|)`. Components where both
/// magnitudes fall below `floor` are measured against `floor` instead, so
/// that rounding noise on vanishing gradients does not dominate.
pub fn component_error(a: &Tensor, b: &Tensor, floor: f64) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Worst per-component relative error between analytic and central-difference
/// gradients of a scalar built by `build` from leaf tensors `inputs`.
pub fn gradient_check(inputs: &[Tensor], h: f64, floor: f64, build: impl Fn(&mut Graph, &[Var]) -> Var) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = build(&mut g, &vars);
    let analytic = g.gradients(out, &vars).unwrap();
    let eval = |ts: &[Tensor]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.constant(t.clone())).collect();
        let out = build(&mut g, &vars);
        g.value(out).item()
    };
    let mut worst: f64 = 0.0;
    for (k, t) in inputs.iter().enumerate() {
        let numeric = numeric_gradient(t, h, |probe| {
            let mut ts = inputs.to_vec();
            ts[k] = probe.clone();
            eval(&ts)
        });
        worst = worst.max(component_error(&analytic[k], &numeric, floor));
    }
    worst
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_FLOOR: f64 = 1e-3;

pub const LAYER_KINDS: [&str; 8] =
    ["affine", "batch_norm_train", "batch_norm_infer", "leaky_relu", "slr", "softmax", "concat", "dropout"];

fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-2.0..2.0)).collect())
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::vector((0..n).map(|_| rng.random_range(lo..hi)).collect())
}

/// One random configuration of layer `kind`: random shapes, inputs in
/// [−2, 2], every input differentiated. Returns the worst component error.
pub fn layer_gradient_trial(kind: &str, rng: &mut ChaCha8Rng) -> f64 {
    let n = rng.random_range(2..=6);
    let m = rng.random_range(1..=6);
    let x = uniform(rng, n, m);
    let check = |inputs: &[Tensor], build: &dyn Fn(&mut Graph, &[Var]) -> Var| {
        gradient_check(inputs, FD_STEP, FD_FLOOR, build)
    };
    match kind {
        "affine" => {
            let k = rng.random_range(1..=5);
            let (w, b, r) = (uniform(rng, m, k), uniform_vec(rng, k, -2.0, 2.0), uniform(rng, n, k));
            check(&[x, w, b], &|g, v| {
                let y = affine(g, v[0], v[1], v[2]).unwrap();
                weighted_sum(g, y, &r)
            })
        }
        "batch_norm_train" => {
            let (gamma, beta, r) = (uniform_vec(rng, m, 0.5, 2.0), uniform_vec(rng, m, -1.0, 1.0), uniform(rng, n, m));
            check(&[x, gamma, beta], &|g, v| {
                let (y, _) = batch_norm(g, v[0], v[1], v[2], Mode::Train, (&[], &[]), 1e-5).unwrap();
                weighted_sum(g, y, &r)
            })
        }
        "batch_norm_infer" => {
            let (gamma, beta, r) = (uniform_vec(rng, m, 0.5, 2.0), uniform_vec(rng, m, -1.0, 1.0), uniform(rng, n, m));
            let mean: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let var: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..2.0)).collect();
            check(&[x, gamma, beta], &|g, v| {
                let (y, _) = batch_norm(g, v[0], v[1], v[2], Mode::Infer, (&mean, &var), 1e-5).unwrap();
                weighted_sum(g, y, &r)
            })
        }
        "leaky_relu" => {
            let spec = ActivationSpec::LeakyRelu { alpha: rng.random_range(0.01..0.5) };
            let r = uniform(rng, n, m);
            check(&[x], &|g, v| {
                let y = activate(g, &spec, v[0], None).unwrap();
                weighted_sum(g, y, &r)
            })
        }
        "slr" => {
            let sign = if rng.random::<bool>() { Sign::Plus } else { Sign::Minus };
            let p = Tensor::scalar(rng.random_range(0.5..1.5));
            let q = Tensor::scalar(rng.random_range(0.05..0.5));
            let r = uniform(rng, n, m);
            check(&[x, p, q], &|g, v| {
                let y = activate(g, &ActivationSpec::slr(sign), v[0], Some((v[1], v[2]))).unwrap();
                weighted_sum(g, y, &r)
            })
        }
        "softmax" => {
            let r = uniform(rng, n, m);
            check(&[x], &|g, v| {
                let y = activate(g, &ActivationSpec::Softmax, v[0], None).unwrap();
                weighted_sum(g, y, &r)
            })
        }
        "concat" => {
            let m2 = rng.random_range(1..=4);
            let x2 = uniform(rng, n, m2);
            let r = uniform(rng, n, m + m2);
            check(&[x, x2], &|g, v| {
                let y = concat(g, &[v[0], v[1]]).unwrap();
                weighted_sum(g, y, &r)
            })
        }
        "dropout" => {
            let rate = rng.random_range(0.1..0.6);
            let seed = rng.random::<u64>();
            let r = uniform(rng, n, m);
            // the mask is redrawn from the same seed on every evaluation
            check(&[x], &|g, v| {
                let y = dropout(g, v[0], rate, Mode::Train, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                weighted_sum(g, y, &r)
            })
        }
        other => panic!("unknown layer kind {other}"),
    }
}

/// Worst component error over `trials` random configurations of `kind`.
pub fn layer_gradient_worst(kind: &str, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials).map(|_| layer_gradient_trial(kind, &mut rng)).fold(0.0, f64::max)
}

/// Gradient-penalty value of `critic` on `x`, no dropout.
pub fn penalty_of(critic: &CriticNet, x: &Tensor, lambda: f64) -> f64 {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let p = gradient_penalty(&mut g, critic, xv, lambda, &mut ForwardCtx::infer()).unwrap();
    g.value(p).item()
}

/// Worst relative error of d(penalty)/dθ against central differences over
/// every critic parameter, for `trials` small random critics.
pub fn penalty_weight_gradient_worst(trials: u64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let cfg = CriticConfig { input_width: 4, hidden: vec![8, 6], dropout: vec![0.0, 0.0], leak: 0.2 };
        let c = build_critic(&cfg, seed.wrapping_add(trial)).unwrap();
        let x = uniform(&mut rng, 6, 4);
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let p = gradient_penalty(&mut g, &c, xv, 10.0, &mut ForwardCtx::train(&mut rng)).unwrap();
        let grads = g.backward(p).unwrap();
        for (k, param) in c.parameters().iter().enumerate() {
            let numeric = numeric_gradient(&param.value, 1e-6, |probe| {
                let mut c2 = c.clone();
                c2.parameters_mut()[k].value = probe.clone();
                penalty_of(&c2, &x, 10.0)
            });
            worst = worst.max(relative_error(&grads[&param.name], &numeric));
        }
    }
    worst
}

/// A linear critic `x·w + 0.3`.
pub fn linear_critic(w: &[f64]) -> CriticNet {
    let cfg = CriticConfig { input_width: w.len(), hidden: vec![], dropout: vec![], leak: 0.2 };
    let mut c = build_critic(&cfg, 0).unwrap();
    let ps = c.parameters_mut();
    let [weight, bias] = <[_; 2]>::try_from(ps).ok().unwrap();
    weight.value = Tensor::matrix(w.len(), 1, w.to_vec());
    bias.value = Tensor::vector(vec![0.3]);
    c
}

/// Generator layer table written out from the architecture formulas: kind,
/// width and stored parameter count per row. Categorical batch-norm rows use
/// the usual four values per unit.
pub fn generator_table_oracle(latent: usize, d: usize, ks: &[usize]) -> Vec<(&'static str, usize, usize)> {
    let mut rows = Vec::new();
    let mut fan_in = latent;
    for (w, slr) in [(256, "SLR(+1)"), (128, "SLR(-1)"), (64, "SLR(+1)"), (32, "SLR(-1)")] {
        rows.push(("Dense", w, (fan_in + 1) * w));
        rows.push(("BatchNorm", w, 4 * w));
        rows.push((slr, w, 2));
        fan_in = w;
    }
    rows.extend([
        ("Dense", 4 * d, 4 * d * 33),
        ("BatchNorm", 4 * d, 4 * d * 4),
        ("SLR(-1)", 4 * d, 2),
        ("Dense", 2 * d, (4 * d + 1) * 2 * d),
        ("BatchNorm", 2 * d, 2 * d * 4),
        ("SLR(+1)", 2 * d, 2),
        ("Dense", d, (2 * d + 1) * d),
    ]);
    for &k in ks {
        rows.extend([
            ("Dense", 4 * k, 4 * k * 33),
            ("BatchNorm", 4 * k, 4 * k * 4),
            ("LeakyReLU", 4 * k, 0),
            ("Dense", 2 * k, (4 * k + 1) * 2 * k),
            ("BatchNorm", 2 * k, 2 * k * 4),
            ("LeakyReLU", 2 * k, 0),
            ("Dense", k, (2 * k + 1) * k),
            ("BatchNorm", k, k * 4),
            ("Softmax", k, 0),
        ]);
    }
    rows
}

/// Dense rows of the critic table: output width and parameter count.
pub const CRITIC_DENSE_ROWS: [(usize, usize); 11] = [
    (256, 15_360),
    (128, 32_896),
    (128, 16_512),
    (128, 16_512),
    (64, 8_256),
    (64, 4_160),
    (32, 2_080),
    (32, 1_056),
    (16, 528),
    (16, 272),
    (1, 17),
];

pub const CRITIC_TOTAL: usize = 97_649;

/// Empirical CDF difference by brute force over all sample points.
pub fn brute_force_ks(a: &[f64], b: &[f64]) -> f64 {
    let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    a.iter().chain(b).map(|&x| (cdf(a, x) - cdf(b, x)).abs()).fold(0.0, f64::max)
}

/// Kendall τ-b by counting all pairs.
pub fn brute_force_tau_b(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut conc, mut disc, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                tx += 1;
            } else if dy == 0.0 {
                ty += 1;
            } else if (dx > 0.0) == (dy > 0.0) {
                conc += 1;
            } else {
                disc += 1;
            }
        }
    }
    let n1 = (conc + disc + tx) as f64;
    let n2 = (conc + disc + ty) as f64;
    (conc - disc) as f64 / (n1 * n2).sqrt()
}
