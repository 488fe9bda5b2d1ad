//! Layer-level operations built on the primitive graph ops.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, MaskKind, Var};
use super::AutodiffError;

/// Whether a forward pass is training (batch statistics, live dropout) or
/// inference (running statistics, dropout disabled).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Side of the signed leaky activation that keeps slope `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ActivationSpec {
    /// `max(x, 0) + alpha·min(x, 0)`.
    LeakyRelu { alpha: f64 },
    /// `p·x` where `sign·x ≥ 0`, `q·x` elsewhere; `p` and `q` are learnable
    /// and the values here are their initial values.
    Slr { sign: Sign, p: f64, q: f64 },
    Softmax,
}

impl ActivationSpec {
    pub fn slr(sign: Sign) -> Self {
        ActivationSpec::Slr { sign, p: 1.0, q: 0.25 }
    }

    pub fn learnable_count(&self) -> usize {
        match self {
            ActivationSpec::Slr { .. } => 2,
            _ => 0,
        }
    }
}

/// `y = x·W + b` for `x[n×in]`, `W[in×out]`, `b[out]`.
pub fn affine(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var, AutodiffError> {
    let (xs, ws, bs) = (g.value(x).shape().to_vec(), g.value(w).shape().to_vec(), g.value(b).shape().to_vec());
    if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] || bs != [ws[1]] {
        return Err(AutodiffError::Shape(format!(
            "affine: input {xs:?} does not conform to weight {ws:?} and bias {bs:?}"
        )));
    }
    let h = g.matmul(x, w, false, false)?;
    g.add_row(h, b)
}

/// Batch norm; in training mode also returns the batch (mean, variance).
pub fn batch_norm(
    g: &mut Graph,
    x: Var,
    gamma: Var,
    beta: Var,
    mode: Mode,
    running: (&[f64], &[f64]),
    eps: f64,
) -> Result<(Var, Option<(Vec<f64>, Vec<f64>)>), AutodiffError> {
    match mode {
        Mode::Train => {
            let (y, mean, var) = g.batch_norm_train(x, gamma, beta, eps)?;
            Ok((y, Some((mean, var))))
        }
        Mode::Infer => Ok((g.batch_norm_infer(x, gamma, beta, running.0, running.1, eps)?, None)),
    }
}

/// Applies an activation. `slopes` supplies the learnable `(p, q)` nodes of
/// an SLR; without them the initial values in `spec` are used as constants.
pub fn activate(
    g: &mut Graph,
    spec: &ActivationSpec,
    x: Var,
    slopes: Option<(Var, Var)>,
) -> Result<Var, AutodiffError> {
    match *spec {
        ActivationSpec::LeakyRelu { alpha } => {
            let mask: Arc<[f64]> =
                g.value(x).data().iter().map(|&v| if v >= 0.0 { 1.0 } else { alpha }).collect();
            g.mask_mul(x, mask, MaskKind::LeakyRelu)
        }
        ActivationSpec::Slr { sign, p, q } => {
            let (pv, qv) = match slopes {
                Some(s) => s,
                None => (
                    g.constant(super::Tensor::scalar(p)),
                    g.constant(super::Tensor::scalar(q)),
                ),
            };
            g.slr(x, pv, qv, sign.value())
        }
        ActivationSpec::Softmax => g.softmax(x),
    }
}

pub fn concat(g: &mut Graph, xs: &[Var]) -> Result<Var, AutodiffError> {
    if xs.len() == 1 {
        return Ok(xs[0]);
    }
    g.concat(xs)
}

/// Inverted dropout: survivors are scaled by `1/(1−rate)`.
pub fn dropout<R: Rng + ?Sized>(
    g: &mut Graph,
    x: Var,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<Var, AutodiffError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(AutodiffError::DropoutRate(rate));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Arc<[f64]> =
        (0..g.value(x).len()).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
    g.mask_mul(x, mask, MaskKind::Dropout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn affine_hand_example() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]));
        let w = g.constant(Tensor::matrix(2, 1, vec![1.0, 1.0]));
        let b = g.constant(Tensor::vector(vec![3.0]));
        let y = affine(&mut g, x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[6.0]);
    }

    #[test]
    fn affine_identity_weight() {
        let mut g = Graph::new();
        let xv = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.5, 0.0, 4.0, -1.0]);
        let x = g.constant(xv.clone());
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let w = g.constant(Tensor::matrix(3, 3, eye));
        let b = g.constant(Tensor::zeros(&[3]));
        let y = affine(&mut g, x, w, b).unwrap();
        assert_eq!(g.value(y), &xv);
    }

    #[test]
    fn affine_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[4, 3]));
        let w = g.constant(Tensor::zeros(&[2, 5]));
        let b = g.constant(Tensor::zeros(&[5]));
        let msg = affine(&mut g, x, w, b).unwrap_err().to_string();
        assert!(msg.contains("[4, 3]") && msg.contains("[2, 5]"), "{msg}");
    }

    #[test]
    fn batch_norm_two_point_batch() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(2, 1, vec![0.0, 2.0]));
        let gam = g.constant(Tensor::vector(vec![1.0]));
        let bet = g.constant(Tensor::vector(vec![0.0]));
        let (y, stats) = batch_norm(&mut g, x, gam, bet, Mode::Train, (&[], &[]), 1e-5).unwrap();
        // mean 1, variance 1 → (x − 1)/sqrt(1 + 1e-5)
        let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
        let yv = g.value(y).data();
        assert!((yv[0] + expect).abs() < 1e-15 && (yv[1] - expect).abs() < 1e-15);
        assert!((yv[1] - 1.0).abs() < 1e-5);
        let (mean, var) = stats.unwrap();
        assert_eq!((mean[0], var[0]), (1.0, 1.0));
    }

    #[test]
    fn batch_norm_standardized_batch_is_identity() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(4, 1, vec![-1.0, 1.0, -1.0, 1.0]));
        let gam = g.constant(Tensor::vector(vec![1.0]));
        let bet = g.constant(Tensor::vector(vec![0.0]));
        let (y, _) = batch_norm(&mut g, x, gam, bet, Mode::Train, (&[], &[]), 0.0).unwrap();
        for (a, b) in g.value(y).data().iter().zip([-1.0, 1.0, -1.0, 1.0]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn batch_norm_needs_two_rows_in_training() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(1, 1, vec![0.0]));
        let gam = g.constant(Tensor::vector(vec![1.0]));
        let bet = g.constant(Tensor::vector(vec![0.0]));
        let err = batch_norm(&mut g, x, gam, bet, Mode::Train, (&[], &[]), 1e-5).unwrap_err();
        assert!(matches!(err, AutodiffError::DegenerateBatch(1)));
        assert!(batch_norm(&mut g, x, gam, bet, Mode::Infer, (&[0.0], &[1.0]), 1e-5).is_ok());
    }

    #[test]
    fn activation_examples() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(1, 1, vec![-1.0]));
        let y = activate(&mut g, &ActivationSpec::LeakyRelu { alpha: 0.2 }, x, None).unwrap();
        assert_eq!(g.value(y).data(), &[-0.2]);

        let x = g.constant(Tensor::matrix(1, 2, vec![-4.0, 4.0]));
        let spec = ActivationSpec::Slr { sign: Sign::Plus, p: 1.0, q: 0.25 };
        let y = activate(&mut g, &spec, x, None).unwrap();
        assert_eq!(g.value(y).data(), &[-1.0, 4.0]);

        let spec = ActivationSpec::Slr { sign: Sign::Minus, p: 1.0, q: 0.25 };
        let y = activate(&mut g, &spec, x, None).unwrap();
        assert_eq!(g.value(y).data(), &[-4.0, 1.0]);

        let x = g.constant(Tensor::matrix(1, 2, vec![0.0, 0.0]));
        let y = activate(&mut g, &ActivationSpec::Softmax, x, None).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn concat_examples() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(1, 1, vec![1.0]));
        let b = g.constant(Tensor::matrix(1, 1, vec![2.0]));
        let c = concat(&mut g, &[a, b]).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 2.0]);
        assert_eq!(concat(&mut g, &[a]).unwrap(), a);

        let x = g.constant(Tensor::zeros(&[3, 52]));
        let y = g.constant(Tensor::zeros(&[3, 5]));
        let z = g.constant(Tensor::zeros(&[3, 2]));
        let c = concat(&mut g, &[x, y, z]).unwrap();
        assert_eq!(g.value(c).shape(), &[3, 59]);

        let bad = g.constant(Tensor::zeros(&[2, 2]));
        assert!(concat(&mut g, &[x, bad]).is_err());
    }

    #[test]
    fn dropout_modes_and_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[1000, 1000], 1.0));
        assert_eq!(dropout(&mut g, x, 0.0, Mode::Train, &mut rng).unwrap(), x);
        assert_eq!(dropout(&mut g, x, 0.5, Mode::Infer, &mut rng).unwrap(), x);
        assert!(matches!(dropout(&mut g, x, 1.0, Mode::Train, &mut rng), Err(AutodiffError::DropoutRate(_))));
        assert!(dropout(&mut g, x, -0.1, Mode::Train, &mut rng).is_err());

        let y = dropout(&mut g, x, 0.5, Mode::Train, &mut rng).unwrap();
        let mean = g.value(y).sum() / 1e6;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");

        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        let a = dropout(&mut g, x, 0.2, Mode::Train, &mut r1).unwrap();
        let b = dropout(&mut g, x, 0.2, Mode::Train, &mut r2).unwrap();
        assert_eq!(g.value(a), g.value(b));
    }
}
