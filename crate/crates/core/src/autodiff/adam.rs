use serde::{Deserialize, Serialize};

use super::graph::GradMap;
use super::{AutodiffError, Tensor};

/// A trainable tensor together with its Adam state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub first_moment: Tensor,
    pub second_moment: Tensor,
    pub step: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let shape = value.shape().to_vec();
        Self {
            name: name.into(),
            value,
            first_moment: Tensor::zeros(&shape),
            second_moment: Tensor::zeros(&shape),
            step: 0,
        }
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.0, beta2: 0.9, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update. A parameter without an entry in `grads`
/// is updated with a zero gradient.
pub fn adam_step(params: &mut [&mut Parameter], grads: &GradMap, cfg: &AdamConfig) -> Result<(), AutodiffError> {
    for p in params.iter() {
        if let Some(g) = grads.get(&p.name) {
            if g.len() != p.value.len() {
                return Err(AutodiffError::Shape(format!(
                    "gradient {:?} for parameter {} of shape {:?}",
                    g.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
        }
    }
    for p in params.iter_mut() {
        p.step += 1;
        let t = p.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let grad = grads.get(&p.name).map(|g| g.data());
        let Parameter { value, first_moment, second_moment, .. } = &mut **p;
        let (w, m, v) = (value.data_mut(), first_moment.data_mut(), second_moment.data_mut());
        for i in 0..w.len() {
            let gi = grad.map_or(0.0, |g| g[i]);
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            w[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
