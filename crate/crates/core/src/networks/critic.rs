use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Dense, ForwardCtx, Layer, LayerRow, Sequential};
use super::NetworkError;
use crate::autodiff::{Graph, Parameter, Tensor, Var};

const SCORING_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticConfig {
    pub input_width: usize,
    pub hidden: Vec<usize>,
    /// Dropout rate after each hidden layer's activation.
    pub dropout: Vec<f64>,
    pub leak: f64,
}

impl CriticConfig {
    pub fn new(input_width: usize) -> Self {
        Self {
            input_width,
            hidden: vec![256, 128, 128, 128, 64, 64, 32, 32, 16, 16],
            dropout: vec![0.0, 0.0, 0.0, 0.5, 0.5, 0.2, 0.2, 0.0, 0.0, 0.0],
            leak: 0.2,
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.input_width == 0 {
            return Err(NetworkError::Config("critic input width must be at least 1".into()));
        }
        if self.dropout.len() != self.hidden.len() {
            return Err(NetworkError::Config(format!(
                "{} dropout rates for {} hidden layers",
                self.dropout.len(),
                self.hidden.len()
            )));
        }
        if let Some(r) = self.dropout.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(NetworkError::Config(format!("dropout rate {r} outside [0, 1)")));
        }
        if self.hidden.contains(&0) {
            return Err(NetworkError::Config("zero-width hidden layer".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticNet {
    pub config: CriticConfig,
    pub layers: Sequential,
}

pub fn build_critic(cfg: &CriticConfig, seed: u64) -> Result<CriticNet, NetworkError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seq = Sequential::new("critic");
    let mut width = cfg.input_width;
    for (&w, &rate) in cfg.hidden.iter().zip(&cfg.dropout) {
        seq.push(Layer::Dense(Dense::new(&seq.next_name(), width, w, &mut rng)));
        seq.push(Layer::LeakyRelu { alpha: cfg.leak });
        if rate > 0.0 {
            seq.push(Layer::Dropout { rate });
        }
        width = w;
    }
    seq.push(Layer::Dense(Dense::new(&seq.next_name(), width, 1, &mut rng)));
    Ok(CriticNet { config: cfg.clone(), layers: seq })
}

impl CriticNet {
    /// Scores `[n×D] → [n×1]`.
    pub fn forward(&self, g: &mut Graph, x: Var, ctx: &mut ForwardCtx<'_>) -> Result<Var, NetworkError> {
        let shape = g.value(x).shape();
        if shape.len() != 2 || shape[1] != self.config.input_width {
            return Err(NetworkError::Shape(format!(
                "critic expects rows of width {}, got {shape:?}",
                self.config.input_width
            )));
        }
        self.layers.forward(g, x, ctx)
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        self.layers.parameters()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.layers.parameters_mut()
    }

    pub fn param_count(&self) -> usize {
        self.layers.param_count()
    }

    pub fn table(&self) -> Vec<LayerRow> {
        self.layers.table()
    }
}

/// Inference-mode score of every row (dropout disabled).
pub fn critic_score(crit: &CriticNet, rows: &Tensor) -> Result<Vec<f64>, NetworkError> {
    if rows.shape().len() != 2 || rows.cols() != crit.config.input_width {
        return Err(NetworkError::Shape(format!(
            "critic expects rows of width {}, got {:?}",
            crit.config.input_width,
            rows.shape()
        )));
    }
    let n = rows.rows();
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + SCORING_CHUNK).min(n);
        let mut g = Graph::new();
        let x = g.constant(rows.slice_rows(start, end));
        let y = crit.forward(&mut g, x, &mut ForwardCtx::infer())?;
        out.extend_from_slice(g.value(y).data());
        start = end;
    }
    Ok(out)
}
