use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::NetworkError;
use crate::autodiff::{self, ActivationSpec, Graph, Mode, Parameter, Sign, Tensor, Var};

/// Batch statistics gathered by one training-mode batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub layer: String,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Per-pass state threaded through a forward call.
pub struct ForwardCtx<'r> {
    pub mode: Mode,
    /// Frozen networks enter the graph as constants and get no gradients.
    pub frozen: bool,
    rng: Option<&'r mut dyn RngCore>,
    pub batch_stats: Vec<BatchStats>,
}

impl<'r> ForwardCtx<'r> {
    pub fn train(rng: &'r mut dyn RngCore) -> Self {
        Self { mode: Mode::Train, frozen: false, rng: Some(rng), batch_stats: Vec::new() }
    }

    pub fn infer() -> Self {
        Self { mode: Mode::Infer, frozen: true, rng: None, batch_stats: Vec::new() }
    }

    pub fn frozen(mut self, frozen: bool) -> Self {
        self.frozen = frozen;
        self
    }

    fn bind(&self, g: &mut Graph, p: &Parameter) -> Var {
        if self.frozen {
            g.constant(p.value.clone())
        } else {
            g.param(&p.name, &p.value)
        }
    }
}

/// He-uniform initial weights: `U(−√(6/fan_in), √(6/fan_in))`.
pub fn he_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / fan_in.max(1) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::matrix(fan_in, fan_out, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Self {
            weight: Parameter::new(format!("{name}.weight"), he_uniform(fan_in, fan_out, rng)),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(&[fan_out])),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.value.shape()[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub name: String,
    pub gamma: Parameter,
    pub beta: Parameter,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    /// Weight kept by the running statistics at each update.
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new(name: &str, width: usize, eps: f64, momentum: f64) -> Self {
        Self {
            name: name.to_owned(),
            gamma: Parameter::new(format!("{name}.gamma"), Tensor::full(&[width], 1.0)),
            beta: Parameter::new(format!("{name}.beta"), Tensor::zeros(&[width])),
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            eps,
            momentum,
        }
    }

    pub fn width(&self) -> usize {
        self.running_mean.len()
    }

    pub fn update_running(&mut self, mean: &[f64], var: &[f64]) {
        let m = self.momentum;
        for (r, b) in self.running_mean.iter_mut().zip(mean) {
            *r = m * *r + (1.0 - m) * b;
        }
        for (r, b) in self.running_var.iter_mut().zip(var) {
            *r = m * *r + (1.0 - m) * b;
        }
    }
}

/// Signed leaky activation with learnable slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlrLayer {
    pub sign: Sign,
    pub p: Parameter,
    pub q: Parameter,
}

impl SlrLayer {
    pub fn new(name: &str, sign: Sign, p: f64, q: f64) -> Self {
        Self {
            sign,
            p: Parameter::new(format!("{name}.p"), Tensor::scalar(p)),
            q: Parameter::new(format!("{name}.q"), Tensor::scalar(q)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Dense(Dense),
    BatchNorm(BatchNorm),
    Slr(SlrLayer),
    LeakyRelu { alpha: f64 },
    Dropout { rate: f64 },
    Softmax,
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "Dense",
            Layer::BatchNorm(_) => "BatchNorm",
            Layer::Slr(s) if s.sign == Sign::Plus => "SLR(+1)",
            Layer::Slr(_) => "SLR(-1)",
            Layer::LeakyRelu { .. } => "LeakyReLU",
            Layer::Dropout { .. } => "Dropout",
            Layer::Softmax => "Softmax",
        }
    }

    /// Stored values, counting batch-norm running statistics as well.
    pub fn param_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.weight.numel() + d.bias.numel(),
            Layer::BatchNorm(b) => 4 * b.width(),
            Layer::Slr(_) => 2,
            _ => 0,
        }
    }

    fn parameters(&self) -> Vec<&Parameter> {
        match self {
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::BatchNorm(b) => vec![&b.gamma, &b.beta],
            Layer::Slr(s) => vec![&s.p, &s.q],
            _ => Vec::new(),
        }
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        match self {
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::BatchNorm(b) => vec![&mut b.gamma, &mut b.beta],
            Layer::Slr(s) => vec![&mut s.p, &mut s.q],
            _ => Vec::new(),
        }
    }
}

/// One row of a layer audit table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerRow {
    pub block: String,
    pub kind: &'static str,
    pub width: usize,
    pub params: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequential {
    pub name: String,
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(name: &str) -> Self {
        Self { name: name.to_owned(), layers: Vec::new() }
    }

    pub fn push(&mut self, layer: Layer) {
        self.layers.push(layer);
    }

    /// Name for the next layer pushed.
    pub fn next_name(&self) -> String {
        format!("{}.{}", self.name, self.layers.len())
    }

    pub fn input_width(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l {
            Layer::Dense(d) => Some(d.fan_in()),
            _ => None,
        })
    }

    pub fn output_width(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| match l {
            Layer::Dense(d) => Some(d.fan_out()),
            _ => None,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var, ctx: &mut ForwardCtx<'_>) -> Result<Var, NetworkError> {
        let mut h = x;
        for layer in &self.layers {
            h = match layer {
                Layer::Dense(d) => {
                    let w = ctx.bind(g, &d.weight);
                    let b = ctx.bind(g, &d.bias);
                    autodiff::affine(g, h, w, b)?
                }
                Layer::BatchNorm(bn) => {
                    let gamma = ctx.bind(g, &bn.gamma);
                    let beta = ctx.bind(g, &bn.beta);
                    let running = (bn.running_mean.as_slice(), bn.running_var.as_slice());
                    let (y, stats) = autodiff::batch_norm(g, h, gamma, beta, ctx.mode, running, bn.eps)?;
                    if let Some((mean, var)) = stats {
                        ctx.batch_stats.push(BatchStats { layer: bn.name.clone(), mean, var });
                    }
                    y
                }
                Layer::Slr(s) => {
                    let p = ctx.bind(g, &s.p);
                    let q = ctx.bind(g, &s.q);
                    let spec = ActivationSpec::Slr { sign: s.sign, p: s.p.value.item(), q: s.q.value.item() };
                    autodiff::activate(g, &spec, h, Some((p, q)))?
                }
                Layer::LeakyRelu { alpha } => {
                    autodiff::activate(g, &ActivationSpec::LeakyRelu { alpha: *alpha }, h, None)?
                }
                Layer::Dropout { rate } => match ctx.mode {
                    Mode::Infer => h,
                    Mode::Train => {
                        let rng = ctx
                            .rng
                            .as_deref_mut()
                            .ok_or_else(|| NetworkError::Config("training-mode dropout needs an RNG".into()))?;
                        autodiff::dropout(g, h, *rate, Mode::Train, rng)?
                    }
                },
                Layer::Softmax => autodiff::activate(g, &ActivationSpec::Softmax, h, None)?,
            };
        }
        Ok(h)
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        self.layers.iter().flat_map(Layer::parameters).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.layers.iter_mut().flat_map(Layer::parameters_mut).collect()
    }

    pub fn batch_norms(&self) -> impl Iterator<Item = &BatchNorm> {
        self.layers.iter().filter_map(|l| match l {
            Layer::BatchNorm(b) => Some(b),
            _ => None,
        })
    }

    pub fn batch_norms_mut(&mut self) -> impl Iterator<Item = &mut BatchNorm> {
        self.layers.iter_mut().filter_map(|l| match l {
            Layer::BatchNorm(b) => Some(b),
            _ => None,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn table(&self) -> Vec<LayerRow> {
        let mut width = self.input_width().unwrap_or(0);
        self.layers
            .iter()
            .map(|l| {
                match l {
                    Layer::Dense(d) => width = d.fan_out(),
                    Layer::BatchNorm(b) => width = b.width(),
                    _ => {}
                }
                LayerRow { block: self.name.clone(), kind: l.kind(), width, params: l.param_count() }
            })
            .collect()
    }
}
