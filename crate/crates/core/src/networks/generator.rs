use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::layers::{BatchNorm, BatchStats, Dense, ForwardCtx, Layer, LayerRow, Sequential, SlrLayer};
use super::NetworkError;
use crate::autodiff::{self, Graph, Parameter, Sign, Tensor, Var};
use crate::data::TableSchema;

/// Rows pushed through the network at once during inference.
const INFERENCE_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub latent_dim: usize,
    /// Number of continuous output columns `d`.
    pub continuous: usize,
    /// Class count of each categorical output block.
    pub class_counts: Vec<usize>,
    /// Widths of the shared input sub-module; the SLR signs alternate +, −, …
    pub trunk_widths: Vec<usize>,
    /// LeakyReLU slope of the categorical heads.
    pub leak: f64,
    pub slr_p: f64,
    pub slr_q: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl GeneratorConfig {
    pub fn new(continuous: usize, class_counts: Vec<usize>) -> Self {
        Self {
            latent_dim: 150,
            continuous,
            class_counts,
            trunk_widths: vec![256, 128, 64, 32],
            leak: 0.2,
            slr_p: 1.0,
            slr_q: 0.25,
            bn_eps: 1e-5,
            bn_momentum: 0.99,
        }
    }

    pub fn for_schema(schema: &TableSchema) -> Self {
        Self::new(schema.continuous_count(), schema.class_counts())
    }

    /// `D = d + Σ kᵢ`.
    pub fn output_width(&self) -> usize {
        self.continuous + self.class_counts.iter().sum::<usize>()
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.latent_dim == 0 {
            return Err(NetworkError::Config("latent dimension must be at least 1".into()));
        }
        if self.continuous == 0 {
            return Err(NetworkError::Config("need at least one continuous output".into()));
        }
        if let Some(k) = self.class_counts.iter().find(|&&k| k < 2) {
            return Err(NetworkError::Config(format!("categorical block with {k} classes; need at least 2")));
        }
        if self.trunk_widths.is_empty() || self.trunk_widths.contains(&0) {
            return Err(NetworkError::Config(format!("invalid trunk widths {:?}", self.trunk_widths)));
        }
        if !(0.0..1.0).contains(&self.bn_momentum) || self.bn_eps <= 0.0 {
            return Err(NetworkError::Config("batch-norm momentum must be in [0, 1) and eps positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorNet {
    pub config: GeneratorConfig,
    pub trunk: Sequential,
    pub continuous: Sequential,
    pub categorical: Vec<Sequential>,
}

fn alternating(i: usize, first: Sign) -> Sign {
    match (i % 2 == 0, first) {
        (true, s) => s,
        (false, Sign::Plus) => Sign::Minus,
        (false, Sign::Minus) => Sign::Plus,
    }
}

/// Builds the generator with He-uniform weights drawn from `seed`.
pub fn build_generator(cfg: &GeneratorConfig, seed: u64) -> Result<GeneratorNet, NetworkError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bn = |seq: &Sequential, w: usize| Layer::BatchNorm(BatchNorm::new(&seq.next_name(), w, cfg.bn_eps, cfg.bn_momentum));

    let mut trunk = Sequential::new("generator.trunk");
    let mut width = cfg.latent_dim;
    for (i, &w) in cfg.trunk_widths.iter().enumerate() {
        trunk.push(Layer::Dense(Dense::new(&trunk.next_name(), width, w, &mut rng)));
        trunk.push(bn(&trunk, w));
        let sign = alternating(i, Sign::Plus);
        trunk.push(Layer::Slr(SlrLayer::new(&trunk.next_name(), sign, cfg.slr_p, cfg.slr_q)));
        width = w;
    }
    let shared = width;

    let d = cfg.continuous;
    let mut cont = Sequential::new("generator.continuous");
    let mut width = shared;
    for (i, w) in [4 * d, 2 * d].into_iter().enumerate() {
        cont.push(Layer::Dense(Dense::new(&cont.next_name(), width, w, &mut rng)));
        cont.push(bn(&cont, w));
        let sign = alternating(i, Sign::Minus);
        cont.push(Layer::Slr(SlrLayer::new(&cont.next_name(), sign, cfg.slr_p, cfg.slr_q)));
        width = w;
    }
    cont.push(Layer::Dense(Dense::new(&cont.next_name(), width, d, &mut rng)));

    let mut categorical = Vec::with_capacity(cfg.class_counts.len());
    for (b, &k) in cfg.class_counts.iter().enumerate() {
        let mut head = Sequential::new(&format!("generator.categorical{b}"));
        let mut width = shared;
        for w in [4 * k, 2 * k] {
            head.push(Layer::Dense(Dense::new(&head.next_name(), width, w, &mut rng)));
            head.push(bn(&head, w));
            head.push(Layer::LeakyRelu { alpha: cfg.leak });
            width = w;
        }
        head.push(Layer::Dense(Dense::new(&head.next_name(), width, k, &mut rng)));
        head.push(bn(&head, k));
        head.push(Layer::Softmax);
        categorical.push(head);
    }

    Ok(GeneratorNet { config: cfg.clone(), trunk, continuous: cont, categorical })
}

impl GeneratorNet {
    pub fn output_width(&self) -> usize {
        self.config.output_width()
    }

    fn sections(&self) -> impl Iterator<Item = &Sequential> {
        std::iter::once(&self.trunk).chain(std::iter::once(&self.continuous)).chain(&self.categorical)
    }

    fn sections_mut(&mut self) -> impl Iterator<Item = &mut Sequential> {
        std::iter::once(&mut self.trunk).chain(std::iter::once(&mut self.continuous)).chain(&mut self.categorical)
    }

    /// Maps latent rows `z[n×L]` to encoded rows `[n×D]`: the continuous
    /// block followed by one softmax block per categorical column.
    pub fn forward(&self, g: &mut Graph, z: Var, ctx: &mut ForwardCtx<'_>) -> Result<Var, NetworkError> {
        let shape = g.value(z).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.config.latent_dim {
            return Err(NetworkError::Shape(format!(
                "generator expects latent rows of width {}, got {shape:?}",
                self.config.latent_dim
            )));
        }
        let a = self.trunk.forward(g, z, ctx)?;
        let mut blocks = vec![self.continuous.forward(g, a, ctx)?];
        for head in &self.categorical {
            blocks.push(head.forward(g, a, ctx)?);
        }
        Ok(autodiff::concat(g, &blocks)?)
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        self.sections().flat_map(Sequential::parameters).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.sections_mut().flat_map(Sequential::parameters_mut).collect()
    }

    pub fn batch_norms(&self) -> Vec<&BatchNorm> {
        self.sections().flat_map(Sequential::batch_norms).collect()
    }

    pub fn batch_norms_mut(&mut self) -> Vec<&mut BatchNorm> {
        self.sections_mut().flat_map(Sequential::batch_norms_mut).collect()
    }

    /// Folds training-mode batch statistics into the running estimates.
    pub fn apply_batch_stats(&mut self, stats: &[BatchStats]) {
        let mut bns = self.batch_norms_mut();
        for s in stats {
            if let Some(bn) = bns.iter_mut().find(|b| b.name == s.layer) {
                bn.update_running(&s.mean, &s.var);
            }
        }
    }

    /// Stored values including batch-norm running statistics.
    pub fn param_count(&self) -> usize {
        self.sections().map(Sequential::param_count).sum()
    }

    pub fn table(&self) -> Vec<LayerRow> {
        self.sections().flat_map(Sequential::table).collect()
    }
}

/// `n` rows of independent standard normal draws.
pub fn sample_latent<R: rand::Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Tensor {
    let data = (0..n * dim).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::matrix(n, dim, data)
}

/// Inference-mode sampling of `n` encoded rows. Deterministic in `seed`
/// and independent of how the rows are chunked internally.
pub fn generate(gen: &GeneratorNet, n: usize, seed: u64) -> Result<Tensor, NetworkError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = gen.output_width();
    let mut out = Vec::with_capacity(n * width);
    let mut done = 0;
    while done < n {
        let m = INFERENCE_CHUNK.min(n - done);
        let z = sample_latent(m, gen.config.latent_dim, &mut rng);
        let mut g = Graph::new();
        let zv = g.constant(z);
        let y = gen.forward(&mut g, zv, &mut ForwardCtx::infer())?;
        out.extend_from_slice(g.value(y).data());
        done += m;
    }
    Ok(Tensor::matrix(n, width, out))
}
