//! Recording tape and reverse-mode sweep.
//!
//! Every backward sweep records the gradients it produces as new nodes on
//! the same tape. Gradients of primitive ops are themselves expressed with
//! primitive ops, so a gradient node can be differentiated again; this is
//! what the gradient penalty relies on. Fused ops (batch norm, SLR,
//! softmax) only have a numeric first-order rule and refuse to take part
//! in a differentiable sweep.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::tensor::{gemm, Tensor};
use super::AutodiffError;

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    LeakyRelu,
    Dropout,
    Constant,
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Param,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    AddRow { x: Var, b: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MaskMul { x: Var, mask: Arc<[f64]>, kind: MaskKind },
    Sqrt(Var),
    SumRows(Var),
    BroadcastRows(Var),
    SumCols(Var),
    BroadcastCols(Var),
    SumAll(Var),
    Fill(Var),
    Concat(Vec<Var>),
    SliceCols { x: Var, start: usize },
    PadCols { x: Var, start: usize },
    BatchNormTrain { x: Var, gamma: Var, beta: Var, normalized: Arc<Tensor>, inv_std: Arc<[f64]> },
    BatchNormInfer { x: Var, gamma: Var, beta: Var, normalized: Arc<Tensor>, inv_std: Arc<[f64]> },
    Slr { x: Var, p: Var, q: Var, sign: f64 },
    Softmax(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param => "param",
            Op::MatMul { .. } => "matmul",
            Op::AddRow { .. } => "add_row",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::MaskMul { kind: MaskKind::LeakyRelu, .. } => "leaky_relu",
            Op::MaskMul { kind: MaskKind::Dropout, .. } => "dropout",
            Op::MaskMul { kind: MaskKind::Constant, .. } => "mask_mul",
            Op::Sqrt(..) => "sqrt",
            Op::SumRows(..) => "sum_rows",
            Op::BroadcastRows(..) => "broadcast_rows",
            Op::SumCols(..) => "sum_cols",
            Op::BroadcastCols(..) => "broadcast_cols",
            Op::SumAll(..) => "sum_all",
            Op::Fill(..) => "fill",
            Op::Concat(..) => "concat",
            Op::SliceCols { .. } => "slice_cols",
            Op::PadCols { .. } => "pad_cols",
            Op::BatchNormTrain { .. } | Op::BatchNormInfer { .. } => "batch_norm",
            Op::Slr { .. } => "slr",
            Op::Softmax(..) => "softmax",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf | Op::Param => vec![],
            Op::MatMul { a, b, .. } => vec![*a, *b],
            Op::AddRow { x, b } => vec![*x, *b],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => vec![*a, *b],
            Op::Scale(a, _) | Op::AddScalar(a) | Op::Sqrt(a) => vec![*a],
            Op::MaskMul { x, .. } => vec![*x],
            Op::SumRows(a) | Op::SumCols(a) | Op::SumAll(a) | Op::Softmax(a) => vec![*a],
            Op::BroadcastRows(x) | Op::BroadcastCols(x) | Op::Fill(x) => vec![*x],
            Op::SliceCols { x, .. }
            | Op::PadCols { x, .. } => vec![*x],
            Op::Concat(xs) => xs.clone(),
            Op::BatchNormTrain { x, gamma, beta, .. } | Op::BatchNormInfer { x, gamma, beta, .. } => {
                vec![*x, *gamma, *beta]
            }
            Op::Slr { x, p, q, .. } => vec![*x, *p, *q],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Gradients of a scalar with respect to every registered parameter.
pub type GradMap = BTreeMap<String, Tensor>;

/// Ordered record of tensor operations.
///
/// Nodes are only ever appended and every op refers to earlier nodes, so
/// the node list is a topological order by construction.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<(), AutodiffError> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(AutodiffError::Detached(v.0))
        }
    }

    /// Records a tensor that is not differentiated unless explicitly asked.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t)
    }

    /// Registers a named parameter. Registering the same name twice returns
    /// the existing node so repeated uses accumulate into one gradient.
    pub fn param(&mut self, name: &str, t: &Tensor) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let v = self.push(Op::Param, t.clone());
        self.params.insert(name.to_owned(), v);
        v
    }

    pub fn params(&self) -> &BTreeMap<String, Var> {
        &self.params
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<(), AutodiffError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(AutodiffError::Shape(format!("{what}: shapes {sa:?} and {sb:?} differ")));
        }
        Ok(())
    }

    fn matrix_dims(&self, v: Var, what: &str) -> Result<(usize, usize), AutodiffError> {
        let s = self.value(v).shape();
        if s.len() != 2 {
            return Err(AutodiffError::Shape(format!("{what}: expected a matrix, got {s:?}")));
        }
        Ok((s[0], s[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var, AutodiffError> {
        self.check(a)?;
        self.check(b)?;
        let out = gemm(self.value(a), self.value(b), ta, tb)?;
        Ok(self.push(Op::MatMul { a, b, ta, tb }, out))
    }

    /// `x[n×m] + b[m]`, the bias broadcast over rows.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var, AutodiffError> {
        self.check(x)?;
        self.check(b)?;
        let (_, m) = self.matrix_dims(x, "add_row")?;
        let bv = self.value(b);
        if bv.len() != m {
            return Err(AutodiffError::Shape(format!(
                "add_row: bias {:?} does not match width of {:?}",
                bv.shape(),
                self.value(x).shape()
            )));
        }
        let bias = bv.data().to_vec();
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_mut(m) {
            for (o, b) in row.iter_mut().zip(&bias) {
                *o += b;
            }
        }
        Ok(self.push(Op::AddRow { x, b }, out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.check(a)?;
        self.check(b)?;
        self.same_shape(a, b, "add")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.check(a)?;
        self.check(b)?;
        self.same_shape(a, b, "sub")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), out))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.check(a)?;
        self.check(b)?;
        self.same_shape(a, b, "mul")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), out))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.check(a)?;
        self.check(b)?;
        self.same_shape(a, b, "div")?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x / y);
        Ok(self.push(Op::Div(a, b), out))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, AutodiffError> {
        self.check(a)?;
        let out = self.value(a).map(|x| x * c);
        Ok(self.push(Op::Scale(a, c), out))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var, AutodiffError> {
        self.check(a)?;
        let out = self.value(a).map(|x| x + c);
        Ok(self.push(Op::AddScalar(a), out))
    }

    /// Elementwise product with a constant mask of the same length.
    pub fn mask_mul(&mut self, x: Var, mask: Arc<[f64]>, kind: MaskKind) -> Result<Var, AutodiffError> {
        self.check(x)?;
        let xv = self.value(x);
        if mask.len() != xv.len() {
            return Err(AutodiffError::Shape(format!(
                "mask of length {} applied to {:?}",
                mask.len(),
                xv.shape()
            )));
        }
        let data = xv.data().iter().zip(mask.iter()).map(|(a, m)| a * m).collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(Op::MaskMul { x, mask, kind }, out))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.check(a)?;
        let out = self.value(a).map(f64::sqrt);
        Ok(self.push(Op::Sqrt(a), out))
    }

    /// Column sums: `[n×m] → [m]`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.check(a)?;
        let (_, m) = self.matrix_dims(a, "sum_rows")?;
        let mut out = vec![0.0; m];
        for row in self.value(a).data().chunks(m) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        Ok(self.push(Op::SumRows(a), Tensor::vector(out)))
    }

    /// `[m] → [rows×m]`.
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Result<Var, AutodiffError> {
        self.check(a)?;
        let v = self.value(a);
        let m = v.len();
        let mut data = Vec::with_capacity(rows * m);
        for _ in 0..rows {
            data.extend_from_slice(v.data());
        }
        Ok(self.push(Op::BroadcastRows(a), Tensor::matrix(rows, m, data)))
    }

    /// Row sums: `[n×m] → [n×1]`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.check(a)?;
        let (n, m) = self.matrix_dims(a, "sum_cols")?;
        let data: Vec<f64> = if m == 0 {
            vec![0.0; n]
        } else {
            self.value(a).data().chunks(m).map(|r| r.iter().sum()).collect()
        };
        Ok(self.push(Op::SumCols(a), Tensor::matrix(n, 1, data)))
    }

    /// `[n×1] → [n×cols]`.
    pub fn broadcast_cols(&mut self, a: Var, cols: usize) -> Result<Var, AutodiffError> {
        self.check(a)?;
        let (n, one) = self.matrix_dims(a, "broadcast_cols")?;
        if one != 1 {
            return Err(AutodiffError::Shape(format!("broadcast_cols needs [n, 1], got [{n}, {one}]")));
        }
        let mut data = Vec::with_capacity(n * cols);
        for &v in self.value(a).data() {
            data.extend(std::iter::repeat_n(v, cols));
        }
        Ok(self.push(Op::BroadcastCols(a), Tensor::matrix(n, cols, data)))
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.check(a)?;
        let s = self.value(a).sum();
        Ok(self.push(Op::SumAll(a), Tensor::scalar(s)))
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum_all(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Spreads a one-element tensor over `shape`.
    pub fn fill(&mut self, a: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        self.check(a)?;
        let v = self.value(a);
        if v.len() != 1 {
            return Err(AutodiffError::Shape(format!("fill needs a scalar, got {:?}", v.shape())));
        }
        let out = Tensor::full(shape, v.item());
        Ok(self.push(Op::Fill(a), out))
    }

    /// Last-axis concatenation of matrices sharing their row count.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var, AutodiffError> {
        if xs.is_empty() {
            return Err(AutodiffError::Shape("concat of zero tensors".into()));
        }
        let mut widths = Vec::with_capacity(xs.len());
        let (n, _) = self.matrix_dims(xs[0], "concat")?;
        for &x in xs {
            self.check(x)?;
            let (r, c) = self.matrix_dims(x, "concat")?;
            if r != n {
                return Err(AutodiffError::Shape(format!(
                    "concat: leading dimension {r} of {:?} differs from {n}",
                    self.value(x).shape()
                )));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for i in 0..n {
            for &x in xs {
                data.extend_from_slice(self.value(x).row(i));
            }
        }
        Ok(self.push(Op::Concat(xs.to_vec()), Tensor::matrix(n, total, data)))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, AutodiffError> {
        self.check(x)?;
        let (n, m) = self.matrix_dims(x, "slice_cols")?;
        if start + len > m {
            return Err(AutodiffError::Shape(format!("slice_cols {start}..{} of width {m}", start + len)));
        }
        let v = self.value(x);
        let mut data = Vec::with_capacity(n * len);
        for i in 0..n {
            data.extend_from_slice(&v.row(i)[start..start + len]);
        }
        Ok(self.push(Op::SliceCols { x, start }, Tensor::matrix(n, len, data)))
    }

    pub fn pad_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var, AutodiffError> {
        self.check(x)?;
        let (n, m) = self.matrix_dims(x, "pad_cols")?;
        if start + m > width {
            return Err(AutodiffError::Shape(format!("pad_cols {start}+{m} exceeds {width}")));
        }
        let v = self.value(x);
        let mut data = vec![0.0; n * width];
        for i in 0..n {
            data[i * width + start..i * width + start + m].copy_from_slice(v.row(i));
        }
        Ok(self.push(Op::PadCols { x, start }, Tensor::matrix(n, width, data)))
    }

    /// Batch norm over the rows of `x` using the batch statistics. Returns
    /// the output and the (mean, biased variance) of each column.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, Vec<f64>, Vec<f64>), AutodiffError> {
        self.check(x)?;
        let (n, w) = self.matrix_dims(x, "batch_norm")?;
        if n < 2 {
            return Err(AutodiffError::DegenerateBatch(n));
        }
        self.check_affine_vec(gamma, w, "gamma")?;
        self.check_affine_vec(beta, w, "beta")?;
        let xv = self.value(x);
        let mut mean = vec![0.0; w];
        for row in xv.data().chunks(w) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; w];
        for row in xv.data().chunks(w) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (normalized, out) = self.bn_apply(x, gamma, beta, &mean, &inv_std);
        let op = Op::BatchNormTrain {
            x,
            gamma,
            beta,
            normalized: Arc::new(normalized),
            inv_std: inv_std.into(),
        };
        Ok((self.push(op, out), mean, var))
    }

    /// Batch norm using fixed running statistics.
    pub fn batch_norm_infer(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
    ) -> Result<Var, AutodiffError> {
        self.check(x)?;
        let (_, w) = self.matrix_dims(x, "batch_norm")?;
        self.check_affine_vec(gamma, w, "gamma")?;
        self.check_affine_vec(beta, w, "beta")?;
        if running_mean.len() != w || running_var.len() != w {
            return Err(AutodiffError::Shape(format!("batch_norm: running statistics do not match width {w}")));
        }
        let inv_std: Vec<f64> = running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (normalized, out) = self.bn_apply(x, gamma, beta, running_mean, &inv_std);
        let op = Op::BatchNormInfer {
            x,
            gamma,
            beta,
            normalized: Arc::new(normalized),
            inv_std: inv_std.into(),
        };
        Ok(self.push(op, out))
    }

    fn check_affine_vec(&self, v: Var, w: usize, what: &str) -> Result<(), AutodiffError> {
        self.check(v)?;
        if self.value(v).len() != w {
            return Err(AutodiffError::Shape(format!(
                "batch_norm: {what} {:?} does not match width {w}",
                self.value(v).shape()
            )));
        }
        Ok(())
    }

    fn bn_apply(&self, x: Var, gamma: Var, beta: Var, mean: &[f64], inv_std: &[f64]) -> (Tensor, Tensor) {
        let xv = self.value(x);
        let w = xv.cols();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut normalized = xv.clone();
        let mut out = xv.clone();
        for (nrow, orow) in normalized.data_mut().chunks_mut(w).zip(out.data_mut().chunks_mut(w)) {
            for j in 0..w {
                let z = (nrow[j] - mean[j]) * inv_std[j];
                nrow[j] = z;
                orow[j] = g[j] * z + b[j];
            }
        }
        (normalized, out)
    }

    /// Signed leaky activation: slope `p` where `sign·x ≥ 0`, slope `q` elsewhere.
    pub fn slr(&mut self, x: Var, p: Var, q: Var, sign: f64) -> Result<Var, AutodiffError> {
        self.check(x)?;
        self.check(p)?;
        self.check(q)?;
        if self.value(p).len() != 1 || self.value(q).len() != 1 {
            return Err(AutodiffError::Shape("slr slopes must be scalars".into()));
        }
        let (pv, qv) = (self.value(p).item(), self.value(q).item());
        let out = self.value(x).map(|v| if sign * v >= 0.0 { pv * v } else { qv * v });
        Ok(self.push(Op::Slr { x, p, q, sign }, out))
    }

    /// Row-wise softmax along the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.check(x)?;
        let (_, m) = self.matrix_dims(x, "softmax")?;
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_mut(m.max(1)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        Ok(self.push(Op::Softmax(x), out))
    }

    // ---- reverse sweep ----------------------------------------------------

    /// Gradients of a scalar `output` with respect to every registered
    /// parameter. Parameters the output does not depend on get zeros.
    pub fn backward(&mut self, output: Var) -> Result<GradMap, AutodiffError> {
        self.check(output)?;
        if self.value(output).len() != 1 {
            return Err(AutodiffError::NonScalar(self.value(output).shape().to_vec()));
        }
        let params: Vec<(String, Var)> = self.params.iter().map(|(k, v)| (k.clone(), *v)).collect();
        let wrt: Vec<Var> = params.iter().map(|(_, v)| *v).collect();
        let seed = self.constant(Tensor::scalar(1.0));
        let grads = self.sweep(output, seed, &wrt, false)?;
        let mut map = GradMap::new();
        for ((name, v), g) in params.into_iter().zip(grads) {
            let t = match g {
                Some(g) => self.value(g).clone(),
                None => Tensor::zeros(self.value(v).shape()),
            };
            map.insert(name, t);
        }
        Ok(map)
    }

    /// Numeric gradients of a scalar `output` with respect to arbitrary nodes.
    pub fn gradients(&mut self, output: Var, wrt: &[Var]) -> Result<Vec<Tensor>, AutodiffError> {
        self.check(output)?;
        if self.value(output).len() != 1 {
            return Err(AutodiffError::NonScalar(self.value(output).shape().to_vec()));
        }
        for &w in wrt {
            self.check(w)?;
        }
        let seed = self.constant(Tensor::scalar(1.0));
        let grads = self.sweep(output, seed, wrt, false)?;
        Ok(wrt
            .iter()
            .zip(grads)
            .map(|(&w, g)| match g {
                Some(g) => self.value(g).clone(),
                None => Tensor::zeros(self.value(w).shape()),
            })
            .collect())
    }

    /// Gradient of `Σ output` with respect to `input`, recorded as a
    /// differentiable node. For a per-row output such as a critic score this
    /// is the per-row input gradient.
    pub fn input_gradient_node(&mut self, output: Var, input: Var) -> Result<Var, AutodiffError> {
        self.check(output)?;
        self.check(input)?;
        let seed = self.constant(Tensor::full(self.value(output).shape(), 1.0));
        let grads = self.sweep(output, seed, &[input], true)?;
        match grads[0] {
            Some(g) => Ok(g),
            None => {
                let zeros = Tensor::zeros(self.value(input).shape());
                Ok(self.constant(zeros))
            }
        }
    }

    fn sweep(
        &mut self,
        output: Var,
        seed: Var,
        wrt: &[Var],
        create_graph: bool,
    ) -> Result<Vec<Option<Var>>, AutodiffError> {
        let n = output.0 + 1;
        let mut relevant = vec![false; n];
        for &w in wrt {
            if w.0 < n {
                relevant[w.0] = true;
            }
        }
        for i in 0..n {
            if !relevant[i] && self.nodes[i].op.inputs().iter().any(|v| relevant[v.0]) {
                relevant[i] = true;
            }
        }
        let mut grads: Vec<Option<Var>> = vec![None; n];
        if relevant[output.0] {
            grads[output.0] = Some(seed);
        }
        for i in (0..n).rev() {
            let Some(g) = grads[i] else { continue };
            if !relevant[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let contributions = self.vjp(Var(i), &op, g, &relevant, create_graph)?;
            for (input, gi) in contributions {
                grads[input.0] = Some(match grads[input.0] {
                    Some(prev) => self.add(prev, gi)?,
                    None => gi,
                });
            }
        }
        Ok(wrt.iter().map(|w| grads.get(w.0).copied().flatten()).collect())
    }

    fn vjp(
        &mut self,
        out: Var,
        op: &Op,
        g: Var,
        relevant: &[bool],
        create_graph: bool,
    ) -> Result<Vec<(Var, Var)>, AutodiffError> {
        let need = |v: &Var| relevant[v.0];
        let mut res = Vec::new();
        match op {
            Op::Leaf | Op::Param => {}
            Op::MatMul { a, b, ta, tb } => {
                let (a, b, ta, tb) = (*a, *b, *ta, *tb);
                if need(&a) {
                    let ga = if ta { self.matmul(b, g, tb, true)? } else { self.matmul(g, b, false, !tb)? };
                    res.push((a, ga));
                }
                if need(&b) {
                    let gb = if tb { self.matmul(g, a, true, ta)? } else { self.matmul(a, g, !ta, false)? };
                    res.push((b, gb));
                }
            }
            Op::AddRow { x, b } => {
                if need(x) {
                    res.push((*x, g));
                }
                if need(b) {
                    let s = self.sum_rows(g)?;
                    res.push((*b, self.reshape_like(s, *b)?));
                }
            }
            Op::Add(a, b) => {
                if need(a) {
                    res.push((*a, g));
                }
                if need(b) {
                    res.push((*b, g));
                }
            }
            Op::Sub(a, b) => {
                if need(a) {
                    res.push((*a, g));
                }
                if need(b) {
                    res.push((*b, self.scale(g, -1.0)?));
                }
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                if need(&a) {
                    res.push((a, self.mul(g, b)?));
                }
                if need(&b) {
                    res.push((b, self.mul(g, a)?));
                }
            }
            Op::Div(a, b) => {
                let (a, b) = (*a, *b);
                if need(&a) {
                    res.push((a, self.div(g, b)?));
                }
                if need(&b) {
                    let t = self.mul(g, out)?;
                    let t = self.div(t, b)?;
                    res.push((b, self.scale(t, -1.0)?));
                }
            }
            Op::Scale(a, c) => res.push((*a, self.scale(g, *c)?)),
            Op::AddScalar(a) => res.push((*a, g)),
            Op::MaskMul { x, mask, .. } => {
                let gx = self.mask_mul(g, mask.clone(), MaskKind::Constant)?;
                res.push((*x, gx));
            }
            Op::Sqrt(a) => {
                if create_graph {
                    let half = self.scale(g, 0.5)?;
                    res.push((*a, self.div(half, out)?));
                } else {
                    // d sqrt(x) at x = 0 is taken as 0.
                    let t = self.value(g).zip_map(self.value(out), |g, y| if y > 0.0 { 0.5 * g / y } else { 0.0 });
                    res.push((*a, self.constant(t)));
                }
            }
            Op::SumRows(a) => {
                let rows = self.value(*a).rows();
                res.push((*a, self.broadcast_rows(g, rows)?));
            }
            Op::BroadcastRows(x) => {
                let s = self.sum_rows(g)?;
                res.push((*x, self.reshape_like(s, *x)?));
            }
            Op::SumCols(a) => {
                let cols = self.value(*a).cols();
                res.push((*a, self.broadcast_cols(g, cols)?));
            }
            Op::BroadcastCols(x) => res.push((*x, self.sum_cols(g)?)),
            Op::SumAll(a) => {
                let shape = self.value(*a).shape().to_vec();
                res.push((*a, self.fill(g, &shape)?));
            }
            Op::Fill(x) => {
                let s = self.sum_all(g)?;
                res.push((*x, self.reshape_like(s, *x)?));
            }
            Op::Concat(xs) => {
                let mut off = 0;
                for x in xs {
                    let w = self.value(*x).cols();
                    if need(x) {
                        res.push((*x, self.slice_cols(g, off, w)?));
                    }
                    off += w;
                }
            }
            Op::SliceCols { x, start } => {
                let width = self.value(*x).cols();
                res.push((*x, self.pad_cols(g, *start, width)?));
            }
            Op::PadCols { x, start } => {
                let len = self.value(*x).cols();
                res.push((*x, self.slice_cols(g, *start, len)?));
            }
            Op::BatchNormTrain { .. } | Op::BatchNormInfer { .. } | Op::Slr { .. } | Op::Softmax(..) => {
                if create_graph {
                    return Err(AutodiffError::UnsupportedSecondOrder(op.name()));
                }
                for (v, t) in self.fused_vjp(out, op, g, relevant) {
                    res.push((v, self.constant(t)));
                }
            }
        }
        Ok(res)
    }

    /// Keeps parameter gradients in the parameter's own shape (`[m]` vs `[1, m]`).
    fn reshape_like(&mut self, v: Var, like: Var) -> Result<Var, AutodiffError> {
        if self.value(v).shape() == self.value(like).shape() {
            return Ok(v);
        }
        // Shapes with equal element counts only; reshape is a masked copy.
        let shape = self.value(like).shape().to_vec();
        let ones: Arc<[f64]> = vec![1.0; self.value(v).len()].into();
        let r = self.mask_mul(v, ones, MaskKind::Constant)?;
        let t = Tensor::new(shape, self.nodes[r.0].value.data().to_vec())?;
        self.nodes[r.0].value = t;
        Ok(r)
    }

    fn fused_vjp(&self, out: Var, op: &Op, g: Var, relevant: &[bool]) -> Vec<(Var, Tensor)> {
        let gv = self.value(g);
        let mut res = Vec::new();
        match op {
            Op::BatchNormTrain { x, gamma, beta, normalized, inv_std }
            | Op::BatchNormInfer { x, gamma, beta, normalized, inv_std } => {
                let train = matches!(op, Op::BatchNormTrain { .. });
                let w = normalized.cols();
                let n = normalized.rows();
                let gam = self.value(*gamma).data();
                let mut dgamma = vec![0.0; w];
                let mut dbeta = vec![0.0; w];
                for (grow, nrow) in gv.data().chunks(w).zip(normalized.data().chunks(w)) {
                    for j in 0..w {
                        dgamma[j] += grow[j] * nrow[j];
                        dbeta[j] += grow[j];
                    }
                }
                if relevant[x.0] {
                    let mut dx = vec![0.0; n * w];
                    if train {
                        // dx = s/n · (n·dz − Σdz − z·Σ(dz·z)), dz = g·γ
                        let nf = n as f64;
                        for j in 0..w {
                            let sum_dz = dbeta[j] * gam[j];
                            let sum_dz_z = dgamma[j] * gam[j];
                            for i in 0..n {
                                let dz = gv.data()[i * w + j] * gam[j];
                                let z = normalized.data()[i * w + j];
                                dx[i * w + j] = inv_std[j] / nf * (nf * dz - sum_dz - z * sum_dz_z);
                            }
                        }
                    } else {
                        for i in 0..n {
                            for j in 0..w {
                                dx[i * w + j] = gv.data()[i * w + j] * gam[j] * inv_std[j];
                            }
                        }
                    }
                    res.push((*x, Tensor::matrix(n, w, dx)));
                }
                if relevant[gamma.0] {
                    res.push((*gamma, Tensor::new(self.value(*gamma).shape().to_vec(), dgamma).unwrap()));
                }
                if relevant[beta.0] {
                    res.push((*beta, Tensor::new(self.value(*beta).shape().to_vec(), dbeta).unwrap()));
                }
            }
            Op::Slr { x, p, q, sign } => {
                let (pv, qv) = (self.value(*p).item(), self.value(*q).item());
                let xv = self.value(*x);
                let mut dp = 0.0;
                let mut dq = 0.0;
                let mut dx = Vec::with_capacity(xv.len());
                for (&v, &gg) in xv.data().iter().zip(gv.data()) {
                    if sign * v >= 0.0 {
                        dp += gg * v;
                        dx.push(gg * pv);
                    } else {
                        dq += gg * v;
                        dx.push(gg * qv);
                    }
                }
                if relevant[x.0] {
                    res.push((*x, Tensor::new(xv.shape().to_vec(), dx).unwrap()));
                }
                if relevant[p.0] {
                    res.push((*p, Tensor::new(self.value(*p).shape().to_vec(), vec![dp]).unwrap()));
                }
                if relevant[q.0] {
                    res.push((*q, Tensor::new(self.value(*q).shape().to_vec(), vec![dq]).unwrap()));
                }
            }
            Op::Softmax(x) => {
                let y = self.value(out);
                let m = y.cols().max(1);
                let mut dx = vec![0.0; y.len()];
                for ((drow, yrow), grow) in dx.chunks_mut(m).zip(y.data().chunks(m)).zip(gv.data().chunks(m)) {
                    let dot: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                    for j in 0..yrow.len() {
                        drow[j] = yrow[j] * (grow[j] - dot);
                    }
                }
                res.push((*x, Tensor::new(y.shape().to_vec(), dx).unwrap()));
            }
            _ => unreachable!("fused_vjp called on primitive op"),
        }
        res
    }
}
