use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::schema::TableSchema;
use super::DataError;
use crate::autodiff::Tensor;

/// Standardization statistics and one-hot layout fitted on a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub schema: TableSchema,
    pub means: Vec<f64>,
    /// Population standard deviations.
    pub stds: Vec<f64>,
}

impl Encoder {
    pub fn fit(ds: &Dataset) -> Result<Self, DataError> {
        if ds.n_rows() < 2 {
            return Err(DataError::TooFewRows { needed: 2, got: ds.n_rows() });
        }
        let schema = ds.schema().clone();
        let d = schema.continuous_count();
        let n = ds.n_rows() as f64;
        let mut means = vec![0.0; d];
        let mut stds = vec![0.0; d];
        for (j, spec) in schema.continuous().enumerate() {
            let col = ds.continuous_column(j);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            if !(std > 0.0) || std <= 1e-12 * mean.abs() {
                return Err(DataError::ZeroVariance(spec.name.clone()));
            }
            means[j] = mean;
            stds[j] = std;
        }
        Ok(Self { schema, means, stds })
    }

    pub fn width(&self) -> usize {
        self.schema.encoded_width()
    }

    /// Column offsets of each one-hot block in the encoded layout.
    pub fn block_offsets(&self) -> Vec<(usize, usize)> {
        let mut off = self.schema.continuous_count();
        self.schema
            .class_counts()
            .into_iter()
            .map(|k| {
                let b = (off, k);
                off += k;
                b
            })
            .collect()
    }

    pub fn encode(&self, ds: &Dataset) -> Result<Tensor, DataError> {
        if ds.schema() != &self.schema {
            return Err(DataError::SchemaMismatch("dataset schema differs from the encoder's".into()));
        }
        let width = self.width();
        let blocks = self.block_offsets();
        let mut out = vec![0.0; ds.n_rows() * width];
        for i in 0..ds.n_rows() {
            let row = &mut out[i * width..(i + 1) * width];
            for (j, &v) in ds.continuous_row(i).iter().enumerate() {
                row[j] = (v - self.means[j]) / self.stds[j];
            }
            for (b, (&c, &(off, k))) in ds.categorical_row(i).iter().zip(&blocks).enumerate() {
                if c as usize >= k {
                    let name = self.schema.categorical().nth(b).map(|s| s.name.clone()).unwrap_or_default();
                    return Err(DataError::UnknownCategory { row: i + 1, column: name, value: c.to_string() });
                }
                row[off + c as usize] = 1.0;
            }
        }
        Ok(Tensor::matrix(ds.n_rows(), width, out))
    }

    /// Inverts [`Encoder::encode`]; each one-hot block decodes to its argmax
    /// (first index on ties).
    pub fn decode(&self, m: &Tensor) -> Result<Dataset, DataError> {
        let width = self.width();
        if m.shape().len() != 2 || m.cols() != width {
            return Err(DataError::Shape(format!("encoded matrix {:?} does not have width {width}", m.shape())));
        }
        let d = self.schema.continuous_count();
        let blocks = self.block_offsets();
        let n = m.rows();
        let mut cont = Vec::with_capacity(n * d);
        let mut cat = Vec::with_capacity(n * blocks.len());
        for i in 0..n {
            let row = m.row(i);
            for j in 0..d {
                cont.push(row[j] * self.stds[j] + self.means[j]);
            }
            for &(off, k) in &blocks {
                cat.push(argmax(&row[off..off + k]) as u32);
            }
        }
        Dataset::new(self.schema.clone(), cont, cat, n)
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
