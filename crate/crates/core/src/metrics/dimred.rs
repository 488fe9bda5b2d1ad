use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{same_continuous_schema, MetricsError};
use crate::autodiff::{gemm, Tensor};
use crate::data::Dataset;

/// Share of real variance the retained components must explain.
pub const VARIANCE_TARGET: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimRedResult {
    pub score: f64,
    /// Number of retained components.
    pub components: usize,
    /// Explained-variance ratio of each retained real component.
    pub weights: Vec<f64>,
    /// Mapped cosine similarity of each retained component pair.
    pub cosines: Vec<f64>,
}

/// Principal axes of a covariance matrix, largest eigenvalue first.
#[derive(Debug, Clone)]
pub struct Pca {
    pub eigenvalues: Vec<f64>,
    /// One eigenvector per entry, largest-magnitude component non-negative.
    pub axes: Vec<Vec<f64>>,
}

impl Pca {
    pub fn fit(cov: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(cov.clone());
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
        let axes = order
            .iter()
            .map(|&k| {
                let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
                fix_sign(&mut v);
                v
            })
            .collect();
        Self { eigenvalues, axes }
    }

    pub fn explained_ratios(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().sum();
        self.eigenvalues.iter().map(|l| l / total).collect()
    }

    /// Axis `k` scaled by the square root of its eigenvalue.
    pub fn scaled_axis(&self, k: usize) -> Vec<f64> {
        let s = self.eigenvalues[k].sqrt();
        self.axes[k].iter().map(|v| v * s).collect()
    }
}

/// Eigenvectors are only defined up to sign; flip so that the component
/// of largest magnitude (first one on ties) is non-negative.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// `(x·y / (‖x‖‖y‖) + 1) / 2`, which maps the cosine into `[0, 1]`.
pub fn cosine_similarity(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return 0.5;
    }
    (0.5 * (dot / (nx * ny) + 1.0)).clamp(0.0, 1.0)
}

/// Compares the principal structure of two covariance matrices. The
/// number of components and their weights come from the real matrix.
pub fn dim_red_from_covariances(real: &DMatrix<f64>, gen: &DMatrix<f64>) -> Result<DimRedResult, MetricsError> {
    if real.shape() != gen.shape() || real.nrows() != real.ncols() || real.nrows() == 0 {
        return Err(MetricsError::Shape(format!(
            "covariance shapes {:?} and {:?}",
            real.shape(),
            gen.shape()
        )));
    }
    let pr = Pca::fit(real);
    let pg = Pca::fit(gen);
    let total_real: f64 = pr.eigenvalues.iter().sum();
    let total_gen: f64 = pg.eigenvalues.iter().sum();
    if !(total_real > 0.0) || !(total_gen > 0.0) {
        return Err(MetricsError::DegenerateCovariance("no variance to decompose".into()));
    }
    let ratios = pr.explained_ratios();
    let mut components = 0;
    let mut cum = 0.0;
    while components < ratios.len() {
        cum += ratios[components];
        components += 1;
        if cum >= VARIANCE_TARGET {
            break;
        }
    }
    let weights = ratios[..components].to_vec();
    let cosines: Vec<f64> = (0..components)
        .map(|k| cosine_similarity(&pr.scaled_axis(k), &pg.scaled_axis(k)))
        .collect();
    let score = weights.iter().zip(&cosines).map(|(w, c)| w * c).sum::<f64>() / weights.iter().sum::<f64>();
    Ok(DimRedResult { score: score.clamp(0.0, 1.0), components, weights, cosines })
}

/// Sample covariance of the rows of `ds` after standardizing each column
/// with the given statistics.
fn covariance(ds: &Dataset, means: &[f64], stds: &[f64]) -> DMatrix<f64> {
    let d = means.len();
    let n = ds.n_rows();
    let mut z: Vec<f64> = ds
        .continuous_values()
        .chunks(d)
        .flat_map(|row| row.iter().zip(means.iter().zip(stds)).map(|(v, (m, s))| (v - m) / s))
        .collect();
    let mut centre = vec![0.0; d];
    for row in z.chunks(d) {
        centre.iter_mut().zip(row).for_each(|(c, v)| *c += v);
    }
    centre.iter_mut().for_each(|c| *c /= n as f64);
    for row in z.chunks_mut(d) {
        row.iter_mut().zip(&centre).for_each(|(v, c)| *v -= c);
    }
    let zt = Tensor::matrix(n, d, z);
    let c = gemm(&zt, &zt, true, false).expect("square product of one matrix");
    DMatrix::from_row_slice(d, d, c.data()).map(|v| v / (n as f64 - 1.0))
}

/// Dimension-reduction score of `gen` against `real`, both standardized
/// with the real data's mean and population standard deviation.
pub fn dim_red_score(real: &Dataset, gen: &Dataset) -> Result<DimRedResult, MetricsError> {
    same_continuous_schema(real, gen)?;
    let d = real.schema().continuous_count();
    for (which, ds) in [("real", real), ("generated", gen)] {
        if ds.n_rows() < d + 1 {
            return Err(MetricsError::DegenerateCovariance(format!(
                "{which} data has {} rows, at least {} needed for {d} features",
                ds.n_rows(),
                d + 1
            )));
        }
    }
    let (means, stds) = super::column_stats(real);
    if let Some(j) = stds.iter().position(|&s| !(s > 0.0)) {
        return Err(MetricsError::DegenerateCovariance(format!(
            "real column {} is constant",
            real.schema().continuous_names()[j]
        )));
    }
    dim_red_from_covariances(&covariance(real, &means, &stds), &covariance(gen, &means, &stds))
}
