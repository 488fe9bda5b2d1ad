use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{same_continuous_schema, MetricsError};
use crate::data::Dataset;

/// Pearson correlation matrix over named features, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub features: Vec<String>,
    pub values: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.features.len() + j]
    }

    /// Entries strictly above the diagonal, row by row.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.features.len();
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| self.get(i, j)).collect()
    }

    /// Header row of feature names, then one labelled row per feature.
    pub fn write_csv_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "feature,{}", self.features.join(","))?;
        for (i, name) in self.features.iter().enumerate() {
            let row: Vec<String> = (0..self.features.len()).map(|j| format!("{:.6}", self.get(i, j))).collect();
            writeln!(w, "{name},{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), MetricsError> {
        let io = |e| MetricsError::Io(path.display().to_string(), e);
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        self.write_csv_to(&mut f).map_err(io)?;
        f.flush().map_err(io)
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

pub fn correlation_matrix(ds: &Dataset, features: &[String]) -> Result<CorrelationMatrix, MetricsError> {
    let cols = features
        .iter()
        .map(|f| ds.column_by_name(f).map_err(|_| MetricsError::MissingColumn(f.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    if ds.n_rows() < 2 {
        return Err(MetricsError::Empty);
    }
    for (name, col) in features.iter().zip(&cols) {
        if col.iter().all(|&v| v == col[0]) {
            return Err(MetricsError::ConstantColumn(name.clone()));
        }
    }
    let n = features.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        for j in i + 1..n {
            let r = pearson(&cols[i], &cols[j]);
            values[i * n + j] = r;
            values[j * n + i] = r;
        }
    }
    Ok(CorrelationMatrix { features: features.to_vec(), values })
}

/// Kendall τ-b with its two-sided p-value under the normal approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KendallTau {
    pub tau: f64,
    pub p_value: f64,
}

/// Number of pairs inside runs of equal values of a sorted slice, plus the
/// two extra tie sums needed by the τ-b variance.
fn tie_sums<T: PartialEq>(sorted: &[T]) -> (i64, f64, f64, f64) {
    let (mut pairs, mut v, mut t1, mut t2) = (0i64, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        pairs += ((j - i) * (j - i - 1) / 2) as i64;
        v += t * (t - 1.0) * (2.0 * t + 5.0);
        t1 += t * (t - 1.0);
        t2 += t * (t - 1.0) * (t - 2.0);
        i = j;
    }
    (pairs, v, t1, t2)
}

/// Counts inversions while merge-sorting `v`.
fn count_swaps(v: &mut [f64], buf: &mut Vec<f64>) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = count_swaps(&mut v[..mid], buf) + count_swaps(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as i64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Knight's O(n log n) τ-b. Returns `None` when either input is entirely
/// tied, where τ-b is undefined.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Option<KendallTau> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    // adding 0.0 folds −0.0 into 0.0 so that equal values sort together
    let mut pairs: Vec<(f64, f64)> = x.iter().zip(y).map(|(a, b)| (a + 0.0, b + 0.0)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n0 = (n * n.saturating_sub(1) / 2) as i64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let (n1, vx, x1, x2) = tie_sums(&xs);
    let (n3, ..) = tie_sums(&pairs);
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let swaps = count_swaps(&mut ys, &mut Vec::with_capacity(n));
    let (n2, vy, y1, y2) = tie_sums(&ys);
    let s = n0 - n1 - n2 + n3 - 2 * swaps;
    let (ux, uy) = (n0 - n1, n0 - n2);
    if ux == 0 || uy == 0 {
        return None;
    }
    let tau = s as f64 / (ux as f64 * uy as f64).sqrt();
    let nf = n as f64;
    let mut var = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - vx - vy) / 18.0 + x1 * y1 / (2.0 * nf * (nf - 1.0));
    if n > 2 {
        var += x2 * y2 / (9.0 * nf * (nf - 1.0) * (nf - 2.0));
    }
    let p_value = if var > 0.0 {
        let z = (s as f64 / var.sqrt()).abs();
        let normal = Normal::standard();
        (2.0 * (1.0 - normal.cdf(z))).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Some(KendallTau { tau, p_value })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KendallResult {
    /// `(τ + 1) / 2`.
    pub score: f64,
    pub tau: f64,
    /// Normal approximation; indicative only for heavily tied inputs.
    pub p_value: f64,
    pub real: CorrelationMatrix,
    pub gen: CorrelationMatrix,
}

/// Rank agreement between the upper triangles of the real and generated
/// Pearson matrices over every continuous feature.
pub fn kendall_score(real: &Dataset, gen: &Dataset) -> Result<KendallResult, MetricsError> {
    same_continuous_schema(real, gen)?;
    let names = real.schema().continuous_names();
    if names.len() < 2 {
        return Err(MetricsError::Shape(format!("{} continuous features, at least 2 needed", names.len())));
    }
    let rc = correlation_matrix(real, &names)?;
    let gc = correlation_matrix(gen, &names)?;
    let kt = kendall_tau_b(&rc.upper_triangle(), &gc.upper_triangle()).ok_or_else(|| {
        MetricsError::Degenerate("every correlation entry is tied, so the rank correlation is undefined".into())
    })?;
    Ok(KendallResult { score: ((kt.tau + 1.0) / 2.0).clamp(0.0, 1.0), tau: kt.tau, p_value: kt.p_value, real: rc, gen: gc })
}
