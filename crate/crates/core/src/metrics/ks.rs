use serde::{Deserialize, Serialize};

use super::{same_continuous_schema, MetricsError};
use crate::data::Dataset;

/// KS score plus the D statistic of every continuous feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub score: f64,
    pub per_feature: Vec<(String, f64)>,
}

/// Two-sample KS statistic `sup |F_a − F_b|`.
///
/// Both empirical CDFs are step functions that only jump at sample
/// points, so walking the merged sorted samples and evaluating after each
/// run of equal values gives the exact supremum.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "KS statistic of an empty sample");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// `min over features of (1 − D)`; the minimum exposes the worst feature
/// rather than averaging it away.
pub fn ks_score(real: &Dataset, gen: &Dataset) -> Result<KsResult, MetricsError> {
    same_continuous_schema(real, gen)?;
    if real.is_empty() || gen.is_empty() {
        return Err(MetricsError::Empty);
    }
    let names = real.schema().continuous_names();
    if names.is_empty() {
        return Err(MetricsError::Empty);
    }
    let per_feature: Vec<(String, f64)> = names
        .into_iter()
        .enumerate()
        .map(|(j, name)| (name, ks_statistic(&real.continuous_column(j), &gen.continuous_column(j))))
        .collect();
    let score = per_feature.iter().map(|(_, d)| 1.0 - d).fold(1.0, f64::min);
    Ok(KsResult { score, per_feature })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_replaced_point() {
        assert_eq!(ks_statistic(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 5.0]), 0.25);
    }

    #[test]
    fn disjoint_and_identical() {
        assert_eq!(ks_statistic(&[0.0], &[1.0]), 1.0);
        assert_eq!(ks_statistic(&[3.0, 1.0, 2.0], &[1.0, 2.0, 3.0]), 0.0);
    }

    #[test]
    fn ties_across_samples() {
        // F_a(1) = 2/3, F_b(1) = 1/3
        let d = ks_statistic(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]);
        assert!((d - 1.0 / 3.0).abs() < 1e-15);
    }
}
