use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::Dataset;
use super::DataError;

/// Number of rows kept from each stratum so that the total is `⌊f·n⌋`:
/// `⌈f·n_s⌉` per stratum, then one row at a time is trimmed from the
/// currently largest stratum.
pub fn stratum_quotas(sizes: &[usize], fraction: f64) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let target = (fraction * n as f64 + 1e-9).floor() as usize;
    let mut quotas: Vec<usize> =
        sizes.iter().map(|&s| ((fraction * s as f64 - 1e-9).ceil() as usize).min(s)).collect();
    while quotas.iter().sum::<usize>() > target {
        let (largest, _) = quotas.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))).unwrap();
        quotas[largest] -= 1;
    }
    quotas
}

/// Uniform stratified subsample preserving the class mix of `stratify`.
/// Selected rows keep their original relative order.
pub fn subsample(ds: &Dataset, fraction: f64, stratify: &str, seed: u64) -> Result<Dataset, DataError> {
    Ok(ds.select_rows(&subsample_indices(ds, fraction, stratify, seed)?))
}

pub fn subsample_indices(ds: &Dataset, fraction: f64, stratify: &str, seed: u64) -> Result<Vec<usize>, DataError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DataError::Fraction(fraction));
    }
    let j = ds.schema().categorical_index(stratify).ok_or_else(|| DataError::MissingColumn(stratify.into()))?;
    let k = ds.schema().class_counts()[j];
    let labels = ds.categorical_column(j);
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &c) in labels.iter().enumerate() {
        strata[c as usize].push(i);
    }
    let sizes: Vec<usize> = strata.iter().map(Vec::len).collect();
    let quotas = stratum_quotas(&sizes, fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::with_capacity(quotas.iter().sum());
    for (mut members, q) in strata.into_iter().zip(quotas) {
        members.shuffle(&mut rng);
        keep.extend_from_slice(&members[..q]);
    }
    keep.sort_unstable();
    Ok(keep)
}
