use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::autodiff::Tensor;
use crate::data::Encoder;
use crate::networks::{critic_score, CriticNet};

pub const DEFAULT_NEIGHBOURS: usize = 20;
/// Scores outside `(−CROP, CROP)` are treated as outliers in the summary.
pub const CROP: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximitySummary {
    pub mean: f64,
    pub std: f64,
    pub crop_low: f64,
    pub crop_high: f64,
    /// Share of all scored rows inside the crop window.
    pub kept_fraction: f64,
    pub rows: usize,
    /// Rows whose neighbours all received the same critic score.
    pub flagged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityResult {
    /// One entry per generated row; `None` marks a degenerate neighbourhood.
    pub scores: Vec<Option<f64>>,
    pub critic_real: Vec<f64>,
    pub critic_gen: Vec<f64>,
    pub summary: ProximitySummary,
}

/// Position of `s` within the range of the neighbour scores, `None` when
/// that range is empty.
pub fn proximity_score(s: f64, neighbours: &[f64]) -> Option<f64> {
    let lo = neighbours.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = neighbours.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (hi > lo).then(|| (s - lo) / (hi - lo))
}

/// Indices of the `k` rows of `points` (row-major, width `w`) closest to
/// `q` in L2, nearest first; ties go to the lower index.
pub fn k_nearest(points: &[f64], w: usize, q: &[f64], k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = points
        .chunks(w)
        .enumerate()
        .map(|(i, p)| (p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < d.len() {
        d.select_nth_unstable_by(k, cmp);
        d.truncate(k);
    }
    d.sort_by(cmp);
    d.into_iter().map(|(_, i)| i).collect()
}

pub fn summarize(scores: &[Option<f64>]) -> ProximitySummary {
    let kept: Vec<f64> = scores.iter().flatten().copied().filter(|s| s.abs() < CROP).collect();
    let n = kept.len() as f64;
    let mean = if kept.is_empty() { f64::NAN } else { kept.iter().sum::<f64>() / n };
    let std = if kept.is_empty() { f64::NAN } else { (kept.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n).sqrt() };
    ProximitySummary {
        mean,
        std,
        crop_low: -CROP,
        crop_high: CROP,
        kept_fraction: if scores.is_empty() { 0.0 } else { n / scores.len() as f64 },
        rows: scores.len(),
        flagged: scores.iter().filter(|s| s.is_none()).count(),
    }
}

/// Compares the critic score of each generated row with the scores of its
/// `k` nearest real rows, searched over `input_columns` in the encoded
/// (standardized) space.
pub fn proximity_scores(
    crit: &CriticNet,
    encoder: &Encoder,
    gen: &Tensor,
    real: &Tensor,
    input_columns: &[&str],
    k: usize,
) -> Result<ProximityResult, MetricsError> {
    if gen.cols() != encoder.width() || real.cols() != encoder.width() {
        return Err(MetricsError::Shape(format!(
            "encoded width {} expected, got {} (generated) and {} (real)",
            encoder.width(),
            gen.cols(),
            real.cols()
        )));
    }
    if k == 0 || k > real.rows() {
        return Err(MetricsError::Shape(format!("k = {k} with {} real rows", real.rows())));
    }
    let cols = input_columns
        .iter()
        .map(|c| encoder.schema.continuous_index(c).ok_or_else(|| MetricsError::MissingColumn(c.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let project = |t: &Tensor| -> Vec<f64> {
        (0..t.rows()).flat_map(|i| cols.iter().map(move |&j| t.get(i, j))).collect()
    };
    let real_in = project(real);
    let gen_in = project(gen);
    let w = cols.len();
    let critic_real = critic_score(crit, real)?;
    let critic_gen = critic_score(crit, gen)?;
    let scores: Vec<Option<f64>> = gen_in
        .chunks(w.max(1))
        .take(gen.rows())
        .zip(&critic_gen)
        .map(|(q, &s)| {
            let nn: Vec<f64> = k_nearest(&real_in, w.max(1), q, k).into_iter().map(|i| critic_real[i]).collect();
            proximity_score(s, &nn)
        })
        .collect();
    let summary = summarize(&scores);
    Ok(ProximityResult { scores, critic_real, critic_gen, summary })
}
