//! Quality metrics comparing a generated dataset with the real one.
//!
//! Every metric is a pure function of its inputs and independent of row
//! order. `evaluate` runs the whole suite and collects a [`MetricsReport`].

mod dimred;
mod kendall;
mod ks;
mod polarization;
mod proximity;
mod triangle;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dimred::{cosine_similarity, dim_red_from_covariances, dim_red_score, DimRedResult, Pca, VARIANCE_TARGET};
pub use kendall::{correlation_matrix, kendall_score, kendall_tau_b, pearson, CorrelationMatrix, KendallResult, KendallTau};
pub use ks::{ks_score, ks_statistic, KsResult};
pub use polarization::{
    polarization_error, polarization_error_from_columns, polarization_rows, PolarizationBin, PolarizationResult,
};
pub use proximity::{
    k_nearest, proximity_score, proximity_scores, summarize, ProximityResult, ProximitySummary, CROP, DEFAULT_NEIGHBOURS,
};
pub use triangle::{
    histogram, histogram_2d, mass_threshold, shared_edges, triangle_export, Histogram1d, Histogram2d, TriangleData, LEVELS,
};

use crate::data::{DataError, Dataset, LOAD_CURRENT, STACK_VOLTAGE};
use crate::networks::NetworkError;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty dataset")]
    Empty,
    #[error("datasets have different continuous columns")]
    SchemaMismatch,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("column `{0}` is constant, its correlation is undefined")]
    ConstantColumn(String),
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("no current bin is populated in both datasets")]
    NoCommonBins,
    #[error("dimension error: {0}")]
    Shape(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

impl PartialEq for MetricsError {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

pub(crate) fn same_continuous_schema(a: &Dataset, b: &Dataset) -> Result<(), MetricsError> {
    if a.schema().continuous_names() != b.schema().continuous_names() {
        return Err(MetricsError::SchemaMismatch);
    }
    Ok(())
}

/// Per-column mean and population standard deviation.
pub(crate) fn column_stats(ds: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let d = ds.schema().continuous_count();
    let n = ds.n_rows() as f64;
    let mut means = vec![0.0; d];
    for row in ds.continuous_values().chunks(d.max(1)) {
        means.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut vars = vec![0.0; d];
    for row in ds.continuous_values().chunks(d.max(1)) {
        vars.iter_mut().zip(row.iter().zip(&means)).for_each(|(s, (v, m))| *s += (v - m) * (v - m));
    }
    (means, vars.into_iter().map(|s| (s / n).sqrt()).collect())
}

/// Summary of one evaluation, serialized as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub real_rows: usize,
    pub gen_rows: usize,
    pub s_ks: f64,
    pub ks_d: Vec<(String, f64)>,
    pub s_dim: f64,
    pub dim_components: usize,
    pub s_kendall: f64,
    pub kendall_tau: f64,
    pub kendall_p_value: f64,
    /// Polarization closeness errors in %, absent when the schema has no
    /// load current or stack voltage.
    pub e_v: Option<f64>,
    pub e_i: Option<f64>,
    pub polarization_bins_used: Option<usize>,
    pub polarization_bins_excluded: Option<usize>,
    pub proximity: Option<ProximitySummary>,
    pub real_correlation: CorrelationMatrix,
    pub gen_correlation: CorrelationMatrix,
    pub notes: Vec<String>,
}

impl MetricsReport {
    /// Checks every score against its declared range.
    pub fn check_ranges(&self) -> Result<(), String> {
        for (name, v) in [("S_ks", self.s_ks), ("S_dim", self.s_dim), ("S_kendall", self.s_kendall)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} outside [0, 1]"));
            }
        }
        for (name, v) in [("e_V", self.e_v), ("e_I", self.e_i)] {
            if let Some(v) = v.filter(|v| !(*v >= 0.0)) {
                return Err(format!("{name} = {v} is negative"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<(), MetricsError> {
        std::fs::write(path, self.to_json()).map_err(|e| MetricsError::Io(path.display().to_string(), e))
    }
}

/// Everything `evaluate` computes, including the per-bin and per-row
/// detail behind the report.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub ks: KsResult,
    pub dim_red: DimRedResult,
    pub kendall: KendallResult,
    pub polarization: Option<PolarizationResult>,
    pub proximity: Option<ProximityResult>,
}

const PROXIMITY_NOTE: &str = "proximity scores are min-max positions within the neighbours' critic \
     scores; 0 and 1 are the neighbourhood extremes, so values near 0 are not by themselves better";
const P_VALUE_NOTE: &str = "Kendall p-value uses the normal approximation with tie-corrected variance";

/// Runs KS, dimension reduction, Kendall and, when the schema allows,
/// the polarization error. Proximity is attached separately because it
/// needs a critic.
pub fn evaluate(real: &Dataset, gen: &Dataset) -> Result<Evaluation, MetricsError> {
    let ks = ks_score(real, gen)?;
    let dim_red = dim_red_score(real, gen)?;
    let kendall = kendall_score(real, gen)?;
    let schema = real.schema();
    let polarization = if schema.continuous_index(LOAD_CURRENT).is_some() && schema.continuous_index(STACK_VOLTAGE).is_some()
    {
        Some(polarization_error(real, gen)?)
    } else {
        None
    };
    let report = MetricsReport {
        real_rows: real.n_rows(),
        gen_rows: gen.n_rows(),
        s_ks: ks.score,
        ks_d: ks.per_feature.clone(),
        s_dim: dim_red.score,
        dim_components: dim_red.components,
        s_kendall: kendall.score,
        kendall_tau: kendall.tau,
        kendall_p_value: kendall.p_value,
        e_v: polarization.as_ref().map(|p| p.e_v),
        e_i: polarization.as_ref().map(|p| p.e_i),
        polarization_bins_used: polarization.as_ref().map(|p| p.bins_used),
        polarization_bins_excluded: polarization.as_ref().map(|p| p.bins_excluded),
        proximity: None,
        real_correlation: kendall.real.clone(),
        gen_correlation: kendall.gen.clone(),
        notes: vec![P_VALUE_NOTE.into()],
    };
    Ok(Evaluation { report, ks, dim_red, kendall, polarization, proximity: None })
}

impl Evaluation {
    pub fn attach_proximity(&mut self, p: ProximityResult) {
        self.report.proximity = Some(p.summary.clone());
        self.report.notes.push(PROXIMITY_NOTE.into());
        self.proximity = Some(p);
    }
}
