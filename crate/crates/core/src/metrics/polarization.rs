use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::data::{Dataset, LOAD_CURRENT, STACK_VOLTAGE, STEP, STEP_POLARIZATION};

/// Means of one one-ampere current bin `[lo, hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizationBin {
    pub lo: f64,
    pub hi: f64,
    pub n_real: usize,
    pub n_gen: usize,
    pub v_real: Option<f64>,
    pub v_gen: Option<f64>,
    pub i_real: Option<f64>,
    pub i_gen: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizationResult {
    /// Mean relative voltage error over commonly populated bins, in %.
    pub e_v: f64,
    /// Same for the current, in %.
    pub e_i: f64,
    /// Number of bins, `max ⌈I⌉` over the real rows.
    pub nc: usize,
    pub bins_used: usize,
    /// Bins left out because one of the datasets has no row there.
    pub bins_excluded: usize,
    /// Generated rows whose current falls outside `[0, nc]`.
    pub gen_out_of_range: usize,
    pub bins: Vec<PolarizationBin>,
}

impl PolarizationResult {
    pub fn write_csv_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        writeln!(w, "lo,hi,n_real,n_gen,v_real,v_gen,i_real,i_gen")?;
        for b in &self.bins {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                b.lo,
                b.hi,
                b.n_real,
                b.n_gen,
                opt(b.v_real),
                opt(b.v_gen),
                opt(b.i_real),
                opt(b.i_gen)
            )?;
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

fn bin_of(i: f64, nc: usize) -> Option<usize> {
    if !(i >= 0.0) || i > nc as f64 {
        return None;
    }
    Some((i.floor() as usize).min(nc - 1))
}

struct Acc {
    n: usize,
    v: f64,
    i: f64,
}

fn accumulate(current: &[f64], voltage: &[f64], nc: usize) -> (Vec<Acc>, usize) {
    let mut acc: Vec<Acc> = (0..nc).map(|_| Acc { n: 0, v: 0.0, i: 0.0 }).collect();
    let mut outside = 0;
    for (&i, &v) in current.iter().zip(voltage) {
        match bin_of(i, nc) {
            Some(b) => {
                acc[b].n += 1;
                acc[b].v += v;
                acc[b].i += i;
            }
            None => outside += 1,
        }
    }
    (acc, outside)
}

fn mean_rel_error(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let errs: Vec<f64> = pairs.filter(|(r, _)| *r != 0.0).map(|(r, g)| ((r - g) / r).abs()).collect();
    100.0 * errs.iter().sum::<f64>() / errs.len().max(1) as f64
}

/// Bins both curves by current and averages the per-bin relative error of
/// the mean voltage (and mean current) over the bins both populate.
pub fn polarization_error_from_columns(
    real_i: &[f64],
    real_v: &[f64],
    gen_i: &[f64],
    gen_v: &[f64],
) -> Result<PolarizationResult, MetricsError> {
    let max_i = real_i.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max_i.is_finite() || max_i < 0.0 {
        return Err(MetricsError::Empty);
    }
    let nc = (max_i.ceil() as usize).max(1);
    let (racc, _) = accumulate(real_i, real_v, nc);
    let (gacc, gen_out_of_range) = accumulate(gen_i, gen_v, nc);
    let mean = |a: &Acc, x: f64| (a.n > 0).then(|| x / a.n as f64);
    let bins: Vec<PolarizationBin> = racc
        .iter()
        .zip(&gacc)
        .enumerate()
        .map(|(j, (r, g))| PolarizationBin {
            lo: j as f64,
            hi: (j + 1) as f64,
            n_real: r.n,
            n_gen: g.n,
            v_real: mean(r, r.v),
            v_gen: mean(g, g.v),
            i_real: mean(r, r.i),
            i_gen: mean(g, g.i),
        })
        .collect();
    let common: Vec<&PolarizationBin> = bins.iter().filter(|b| b.n_real > 0 && b.n_gen > 0).collect();
    if common.is_empty() {
        return Err(MetricsError::NoCommonBins);
    }
    let e_v = mean_rel_error(common.iter().map(|b| (b.v_real.unwrap(), b.v_gen.unwrap())));
    let e_i = mean_rel_error(common.iter().map(|b| (b.i_real.unwrap(), b.i_gen.unwrap())));
    Ok(PolarizationResult {
        e_v,
        e_i,
        nc,
        bins_used: common.len(),
        bins_excluded: nc - common.len(),
        gen_out_of_range,
        bins,
    })
}

/// Keeps polarization-step rows when the schema records the step.
pub fn polarization_rows(ds: &Dataset) -> Result<Dataset, MetricsError> {
    if ds.schema().categorical_index(STEP).is_some() {
        Ok(ds.rows_with_class(STEP, STEP_POLARIZATION)?)
    } else {
        Ok(ds.clone())
    }
}

pub fn polarization_error(real: &Dataset, gen: &Dataset) -> Result<PolarizationResult, MetricsError> {
    let real = polarization_rows(real)?;
    let gen = polarization_rows(gen)?;
    let col = |ds: &Dataset, name: &str| ds.column_by_name(name).map_err(|_| MetricsError::MissingColumn(name.into()));
    polarization_error_from_columns(
        &col(&real, LOAD_CURRENT)?,
        &col(&real, STACK_VOLTAGE)?,
        &col(&gen, LOAD_CURRENT)?,
        &col(&gen, STACK_VOLTAGE)?,
    )
}
