use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::data::Dataset;

/// Mass levels drawn as contours in the off-diagonal panels.
pub const LEVELS: [f64; 2] = [0.68, 0.95];

/// Marginal histogram of one feature over shared edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram1d {
    pub feature: String,
    pub edges: Vec<f64>,
    pub real: Vec<f64>,
    pub gen: Vec<f64>,
}

/// Joint histogram of a feature pair, row-major over (x bin, y bin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2d {
    pub x: String,
    pub y: String,
    pub real: Vec<f64>,
    pub gen: Vec<f64>,
    /// Cell-mass thresholds for each of `LEVELS`, real then generated.
    pub real_levels: Vec<f64>,
    pub gen_levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleData {
    pub bins: usize,
    pub diagonal: Vec<Histogram1d>,
    pub pairs: Vec<Histogram2d>,
}

/// Equal-width edges spanning both samples.
pub fn shared_edges(a: &[f64], b: &[f64], bins: usize) -> Vec<f64> {
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect()
}

fn bin_index(edges: &[f64], v: f64) -> usize {
    let bins = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[bins]);
    (((v - lo) / (hi - lo) * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

/// Normalized histogram; every value lands in a bin.
pub fn histogram(values: &[f64], edges: &[f64]) -> Vec<f64> {
    let mut h = vec![0.0; edges.len() - 1];
    for &v in values {
        h[bin_index(edges, v)] += 1.0;
    }
    let n = values.len().max(1) as f64;
    h.iter_mut().for_each(|c| *c /= n);
    h
}

pub fn histogram_2d(x: &[f64], y: &[f64], ex: &[f64], ey: &[f64]) -> Vec<f64> {
    let by = ey.len() - 1;
    let mut h = vec![0.0; (ex.len() - 1) * by];
    for (&u, &v) in x.iter().zip(y) {
        h[bin_index(ex, u) * by + bin_index(ey, v)] += 1.0;
    }
    let n = x.len().max(1) as f64;
    h.iter_mut().for_each(|c| *c /= n);
    h
}

/// Smallest cell mass `t` such that the cells with mass `≥ t` together
/// hold at least `level` of the total: the iso-density contour enclosing
/// that share.
pub fn mass_threshold(cells: &[f64], level: f64) -> f64 {
    let mut sorted = cells.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sorted.iter().sum();
    let mut acc = 0.0;
    for &m in &sorted {
        acc += m;
        if acc >= level * total {
            return m;
        }
    }
    sorted.last().copied().unwrap_or(0.0)
}

pub fn triangle_export(real: &Dataset, gen: &Dataset, features: &[String], bins: usize) -> Result<TriangleData, MetricsError> {
    if features.len() < 2 {
        return Err(MetricsError::Shape(format!("{} features, at least 2 needed", features.len())));
    }
    if bins == 0 {
        return Err(MetricsError::Shape("zero histogram bins".into()));
    }
    let col = |ds: &Dataset, f: &String| ds.column_by_name(f).map_err(|_| MetricsError::MissingColumn(f.clone()));
    let rc = features.iter().map(|f| col(real, f)).collect::<Result<Vec<_>, _>>()?;
    let gc = features.iter().map(|f| col(gen, f)).collect::<Result<Vec<_>, _>>()?;
    let edges: Vec<Vec<f64>> = rc.iter().zip(&gc).map(|(r, g)| shared_edges(r, g, bins)).collect();
    let diagonal = features
        .iter()
        .enumerate()
        .map(|(i, f)| Histogram1d {
            feature: f.clone(),
            edges: edges[i].clone(),
            real: histogram(&rc[i], &edges[i]),
            gen: histogram(&gc[i], &edges[i]),
        })
        .collect();
    let mut pairs = Vec::new();
    for i in 0..features.len() {
        for j in i + 1..features.len() {
            let real = histogram_2d(&rc[i], &rc[j], &edges[i], &edges[j]);
            let gen = histogram_2d(&gc[i], &gc[j], &edges[i], &edges[j]);
            pairs.push(Histogram2d {
                x: features[i].clone(),
                y: features[j].clone(),
                real_levels: LEVELS.iter().map(|&l| mass_threshold(&real, l)).collect(),
                gen_levels: LEVELS.iter().map(|&l| mass_threshold(&gen, l)).collect(),
                real,
                gen,
            });
        }
    }
    Ok(TriangleData { bins, diagonal, pairs })
}

impl TriangleData {
    /// Writes `triangle_1d.csv`, `triangle_2d.csv` and `triangle_levels.csv`.
    pub fn write_csv(&self, dir: &Path) -> Result<(), MetricsError> {
        let open = |name: &str| -> Result<(std::io::BufWriter<std::fs::File>, String), MetricsError> {
            let p = dir.join(name);
            let f = std::fs::File::create(&p).map_err(|e| MetricsError::Io(p.display().to_string(), e))?;
            Ok((std::io::BufWriter::new(f), p.display().to_string()))
        };
        let edges_of = |name: &str| &self.diagonal.iter().find(|h| h.feature == name).expect("pair feature has a marginal").edges;

        let (mut w, p) = open("triangle_1d.csv")?;
        let io = |e| MetricsError::Io(p.clone(), e);
        writeln!(w, "feature,bin,lo,hi,real,gen").map_err(io)?;
        for h in &self.diagonal {
            for b in 0..h.real.len() {
                writeln!(w, "{},{b},{},{},{},{}", h.feature, h.edges[b], h.edges[b + 1], h.real[b], h.gen[b]).map_err(io)?;
            }
        }
        w.flush().map_err(io)?;

        let (mut w, p) = open("triangle_2d.csv")?;
        let io = |e| MetricsError::Io(p.clone(), e);
        writeln!(w, "x,y,bx,by,x_lo,x_hi,y_lo,y_hi,real,gen").map_err(io)?;
        for h in &self.pairs {
            let (ex, ey) = (edges_of(&h.x), edges_of(&h.y));
            let by = ey.len() - 1;
            for (c, (r, g)) in h.real.iter().zip(&h.gen).enumerate() {
                let (bx, byi) = (c / by, c % by);
                writeln!(w, "{},{},{bx},{byi},{},{},{},{},{r},{g}", h.x, h.y, ex[bx], ex[bx + 1], ey[byi], ey[byi + 1])
                    .map_err(io)?;
            }
        }
        w.flush().map_err(io)?;

        let (mut w, p) = open("triangle_levels.csv")?;
        let io = |e| MetricsError::Io(p.clone(), e);
        writeln!(w, "x,y,dataset,level,threshold").map_err(io)?;
        for h in &self.pairs {
            for (which, th) in [("real", &h.real_levels), ("gen", &h.gen_levels)] {
                for (l, t) in LEVELS.iter().zip(th) {
                    writeln!(w, "{},{},{which},{l},{t}", h.x, h.y).map_err(io)?;
                }
            }
        }
        w.flush().map_err(io)
    }
}
