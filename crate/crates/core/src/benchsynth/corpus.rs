use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::{polarization_model, PolarizationParams};
use super::BenchError;
use crate::data::{Dataset, TableSchema, STEP_POLARIZATION, STEP_STABILIZATION};

pub const FARADAY: f64 = 96_485.0;
/// Normal-litres per mole.
pub const MOLAR_VOLUME: f64 = 22.414;
pub const OXYGEN_FRACTION: f64 = 0.21;

/// Standard deviations of the Gaussian measurement noise on each channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Load current, A.
    pub current: f64,
    /// All temperatures, °C.
    pub temperature: f64,
    /// Both pressures, mbar.
    pub pressure: f64,
    /// Gas flows, relative to the reading.
    pub flow_relative: f64,
    /// Relative humidities, %.
    pub humidity: f64,
    /// Coolant flow, l/min.
    pub coolant_flow: f64,
    /// Per-reading cell voltage noise, V.
    pub cell_voltage: f64,
    /// Spread of the fixed per-cell voltage offsets, V.
    pub cell_spread: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            current: 0.2,
            temperature: 0.2,
            pressure: 2.0,
            flow_relative: 0.005,
            humidity: 0.3,
            coolant_flow: 0.02,
            cell_voltage: 0.002,
            cell_spread: 0.004,
        }
    }
}

impl NoiseConfig {
    pub fn zero() -> Self {
        Self {
            current: 0.0,
            temperature: 0.0,
            pressure: 0.0,
            flow_relative: 0.0,
            humidity: 0.0,
            coolant_flow: 0.0,
            cell_voltage: 0.0,
            cell_spread: 0.0,
        }
    }

    fn fields(&self) -> [(&'static str, f64); 8] {
        [
            ("current", self.current),
            ("temperature", self.temperature),
            ("pressure", self.pressure),
            ("flow_relative", self.flow_relative),
            ("humidity", self.humidity),
            ("coolant_flow", self.coolant_flow),
            ("cell_voltage", self.cell_voltage),
            ("cell_spread", self.cell_spread),
        ]
    }
}

/// Nominal operating schedule. Temperatures, pressures and coolant flow
/// rise linearly with the load current; each day shifts them slightly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SetPoints {
    pub t_out_base: f64,
    pub t_out_per_amp: f64,
    /// Hydrogen and air inlet temperatures relative to the coolant outlet.
    pub t_h2_offset: f64,
    pub t_air_offset: f64,
    pub p_air_base: f64,
    pub p_air_per_amp: f64,
    /// Hydrogen inlet pressure above the air inlet pressure.
    pub p_h2_offset: f64,
    pub rh_air: f64,
    pub rh_h2: f64,
    pub coolant_base: f64,
    pub coolant_per_amp: f64,
    /// Standard deviations of the per-day shifts of temperature, pressure
    /// and humidity set-points.
    pub day_temperature: f64,
    pub day_pressure: f64,
    pub day_humidity: f64,
}

impl Default for SetPoints {
    fn default() -> Self {
        Self {
            t_out_base: 65.0,
            t_out_per_amp: 0.05,
            t_h2_offset: -5.0,
            t_air_offset: -3.0,
            p_air_base: 500.0,
            p_air_per_amp: 1.0,
            p_h2_offset: 50.0,
            rh_air: 50.0,
            rh_h2: 50.0,
            coolant_base: 2.0,
            coolant_per_amp: 0.03,
            day_temperature: 1.0,
            day_pressure: 10.0,
            day_humidity: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub cells: usize,
    /// Active area, cm².
    pub active_area: f64,
    pub polarization: PolarizationParams,
    pub lambda_h2: f64,
    pub lambda_air: f64,
    pub noise: NoiseConfig,
    pub set_points: SetPoints,
    /// Share of rows recorded during stabilization.
    pub stabilization_fraction: f64,
    pub days: usize,
    pub rows: usize,
    pub seed: u64,
    /// Top of each polarization sweep, A.
    pub max_current: f64,
    /// Stabilization current, A, and its spread.
    pub nominal_current: f64,
    pub nominal_spread: f64,
    /// Readings per polarization sweep.
    pub sweep_points: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            cells: 40,
            active_area: 220.0,
            polarization: PolarizationParams::default(),
            lambda_h2: 1.2,
            lambda_air: 2.0,
            noise: NoiseConfig::default(),
            set_points: SetPoints::default(),
            stabilization_fraction: 0.2,
            days: 5,
            rows: 30_901,
            seed: 0,
            max_current: 200.0,
            nominal_current: 110.0,
            nominal_spread: 1.5,
            sweep_points: 400,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        self.polarization.validate().map_err(BenchError::Config)?;
        for (name, v) in [
            ("active_area", self.active_area),
            ("lambda_h2", self.lambda_h2),
            ("lambda_air", self.lambda_air),
            ("max_current", self.max_current),
            ("nominal_current", self.nominal_current),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be positive"));
            }
        }
        if let Some((name, v)) = self.noise.fields().into_iter().find(|(_, v)| !(*v >= 0.0 && v.is_finite())) {
            return bad(format!("noise level {name} = {v} must be non-negative"));
        }
        if !(self.nominal_spread >= 0.0) {
            return bad(format!("nominal_spread = {} must be non-negative", self.nominal_spread));
        }
        if !(self.stabilization_fraction > 0.0 && self.stabilization_fraction < 1.0) {
            return bad(format!("stabilization fraction {} outside (0, 1)", self.stabilization_fraction));
        }
        if self.cells == 0 || self.days == 0 {
            return bad("cell and day counts must be at least 1".into());
        }
        if self.rows < 100 {
            return bad(format!("{} rows requested, at least 100 needed", self.rows));
        }
        if self.sweep_points < 2 {
            return bad("a sweep needs at least 2 points".into());
        }
        Ok(())
    }

    pub fn schema(&self) -> TableSchema {
        TableSchema::fuel_cell_with(self.cells, self.days)
    }

    /// `(stabilization, polarization)` row counts.
    pub fn step_counts(&self) -> (usize, usize) {
        let s = (self.stabilization_fraction * self.rows as f64).round() as usize;
        (s, self.rows - s)
    }
}

/// Stack hydrogen consumption at `current` amperes, Nl/min, times the
/// stoichiometry.
pub fn hydrogen_flow(current: f64, cells: usize, lambda: f64) -> f64 {
    cells as f64 * current * 60.0 * MOLAR_VOLUME / (2.0 * FARADAY) * lambda
}

/// Air flow delivering `lambda` times the oxygen consumed, Nl/min.
pub fn air_flow(current: f64, cells: usize, lambda: f64) -> f64 {
    cells as f64 * current * 60.0 * MOLAR_VOLUME / (4.0 * FARADAY) / OXYGEN_FRACTION * lambda
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayShift {
    pub temperature: f64,
    pub pressure: f64,
    pub humidity_air: f64,
    pub humidity_h2: f64,
}

/// Hidden parameters behind a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: BenchConfig,
    /// Fixed voltage offset of each cell, V.
    pub cell_offsets: Vec<f64>,
    pub day_shifts: Vec<DayShift>,
    pub stabilization_rows: usize,
    pub polarization_rows: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

impl SyntheticCorpus {
    pub fn write(&self, csv: &Path, truth_json: &Path) -> Result<(), BenchError> {
        self.dataset.write_csv(csv)?;
        let json = serde_json::to_string_pretty(&self.truth).expect("ground truth serializes");
        std::fs::write(truth_json, json).map_err(|e| BenchError::Io(truth_json.display().to_string(), e))
    }
}

/// Splits `total` into `parts` near-equal shares, larger ones first.
fn split(total: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|p| total / parts + usize::from(p < total % parts)).collect()
}

pub fn synth_corpus(cfg: &BenchConfig) -> Result<SyntheticCorpus, BenchError> {
    cfg.validate()?;
    let schema = cfg.schema();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut normal = move |sd: f64| -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        sd * z
    };
    let cell_offsets: Vec<f64> = (0..cfg.cells).map(|_| normal(cfg.noise.cell_spread)).collect();
    let sp = &cfg.set_points;
    let day_shifts: Vec<DayShift> = (0..cfg.days)
        .map(|_| DayShift {
            temperature: normal(sp.day_temperature),
            pressure: normal(sp.day_pressure),
            humidity_air: normal(sp.day_humidity),
            humidity_h2: normal(sp.day_humidity),
        })
        .collect();
    let (n_stab, n_pol) = cfg.step_counts();
    let stab_days = split(n_stab, cfg.days);
    let pol_days = split(n_pol, cfg.days);
    let d = schema.continuous_count();
    let step_class = |name: &str| {
        schema.column(crate::data::STEP).and_then(|c| c.classes()).and_then(|cs| cs.iter().position(|c| c == name))
    };
    let stab_class = step_class(STEP_STABILIZATION).expect("step column") as u32;
    let pol_class = step_class(STEP_POLARIZATION).expect("step column") as u32;
    let mut cont = Vec::with_capacity(cfg.rows * d);
    let mut cat = Vec::with_capacity(cfg.rows * 2);
    let nz = &cfg.noise;
    for (day, shift) in day_shifts.iter().enumerate() {
        let currents = (0..stab_days[day])
            .map(|_| (cfg.nominal_current + normal(cfg.nominal_spread)).clamp(0.0, cfg.max_current))
            .map(|i| (i, stab_class))
            .collect::<Vec<_>>()
            .into_iter()
            .chain((0..pol_days[day]).map(|k| {
                // short days still sweep the full range
                let len = cfg.sweep_points.min(pol_days[day]).max(2);
                let pos = k % len;
                (cfg.max_current * pos as f64 / (len - 1) as f64, pol_class)
            }));
        for (current, step) in currents {
            let t_out = sp.t_out_base + sp.t_out_per_amp * current + shift.temperature;
            let p_air = sp.p_air_base + sp.p_air_per_amp * current + shift.pressure;
            let q_h2 = hydrogen_flow(current, cfg.cells, cfg.lambda_h2);
            let q_air = air_flow(current, cfg.cells, cfg.lambda_air);
            let mut row = vec![
                t_out + normal(nz.temperature),
                t_out + sp.t_h2_offset + normal(nz.temperature),
                t_out + sp.t_air_offset + normal(nz.temperature),
                p_air + normal(nz.pressure),
                p_air + sp.p_h2_offset + normal(nz.pressure),
                q_air * (1.0 + normal(nz.flow_relative)),
                q_h2 * (1.0 + normal(nz.flow_relative)),
                sp.rh_air + shift.humidity_air + normal(nz.humidity),
                sp.rh_h2 + shift.humidity_h2 + normal(nz.humidity),
                sp.coolant_base + sp.coolant_per_amp * current + normal(nz.coolant_flow),
                0.0,
                (current + normal(nz.current)).clamp(0.0, cfg.max_current),
            ];
            let v = polarization_model(current / cfg.active_area, &cfg.polarization);
            // readings saturate at the instrument range
            let cells: Vec<f64> =
                cell_offsets.iter().map(|off| (v + off + normal(nz.cell_voltage)).clamp(0.0, 1.0)).collect();
            row[10] = cells.iter().sum();
            row.extend(cells);
            cont.extend(row);
            cat.push(day as u32);
            cat.push(step);
        }
    }
    let dataset = Dataset::new(schema, cont, cat, cfg.rows)?;
    if let Some(v) = dataset.range_report().violations.into_iter().next() {
        return Err(BenchError::OutOfRange { channel: v.column, row: v.row, value: v.value });
    }
    Ok(SyntheticCorpus {
        dataset,
        truth: GroundTruth { config: cfg.clone(), cell_offsets, day_shifts, stabilization_rows: n_stab, polarization_rows: n_pol },
    })
}
