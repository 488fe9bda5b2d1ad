use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::DataError;

/// The ten set-points varied by the experimental design.
pub const EXPERIMENTAL_INPUTS: [&str; 10] = [
    "Tout_cooling_water",
    "Tin_H2",
    "Tin_Air",
    "Pin_Air",
    "Pin_H2",
    "Qin_Air",
    "Qin_H2",
    "RHin_Air",
    "RHin_H2",
    "Q_cooling_water",
];

pub const STACK_VOLTAGE: &str = "V_stack";
pub const LOAD_CURRENT: &str = "I_load";
pub const DAY: &str = "day";
pub const STEP: &str = "step";
pub const STEP_STABILIZATION: &str = "stabilization";
pub const STEP_POLARIZATION: &str = "polarization";
pub const CELL_COUNT: usize = 40;

pub fn cell_column(i: usize) -> String {
    format!("Vcell_{i}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous { range: [f64; 2] },
    Categorical { classes: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(default)]
    pub unit: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn continuous(name: &str, unit: &str, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), unit: unit.into(), kind: ColumnKind::Continuous { range: [lo, hi] } }
    }

    pub fn categorical(name: &str, classes: &[&str]) -> Self {
        Self {
            name: name.into(),
            unit: String::new(),
            kind: ColumnKind::Categorical { classes: classes.iter().map(|c| c.to_string()).collect() },
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, ColumnKind::Continuous { .. })
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        match self.kind {
            ColumnKind::Continuous { range } => Some((range[0], range[1])),
            ColumnKind::Categorical { .. } => None,
        }
    }

    pub fn classes(&self) -> Option<&[String]> {
        match &self.kind {
            ColumnKind::Categorical { classes } => Some(classes),
            ColumnKind::Continuous { .. } => None,
        }
    }
}

/// Ordered column definitions. Continuous columns keep their relative
/// order in the encoded layout, followed by one one-hot block per
/// categorical column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub columns: Vec<ColumnSpec>,
}

impl TableSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self, DataError> {
        let s = Self { columns };
        s.validate()?;
        Ok(s)
    }

    /// Test-bench layout: 10 set-points, stack voltage, load current, 40
    /// cell voltages, then `day` (5 classes) and `step` (2 classes).
    pub fn fuel_cell() -> Self {
        Self::fuel_cell_with(CELL_COUNT, 5)
    }

    /// Same layout for a stack of `cells` cells tested over `days` days.
    pub fn fuel_cell_with(cells: usize, days: usize) -> Self {
        let mut cols = vec![
            ColumnSpec::continuous("Tout_cooling_water", "°C", 25.0, 95.0),
            ColumnSpec::continuous("Tin_H2", "°C", 25.0, 95.0),
            ColumnSpec::continuous("Tin_Air", "°C", 25.0, 95.0),
            ColumnSpec::continuous("Pin_Air", "mbarg", 0.0, 1000.0),
            ColumnSpec::continuous("Pin_H2", "mbarg", 0.0, 1000.0),
            ColumnSpec::continuous("Qin_Air", "Nl/min", 0.0, 300.0),
            ColumnSpec::continuous("Qin_H2", "Nl/min", 0.0, 100.0),
            ColumnSpec::continuous("RHin_Air", "%", 0.0, 100.0),
            ColumnSpec::continuous("RHin_H2", "%", 0.0, 100.0),
            ColumnSpec::continuous("Q_cooling_water", "l/min", 0.0, 15.0),
            ColumnSpec::continuous(STACK_VOLTAGE, "V", 0.0, cells as f64),
            ColumnSpec::continuous(LOAD_CURRENT, "A", 0.0, 200.0),
        ];
        for i in 1..=cells {
            cols.push(ColumnSpec::continuous(&cell_column(i), "V", 0.0, 1.0));
        }
        let day_names: Vec<String> = (1..=days).map(|d| d.to_string()).collect();
        let day_refs: Vec<&str> = day_names.iter().map(String::as_str).collect();
        cols.push(ColumnSpec::categorical(DAY, &day_refs));
        cols.push(ColumnSpec::categorical(STEP, &[STEP_STABILIZATION, STEP_POLARIZATION]));
        Self { columns: cols }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(DataError::InvalidSchema(format!("duplicate column {}", c.name)));
            }
            match &c.kind {
                ColumnKind::Continuous { range } => {
                    if !(range[0] < range[1]) {
                        return Err(DataError::InvalidSchema(format!(
                            "column {} has empty range [{}, {}]",
                            c.name, range[0], range[1]
                        )));
                    }
                }
                ColumnKind::Categorical { classes } => {
                    if classes.is_empty() {
                        return Err(DataError::InvalidSchema(format!("column {} has no classes", c.name)));
                    }
                    let uniq: HashSet<_> = classes.iter().collect();
                    if uniq.len() != classes.len() {
                        return Err(DataError::InvalidSchema(format!("column {} repeats a class", c.name)));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn continuous(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(|c| c.is_continuous())
    }

    pub fn categorical(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(|c| !c.is_continuous())
    }

    pub fn continuous_names(&self) -> Vec<String> {
        self.continuous().map(|c| c.name.clone()).collect()
    }

    pub fn continuous_count(&self) -> usize {
        self.continuous().count()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.categorical().map(|c| c.classes().map_or(0, <[String]>::len)).collect()
    }

    /// `d + Σ kᵢ`.
    pub fn encoded_width(&self) -> usize {
        self.continuous_count() + self.class_counts().iter().sum::<usize>()
    }

    /// Position of a continuous column among the continuous columns.
    pub fn continuous_index(&self, name: &str) -> Option<usize> {
        self.continuous().position(|c| c.name == name)
    }

    /// Position of a categorical column among the categorical columns.
    pub fn categorical_index(&self, name: &str) -> Option<usize> {
        self.categorical().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let s: TableSchema = serde_json::from_str(text).map_err(|e| DataError::InvalidSchema(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::Io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_json()).map_err(|e| DataError::Io(path.display().to_string(), e))
    }

    /// SHA-256 of the compact JSON form.
    pub fn digest(&self) -> [u8; 32] {
        let text = serde_json::to_string(self).expect("schema serializes");
        Sha256::digest(text.as_bytes()).into()
    }
}
