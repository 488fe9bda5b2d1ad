use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::{ColumnKind, TableSchema};
use super::DataError;

/// Rows in physical units. Continuous cells are stored row-major
/// (`rows × d`), categorical cells as class indices (`rows × N`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: TableSchema,
    continuous: Vec<f64>,
    categorical: Vec<u32>,
    rows: usize,
}

/// An out-of-range continuous cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeViolation {
    pub row: usize,
    pub column: String,
    pub value: f64,
    pub violation: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<RangeViolation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    /// One JSON object per line.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), DataError> {
        let io = |e| DataError::Io(path.display().to_string(), e);
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        for v in &self.violations {
            let line = serde_json::to_string(v).expect("violation serializes");
            writeln!(f, "{line}").map_err(io)?;
        }
        f.flush().map_err(io)
    }
}

impl Dataset {
    pub fn new(
        schema: TableSchema,
        continuous: Vec<f64>,
        categorical: Vec<u32>,
        rows: usize,
    ) -> Result<Self, DataError> {
        let d = schema.continuous_count();
        let counts = schema.class_counts();
        if continuous.len() != rows * d || categorical.len() != rows * counts.len() {
            return Err(DataError::Shape(format!(
                "{rows} rows need {} continuous and {} categorical cells, got {} and {}",
                rows * d,
                rows * counts.len(),
                continuous.len(),
                categorical.len()
            )));
        }
        if !counts.is_empty() {
            for (i, row) in categorical.chunks(counts.len()).enumerate() {
                for (j, (&c, &k)) in row.iter().zip(&counts).enumerate() {
                    if c as usize >= k {
                        let name = schema.categorical().nth(j).map(|c| c.name.clone()).unwrap_or_default();
                        return Err(DataError::UnknownCategory { row: i + 1, column: name, value: c.to_string() });
                    }
                }
            }
        }
        Ok(Self { schema, continuous, categorical, rows })
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn continuous_values(&self) -> &[f64] {
        &self.continuous
    }

    pub fn categorical_values(&self) -> &[u32] {
        &self.categorical
    }

    pub fn continuous_row(&self, i: usize) -> &[f64] {
        let d = self.schema.continuous_count();
        &self.continuous[i * d..(i + 1) * d]
    }

    pub fn categorical_row(&self, i: usize) -> &[u32] {
        let n = self.schema.class_counts().len();
        &self.categorical[i * n..(i + 1) * n]
    }

    /// Values of continuous column `j` (index among continuous columns).
    pub fn continuous_column(&self, j: usize) -> Vec<f64> {
        let d = self.schema.continuous_count();
        self.continuous.iter().skip(j).step_by(d.max(1)).copied().take(self.rows).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Result<Vec<f64>, DataError> {
        let j = self.schema.continuous_index(name).ok_or_else(|| DataError::MissingColumn(name.into()))?;
        Ok(self.continuous_column(j))
    }

    /// Class indices of categorical column `j`.
    pub fn categorical_column(&self, j: usize) -> Vec<u32> {
        let n = self.schema.class_counts().len();
        self.categorical.iter().skip(j).step_by(n.max(1)).copied().take(self.rows).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        let d = self.schema.continuous_count();
        let n = self.schema.class_counts().len();
        let mut cont = Vec::with_capacity(idx.len() * d);
        let mut cat = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            cont.extend_from_slice(self.continuous_row(i));
            cat.extend_from_slice(self.categorical_row(i));
        }
        Dataset { schema: self.schema.clone(), continuous: cont, categorical: cat, rows: idx.len() }
    }

    pub fn filter_rows(&self, keep: impl Fn(usize) -> bool) -> Dataset {
        let idx: Vec<usize> = (0..self.rows).filter(|&i| keep(i)).collect();
        self.select_rows(&idx)
    }

    /// Rows whose categorical column `column` holds class `class`.
    pub fn rows_with_class(&self, column: &str, class: &str) -> Result<Dataset, DataError> {
        let j = self.schema.categorical_index(column).ok_or_else(|| DataError::MissingColumn(column.into()))?;
        let classes = self.schema.column(column).and_then(|c| c.classes()).unwrap_or(&[]);
        let k = classes.iter().position(|c| c == class).ok_or_else(|| DataError::UnknownCategory {
            row: 0,
            column: column.into(),
            value: class.into(),
        })? as u32;
        let n = self.schema.class_counts().len();
        Ok(self.filter_rows(|i| self.categorical[i * n + j] == k))
    }

    pub fn range_report(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let specs: Vec<_> = self.schema.continuous().collect();
        for i in 0..self.rows {
            for (spec, &v) in specs.iter().zip(self.continuous_row(i)) {
                let (lo, hi) = spec.range().expect("continuous column");
                let violation = if v < lo {
                    "below_range"
                } else if v > hi {
                    "above_range"
                } else {
                    continue;
                };
                violations.push(RangeViolation {
                    row: i + 1,
                    column: spec.name.clone(),
                    value: v,
                    violation: violation.into(),
                });
            }
        }
        ValidationReport { violations }
    }

    /// Reads a CSV whose header names the schema columns in any order.
    /// Out-of-range values land in the report, or fail the load when
    /// `strict` is set.
    pub fn load_csv(schema: &TableSchema, path: &Path, strict: bool) -> Result<(Dataset, ValidationReport), DataError> {
        let file = std::fs::File::open(path).map_err(|e| DataError::Io(path.display().to_string(), e))?;
        Self::read_csv(schema, file, strict)
    }

    pub fn read_csv<R: std::io::Read>(
        schema: &TableSchema,
        reader: R,
        strict: bool,
    ) -> Result<(Dataset, ValidationReport), DataError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
        let mut records = rdr.records();
        let header = match records.next() {
            None => return Err(DataError::EmptyFile),
            Some(r) => r.map_err(|e| DataError::Csv(e.to_string()))?,
        };
        let mut position: HashMap<&str, usize> = HashMap::new();
        for (i, name) in header.iter().enumerate() {
            let name = name.trim();
            if schema.column(name).is_none() {
                return Err(DataError::UnknownColumn(name.into()));
            }
            if position.insert(schema.column(name).unwrap().name.as_str(), i).is_some() {
                return Err(DataError::DuplicateColumn(name.into()));
            }
        }
        for c in &schema.columns {
            if !position.contains_key(c.name.as_str()) {
                return Err(DataError::MissingColumn(c.name.clone()));
            }
        }
        let cont_pos: Vec<usize> = schema.continuous().map(|c| position[c.name.as_str()]).collect();
        let cat_cols: Vec<(usize, &[String], &str)> = schema
            .categorical()
            .map(|c| (position[c.name.as_str()], c.classes().unwrap(), c.name.as_str()))
            .collect();
        let cont_names: Vec<&str> = schema.continuous().map(|c| c.name.as_str()).collect();

        let mut continuous = Vec::new();
        let mut categorical = Vec::new();
        let mut rows = 0;
        for (r, rec) in records.enumerate() {
            let rec = rec.map_err(|e| DataError::Csv(e.to_string()))?;
            let row = r + 1;
            if rec.len() != header.len() {
                return Err(DataError::Parse {
                    row,
                    column: "*".into(),
                    value: format!("{} fields, expected {}", rec.len(), header.len()),
                });
            }
            for (&p, name) in cont_pos.iter().zip(&cont_names) {
                let cell = rec[p].trim();
                let v: f64 = cell.parse().map_err(|_| DataError::Parse {
                    row,
                    column: (*name).into(),
                    value: cell.into(),
                })?;
                if !v.is_finite() {
                    return Err(DataError::Parse { row, column: (*name).into(), value: cell.into() });
                }
                continuous.push(v);
            }
            for &(p, classes, name) in &cat_cols {
                let cell = rec[p].trim();
                let k = classes.iter().position(|c| c == cell).ok_or_else(|| DataError::UnknownCategory {
                    row,
                    column: name.into(),
                    value: cell.into(),
                })?;
                categorical.push(k as u32);
            }
            rows += 1;
        }
        let ds = Dataset::new(schema.clone(), continuous, categorical, rows)?;
        let report = ds.range_report();
        if strict {
            if let Some(v) = report.violations.first() {
                return Err(DataError::OutOfRange { row: v.row, column: v.column.clone(), value: v.value });
            }
        }
        Ok((ds, report))
    }

    /// Writes the header and rows in schema column order. Floats use the
    /// shortest representation that parses back to the same value.
    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let io = |e| DataError::Io(path.display().to_string(), e);
        let file = std::fs::File::create(path).map_err(io)?;
        self.write_csv_to(std::io::BufWriter::new(file)).map_err(io)
    }

    pub fn write_csv_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let names: Vec<&str> = self.schema.columns.iter().map(|c| c.name.as_str()).collect();
        writeln!(w, "{}", names.join(","))?;
        let d = self.schema.continuous_count();
        let n = self.schema.class_counts().len();
        let mut line = String::new();
        for i in 0..self.rows {
            line.clear();
            let (mut ci, mut ki) = (0, 0);
            for (c, spec) in self.schema.columns.iter().enumerate() {
                if c > 0 {
                    line.push(',');
                }
                match &spec.kind {
                    ColumnKind::Continuous { .. } => {
                        use std::fmt::Write as _;
                        write!(line, "{}", self.continuous[i * d + ci]).unwrap();
                        ci += 1;
                    }
                    ColumnKind::Categorical { classes } => {
                        line.push_str(&classes[self.categorical[i * n + ki] as usize]);
                        ki += 1;
                    }
                }
            }
            writeln!(w, "{line}")?;
        }
        w.flush()
    }
}
