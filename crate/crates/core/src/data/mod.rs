//! Table schema, CSV ingestion, standardization / one-hot encoding and
//! stratified subsampling.

mod dataset;
mod encoder;
mod schema;
mod subsample;

use thiserror::Error;

pub use dataset::{Dataset, RangeViolation, ValidationReport};
pub use encoder::{argmax, Encoder};
pub use schema::{
    cell_column, ColumnKind, ColumnSpec, TableSchema, CELL_COUNT, DAY, EXPERIMENTAL_INPUTS, LOAD_CURRENT,
    STACK_VOLTAGE, STEP, STEP_POLARIZATION, STEP_STABILIZATION,
};
pub use subsample::{stratum_quotas, subsample, subsample_indices};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("column `{0}` is not part of the schema")]
    UnknownColumn(String),
    #[error("empty file")]
    EmptyFile,
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    Parse { row: usize, column: String, value: String },
    #[error("row {row}, column `{column}`: unknown category `{value}`")]
    UnknownCategory { row: usize, column: String, value: String },
    #[error("row {row}, column `{column}`: value {value} outside the declared range")]
    OutOfRange { row: usize, column: String, value: f64 },
    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("fraction {0} outside (0, 1]")]
    Fraction(f64),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

impl PartialEq for DataError {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}
