//! Federated descriptive statistics.

pub mod correlation;
pub mod moments;
pub mod quantile;
pub mod scatter;
pub mod tableone;

use serde::{Deserialize, Serialize};

use crate::cohort::{CohortError, CohortTable, ColumnKind, Value};

pub use correlation::{federated_correlation, local_crossproducts, CorrelationAccumulator, CorrelationMatrix, CorrelationResult};
pub use moments::{local_moments, merge_moments, MomentAggregate};
pub use quantile::{federated_quantiles, HistogramBlocks};
pub use scatter::{federated_binned_scatter, GridCell, HistogramGrid, ScatterResult};
pub use tableone::{federated_boxplot_stats, federated_tableone, BoxplotResult, FiveNumber, TableOneRow};

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
pub enum StatsError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("column `{0}` is not numeric or date")]
    NonNumericColumn(String),
    #[error("cannot merge aggregates of `{0}` and `{1}`")]
    ColumnMismatch(String, String),
    #[error("column `{0}` has zero variance")]
    DegenerateVariance(String),
    #[error("column `{0}` has no observations")]
    NoData(String),
}

impl From<CohortError> for StatsError {
    fn from(e: CohortError) -> Self {
        match e {
            CohortError::MissingColumn(c) => StatsError::MissingColumn(c),
            other => StatsError::NonNumericColumn(other.to_string()),
        }
    }
}

/// Values of a numeric or date column; dates become days since 1970-01-01.
pub(crate) fn numeric_column(table: &CohortTable, name: &str) -> Result<Vec<Option<f64>>, StatsError> {
    let spec = table.column_spec(name)?;
    match spec.kind {
        ColumnKind::Numeric | ColumnKind::Date => {}
        _ => return Err(StatsError::NonNumericColumn(name.to_string())),
    }
    Ok(table
        .column(name)?
        .map(|v| match v {
            Value::Number(x) => Some(*x),
            Value::Date(d) => Some(d.days_since_epoch() as f64),
            _ => None,
        })
        .collect())
}

/// Rows where every requested column is present, as one vector per row.
pub(crate) fn complete_cases(table: &CohortTable, columns: &[String]) -> Result<Vec<Vec<f64>>, StatsError> {
    let cols = columns.iter().map(|c| numeric_column(table, c)).collect::<Result<Vec<_>, _>>()?;
    Ok((0..table.n_rows()).filter_map(|r| cols.iter().map(|c| c[r]).collect::<Option<Vec<f64>>>()).collect())
}
