use serde::{Deserialize, Serialize};

use super::{numeric_column, StatsError};
use crate::cohort::CohortTable;

/// Sufficient statistics of one column over its non-missing cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentAggregate {
    pub column: String,
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
    /// `None` when `n == 0`.
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl MomentAggregate {
    pub fn empty(column: impl Into<String>) -> Self {
        MomentAggregate { column: column.into(), n: 0, sum: 0.0, sum_sq: 0.0, min: None, max: None }
    }

    pub fn from_values(column: impl Into<String>, values: impl IntoIterator<Item = f64>) -> Self {
        let mut m = MomentAggregate::empty(column);
        for x in values {
            m.n += 1;
            m.sum += x;
            m.sum_sq += x * x;
            m.min = Some(m.min.map_or(x, |v| v.min(x)));
            m.max = Some(m.max.map_or(x, |v| v.max(x)));
        }
        m
    }

    pub fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }

    /// Sample variance with the n-1 denominator; clamped at zero against rounding.
    pub fn variance(&self) -> Option<f64> {
        if self.n < 2 {
            return None;
        }
        let n = self.n as f64;
        Some(((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0))
    }

    pub fn sd(&self) -> Option<f64> {
        self.variance().map(f64::sqrt)
    }
}

pub fn local_moments(table: &CohortTable, columns: &[String]) -> Result<Vec<MomentAggregate>, StatsError> {
    columns.iter().map(|c| Ok(MomentAggregate::from_values(c.clone(), numeric_column(table, c)?.into_iter().flatten()))).collect()
}

pub fn merge_moments(a: &MomentAggregate, b: &MomentAggregate) -> Result<MomentAggregate, StatsError> {
    if a.column != b.column {
        return Err(StatsError::ColumnMismatch(a.column.clone(), b.column.clone()));
    }
    let pick = |x: Option<f64>, y: Option<f64>, f: fn(f64, f64) -> f64| match (x, y) {
        (Some(x), Some(y)) => Some(f(x, y)),
        (x, None) => x,
        (None, y) => y,
    };
    Ok(MomentAggregate {
        column: a.column.clone(),
        n: a.n + b.n,
        sum: a.sum + b.sum,
        sum_sq: a.sum_sq + b.sum_sq,
        min: pick(a.min, b.min, f64::min),
        max: pick(a.max, b.max, f64::max),
    })
}

/// Folds per-site aggregate lists column by column.
pub(crate) fn merge_all(per_site: &[Vec<MomentAggregate>]) -> Result<Vec<MomentAggregate>, StatsError> {
    let Some(first) = per_site.first() else { return Ok(Vec::new()) };
    let mut acc: Vec<MomentAggregate> = first.iter().map(|m| MomentAggregate::empty(m.column.clone())).collect();
    for site in per_site {
        if site.len() != acc.len() {
            return Err(StatsError::ColumnMismatch(format!("{} columns", acc.len()), format!("{} columns", site.len())));
        }
        for (a, m) in acc.iter_mut().zip(site) {
            *a = merge_moments(a, m)?;
        }
    }
    Ok(acc)
}
