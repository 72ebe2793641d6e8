use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::PcaError;
use crate::cohort::{CohortTable, ColumnKind, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedColumn {
    pub column: String,
    /// Sorted lexicographically.
    pub categories: Vec<String>,
}

/// One indicator per (column, category); all levels kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneHotEncoding {
    pub columns: Vec<EncodedColumn>,
}

impl OneHotEncoding {
    pub fn width(&self) -> usize {
        self.columns.iter().map(|c| c.categories.len()).sum()
    }

    /// `COLUMN=CATEGORY` labels in feature order.
    pub fn feature_names(&self) -> Vec<String> {
        self.columns.iter().flat_map(|c| c.categories.iter().map(move |v| format!("{}={}", c.column, v))).collect()
    }

    /// Encodes one row given its category per source column, in column order.
    pub fn encode(&self, categories: &[&str]) -> Result<Vec<f64>, PcaError> {
        if categories.len() != self.columns.len() {
            return Err(PcaError::DimensionMismatch { expected: self.columns.len(), got: categories.len() });
        }
        let mut x = vec![0.0; self.width()];
        let mut offset = 0;
        for (col, &value) in self.columns.iter().zip(categories) {
            let i = col.categories.binary_search_by(|c| c.as_str().cmp(value)).map_err(|_| PcaError::UnknownCategory {
                row: 0,
                column: col.column.clone(),
                value: value.to_string(),
            })?;
            x[offset + i] = 1.0;
            offset += col.categories.len();
        }
        Ok(x)
    }

    /// Encoded complete rows of `table` as (0-based row, vector).
    pub fn encode_table(&self, table: &CohortTable) -> Result<Vec<(usize, Vec<f64>)>, PcaError> {
        let idx = self
            .columns
            .iter()
            .map(|c| table.column_index(&c.column).map_err(|_| PcaError::MissingColumn(c.column.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = Vec::with_capacity(table.n_rows());
        for (r, row) in table.rows().iter().enumerate() {
            let Some(cats) = idx.iter().map(|&i| row[i].as_category()).collect::<Option<Vec<&str>>>() else { continue };
            let x = self.encode(&cats).map_err(|e| match e {
                PcaError::UnknownCategory { column, value, .. } => PcaError::UnknownCategory { row: r + 1, column, value },
                other => other,
            })?;
            out.push((r, x));
        }
        Ok(out)
    }
}

/// Categories seen locally with their counts, sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySet {
    pub column: String,
    pub counts: Vec<(String, u64)>,
}

pub fn local_categories(table: &CohortTable, columns: &[String]) -> Result<Vec<CategorySet>, PcaError> {
    columns
        .iter()
        .map(|c| {
            let spec = table.column_spec(c).map_err(|_| PcaError::MissingColumn(c.clone()))?;
            if spec.kind != ColumnKind::Categorical {
                return Err(PcaError::NonCategoricalColumn(c.clone()));
            }
            let mut counts: BTreeMap<String, u64> = BTreeMap::new();
            for v in table.column(c).map_err(|_| PcaError::MissingColumn(c.clone()))? {
                if let Value::Category(s) = v {
                    *counts.entry(s.clone()).or_default() += 1;
                }
            }
            Ok(CategorySet { column: c.clone(), counts: counts.into_iter().collect() })
        })
        .collect()
}

/// Union of per-site category sets, sorted per column.
pub fn merge_categories(columns: &[String], per_site: &[Vec<CategorySet>]) -> Result<OneHotEncoding, PcaError> {
    let mut out = Vec::with_capacity(columns.len());
    for (i, c) in columns.iter().enumerate() {
        let mut cats = BTreeSet::new();
        for site in per_site {
            let set = site.get(i).filter(|s| &s.column == c).ok_or_else(|| PcaError::MissingColumn(c.clone()))?;
            cats.extend(set.counts.iter().filter(|(_, n)| *n > 0).map(|(k, _)| k.clone()));
        }
        out.push(EncodedColumn { column: c.clone(), categories: cats.into_iter().collect() });
    }
    Ok(OneHotEncoding { columns: out })
}
