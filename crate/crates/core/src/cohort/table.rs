use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::date::DateValue;
use super::schema::{validate_schema, ColumnKind, ColumnSpec, SchemaError, PID};

/// One cell of a cohort table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Missing,
    Number(f64),
    Category(String),
    Date(DateValue),
    Id(String),
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_date(&self) -> Option<DateValue> {
        match self {
            Value::Date(d) => Some(*d),
            _ => None,
        }
    }

    pub fn as_category(&self) -> Option<&str> {
        match self {
            Value::Category(c) => Some(c),
            _ => None,
        }
    }

    /// CSV text form; the empty string marks a missing value.
    pub fn to_cell(&self) -> String {
        match self {
            Value::Missing => String::new(),
            Value::Number(x) => format!("{x}"),
            Value::Category(s) | Value::Id(s) => s.clone(),
            Value::Date(d) => d.to_string(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CohortError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unexpected column `{0}` not in schema")]
    UnexpectedColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    TypeParseError { row: usize, column: String, value: String },
    #[error("row {row}, column `{column}`: unknown category `{value}`")]
    UnknownCategory { row: usize, column: String, value: String },
    #[error("duplicate PID `{0}`")]
    DuplicatePid(String),
    #[error("row {row} has {found} cells, schema has {expected} columns")]
    RowWidth { row: usize, found: usize, expected: usize },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One site's tabular clinical dataset: one row per subject, cells in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortTable {
    pub site_id: String,
    schema: Vec<ColumnSpec>,
    rows: Vec<Vec<Value>>,
}

impl CohortTable {
    /// Builds a table, checking every row against the schema.
    ///
    /// Row numbers in errors are 1-based data rows (the CSV header is not counted).
    pub fn new(site_id: impl Into<String>, schema: Vec<ColumnSpec>, rows: Vec<Vec<Value>>) -> Result<Self, CohortError> {
        validate_schema(&schema)?;
        let pid_col = schema.iter().position(|c| c.name == PID && c.kind == ColumnKind::Identifier);
        let mut pids = HashSet::new();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(CohortError::RowWidth { row: r + 1, found: row.len(), expected: schema.len() });
            }
            for (spec, value) in schema.iter().zip(row) {
                check_cell(r + 1, spec, value)?;
            }
            if let Some(i) = pid_col {
                if let Value::Id(pid) = &row[i] {
                    if !pids.insert(pid.clone()) {
                        return Err(CohortError::DuplicatePid(pid.clone()));
                    }
                }
            }
        }
        Ok(CohortTable { site_id: site_id.into(), schema, rows })
    }

    pub fn schema(&self) -> &[ColumnSpec] {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize, CohortError> {
        self.schema.iter().position(|c| c.name == name).ok_or_else(|| CohortError::MissingColumn(name.to_string()))
    }

    pub fn column_spec(&self, name: &str) -> Result<&ColumnSpec, CohortError> {
        Ok(&self.schema[self.column_index(name)?])
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.schema.iter().any(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Result<impl Iterator<Item = &Value> + '_, CohortError> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(move |r| &r[i]))
    }

    /// Identifier values of the PID column (empty if the schema has none).
    pub fn pids(&self) -> Vec<String> {
        let Ok(i) = self.column_index(PID) else { return Vec::new() };
        self.rows
            .iter()
            .filter_map(|r| match &r[i] {
                Value::Id(s) => Some(s.clone()),
                _ => None,
            })
            .collect()
    }

    /// The rows at `indices` as a new table with the same schema and the given site id.
    pub fn subset(&self, site_id: impl Into<String>, indices: &[usize]) -> CohortTable {
        CohortTable {
            site_id: site_id.into(),
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Row-wise concatenation of tables sharing one schema.
    pub fn concat(site_id: impl Into<String>, tables: &[&CohortTable]) -> Result<CohortTable, CohortError> {
        let schema = tables.first().map(|t| t.schema.clone()).unwrap_or_default();
        let rows = tables.iter().flat_map(|t| t.rows.iter().cloned()).collect();
        CohortTable::new(site_id, schema, rows)
    }
}

fn check_cell(row: usize, spec: &ColumnSpec, value: &Value) -> Result<(), CohortError> {
    let bad = || CohortError::TypeParseError { row, column: spec.name.clone(), value: value.to_cell() };
    match (spec.kind, value) {
        (_, Value::Missing) => Ok(()),
        (ColumnKind::Numeric, Value::Number(x)) if x.is_finite() => Ok(()),
        (ColumnKind::Date, Value::Date(_)) => Ok(()),
        (ColumnKind::Identifier, Value::Id(s)) if !s.is_empty() => Ok(()),
        (ColumnKind::Categorical, Value::Category(c)) => {
            let known = spec.categories.as_deref().unwrap_or_default();
            if known.iter().any(|k| k == c) {
                Ok(())
            } else {
                Err(CohortError::UnknownCategory { row, column: spec.name.clone(), value: c.clone() })
            }
        }
        _ => Err(bad()),
    }
}

/// Parses one CSV cell according to its column kind.
pub(crate) fn parse_cell(row: usize, spec: &ColumnSpec, text: &str) -> Result<Value, CohortError> {
    let t = text.trim();
    if t.is_empty() {
        return Ok(Value::Missing);
    }
    let bad = || CohortError::TypeParseError { row, column: spec.name.clone(), value: t.to_string() };
    let v = match spec.kind {
        ColumnKind::Numeric => {
            let x: f64 = t.parse().map_err(|_| bad())?;
            if !x.is_finite() {
                return Err(bad());
            }
            Value::Number(x)
        }
        ColumnKind::Date => Value::Date(t.parse().map_err(|_| bad())?),
        ColumnKind::Categorical => Value::Category(t.to_string()),
        ColumnKind::Identifier => Value::Id(t.to_string()),
    };
    check_cell(row, spec, &v)?;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::schema::ColumnSpec;

    fn schema() -> Vec<ColumnSpec> {
        vec![ColumnSpec::identifier("PID"), ColumnSpec::numeric("X", ""), ColumnSpec::categorical("C", &["a", "b"])]
    }

    #[test]
    fn duplicate_pid_rejected() {
        let rows = vec![
            vec![Value::Id("p1".into()), Value::Number(1.0), Value::Category("a".into())],
            vec![Value::Id("p1".into()), Value::Number(2.0), Value::Missing],
        ];
        assert!(matches!(CohortTable::new("s", schema(), rows), Err(CohortError::DuplicatePid(p)) if p == "p1"));
    }

    #[test]
    fn non_finite_and_unknown_category_rejected() {
        let rows = vec![vec![Value::Id("p".into()), Value::Number(f64::NAN), Value::Missing]];
        assert!(matches!(CohortTable::new("s", schema(), rows), Err(CohortError::TypeParseError { row: 1, .. })));
        let rows = vec![vec![Value::Id("p".into()), Value::Number(1.0), Value::Category("z".into())]];
        assert!(matches!(CohortTable::new("s", schema(), rows), Err(CohortError::UnknownCategory { .. })));
    }

    #[test]
    fn parse_cell_kinds() {
        let s = schema();
        assert_eq!(parse_cell(1, &s[1], " 2.5 ").unwrap(), Value::Number(2.5));
        assert_eq!(parse_cell(1, &s[1], "").unwrap(), Value::Missing);
        assert!(parse_cell(3, &s[1], "abc").is_err());
        assert!(parse_cell(3, &s[1], "inf").is_err());
        assert!(parse_cell(1, &s[2], "b").is_ok());
    }
}
