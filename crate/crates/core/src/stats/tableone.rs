use serde::{Deserialize, Serialize};

use super::moments::MomentAggregate;
use super::quantile::{run_quantile_rounds, ColumnQuantiles, DEFAULT_BINS, DEFAULT_PROBS};
use super::StatsError;
use crate::cohort::DateValue;
use crate::runtime::{FedError, Federation, JobPayload, JobResult, OpKind, PayloadBody, RoundRunner, Step};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericSummary {
    pub variable: String,
    pub n: u64,
    pub mean: f64,
    /// Sample standard deviation; `None` for fewer than two observations.
    pub sd: Option<f64>,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DateSummary {
    pub variable: String,
    pub n: u64,
    pub min: DateValue,
    pub q1: DateValue,
    pub median: DateValue,
    pub q3: DateValue,
    pub max: DateValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TableOneRow {
    Numeric(NumericSummary),
    Date(DateSummary),
}

impl TableOneRow {
    pub fn variable(&self) -> &str {
        match self {
            TableOneRow::Numeric(s) => &s.variable,
            TableOneRow::Date(s) => &s.variable,
        }
    }

    pub fn n(&self) -> u64 {
        match self {
            TableOneRow::Numeric(s) => s.n,
            TableOneRow::Date(s) => s.n,
        }
    }
}

/// (min, q1, median, q3, max) of one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub column: String,
    pub n: u64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteFiveNumbers {
    pub gateway_id: String,
    pub dataset_id: String,
    pub summaries: Vec<FiveNumber>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotResult {
    pub federated: Vec<FiveNumber>,
    pub per_site: Vec<SiteFiveNumbers>,
}

fn five_number(q: &ColumnQuantiles) -> FiveNumber {
    FiveNumber { column: q.column.clone(), n: q.n, min: q.min, q1: q.values[0], median: q.values[1], q3: q.values[2], max: q.max }
}

/// Exact five-number summary of local values (quartiles as inverse-ECDF order statistics).
pub fn local_five_number(column: &str, values: &[f64]) -> Result<FiveNumber, StatsError> {
    if values.is_empty() {
        return Err(StatsError::NoData(column.to_string()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |p: f64| v[((p * v.len() as f64).ceil().max(1.0) as usize) - 1];
    Ok(FiveNumber {
        column: column.to_string(),
        n: v.len() as u64,
        min: v[0],
        q1: at(0.25),
        median: at(0.5),
        q3: at(0.75),
        max: v[v.len() - 1],
    })
}

fn to_date(days: f64) -> DateValue {
    DateValue::from_days_since_epoch(days.round() as i64)
}

fn build_rows(moments: &[MomentAggregate], quantiles: &[ColumnQuantiles], n_numeric: usize) -> Vec<TableOneRow> {
    moments
        .iter()
        .zip(quantiles)
        .enumerate()
        .map(|(i, (m, q))| {
            if i < n_numeric {
                TableOneRow::Numeric(NumericSummary {
                    variable: m.column.clone(),
                    n: m.n,
                    mean: m.mean().unwrap_or(f64::NAN),
                    sd: m.sd(),
                    min: q.min,
                    q1: q.values[0],
                    median: q.values[1],
                    q3: q.values[2],
                    max: q.max,
                })
            } else {
                TableOneRow::Date(DateSummary {
                    variable: m.column.clone(),
                    n: m.n,
                    min: to_date(q.min),
                    q1: to_date(q.values[0]),
                    median: to_date(q.values[1]),
                    q3: to_date(q.values[2]),
                    max: to_date(q.max),
                })
            }
        })
        .collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct TableOneParams {
    #[serde(default)]
    pub columns: Vec<String>,
    #[serde(default)]
    pub date_columns: Vec<String>,
    #[serde(default = "default_bins")]
    pub bins: u32,
    #[serde(default = "default_probs")]
    pub probs: Vec<f64>,
    #[serde(default)]
    pub per_site: bool,
    #[serde(default)]
    pub quantiles_only: bool,
}

fn default_bins() -> u32 {
    DEFAULT_BINS
}

fn default_probs() -> Vec<f64> {
    DEFAULT_PROBS.to_vec()
}

impl TableOneParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.columns.is_empty() && self.date_columns.is_empty() {
            return Err("tableone needs at least one column".into());
        }
        if self.bins == 0 {
            return Err("bins must be positive".into());
        }
        if self.probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err("probs must lie in [0, 1]".into());
        }
        if !self.quantiles_only && self.probs != DEFAULT_PROBS {
            return Err("probs may only be overridden for quantile-only jobs".into());
        }
        Ok(())
    }

    pub fn all_columns(&self) -> Vec<String> {
        self.columns.iter().chain(&self.date_columns).cloned().collect()
    }
}

pub(crate) fn drive(runner: &mut RoundRunner<'_>, p: &TableOneParams) -> Result<JobResult, FedError> {
    let columns = p.all_columns();
    let (moments, quantiles) = run_quantile_rounds(runner, &columns, &p.probs, p.bins)?;
    if p.quantiles_only {
        return Ok(JobResult::Quantiles(quantiles));
    }
    if !p.per_site {
        return Ok(JobResult::TableOne(build_rows(&moments, &quantiles, p.columns.len())));
    }
    let replies = runner.round(Step::LocalSummary { columns: columns.clone() })?;
    let per_site = replies
        .into_iter()
        .map(|r| match r.payload.body {
            PayloadBody::FiveNumbers(summaries) => {
                Ok(SiteFiveNumbers { gateway_id: r.gateway_id, dataset_id: r.dataset_id, summaries })
            }
            other => Err(FedError::protocol("five-number summaries", &other)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(JobResult::Boxplot(BoxplotResult { federated: quantiles.iter().map(five_number).collect(), per_site }))
}

/// Descriptive statistics over every dataset of the compute spec.
pub fn federated_tableone(
    fed: &mut Federation,
    compute_spec_id: &str,
    numeric_columns: &[&str],
    date_columns: &[&str],
) -> Result<Vec<TableOneRow>, FedError> {
    let payload = JobPayload::new(OpKind::Tableone).with("columns", numeric_columns).with("date_columns", date_columns);
    match fed.run_job(compute_spec_id, payload)? {
        JobResult::TableOne(rows) => Ok(rows),
        other => Err(FedError::unexpected("tableone", &other)),
    }
}

/// Five-number summaries, federated and (when `per_site`) per dataset.
pub fn federated_boxplot_stats(
    fed: &mut Federation,
    compute_spec_id: &str,
    columns: &[&str],
    per_site: bool,
) -> Result<BoxplotResult, FedError> {
    let payload = JobPayload::new(OpKind::Tableone).with("columns", columns).with("per_site", per_site);
    match fed.run_job(compute_spec_id, payload)? {
        JobResult::Boxplot(b) => Ok(b),
        JobResult::TableOne(rows) => Ok(BoxplotResult {
            federated: rows
                .into_iter()
                .filter_map(|r| match r {
                    TableOneRow::Numeric(s) => Some(FiveNumber {
                        column: s.variable,
                        n: s.n,
                        min: s.min,
                        q1: s.q1,
                        median: s.median,
                        q3: s.q3,
                        max: s.max,
                    }),
                    TableOneRow::Date(_) => None,
                })
                .collect(),
            per_site: Vec::new(),
        }),
        other => Err(FedError::unexpected("boxplot", &other)),
    }
}

/// Table-style CSV for numeric rows.
pub fn numeric_rows_csv(rows: &[TableOneRow]) -> String {
    let mut out = String::from("Variable,n,Mean,SD,Min,Quartile 1,Median,Quartile 3,Max\n");
    for r in rows {
        if let TableOneRow::Numeric(s) = r {
            let sd = s.sd.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                s.variable, s.n, s.mean, sd, s.min, s.q1, s.median, s.q3, s.max
            ));
        }
    }
    out
}

pub fn date_rows_csv(rows: &[TableOneRow]) -> String {
    let mut out = String::from("Variable,n,Min,Quartile 1,Median,Quartile 3,Max\n");
    for r in rows {
        if let TableOneRow::Date(s) = r {
            out.push_str(&format!("{},{},{},{},{},{},{}\n", s.variable, s.n, s.min, s.q1, s.median, s.q3, s.max));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_five_number_odd_and_even() {
        let f = local_five_number("x", &[5.0, 1.0, 4.0, 2.0, 3.0]).unwrap();
        assert_eq!((f.min, f.q1, f.median, f.q3, f.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        let f = local_five_number("x", &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((f.q1, f.median, f.q3), (1.0, 2.0, 3.0));
        assert!(local_five_number("x", &[]).is_err());
    }

    #[test]
    fn params_validation() {
        let p: TableOneParams = serde_json::from_value(serde_json::json!({"columns": ["EDSS"]})).unwrap();
        p.validate().unwrap();
        assert_eq!(p.bins, 512);
        let p: TableOneParams = serde_json::from_value(serde_json::json!({})).unwrap();
        assert!(p.validate().is_err());
        assert!(serde_json::from_value::<TableOneParams>(serde_json::json!({"colums": []})).is_err());
    }
}
