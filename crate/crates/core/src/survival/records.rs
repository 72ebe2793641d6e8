use serde::{Deserialize, Serialize};

use super::SurvivalError;
use crate::cohort::schema::{CNSR, DIAGDT, EDSS, VISITDT};
use crate::cohort::{days_between, CohortTable, ColumnKind, Value};
use crate::pca::PcaProjection;

/// Columns every survival computation reads.
pub const KM_COLUMNS: [&str; 4] = [VISITDT, DIAGDT, EDSS, CNSR];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    /// 0-based row in the source table.
    pub row: usize,
    /// Days from diagnosis to visit.
    pub time: i64,
    pub event: bool,
    pub x: Vec<f64>,
}

/// One record per complete row: time = VISITDT − DIAGDT, event = EDSS > threshold and CNSR = 0.
pub fn derive_survival(
    table: &CohortTable,
    event_threshold: f64,
    features: &[String],
) -> Result<Vec<SurvivalRecord>, SurvivalError> {
    let col = |name: &str| table.column_index(name).map_err(|_| SurvivalError::MissingColumn(name.to_string()));
    let (visit, diag, edss, cnsr) = (col(VISITDT)?, col(DIAGDT)?, col(EDSS)?, col(CNSR)?);
    let mut feat = Vec::with_capacity(features.len());
    for f in features {
        let i = col(f)?;
        if table.schema()[i].kind != ColumnKind::Numeric {
            return Err(SurvivalError::NonNumericColumn(f.clone()));
        }
        feat.push(i);
    }
    let mut out = Vec::with_capacity(table.n_rows());
    for (r, row) in table.rows().iter().enumerate() {
        let (Some(v), Some(d), Some(e), Some(c)) =
            (row[visit].as_date(), row[diag].as_date(), row[edss].as_number(), row[cnsr].as_number())
        else {
            continue;
        };
        let Some(x) = feat.iter().map(|&i| row[i].as_number()).collect::<Option<Vec<f64>>>() else { continue };
        let time = days_between(v, d);
        if time < 0 {
            return Err(SurvivalError::NegativeTime { row: r + 1 });
        }
        out.push(SurvivalRecord { row: r, time, event: e > event_threshold && c == 0.0, x });
    }
    Ok(out)
}

/// What a gateway needs to build Cox records: features, event rule, optional PCA features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxSpec {
    pub features: Vec<String>,
    pub event_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<PcaProjection>,
}

impl CoxSpec {
    pub fn new(features: &[&str], event_threshold: f64) -> Self {
        CoxSpec { features: features.iter().map(|s| s.to_string()).collect(), event_threshold, projection: None }
    }

    /// Covariate names in model order; projected components come last as PC1..PCk.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = self.features.clone();
        if let Some(p) = &self.projection {
            names.extend((1..=p.k()).map(|i| format!("PC{i}")));
        }
        names
    }

    pub fn source_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = KM_COLUMNS.iter().map(|c| c.to_string()).collect();
        cols.extend(self.features.iter().cloned());
        if let Some(p) = &self.projection {
            cols.extend(p.encoding.columns.iter().map(|c| c.column.clone()));
        }
        cols
    }

    pub fn records(&self, table: &CohortTable) -> Result<Vec<SurvivalRecord>, SurvivalError> {
        let mut records = derive_survival(table, self.event_threshold, &self.features)?;
        if let Some(p) = &self.projection {
            let mut kept = Vec::with_capacity(records.len());
            for mut r in records {
                let row = &table.rows()[r.row];
                let cats = p
                    .encoding
                    .columns
                    .iter()
                    .map(|c| match table.column_index(&c.column).map(|i| &row[i]) {
                        Ok(Value::Category(s)) => Ok(Some(s.as_str())),
                        Ok(_) => Ok(None),
                        Err(_) => Err(SurvivalError::MissingColumn(c.column.clone())),
                    })
                    .collect::<Result<Option<Vec<&str>>, _>>()?;
                let Some(cats) = cats else { continue };
                r.x.extend(p.project_categories(&cats)?);
                kept.push(r);
            }
            records = kept;
        }
        Ok(records)
    }
}
