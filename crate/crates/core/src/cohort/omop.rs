//! Structural export of a cohort table into OMOP CDM tables.
//!
//! Source variable names are kept as source-value fields and every standard
//! concept id is 0; vocabulary resolution is not attempted.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::date::DateValue;
use super::schema::*;
use super::table::{CohortError, CohortTable, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OmopTable {
    Person,
    VisitOccurrence,
    ConditionOccurrence,
    DrugExposure,
    ObservationPeriod,
    Observation,
    Measurement,
}

impl OmopTable {
    pub const ALL: [OmopTable; 7] = [
        OmopTable::Person,
        OmopTable::VisitOccurrence,
        OmopTable::ConditionOccurrence,
        OmopTable::DrugExposure,
        OmopTable::ObservationPeriod,
        OmopTable::Observation,
        OmopTable::Measurement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OmopTable::Person => "PERSON",
            OmopTable::VisitOccurrence => "VISIT_OCCURRENCE",
            OmopTable::ConditionOccurrence => "CONDITION_OCCURRENCE",
            OmopTable::DrugExposure => "DRUG_EXPOSURE",
            OmopTable::ObservationPeriod => "OBSERVATION_PERIOD",
            OmopTable::Observation => "OBSERVATION",
            OmopTable::Measurement => "MEASUREMENT",
        }
    }

    /// Source variables mapped into this table.
    pub fn variables(self) -> &'static [&'static str] {
        match self {
            OmopTable::Person => &[PID, SEX, ETHNIC, BAGE],
            OmopTable::VisitOccurrence => &[VISITDT],
            OmopTable::ConditionOccurrence => &[DIAGDT, MSSUBTP],
            OmopTable::DrugExposure => &[TRTSDTC],
            OmopTable::ObservationPeriod => &[DTFSTSYM],
            OmopTable::Observation => &[RELAPSE, CDA, CNSR, VOCSTAT, EDUSTAT, FOLLUPTM, PRSNTSYM],
            OmopTable::Measurement => &[EDSS, NHPT, T25FWT, SDMT, MSFC, LESION_VOLUME, BASE, CHG],
        }
    }

    /// Long tables hold one row per (subject, variable); the rest one row per subject.
    pub fn is_long(self) -> bool {
        matches!(self, OmopTable::Observation | OmopTable::Measurement)
    }

    /// The variable providing the row date, if any.
    fn date_variable(self) -> Option<&'static str> {
        match self {
            OmopTable::Person => None,
            OmopTable::VisitOccurrence => Some(VISITDT),
            OmopTable::ConditionOccurrence => Some(DIAGDT),
            OmopTable::DrugExposure => Some(TRTSDTC),
            OmopTable::ObservationPeriod => Some(DTFSTSYM),
            OmopTable::Observation | OmopTable::Measurement => Some(VISITDT),
        }
    }

    fn date_field(self) -> &'static str {
        match self {
            OmopTable::Person => "birth_datetime",
            OmopTable::VisitOccurrence => "visit_start_date",
            OmopTable::ConditionOccurrence => "condition_start_date",
            OmopTable::DrugExposure => "drug_exposure_start_date",
            OmopTable::ObservationPeriod => "observation_period_start_date",
            OmopTable::Observation => "observation_date",
            OmopTable::Measurement => "measurement_date",
        }
    }
}

impl fmt::Display for OmopTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmopRow {
    pub person_id: String,
    pub concept_id: i64,
    pub date: Option<DateValue>,
    /// (source variable, source value) pairs carried by this row.
    pub source_values: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmopRowSet {
    pub table_name: OmopTable,
    pub rows: Vec<OmopRow>,
}

/// Maps a cohort table onto the seven OMOP tables.
///
/// Long tables skip missing cells; subjects without a PID are skipped entirely.
pub fn export_omop(table: &CohortTable) -> Result<Vec<OmopRowSet>, CohortError> {
    let pid_col = table.column_index(PID)?;
    let mut out = Vec::with_capacity(OmopTable::ALL.len());
    for t in OmopTable::ALL {
        let date_col = t.date_variable().map(|v| table.column_index(v)).transpose()?;
        let value_cols: Vec<(&str, usize)> = t
            .variables()
            .iter()
            .filter(|&&v| v != PID && (t.is_long() || Some(v) != t.date_variable()))
            .map(|&v| table.column_index(v).map(|i| (v, i)))
            .collect::<Result<_, _>>()?;

        let mut rows = Vec::new();
        for row in table.rows() {
            let Value::Id(pid) = &row[pid_col] else { continue };
            let date = date_col.and_then(|i| row[i].as_date());
            if t.is_long() {
                for &(var, i) in &value_cols {
                    if row[i].is_missing() {
                        continue;
                    }
                    rows.push(OmopRow {
                        person_id: pid.clone(),
                        concept_id: 0,
                        date,
                        source_values: vec![(var.to_string(), row[i].to_cell())],
                    });
                }
            } else {
                rows.push(OmopRow {
                    person_id: pid.clone(),
                    concept_id: 0,
                    date,
                    source_values: value_cols.iter().map(|&(v, i)| (v.to_string(), row[i].to_cell())).collect(),
                });
            }
        }
        out.push(OmopRowSet { table_name: t, rows });
    }
    Ok(out)
}

/// Writes one `<TABLE_NAME>.csv` per row set into `dir`.
pub fn write_omop_dir(sets: &[OmopRowSet], dir: impl AsRef<Path>) -> Result<(), CohortError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for set in sets {
        let t = set.table_name;
        let mut w =
            csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(dir.join(format!("{}.csv", t.name())))?;
        let mut header = vec!["person_id".to_string(), "concept_id".to_string()];
        if t.date_variable().is_some() {
            header.push(t.date_field().to_string());
        }
        if t.is_long() {
            header.push("source_variable".into());
            header.push("value_source_value".into());
        } else {
            for v in t.variables() {
                if *v != PID && Some(*v) != t.date_variable() {
                    header.push(format!("{}_source_value", v.to_lowercase()));
                }
            }
        }
        w.write_record(&header)?;
        for row in &set.rows {
            let mut rec = vec![row.person_id.clone(), row.concept_id.to_string()];
            if t.date_variable().is_some() {
                rec.push(row.date.map(|d| d.to_string()).unwrap_or_default());
            }
            for (var, val) in &row.source_values {
                if t.is_long() {
                    rec.push(var.clone());
                }
                rec.push(val.clone());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn mapping_partitions_the_schema() {
        let mut seen = HashSet::new();
        for t in OmopTable::ALL {
            for v in t.variables() {
                assert!(seen.insert(*v), "{v} mapped twice");
            }
        }
        let schema: HashSet<String> = ms_schema().into_iter().map(|c| c.name).collect();
        let mapped: HashSet<String> = seen.into_iter().map(String::from).collect();
        assert_eq!(schema, mapped);
    }

    #[test]
    fn group_sizes() {
        assert_eq!(OmopTable::Observation.variables().len(), 7);
        assert_eq!(OmopTable::Measurement.variables().len(), 8);
    }
}
