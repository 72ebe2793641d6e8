//! Clinical data dictionary for the MS cohort tables.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Date,
    Identifier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub unit: String,
    /// Ordered category labels; present iff `kind == Categorical`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("duplicate column `{0}` in schema")]
    DuplicateColumn(String),
    #[error("column `{0}`: categories must be given iff the column is categorical and non-empty")]
    BadCategories(String),
}

impl ColumnSpec {
    pub fn numeric(name: &str, unit: &str) -> Self {
        ColumnSpec { name: name.into(), kind: ColumnKind::Numeric, unit: unit.into(), categories: None }
    }

    pub fn date(name: &str) -> Self {
        ColumnSpec { name: name.into(), kind: ColumnKind::Date, unit: "date".into(), categories: None }
    }

    pub fn identifier(name: &str) -> Self {
        ColumnSpec { name: name.into(), kind: ColumnKind::Identifier, unit: String::new(), categories: None }
    }

    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Categorical,
            unit: String::new(),
            categories: Some(categories.iter().map(|c| c.to_string()).collect()),
        }
    }
}

pub fn validate_schema(schema: &[ColumnSpec]) -> Result<(), SchemaError> {
    let mut seen = HashSet::new();
    for col in schema {
        if !seen.insert(col.name.as_str()) {
            return Err(SchemaError::DuplicateColumn(col.name.clone()));
        }
        let ok = match (&col.kind, &col.categories) {
            (ColumnKind::Categorical, Some(c)) => !c.is_empty(),
            (ColumnKind::Categorical, None) => false,
            (_, Some(_)) => false,
            (_, None) => true,
        };
        if !ok {
            return Err(SchemaError::BadCategories(col.name.clone()));
        }
    }
    Ok(())
}

pub const PID: &str = "PID";
pub const SEX: &str = "SEX";
pub const ETHNIC: &str = "ETHNIC";
pub const BAGE: &str = "BAGE";
pub const VISITDT: &str = "VISITDT";
pub const DIAGDT: &str = "DIAGDT";
pub const MSSUBTP: &str = "MSSUBTP";
pub const TRTSDTC: &str = "TRTSDTC";
pub const DTFSTSYM: &str = "DTFSTSYM";
pub const RELAPSE: &str = "RELAPSE";
pub const CDA: &str = "CDA";
pub const CNSR: &str = "CNSR";
pub const VOCSTAT: &str = "VOCSTAT";
pub const EDUSTAT: &str = "EDUSTAT";
pub const FOLLUPTM: &str = "FOLLUPTM";
pub const PRSNTSYM: &str = "PRSNTSYM";
pub const EDSS: &str = "EDSS";
pub const NHPT: &str = "9HPT";
pub const T25FWT: &str = "T25FWT";
pub const SDMT: &str = "SDMT";
pub const MSFC: &str = "MSFC";
pub const LESION_VOLUME: &str = "LESION_VOLUME";
pub const BASE: &str = "BASE";
pub const CHG: &str = "CHG";

pub const SEX_CATEGORIES: &[&str] = &["F", "M"];
pub const ETHNIC_CATEGORIES: &[&str] = &["HISPANIC", "NOT_HISPANIC", "UNKNOWN"];
pub const MSSUBTP_CATEGORIES: &[&str] = &["PPMS", "RRMS", "SPMS"];
pub const VOCSTAT_CATEGORIES: &[&str] = &["EMPLOYED", "RETIRED", "STUDENT", "UNEMPLOYED"];
pub const EDUSTAT_CATEGORIES: &[&str] = &["PRIMARY", "SECONDARY", "TERTIARY"];
pub const PRSNTSYM_CATEGORIES: &[&str] = &["CEREBELLAR", "MOTOR", "SENSORY", "VISUAL"];

/// The ten numeric variables summarized by the descriptive-statistics table.
pub const TABLEONE_NUMERIC: [&str; 10] = [SDMT, CHG, EDSS, RELAPSE, CNSR, MSFC, T25FWT, NHPT, LESION_VOLUME, CDA];

pub const TABLEONE_DATES: [&str; 4] = [DTFSTSYM, DIAGDT, VISITDT, TRTSDTC];

/// Covariates of the Cox model, in reporting order.
pub const COX_FEATURES: [&str; 9] = [CNSR, CHG, NHPT, T25FWT, SDMT, MSFC, RELAPSE, CDA, LESION_VOLUME];

/// Categorical columns fed through one-hot encoding and PCA.
pub const PCA_CATEGORICALS: [&str; 6] = [SEX, ETHNIC, MSSUBTP, VOCSTAT, EDUSTAT, PRSNTSYM];

/// The 24-column MS cohort schema, in CSV column order.
pub fn ms_schema() -> Vec<ColumnSpec> {
    vec![
        ColumnSpec::identifier(PID),
        ColumnSpec::categorical(SEX, SEX_CATEGORIES),
        ColumnSpec::categorical(ETHNIC, ETHNIC_CATEGORIES),
        ColumnSpec::numeric(BAGE, "years"),
        ColumnSpec::date(VISITDT),
        ColumnSpec::date(DIAGDT),
        ColumnSpec::categorical(MSSUBTP, MSSUBTP_CATEGORIES),
        ColumnSpec::date(TRTSDTC),
        ColumnSpec::date(DTFSTSYM),
        ColumnSpec::numeric(RELAPSE, "count"),
        ColumnSpec::numeric(CDA, "indicator"),
        ColumnSpec::numeric(CNSR, "indicator"),
        ColumnSpec::categorical(VOCSTAT, VOCSTAT_CATEGORIES),
        ColumnSpec::categorical(EDUSTAT, EDUSTAT_CATEGORIES),
        ColumnSpec::numeric(FOLLUPTM, "days"),
        ColumnSpec::categorical(PRSNTSYM, PRSNTSYM_CATEGORIES),
        ColumnSpec::numeric(EDSS, "score"),
        ColumnSpec::numeric(NHPT, "seconds"),
        ColumnSpec::numeric(T25FWT, "seconds"),
        ColumnSpec::numeric(SDMT, "score"),
        ColumnSpec::numeric(MSFC, "z-score"),
        ColumnSpec::numeric(LESION_VOLUME, "mm3"),
        ColumnSpec::numeric(BASE, "score"),
        ColumnSpec::numeric(CHG, "per year"),
    ]
}
