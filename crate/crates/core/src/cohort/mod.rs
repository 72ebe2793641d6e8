//! Clinical data dictionary, cohort tables, CSV I/O and OMOP export.

mod csv_io;
mod date;
pub mod omop;
pub mod schema;
mod table;

pub use csv_io::{load_csv, read_csv, save_csv, write_csv};
pub use date::{days_between, DateParseError, DateValue};
pub use omop::{export_omop, write_omop_dir, OmopRow, OmopRowSet, OmopTable};
pub use schema::{ms_schema, ColumnKind, ColumnSpec, SchemaError};
pub use table::{CohortError, CohortTable, Value};
