use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::schema::ColumnSpec;
use super::table::{parse_cell, CohortError, CohortTable};

/// Loads a cohort CSV; the site id is the file stem.
pub fn load_csv(path: impl AsRef<Path>, schema: &[ColumnSpec]) -> Result<CohortTable, CohortError> {
    let path = path.as_ref();
    let site_id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("site").to_string();
    read_csv(File::open(path)?, site_id, schema)
}

/// Reads a cohort CSV. The header must name exactly the schema columns, in any order.
pub fn read_csv<R: Read>(reader: R, site_id: impl Into<String>, schema: &[ColumnSpec]) -> Result<CohortTable, CohortError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();

    let mut seen = HashSet::new();
    for h in &header {
        if !schema.iter().any(|c| &c.name == h) || !seen.insert(h.as_str()) {
            return Err(CohortError::UnexpectedColumn(h.clone()));
        }
    }
    // position of each schema column within the file
    let mut positions = Vec::with_capacity(schema.len());
    for col in schema {
        let p = header.iter().position(|h| h == &col.name).ok_or_else(|| CohortError::MissingColumn(col.name.clone()))?;
        positions.push(p);
    }

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        if record.len() != header.len() {
            return Err(CohortError::RowWidth { row: row_no, found: record.len(), expected: header.len() });
        }
        let row = schema
            .iter()
            .zip(&positions)
            .map(|(spec, &p)| parse_cell(row_no, spec, &record[p]))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    CohortTable::new(site_id, schema.to_vec(), rows)
}

/// Writes the table as CSV in schema column order.
pub fn write_csv<W: Write>(table: &CohortTable, writer: W) -> Result<(), CohortError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(table.schema().iter().map(|c| c.name.as_str()))?;
    for row in table.rows() {
        w.write_record(row.iter().map(|v| v.to_cell()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(table: &CohortTable, path: impl AsRef<Path>) -> Result<(), CohortError> {
    write_csv(table, File::create(path)?)
}
