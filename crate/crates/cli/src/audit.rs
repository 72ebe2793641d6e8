use std::collections::HashSet;
use std::fs;
use std::path::Path;

use fedmed::runtime::audit::{audit_log, AuditReport};

use crate::manifest::RunManifest;
use crate::run::load_sites;
use crate::{CliError, CliResult, EXIT_AUDIT};

/// Used for datasets the manifest has no threshold for.
pub const DEFAULT_K: u64 = 5;

/// Scans the message log of a run for identifier values and sub-threshold counts.
pub fn audit_run(manifest_path: &Path) -> CliResult<AuditReport> {
    let manifest = RunManifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let log_rel = manifest.message_log.as_deref().ok_or_else(|| CliError::config("manifest names no message log"))?;
    let data_rel = manifest.data_dir.as_deref().ok_or_else(|| CliError::config("manifest names no data directory"))?;
    let log_path = base.join(log_rel);
    let log = fs::read_to_string(&log_path).map_err(|e| CliError::io(&format!("reading {}", log_path.display()), e))?;
    let pids: HashSet<String> = load_sites(&base.join(data_rel))?.iter().flat_map(|t| t.pids()).collect();
    Ok(audit_log(log.lines(), &pids, &manifest.thresholds, DEFAULT_K))
}

/// Prints the report; a non-clean log is an error with exit code 5.
pub fn cmd_audit(manifest_path: &Path) -> CliResult<AuditReport> {
    let report = audit_run(manifest_path)?;
    for v in &report.violations {
        println!("{v}");
    }
    println!("{} messages, {} violations", report.messages, report.violations.len());
    if report.is_clean() {
        Ok(report)
    } else {
        Err(CliError::new(EXIT_AUDIT, format!("audit found {} violations", report.violations.len())))
    }
}
