use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::message::{AggregatePayload, Step};
use super::OpKind;
use crate::cohort::{ColumnKind, ColumnSpec};

/// Per-dataset rules enforced gateway-side on every request and reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetPolicy {
    pub allowed_ops: BTreeSet<OpKind>,
    pub allowed_columns: BTreeSet<String>,
    pub min_cohort_size: u64,
    /// Privacy threshold k: no released count may lie in (0, k).
    pub min_cell_count: u64,
}

impl AssetPolicy {
    /// All ops, all non-identifier columns, cohort floor 25, k = 5.
    pub fn default_for(schema: &[ColumnSpec]) -> Self {
        AssetPolicy {
            allowed_ops: OpKind::ALL.into_iter().collect(),
            allowed_columns: schema.iter().filter(|c| c.kind != ColumnKind::Identifier).map(|c| c.name.clone()).collect(),
            min_cohort_size: 25,
            min_cell_count: 5,
        }
    }

    pub fn with_thresholds(mut self, min_cohort_size: u64, min_cell_count: u64) -> Self {
        self.min_cohort_size = min_cohort_size;
        self.min_cell_count = min_cell_count;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.min_cell_count < 1 {
            return Err("min_cell_count must be at least 1".into());
        }
        if self.min_cohort_size < self.min_cell_count {
            return Err(format!(
                "min_cohort_size ({}) must be at least min_cell_count ({})",
                self.min_cohort_size, self.min_cell_count
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DenyReason {
    OpNotAllowed { op: OpKind },
    ColumnNotAllowed { column: String },
    CohortTooSmall { n: u64, min: u64 },
    CountBelowThreshold { statistic: String, count: u64, k: u64 },
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DenyReason::OpNotAllowed { op } => write!(f, "operation `{op}` not allowed"),
            DenyReason::ColumnNotAllowed { column } => write!(f, "column `{column}` not allowed"),
            DenyReason::CohortTooSmall { n, min } => write!(f, "cohort size {n} below minimum {min}"),
            DenyReason::CountBelowThreshold { statistic, count, k } => {
                write!(f, "count {count} for `{statistic}` below threshold {k}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyDecision {
    Allow,
    Deny(DenyReason),
}

impl PolicyDecision {
    pub fn is_allow(&self) -> bool {
        matches!(self, PolicyDecision::Allow)
    }
}

/// Checks a request before any local computation runs.
pub fn pre_check(policy: &AssetPolicy, op: OpKind, step: &Step, cohort_n: u64) -> PolicyDecision {
    if !policy.allowed_ops.contains(&op) {
        return PolicyDecision::Deny(DenyReason::OpNotAllowed { op });
    }
    for c in step.columns() {
        if !policy.allowed_columns.contains(&c) {
            return PolicyDecision::Deny(DenyReason::ColumnNotAllowed { column: c });
        }
    }
    if cohort_n < policy.min_cohort_size {
        return PolicyDecision::Deny(DenyReason::CohortTooSmall { n: cohort_n, min: policy.min_cohort_size });
    }
    PolicyDecision::Allow
}

/// Full check of an outbound payload: the request rules plus every supporting count.
///
/// Zero counts are allowed; they disclose nothing about a small group.
pub fn policy_check(policy: &AssetPolicy, step: &Step, cohort_n: u64, outbound: &AggregatePayload) -> PolicyDecision {
    let pre = pre_check(policy, outbound.op_kind, step, cohort_n);
    if !pre.is_allow() {
        return pre;
    }
    let k = policy.min_cell_count;
    match outbound.first_count_below(k) {
        Some((statistic, count)) => PolicyDecision::Deny(DenyReason::CountBelowThreshold { statistic, count, k }),
        None => PolicyDecision::Allow,
    }
}
