//! Federated statistics, survival analysis and PCA over multiple-sclerosis
//! registry cohorts, with an in-process federation runtime that only ever moves
//! k-anonymous aggregates between sites.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cohort;
mod linalg;
pub mod pca;
pub mod runtime;
pub mod stats;
pub mod survival;
pub mod synthgen;

pub use cohort::{CohortTable, ColumnKind, ColumnSpec, Value};
pub use runtime::{AssetPolicy, FedError, Federation, JobResult, OpKind};
