//! Wire types. Everything crossing the gateway boundary is serialized to bytes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::policy::DenyReason;
use super::{LocalError, OpKind};
use crate::pca::{CategorySet, CovarianceAccumulator, OneHotEncoding};
use crate::stats::correlation::CorrelationAccumulator;
use crate::stats::quantile::HistogramBlocks;
use crate::stats::scatter::HistogramGrid;
use crate::stats::{FiveNumber, MomentAggregate};
use crate::survival::{CoxRoundPayload, CoxSpec, IntervalCounts, SiteBaseline, KM_COLUMNS};

/// Round input broadcast by the orchestrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Step {
    Moments { columns: Vec<String> },
    Histogram { columns: Vec<String>, ranges: Vec<(f64, f64)>, bins: u32 },
    LocalSummary { columns: Vec<String> },
    CrossProducts { columns: Vec<String> },
    Grid { x: String, y: String, x_range: (f64, f64), y_range: (f64, f64), x_bins: u32, y_bins: u32 },
    SurvivalExtent { event_threshold: f64, interval_width: i64 },
    IntervalVeto { event_threshold: f64, boundaries: Vec<i64> },
    IntervalCounts { event_threshold: f64, boundaries: Vec<i64> },
    CoxRound { model: CoxSpec, beta: Vec<f64> },
    Baseline { model: CoxSpec, beta: Vec<f64>, interval_width: i64 },
    Categories { columns: Vec<String> },
    Covariance { encoding: OneHotEncoding },
}

impl Step {
    /// Source columns the step reads, for the policy's column check.
    pub fn columns(&self) -> Vec<String> {
        match self {
            Step::Moments { columns }
            | Step::Histogram { columns, .. }
            | Step::LocalSummary { columns }
            | Step::CrossProducts { columns }
            | Step::Categories { columns } => columns.clone(),
            Step::Grid { x, y, .. } => vec![x.clone(), y.clone()],
            Step::SurvivalExtent { .. } | Step::IntervalVeto { .. } | Step::IntervalCounts { .. } => {
                KM_COLUMNS.iter().map(|c| c.to_string()).collect()
            }
            Step::CoxRound { model, .. } | Step::Baseline { model, .. } => model.source_columns(),
            Step::Covariance { encoding } => encoding.columns.iter().map(|c| c.column.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum PayloadBody {
    Moments(Vec<MomentAggregate>),
    Histograms(Vec<HistogramBlocks>),
    FiveNumbers(Vec<FiveNumber>),
    CrossProducts(CorrelationAccumulator),
    Grid(HistogramGrid),
    SurvivalExtent {
        n: u64,
        n_intervals: u64,
    },
    /// Interior grid boundaries the gateway needs removed.
    IntervalVeto {
        remove: Vec<i64>,
    },
    IntervalCounts(Vec<IntervalCounts>),
    CoxRound(CoxRoundPayload),
    Baseline(SiteBaseline),
    Categories(Vec<CategorySet>),
    Covariance(CovarianceAccumulator),
}

fn as_count(x: f64) -> u64 {
    if x.is_finite() && x > 0.0 {
        x.round() as u64
    } else {
        0
    }
}

impl PayloadBody {
    pub fn kind_name(&self) -> &'static str {
        match self {
            PayloadBody::Moments(_) => "moments",
            PayloadBody::Histograms(_) => "histograms",
            PayloadBody::FiveNumbers(_) => "five_numbers",
            PayloadBody::CrossProducts(_) => "cross_products",
            PayloadBody::Grid(_) => "grid",
            PayloadBody::SurvivalExtent { .. } => "survival_extent",
            PayloadBody::IntervalVeto { .. } => "interval_veto",
            PayloadBody::IntervalCounts(_) => "interval_counts",
            PayloadBody::CoxRound(_) => "cox_round",
            PayloadBody::Baseline(_) => "baseline",
            PayloadBody::Categories(_) => "categories",
            PayloadBody::Covariance(_) => "covariance",
        }
    }

    /// Every count the body discloses, labelled by statistic.
    pub fn counts(&self) -> Vec<(String, u64)> {
        let mut out = Vec::new();
        match self {
            PayloadBody::Moments(ms) => {
                out.extend(ms.iter().map(|m| (format!("{}.n", m.column), m.n)));
            }
            PayloadBody::Histograms(hs) => {
                for h in hs {
                    out.extend(h.blocks.iter().map(|b| (format!("{}.cells[{}..{})", h.column, b.start, b.end), b.count)));
                }
            }
            PayloadBody::FiveNumbers(fs) => {
                out.extend(fs.iter().map(|f| (format!("{}.n", f.column), f.n)));
            }
            PayloadBody::CrossProducts(acc) => out.push(("n".into(), acc.n)),
            PayloadBody::Grid(g) => {
                out.extend(g.cells.iter().map(|c| (format!("cell[{},{}]", c.ix, c.iy), c.count)));
                out.push(("suppressed_total".into(), g.suppressed_total));
            }
            PayloadBody::SurvivalExtent { n, .. } => out.push(("n".into(), *n)),
            PayloadBody::IntervalVeto { .. } => {}
            PayloadBody::IntervalCounts(ivs) => {
                for iv in ivs {
                    let at = format!("[{},{})", iv.t_lo, iv.t_hi);
                    out.push((format!("{at}.d"), iv.d));
                    out.push((format!("{at}.n_at_risk"), iv.n_at_risk));
                }
            }
            PayloadBody::CoxRound(p) => {
                out.push(("n".into(), p.n));
                out.push(("n_events".into(), p.n_events));
            }
            PayloadBody::Baseline(b) => {
                out.push(("n".into(), b.n));
                for iv in &b.intervals {
                    let at = format!("[{},{})", iv.t_lo, iv.t_hi);
                    out.push((format!("{at}.d"), iv.d));
                    out.push((format!("{at}.n_at_risk"), iv.n_at_risk));
                }
            }
            PayloadBody::Categories(sets) => {
                for s in sets {
                    out.extend(s.counts.iter().map(|(cat, c)| (format!("{}={}", s.column, cat), *c)));
                }
            }
            PayloadBody::Covariance(acc) => {
                out.push(("n".into(), acc.n));
                for (i, s) in acc.sum.iter().enumerate() {
                    out.push((format!("sum[{i}]"), as_count(*s)));
                }
                for (i, row) in acc.sum_outer.iter().enumerate() {
                    for (j, s) in row.iter().enumerate().skip(i) {
                        out.push((format!("sum_outer[{i},{j}]"), as_count(*s)));
                    }
                }
            }
        }
        out
    }
}

/// The only thing a gateway may emit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatePayload {
    pub op_kind: OpKind,
    pub round_index: u32,
    pub body: PayloadBody,
    pub supporting_counts: BTreeMap<String, u64>,
}

impl AggregatePayload {
    pub fn new(op_kind: OpKind, round_index: u32, body: PayloadBody) -> Self {
        let supporting_counts = body.counts().into_iter().collect();
        AggregatePayload { op_kind, round_index, body, supporting_counts }
    }

    /// First count in (0, k), looking at both the declared and the body-derived counts.
    pub fn first_count_below(&self, k: u64) -> Option<(String, u64)> {
        self.supporting_counts.iter().map(|(s, c)| (s.clone(), *c)).chain(self.body.counts()).find(|(_, c)| *c > 0 && *c < k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Request { dataset_id: String, step: Step },
    Response { dataset_id: String, aggregate: AggregatePayload },
    Denied { dataset_id: String, reason: DenyReason },
    Failed { dataset_id: String, cause: LocalError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub job_id: String,
    pub round: u32,
    pub gateway_id: String,
    pub op_kind: OpKind,
    pub payload: Message,
}

impl Envelope {
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("envelopes always serialize")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        serde_json::from_slice(bytes).map_err(|e| e.to_string())
    }
}
