//! Two-round federated quantiles: global min/max, then a fixed-width histogram.
//!
//! A gateway never releases a histogram cell holding fewer than `k` subjects.
//! Runs of adjacent cells are merged left to right into blocks until each
//! block reaches `k`; the orchestrator spreads a block's count evenly over its
//! cells. With `k = 1` every non-empty cell is its own block and the estimate
//! lies within one cell width of the inverse-ECDF quantile of the pooled data.

use serde::{Deserialize, Serialize};

use super::moments::{merge_all, MomentAggregate};
use super::StatsError;
use crate::runtime::{FedError, Federation, JobPayload, JobResult, OpKind, PayloadBody, RoundRunner, Step};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    /// First cell index.
    pub start: u32,
    /// One past the last cell index.
    pub end: u32,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBlocks {
    pub column: String,
    pub lo: f64,
    pub hi: f64,
    pub bins: u32,
    /// Non-empty blocks in increasing cell order; cells outside any block are empty.
    pub blocks: Vec<Block>,
}

pub(crate) fn cell_index(x: f64, lo: f64, hi: f64, bins: u32) -> u32 {
    if hi <= lo {
        return 0;
    }
    let i = ((x - lo) / (hi - lo) * bins as f64).floor();
    i.clamp(0.0, (bins - 1) as f64) as u32
}

/// Builds the k-compliant block histogram of `values` on `[lo, hi]`.
pub fn local_histogram(column: &str, values: &[f64], lo: f64, hi: f64, bins: u32, k: u64) -> HistogramBlocks {
    let bins = bins.max(1);
    let mut cells = vec![0u64; bins as usize];
    for &x in values {
        cells[cell_index(x, lo, hi, bins) as usize] += 1;
    }
    let k = k.max(1);
    let mut blocks: Vec<Block> = Vec::new();
    let mut open: Option<Block> = None;
    for (i, &c) in cells.iter().enumerate() {
        let i = i as u32;
        match open.as_mut() {
            None if c == 0 => {}
            None => open = Some(Block { start: i, end: i + 1, count: c }),
            Some(b) => {
                b.end = i + 1;
                b.count += c;
            }
        }
        if let Some(b) = open {
            if b.count >= k {
                blocks.push(b);
                open = None;
            }
        }
    }
    if let Some(b) = open {
        match blocks.last_mut() {
            Some(prev) => {
                prev.end = b.end;
                prev.count += b.count;
            }
            // Fewer than k values in total; the policy check rejects this payload.
            None => blocks.push(b),
        }
    }
    HistogramBlocks { column: column.to_string(), lo, hi, bins, blocks }
}

/// Estimates quantiles from histograms sharing one `(lo, hi, bins)` grid.
pub fn quantiles_from_histograms(hists: &[&HistogramBlocks], probs: &[f64]) -> Result<Vec<f64>, StatsError> {
    let first = hists.first().ok_or_else(|| StatsError::NoData(String::new()))?;
    let (lo, hi, bins) = (first.lo, first.hi, first.bins as usize);
    let mut density = vec![0.0f64; bins];
    for h in hists {
        if h.bins as usize != bins || h.lo != lo || h.hi != hi {
            return Err(StatsError::ColumnMismatch(first.column.clone(), h.column.clone()));
        }
        for b in &h.blocks {
            let width = (b.end - b.start) as f64;
            for cell in &mut density[b.start as usize..b.end as usize] {
                *cell += b.count as f64 / width;
            }
        }
    }
    let total: f64 = density.iter().sum();
    if total <= 0.0 {
        return Err(StatsError::NoData(first.column.clone()));
    }
    if hi <= lo {
        return Ok(vec![lo; probs.len()]);
    }
    let width = (hi - lo) / bins as f64;
    Ok(probs
        .iter()
        .map(|&p| {
            let target = p.clamp(0.0, 1.0) * total;
            let mut cum = 0.0;
            for (j, &c) in density.iter().enumerate() {
                if c > 0.0 && cum + c >= target {
                    let frac = ((target - cum) / c).clamp(0.0, 1.0);
                    return (lo + width * (j as f64 + frac)).clamp(lo, hi);
                }
                cum += c;
            }
            hi
        })
        .collect())
}

/// Per-column quantile estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnQuantiles {
    pub column: String,
    pub n: u64,
    pub min: f64,
    pub max: f64,
    pub probs: Vec<f64>,
    pub values: Vec<f64>,
}

pub const DEFAULT_PROBS: [f64; 3] = [0.25, 0.5, 0.75];
pub const DEFAULT_BINS: u32 = 512;

/// Round 1 gathers moments (for n, min and max), round 2 the block histograms.
pub(crate) fn run_quantile_rounds(
    runner: &mut RoundRunner<'_>,
    columns: &[String],
    probs: &[f64],
    bins: u32,
) -> Result<(Vec<MomentAggregate>, Vec<ColumnQuantiles>), FedError> {
    let replies = runner.round(Step::Moments { columns: columns.to_vec() })?;
    let per_site = replies
        .iter()
        .map(|r| match &r.payload.body {
            PayloadBody::Moments(m) => Ok(m.clone()),
            other => Err(FedError::protocol("moments", other)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let merged = merge_all(&per_site).map_err(FedError::from)?;
    let mut ranges = Vec::with_capacity(columns.len());
    for m in &merged {
        match (m.min, m.max) {
            (Some(lo), Some(hi)) => ranges.push((lo, hi)),
            _ => return Err(StatsError::NoData(m.column.clone()).into()),
        }
    }
    let replies = runner.round(Step::Histogram { columns: columns.to_vec(), ranges: ranges.clone(), bins })?;
    let hists = replies
        .iter()
        .map(|r| match &r.payload.body {
            PayloadBody::Histograms(h) => Ok(h.clone()),
            other => Err(FedError::protocol("histograms", other)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::with_capacity(columns.len());
    for (i, m) in merged.iter().enumerate() {
        let (lo, hi) = ranges[i];
        let values = if lo == hi {
            vec![lo; probs.len()]
        } else {
            let col_hists: Vec<&HistogramBlocks> = hists.iter().map(|h| &h[i]).collect();
            quantiles_from_histograms(&col_hists, probs)?
        };
        out.push(ColumnQuantiles { column: m.column.clone(), n: m.n, min: lo, max: hi, probs: probs.to_vec(), values });
    }
    Ok((merged, out))
}

/// Federated quantile estimates for numeric or date columns (dates as epoch days).
pub fn federated_quantiles(
    fed: &mut Federation,
    compute_spec_id: &str,
    columns: &[&str],
    probs: &[f64],
    bins: u32,
) -> Result<Vec<ColumnQuantiles>, FedError> {
    let payload = JobPayload::new(OpKind::Tableone)
        .with("columns", columns)
        .with("quantiles_only", true)
        .with("probs", probs)
        .with("bins", bins);
    match fed.run_job(compute_spec_id, payload)? {
        JobResult::Quantiles(q) => Ok(q),
        other => Err(FedError::unexpected("quantiles", &other)),
    }
}
