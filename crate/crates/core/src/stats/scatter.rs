//! Box-discretized scatter counts with small-cell suppression.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::moments::merge_all;
use super::quantile::cell_index;
use super::{complete_cases, StatsError};
use crate::cohort::CohortTable;
use crate::runtime::{FedError, Federation, JobPayload, JobResult, OpKind, PayloadBody, RoundRunner, Step};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCell {
    pub ix: u32,
    pub iy: u32,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramGrid {
    pub x_column: String,
    pub y_column: String,
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
    pub x_bins: u32,
    pub y_bins: u32,
    /// Reported cells in (ix, iy) order; absent cells are empty or suppressed.
    pub cells: Vec<GridCell>,
    /// Total count of suppressed cells, never broken down by cell.
    pub suppressed_total: u64,
}

impl HistogramGrid {
    pub fn total(&self) -> u64 {
        self.cells.iter().map(|c| c.count).sum::<u64>() + self.suppressed_total
    }

    pub fn count_at(&self, ix: u32, iy: u32) -> u64 {
        self.cells.iter().find(|c| c.ix == ix && c.iy == iy).map_or(0, |c| c.count)
    }

    fn same_grid(&self, other: &Self) -> bool {
        (self.x_column.as_str(), self.y_column.as_str(), self.x_bins, self.y_bins)
            == (other.x_column.as_str(), other.y_column.as_str(), other.x_bins, other.y_bins)
            && (self.x_lo, self.x_hi, self.y_lo, self.y_hi) == (other.x_lo, other.x_hi, other.y_lo, other.y_hi)
    }
}

/// Suppresses cells below `k`; if the suppressed mass is itself in (0, k),
/// keeps suppressing the smallest reported cells until it reaches `k`.
pub fn suppress(mut cells: Vec<GridCell>, k: u64) -> (Vec<GridCell>, u64) {
    let mut suppressed: u64 = cells.iter().filter(|c| c.count < k).map(|c| c.count).sum();
    cells.retain(|c| c.count >= k && c.count > 0);
    while suppressed > 0 && suppressed < k && !cells.is_empty() {
        let (i, _) = cells.iter().enumerate().min_by_key(|(_, c)| c.count).expect("non-empty");
        suppressed += cells.remove(i).count;
    }
    (cells, suppressed)
}

#[allow(clippy::too_many_arguments)]
pub fn local_grid(
    table: &CohortTable,
    x: &str,
    y: &str,
    x_range: (f64, f64),
    y_range: (f64, f64),
    x_bins: u32,
    y_bins: u32,
    k: u64,
) -> Result<HistogramGrid, StatsError> {
    let (x_bins, y_bins) = (x_bins.max(1), y_bins.max(1));
    let mut counts: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for row in complete_cases(table, &[x.to_string(), y.to_string()])? {
        let ix = cell_index(row[0], x_range.0, x_range.1, x_bins);
        let iy = cell_index(row[1], y_range.0, y_range.1, y_bins);
        *counts.entry((ix, iy)).or_default() += 1;
    }
    let cells = counts.into_iter().map(|((ix, iy), count)| GridCell { ix, iy, count }).collect();
    let (cells, suppressed_total) = suppress(cells, k);
    Ok(HistogramGrid {
        x_column: x.to_string(),
        y_column: y.to_string(),
        x_lo: x_range.0,
        x_hi: x_range.1,
        y_lo: y_range.0,
        y_hi: y_range.1,
        x_bins,
        y_bins,
        cells,
        suppressed_total,
    })
}

/// Sums reported cells and suppressed totals of grids on one shared box layout.
pub fn combine_grids(grids: &[&HistogramGrid]) -> Result<HistogramGrid, StatsError> {
    let first = *grids.first().ok_or_else(|| StatsError::NoData("grid".into()))?;
    let mut cells: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    let mut suppressed_total = 0;
    for g in grids {
        if !first.same_grid(g) {
            return Err(StatsError::ColumnMismatch(first.x_column.clone(), g.x_column.clone()));
        }
        for c in &g.cells {
            *cells.entry((c.ix, c.iy)).or_default() += c.count;
        }
        suppressed_total += g.suppressed_total;
    }
    Ok(HistogramGrid {
        cells: cells.into_iter().map(|((ix, iy), count)| GridCell { ix, iy, count }).collect(),
        suppressed_total,
        ..first.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteGrid {
    pub dataset_id: String,
    pub grid: HistogramGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterResult {
    pub per_site: Vec<SiteGrid>,
    pub combined: HistogramGrid,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ScatterParams {
    pub x: String,
    pub y: String,
    #[serde(default = "default_bins")]
    pub x_bins: u32,
    #[serde(default = "default_bins")]
    pub y_bins: u32,
}

fn default_bins() -> u32 {
    12
}

impl ScatterParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.x_bins == 0 || self.y_bins == 0 {
            return Err("bin counts must be positive".into());
        }
        Ok(())
    }
}

pub(crate) fn drive(runner: &mut RoundRunner<'_>, p: &ScatterParams) -> Result<JobResult, FedError> {
    let columns = vec![p.x.clone(), p.y.clone()];
    let replies = runner.round(Step::Moments { columns })?;
    let per_site = replies
        .iter()
        .map(|r| match &r.payload.body {
            PayloadBody::Moments(m) => Ok(m.clone()),
            other => Err(FedError::protocol("moments", other)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let merged = merge_all(&per_site)?;
    let range = |i: usize| match (merged[i].min, merged[i].max) {
        (Some(lo), Some(hi)) => Ok((lo, hi)),
        _ => Err(FedError::Stats(StatsError::NoData(merged[i].column.clone()))),
    };
    let (x_range, y_range) = (range(0)?, range(1)?);
    let step = Step::Grid { x: p.x.clone(), y: p.y.clone(), x_range, y_range, x_bins: p.x_bins, y_bins: p.y_bins };
    let replies = runner.round(step)?;
    let per_site = replies
        .into_iter()
        .map(|r| match r.payload.body {
            PayloadBody::Grid(grid) => Ok(SiteGrid { dataset_id: r.dataset_id, grid }),
            other => Err(FedError::protocol("grid", &other)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let combined = combine_grids(&per_site.iter().map(|s| &s.grid).collect::<Vec<_>>())?;
    Ok(JobResult::Scatter(ScatterResult { per_site, combined }))
}

/// Per-site and combined box counts over (x, y), bounds from the federated min/max.
pub fn federated_binned_scatter(
    fed: &mut Federation,
    compute_spec_id: &str,
    x_column: &str,
    y_column: &str,
    x_bins: u32,
    y_bins: u32,
) -> Result<ScatterResult, FedError> {
    let payload = JobPayload::new(OpKind::BinnedCount)
        .with("x", x_column)
        .with("y", y_column)
        .with("x_bins", x_bins)
        .with("y_bins", y_bins);
    match fed.run_job(compute_spec_id, payload)? {
        JobResult::Scatter(s) => Ok(s),
        other => Err(FedError::unexpected("scatter", &other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cell(ix: u32, count: u64) -> GridCell {
        GridCell { ix, iy: 0, count }
    }

    #[test]
    fn small_cell_is_suppressed() {
        let (cells, s) = suppress(vec![cell(0, 4), cell(1, 10), cell(2, 7)], 5);
        // 4 alone would be a sub-threshold total, so the 7-cell joins it.
        assert_eq!(cells, vec![cell(1, 10)]);
        assert_eq!(s, 11);
        let (cells, s) = suppress(vec![cell(0, 4), cell(1, 3), cell(2, 9)], 5);
        assert_eq!((cells, s), (vec![cell(2, 9)], 7));
    }

    #[test]
    fn impossible_suppression_leaves_small_total() {
        let (cells, s) = suppress(vec![cell(0, 3)], 5);
        assert!(cells.is_empty());
        assert_eq!(s, 3);
    }

    proptest! {
        #[test]
        fn suppression_is_sound_and_conserves_mass(
            counts in prop::collection::vec(0u64..20, 1..30),
            k in 1u64..8,
        ) {
            let cells: Vec<GridCell> = counts.iter().enumerate().map(|(i, &c)| cell(i as u32, c)).collect();
            let total: u64 = counts.iter().sum();
            let (kept, s) = suppress(cells, k);
            prop_assert!(kept.iter().all(|c| c.count >= k));
            prop_assert_eq!(kept.iter().map(|c| c.count).sum::<u64>() + s, total);
            prop_assert!(s == 0 || s >= k || total < k);
        }
    }
}
