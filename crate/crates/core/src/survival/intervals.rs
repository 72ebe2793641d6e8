//! Privacy interval grids for grouped survival counts.
//!
//! A grid is a strictly increasing list of day boundaries starting at 0; its
//! last entry (the horizon) lies beyond every observed time. Sites agree on a
//! grid by vetoing boundaries: merging intervals can only add counts that are
//! each 0 or at least k, so a coarser grid never breaks compliance.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::records::SurvivalRecord;
use super::SurvivalError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalCounts {
    pub index: u32,
    pub t_lo: i64,
    pub t_hi: i64,
    /// Events with t_lo ≤ time < t_hi.
    pub d: u64,
    /// Subjects with time ≥ t_lo.
    pub n_at_risk: u64,
}

/// Boundaries 0, w, 2w, … up to the first multiple of `w` strictly above `max_time`.
pub fn regular_boundaries(width: i64, max_time: i64) -> Vec<i64> {
    let width = width.max(1);
    let n = max_time.max(0) / width + 1;
    (0..=n).map(|i| i * width).collect()
}

fn check_grid(boundaries: &[i64]) -> Result<(), SurvivalError> {
    if boundaries.len() < 2 || boundaries[0] != 0 {
        return Err(SurvivalError::InvalidGrid("grid needs at least two boundaries starting at 0".into()));
    }
    if boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SurvivalError::InvalidGrid("boundaries must be strictly increasing".into()));
    }
    Ok(())
}

/// Raw event and at-risk counts on a fixed grid.
pub fn interval_counts_on(records: &[SurvivalRecord], boundaries: &[i64]) -> Result<Vec<IntervalCounts>, SurvivalError> {
    check_grid(boundaries)?;
    let horizon = *boundaries.last().expect("checked");
    let mut out: Vec<IntervalCounts> = boundaries
        .windows(2)
        .enumerate()
        .map(|(i, w)| IntervalCounts { index: i as u32, t_lo: w[0], t_hi: w[1], d: 0, n_at_risk: 0 })
        .collect();
    for r in records {
        if r.time >= horizon {
            return Err(SurvivalError::InvalidGrid(format!("time {} beyond horizon {horizon}", r.time)));
        }
        let j = boundaries.partition_point(|&b| b <= r.time) - 1;
        if r.event {
            out[j].d += 1;
        }
        for iv in &mut out[..=j] {
            iv.n_at_risk += 1;
        }
    }
    Ok(out)
}

/// Interior boundaries this site needs removed before it can release counts with threshold `k`.
///
/// Once the at-risk count first drops into (0, k), every later boundary goes.
/// Otherwise an interval with d in (0, k) loses its right boundary, or its
/// left one when it is the last interval. An empty list means the grid complies
/// or cannot be made to.
pub fn veto_boundaries(records: &[SurvivalRecord], boundaries: &[i64], k: u64) -> Result<Vec<i64>, SurvivalError> {
    let counts = interval_counts_on(records, boundaries)?;
    let small = |x: u64| x > 0 && x < k;
    let last = counts.len() - 1;
    if let Some(j) = counts.iter().skip(1).position(|iv| small(iv.n_at_risk)).map(|p| p + 1) {
        return Ok(boundaries[j..=last].to_vec());
    }
    let mut remove = BTreeSet::new();
    for (i, iv) in counts.iter().enumerate() {
        if small(iv.d) {
            if i < last {
                remove.insert(boundaries[i + 1]);
            } else if i > 0 {
                remove.insert(boundaries[i]);
            }
        }
    }
    Ok(remove.into_iter().collect())
}

/// Removes `remove` from the interior of `boundaries`; 0 and the horizon stay.
pub fn coarsen(boundaries: &[i64], remove: &BTreeSet<i64>) -> Vec<i64> {
    let last = boundaries.len() - 1;
    boundaries.iter().enumerate().filter(|&(i, b)| i == 0 || i == last || !remove.contains(b)).map(|(_, &b)| b).collect()
}

/// Local grid agreement: veto until the site's own counts comply.
pub fn compliant_grid(records: &[SurvivalRecord], mut boundaries: Vec<i64>, k: u64) -> Result<Vec<i64>, SurvivalError> {
    loop {
        let remove = veto_boundaries(records, &boundaries, k)?;
        if remove.is_empty() {
            return Ok(boundaries);
        }
        boundaries = coarsen(&boundaries, &remove.into_iter().collect());
    }
}

/// Counts on the width-`width` grid up to `horizon`, merged until every count is 0 or ≥ k.
pub fn local_interval_counts(
    records: &[SurvivalRecord],
    width: i64,
    horizon: i64,
    k: u64,
) -> Result<Vec<IntervalCounts>, SurvivalError> {
    if width <= 0 {
        return Err(SurvivalError::InvalidGrid("interval width must be positive".into()));
    }
    let max_time = records.iter().map(|r| r.time).max().unwrap_or(0).max(horizon - 1);
    let grid = compliant_grid(records, regular_boundaries(width, max_time), k)?;
    interval_counts_on(records, &grid)
}
