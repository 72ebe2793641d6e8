use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::intervals::{coarsen, regular_boundaries, IntervalCounts};
use super::SurvivalError;
use crate::runtime::{FedError, Federation, JobPayload, JobResult, OpKind, PayloadBody, RoundRunner, Step};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmInterval {
    pub t_lo: i64,
    pub t_hi: i64,
    pub d: u64,
    /// At risk at `t_lo`.
    pub n: u64,
    /// Survival at `t_hi`.
    #[serde(rename = "S")]
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KaplanMeierCurve {
    pub intervals: Vec<KmInterval>,
}

impl KaplanMeierCurve {
    pub fn boundaries(&self) -> Vec<i64> {
        let mut b: Vec<i64> = self.intervals.iter().map(|iv| iv.t_lo).collect();
        b.extend(self.intervals.last().map(|iv| iv.t_hi));
        b
    }

    /// S(t): 1 before the first interval closes, then the value at the last closed interval.
    pub fn survival_at(&self, t: i64) -> f64 {
        self.intervals.iter().take_while(|iv| iv.t_hi <= t).last().map_or(1.0, |iv| iv.s)
    }
}

/// Grouped product-limit estimate from per-site counts on one shared grid.
pub fn km_from_counts(per_site: &[Vec<IntervalCounts>]) -> Result<KaplanMeierCurve, SurvivalError> {
    let first = per_site.first().ok_or(SurvivalError::InvalidGrid("no site counts".into()))?;
    let mut intervals: Vec<KmInterval> =
        first.iter().map(|iv| KmInterval { t_lo: iv.t_lo, t_hi: iv.t_hi, d: 0, n: 0, s: 1.0 }).collect();
    for site in per_site {
        if site.len() != intervals.len() || site.iter().zip(&intervals).any(|(a, b)| (a.t_lo, a.t_hi) != (b.t_lo, b.t_hi)) {
            return Err(SurvivalError::InvalidGrid("sites reported different grids".into()));
        }
        for (acc, iv) in intervals.iter_mut().zip(site) {
            acc.d += iv.d;
            acc.n += iv.n_at_risk;
        }
    }
    let mut s = 1.0;
    for iv in &mut intervals {
        if iv.n > 0 {
            s *= 1.0 - iv.d as f64 / iv.n as f64;
        }
        iv.s = s;
    }
    Ok(KaplanMeierCurve { intervals })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct KmParams {
    #[serde(default = "default_threshold")]
    pub event_threshold: f64,
    #[serde(default = "default_width")]
    pub interval_width: i64,
}

pub(crate) fn default_threshold() -> f64 {
    2.0
}

pub(crate) fn default_width() -> i64 {
    30
}

impl KmParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.interval_width <= 0 {
            return Err("interval_width must be positive".into());
        }
        if !self.event_threshold.is_finite() {
            return Err("event_threshold must be finite".into());
        }
        Ok(())
    }
}

/// Extent round, veto rounds until no site objects, then the count round.
pub(crate) fn drive(runner: &mut RoundRunner<'_>, p: &KmParams) -> Result<JobResult, FedError> {
    let replies = runner.round(Step::SurvivalExtent { event_threshold: p.event_threshold, interval_width: p.interval_width })?;
    let mut n_intervals = 0;
    for r in &replies {
        match r.payload.body {
            PayloadBody::SurvivalExtent { n_intervals: m, .. } => n_intervals = n_intervals.max(m),
            ref other => return Err(FedError::protocol("survival extent", other)),
        }
    }
    let mut boundaries = regular_boundaries(p.interval_width, (n_intervals.max(1) as i64) * p.interval_width - 1);
    // Each effective veto removes at least one interior boundary.
    for _ in 0..boundaries.len() {
        let replies = runner.round(Step::IntervalVeto { event_threshold: p.event_threshold, boundaries: boundaries.clone() })?;
        let mut remove = BTreeSet::new();
        for r in &replies {
            match &r.payload.body {
                PayloadBody::IntervalVeto { remove: v } => remove.extend(v.iter().copied()),
                other => return Err(FedError::protocol("interval veto", other)),
            }
        }
        let next = coarsen(&boundaries, &remove);
        if next == boundaries {
            break;
        }
        boundaries = next;
    }
    let replies = runner.round(Step::IntervalCounts { event_threshold: p.event_threshold, boundaries })?;
    let per_site = replies
        .into_iter()
        .map(|r| match r.payload.body {
            PayloadBody::IntervalCounts(c) => Ok(c),
            other => Err(FedError::protocol("interval counts", &other)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(JobResult::Km(km_from_counts(&per_site)?))
}

/// Interval-grouped Kaplan-Meier curve over every dataset of the compute spec.
pub fn federated_km(
    fed: &mut Federation,
    compute_spec_id: &str,
    event_threshold: f64,
    interval_width: i64,
) -> Result<KaplanMeierCurve, FedError> {
    let payload = JobPayload::new(OpKind::Km).with("event_threshold", event_threshold).with("interval_width", interval_width);
    match fed.run_job(compute_spec_id, payload)? {
        JobResult::Km(c) => Ok(c),
        other => Err(FedError::unexpected("km", &other)),
    }
}
