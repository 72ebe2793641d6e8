use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::cox::CoxModel;
use super::intervals::{compliant_grid, interval_counts_on, regular_boundaries};
use super::records::SurvivalRecord;
use super::SurvivalError;

/// Right-continuous step function: `initial` before the first jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub initial: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn eval(&self, t: f64) -> f64 {
        match self.times.partition_point(|&x| x <= t) {
            0 => self.initial,
            i => self.values[i - 1],
        }
    }
}

fn linear_predictor(x: &[f64], beta: &[f64]) -> f64 {
    x.iter().zip(beta).map(|(a, b)| a * b).sum()
}

/// Breslow cumulative baseline hazard of one stratum, jumping at each distinct event time.
pub fn breslow_baseline(records: &[SurvivalRecord], beta: &[f64]) -> StepFunction {
    let eta: Vec<f64> = records.iter().map(|r| linear_predictor(&r.x, beta)).collect();
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[b].time.cmp(&records[a].time));
    let mut jumps: Vec<(f64, f64)> = Vec::new();
    let mut s0 = 0.0;
    let mut i = 0;
    while i < order.len() {
        let t = records[order[i]].time;
        let mut d = 0u64;
        while i < order.len() && records[order[i]].time == t {
            s0 += (eta[order[i]] - shift).exp();
            d += records[order[i]].event as u64;
            i += 1;
        }
        if d > 0 {
            jumps.push((t as f64, d as f64 * (-shift).exp() / s0));
        }
    }
    jumps.reverse();
    let mut h = 0.0;
    let mut times = Vec::with_capacity(jumps.len());
    let mut values = Vec::with_capacity(jumps.len());
    for (t, dh) in jumps {
        h += dh;
        times.push(t);
        values.push(h);
    }
    StepFunction { initial: 0.0, times, values }
}

/// S(t|x) = exp(−H₀(t)·exp(βᵀx)).
pub fn survival_from_hazard(h0: &StepFunction, beta: &[f64], x: &[f64]) -> StepFunction {
    let risk = linear_predictor(x, beta).exp();
    StepFunction {
        initial: (-h0.initial * risk).exp(),
        times: h0.times.clone(),
        values: h0.values.iter().map(|h| (-h * risk).exp()).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineInterval {
    pub t_lo: i64,
    pub t_hi: i64,
    pub d: u64,
    pub n_at_risk: u64,
    /// Cumulative baseline hazard over all events before `t_hi`.
    pub h0: f64,
}

/// A site's baseline hazard as released: sampled on its own k-compliant grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteBaseline {
    #[serde(default)]
    pub dataset_id: String,
    pub n: u64,
    pub mean_x: Vec<f64>,
    pub intervals: Vec<BaselineInterval>,
}

impl SiteBaseline {
    /// Released cumulative hazard as a step function jumping at interval ends.
    pub fn hazard(&self) -> StepFunction {
        StepFunction {
            initial: 0.0,
            times: self.intervals.iter().map(|iv| iv.t_hi as f64).collect(),
            values: self.intervals.iter().map(|iv| iv.h0).collect(),
        }
    }
}

pub fn site_baseline(records: &[SurvivalRecord], beta: &[f64], width: i64, k: u64) -> Result<SiteBaseline, SurvivalError> {
    if width <= 0 {
        return Err(SurvivalError::InvalidGrid("interval width must be positive".into()));
    }
    let p = beta.len();
    let n = records.len() as u64;
    let mut mean_x = vec![0.0; p];
    if records.is_empty() {
        return Ok(SiteBaseline { dataset_id: String::new(), n, mean_x, intervals: Vec::new() });
    }
    for r in records {
        if r.x.len() != p {
            return Err(SurvivalError::DimensionMismatch { expected: p, got: r.x.len() });
        }
        for (m, x) in mean_x.iter_mut().zip(&r.x) {
            *m += x;
        }
    }
    for m in &mut mean_x {
        *m /= n as f64;
    }
    let max_time = records.iter().map(|r| r.time).max().unwrap_or(0);
    let grid = compliant_grid(records, regular_boundaries(width, max_time), k)?;
    let h = breslow_baseline(records, beta);
    let intervals = interval_counts_on(records, &grid)?
        .into_iter()
        .map(|iv| BaselineInterval {
            t_lo: iv.t_lo,
            t_hi: iv.t_hi,
            d: iv.d,
            n_at_risk: iv.n_at_risk,
            h0: h.eval((iv.t_hi - 1) as f64),
        })
        .collect();
    Ok(SiteBaseline { dataset_id: String::new(), n, mean_x, intervals })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedCoefficient {
    pub feature: String,
    pub beta: f64,
    pub mean: f64,
    /// β·mean, or β itself when the mean is zero.
    pub value: f64,
    pub zero_mean: bool,
}

pub fn normalize_coefficients(model: &CoxModel, means: &[f64]) -> Vec<NormalizedCoefficient> {
    model
        .features
        .iter()
        .zip(&model.beta)
        .zip(means)
        .map(|((f, &beta), &mean)| {
            let zero_mean = mean == 0.0;
            NormalizedCoefficient { feature: f.clone(), beta, mean, value: if zero_mean { beta } else { beta * mean }, zero_mean }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayCurve {
    pub times: Vec<i64>,
    pub survival: Vec<f64>,
}

/// Population curve: each site's S(t | its mean covariates), weighted by site size.
pub fn display_survival(model: &CoxModel) -> DisplayCurve {
    let n_total: u64 = model.baselines.iter().map(|b| b.n).sum();
    let mut times: BTreeSet<i64> = BTreeSet::from([0]);
    times.extend(model.baselines.iter().flat_map(|b| b.intervals.iter().map(|iv| iv.t_hi)));
    let curves: Vec<(f64, StepFunction)> = model
        .baselines
        .iter()
        .filter(|b| b.n > 0)
        .map(|b| (b.n as f64 / n_total as f64, survival_from_hazard(&b.hazard(), &model.beta, &b.mean_x)))
        .collect();
    let times: Vec<i64> = times.into_iter().collect();
    let survival = times.iter().map(|&t| curves.iter().map(|(w, s)| w * s.eval(t as f64)).sum::<f64>().min(1.0)).collect();
    DisplayCurve { times, survival }
}
