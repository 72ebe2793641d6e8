//! Site-stratified Cox regression with Breslow ties, fitted by federated Newton rounds.

use serde::{Deserialize, Serialize};

use super::baseline::{display_survival, normalize_coefficients, DisplayCurve, NormalizedCoefficient, SiteBaseline};
use super::records::{CoxSpec, SurvivalRecord};
use super::SurvivalError;
use crate::cohort::schema::COX_FEATURES;
use crate::linalg::solve_psd;
use crate::pca::PcaProjection;
use crate::runtime::{FedError, Federation, JobPayload, JobResult, OpKind, PayloadBody, RoundRunner, Step};

/// One site's log partial likelihood and its exact derivatives at β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxRoundPayload {
    pub loglik: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
    pub n: u64,
    pub n_events: u64,
}

impl CoxRoundPayload {
    fn zero(p: usize, n: u64) -> Self {
        CoxRoundPayload { loglik: 0.0, gradient: vec![0.0; p], hessian: vec![vec![0.0; p]; p], n, n_events: 0 }
    }

    /// True when the site has no events and so contributes nothing.
    pub fn no_events(&self) -> bool {
        self.n_events == 0
    }
}

/// Breslow partial likelihood of one stratum.
pub fn local_cox_round(records: &[SurvivalRecord], beta: &[f64]) -> Result<CoxRoundPayload, SurvivalError> {
    let p = beta.len();
    if let Some(r) = records.iter().find(|r| r.x.len() != p) {
        return Err(SurvivalError::DimensionMismatch { expected: p, got: r.x.len() });
    }
    let mut out = CoxRoundPayload::zero(p, records.len() as u64);
    if records.is_empty() {
        return Ok(out);
    }
    let eta: Vec<f64> = records.iter().map(|r| r.x.iter().zip(beta).map(|(x, b)| x * b).sum()).collect();
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[b].time.cmp(&records[a].time));

    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![vec![0.0; p]; p];
    let mut i = 0;
    while i < order.len() {
        let t = records[order[i]].time;
        let mut j = i;
        let mut d = 0u64;
        let mut event_eta = 0.0;
        let mut event_x = vec![0.0; p];
        while j < order.len() && records[order[j]].time == t {
            let r = &records[order[j]];
            let w = (eta[order[j]] - shift).exp();
            s0 += w;
            for a in 0..p {
                s1[a] += w * r.x[a];
                for b in 0..=a {
                    s2[a][b] += w * r.x[a] * r.x[b];
                }
            }
            if r.event {
                d += 1;
                event_eta += eta[order[j]];
                for a in 0..p {
                    event_x[a] += r.x[a];
                }
            }
            j += 1;
        }
        if d > 0 {
            let df = d as f64;
            out.n_events += d;
            out.loglik += event_eta - df * (s0.ln() + shift);
            let mean: Vec<f64> = s1.iter().map(|v| v / s0).collect();
            for a in 0..p {
                out.gradient[a] += event_x[a] - df * mean[a];
                for b in 0..=a {
                    out.hessian[a][b] -= df * (s2[a][b] / s0 - mean[a] * mean[b]);
                }
            }
        }
        i = j;
    }
    for a in 0..p {
        for b in 0..a {
            out.hessian[b][a] = out.hessian[a][b];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub max_rounds: u32,
    pub tol: f64,
    pub grad_tol: f64,
    pub max_halvings: u32,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { max_rounds: 30, tol: 1e-9, grad_tol: 1e-8, max_halvings: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxIterate {
    pub beta: Vec<f64>,
    pub loglik: f64,
    pub grad_inf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Newton updates applied.
    pub rounds: u32,
    pub loglik: f64,
    pub grad_inf: f64,
    /// Likelihood evaluations, including step-halving retries.
    pub evaluations: u32,
    pub trace: Vec<CoxIterate>,
}

pub struct NewtonFit {
    pub beta: Vec<f64>,
    pub report: ConvergenceReport,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

type Eval = (f64, Vec<f64>, Vec<Vec<f64>>);

/// Newton ascent from β = 0 with step halving.
///
/// Stops when the gradient's ∞-norm drops below `grad_tol` or an accepted step
/// changes the log-likelihood by less than `tol`.
pub fn newton_maximize<E: From<SurvivalError>>(
    p: usize,
    opts: NewtonOptions,
    mut eval: impl FnMut(&[f64]) -> Result<Eval, E>,
) -> Result<NewtonFit, E> {
    let mut beta = vec![0.0; p];
    let (mut ll, mut g, mut h) = eval(&beta)?;
    let mut evaluations = 1;
    let mut trace = vec![CoxIterate { beta: beta.clone(), loglik: ll, grad_inf: inf_norm(&g) }];
    let done = |beta: Vec<f64>, rounds, ll, g: &[f64], evaluations, trace| {
        Ok(NewtonFit { beta, report: ConvergenceReport { rounds, loglik: ll, grad_inf: inf_norm(g), evaluations, trace } })
    };
    for round in 1..=opts.max_rounds {
        if inf_norm(&g) < opts.grad_tol {
            return done(beta, round - 1, ll, &g, evaluations, trace);
        }
        let neg_h: Vec<Vec<f64>> = h.iter().map(|row| row.iter().map(|v| -v).collect()).collect();
        let delta = solve_psd(&neg_h, &g).ok_or(SurvivalError::SingularHessian)?;
        let mut step = 1.0;
        let mut halvings = 0;
        let (new_beta, new_ll, new_g, new_h) = loop {
            let cand: Vec<f64> = beta.iter().zip(&delta).map(|(b, d)| b + step * d).collect();
            let (l2, g2, h2) = eval(&cand)?;
            evaluations += 1;
            if (l2.is_finite() && l2 >= ll) || halvings >= opts.max_halvings {
                break (cand, l2, g2, h2);
            }
            step /= 2.0;
            halvings += 1;
        };
        if !new_ll.is_finite() {
            return Err(SurvivalError::NotConverged { rounds: round }.into());
        }
        let change = new_ll - ll;
        (beta, ll, g, h) = (new_beta, new_ll, new_g, new_h);
        trace.push(CoxIterate { beta: beta.clone(), loglik: ll, grad_inf: inf_norm(&g) });
        if change.abs() < opts.tol || inf_norm(&g) < opts.grad_tol {
            return done(beta, round, ll, &g, evaluations, trace);
        }
    }
    Err(SurvivalError::NotConverged { rounds: opts.max_rounds }.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum CoxWarning {
    /// |β| above 50: the likelihood is likely monotone in this feature.
    MonotoneLikelihood { feature: String, beta: f64 },
    /// Some sites had no events and contributed nothing.
    NoEventSites { datasets: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub features: Vec<String>,
    pub beta: Vec<f64>,
    pub baselines: Vec<SiteBaseline>,
    pub convergence: ConvergenceReport,
    pub warnings: Vec<CoxWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub model: CoxModel,
    /// Federated covariate means over the fitted records.
    pub means: Vec<f64>,
    pub normalized: Vec<NormalizedCoefficient>,
    pub display_curve: DisplayCurve,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct CoxParams {
    #[serde(default = "default_features")]
    pub features: Vec<String>,
    #[serde(default = "super::km::default_threshold")]
    pub event_threshold: f64,
    #[serde(default = "default_rounds")]
    pub max_rounds: u32,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "super::km::default_width")]
    pub interval_width: i64,
    #[serde(default)]
    pub projection: Option<PcaProjection>,
}

fn default_features() -> Vec<String> {
    COX_FEATURES.iter().map(|s| s.to_string()).collect()
}

fn default_rounds() -> u32 {
    30
}

fn default_tol() -> f64 {
    1e-9
}

impl CoxParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.features.is_empty() && self.projection.is_none() {
            return Err("cox needs at least one feature".into());
        }
        if self.max_rounds == 0 {
            return Err("max_rounds must be positive".into());
        }
        if !(self.tol > 0.0) {
            return Err("tol must be positive".into());
        }
        if self.interval_width <= 0 {
            return Err("interval_width must be positive".into());
        }
        Ok(())
    }

    fn spec(&self) -> CoxSpec {
        CoxSpec { features: self.features.clone(), event_threshold: self.event_threshold, projection: self.projection.clone() }
    }
}

pub(crate) fn drive(runner: &mut RoundRunner<'_>, params: &CoxParams) -> Result<JobResult, FedError> {
    let spec = params.spec();
    let names = spec.feature_names();
    let p = names.len();
    let opts = NewtonOptions { max_rounds: params.max_rounds, tol: params.tol, ..NewtonOptions::default() };
    let mut silent: Vec<String> = Vec::new();
    let fit = newton_maximize::<FedError>(p, opts, |beta| {
        let replies = runner.round(Step::CoxRound { model: spec.clone(), beta: beta.to_vec() })?;
        let mut total = CoxRoundPayload::zero(p, 0);
        silent.clear();
        for r in &replies {
            let PayloadBody::CoxRound(c) = &r.payload.body else {
                return Err(FedError::protocol("cox round", &r.payload.body));
            };
            if c.gradient.len() != p {
                return Err(SurvivalError::DimensionMismatch { expected: p, got: c.gradient.len() }.into());
            }
            if c.no_events() {
                silent.push(r.dataset_id.clone());
            }
            total.loglik += c.loglik;
            total.n_events += c.n_events;
            for a in 0..p {
                total.gradient[a] += c.gradient[a];
                for b in 0..p {
                    total.hessian[a][b] += c.hessian[a][b];
                }
            }
        }
        if total.n_events == 0 {
            return Err(SurvivalError::NoEvents.into());
        }
        Ok((total.loglik, total.gradient, total.hessian))
    })?;

    let replies =
        runner.round(Step::Baseline { model: spec.clone(), beta: fit.beta.clone(), interval_width: params.interval_width })?;
    let mut baselines = Vec::with_capacity(replies.len());
    for r in replies {
        match r.payload.body {
            PayloadBody::Baseline(mut b) => {
                b.dataset_id = r.dataset_id;
                baselines.push(b);
            }
            other => return Err(FedError::protocol("baseline", &other)),
        }
    }
    let n_total: u64 = baselines.iter().map(|b| b.n).sum();
    let means: Vec<f64> =
        (0..p).map(|a| baselines.iter().map(|b| b.n as f64 * b.mean_x[a]).sum::<f64>() / (n_total.max(1) as f64)).collect();

    let mut warnings: Vec<CoxWarning> = names
        .iter()
        .zip(&fit.beta)
        .filter(|(_, b)| b.abs() > 50.0)
        .map(|(f, &b)| CoxWarning::MonotoneLikelihood { feature: f.clone(), beta: b })
        .collect();
    if !silent.is_empty() {
        warnings.push(CoxWarning::NoEventSites { datasets: silent });
    }
    let model = CoxModel { features: names, beta: fit.beta, baselines, convergence: fit.report, warnings };
    let normalized = normalize_coefficients(&model, &means);
    let display_curve = display_survival(&model);
    Ok(JobResult::Cox(Box::new(CoxFit { model, means, normalized, display_curve })))
}

/// Stratified Cox fit over every dataset of the compute spec.
pub fn federated_cox_fit(
    fed: &mut Federation,
    compute_spec_id: &str,
    features: &[&str],
    event_threshold: f64,
    max_rounds: u32,
    tol: f64,
) -> Result<CoxFit, FedError> {
    let payload = JobPayload::new(OpKind::Cox)
        .with("num_rounds", max_rounds)
        .with("features", features)
        .with("event_threshold", event_threshold)
        .with("tol", tol);
    match fed.run_job(compute_spec_id, payload)? {
        JobResult::Cox(c) => Ok(*c),
        other => Err(FedError::unexpected("cox", &other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(time: i64, event: bool, x: &[f64]) -> SurvivalRecord {
        SurvivalRecord { row: 0, time, event, x: x.to_vec() }
    }

    fn fit_local(records: &[SurvivalRecord], p: usize) -> NewtonFit {
        newton_maximize::<SurvivalError>(p, NewtonOptions::default(), |b| {
            let c = local_cox_round(records, b)?;
            Ok((c.loglik, c.gradient, c.hessian))
        })
        .unwrap()
    }

    #[test]
    fn hand_evaluated_likelihood_at_zero() {
        let rs = [rec(1, true, &[0.0]), rec(2, true, &[1.0]), rec(3, false, &[1.0])];
        let c = local_cox_round(&rs, &[0.0]).unwrap();
        assert!((c.loglik - (-(3f64.ln()) - 2f64.ln())).abs() < 1e-14);
        assert!((c.gradient[0] + 2.0 / 3.0).abs() < 1e-14);
        assert_eq!(c.n_events, 2);
    }

    #[test]
    fn closed_form_optimum() {
        let rs = [rec(1, true, &[1.0]), rec(2, true, &[0.0]), rec(3, false, &[1.0])];
        let f = fit_local(&rs, 1);
        assert!((f.beta[0] + 0.5 * 2f64.ln()).abs() < 1e-8, "{:?}", f.beta);
    }

    #[test]
    fn constant_covariate_is_flat() {
        let rs = [rec(1, true, &[2.0]), rec(2, false, &[2.0]), rec(3, true, &[2.0])];
        let c = local_cox_round(&rs, &[0.7]).unwrap();
        assert!(c.gradient[0].abs() < 1e-12);
        let f = fit_local(&rs, 1);
        assert_eq!(f.beta, vec![0.0]);
        assert_eq!(f.report.rounds, 0);
    }

    #[test]
    fn all_censored_site_contributes_zero() {
        let rs = [rec(1, false, &[1.0]), rec(2, false, &[0.0])];
        let c = local_cox_round(&rs, &[0.3]).unwrap();
        assert!(c.no_events());
        assert_eq!((c.loglik, c.gradient[0], c.hessian[0][0]), (0.0, 0.0, 0.0));
    }

    #[test]
    fn ties_use_breslow() {
        // Two tied events at t=1 among three at risk: ℓ(0) = 0 - 2 ln 3.
        let rs = [rec(1, true, &[1.0]), rec(1, true, &[0.0]), rec(2, false, &[1.0])];
        let c = local_cox_round(&rs, &[0.0]).unwrap();
        assert!((c.loglik + 2.0 * 3f64.ln()).abs() < 1e-14);
        assert!((c.gradient[0] - (1.0 - 2.0 * 2.0 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            local_cox_round(&[rec(1, true, &[1.0, 2.0])], &[0.0]),
            Err(SurvivalError::DimensionMismatch { expected: 1, got: 2 })
        ));
    }
}
