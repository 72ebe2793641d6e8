use std::collections::BTreeMap;
use std::thread;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::gateway::Gateway;
use super::message::{AggregatePayload, Envelope, Message, Step};
use super::{FedError, OpKind};
use crate::pca::{self, OneHotEncoding, PcaFit};
use crate::stats::correlation::{self, CorrelationResult};
use crate::stats::quantile::ColumnQuantiles;
use crate::stats::scatter::{self, ScatterResult};
use crate::stats::tableone::{self, BoxplotResult, TableOneRow};
use crate::survival::{cox, km, CoxFit, KaplanMeierCurve};

/// Job request; serializes as `{"mode": ..., "num_rounds": ..., <params>}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobPayload {
    pub mode: OpKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_rounds: Option<u32>,
    #[serde(flatten)]
    pub params: Map<String, Value>,
}

impl JobPayload {
    pub fn new(mode: OpKind) -> Self {
        JobPayload { mode, num_rounds: None, params: Map::new() }
    }

    pub fn with(mut self, key: &str, value: impl Serialize) -> Self {
        let value = serde_json::to_value(value).expect("parameter serializes");
        if key == "num_rounds" {
            self.num_rounds = value.as_u64().map(|n| n as u32);
        } else {
            self.params.insert(key.to_string(), value);
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Running,
    Succeeded,
    Failed,
    Denied,
}

impl JobStatus {
    fn rank(self) -> u8 {
        match self {
            JobStatus::Pending => 0,
            JobStatus::Running => 1,
            _ => 2,
        }
    }

    pub fn is_terminal(self) -> bool {
        self.rank() == 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "result", rename_all = "snake_case")]
pub enum JobResult {
    Quantiles(Vec<ColumnQuantiles>),
    TableOne(Vec<TableOneRow>),
    Boxplot(BoxplotResult),
    Correlation(CorrelationResult),
    Scatter(ScatterResult),
    Km(KaplanMeierCurve),
    Cox(Box<CoxFit>),
    Categories(OneHotEncoding),
    Pca(Box<PcaFit>),
}

impl JobResult {
    pub fn kind_name(&self) -> &'static str {
        match self {
            JobResult::Quantiles(_) => "quantiles",
            JobResult::TableOne(_) => "tableone",
            JobResult::Boxplot(_) => "boxplot",
            JobResult::Correlation(_) => "correlation",
            JobResult::Scatter(_) => "scatter",
            JobResult::Km(_) => "km",
            JobResult::Cox(_) => "cox",
            JobResult::Categories(_) => "categories",
            JobResult::Pca(_) => "pca",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contribution {
    pub gateway_id: String,
    pub dataset_id: String,
    pub round: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationResult {
    pub job_id: String,
    pub result: JobResult,
    pub provenance: Vec<Contribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub compute_spec_id: String,
    pub payload: JobPayload,
    pub status: JobStatus,
    pub outcome: Option<FederationResult>,
    pub error: Option<FedError>,
}

impl Job {
    pub(crate) fn new(job_id: String, compute_spec_id: String, payload: JobPayload) -> Self {
        Job { job_id, compute_spec_id, payload, status: JobStatus::Pending, outcome: None, error: None }
    }

    /// Moves the status forward; backward or repeated terminal transitions are refused.
    pub fn advance(&mut self, to: JobStatus) -> Result<(), FedError> {
        if to.rank() <= self.status.rank() {
            return Err(FedError::Protocol(format!("job {}: cannot move from {:?} to {:?}", self.job_id, self.status, to)));
        }
        self.status = to;
        Ok(())
    }
}

/// Validated, operation-specific parameters.
pub(crate) enum Plan {
    TableOne(tableone::TableOneParams),
    Correlation(correlation::CorrelationParams),
    Scatter(scatter::ScatterParams),
    Km(km::KmParams),
    Cox(cox::CoxParams),
    Pca(pca::PcaParams),
}

fn parse<T: serde::de::DeserializeOwned>(params: &Map<String, Value>) -> Result<T, FedError> {
    serde_json::from_value(Value::Object(params.clone())).map_err(|e| FedError::PayloadInvalid(e.to_string()))
}

impl Plan {
    pub(crate) fn from_payload(p: &JobPayload) -> Result<Self, FedError> {
        let invalid = FedError::PayloadInvalid;
        Ok(match p.mode {
            OpKind::Tableone => {
                let t: tableone::TableOneParams = parse(&p.params)?;
                t.validate().map_err(invalid)?;
                Plan::TableOne(t)
            }
            OpKind::Correlation => {
                let c: correlation::CorrelationParams = parse(&p.params)?;
                c.validate().map_err(invalid)?;
                Plan::Correlation(c)
            }
            OpKind::BinnedCount => {
                let s: scatter::ScatterParams = parse(&p.params)?;
                s.validate().map_err(invalid)?;
                Plan::Scatter(s)
            }
            OpKind::Km => {
                let k: km::KmParams = parse(&p.params)?;
                k.validate().map_err(invalid)?;
                Plan::Km(k)
            }
            OpKind::Cox => {
                let mut c: cox::CoxParams = parse(&p.params)?;
                if let Some(n) = p.num_rounds {
                    c.max_rounds = n;
                }
                c.validate().map_err(invalid)?;
                Plan::Cox(c)
            }
            OpKind::PcaCovariance => {
                let c: pca::PcaParams = parse(&p.params)?;
                c.validate().map_err(invalid)?;
                Plan::Pca(c)
            }
        })
    }

    pub(crate) fn execute(&self, runner: &mut RoundRunner<'_>) -> Result<JobResult, FedError> {
        match self {
            Plan::TableOne(p) => tableone::drive(runner, p),
            Plan::Correlation(p) => correlation::drive(runner, p),
            Plan::Scatter(p) => scatter::drive(runner, p),
            Plan::Km(p) => km::drive(runner, p),
            Plan::Cox(p) => cox::drive(runner, p),
            Plan::Pca(p) => pca::drive(runner, p),
        }
    }
}

/// One participating dataset's reply for a round.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteReply {
    pub gateway_id: String,
    pub dataset_id: String,
    pub payload: AggregatePayload,
}

/// Drives the synchronous round protocol for one job.
pub struct RoundRunner<'a> {
    gateways: &'a BTreeMap<String, Gateway>,
    targets: Vec<(String, String)>,
    job_id: String,
    op_kind: OpKind,
    round: u32,
    log: &'a mut Vec<String>,
    provenance: Vec<Contribution>,
}

impl<'a> RoundRunner<'a> {
    pub(crate) fn new(
        gateways: &'a BTreeMap<String, Gateway>,
        targets: Vec<(String, String)>,
        job_id: String,
        op_kind: OpKind,
        log: &'a mut Vec<String>,
    ) -> Self {
        RoundRunner { gateways, targets, job_id, op_kind, round: 0, log, provenance: Vec::new() }
    }

    pub fn rounds_run(&self) -> u32 {
        self.round
    }

    pub(crate) fn into_provenance(self) -> Vec<Contribution> {
        self.provenance
    }

    /// Broadcasts `step` to every dataset, waits for all replies, and returns them
    /// in (gateway, dataset) order. Any denial or failure aborts the job.
    pub fn round(&mut self, step: Step) -> Result<Vec<SiteReply>, FedError> {
        let round = self.round;
        self.round += 1;
        let requests: Vec<Vec<u8>> = self
            .targets
            .iter()
            .map(|(g, d)| {
                Envelope {
                    job_id: self.job_id.clone(),
                    round,
                    gateway_id: g.clone(),
                    op_kind: self.op_kind,
                    payload: Message::Request { dataset_id: d.clone(), step: step.clone() },
                }
                .to_bytes()
            })
            .collect();

        let gateways = self.gateways;
        let targets = &self.targets;
        let mut replies: Vec<Vec<u8>> = vec![Vec::new(); requests.len()];
        thread::scope(|scope| {
            let mut by_gateway: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, (g, _)) in targets.iter().enumerate() {
                by_gateway.entry(g.as_str()).or_default().push(i);
            }
            let handles: Vec<_> = by_gateway
                .into_iter()
                .map(|(g, idx)| {
                    let gw = &gateways[g];
                    let reqs: Vec<&[u8]> = idx.iter().map(|&i| requests[i].as_slice()).collect();
                    (idx, scope.spawn(move || reqs.into_iter().map(|r| gw.handle(r)).collect::<Vec<_>>()))
                })
                .collect();
            for (idx, h) in handles {
                let out = h.join().expect("gateway worker panicked");
                for (i, bytes) in idx.into_iter().zip(out) {
                    replies[i] = bytes;
                }
            }
        });

        for (req, rep) in requests.iter().zip(&replies) {
            self.log.push(String::from_utf8_lossy(req).into_owned());
            self.log.push(String::from_utf8_lossy(rep).into_owned());
        }

        let mut out = Vec::with_capacity(replies.len());
        for ((g, d), bytes) in self.targets.iter().zip(&replies) {
            let env = Envelope::from_bytes(bytes).map_err(FedError::Protocol)?;
            match env.payload {
                Message::Response { dataset_id, aggregate } => {
                    if dataset_id != *d || aggregate.round_index != round {
                        return Err(FedError::Protocol(format!("mismatched reply from {g}")));
                    }
                    self.provenance.push(Contribution { gateway_id: g.clone(), dataset_id: d.clone(), round });
                    out.push(SiteReply { gateway_id: g.clone(), dataset_id, payload: aggregate });
                }
                Message::Denied { dataset_id, reason } => {
                    return Err(FedError::PolicyDenied { gateway_id: g.clone(), dataset_id, reason })
                }
                Message::Failed { dataset_id, cause } => {
                    return Err(FedError::GatewayFailure { gateway_id: g.clone(), dataset_id, cause })
                }
                Message::Request { .. } => return Err(FedError::Protocol(format!("gateway {g} echoed a request"))),
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_shape_mirrors_listing() {
        let p = JobPayload::new(OpKind::Cox).with("num_rounds", 30).with("event_threshold", 2.0);
        let v = serde_json::to_value(&p).unwrap();
        assert_eq!(v["mode"], "cox");
        assert_eq!(v["num_rounds"], 30);
        assert_eq!(v["event_threshold"], 2.0);
        let back: JobPayload = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn status_moves_forward_only() {
        let mut j = Job::new("job-0001".into(), "spec-0001".into(), JobPayload::new(OpKind::Km));
        j.advance(JobStatus::Running).unwrap();
        assert!(j.advance(JobStatus::Pending).is_err());
        j.advance(JobStatus::Denied).unwrap();
        assert!(j.advance(JobStatus::Succeeded).is_err());
        assert!(j.status.is_terminal());
    }

    #[test]
    fn unknown_params_are_rejected() {
        let p = JobPayload::new(OpKind::Correlation).with("columns", ["EDSS"]).with("colour", "red");
        assert!(matches!(Plan::from_payload(&p), Err(FedError::PayloadInvalid(_))));
    }
}
