//! In-process federation: orchestrator, gateways, policies, compute specs and jobs.
//!
//! Gateways exchange only serialized envelopes with the orchestrator. Every
//! envelope of every job is appended to a JSON-lines message log that the
//! audit can replay.

pub mod audit;
mod gateway;
mod job;
pub mod message;
pub mod policy;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use gateway::Gateway;
pub use job::{Contribution, FederationResult, Job, JobPayload, JobResult, JobStatus, RoundRunner, SiteReply};
pub use message::{AggregatePayload, Envelope, Message, PayloadBody, Step};
pub use policy::{policy_check, AssetPolicy, DenyReason, PolicyDecision};

use crate::cohort::CohortTable;
use crate::pca::PcaError;
use crate::stats::StatsError;
use crate::survival::SurvivalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Tableone,
    Correlation,
    BinnedCount,
    Km,
    Cox,
    PcaCovariance,
}

impl OpKind {
    pub const ALL: [OpKind; 6] =
        [OpKind::Tableone, OpKind::Correlation, OpKind::BinnedCount, OpKind::Km, OpKind::Cox, OpKind::PcaCovariance];

    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Tableone => "tableone",
            OpKind::Correlation => "correlation",
            OpKind::BinnedCount => "binned_count",
            OpKind::Km => "km",
            OpKind::Cox => "cox",
            OpKind::PcaCovariance => "pca_covariance",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Why a gateway could not compute its local statistic.
#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
pub enum LocalError {
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("malformed request: {0}")]
    Malformed(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Survival(#[from] SurvivalError),
    #[error(transparent)]
    Pca(#[from] PcaError),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
pub enum FedError {
    #[error("gateway `{0}` already exists")]
    DuplicateGateway(String),
    #[error("unknown gateway `{0}`")]
    UnknownGateway(String),
    #[error("dataset `{0}` is already registered")]
    DuplicateDataset(String),
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("invalid asset policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid compute spec: {0}")]
    InvalidComputeSpec(String),
    #[error("unknown compute spec `{0}`")]
    UnknownComputeSpec(String),
    #[error("compute spec `{0}` is not active")]
    InactiveComputeSpec(String),
    #[error("invalid job payload: {0}")]
    PayloadInvalid(String),
    #[error("policy denied at gateway `{gateway_id}` (dataset `{dataset_id}`): {reason}")]
    PolicyDenied { gateway_id: String, dataset_id: String, reason: DenyReason },
    #[error("gateway `{gateway_id}` failed on dataset `{dataset_id}`: {cause}")]
    GatewayFailure { gateway_id: String, dataset_id: String, cause: LocalError },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Survival(#[from] SurvivalError),
    #[error(transparent)]
    Pca(#[from] PcaError),
}

impl FedError {
    pub(crate) fn protocol(expected: &str, got: &PayloadBody) -> Self {
        FedError::Protocol(format!("expected {expected}, got {}", got.kind_name()))
    }

    pub(crate) fn unexpected(expected: &str, got: &JobResult) -> Self {
        FedError::Protocol(format!("expected a {expected} result, got {}", got.kind_name()))
    }

    pub fn is_policy(&self) -> bool {
        matches!(self, FedError::PolicyDenied { .. })
    }

    /// Numerical failures on the orchestrator side.
    pub fn is_numeric(&self) -> bool {
        match self {
            FedError::Stats(e) => matches!(e, StatsError::DegenerateVariance(_)),
            FedError::Survival(e) => {
                matches!(e, SurvivalError::SingularHessian | SurvivalError::NotConverged { .. } | SurvivalError::NoEvents)
            }
            FedError::Pca(e) => matches!(e, PcaError::NoConvergence { .. } | PcaError::InsufficientData(_)),
            _ => false,
        }
    }
}

/// Resource hints from the compute-spec listing; recorded, not enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resources {
    pub client_memory: u64,
    pub client_n_cpu: u64,
    pub client_n_gpu: u64,
    pub server_memory: u64,
    pub server_n_cpu: u64,
}

impl Default for Resources {
    fn default() -> Self {
        Resources { client_memory: 32000, client_n_cpu: 14, client_n_gpu: 1, server_memory: 16000, server_n_cpu: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputeSpec {
    pub compute_spec_id: String,
    pub dataset_ids: Vec<String>,
    pub model_id: String,
    pub model_version: String,
    pub resources: Resources,
}

/// The orchestrator and its simulated network.
#[derive(Debug, Default)]
pub struct Federation {
    gateways: BTreeMap<String, Gateway>,
    dataset_index: BTreeMap<String, String>,
    specs: BTreeMap<String, ComputeSpec>,
    active: BTreeSet<String>,
    jobs: Vec<Job>,
    log: Vec<String>,
}

impl Federation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_gateway(&mut self, gateway_id: &str) -> Result<(), FedError> {
        if self.gateways.contains_key(gateway_id) {
            return Err(FedError::DuplicateGateway(gateway_id.to_string()));
        }
        self.gateways.insert(gateway_id.to_string(), Gateway::new(gateway_id));
        Ok(())
    }

    pub fn gateway(&self, gateway_id: &str) -> Option<&Gateway> {
        self.gateways.get(gateway_id)
    }

    /// Registers `table` at a gateway under its `site_id`; returns the dataset id.
    pub fn register_dataset(&mut self, gateway_id: &str, table: CohortTable, policy: AssetPolicy) -> Result<String, FedError> {
        policy.validate().map_err(FedError::InvalidPolicy)?;
        if self.dataset_index.contains_key(&table.site_id) {
            return Err(FedError::DuplicateDataset(table.site_id.clone()));
        }
        let gw = self.gateways.get_mut(gateway_id).ok_or_else(|| FedError::UnknownGateway(gateway_id.to_string()))?;
        let id = gw.insert(table, policy)?;
        self.dataset_index.insert(id.clone(), gateway_id.to_string());
        Ok(id)
    }

    pub fn gateway_of(&self, dataset_id: &str) -> Option<&str> {
        self.dataset_index.get(dataset_id).map(String::as_str)
    }

    pub fn create_compute_spec(
        &mut self,
        dataset_ids: &[&str],
        model_id: &str,
        model_version: &str,
        resources: Resources,
    ) -> Result<ComputeSpec, FedError> {
        if dataset_ids.is_empty() {
            return Err(FedError::InvalidComputeSpec("dataset_ids must not be empty".into()));
        }
        let r = resources;
        if [r.client_memory, r.client_n_cpu, r.client_n_gpu, r.server_memory, r.server_n_cpu].contains(&0) {
            return Err(FedError::InvalidComputeSpec("resources must be positive".into()));
        }
        let mut ids = Vec::with_capacity(dataset_ids.len());
        for d in dataset_ids {
            if !self.dataset_index.contains_key(*d) {
                return Err(FedError::UnknownDataset(d.to_string()));
            }
            if !ids.iter().any(|x: &String| x == d) {
                ids.push(d.to_string());
            }
        }
        let spec = ComputeSpec {
            compute_spec_id: format!("spec-{:04}", self.specs.len() + 1),
            dataset_ids: ids,
            model_id: model_id.to_string(),
            model_version: model_version.to_string(),
            resources,
        };
        self.specs.insert(spec.compute_spec_id.clone(), spec.clone());
        Ok(spec)
    }

    pub fn activate_compute_spec(&mut self, compute_spec_id: &str) -> Result<(), FedError> {
        if !self.specs.contains_key(compute_spec_id) {
            return Err(FedError::UnknownComputeSpec(compute_spec_id.to_string()));
        }
        self.active.insert(compute_spec_id.to_string());
        Ok(())
    }

    /// Creates and activates a spec in one step.
    pub fn deploy(&mut self, dataset_ids: &[&str], model_id: &str) -> Result<String, FedError> {
        let spec = self.create_compute_spec(dataset_ids, model_id, "0.1.0", Resources::default())?;
        self.activate_compute_spec(&spec.compute_spec_id)?;
        Ok(spec.compute_spec_id)
    }

    pub fn compute_spec(&self, compute_spec_id: &str) -> Option<&ComputeSpec> {
        self.specs.get(compute_spec_id)
    }

    /// Validates the payload and runs the job to completion.
    ///
    /// Invalid payloads and unknown or inactive specs are rejected before a job
    /// exists. Otherwise the returned job is terminal: succeeded, failed, or
    /// denied when any gateway's policy refused a round.
    pub fn submit_job(&mut self, compute_spec_id: &str, payload: JobPayload) -> Result<Job, FedError> {
        let spec = self.specs.get(compute_spec_id).ok_or_else(|| FedError::UnknownComputeSpec(compute_spec_id.to_string()))?;
        if !self.active.contains(compute_spec_id) {
            return Err(FedError::InactiveComputeSpec(compute_spec_id.to_string()));
        }
        let plan = job::Plan::from_payload(&payload)?;
        let targets: Vec<(String, String)> = {
            let mut t: Vec<(String, String)> =
                spec.dataset_ids.iter().map(|d| (self.dataset_index[d].clone(), d.clone())).collect();
            t.sort();
            t
        };
        let job_id = format!("job-{:04}", self.jobs.len() + 1);
        let mut job = Job::new(job_id.clone(), compute_spec_id.to_string(), payload.clone());
        job.advance(JobStatus::Running)?;

        let mut runner = RoundRunner::new(&self.gateways, targets, job_id.clone(), payload.mode, &mut self.log);
        let outcome = plan.execute(&mut runner);
        let provenance = runner.into_provenance();
        match outcome {
            Ok(result) => {
                job.advance(JobStatus::Succeeded)?;
                job.outcome = Some(FederationResult { job_id, result, provenance });
            }
            Err(e) => {
                job.advance(if e.is_policy() { JobStatus::Denied } else { JobStatus::Failed })?;
                job.error = Some(e);
            }
        }
        self.jobs.push(job.clone());
        Ok(job)
    }

    /// `submit_job` with the outcome folded into a `Result`.
    pub fn run_job(&mut self, compute_spec_id: &str, payload: JobPayload) -> Result<JobResult, FedError> {
        let job = self.submit_job(compute_spec_id, payload)?;
        match (job.outcome, job.error) {
            (Some(r), _) => Ok(r.result),
            (None, Some(e)) => Err(e),
            (None, None) => Err(FedError::Protocol(format!("job {} ended without outcome", job.job_id))),
        }
    }

    pub fn jobs(&self) -> &[Job] {
        &self.jobs
    }

    pub fn job(&self, job_id: &str) -> Option<&Job> {
        self.jobs.iter().find(|j| j.job_id == job_id)
    }

    /// Every serialized envelope so far, one JSON document per entry.
    pub fn message_log(&self) -> &[String] {
        &self.log
    }

    pub fn write_message_log(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        for line in &self.log {
            writeln!(f, "{line}")?;
        }
        f.flush()
    }

    /// Minimum cell count per registered dataset, for the audit.
    pub fn thresholds(&self) -> BTreeMap<String, u64> {
        self.dataset_index.iter().filter_map(|(d, g)| self.gateways[g].policy(d).map(|p| (d.clone(), p.min_cell_count))).collect()
    }
}
