use std::collections::BTreeMap;

use super::message::{AggregatePayload, Envelope, Message, PayloadBody, Step};
use super::policy::{policy_check, pre_check, AssetPolicy, PolicyDecision};
use super::{FedError, LocalError};
use crate::cohort::CohortTable;
use crate::pca::{local_categories, local_covariance_terms};
use crate::stats::quantile::local_histogram;
use crate::stats::scatter::local_grid;
use crate::stats::tableone::local_five_number;
use crate::stats::{local_crossproducts, local_moments, numeric_column};
use crate::survival::{derive_survival, interval_counts_on, local_cox_round, site_baseline, veto_boundaries};

/// A site-local agent holding registered datasets. Raw rows never leave it.
#[derive(Debug, Clone)]
pub struct Gateway {
    id: String,
    datasets: BTreeMap<String, (CohortTable, AssetPolicy)>,
}

impl Gateway {
    pub fn new(id: impl Into<String>) -> Self {
        Gateway { id: id.into(), datasets: BTreeMap::new() }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dataset_ids(&self) -> impl Iterator<Item = &str> {
        self.datasets.keys().map(String::as_str)
    }

    pub fn policy(&self, dataset_id: &str) -> Option<&AssetPolicy> {
        self.datasets.get(dataset_id).map(|(_, p)| p)
    }

    pub(crate) fn insert(&mut self, table: CohortTable, policy: AssetPolicy) -> Result<String, FedError> {
        let id = table.site_id.clone();
        if self.datasets.contains_key(&id) {
            return Err(FedError::DuplicateDataset(id));
        }
        self.datasets.insert(id.clone(), (table, policy));
        Ok(id)
    }

    /// Serves one serialized request and returns the serialized reply.
    pub fn handle(&self, request: &[u8]) -> Vec<u8> {
        let env = match Envelope::from_bytes(request) {
            Ok(env) => env,
            Err(e) => {
                return Envelope {
                    job_id: String::new(),
                    round: 0,
                    gateway_id: self.id.clone(),
                    op_kind: super::OpKind::Tableone,
                    payload: Message::Failed { dataset_id: String::new(), cause: LocalError::Malformed(e) },
                }
                .to_bytes()
            }
        };
        let payload = self.reply(&env);
        Envelope { payload, gateway_id: self.id.clone(), ..env }.to_bytes()
    }

    fn reply(&self, env: &Envelope) -> Message {
        let Message::Request { dataset_id, step } = &env.payload else {
            return Message::Failed { dataset_id: String::new(), cause: LocalError::Malformed("expected a request".into()) };
        };
        let dataset_id = dataset_id.clone();
        let Some((table, policy)) = self.datasets.get(&dataset_id) else {
            return Message::Failed { cause: LocalError::UnknownDataset(dataset_id.clone()), dataset_id };
        };
        let n = table.n_rows() as u64;
        if let PolicyDecision::Deny(reason) = pre_check(policy, env.op_kind, step, n) {
            return Message::Denied { dataset_id, reason };
        }
        let body = match compute(step, table, policy.min_cell_count) {
            Ok(body) => body,
            Err(cause) => return Message::Failed { dataset_id, cause },
        };
        let aggregate = AggregatePayload::new(env.op_kind, env.round, body);
        match policy_check(policy, step, n, &aggregate) {
            PolicyDecision::Allow => Message::Response { dataset_id, aggregate },
            PolicyDecision::Deny(reason) => Message::Denied { dataset_id, reason },
        }
    }
}

/// Local computation of one step on one dataset.
fn compute(step: &Step, table: &CohortTable, k: u64) -> Result<PayloadBody, LocalError> {
    Ok(match step {
        Step::Moments { columns } => PayloadBody::Moments(local_moments(table, columns)?),
        Step::Histogram { columns, ranges, bins } => {
            if ranges.len() != columns.len() {
                return Err(LocalError::Malformed("one range per column required".into()));
            }
            let mut hists = Vec::with_capacity(columns.len());
            for (c, &(lo, hi)) in columns.iter().zip(ranges) {
                let values: Vec<f64> = numeric_column(table, c)?.into_iter().flatten().collect();
                hists.push(local_histogram(c, &values, lo, hi, *bins, k));
            }
            PayloadBody::Histograms(hists)
        }
        Step::LocalSummary { columns } => {
            let mut out = Vec::with_capacity(columns.len());
            for c in columns {
                let values: Vec<f64> = numeric_column(table, c)?.into_iter().flatten().collect();
                out.push(local_five_number(c, &values)?);
            }
            PayloadBody::FiveNumbers(out)
        }
        Step::CrossProducts { columns } => PayloadBody::CrossProducts(local_crossproducts(table, columns)?),
        Step::Grid { x, y, x_range, y_range, x_bins, y_bins } => {
            PayloadBody::Grid(local_grid(table, x, y, *x_range, *y_range, *x_bins, *y_bins, k)?)
        }
        Step::SurvivalExtent { event_threshold, interval_width } => {
            let records = derive_survival(table, *event_threshold, &[])?;
            let n_intervals = match records.iter().map(|r| r.time).max() {
                Some(t) => (t / interval_width.max(&1)) as u64 + 1,
                None => 0,
            };
            PayloadBody::SurvivalExtent { n: records.len() as u64, n_intervals }
        }
        Step::IntervalVeto { event_threshold, boundaries } => {
            let records = derive_survival(table, *event_threshold, &[])?;
            PayloadBody::IntervalVeto { remove: veto_boundaries(&records, boundaries, k)? }
        }
        Step::IntervalCounts { event_threshold, boundaries } => {
            let records = derive_survival(table, *event_threshold, &[])?;
            PayloadBody::IntervalCounts(interval_counts_on(&records, boundaries)?)
        }
        Step::CoxRound { model, beta } => PayloadBody::CoxRound(local_cox_round(&model.records(table)?, beta)?),
        Step::Baseline { model, beta, interval_width } => {
            PayloadBody::Baseline(site_baseline(&model.records(table)?, beta, *interval_width, k)?)
        }
        Step::Categories { columns } => PayloadBody::Categories(local_categories(table, columns)?),
        Step::Covariance { encoding } => PayloadBody::Covariance(local_covariance_terms(table, encoding)?),
    })
}
