//! One-hot encoding of categorical columns, federated covariance and PCA.

pub mod covariance;
pub mod eigen;
pub mod encoding;

use serde::{Deserialize, Serialize};

use crate::cohort::schema::PCA_CATEGORICALS;
use crate::runtime::{FedError, Federation, JobPayload, JobResult, OpKind, PayloadBody, RoundRunner, Step};

pub use covariance::{local_covariance_terms, CovarianceAccumulator};
pub use eigen::{eigendecompose, jacobi_eigen, PrincipalComponents};
pub use encoding::{local_categories, merge_categories, CategorySet, EncodedColumn, OneHotEncoding};

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
pub enum PcaError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("column `{0}` is not categorical")]
    NonCategoricalColumn(String),
    #[error("row {row}: category `{value}` of `{column}` is not in the encoding")]
    UnknownCategory { row: usize, column: String, value: String },
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least 2 complete rows, have {0}")]
    InsufficientData(u64),
    #[error("Jacobi iteration did not converge in {sweeps} sweeps")]
    NoConvergence { sweeps: u32 },
    #[error("matrix is not symmetric")]
    NotSymmetric,
}

/// What a downstream model needs to map raw categories to component scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub encoding: OneHotEncoding,
    pub mean: Vec<f64>,
    /// Rows = encoded features, columns = components.
    pub components: Vec<Vec<f64>>,
}

impl PcaProjection {
    pub fn k(&self) -> usize {
        self.components.first().map_or(0, Vec::len)
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, PcaError> {
        if x.len() != self.mean.len() || self.components.len() != self.mean.len() {
            return Err(PcaError::DimensionMismatch { expected: self.mean.len(), got: x.len() });
        }
        Ok((0..self.k())
            .map(|j| x.iter().zip(&self.mean).zip(&self.components).map(|((xi, mi), w)| (xi - mi) * w[j]).sum())
            .collect())
    }

    pub fn project_categories(&self, categories: &[&str]) -> Result<Vec<f64>, PcaError> {
        self.project(&self.encoding.encode(categories)?)
    }
}

/// Scores of one raw row under a fitted decomposition.
pub fn pca_project(
    encoding: &OneHotEncoding,
    components: &PrincipalComponents,
    categories: &[&str],
) -> Result<Vec<f64>, PcaError> {
    components.project(&encoding.encode(categories)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaFit {
    pub encoding: OneHotEncoding,
    pub n: u64,
    pub per_site_n: Vec<(String, u64)>,
    pub covariance: Vec<Vec<f64>>,
    pub components: PrincipalComponents,
}

impl PcaFit {
    pub fn feature_names(&self) -> Vec<String> {
        self.encoding.feature_names()
    }

    pub fn projection(&self) -> PcaProjection {
        PcaProjection {
            encoding: self.encoding.clone(),
            mean: self.components.mean.clone(),
            components: self.components.components.clone(),
        }
    }
}

/// Loadings table: one row per `COLUMN=CATEGORY`, one column per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformReport {
    pub features: Vec<String>,
    pub components: Vec<String>,
    pub loadings: Vec<Vec<f64>>,
    pub explained_ratio: Vec<f64>,
    pub degenerate: bool,
}

impl TransformReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("feature,{}\n", self.components.join(","));
        for (f, row) in self.features.iter().zip(&self.loadings) {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!("{f},{}\n", vals.join(",")));
        }
        out
    }
}

pub fn transform_matrix_report(encoding: &OneHotEncoding, components: &PrincipalComponents) -> TransformReport {
    TransformReport {
        features: encoding.feature_names(),
        components: (1..=components.k).map(|i| format!("PC{i}")).collect(),
        loadings: components.components.clone(),
        explained_ratio: components.explained_ratio.clone(),
        degenerate: components.is_degenerate(),
    }
}

fn default_columns() -> Vec<String> {
    PCA_CATEGORICALS.iter().map(|s| s.to_string()).collect()
}

fn default_k() -> usize {
    4
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct PcaParams {
    #[serde(default = "default_columns")]
    pub columns: Vec<String>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub encoding: Option<OneHotEncoding>,
    #[serde(default)]
    pub discovery_only: bool,
}

impl PcaParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.columns.is_empty() {
            return Err("columns must not be empty".into());
        }
        if self.k == 0 {
            return Err("k must be positive".into());
        }
        if let Some(e) = &self.encoding {
            if e.columns.iter().map(|c| &c.column).ne(self.columns.iter()) {
                return Err("encoding columns differ from columns".into());
            }
            if e.width() == 0 {
                return Err("encoding has no categories".into());
            }
        }
        Ok(())
    }
}

/// Category discovery (unless an encoding is supplied), then one covariance round.
pub(crate) fn drive(runner: &mut RoundRunner<'_>, p: &PcaParams) -> Result<JobResult, FedError> {
    let encoding = match &p.encoding {
        Some(e) => e.clone(),
        None => {
            let replies = runner.round(Step::Categories { columns: p.columns.clone() })?;
            let mut sets = Vec::with_capacity(replies.len());
            for r in replies {
                match r.payload.body {
                    PayloadBody::Categories(s) => sets.push(s),
                    other => return Err(FedError::protocol("categories", &other)),
                }
            }
            merge_categories(&p.columns, &sets)?
        }
    };
    if p.discovery_only {
        return Ok(JobResult::Categories(encoding));
    }
    let replies = runner.round(Step::Covariance { encoding: encoding.clone() })?;
    let mut acc = CovarianceAccumulator::empty(encoding.width());
    let mut per_site_n = Vec::with_capacity(replies.len());
    for r in &replies {
        match &r.payload.body {
            PayloadBody::Covariance(a) => {
                acc = acc.merge(a)?;
                per_site_n.push((r.dataset_id.clone(), a.n));
            }
            other => return Err(FedError::protocol("covariance", other)),
        }
    }
    let (covariance, mean) = acc.covariance()?;
    let components = eigendecompose(&covariance, &mean, p.k)?;
    Ok(JobResult::Pca(Box::new(PcaFit { encoding, n: acc.n, per_site_n, covariance, components })))
}

pub fn federated_category_discovery(
    fed: &mut Federation,
    compute_spec_id: &str,
    columns: &[&str],
) -> Result<OneHotEncoding, FedError> {
    let payload = JobPayload::new(OpKind::PcaCovariance).with("columns", columns).with("discovery_only", true);
    match fed.run_job(compute_spec_id, payload)? {
        JobResult::Categories(e) => Ok(e),
        other => Err(FedError::unexpected("categories", &other)),
    }
}

/// Covariance and top-k components under a fixed encoding.
pub fn federated_covariance(
    fed: &mut Federation,
    compute_spec_id: &str,
    encoding: &OneHotEncoding,
    k: usize,
) -> Result<PcaFit, FedError> {
    let columns: Vec<&str> = encoding.columns.iter().map(|c| c.column.as_str()).collect();
    let payload = JobPayload::new(OpKind::PcaCovariance).with("columns", columns).with("encoding", encoding).with("k", k);
    match fed.run_job(compute_spec_id, payload)? {
        JobResult::Pca(f) => Ok(*f),
        other => Err(FedError::unexpected("pca", &other)),
    }
}

pub fn federated_pca(fed: &mut Federation, compute_spec_id: &str, columns: &[&str], k: usize) -> Result<PcaFit, FedError> {
    let payload = JobPayload::new(OpKind::PcaCovariance).with("columns", columns).with("k", k);
    match fed.run_job(compute_spec_id, payload)? {
        JobResult::Pca(f) => Ok(*f),
        other => Err(FedError::unexpected("pca", &other)),
    }
}
