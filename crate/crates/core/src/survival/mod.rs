//! Federated survival analysis: event derivation, interval-grouped Kaplan-Meier,
//! stratified Cox regression and Breslow baselines.

pub mod baseline;
pub mod cox;
pub mod intervals;
pub mod km;
pub mod records;

use serde::{Deserialize, Serialize};

use crate::pca::PcaError;

pub use baseline::{
    breslow_baseline, display_survival, normalize_coefficients, site_baseline, survival_from_hazard, BaselineInterval,
    DisplayCurve, NormalizedCoefficient, SiteBaseline, StepFunction,
};
pub use cox::{
    federated_cox_fit, local_cox_round, newton_maximize, ConvergenceReport, CoxFit, CoxIterate, CoxModel, CoxRoundPayload,
    CoxWarning, NewtonOptions,
};
pub use intervals::{interval_counts_on, local_interval_counts, regular_boundaries, veto_boundaries, IntervalCounts};
pub use km::{federated_km, km_from_counts, KaplanMeierCurve, KmInterval};
pub use records::{derive_survival, CoxSpec, SurvivalRecord, KM_COLUMNS};

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
pub enum SurvivalError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("column `{0}` is not numeric")]
    NonNumericColumn(String),
    #[error("visit date before diagnosis date in row {row}")]
    NegativeTime { row: usize },
    #[error("expected {expected} covariates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid interval grid: {0}")]
    InvalidGrid(String),
    #[error("no events at any site")]
    NoEvents,
    #[error("Hessian is singular even after ridge regularization")]
    SingularHessian,
    #[error("Newton iteration did not converge in {rounds} rounds")]
    NotConverged { rounds: u32 },
    #[error(transparent)]
    Projection(#[from] PcaError),
}
