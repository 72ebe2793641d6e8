use serde::{Deserialize, Serialize};

use super::encoding::OneHotEncoding;
use super::PcaError;
use crate::cohort::CohortTable;

/// n, Σx and Σxxᵀ over encoded rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceAccumulator {
    pub n: u64,
    pub sum: Vec<f64>,
    pub sum_outer: Vec<Vec<f64>>,
}

impl CovarianceAccumulator {
    pub fn empty(p: usize) -> Self {
        CovarianceAccumulator { n: 0, sum: vec![0.0; p], sum_outer: vec![vec![0.0; p]; p] }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        for (i, &a) in x.iter().enumerate() {
            self.sum[i] += a;
            for (j, &b) in x.iter().enumerate() {
                self.sum_outer[i][j] += a * b;
            }
        }
    }

    pub fn merge(&self, other: &Self) -> Result<Self, PcaError> {
        if self.sum.len() != other.sum.len() {
            return Err(PcaError::DimensionMismatch { expected: self.sum.len(), got: other.sum.len() });
        }
        let mut out = self.clone();
        out.n += other.n;
        for i in 0..out.sum.len() {
            out.sum[i] += other.sum[i];
            for j in 0..out.sum.len() {
                out.sum_outer[i][j] += other.sum_outer[i][j];
            }
        }
        Ok(out)
    }

    /// (C, μ) with C = (Σxxᵀ − N μμᵀ)/(N − 1).
    pub fn covariance(&self) -> Result<(Vec<Vec<f64>>, Vec<f64>), PcaError> {
        if self.n < 2 {
            return Err(PcaError::InsufficientData(self.n));
        }
        let n = self.n as f64;
        let mu: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let p = mu.len();
        let mut c = vec![vec![0.0; p]; p];
        for i in 0..p {
            for j in 0..=i {
                let v = (self.sum_outer[i][j] - n * mu[i] * mu[j]) / (n - 1.0);
                c[i][j] = v;
                c[j][i] = v;
            }
        }
        Ok((c, mu))
    }
}

pub fn local_covariance_terms(table: &CohortTable, encoding: &OneHotEncoding) -> Result<CovarianceAccumulator, PcaError> {
    let mut acc = CovarianceAccumulator::empty(encoding.width());
    for (_, x) in encoding.encode_table(table)? {
        acc.push(&x);
    }
    Ok(acc)
}
