use serde::{Deserialize, Serialize};

use super::{complete_cases, StatsError};
use crate::cohort::CohortTable;
use crate::runtime::{FedError, Federation, JobPayload, JobResult, OpKind, PayloadBody, RoundRunner, Step};

/// Complete-case cross-product sums over an ordered column list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationAccumulator {
    pub columns: Vec<String>,
    pub n: u64,
    pub sum: Vec<f64>,
    /// Full symmetric matrix of Σ xᵢxⱼ; the diagonal holds Σ xᵢ².
    pub cross: Vec<Vec<f64>>,
}

impl CorrelationAccumulator {
    pub fn empty(columns: &[String]) -> Self {
        let p = columns.len();
        CorrelationAccumulator { columns: columns.to_vec(), n: 0, sum: vec![0.0; p], cross: vec![vec![0.0; p]; p] }
    }

    pub fn push(&mut self, row: &[f64]) {
        self.n += 1;
        for (i, &x) in row.iter().enumerate() {
            self.sum[i] += x;
            for (j, &y) in row.iter().enumerate() {
                self.cross[i][j] += x * y;
            }
        }
    }

    pub fn merge(&self, other: &Self) -> Result<Self, StatsError> {
        if self.columns != other.columns {
            return Err(StatsError::ColumnMismatch(self.columns.join(","), other.columns.join(",")));
        }
        let mut out = self.clone();
        out.n += other.n;
        for i in 0..out.sum.len() {
            out.sum[i] += other.sum[i];
            for j in 0..out.sum.len() {
                out.cross[i][j] += other.cross[i][j];
            }
        }
        Ok(out)
    }

    /// Pearson matrix from the sums. Needs n ≥ 2 and non-zero variance in every column.
    pub fn finalize(&self) -> Result<CorrelationMatrix, StatsError> {
        if self.n < 2 {
            return Err(StatsError::NoData(self.columns.join(",")));
        }
        let n = self.n as f64;
        let p = self.columns.len();
        let centered = |i: usize, j: usize| self.cross[i][j] - self.sum[i] * self.sum[j] / n;
        let mut sd = Vec::with_capacity(p);
        for i in 0..p {
            let ss = centered(i, i);
            let scale = self.cross[i][i].abs().max(f64::MIN_POSITIVE);
            if ss <= 1e-12 * scale {
                return Err(StatsError::DegenerateVariance(self.columns[i].clone()));
            }
            sd.push(ss.sqrt());
        }
        let mut r = vec![vec![0.0; p]; p];
        for i in 0..p {
            r[i][i] = 1.0;
            for j in (i + 1)..p {
                let v = (centered(i, j) / (sd[i] * sd[j])).clamp(-1.0, 1.0);
                r[i][j] = v;
                r[j][i] = v;
            }
        }
        Ok(CorrelationMatrix { columns: self.columns.clone(), n: self.n, r })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub columns: Vec<String>,
    pub n: u64,
    pub r: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.columns.iter().position(|c| c == a)?;
        let j = self.columns.iter().position(|c| c == b)?;
        Some(self.r[i][j])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(",");
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for (c, row) in self.columns.iter().zip(&self.r) {
            out.push_str(c);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub matrix: CorrelationMatrix,
    /// (dataset id, complete-case n) per contributing dataset.
    pub per_site_n: Vec<(String, u64)>,
}

pub fn local_crossproducts(table: &CohortTable, columns: &[String]) -> Result<CorrelationAccumulator, StatsError> {
    let mut acc = CorrelationAccumulator::empty(columns);
    for row in complete_cases(table, columns)? {
        acc.push(&row);
    }
    Ok(acc)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct CorrelationParams {
    pub columns: Vec<String>,
}

impl CorrelationParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.columns.is_empty() {
            return Err("correlation needs at least one column".into());
        }
        Ok(())
    }
}

pub(crate) fn drive(runner: &mut RoundRunner<'_>, p: &CorrelationParams) -> Result<JobResult, FedError> {
    let replies = runner.round(Step::CrossProducts { columns: p.columns.clone() })?;
    let mut acc = CorrelationAccumulator::empty(&p.columns);
    let mut per_site_n = Vec::with_capacity(replies.len());
    for r in &replies {
        match &r.payload.body {
            PayloadBody::CrossProducts(a) => {
                acc = acc.merge(a)?;
                per_site_n.push((r.dataset_id.clone(), a.n));
            }
            other => return Err(FedError::protocol("cross products", other)),
        }
    }
    Ok(JobResult::Correlation(CorrelationResult { matrix: acc.finalize()?, per_site_n }))
}

/// Pearson correlation matrix over every dataset of the compute spec.
pub fn federated_correlation(
    fed: &mut Federation,
    compute_spec_id: &str,
    columns: &[&str],
) -> Result<CorrelationResult, FedError> {
    match fed.run_job(compute_spec_id, JobPayload::new(OpKind::Correlation).with("columns", columns))? {
        JobResult::Correlation(c) => Ok(c),
        other => Err(FedError::unexpected("correlation", &other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn acc(rows: &[[f64; 2]]) -> CorrelationAccumulator {
        let mut a = CorrelationAccumulator::empty(&["x".into(), "y".into()]);
        for r in rows {
            a.push(r);
        }
        a
    }

    #[test]
    fn hand_pearson() {
        let m = acc(&[[1.0, 3.0], [2.0, 2.0], [3.0, 1.0]]).finalize().unwrap();
        assert!((m.r[0][1] + 1.0).abs() < 1e-15);
        let pooled = acc(&[[1.0, 3.0], [2.0, 2.0], [3.0, 1.0]]).merge(&acc(&[[11.0, 13.0], [12.0, 12.0], [13.0, 11.0]])).unwrap();
        assert!((pooled.finalize().unwrap().r[0][1] - 146.0 / 154.0).abs() < 1e-12);
    }

    #[test]
    fn self_correlation_and_degenerate_cases() {
        let mut a = CorrelationAccumulator::empty(&["x".into(), "x".into()]);
        for v in [1.0, 4.0, 2.0] {
            a.push(&[v, v]);
        }
        assert!((a.finalize().unwrap().r[0][1] - 1.0).abs() < 1e-15);
        assert!(matches!(acc(&[[1.0, 2.0]]).finalize(), Err(StatsError::NoData(_))));
        assert!(matches!(acc(&[[5.0, 1.0], [5.0, 2.0]]).finalize(), Err(StatsError::DegenerateVariance(c)) if c == "x"));
    }

    proptest! {
        #[test]
        fn merge_is_associative_and_commutative(
            a in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 0..10),
            b in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 0..10),
            c in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 0..10),
        ) {
            let to = |v: &Vec<(f64, f64)>| acc(&v.iter().map(|&(x, y)| [x, y]).collect::<Vec<_>>());
            let (a, b, c) = (to(&a), to(&b), to(&c));
            let left = a.merge(&b).unwrap().merge(&c).unwrap();
            let right = a.merge(&b.merge(&c).unwrap()).unwrap();
            prop_assert_eq!(left.n, right.n);
            for i in 0..2 {
                prop_assert!((left.sum[i] - right.sum[i]).abs() < 1e-9);
                for j in 0..2 {
                    prop_assert!((left.cross[i][j] - right.cross[i][j]).abs() < 1e-7);
                    prop_assert_eq!(left.cross[i][j], left.cross[j][i]);
                }
            }
            prop_assert_eq!(a.merge(&b).unwrap(), b.merge(&a).unwrap());
            if let Ok(m) = left.finalize() {
                prop_assert!(m.r[0][1].abs() <= 1.0 + 1e-12);
            }
        }
    }
}
