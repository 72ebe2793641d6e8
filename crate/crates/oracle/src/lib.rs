//! Centralized reference computations over pooled site data.
//!
//! Test-only. Nothing here shares numerical code with the federated modules:
//! moments are two-pass, quantiles come from sorting, risk sets are built
//! naively and linear algebra goes through nalgebra.

use std::collections::BTreeSet;

use fedmed::cohort::{CohortTable, ColumnSpec, Value};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// All site rows stacked, each tagged with the index of the site it came from.
#[derive(Debug, Clone)]
pub struct PooledDataset {
    pub schema: Vec<ColumnSpec>,
    pub rows: Vec<(usize, Vec<Value>)>,
}

impl PooledDataset {
    pub fn from_sites(sites: &[CohortTable]) -> Self {
        let schema = sites.first().map(|t| t.schema().to_vec()).unwrap_or_default();
        let rows = sites.iter().enumerate().flat_map(|(s, t)| t.rows().iter().map(move |r| (s, r.clone()))).collect();
        PooledDataset { schema, rows }
    }

    pub fn n_sites(&self) -> usize {
        self.rows.iter().map(|(s, _)| s + 1).max().unwrap_or(0)
    }

    fn index(&self, column: &str) -> usize {
        self.schema.iter().position(|c| c.name == column).unwrap_or_else(|| panic!("no column {column}"))
    }

    /// Non-missing values of one numeric column.
    pub fn numbers(&self, column: &str) -> Vec<f64> {
        let i = self.index(column);
        self.rows.iter().filter_map(|(_, r)| r[i].as_number()).collect()
    }

    /// Rows where every listed numeric column is present.
    pub fn complete_numbers(&self, columns: &[&str]) -> Vec<Vec<f64>> {
        let idx: Vec<usize> = columns.iter().map(|c| self.index(c)).collect();
        self.rows.iter().filter_map(|(_, r)| idx.iter().map(|&i| r[i].as_number()).collect()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledSummary {
    pub column: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Smallest x with ECDF(x) ≥ p, on sorted data.
pub fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = (p * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn pooled_tableone(pooled: &PooledDataset, columns: &[&str]) -> Vec<PooledSummary> {
    columns
        .iter()
        .map(|c| {
            let mut v = pooled.numbers(c);
            v.sort_by(f64::total_cmp);
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
            PooledSummary {
                column: c.to_string(),
                n,
                mean,
                sd: if n > 1 { (ss / (n - 1) as f64).sqrt() } else { f64::NAN },
                min: v[0],
                q1: sorted_quantile(&v, 0.25),
                median: sorted_quantile(&v, 0.5),
                q3: sorted_quantile(&v, 0.75),
                max: v[n - 1],
            }
        })
        .collect()
}

/// Pearson matrix over complete cases; `None` where a column is constant.
pub fn pooled_correlation(pooled: &PooledDataset, columns: &[&str]) -> Vec<Vec<Option<f64>>> {
    correlation_of_rows(&pooled.complete_numbers(columns), columns.len())
}

pub fn correlation_of_rows(rows: &[Vec<f64>], p: usize) -> Vec<Vec<Option<f64>>> {
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let co = |a: usize, b: usize| rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>();
    let var: Vec<f64> = (0..p).map(|j| co(j, j)).collect();
    (0..p)
        .map(|a| {
            (0..p)
                .map(|b| {
                    if var[a] <= 0.0 || var[b] <= 0.0 || rows.len() < 2 {
                        None
                    } else {
                        Some(co(a, b) / (var[a] * var[b]).sqrt())
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRecord {
    pub site: usize,
    pub time: i64,
    pub event: bool,
    pub x: Vec<f64>,
}

/// Days from diagnosis to visit; event when EDSS exceeds the threshold and CNSR is 0.
pub fn pooled_survival_records(pooled: &PooledDataset, threshold: f64, features: &[&str]) -> Vec<OracleRecord> {
    let (v, d, e, c) = (pooled.index("VISITDT"), pooled.index("DIAGDT"), pooled.index("EDSS"), pooled.index("CNSR"));
    let feat: Vec<usize> = features.iter().map(|f| pooled.index(f)).collect();
    pooled
        .rows
        .iter()
        .filter_map(|(site, r)| {
            let visit = r[v].as_date()?.days_since_epoch();
            let diag = r[d].as_date()?.days_since_epoch();
            let edss = r[e].as_number()?;
            let cnsr = r[c].as_number()?;
            let x = feat.iter().map(|&i| r[i].as_number()).collect::<Option<Vec<f64>>>()?;
            Some(OracleRecord { site: *site, time: visit - diag, event: edss > threshold && cnsr == 0.0, x })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleKmPoint {
    pub t_lo: i64,
    pub t_hi: i64,
    pub d: u64,
    pub n: u64,
    pub s: f64,
}

/// Product-limit estimate on a fixed grid, from (time, event) pairs.
pub fn pooled_km(records: &[(i64, bool)], grid: &[i64]) -> Vec<OracleKmPoint> {
    let mut s = 1.0;
    grid.windows(2)
        .map(|w| {
            let (lo, hi) = (w[0], w[1]);
            let n = records.iter().filter(|(t, _)| *t >= lo).count() as u64;
            let d = records.iter().filter(|(t, e)| *e && *t >= lo && *t < hi).count() as u64;
            if n > 0 {
                s *= 1.0 - d as f64 / n as f64;
            }
            OracleKmPoint { t_lo: lo, t_hi: hi, d, n, s }
        })
        .collect()
}

/// Summed per-site Breslow log partial likelihood with its gradient and Hessian.
pub fn stratified_breslow(records: &[OracleRecord], beta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
    let p = beta.len();
    let mut ll = 0.0;
    let mut g = DVector::zeros(p);
    let mut h = DMatrix::zeros(p, p);
    let sites: BTreeSet<usize> = records.iter().map(|r| r.site).collect();
    for site in sites {
        let stratum: Vec<(&OracleRecord, DVector<f64>)> =
            records.iter().filter(|r| r.site == site).map(|r| (r, DVector::from_column_slice(&r.x))).collect();
        let eta: Vec<f64> = stratum.iter().map(|(_, x)| x.dot(beta)).collect();
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let times: BTreeSet<i64> = stratum.iter().filter(|(r, _)| r.event).map(|(r, _)| r.time).collect();
        for t in times {
            let mut s0 = 0.0;
            let mut s1 = DVector::zeros(p);
            let mut s2 = DMatrix::zeros(p, p);
            for ((r, x), e) in stratum.iter().zip(&eta) {
                if r.time >= t {
                    let w = (e - shift).exp();
                    s0 += w;
                    s1 += x * w;
                    s2 += x * x.transpose() * w;
                }
            }
            let mean = &s1 / s0;
            for ((r, x), e) in stratum.iter().zip(&eta) {
                if r.event && r.time == t {
                    ll += e - (s0.ln() + shift);
                    g += x - &mean;
                    h -= &s2 / s0 - &mean * mean.transpose();
                }
            }
        }
    }
    (ll, g, h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCox {
    pub beta: Vec<f64>,
    pub loglik: f64,
    pub iterations: u32,
    pub converged: bool,
}

/// Newton ascent from zero with step halving; stops on a small gradient or a small accepted change.
pub fn centralized_stratified_cox(records: &[OracleRecord], p: usize, max_iter: u32, tol: f64) -> OracleCox {
    let mut beta = DVector::zeros(p);
    let (mut ll, mut g, mut h) = stratified_breslow(records, &beta);
    let mut iterations = 0;
    let mut converged = g.amax() < 1e-8;
    while !converged && iterations < max_iter {
        let neg = -&h;
        let step = match neg.clone().cholesky() {
            Some(c) => c.solve(&g),
            None => (neg + DMatrix::identity(p, p) * 1e-8).lu().solve(&g).expect("singular Hessian"),
        };
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=10 {
            let trial = &beta + &step * scale;
            let eval = stratified_breslow(records, &trial);
            if eval.0 >= ll {
                accepted = Some((trial, eval));
                break;
            }
            scale *= 0.5;
        }
        iterations += 1;
        let Some((next, (nll, ng, nh))) = accepted else { break };
        let delta = (nll - ll).abs();
        beta = next;
        ll = nll;
        g = ng;
        h = nh;
        converged = g.amax() < 1e-8 || delta < tol;
    }
    OracleCox { beta: beta.iter().copied().collect(), loglik: ll, iterations, converged }
}

/// Sorted category lists per column, over every pooled row.
pub fn pooled_categories(pooled: &PooledDataset, columns: &[&str]) -> Vec<Vec<String>> {
    columns
        .iter()
        .map(|c| {
            let i = pooled.index(c);
            let set: BTreeSet<String> = pooled.rows.iter().filter_map(|(_, r)| r[i].as_category().map(str::to_string)).collect();
            set.into_iter().collect()
        })
        .collect()
}

/// Indicator rows for rows complete on `columns`.
pub fn pooled_one_hot(pooled: &PooledDataset, columns: &[&str], categories: &[Vec<String>]) -> Vec<Vec<f64>> {
    let idx: Vec<usize> = columns.iter().map(|c| pooled.index(c)).collect();
    pooled
        .rows
        .iter()
        .filter_map(|(_, r)| {
            let cats = idx.iter().map(|&i| r[i].as_category()).collect::<Option<Vec<&str>>>()?;
            let mut x = Vec::new();
            for (cat, levels) in cats.iter().zip(categories) {
                x.extend(levels.iter().map(|l| if l == cat { 1.0 } else { 0.0 }));
            }
            Some(x)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct OraclePca {
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors in eigenvalue order.
    pub eigenvectors: DMatrix<f64>,
}

pub fn pooled_pca(rows: &[Vec<f64>]) -> OraclePca {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let mean: Vec<f64> = (0..p).map(|j| x.column(j).sum() / n as f64).collect();
    let centered = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - mean[j]);
    let covariance = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(covariance.clone());
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = DMatrix::from_fn(p, p, |i, j| eig.eigenvectors[(i, order[j])]);
    OraclePca { mean, covariance, eigenvalues, eigenvectors }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_median() {
        assert_eq!(sorted_quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5), 3.0);
        assert_eq!(sorted_quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.0);
    }

    #[test]
    fn six_point_pearson() {
        let rows: Vec<Vec<f64>> =
            [[1.0, 3.0], [2.0, 2.0], [3.0, 1.0], [11.0, 13.0], [12.0, 12.0], [13.0, 11.0]].iter().map(|r| r.to_vec()).collect();
        let r = correlation_of_rows(&rows, 2);
        assert!((r[0][1].unwrap() - 146.0 / 154.0).abs() < 1e-12);
        assert!((correlation_of_rows(&rows[..3], 2)[0][1].unwrap() + 1.0).abs() < 1e-15);
        assert!((r[0][0].unwrap() - 1.0).abs() < 1e-15);
        let flat: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, 1.0]).collect();
        assert_eq!(correlation_of_rows(&flat, 2)[0][1], None);
    }

    #[test]
    fn km_by_hand() {
        let rs = [(10, true), (40, true), (100, false), (100, false), (100, false)];
        let k = pooled_km(&rs, &[0, 30, 60, 90, 120]);
        assert_eq!((k[0].d, k[0].n), (1, 5));
        assert_eq!((k[1].d, k[1].n), (1, 4));
        assert!((k[1].s - 0.8 * 0.75).abs() < 1e-15);
        assert!(pooled_km(&[(5, false)], &[0, 30]).iter().all(|p| p.s == 1.0));
    }

    fn rec(time: i64, event: bool, x: f64) -> OracleRecord {
        OracleRecord { site: 0, time, event, x: vec![x] }
    }

    #[test]
    fn cox_closed_form() {
        let rs = [rec(1, true, 1.0), rec(2, true, 0.0), rec(3, false, 1.0)];
        let fit = centralized_stratified_cox(&rs, 1, 30, 1e-12);
        assert!((fit.beta[0] + 0.5 * 2f64.ln()).abs() < 1e-8, "{:?}", fit);
        let flat = [rec(1, true, 2.0), rec(2, true, 2.0), rec(3, false, 2.0)];
        assert_eq!(centralized_stratified_cox(&flat, 1, 30, 1e-12).beta, vec![0.0]);
    }

    #[test]
    fn pca_two_by_two() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let o = pooled_pca(&rows);
        assert!((o.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!(o.eigenvalues[1].abs() < 1e-12);
        let v = o.eigenvectors.column(0);
        assert!((v[0].abs() - 0.5f64.sqrt()).abs() < 1e-12 && (v[0] + v[1]).abs() < 1e-12);
    }
}
