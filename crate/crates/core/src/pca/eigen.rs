//! Cyclic Jacobi eigensolver for small symmetric matrices.

use serde::{Deserialize, Serialize};

use super::PcaError;

const MAX_SWEEPS: u32 = 100;

fn frobenius(a: &[Vec<f64>]) -> f64 {
    a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

fn off_diagonal(a: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if i != j {
                s += v * v;
            }
        }
    }
    s.sqrt()
}

/// Eigenvalues, eigenvectors as matrix columns, sweeps used.
pub type Eigenpairs = (Vec<f64>, Vec<Vec<f64>>, u32);

/// Eigenpairs in the original axis order.
pub fn jacobi_eigen(c: &[Vec<f64>]) -> Result<Eigenpairs, PcaError> {
    let n = c.len();
    if c.iter().any(|row| row.len() != n) {
        return Err(PcaError::DimensionMismatch { expected: n, got: c.iter().map(Vec::len).max().unwrap_or(0) });
    }
    for i in 0..n {
        for j in 0..i {
            let scale = c[i][j].abs().max(c[j][i].abs()).max(1.0);
            if (c[i][j] - c[j][i]).abs() > 1e-12 * scale {
                return Err(PcaError::NotSymmetric);
            }
        }
    }
    let mut a = c.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let tol = 1e-12 * frobenius(c);
    let mut sweeps = 0;
    while off_diagonal(&a) > tol {
        if sweeps == MAX_SWEEPS {
            return Err(PcaError::NoConvergence { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = cs * akp - sn * akq;
                    a[k][q] = sn * akp + cs * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = cs * apk - sn * aqk;
                    a[q][k] = sn * apk + cs * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = cs * vp - sn * vq;
                    row[q] = sn * vp + cs * vq;
                }
            }
        }
    }
    Ok(((0..n).map(|i| a[i][i]).collect(), v, sweeps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalComponents {
    pub mean: Vec<f64>,
    /// All eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Rows = features, columns = the top-k eigenvectors.
    pub components: Vec<Vec<f64>>,
    pub k: usize,
    pub explained_ratio: Vec<f64>,
    pub sweeps: u32,
}

impl PrincipalComponents {
    /// Column `j` of W.
    pub fn component(&self, j: usize) -> Vec<f64> {
        self.components.iter().map(|row| row[j]).collect()
    }

    /// z = Wᵀ(x − μ).
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, PcaError> {
        if x.len() != self.mean.len() {
            return Err(PcaError::DimensionMismatch { expected: self.mean.len(), got: x.len() });
        }
        Ok((0..self.k)
            .map(|j| x.iter().zip(&self.mean).zip(&self.components).map(|((xi, mi), w)| (xi - mi) * w[j]).sum())
            .collect())
    }

    /// True when every eigenvalue is zero.
    pub fn is_degenerate(&self) -> bool {
        self.eigenvalues.iter().all(|&l| l == 0.0)
    }
}

/// Eigenpairs sorted by descending eigenvalue (stable, so ties keep axis order);
/// each vector's first largest-magnitude entry made positive.
pub fn eigendecompose(c: &[Vec<f64>], mean: &[f64], k: usize) -> Result<PrincipalComponents, PcaError> {
    let (values, vectors, sweeps) = jacobi_eigen(c)?;
    let n = values.len();
    if mean.len() != n {
        return Err(PcaError::DimensionMismatch { expected: n, got: mean.len() });
    }
    let floor = 1e-12 * frobenius(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let eigenvalues: Vec<f64> =
        order.iter().map(|&i| if values[i] < 0.0 && values[i] > -floor { 0.0 } else { values[i] }).collect();
    let k = k.min(n);
    let mut components = vec![vec![0.0; k]; n];
    for (j, &src) in order.iter().take(k).enumerate() {
        let col: Vec<f64> = vectors.iter().map(|row| row[src]).collect();
        let max = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let pivot = col.iter().find(|v| v.abs() >= max - 1e-12).copied().unwrap_or(1.0);
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (row, v) in components.iter_mut().zip(&col) {
            row[j] = sign * v;
        }
    }
    let total: f64 = eigenvalues.iter().sum();
    let explained_ratio = eigenvalues.iter().take(k).map(|l| if total > 0.0 { l / total } else { 0.0 }).collect();
    Ok(PrincipalComponents { mean: mean.to_vec(), eigenvalues, components, k, explained_ratio, sweeps })
}
