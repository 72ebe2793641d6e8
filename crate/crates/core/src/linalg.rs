//! Small dense helpers for the orchestrator's Newton solves.

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub(crate) fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (y[i] - ((i + 1)..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x
}

/// Solves `A x = b` for symmetric positive semi-definite `A`.
///
/// `A` is first scaled to unit diagonal. If the scaled matrix is not
/// numerically positive definite, a ridge of `1e-8` is added once.
pub(crate) fn solve_psd(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let d: Vec<f64> = (0..n).map(|i| if a[i][i] > 0.0 { 1.0 / a[i][i].sqrt() } else { 1.0 }).collect();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| d[i] * a[i][j] * d[j]).collect()).collect();
    let rhs: Vec<f64> = (0..n).map(|i| d[i] * b[i]).collect();
    let l = cholesky(&m).or_else(|| {
        for (i, row) in m.iter_mut().enumerate() {
            row[i] += 1e-8;
        }
        cholesky(&m)
    })?;
    let y = cholesky_solve(&l, &rhs);
    let x: Vec<f64> = (0..n).map(|i| d[i] * y[i]).collect();
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let a = vec![vec![4.0, 1.0], vec![1.0, 3.0]];
        let x = solve_psd(&a, &[1.0, 2.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-12);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn badly_scaled_system() {
        let a = vec![vec![1e12, 1e3], vec![1e3, 1e-2]];
        let x = solve_psd(&a, &[1e6, 1.0]).unwrap();
        let r0 = 1e12 * x[0] + 1e3 * x[1] - 1e6;
        assert!(r0.abs() < 1e-3, "{x:?}");
    }

    #[test]
    fn zero_row_falls_back_to_ridge() {
        let a = vec![vec![2.0, 0.0], vec![0.0, 0.0]];
        let x = solve_psd(&a, &[2.0, 0.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-7 && x[1] == 0.0);
        assert!(solve_psd(&[vec![-1.0]], &[1.0]).is_none());
    }
}
