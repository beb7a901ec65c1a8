//! Small dense solvers: Householder QR least squares and Cholesky.
//!
//! Matrices are row-major `Vec<f64>` with explicit dimensions; every problem
//! here has at most a few dozen columns.

/// Least-squares solution of `a x ~= b` for an `rows x cols` matrix `a` via
/// Householder QR. Returns `None` if `a` is numerically rank deficient
/// (`|R_kk| <= 1e-10 * max_k |R_kk|`, or a zero column).
pub fn qr_least_squares(a: &[f64], rows: usize, cols: usize, b: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(a.len(), rows * cols);
    assert_eq!(b.len(), rows);
    if rows < cols {
        return None;
    }
    let mut r = a.to_vec();
    let mut qtb = b.to_vec();
    let mut diag = vec![0.0; cols];

    for k in 0..cols {
        let norm = (k..rows).map(|i| r[i * cols + k].powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        let alpha = if r[k * cols + k] > 0.0 { -norm } else { norm };
        // v = x - alpha e1, stored in place below (and at) the diagonal
        let mut v: Vec<f64> = (k..rows).map(|i| r[i * cols + k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..cols {
                let dot: f64 = (k..rows).map(|i| v[i - k] * r[i * cols + j]).sum();
                let s = 2.0 * dot / vnorm2;
                for i in k..rows {
                    r[i * cols + j] -= s * v[i - k];
                }
            }
            let dot: f64 = (k..rows).map(|i| v[i - k] * qtb[i]).sum();
            let s = 2.0 * dot / vnorm2;
            for i in k..rows {
                qtb[i] -= s * v[i - k];
            }
        }
        diag[k] = r[k * cols + k];
    }

    let max_diag = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if diag.iter().any(|d| d.abs() <= 1e-10 * max_diag) {
        return None;
    }
    let mut x = vec![0.0; cols];
    for k in (0..cols).rev() {
        let s: f64 = ((k + 1)..cols).map(|j| r[k * cols + j] * x[j]).sum();
        x[k] = (qtb[k] - s) / r[k * cols + k];
    }
    Some(x)
}

/// Solves `w x = z` for symmetric positive definite `w` (`m x m`) by Cholesky.
/// Returns `Err(k)` with the first pivot index that is not safely positive.
pub fn cholesky_solve(w: &[f64], m: usize, z: &[f64]) -> Result<Vec<f64>, usize> {
    assert_eq!(w.len(), m * m);
    assert_eq!(z.len(), m);
    let max_diag = (0..m).fold(0.0f64, |acc, i| acc.max(w[i * m + i].abs()));
    let tol = 1e-12 * max_diag.max(f64::MIN_POSITIVE);
    let mut l = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * m + k] * l[j * m + k]).sum();
            if i == j {
                let d = w[i * m + i] - s;
                if d <= tol {
                    return Err(i);
                }
                l[i * m + i] = d.sqrt();
            } else {
                l[i * m + j] = (w[i * m + j] - s) / l[j * m + j];
            }
        }
    }
    let mut y = vec![0.0; m];
    for i in 0..m {
        let s: f64 = (0..i).map(|k| l[i * m + k] * y[k]).sum();
        y[i] = (z[i] - s) / l[i * m + i];
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = ((i + 1)..m).map(|k| l[k * m + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * m + i];
    }
    Ok(x)
}
