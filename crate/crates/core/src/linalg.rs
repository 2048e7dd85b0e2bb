//! Small dense helpers: a row-major matrix, Cholesky factorization and
//! Gaussian conditioning. Sizes in this crate never exceed a handful of
//! dimensions, so everything is plain loops over `Vec<f64>`.

use crate::error::{NurdError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(NurdError::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows<const C: usize>(rows: &[[f64; C]]) -> Self {
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Matrix {
            rows: rows.len(),
            cols: C,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// New matrix holding the listed rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix
/// given as row-major `n × n`.
pub fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(NurdError::Singular(format!(
                        "pivot {i} is {s:e} in Cholesky factorization"
                    )));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Cholesky factor that tolerates exactly-singular (PSD) inputs by zeroing
/// pivots at or below `tol`. Used for sampling from fitted covariances, which
/// may be degenerate for noiseless data.
pub fn cholesky_psd(a: &[f64], n: usize, tol: f64) -> Vec<f64> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                l[i * n + i] = if s > tol { s.sqrt() } else { 0.0 };
            } else {
                let d = l[j * n + j];
                l[i * n + j] = if d > 0.0 { s / d } else { 0.0 };
            }
        }
    }
    l
}

/// Solve `A x = b` for symmetric positive-definite `A` (`n × n`, row-major).
pub fn solve_spd(a: &[f64], b: &[f64], n: usize) -> Result<Vec<f64>> {
    let l = cholesky(a, n)?;
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Ok(x)
}

/// Condition a zero-mean jointly Gaussian vector on all coordinates but the
/// first. `cov` is `n × n` row-major over `(target, observed...)`.
///
/// Returns the regression coefficients of the target on the observed block and
/// the conditional variance.
pub fn condition_first(cov: &[f64], n: usize) -> Result<(Vec<f64>, f64)> {
    let m = n - 1;
    let mut obs = vec![0.0; m * m];
    let mut cross = vec![0.0; m];
    for i in 0..m {
        cross[i] = cov[i + 1];
        for j in 0..m {
            obs[i * m + j] = cov[(i + 1) * n + (j + 1)];
        }
    }
    let coef = solve_spd(&obs, &cross, m)?;
    let explained: f64 = coef.iter().zip(&cross).map(|(c, s)| c * s).sum();
    Ok((coef, cov[0] - explained))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        let a = [4.0, 1.0, 1.0, 3.0];
        let x = solve_spd(&a, &[1.0, 2.0], 2).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-14);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_indefinite() {
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_err());
    }

    #[test]
    fn psd_factor_handles_zero_block() {
        let l = cholesky_psd(&[0.0, 0.0, 0.0, 4.0], 2, 1e-300);
        assert_eq!(l, vec![0.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn conditioning_bivariate() {
        // corr 0.8, unit variances: E[t|s] = 0.8 s, var 0.36
        let (coef, var) = condition_first(&[1.0, 0.8, 0.8, 1.0], 2).unwrap();
        assert!((coef[0] - 0.8).abs() < 1e-15);
        assert!((var - 0.36).abs() < 1e-15);
    }
}
