//! Dense and tridiagonal linear algebra helpers.
//!
//! The symmetric tridiagonal eigensolver is the implicit QL iteration with
//! Wilkinson-type shifts; dense complex factorizations and SVDs go through
//! `nalgebra`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Symmetric tridiagonal matrix: `diag[j]` and `off[j] = A[j][j+1] = A[j+1][j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::invalid("diag", "empty matrix"));
        }
        Error::check_len("tridiagonal off-diagonal", diag.len() - 1, off.len())?;
        Ok(Self { diag, off })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `A v` for a complex vector.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let n = self.dim();
        (0..n)
            .map(|j| {
                let mut acc = v[j] * self.diag[j];
                if j > 0 {
                    acc += v[j - 1] * self.off[j - 1];
                }
                if j + 1 < n {
                    acc += v[j + 1] * self.off[j];
                }
                acc
            })
            .collect()
    }

    pub fn apply_real(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|j| {
                let mut acc = v[j] * self.diag[j];
                if j > 0 {
                    acc += v[j - 1] * self.off[j - 1];
                }
                if j + 1 < n {
                    acc += v[j + 1] * self.off[j];
                }
                acc
            })
            .collect()
    }
}

/// All eigenpairs of `a`, ascending. Eigenvectors are Euclidean-orthonormal
/// columns returned as `vectors[k][j]` (pair `k`, component `j`).
///
/// Fails when the total number of QL sweeps exceeds `50·n`.
pub fn tridiag_eigen(a: &SymTridiag) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.dim();
    let mut d = a.diag.clone();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&a.off);
    // z[i][k]: component i of vector k
    let mut z = vec![vec![0.0; n]; n];
    for (i, row) in z.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let cap = 50 * n;
    let mut sweeps = 0;

    for l in 0..n {
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > cap {
                return Err(Error::ConvergenceFailure { iterations: cap });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in z.iter_mut() {
                    let f = row[i + 1];
                    row[i + 1] = s * row[i] + c * f;
                    row[i] = c * row[i] - s * f;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| d[x].total_cmp(&d[y]));
    let values = order.iter().map(|&k| d[k]).collect();
    let vectors = order
        .iter()
        .map(|&k| z.iter().map(|row| row[k]).collect())
        .collect();
    Ok((values, vectors))
}

/// Singular values of a complex matrix, descending.
pub fn singular_values(m: &DMatrix<C64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Singular values of a real matrix, descending.
pub fn singular_values_real(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Solve `(H + shift·I) x = rhs` for Hermitian positive (semi-)definite `H`
/// by Cholesky. `None` when the shifted matrix is not numerically positive definite.
pub fn solve_shifted_hermitian(h: &DMatrix<C64>, shift: f64, rhs: &[C64]) -> Option<Vec<C64>> {
    let n = h.nrows();
    let mut m = h.clone();
    for i in 0..n {
        m[(i, i)] += shift;
    }
    let chol = m.cholesky()?;
    let b = nalgebra::DVector::from_column_slice(rhs);
    let x = chol.solve(&b);
    Some(x.iter().copied().collect())
}

/// Euclidean norm of a complex vector.
pub fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}
