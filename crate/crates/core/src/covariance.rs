//! Symmetric positive-definite covariance matrices: cyclic Jacobi
//! eigendecomposition, `Σ^{-1/2}`, its row norms and operator norm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SYMMETRY_TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigenvalues and eigenvectors (as columns of `vectors`) of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

fn frobenius_off(a: &[Vec<f64>]) -> f64 {
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

fn check_square(a: &[Vec<f64>]) -> Result<usize> {
    let d = a.len();
    if d == 0 || a.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("matrix must be square and non-empty"));
    }
    if a.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix entries must be finite"));
    }
    Ok(d)
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm is
/// negligible relative to the whole matrix.
pub fn jacobi_eigen(matrix: &[Vec<f64>]) -> Result<SymmetricEigen> {
    let d = check_square(matrix)?;
    let mut a = matrix.to_vec();
    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    let scale = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let target = 1e-15 * scale;
    let mut sweeps = 0;
    while frobenius_off(&a) > target {
        if sweeps == MAX_SWEEPS {
            if frobenius_off(&a) <= 1e-12 * scale {
                break;
            }
            return Err(Error::Numerical(
                "Jacobi eigensolver did not converge".into(),
            ));
        }
        sweeps += 1;
        for p in 0..d {
            for q in p + 1..d {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (x, y) = (row[p], row[q]);
                    row[p] = c * x - s * y;
                    row[q] = s * x + c * y;
                }
                for k in 0..d {
                    let (x, y) = (a[p][k], a[q][k]);
                    a[p][k] = c * x - s * y;
                    a[q][k] = s * x + c * y;
                }
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for row in v.iter_mut() {
                    let (x, y) = (row[p], row[q]);
                    row[p] = c * x - s * y;
                    row[q] = s * x + c * y;
                }
            }
        }
    }
    Ok(SymmetricEigen {
        values: (0..d).map(|i| a[i][i]).collect(),
        vectors: v,
        sweeps,
    })
}

/// `Σ` together with `Σ^{-1/2}`, the row norms `√(Σ_j σ̃_{ij}²)` and
/// `‖Σ^{-1/2}‖_op`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    pub sigma: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub inv_sqrt: Vec<Vec<f64>>,
    pub row_norms: Vec<f64>,
    pub op_norm: f64,
}

impl CovarianceModel {
    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    /// Frobenius norm of `Σ^{-1/2} Σ^{-1/2} Σ - I`.
    pub fn reconstruction_residual(&self) -> f64 {
        let m = matmul(&matmul(&self.inv_sqrt, &self.inv_sqrt), &self.sigma);
        let mut s = 0.0;
        for (i, row) in m.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let e = v - f64::from(u8::from(i == j));
                s += e * e;
            }
        }
        s.sqrt()
    }
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn covariance_model(sigma: &[Vec<f64>]) -> Result<CovarianceModel> {
    let d = check_square(sigma)?;
    let scale = sigma.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
    for i in 0..d {
        for j in i + 1..d {
            if (sigma[i][j] - sigma[j][i]).abs() > SYMMETRY_TOLERANCE * scale {
                return Err(Error::invalid(format!(
                    "covariance is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let eig = jacobi_eigen(sigma)?;
    let lambda_min = eig.values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lambda_min > 0.0) {
        return Err(Error::invalid(format!(
            "covariance is not positive definite (smallest eigenvalue {lambda_min})"
        )));
    }
    let inv_roots: Vec<f64> = eig.values.iter().map(|l| 1.0 / l.sqrt()).collect();
    let v = &eig.vectors;
    let inv_sqrt: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| (0..d).map(|k| v[i][k] * inv_roots[k] * v[j][k]).sum())
                .collect()
        })
        .collect();
    let row_norms = inv_sqrt
        .iter()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    Ok(CovarianceModel {
        sigma: sigma.to_vec(),
        eigenvalues: eig.values,
        inv_sqrt,
        row_norms,
        op_norm: 1.0 / lambda_min.sqrt(),
    })
}
