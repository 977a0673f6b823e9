//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const MAX_DIM: usize = 512;
pub const MAX_SWEEPS: usize = 64;
const OFF_TOL: f64 = 1e-12;
const SYM_TOL: f64 = 1e-12;

/// Eigenpairs of a symmetric matrix, sorted so that `values[0]` is the largest.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector paired with `values[i]`.
    pub vectors: Matrix,
}

impl EigenResult {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.column(i)
    }

    /// Smallest eigenvalue `λ_d`.
    pub fn smallest(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Eigenvector of the smallest eigenvalue.
    pub fn smallest_vector(&self) -> Vec<f64> {
        self.vector(self.values.len() - 1)
    }

    /// `V Λ Vᵀ`
    pub fn reconstruct(&self) -> Matrix {
        let n = self.dim();
        let mut out = Matrix::zeros(n);
        for k in 0..n {
            let lam = self.values[k];
            for i in 0..n {
                let vik = self.vectors[(i, k)] * lam;
                for j in 0..n {
                    out[(i, j)] += vik * self.vectors[(j, k)];
                }
            }
        }
        out
    }
}

/// Eigendecomposition of a symmetric matrix.
///
/// Rotations sweep the upper triangle cyclically until the off-diagonal
/// Frobenius mass drops below `1e-12·‖A‖_F`.
pub fn sym_eigen(a: &Matrix) -> Result<EigenResult> {
    let n = a.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    if n > MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "dimension {n} exceeds {MAX_DIM}"
        )));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("matrix entry".into()));
    }
    let fro = a.frobenius();
    let asym = a.max_asymmetry();
    if asym > SYM_TOL * fro.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }

    let mut m = a.clone();
    m.symmetrize();
    let mut v = Matrix::identity(n);
    let target = OFF_TOL * fro;

    let mut converged = off_diagonal(&m) <= target;
    let mut sweeps = 0;
    while !converged && sweeps < MAX_SWEEPS {
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
        sweeps += 1;
        converged = off_diagonal(&m) <= target;
    }
    if !converged {
        return Err(Error::NoConvergence {
            sweeps,
            off: off_diagonal(&m),
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[(row, col)] = v[(row, src)];
        }
    }
    Ok(EigenResult { values, vectors })
}

fn off_diagonal(m: &Matrix) -> f64 {
    let n = m.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    if apq == 0.0 {
        return;
    }
    let app = m[(p, p)];
    let aqq = m[(q, q)];
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = m.dim();

    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = m[(k, p)];
        let akq = m[(k, q)];
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        m[(k, p)] = new_kp;
        m[(p, k)] = new_kp;
        m[(k, q)] = new_kq;
        m[(q, k)] = new_kq;
    }
    m[(p, p)] = app - t * apq;
    m[(q, q)] = aqq + t * apq;
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}
