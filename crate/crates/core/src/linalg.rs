//! Small-matrix operators acting on `ℝ^d` blocks.
//!
//! Model matrices are frequently multiples of the identity or diagonal.
//! [`BlockOp`] keeps that structure so per-block products cost `O(d)`
//! instead of `O(d²)`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum BlockOp {
    Scaled { dim: usize, value: f64 },
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl BlockOp {
    pub fn identity(dim: usize) -> Self {
        BlockOp::Scaled { dim, value: 1.0 }
    }

    pub fn scaled(dim: usize, value: f64) -> Self {
        BlockOp::Scaled { dim, value }
    }

    /// Picks the cheapest exact representation of `m`.
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        assert!(m.is_square() && m.nrows() > 0);
        let d = m.nrows();
        let off_diag_zero = (0..d).all(|i| (0..d).all(|j| i == j || m[(i, j)] == 0.0));
        if !off_diag_zero {
            return BlockOp::Dense(m.clone());
        }
        let diag: Vec<f64> = (0..d).map(|i| m[(i, i)]).collect();
        if diag.iter().all(|&v| v == diag[0]) {
            BlockOp::Scaled { dim: d, value: diag[0] }
        } else {
            BlockOp::Diagonal(diag)
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BlockOp::Scaled { dim, .. } => *dim,
            BlockOp::Diagonal(v) => v.len(),
            BlockOp::Dense(m) => m.nrows(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            BlockOp::Scaled { dim, value } => DMatrix::from_diagonal_element(*dim, *dim, *value),
            BlockOp::Diagonal(v) => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v)),
            BlockOp::Dense(m) => m.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            BlockOp::Scaled { value, .. } => *value == 0.0,
            BlockOp::Diagonal(v) => v.iter().all(|&x| x == 0.0),
            BlockOp::Dense(m) => m.iter().all(|&x| x == 0.0),
        }
    }

    /// `out += s · M x`.
    #[inline]
    pub fn apply_add(&self, x: &[f64], s: f64, out: &mut [f64]) {
        match self {
            BlockOp::Scaled { value, .. } => {
                let c = s * value;
                for (o, xi) in out.iter_mut().zip(x) {
                    *o += c * xi;
                }
            }
            BlockOp::Diagonal(v) => {
                for ((o, xi), di) in out.iter_mut().zip(x).zip(v) {
                    *o += s * di * xi;
                }
            }
            BlockOp::Dense(m) => {
                let d = m.nrows();
                for j in 0..d {
                    let c = s * x[j];
                    if c != 0.0 {
                        let col = m.column(j);
                        for i in 0..d {
                            out[i] += col[i] * c;
                        }
                    }
                }
            }
        }
    }

    /// `out += s · Mᵀ x`.
    #[inline]
    pub fn apply_transpose_add(&self, x: &[f64], s: f64, out: &mut [f64]) {
        match self {
            BlockOp::Dense(m) => {
                let d = m.nrows();
                for j in 0..d {
                    let col = m.column(j);
                    let mut acc = 0.0;
                    for i in 0..d {
                        acc += col[i] * x[i];
                    }
                    out[j] += s * acc;
                }
            }
            _ => self.apply_add(x, s, out),
        }
    }

    /// `M x` as a new vector.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_add(x, 1.0, &mut out);
        out
    }

    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_transpose_add(x, 1.0, &mut out);
        out
    }

    /// `xᵀ M x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mx = self.apply(x);
        mx.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn transpose(&self) -> BlockOp {
        match self {
            BlockOp::Dense(m) => BlockOp::Dense(m.transpose()),
            other => other.clone(),
        }
    }

    pub fn mul(&self, other: &BlockOp) -> BlockOp {
        use BlockOp::*;
        match (self, other) {
            (Scaled { dim, value: a }, Scaled { value: b, .. }) => Scaled { dim: *dim, value: a * b },
            (Scaled { value: a, .. }, Diagonal(v)) | (Diagonal(v), Scaled { value: a, .. }) => {
                Diagonal(v.iter().map(|x| a * x).collect())
            }
            (Diagonal(u), Diagonal(v)) => Diagonal(u.iter().zip(v).map(|(a, b)| a * b).collect()),
            _ => BlockOp::from_matrix(&(self.to_dense() * other.to_dense())),
        }
    }

    pub fn add(&self, other: &BlockOp) -> BlockOp {
        use BlockOp::*;
        match (self, other) {
            (Scaled { dim, value: a }, Scaled { value: b, .. }) => Scaled { dim: *dim, value: a + b },
            (Scaled { value: a, .. }, Diagonal(v)) | (Diagonal(v), Scaled { value: a, .. }) => {
                Diagonal(v.iter().map(|x| a + x).collect())
            }
            (Diagonal(u), Diagonal(v)) => Diagonal(u.iter().zip(v).map(|(a, b)| a + b).collect()),
            _ => BlockOp::from_matrix(&(self.to_dense() + other.to_dense())),
        }
    }

    pub fn scale(&self, s: f64) -> BlockOp {
        match self {
            BlockOp::Scaled { dim, value } => BlockOp::Scaled { dim: *dim, value: s * value },
            BlockOp::Diagonal(v) => BlockOp::Diagonal(v.iter().map(|x| s * x).collect()),
            BlockOp::Dense(m) => BlockOp::Dense(m * s),
        }
    }

    /// Inverse of a symmetric positive-definite operator.
    pub fn inverse_spd(&self) -> Result<BlockOp> {
        match self {
            BlockOp::Scaled { dim, value } if *value > 0.0 => Ok(BlockOp::Scaled {
                dim: *dim,
                value: 1.0 / value,
            }),
            BlockOp::Diagonal(v) if v.iter().all(|&x| x > 0.0) => {
                Ok(BlockOp::Diagonal(v.iter().map(|x| 1.0 / x).collect()))
            }
            BlockOp::Dense(m) => {
                check_symmetric(m)?;
                let chol = nalgebra::Cholesky::new(m.clone())
                    .ok_or_else(|| Error::Model("matrix is not positive definite".into()))?;
                Ok(BlockOp::from_matrix(&chol.inverse()))
            }
            _ => Err(Error::Model("matrix is not positive definite".into())),
        }
    }

    /// `log det M` for symmetric positive-definite `M`.
    pub fn log_det_spd(&self) -> Result<f64> {
        match self {
            BlockOp::Scaled { dim, value } if *value > 0.0 => Ok(*dim as f64 * value.ln()),
            BlockOp::Diagonal(v) if v.iter().all(|&x| x > 0.0) => Ok(v.iter().map(|x| x.ln()).sum()),
            BlockOp::Dense(m) => {
                let chol = nalgebra::Cholesky::new(m.clone())
                    .ok_or_else(|| Error::Model("matrix is not positive definite".into()))?;
                Ok(2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>())
            }
            _ => Err(Error::Model("matrix is not positive definite".into())),
        }
    }

    /// Smallest and largest eigenvalue of a symmetric operator.
    pub fn sym_eig_extremes(&self) -> (f64, f64) {
        match self {
            BlockOp::Scaled { value, .. } => (*value, *value),
            BlockOp::Diagonal(v) => v
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x))),
            BlockOp::Dense(m) => sym_eig_extremes(m),
        }
    }

    /// Euclidean operator norm `ρ_max(MᵀM)^{1/2}`.
    pub fn op_norm(&self) -> f64 {
        match self {
            BlockOp::Scaled { value, .. } => value.abs(),
            BlockOp::Diagonal(v) => v.iter().fold(0.0_f64, |a, x| a.max(x.abs())),
            BlockOp::Dense(m) => sym_eig_extremes(&(m.transpose() * m)).1.max(0.0).sqrt(),
        }
    }

    /// Eigenvalue extremes of `MᵀM`.
    pub fn gram_eig_extremes(&self) -> (f64, f64) {
        match self {
            BlockOp::Scaled { value, .. } => (value * value, value * value),
            BlockOp::Diagonal(v) => v
                .iter()
                .map(|x| x * x)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x))),
            BlockOp::Dense(m) => sym_eig_extremes(&(m.transpose() * m)),
        }
    }
}

pub fn sym_eig_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    eig.eigenvalues
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

pub fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let scale = m.iter().fold(0.0_f64, |a, x| a.max(x.abs())).max(1.0);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Model(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Validates that `m` is symmetric positive definite by factorization.
pub fn check_spd(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Model(format!("{name} must be square")));
    }
    check_symmetric(m).map_err(|e| Error::Model(format!("{name}: {e}")))?;
    nalgebra::Cholesky::new(m.clone())
        .map(|_| ())
        .ok_or_else(|| Error::Model(format!("{name} is not positive definite")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structure_detection() {
        let m = DMatrix::from_diagonal_element(3, 3, 2.0);
        assert_eq!(BlockOp::from_matrix(&m), BlockOp::scaled(3, 2.0));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        assert_eq!(BlockOp::from_matrix(&m), BlockOp::Diagonal(vec![1.0, 3.0]));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 3.0]);
        assert!(matches!(BlockOp::from_matrix(&m), BlockOp::Dense(_)));
    }

    #[test]
    fn products_match_dense() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -0.5, 3.0]);
        let op = BlockOp::from_matrix(&a);
        let x = [0.3, -1.2];
        let y = op.apply(&x);
        let yt = op.apply_transpose(&x);
        let xd = nalgebra::DVector::from_column_slice(&x);
        let yd = &a * &xd;
        let ytd = a.transpose() * &xd;
        for i in 0..2 {
            assert!((y[i] - yd[i]).abs() < 1e-15);
            assert!((yt[i] - ytd[i]).abs() < 1e-15);
        }
        assert!((op.op_norm() - a.singular_values().max()).abs() < 1e-12);
    }

    #[test]
    fn spd_checks() {
        let good = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert!(check_spd(&good, "S").is_ok());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(check_spd(&bad, "S").is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 1.0]);
        assert!(check_spd(&asym, "S").is_err());
        let inv = BlockOp::from_matrix(&good).inverse_spd().unwrap().to_dense();
        assert!(((&good * inv) - DMatrix::identity(2, 2)).norm() < 1e-14);
    }
}
