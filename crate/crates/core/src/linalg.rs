//! Thin QR helpers for least squares without forming `(X^T X)^{-1}`.

use nalgebra::{DMatrix, DVector};

use crate::error::{AcdError, Result};

/// Condition estimates above this are treated as rank deficient.
pub const MAX_CONDITION: f64 = 1e13;

#[derive(Debug, Clone)]
pub struct ThinQr {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl ThinQr {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        let (n, m) = x.shape();
        if n < m {
            return Err(AcdError::RankDeficient { condition: f64::INFINITY });
        }
        let qr = x.clone().qr();
        let q = qr.q();
        let r = qr.r();
        let diag: Vec<f64> = (0..m).map(|k| r[(k, k)].abs()).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition < MAX_CONDITION) {
            return Err(AcdError::RankDeficient { condition });
        }
        Ok(ThinQr { q, r })
    }

    /// Least-squares coefficients `R^{-1} Q^T y`.
    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let qty = self.q.tr_mul(y);
        self.r
            .solve_upper_triangular(&qty)
            .expect("R has a nonzero diagonal")
    }

    /// `(X^T X)^{-1} v` through two triangular solves.
    pub fn solve_gram(&self, v: &DVector<f64>) -> DVector<f64> {
        let t = self
            .r
            .tr_solve_upper_triangular(v)
            .expect("R has a nonzero diagonal");
        self.r
            .solve_upper_triangular(&t)
            .expect("R has a nonzero diagonal")
    }

    /// Diagonal of the hat matrix: squared row norms of the thin Q.
    pub fn leverages(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.q.nrows(),
            self.q.row_iter().map(|row| row.norm_squared()),
        )
    }
}

/// Prepend a column of ones.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(0, 1.0)
}
