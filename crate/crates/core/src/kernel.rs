//! Kernel weights around an anchor observation and the global bandwidth.
//!
//! The weight of row `j` at anchor `i` is proportional to
//! `exp(-||z_i - z_j|| / tau^2)` with the unsquared Euclidean distance, and
//! the bandwidth `tau` is the mean of all pairwise row distances.

use nalgebra::DMatrix;

use crate::error::{AcdError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub anchor_index: usize,
    pub w: Vec<f64>,
}

impl WeightVector {
    /// Wrap externally supplied weights, normalizing them to sum to one.
    pub fn from_raw(anchor_index: usize, raw: Vec<f64>) -> Result<Self> {
        if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(AcdError::InvalidParameter("weights must be finite and nonnegative".into()));
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(AcdError::InvalidParameter("total weight is zero".into()));
        }
        Ok(WeightVector {
            anchor_index,
            w: raw.into_iter().map(|v| v / total).collect(),
        })
    }

    pub fn uniform(anchor_index: usize, n: usize) -> Self {
        WeightVector {
            anchor_index,
            w: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// Pairwise distances from row `i` to every row.
pub fn distances_from(z: &DMatrix<f64>, i: usize) -> Vec<f64> {
    let n = z.nrows();
    let mut acc = vec![0.0; n];
    for col in z.column_iter() {
        let ci = col[i];
        for (a, v) in acc.iter_mut().zip(col.iter()) {
            let d = v - ci;
            *a += d * d;
        }
    }
    acc.iter_mut().for_each(|a| *a = a.sqrt());
    acc
}

/// Mean Euclidean distance over all unordered pairs of rows.
pub fn estimate_tau(z: &DMatrix<f64>) -> Result<f64> {
    let n = z.nrows();
    if n < 2 {
        return Err(AcdError::InvalidData("bandwidth needs at least 2 rows".into()));
    }
    let mut total = 0.0;
    for i in 0..n {
        let d = distances_from(z, i);
        total += d[i + 1..].iter().sum::<f64>();
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let tau = total / pairs;
    if tau <= 0.0 {
        return Err(AcdError::ZeroBandwidth);
    }
    Ok(tau)
}

/// Normalized kernel weights at anchor `i`.
pub fn weights_at(z: &DMatrix<f64>, i: usize, tau: f64) -> Result<WeightVector> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(AcdError::InvalidParameter(format!("bandwidth must be positive, got {tau}")));
    }
    if i >= z.nrows() {
        return Err(AcdError::InvalidParameter(format!("anchor {i} out of range")));
    }
    let d = distances_from(z, i);
    let t2 = tau * tau;
    // Shift by the smallest distance (the anchor itself) so the largest exponent is 0.
    let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = d.iter().map(|&dj| (-(dj - dmin) / t2).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(WeightVector { anchor_index: i, w })
}
