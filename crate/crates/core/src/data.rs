//! Numeric containers, marginal standardization and correlation-structure builders.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{AcdError, Result};

/// Raw design matrix and response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        Self::with_names(x, y, None)
    }

    pub fn with_names(
        x: DMatrix<f64>,
        y: DVector<f64>,
        names: Option<Vec<String>>,
    ) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 {
            return Err(AcdError::InvalidData(format!("need at least 2 rows, got {n}")));
        }
        if p < 1 {
            return Err(AcdError::InvalidData("need at least 1 predictor".into()));
        }
        if y.len() != n {
            return Err(AcdError::InvalidData(format!(
                "response has {} entries but X has {n} rows",
                y.len()
            )));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(AcdError::InvalidData(format!(
                "non-finite entry in X at row {}, column {}",
                pos % n,
                pos / n
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(AcdError::InvalidData(format!("non-finite response at row {i}")));
        }
        if let Some(names) = &names {
            if names.len() != p {
                return Err(AcdError::InvalidData(format!(
                    "{} column names for {p} columns",
                    names.len()
                )));
            }
        }
        Ok(Dataset { x, y, names })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Column label, falling back to `X<k+1>`.
    pub fn name(&self, k: usize) -> String {
        match &self.names {
            Some(names) => names[k].clone(),
            None => format!("X{}", k + 1),
        }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Sub-dataset made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        let x = self.x.select_rows(rows);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        Dataset::with_names(x, y, self.names.clone())
    }

    /// Dataset with the given rows removed.
    pub fn without_rows(&self, drop: &[usize]) -> Result<Dataset> {
        let mut keep = vec![true; self.n()];
        for &i in drop {
            if i < keep.len() {
                keep[i] = false;
            }
        }
        let rows: Vec<usize> = (0..self.n()).filter(|&i| keep[i]).collect();
        self.select_rows(&rows)
    }
}

/// Marginally scaled predictors and centered response.
#[derive(Debug, Clone)]
pub struct StandardizedData {
    pub z: DMatrix<f64>,
    pub y_c: DVector<f64>,
    pub col_means: DVector<f64>,
    pub col_scales: DVector<f64>,
    pub y_mean: f64,
    /// Zero-variance columns kept with scale 1.
    pub constant_columns: Vec<usize>,
}

impl StandardizedData {
    /// Map a standardized matrix back to the raw scale.
    pub fn unstandardize(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = z.clone();
        for (k, mut col) in x.column_iter_mut().enumerate() {
            let (m, s) = (self.col_means[k], self.col_scales[k]);
            col.apply(|v| *v = *v * s + m);
        }
        x
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }
}

/// Center and scale each column of X (sample SD, denominator n-1) and center y.
pub fn standardize(d: &Dataset) -> StandardizedData {
    let (n, p) = d.x().shape();
    let nf = n as f64;
    let mut z = d.x().clone();
    let mut col_means = DVector::zeros(p);
    let mut col_scales = DVector::from_element(p, 1.0);
    let mut constant_columns = Vec::new();

    for (k, mut col) in z.column_iter_mut().enumerate() {
        let mean = col.iter().sum::<f64>() / nf;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / (nf - 1.0)).sqrt();
        let constant = col.iter().all(|&v| v == col[0]) || sd <= f64::EPSILON * mean.abs();
        let scale = if constant {
            log::warn!("column {k} has zero variance; kept with scale 1");
            constant_columns.push(k);
            1.0
        } else {
            sd
        };
        col.apply(|v| *v = (*v - mean) / scale);
        if constant {
            col.fill(0.0);
        }
        col_means[k] = mean;
        col_scales[k] = scale;
    }

    let y_mean = d.y().mean();
    let y_c = d.y().map(|v| v - y_mean);

    StandardizedData {
        z,
        y_c,
        col_means,
        col_scales,
        y_mean,
        constant_columns,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrelationSpec {
    Identity,
    Ar1(f64),
    Exchangeable(f64),
}

impl CorrelationSpec {
    pub fn rho(&self) -> f64 {
        match *self {
            CorrelationSpec::Identity => 0.0,
            CorrelationSpec::Ar1(r) | CorrelationSpec::Exchangeable(r) => r,
        }
    }
}

/// Build the p×p correlation matrix for a structure.
pub fn build_sigma(spec: CorrelationSpec, p: usize) -> Result<DMatrix<f64>> {
    if p < 1 {
        return Err(AcdError::InvalidParameter("p must be at least 1".into()));
    }
    let rho = spec.rho();
    if !(rho > -1.0 && rho < 1.0) {
        return Err(AcdError::InvalidParameter(format!("rho={rho} outside (-1, 1)")));
    }
    let entry: Box<dyn Fn(usize, usize) -> f64> = match spec {
        CorrelationSpec::Identity => Box::new(|k, l| if k == l { 1.0 } else { 0.0 }),
        CorrelationSpec::Ar1(r) => Box::new(move |k, l| r.powi(k.abs_diff(l) as i32)),
        CorrelationSpec::Exchangeable(r) => {
            if p > 1 && r <= -1.0 / (p as f64 - 1.0) {
                return Err(AcdError::NotPositiveDefinite);
            }
            Box::new(move |k, l| if k == l { 1.0 } else { r })
        }
    };
    // Entry functions depend on |k-l| or k==l only, so the matrix is bitwise symmetric.
    Ok(DMatrix::from_fn(p, p, |k, l| entry(k, l)))
}

/// Draw n rows from N_p(mean, sigma) through the Cholesky factor.
pub fn cholesky_sample<R: Rng + ?Sized>(
    sigma: &DMatrix<f64>,
    mean: &DVector<f64>,
    n: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let p = sigma.nrows();
    if sigma.ncols() != p || mean.len() != p {
        return Err(AcdError::InvalidParameter("sigma/mean dimension mismatch".into()));
    }
    let chol = Cholesky::new(sigma.clone()).ok_or(AcdError::NotPositiveDefinite)?;
    let l = chol.l();
    let mut out = DMatrix::zeros(n, p);
    let mut z = DVector::zeros(p);
    for i in 0..n {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let row = &l * &z + mean;
        out.row_mut(i).copy_from(&row.transpose());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn col_stats(z: &DMatrix<f64>, k: usize) -> (f64, f64) {
        let col = z.column(k);
        let n = col.len() as f64;
        let m = col.sum() / n;
        let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v.sqrt())
    }

    #[test]
    fn standardize_simple_column() {
        let d = Dataset::new(
            DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]),
            DVector::zeros(3),
        )
        .unwrap();
        let s = standardize(&d);
        assert_eq!(s.z.column(0).as_slice(), &[-1.0, 0.0, 1.0]);
        assert_eq!(s.y_c.as_slice(), &[0.0, 0.0, 0.0]);
        assert!(s.constant_columns.is_empty());
    }

    #[test]
    fn constant_column_kept_with_unit_scale() {
        let x = DMatrix::from_column_slice(3, 2, &[5.0, 5.0, 5.0, 1.0, 2.0, 4.0]);
        let d = Dataset::new(x, DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        let s = standardize(&d);
        assert_eq!(s.constant_columns, vec![0]);
        assert_eq!(s.col_scales[0], 1.0);
        assert_eq!(s.z.column(0).as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn random_matrix_columns_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = DMatrix::from_fn(20, 4, |_, _| rng.random::<f64>() * 10.0 - 3.0);
        let y = DVector::from_fn(20, |_, _| rng.random::<f64>());
        let d = Dataset::new(x.clone(), y).unwrap();
        let s = standardize(&d);
        for k in 0..4 {
            let (m, sd) = col_stats(&s.z, k);
            assert!(m.abs() < 1e-10);
            assert!((sd - 1.0).abs() < 1e-10);
        }
        assert!(s.y_c.mean().abs() < 1e-10);
        let back = s.unstandardize(&s.z);
        assert!((back - x).abs().max() < 1e-10);
    }

    #[test]
    fn dataset_rejects_bad_input() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, f64::NAN]);
        assert!(Dataset::new(x, DVector::zeros(2)).is_err());
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        assert!(Dataset::new(x.clone(), DVector::zeros(3)).is_err());
        assert!(Dataset::new(DMatrix::zeros(1, 1), DVector::zeros(1)).is_err());
    }

    #[test]
    fn sigma_structures() {
        assert_eq!(build_sigma(CorrelationSpec::Identity, 3).unwrap(), DMatrix::identity(3, 3));
        let ar = build_sigma(CorrelationSpec::Ar1(0.5), 3).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0]);
        assert_eq!(ar, expect);
        let ex = build_sigma(CorrelationSpec::Exchangeable(0.5), 2).unwrap();
        assert_eq!(ex, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
        assert_eq!(ar, ar.transpose());
    }

    #[test]
    fn exchangeable_rejects_non_pd() {
        assert!(matches!(
            build_sigma(CorrelationSpec::Exchangeable(-0.5), 4),
            Err(AcdError::NotPositiveDefinite)
        ));
        assert!(build_sigma(CorrelationSpec::Ar1(1.0), 3).is_err());
    }

    #[test]
    fn sample_covariance_matches_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = cholesky_sample(&DMatrix::identity(2, 2), &DVector::zeros(2), 10_000, &mut rng)
            .unwrap();
        let n = x.nrows() as f64;
        let means = x.row_mean();
        let centered = DMatrix::from_fn(x.nrows(), 2, |i, k| x[(i, k)] - means[k]);
        let cov = centered.transpose() * &centered / (n - 1.0);
        assert!((cov - DMatrix::<f64>::identity(2, 2)).abs().max() < 0.1);
    }

    #[test]
    fn sample_correlation_matches_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let x = cholesky_sample(&sigma, &DVector::zeros(2), 10_000, &mut rng).unwrap();
        let a = x.column(0);
        let b = x.column(1);
        let (ma, mb) = (a.mean(), b.mean());
        let cov: f64 = a.iter().zip(b.iter()).map(|(u, v)| (u - ma) * (v - mb)).sum();
        let va: f64 = a.iter().map(|u| (u - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|v| (v - mb).powi(2)).sum();
        let r = cov / (va * vb).sqrt();
        assert!((r - 0.9).abs() < 0.05, "r = {r}");
    }

    #[test]
    fn empty_sample_and_non_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = cholesky_sample(&DMatrix::identity(3, 3), &DVector::zeros(3), 0, &mut rng).unwrap();
        assert_eq!(x.shape(), (0, 3));
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(cholesky_sample(&bad, &DVector::zeros(2), 5, &mut rng).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn standardize_commutes_with_row_permutation(seed in 0u64..500, shift in 0usize..7) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = DMatrix::from_fn(8, 3, |_, _| rng.random::<f64>());
                let y = DVector::from_fn(8, |_, _| rng.random::<f64>());
                let d = Dataset::new(x, y).unwrap();
                let perm: Vec<usize> = (0..8).map(|i| (i + shift) % 8).collect();
                let s = standardize(&d);
                let sp = standardize(&d.select_rows(&perm).unwrap());
                for (r, &i) in perm.iter().enumerate() {
                    for k in 0..3 {
                        prop_assert!((sp.z[(r, k)] - s.z[(i, k)]).abs() < 1e-12);
                    }
                    prop_assert!((sp.y_c[r] - s.y_c[i]).abs() < 1e-12);
                }
            }
        }
    }
}
