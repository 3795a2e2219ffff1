//! Classical single-case-deletion diagnostics for least squares.
//!
//! Everything is computed from a thin QR of the design `[1 | X]`; the inverse
//! of `X^T X` is never formed.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{AcdError, Result};
use crate::linalg::{with_intercept, ThinQr};
use crate::penalized::WeightedDesign;

/// Leverages closer to one than this make deletion undefined.
const LEVERAGE_EPS: f64 = 1e-10;
/// Residual sum of squares below this fraction of `||y||^2` counts as an exact fit.
const PERFECT_FIT_RTOL: f64 = 1e-24;

#[derive(Debug, Clone)]
pub struct OlsFit {
    /// Intercept first.
    pub beta_hat: DVector<f64>,
    pub residuals: DVector<f64>,
    pub leverages: DVector<f64>,
    pub sigma2_hat: f64,
    perfect_fit: bool,
    qr: ThinQr,
}

impl OlsFit {
    /// Number of fitted parameters, p + 1.
    pub fn rank(&self) -> usize {
        self.beta_hat.len()
    }

    /// Residual sum of squares is zero up to rounding.
    pub fn is_perfect(&self) -> bool {
        self.perfect_fit
    }
}

/// Divisor used in Cook's distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CookScale {
    /// Number of predictors p, excluding the intercept.
    #[default]
    Predictors,
    /// Number of parameters p + 1.
    Parameters,
}

impl CookScale {
    fn divisor(self, p: usize) -> f64 {
        match self {
            CookScale::Predictors => p as f64,
            CookScale::Parameters => (p + 1) as f64,
        }
    }
}

pub fn ols(d: &Dataset) -> Result<OlsFit> {
    let (n, p) = (d.n(), d.p());
    if n <= p + 1 {
        return Err(AcdError::InvalidData(format!(
            "least squares needs n > p + 1 (n={n}, p={p})"
        )));
    }
    let x = with_intercept(d.x());
    let qr = ThinQr::new(&x)?;
    let beta_hat = qr.solve(d.y());
    let residuals = d.y() - &x * &beta_hat;
    let leverages = qr.leverages();
    let rss = residuals.norm_squared();
    let sigma2_hat = rss / (n - p - 1) as f64;
    let perfect_fit = rss <= PERFECT_FIT_RTOL * d.y().norm_squared();
    Ok(OlsFit {
        beta_hat,
        residuals,
        leverages,
        sigma2_hat,
        perfect_fit,
        qr,
    })
}

/// Coefficients after deleting observation `i`, from the leverage/residual update.
pub fn delete_one(fit: &OlsFit, d: &Dataset, i: usize) -> Result<DVector<f64>> {
    if i >= d.n() {
        return Err(AcdError::InvalidParameter(format!("index {i} out of range")));
    }
    let h = fit.leverages[i];
    if 1.0 - h < LEVERAGE_EPS {
        return Err(AcdError::UnitLeverage { index: i, leverage: h });
    }
    let mut xi = DVector::zeros(d.p() + 1);
    xi[0] = 1.0;
    xi.rows_mut(1, d.p()).copy_from(&d.x().row(i).transpose());
    let g = fit.qr.solve_gram(&xi);
    Ok(&fit.beta_hat - g * (fit.residuals[i] / (1.0 - h)))
}

/// Cook's distance from its definition: the change in coefficients measured
/// in the metric of `X^T X`.
pub fn cooks_distance(fit: &OlsFit, d: &Dataset, scale: CookScale) -> Result<DVector<f64>> {
    if fit.perfect_fit || !(fit.sigma2_hat > 0.0) {
        return Err(AcdError::PerfectFit);
    }
    let x = with_intercept(d.x());
    let denom = scale.divisor(d.p()) * fit.sigma2_hat;
    let mut out = DVector::zeros(d.n());
    for i in 0..d.n() {
        let delta = &fit.beta_hat - delete_one(fit, d, i)?;
        out[i] = (&x * delta).norm_squared() / denom;
    }
    Ok(out)
}

/// Cook's distance from residuals and leverages, `e^2 h / (k s^2 (1-h)^2)`.
pub fn cooks_distance_from_leverage(fit: &OlsFit, p: usize, scale: CookScale) -> Result<DVector<f64>> {
    if fit.perfect_fit || !(fit.sigma2_hat > 0.0) {
        return Err(AcdError::PerfectFit);
    }
    let denom = scale.divisor(p) * fit.sigma2_hat;
    let mut out = DVector::zeros(fit.residuals.len());
    for i in 0..out.len() {
        let (e, h) = (fit.residuals[i], fit.leverages[i]);
        if 1.0 - h < LEVERAGE_EPS {
            return Err(AcdError::UnitLeverage { index: i, leverage: h });
        }
        out[i] = e * e * h / (denom * (1.0 - h) * (1.0 - h));
    }
    Ok(out)
}

/// Result of comparing case deletion with a binary-weight local fit.
#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub index: usize,
    pub delete_one: DVector<f64>,
    pub weighted: DVector<f64>,
    /// Largest coefficient difference, uncentered weighted fit vs. deletion.
    pub max_abs_diff: f64,
    /// Largest slope difference when the weighted fit is centered at `x_i`.
    pub centered_slope_diff: f64,
    /// Centered intercept minus the deletion fit's prediction at `x_i`.
    pub centered_intercept_diff: f64,
    pub holds: bool,
}

/// Check that deleting observation `i` equals a zero-penalty local fit with
/// weight 0 on `i` and 1 elsewhere, both uncentered and centered at `x_i`.
pub fn binary_weight_equivalence_check(d: &Dataset, i: usize, tol: f64) -> Result<EquivalenceReport> {
    let fit = ols(d)?;
    let deleted = delete_one(&fit, d, i)?;

    let mut w = vec![1.0; d.n()];
    w[i] = 0.0;
    let plain = WeightedDesign::new(d.x(), d.y(), &w, None)?.least_squares()?;
    let centered = WeightedDesign::new(d.x(), d.y(), &w, Some(i))?.least_squares()?;

    let mut weighted = DVector::zeros(d.p() + 1);
    weighted[0] = plain.intercept;
    weighted.rows_mut(1, d.p()).copy_from(&plain.slopes);
    let max_abs_diff = (&weighted - &deleted).abs().max();

    let slopes = deleted.rows(1, d.p());
    let centered_slope_diff = (&centered.slopes - slopes).abs().max();
    let fitted_at_i = deleted[0] + slopes.dot(&d.x().row(i).transpose());
    let centered_intercept_diff = centered.intercept - fitted_at_i;

    let holds = max_abs_diff < tol && centered_slope_diff < tol && centered_intercept_diff.abs() < tol;
    if !holds {
        log::warn!(
            "binary-weight equivalence failed at {i}: coef diff {max_abs_diff:e}, \
             centered slope diff {centered_slope_diff:e}, intercept diff {centered_intercept_diff:e}"
        );
    }
    Ok(EquivalenceReport {
        index: i,
        delete_one: deleted,
        weighted,
        max_abs_diff,
        centered_slope_diff,
        centered_intercept_diff,
        holds,
    })
}

/// Design `[1 | X]` for a dataset.
pub fn design_with_intercept(d: &Dataset) -> DMatrix<f64> {
    with_intercept(d.x())
}
