//! The adaptive Cook's distance pipeline.
//!
//! Local estimates `eta_i = (a_i, B_i)` are stacked into the gradient matrix
//! `Lambda` (n × (p+1)). With `v1`, `d1` the leading right singular vector and
//! singular value of `Lambda`, the distance of observation `i` is
//!
//! ```text
//! D_i = || Xd (v1 - eta_i) ||^2 / (p d1^2),   Xd = [1 | Z]
//! ```
//!
//! The distances are min-max normalized and flagged against a cutoff.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{standardize, Dataset, StandardizedData};
use crate::error::{AcdError, Result};
use crate::kernel::{estimate_tau, weights_at};
use crate::linalg::with_intercept;
use crate::penalized::{local_fit, Folds, LocalFit, PenaltySpec};

/// Stacked local estimates, one row per anchor.
#[derive(Debug, Clone)]
pub struct GradientMatrix {
    lambda: DMatrix<f64>,
    penalty_levels: Vec<f64>,
}

impl GradientMatrix {
    pub fn from_matrix(lambda: DMatrix<f64>) -> Result<Self> {
        if lambda.ncols() < 2 || lambda.nrows() < 1 {
            return Err(AcdError::InvalidParameter(format!(
                "gradient matrix must be n x (p+1) with p >= 1, got {:?}",
                lambda.shape()
            )));
        }
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(AcdError::InvalidParameter("gradient matrix has non-finite entries".into()));
        }
        let n = lambda.nrows();
        Ok(GradientMatrix {
            lambda,
            penalty_levels: vec![f64::NAN; n],
        })
    }

    fn from_fits(fits: &[LocalFit]) -> Result<Self> {
        let n = fits.len();
        let p = fits.first().map_or(0, |f| f.b_hat.len());
        let mut lambda = DMatrix::zeros(n, p + 1);
        for (i, f) in fits.iter().enumerate() {
            lambda.row_mut(i).copy_from(&f.eta().transpose());
        }
        let mut g = Self::from_matrix(lambda)?;
        g.penalty_levels = fits.iter().map(|f| f.lambda_used).collect();
        Ok(g)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn n(&self) -> usize {
        self.lambda.nrows()
    }

    /// Number of predictors (columns minus the intercept).
    pub fn p(&self) -> usize {
        self.lambda.ncols() - 1
    }

    pub fn eta(&self, i: usize) -> DVector<f64> {
        self.lambda.row(i).transpose()
    }

    /// Penalty level used at each anchor (NaN when built from a raw matrix).
    pub fn penalty_levels(&self) -> &[f64] {
        &self.penalty_levels
    }
}

#[derive(Debug, Clone)]
pub struct SvdSummary {
    /// Leading right singular vector, largest-magnitude entry positive.
    pub v1: DVector<f64>,
    pub d1: f64,
    /// Numerical rank of the gradient matrix.
    pub rank: usize,
    /// Leading right singular vector of the slope block (columns 2..p+1),
    /// if that block is nonzero.
    pub slope_direction: Option<DVector<f64>>,
}

impl SvdSummary {
    /// Slope entries of `v1`.
    pub fn v1_slopes(&self) -> DVector<f64> {
        self.v1.rows(1, self.v1.len() - 1).into_owned()
    }
}

fn canonicalize(v: &mut DVector<f64>) {
    let mut best = 0;
    for (k, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = k;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Leading right singular vector, leading singular value and numerical rank.
/// Wide matrices go through the eigen-decomposition of the row Gram matrix.
fn top_right_singular(m: &DMatrix<f64>) -> (DVector<f64>, f64, usize) {
    let (n, q) = m.shape();
    let (mut v, sigma) = if q <= n {
        let svd = m.clone().svd(false, true);
        let k = svd.singular_values.imax();
        let vt = svd.v_t.expect("v_t was requested");
        (vt.row(k).transpose(), svd.singular_values)
    } else {
        let eig = SymmetricEigen::new(m * m.transpose());
        let k = eig.eigenvalues.imax();
        let mut v = m.tr_mul(&eig.eigenvectors.column(k));
        let norm = v.norm();
        if norm > 0.0 {
            v /= norm;
        }
        (v, eig.eigenvalues.map(|e| e.max(0.0).sqrt()))
    };
    let d1 = sigma.max();
    let cutoff = d1 * n.max(q) as f64 * f64::EPSILON;
    let rank = sigma.iter().filter(|&&s| s > cutoff).count();
    canonicalize(&mut v);
    (v, d1, rank)
}

/// Leading right singular vector and value of the gradient matrix.
pub fn leading_direction(g: &GradientMatrix) -> Result<SvdSummary> {
    let m = g.matrix();
    if m.iter().all(|&v| v == 0.0) {
        return Err(AcdError::ZeroGradientMatrix);
    }
    let (v1, d1, rank) = top_right_singular(m);
    let slopes = m.columns(1, g.p()).into_owned();
    let slope_direction = if slopes.iter().all(|&v| v == 0.0) {
        None
    } else {
        Some(top_right_singular(&slopes).0)
    };
    Ok(SvdSummary {
        v1,
        d1,
        rank,
        slope_direction,
    })
}

fn check_design(g: &GradientMatrix, svd: &SvdSummary, design: &DMatrix<f64>) -> Result<()> {
    if !(svd.d1 > 0.0) {
        return Err(AcdError::ZeroGradientMatrix);
    }
    if design.shape() != g.matrix().shape() || svd.v1.len() != g.matrix().ncols() {
        return Err(AcdError::InvalidParameter(format!(
            "design {:?} does not match gradient matrix {:?}",
            design.shape(),
            g.matrix().shape()
        )));
    }
    Ok(())
}

/// `v1` oriented towards the rows of the gradient matrix (`1^T Lambda v1 >= 0`).
/// Distances use this orientation, so they do not depend on the sign returned
/// by the decomposition, and negating `Lambda` leaves them unchanged.
pub fn oriented_direction(g: &GradientMatrix, v1: &DVector<f64>) -> DVector<f64> {
    let s: f64 = (g.matrix() * v1).sum();
    let canonical = {
        let mut c = v1.clone();
        canonicalize(&mut c);
        c
    };
    if s.abs() <= 1e-12 * g.matrix().norm() * (g.n() as f64).sqrt() {
        canonical
    } else if s > 0.0 {
        v1.clone()
    } else {
        -v1
    }
}

/// Raw adaptive distances `||Xd (v1 - eta_i)||^2 / (p d1^2)`.
pub fn adaptive_distances(g: &GradientMatrix, svd: &SvdSummary, design: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_design(g, svd, design)?;
    let n = g.n();
    let v1 = oriented_direction(g, &svd.v1);
    // Column i of `dev` is v1 - eta_i.
    let mut dev = -g.matrix().transpose();
    for mut col in dev.column_iter_mut() {
        col += &v1;
    }
    let proj = design * dev;
    let denom = g.p() as f64 * svd.d1 * svd.d1;
    Ok(DVector::from_fn(n, |i, _| proj.column(i).norm_squared() / denom))
}

/// Same quantity through the explicit Gram matrix `Xd^T Xd`.
pub fn adaptive_distances_gram(g: &GradientMatrix, svd: &SvdSummary, design: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_design(g, svd, design)?;
    let gram = design.tr_mul(design);
    let denom = g.p() as f64 * svd.d1 * svd.d1;
    let v1 = oriented_direction(g, &svd.v1);
    Ok(DVector::from_fn(g.n(), |i, _| {
        let d = &v1 - g.eta(i);
        d.dot(&(&gram * &d)) / denom
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CutoffRule {
    /// Flag values above mean + 2 sample SD of the normalized distances.
    #[default]
    MeanPlus2SD,
    Fixed(f64),
}

impl CutoffRule {
    pub fn label(&self) -> String {
        match self {
            CutoffRule::MeanPlus2SD => "mean+2sd".into(),
            CutoffRule::Fixed(c) => format!("fixed:{c}"),
        }
    }
}

/// Audit trail of a full run.
#[derive(Debug, Clone)]
pub struct AcdAudit {
    pub tau: f64,
    pub svd: SvdSummary,
    pub penalty_levels: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct InfluenceReport {
    pub d_raw: DVector<f64>,
    pub d_norm: DVector<f64>,
    pub threshold: f64,
    /// 0-based indices, ascending.
    pub flagged: Vec<usize>,
    pub rule: CutoffRule,
    pub warnings: Vec<String>,
    pub audit: Option<AcdAudit>,
}

impl InfluenceReport {
    pub fn n(&self) -> usize {
        self.d_raw.len()
    }

    pub fn is_flagged(&self, i: usize) -> bool {
        self.flagged.binary_search(&i).is_ok()
    }
}

/// Min-max normalize and flag values strictly above the cutoff.
pub fn normalize_and_flag(d: &DVector<f64>, rule: CutoffRule) -> Result<InfluenceReport> {
    let n = d.len();
    if n < 2 {
        return Err(AcdError::InvalidData(format!("need at least 2 distances, got {n}")));
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(AcdError::InvalidData("non-finite distance".into()));
    }
    if let CutoffRule::Fixed(c) = rule {
        if !c.is_finite() {
            return Err(AcdError::InvalidParameter(format!("cutoff {c} is not finite")));
        }
    }
    let (lo, hi) = (d.min(), d.max());
    let mut warnings = Vec::new();
    let d_norm = if hi > lo {
        d.map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
    } else {
        let msg = "all distances are equal; nothing flagged".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
        DVector::zeros(n)
    };
    let threshold = match rule {
        CutoffRule::MeanPlus2SD => {
            let mean = d_norm.mean();
            let var = d_norm.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            mean + 2.0 * var.sqrt()
        }
        CutoffRule::Fixed(c) => c,
    };
    let flagged = if hi > lo {
        (0..n).filter(|&i| d_norm[i] > threshold).collect()
    } else {
        Vec::new()
    };
    Ok(InfluenceReport {
        d_raw: d.clone(),
        d_norm,
        threshold,
        flagged,
        rule,
        warnings,
        audit: None,
    })
}

/// Local fits at every anchor, in parallel over anchors.
pub fn fit_all_local(
    std: &StandardizedData,
    tau: f64,
    pen: &PenaltySpec,
    folds: Option<&Folds>,
) -> Result<GradientMatrix> {
    if !(tau > 0.0) {
        return Err(AcdError::InvalidParameter(format!("bandwidth must be positive, got {tau}")));
    }
    pen.validate()?;
    let fits: Vec<Result<LocalFit>> = (0..std.n())
        .into_par_iter()
        .map(|i| {
            let w = weights_at(&std.z, i, tau)?;
            local_fit(&std.z, &std.y_c, &w, pen, folds)
        })
        .collect();
    let mut out = Vec::with_capacity(fits.len());
    for (i, f) in fits.into_iter().enumerate() {
        out.push(f.map_err(|e| AcdError::Anchor {
            anchor: i,
            source: Box::new(e),
        })?);
    }
    GradientMatrix::from_fits(&out)
}

/// Which predictors enter the quadratic form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceDesign {
    /// `[1 | Z]` with standardized predictors.
    #[default]
    Standardized,
    /// `[1 | X]` on the original scale.
    Raw,
}

#[derive(Debug, Clone, Default)]
pub struct AcdOptions {
    /// Seed for the cross-validation fold assignment.
    pub seed: u64,
    pub design: DistanceDesign,
    /// Explicit folds, overriding the seeded assignment.
    pub folds: Option<Folds>,
}

impl AcdOptions {
    pub fn seeded(seed: u64) -> Self {
        AcdOptions {
            seed,
            ..Default::default()
        }
    }
}

/// Standardize, fit locally, decompose, measure and flag.
pub fn run_acd(d: &Dataset, pen: &PenaltySpec, rule: CutoffRule, opts: &AcdOptions) -> Result<InfluenceReport> {
    pen.validate().map_err(|e| e.at_stage("penalty"))?;
    let std = standardize(d);
    let mut warnings: Vec<String> = std
        .constant_columns
        .iter()
        .map(|k| format!("column {} ({}) is constant", k + 1, d.name(*k)))
        .collect();

    let tau = estimate_tau(&std.z).map_err(|e| e.at_stage("bandwidth"))?;

    let folds = match (&opts.folds, pen.needs_folds()) {
        (Some(f), _) => {
            if f.len() != d.n() {
                return Err(AcdError::InvalidParameter(format!(
                    "fold assignment covers {} rows, data has {}",
                    f.len(),
                    d.n()
                ))
                .at_stage("folds"));
            }
            Some(f.clone())
        }
        (None, true) => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            Some(Folds::random(d.n(), pen.cv_folds, &mut rng).map_err(|e| e.at_stage("folds"))?)
        }
        (None, false) => None,
    };

    let g = fit_all_local(&std, tau, pen, folds.as_ref()).map_err(|e| e.at_stage("local fits"))?;
    let svd = leading_direction(&g).map_err(|e| e.at_stage("svd"))?;
    let design = match opts.design {
        DistanceDesign::Standardized => with_intercept(&std.z),
        DistanceDesign::Raw => with_intercept(d.x()),
    };
    let raw = adaptive_distances(&g, &svd, &design).map_err(|e| e.at_stage("distances"))?;
    let mut report = normalize_and_flag(&raw, rule).map_err(|e| e.at_stage("normalize"))?;
    warnings.append(&mut report.warnings);
    report.warnings = warnings;
    report.audit = Some(AcdAudit {
        tau,
        penalty_levels: g.penalty_levels().to_vec(),
        svd,
    });
    Ok(report)
}
