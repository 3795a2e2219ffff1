//! Penalized, observation-weighted local least squares.
//!
//! At anchor `i` the local problem regresses `sqrt(w) * y_c` on the
//! unpenalized column `sqrt(w)` and the anchor-centered predictors
//! `sqrt(w) * (Z - z_i)`. The loss is `(1/2n) ||r||^2` so that LASSO
//! solutions satisfy `|x_k^T r / n| <= lambda`.

mod cd;
mod cv;

use nalgebra::{DMatrix, DVector};

pub use cv::{default_min_ratio, lambda_grid, CvResult, Folds};

use crate::error::{AcdError, Result};
use crate::kernel::WeightVector;
use crate::linalg::ThinQr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyFamily {
    Lasso,
    Scad,
}

impl PenaltyFamily {
    pub fn label(&self) -> &'static str {
        match self {
            PenaltyFamily::Lasso => "LASSO",
            PenaltyFamily::Scad => "SCAD",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaChoice {
    /// A single penalty level; zero means plain weighted least squares.
    Fixed(f64),
    /// Cross-validate over `n_lambda` log-spaced values below `lambda_max`.
    CrossValidated {
        n_lambda: usize,
        min_ratio: Option<f64>,
    },
    /// Cross-validate over an explicit grid.
    Grid(Vec<f64>),
}

/// Scale on which the penalty acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnScaling {
    /// Penalize coefficients of the weighted columns rescaled to unit mean
    /// square, as glmnet and ncvreg do by default.
    Unit,
    /// Penalize the coefficients of the weighted columns as given.
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    pub family: PenaltyFamily,
    pub lambda: LambdaChoice,
    pub gamma: f64,
    pub cv_folds: usize,
    pub scaling: ColumnScaling,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl PenaltySpec {
    pub fn new(family: PenaltyFamily) -> Self {
        PenaltySpec {
            family,
            lambda: LambdaChoice::CrossValidated {
                n_lambda: 50,
                min_ratio: None,
            },
            gamma: 3.7,
            cv_folds: 5,
            scaling: ColumnScaling::Unit,
            tol: 1e-7,
            max_sweeps: 10_000,
        }
    }

    pub fn lasso() -> Self {
        Self::new(PenaltyFamily::Lasso)
    }

    pub fn scad() -> Self {
        Self::new(PenaltyFamily::Scad)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = LambdaChoice::Fixed(lambda);
        self
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> Self {
        self.lambda = LambdaChoice::Grid(grid);
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_folds(mut self, k: usize) -> Self {
        self.cv_folds = k;
        self
    }

    pub fn with_scaling(mut self, scaling: ColumnScaling) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn needs_folds(&self) -> bool {
        !matches!(self.lambda, LambdaChoice::Fixed(_))
    }

    pub fn validate(&self) -> Result<()> {
        if self.family == PenaltyFamily::Scad && !(self.gamma > 2.0) {
            return Err(AcdError::InvalidParameter(format!(
                "SCAD requires gamma > 2, got {}",
                self.gamma
            )));
        }
        match &self.lambda {
            LambdaChoice::Fixed(l) if !(*l >= 0.0) || !l.is_finite() => {
                return Err(AcdError::InvalidParameter(format!("lambda must be >= 0, got {l}")));
            }
            LambdaChoice::Grid(g) if g.is_empty() || g.iter().any(|l| !(*l >= 0.0)) => {
                return Err(AcdError::InvalidParameter("lambda grid must be nonempty and >= 0".into()));
            }
            LambdaChoice::CrossValidated { n_lambda, min_ratio } => {
                if *n_lambda == 0 {
                    return Err(AcdError::InvalidParameter("empty lambda grid".into()));
                }
                if let Some(r) = min_ratio {
                    if !(*r > 0.0 && *r <= 1.0) {
                        return Err(AcdError::InvalidParameter(format!("min_ratio {r} outside (0, 1]")));
                    }
                }
            }
            _ => {}
        }
        if self.needs_folds() && self.cv_folds < 2 {
            return Err(AcdError::InvalidParameter("cross-validation needs at least 2 folds".into()));
        }
        if !(self.tol > 0.0) || self.max_sweeps == 0 {
            return Err(AcdError::InvalidParameter("invalid convergence settings".into()));
        }
        Ok(())
    }
}

/// `sign(z) * max(|z| - lambda, 0)`.
pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Minimizer of `(b - z)^2 / 2 + P_scad(b)`.
///
/// Panics if `gamma <= 2`; use [`try_scad_threshold`] for a checked version.
pub fn scad_threshold(z: f64, lambda: f64, gamma: f64) -> f64 {
    try_scad_threshold(z, lambda, gamma).expect("SCAD requires gamma > 2")
}

pub fn try_scad_threshold(z: f64, lambda: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 2.0) {
        return Err(AcdError::InvalidParameter(format!("SCAD requires gamma > 2, got {gamma}")));
    }
    let a = z.abs();
    Ok(if a <= 2.0 * lambda {
        soft_threshold(z, lambda)
    } else if a <= gamma * lambda {
        ((gamma - 1.0) * z - z.signum() * gamma * lambda) / (gamma - 2.0)
    } else {
        z
    })
}

/// Closed form of `lambda * int_0^|b| min(1, (gamma - t/lambda)_+ / (gamma - 1)) dt`.
pub fn scad_penalty(b: f64, lambda: f64, gamma: f64) -> f64 {
    let a = b.abs();
    if lambda <= 0.0 {
        0.0
    } else if a <= lambda {
        lambda * a
    } else if a <= gamma * lambda {
        (2.0 * gamma * lambda * a - a * a - lambda * lambda) / (2.0 * (gamma - 1.0))
    } else {
        lambda * lambda * (gamma + 1.0) / 2.0
    }
}

/// A weighted regression problem: column 0 of the design is the unpenalized
/// intercept column, the remaining columns carry penalized slopes.
#[derive(Debug, Clone)]
pub struct WeightedDesign {
    design: DMatrix<f64>,
    response: DVector<f64>,
}

/// Intercept, slopes and the penalty level at which they were computed.
#[derive(Debug, Clone)]
pub struct PenalizedSolution {
    pub intercept: f64,
    pub slopes: DVector<f64>,
    pub lambda: f64,
}

impl PenalizedSolution {
    pub fn active_set(&self) -> Vec<usize> {
        self.slopes
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(k, _)| k)
            .collect()
    }
}

impl WeightedDesign {
    /// Build `sqrt(w) * y` and `[sqrt(w) | sqrt(w) * (Z - c)]`. With no center
    /// the predictors are used as given.
    pub fn new(z: &DMatrix<f64>, y: &DVector<f64>, w: &[f64], center: Option<usize>) -> Result<Self> {
        let (n, p) = z.shape();
        if y.len() != n || w.len() != n {
            return Err(AcdError::InvalidParameter(format!(
                "dimension mismatch: Z has {n} rows, y {} entries, w {} entries",
                y.len(),
                w.len()
            )));
        }
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(AcdError::InvalidParameter("weights must be finite and nonnegative".into()));
        }
        if w.iter().sum::<f64>() <= 0.0 {
            return Err(AcdError::InvalidParameter("total weight is zero".into()));
        }
        let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
        let mut design = DMatrix::zeros(n, p + 1);
        for (j, &s) in sw.iter().enumerate() {
            design[(j, 0)] = s;
        }
        for k in 0..p {
            let c = center.map_or(0.0, |i| z[(i, k)]);
            for j in 0..n {
                design[(j, k + 1)] = sw[j] * (z[(j, k)] - c);
            }
        }
        let response = DVector::from_iterator(n, (0..n).map(|j| sw[j] * y[j]));
        Ok(WeightedDesign { design, response })
    }

    pub fn from_parts(design: DMatrix<f64>, response: DVector<f64>) -> Result<Self> {
        if design.nrows() != response.len() || design.ncols() < 1 {
            return Err(AcdError::InvalidParameter("design/response mismatch".into()));
        }
        Ok(WeightedDesign { design, response })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    /// Number of penalized columns.
    pub fn p(&self) -> usize {
        self.design.ncols() - 1
    }

    /// Scales applied to the penalized columns before solving.
    fn column_scales(&self, scaling: ColumnScaling) -> Vec<f64> {
        let n = self.n() as f64;
        self.design
            .column_iter()
            .enumerate()
            .map(|(k, col)| {
                if k == 0 || scaling == ColumnScaling::Raw {
                    return 1.0;
                }
                let ms = col.norm_squared() / n;
                if ms > 0.0 {
                    ms.sqrt()
                } else {
                    1.0
                }
            })
            .collect()
    }

    fn scaled_design(&self, scales: &[f64]) -> DMatrix<f64> {
        let mut x = self.design.clone();
        for (k, mut col) in x.column_iter_mut().enumerate() {
            if scales[k] != 1.0 {
                col /= scales[k];
            }
        }
        x
    }

    fn unscale(&self, beta: &[f64], scales: &[f64], lambda: f64) -> PenalizedSolution {
        PenalizedSolution {
            intercept: beta[0],
            slopes: DVector::from_iterator(
                beta.len() - 1,
                beta[1..].iter().zip(&scales[1..]).map(|(b, s)| b / s),
            ),
            lambda,
        }
    }

    /// Largest useful penalty on the solver's scale.
    pub fn lambda_max(&self, scaling: ColumnScaling) -> f64 {
        let scales = self.column_scales(scaling);
        let x = self.scaled_design(&scales);
        cd::CdSolver::new(&x, &self.response, true, 1e-7, 1).lambda_max()
    }

    /// K-fold selection of lambda.
    pub fn cv_lambda(&self, pen: &PenaltySpec, folds: &Folds) -> Result<CvResult> {
        pen.validate()?;
        let scales = self.column_scales(pen.scaling);
        let x = self.scaled_design(&scales);
        let lmax = cd::CdSolver::new(&x, &self.response, true, pen.tol, 1).lambda_max();
        let grid = cv::resolve_grid(pen, lmax, self.n(), self.p())?;
        cv::cross_validate(&x, &self.response, grid, pen, folds)
    }

    /// Solve at the penalty level requested by `pen`; folds are required when
    /// lambda is cross-validated.
    pub fn solve(&self, pen: &PenaltySpec, folds: Option<&Folds>) -> Result<PenalizedSolution> {
        pen.validate()?;
        if let LambdaChoice::Fixed(l) = pen.lambda {
            if l == 0.0 {
                return self.least_squares();
            }
        }
        let scales = self.column_scales(pen.scaling);
        let x = self.scaled_design(&scales);
        let lmax = cd::CdSolver::new(&x, &self.response, true, pen.tol, 1).lambda_max();
        let grid = cv::resolve_grid(pen, lmax, self.n(), self.p())?;

        let (grid, index) = match pen.lambda {
            LambdaChoice::Fixed(l) => {
                // Approach a fixed level along a short path for warm starts.
                if l < lmax {
                    let mut g = lambda_grid(lmax, 10, l / lmax);
                    *g.last_mut().unwrap() = l;
                    let last = g.len() - 1;
                    (g, last)
                } else {
                    (vec![l], 0)
                }
            }
            _ => {
                if lmax <= 0.0 {
                    // Penalized columns carry no signal; only the intercept moves.
                    (vec![0.0], 0)
                } else {
                    let folds = folds.ok_or_else(|| {
                        AcdError::InvalidParameter("cross-validated lambda requires folds".into())
                    })?;
                    let cvr = cv::cross_validate(&x, &self.response, grid, pen, folds)?;
                    (cvr.grid, cvr.index)
                }
            }
        };
        let path = cv::fit_path(&x, &self.response, &grid, pen, Some(index));
        Ok(self.unscale(&path[index], &scales, grid[index]))
    }

    /// Cold-start coordinate descent at a fixed `lambda` (solver scale),
    /// returning the solution and the objective after every sweep.
    pub fn solve_traced(&self, pen: &PenaltySpec, lambda: f64) -> Result<(PenalizedSolution, Vec<f64>)> {
        pen.validate()?;
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(AcdError::InvalidParameter(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        let scales = self.column_scales(pen.scaling);
        let x = self.scaled_design(&scales);
        let mut solver = cd::CdSolver::new(&x, &self.response, true, pen.tol, pen.max_sweeps);
        let cdpen = cd::CdPenalty {
            family: pen.family,
            lambda,
            gamma: pen.gamma,
        };
        let mut state = solver.zero_state();
        let mut trace = vec![solver.objective(&state.beta, &cdpen)];
        solver.solve(&mut state, &cdpen, Some(&mut trace));
        Ok((self.unscale(&state.beta, &scales, lambda), trace))
    }

    /// Unpenalized weighted least squares by thin QR.
    pub fn least_squares(&self) -> Result<PenalizedSolution> {
        let qr = ThinQr::new(&self.design)?;
        let beta = qr.solve(&self.response);
        let scales = vec![1.0; beta.len()];
        Ok(self.unscale(beta.as_slice(), &scales, 0.0))
    }

    /// Objective `(1/2n)||r||^2 + sum P(b_k)` at raw-scale coefficients,
    /// with the penalty applied on the scale selected by `scaling`.
    pub fn objective(&self, sol: &PenalizedSolution, pen: &PenaltySpec, lambda: f64) -> f64 {
        let scales = self.column_scales(pen.scaling);
        let mut coef = DVector::zeros(self.design.ncols());
        coef[0] = sol.intercept;
        for k in 0..sol.slopes.len() {
            coef[k + 1] = sol.slopes[k];
        }
        let r = &self.response - &self.design * &coef;
        let penalty: f64 = (1..coef.len())
            .map(|k| {
                let b = coef[k] * scales[k];
                match pen.family {
                    PenaltyFamily::Lasso => lambda * b.abs(),
                    PenaltyFamily::Scad => scad_penalty(b, lambda, pen.gamma),
                }
            })
            .sum();
        0.5 * r.norm_squared() / self.n() as f64 + penalty
    }
}

/// Sparse local estimate at one anchor.
#[derive(Debug, Clone)]
pub struct LocalFit {
    pub anchor_index: usize,
    pub a_hat: f64,
    pub b_hat: DVector<f64>,
    pub lambda_used: f64,
    pub active_set: Vec<usize>,
}

impl LocalFit {
    /// `(a_hat, b_hat)` as one vector of length p+1.
    pub fn eta(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.b_hat.len() + 1);
        v[0] = self.a_hat;
        v.rows_mut(1, self.b_hat.len()).copy_from(&self.b_hat);
        v
    }
}

/// Penalized local linear fit at the weight vector's anchor.
pub fn local_fit(
    z: &DMatrix<f64>,
    y_c: &DVector<f64>,
    w: &WeightVector,
    pen: &PenaltySpec,
    folds: Option<&Folds>,
) -> Result<LocalFit> {
    if w.anchor_index >= z.nrows() {
        return Err(AcdError::InvalidParameter(format!("anchor {} out of range", w.anchor_index)));
    }
    let problem = WeightedDesign::new(z, y_c, &w.w, Some(w.anchor_index))?;
    let sol = problem.solve(pen, folds)?;
    Ok(LocalFit {
        anchor_index: w.anchor_index,
        a_hat: sol.intercept,
        active_set: sol.active_set(),
        b_hat: sol.slopes,
        lambda_used: sol.lambda,
    })
}
