//! Fold assignment, lambda grids and K-fold selection of the penalty level.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use super::cd::{CdPenalty, CdSolver, CdState};
use super::{LambdaChoice, PenaltyFamily, PenaltySpec};
use crate::error::{AcdError, Result};

/// Assignment of observation indices to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Folds {
    assignment: Vec<usize>,
    k: usize,
}

impl Folds {
    /// Random balanced folds. The fold count is reduced (with a warning) so
    /// that every fold holds at least three observations.
    pub fn random<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Self> {
        if k < 2 {
            return Err(AcdError::InvalidParameter(format!("need at least 2 folds, got {k}")));
        }
        if n < 4 {
            return Err(AcdError::InvalidParameter(format!(
                "cross-validation needs at least 4 observations, got {n}"
            )));
        }
        let k_eff = k.min(n / 3).max(2);
        if k_eff < k {
            log::warn!("reducing cross-validation folds from {k} to {k_eff} for n={n}");
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut assignment = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            assignment[i] = pos % k_eff;
        }
        Ok(Folds { assignment, k: k_eff })
    }

    pub fn from_assignment(assignment: Vec<usize>) -> Result<Self> {
        let k = assignment.iter().max().map_or(0, |m| m + 1);
        if k < 2 {
            return Err(AcdError::InvalidParameter("need at least 2 folds".into()));
        }
        for f in 0..k {
            if !assignment.contains(&f) {
                return Err(AcdError::InvalidParameter(format!("fold {f} is empty")));
            }
        }
        Ok(Folds { assignment, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn fold_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    /// Same assignment with rows reordered: entry `r` of the result is the
    /// fold of original row `perm[r]`.
    pub fn permuted(&self, perm: &[usize]) -> Folds {
        Folds {
            assignment: perm.iter().map(|&i| self.assignment[i]).collect(),
            k: self.k,
        }
    }

    fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignment.len()).partition(|&i| self.assignment[i] != fold)
    }
}

/// Log-spaced grid from `lambda_max` down to `min_ratio * lambda_max`.
pub fn lambda_grid(lambda_max: f64, n_lambda: usize, min_ratio: f64) -> Vec<f64> {
    if n_lambda <= 1 {
        return vec![lambda_max];
    }
    let lo = min_ratio.ln();
    (0..n_lambda)
        .map(|t| lambda_max * (lo * t as f64 / (n_lambda - 1) as f64).exp())
        .collect()
}

/// Default lower end of the grid: 1% of `lambda_max`, 5% when `p >= n`.
pub fn default_min_ratio(n: usize, p: usize) -> f64 {
    if p >= n {
        0.05
    } else {
        0.01
    }
}

/// Solutions along a decreasing grid with warm starts. SCAD at each grid
/// point starts from the LASSO solution at the same penalty level.
pub(crate) fn fit_path(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    grid: &[f64],
    pen: &PenaltySpec,
    stop_at: Option<usize>,
) -> Vec<Vec<f64>> {
    let mut solver = CdSolver::new(x, y, true, pen.tol, pen.max_sweeps);
    let mut lasso: CdState = solver.zero_state();
    let last = stop_at.unwrap_or(grid.len().saturating_sub(1));
    let mut out = Vec::with_capacity(last + 1);
    for &lambda in &grid[..=last] {
        let lasso_pen = CdPenalty {
            family: PenaltyFamily::Lasso,
            lambda,
            gamma: pen.gamma,
        };
        solver.solve(&mut lasso, &lasso_pen, None);
        match pen.family {
            PenaltyFamily::Lasso => out.push(lasso.beta.clone()),
            PenaltyFamily::Scad => {
                let mut scad = lasso.clone();
                let scad_pen = CdPenalty {
                    family: PenaltyFamily::Scad,
                    ..lasso_pen
                };
                solver.solve(&mut scad, &scad_pen, None);
                out.push(scad.beta);
            }
        }
    }
    out
}

/// Outcome of a K-fold search over a lambda grid.
#[derive(Debug, Clone)]
pub struct CvResult {
    pub lambda: f64,
    pub index: usize,
    pub grid: Vec<f64>,
    /// Mean squared prediction error per grid point.
    pub errors: Vec<f64>,
}

pub(crate) fn resolve_grid(pen: &PenaltySpec, lambda_max: f64, n: usize, p: usize) -> Result<Vec<f64>> {
    match &pen.lambda {
        LambdaChoice::Fixed(l) => Ok(vec![*l]),
        LambdaChoice::Grid(g) => {
            if g.is_empty() {
                return Err(AcdError::InvalidParameter("empty lambda grid".into()));
            }
            let mut g = g.clone();
            g.sort_by(|a, b| b.total_cmp(a));
            Ok(g)
        }
        LambdaChoice::CrossValidated { n_lambda, min_ratio } => {
            let ratio = min_ratio.unwrap_or_else(|| default_min_ratio(n, p));
            Ok(lambda_grid(lambda_max, *n_lambda, ratio))
        }
    }
}

/// K-fold cross-validation over a decreasing grid on a prepared (already
/// scaled) design whose first column is the unpenalized intercept column.
pub(crate) fn cross_validate(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    grid: Vec<f64>,
    pen: &PenaltySpec,
    folds: &Folds,
) -> Result<CvResult> {
    let n = x.nrows();
    if folds.len() != n {
        return Err(AcdError::InvalidParameter(format!(
            "fold assignment covers {} rows, problem has {n}",
            folds.len()
        )));
    }
    let mut sse = vec![0.0; grid.len()];
    for f in 0..folds.k() {
        let (train, test) = folds.split(f);
        let xt = x.select_rows(&train);
        let yt = DVector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
        let path = fit_path(&xt, &yt, &grid, pen, None);
        for (t, beta) in path.iter().enumerate() {
            let b = DVector::from_column_slice(beta);
            for &j in &test {
                let pred = x.row(j).transpose().dot(&b);
                let r = y[j] - pred;
                sse[t] += r * r;
            }
        }
    }
    let errors: Vec<f64> = sse.iter().map(|s| s / n as f64).collect();
    // The grid is decreasing, so keeping the first minimum favours larger lambda on ties.
    let mut index = 0;
    for t in 1..errors.len() {
        if errors[t] < errors[index] * (1.0 - 1e-10) {
            index = t;
        }
    }
    Ok(CvResult {
        lambda: grid[index],
        index,
        grid,
        errors,
    })
}
