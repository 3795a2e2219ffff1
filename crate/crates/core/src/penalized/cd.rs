//! Cyclic coordinate descent with covariance updates.
//!
//! Minimizes `(1/2n)||y - X b||^2 + sum_k P(b_k)` where column 0 may be left
//! unpenalized. The gradient vector `g = X^T (y - X b) / n` is kept up to date
//! and Gram columns are computed lazily the first time a coefficient moves.

use nalgebra::{DMatrix, DVector};

use super::{scad_penalty, scad_threshold, soft_threshold, PenaltyFamily};

#[derive(Debug, Clone, Copy)]
pub(crate) struct CdPenalty {
    pub family: PenaltyFamily,
    pub lambda: f64,
    pub gamma: f64,
}

impl CdPenalty {
    pub fn value(&self, b: f64) -> f64 {
        match self.family {
            PenaltyFamily::Lasso => self.lambda * b.abs(),
            PenaltyFamily::Scad => scad_penalty(b, self.lambda, self.gamma),
        }
    }

    /// Exact minimizer of `(s/2) b^2 - u b + P(b)`.
    fn coordinate(&self, u: f64, s: f64) -> f64 {
        match self.family {
            PenaltyFamily::Lasso => soft_threshold(u, self.lambda) / s,
            PenaltyFamily::Scad if s == 1.0 => scad_threshold(u, self.lambda, self.gamma),
            PenaltyFamily::Scad => scad_coordinate(u, s, self.lambda, self.gamma),
        }
    }
}

/// Univariate SCAD minimizer for an arbitrary curvature `s > 0`.
///
/// When `s (gamma - 1) <= 1` the middle regime is concave, so the minimum is
/// found by comparing the stationary points of each regime with the regime
/// boundaries.
pub(crate) fn scad_coordinate(u: f64, s: f64, lambda: f64, gamma: f64) -> f64 {
    let t = u.abs();
    if t == 0.0 {
        return 0.0;
    }
    let h = |b: f64| 0.5 * s * b * b - t * b + scad_penalty(b, lambda, gamma);
    let gl = gamma * lambda;
    let mut cands = vec![0.0, lambda, gl];
    cands.push(((t - lambda) / s).clamp(0.0, lambda));
    let curv = s - 1.0 / (gamma - 1.0);
    if curv > 0.0 {
        let b = (t - gl / (gamma - 1.0)) / curv;
        cands.push(b.clamp(lambda, gl));
    }
    cands.push((t / s).max(gl));
    let mut best = 0.0;
    let mut best_h = h(0.0);
    for &b in &cands {
        let hb = h(b);
        if hb < best_h {
            best = b;
            best_h = hb;
        }
    }
    best * u.signum()
}

pub(crate) struct CdSolver<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    n: f64,
    /// `X^T y / n`
    c: Vec<f64>,
    /// `||x_k||^2 / n`
    diag: Vec<f64>,
    gram: Vec<Option<Vec<f64>>>,
    unpenalized_first: bool,
    tol: f64,
    max_sweeps: usize,
}

/// Coefficients together with the matching gradient `X^T (y - X b) / n`.
#[derive(Debug, Clone)]
pub(crate) struct CdState {
    pub beta: Vec<f64>,
    pub grad: Vec<f64>,
}

impl<'a> CdSolver<'a> {
    pub fn new(
        x: &'a DMatrix<f64>,
        y: &'a DVector<f64>,
        unpenalized_first: bool,
        tol: f64,
        max_sweeps: usize,
    ) -> Self {
        let n = x.nrows() as f64;
        let c = x.column_iter().map(|col| col.dot(y) / n).collect();
        let diag = x.column_iter().map(|col| col.norm_squared() / n).collect();
        CdSolver {
            x,
            y,
            n,
            c,
            diag,
            gram: vec![None; x.ncols()],
            unpenalized_first,
            tol,
            max_sweeps,
        }
    }

    pub fn zero_state(&self) -> CdState {
        CdState {
            beta: vec![0.0; self.c.len()],
            grad: self.c.clone(),
        }
    }

    fn ensure_gram(&mut self, k: usize) {
        if self.gram[k].is_none() {
            let xk = self.x.column(k);
            let col = self
                .x
                .column_iter()
                .map(|xj| xj.dot(&xk) / self.n)
                .collect();
            self.gram[k] = Some(col);
        }
    }

    /// Largest gradient magnitude over penalized columns after fitting the
    /// unpenalized column alone. Penalties at or above this keep every
    /// penalized coefficient at zero.
    pub fn lambda_max(&mut self) -> f64 {
        let mut state = self.zero_state();
        if self.unpenalized_first && self.diag[0] > 0.0 {
            self.update(&mut state, 0, None);
        }
        let start = usize::from(self.unpenalized_first);
        state.grad[start..]
            .iter()
            .zip(&self.diag[start..])
            .filter(|(_, &s)| s > 0.0)
            .map(|(g, _)| g.abs())
            .fold(0.0, f64::max)
    }

    /// Exact objective evaluated from the residual vector.
    pub fn objective(&self, beta: &[f64], pen: &CdPenalty) -> f64 {
        let b = DVector::from_column_slice(beta);
        let r = self.y - self.x * b;
        let start = usize::from(self.unpenalized_first);
        let p: f64 = beta[start..].iter().map(|&v| pen.value(v)).sum();
        0.5 * r.norm_squared() / self.n + p
    }

    /// Minimize one coordinate; returns the absolute change.
    fn update(&mut self, state: &mut CdState, k: usize, pen: Option<&CdPenalty>) -> f64 {
        let s = self.diag[k];
        if s <= 0.0 {
            return 0.0;
        }
        let old = state.beta[k];
        let u = state.grad[k] + s * old;
        let new = match pen {
            Some(pen) if !(self.unpenalized_first && k == 0) => pen.coordinate(u, s),
            _ => u / s,
        };
        let delta = new - old;
        if delta != 0.0 {
            self.ensure_gram(k);
            let col = self.gram[k].as_ref().unwrap();
            for (g, gk) in state.grad.iter_mut().zip(col) {
                *g -= gk * delta;
            }
            state.beta[k] = new;
        }
        delta.abs()
    }

    /// Run sweeps until the largest coefficient change falls below the
    /// tolerance. Returns the number of sweeps; each completed sweep's
    /// objective is pushed onto `trace` when given.
    pub fn solve(
        &mut self,
        state: &mut CdState,
        pen: &CdPenalty,
        mut trace: Option<&mut Vec<f64>>,
    ) -> usize {
        let m = self.c.len();
        let mut sweeps = 0;
        loop {
            let mut max_change = 0.0f64;
            for k in 0..m {
                max_change = max_change.max(self.update(state, k, Some(pen)));
            }
            sweeps += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.objective(&state.beta, pen));
            }
            if max_change < self.tol || sweeps >= self.max_sweeps {
                break;
            }
            // Iterate on the active set until it settles, then re-check all columns.
            let active: Vec<usize> = (0..m).filter(|&k| state.beta[k] != 0.0).collect();
            loop {
                let mut change = 0.0f64;
                for &k in &active {
                    change = change.max(self.update(state, k, Some(pen)));
                }
                sweeps += 1;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(self.objective(&state.beta, pen));
                }
                if change < self.tol || sweeps >= self.max_sweeps {
                    break;
                }
            }
            if sweeps >= self.max_sweeps {
                break;
            }
        }
        if sweeps >= self.max_sweeps {
            log::warn!("coordinate descent hit the sweep limit ({})", self.max_sweeps);
        }
        sweeps
    }
}
