//! Contaminated-data generators and the evaluation protocols built on them:
//! detection rates, trim-then-select false positives and subsample stability.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, StandardNormal};
use rayon::prelude::*;

use crate::classic::{cooks_distance, ols, CookScale};
use crate::data::{build_sigma, CorrelationSpec, Dataset};
use crate::error::{AcdError, Result};
use crate::influence::{normalize_and_flag, run_acd, AcdOptions, CutoffRule};
use crate::penalized::{Folds, PenaltySpec, WeightedDesign};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Link {
    #[default]
    Linear,
    /// `y = (intercept + beta^T x)^2 + noise`
    Squared,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BetaSpec {
    Fixed(Vec<f64>),
    /// These values placed at random distinct positions, redrawn per sample.
    RandomActive(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    pub n: usize,
    pub p: usize,
    pub beta: BetaSpec,
    pub intercept: f64,
    pub corr: CorrelationSpec,
    pub p_out: f64,
    /// Location of contaminated predictors (every coordinate).
    pub outlier_shift: f64,
    pub clean_noise_sd: f64,
    pub link: Link,
    pub t_df: f64,
    pub chi2_df: f64,
    /// Subtract the chi-square mean from contaminated noise.
    pub center_chi2: bool,
    /// Fixed 0-based outlier rows; random positions when `None`.
    pub fixed_positions: Option<Vec<usize>>,
}

fn model_one_beta(p: usize) -> Vec<f64> {
    let mut b = vec![0.0; p];
    for (k, v) in [(0, 3.0), (1, 1.5), (4, 2.0)] {
        if k < p {
            b[k] = v;
        }
    }
    b
}

impl SimScenario {
    /// n = 100, p = 10, beta = (3, 1.5, 0, 0, 2, 0, ..., 0), 5% contamination.
    pub fn model_one(corr: CorrelationSpec) -> Self {
        SimScenario {
            n: 100,
            p: 10,
            beta: BetaSpec::Fixed(model_one_beta(10)),
            intercept: 0.5,
            corr,
            p_out: 0.05,
            outlier_shift: 5.0,
            clean_noise_sd: 0.8,
            link: Link::Linear,
            t_df: 10.0,
            chi2_df: 5.0,
            center_chi2: false,
            fixed_positions: None,
        }
    }

    /// n = 100, p = 200, 10% contamination, five active coefficients.
    pub fn model_two(corr: CorrelationSpec) -> Self {
        SimScenario {
            p: 200,
            p_out: 0.10,
            beta: BetaSpec::RandomActive(vec![-2.0, -1.0, 0.5, 1.5, 3.0]),
            ..Self::model_one(corr)
        }
    }

    /// Model I with outliers fixed at rows 16, 19, 38, 67 and 83 (1-based).
    pub fn motivating(corr: CorrelationSpec) -> Self {
        SimScenario {
            fixed_positions: Some(vec![15, 18, 37, 66, 82]),
            ..Self::model_one(corr)
        }
    }

    pub fn with_link(mut self, link: Link) -> Self {
        self.link = link;
        self
    }

    pub fn n_outliers(&self) -> usize {
        match &self.fixed_positions {
            Some(pos) => pos.len(),
            None => (self.n as f64 * self.p_out).round() as usize,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AcdError::InvalidParameter(m));
        if self.n < 2 || self.p < 1 {
            return bad(format!("need n >= 2 and p >= 1, got n={} p={}", self.n, self.p));
        }
        if !(0.0..0.5).contains(&self.p_out) {
            return bad(format!("contamination fraction {} outside [0, 0.5)", self.p_out));
        }
        match &self.beta {
            BetaSpec::Fixed(b) if b.len() != self.p => {
                return bad(format!("beta has {} entries for p={}", b.len(), self.p))
            }
            BetaSpec::RandomActive(v) if v.len() > self.p => {
                return bad(format!("{} active values for p={}", v.len(), self.p))
            }
            _ => {}
        }
        if let Some(pos) = &self.fixed_positions {
            let mut sorted = pos.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != pos.len() || sorted.last().is_some_and(|&i| i >= self.n) {
                return bad("fixed outlier positions must be distinct and < n".into());
            }
            if 2 * pos.len() >= self.n {
                return bad("fixed outlier positions cover half the rows or more".into());
            }
        }
        if !(self.t_df > 0.0 && self.chi2_df > 0.0 && self.clean_noise_sd >= 0.0) {
            return bad("degrees of freedom must be positive and noise sd nonnegative".into());
        }
        Ok(())
    }
}

/// Generated data with the true contaminated rows.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub data: Dataset,
    /// 0-based, ascending.
    pub outliers: Vec<usize>,
    pub beta: DVector<f64>,
}

/// Independent generator for replicate `r` of a run seeded with `seed`.
pub fn replicate_rng(seed: u64, r: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    rng
}

pub fn gen_model<R: Rng + ?Sized>(s: &SimScenario, rng: &mut R) -> Result<LabeledSample> {
    s.validate()?;
    let sigma = build_sigma(s.corr, s.p)?;
    let l = Cholesky::new(sigma).ok_or(AcdError::NotPositiveDefinite)?.l();

    let beta = match &s.beta {
        BetaSpec::Fixed(b) => DVector::from_column_slice(b),
        BetaSpec::RandomActive(values) => {
            let mut b = DVector::zeros(s.p);
            let mut vals = values.clone();
            vals.shuffle(rng);
            for (pos, v) in sample_indices(rng, s.p, vals.len()).into_iter().zip(vals) {
                b[pos] = v;
            }
            b
        }
    };

    let mut outliers = match &s.fixed_positions {
        Some(pos) => pos.clone(),
        None => sample_indices(rng, s.n, s.n_outliers()).into_vec(),
    };
    outliers.sort_unstable();
    let mut is_out = vec![false; s.n];
    for &i in &outliers {
        is_out[i] = true;
    }

    let chi_t = ChiSquared::new(s.t_df).map_err(|e| AcdError::InvalidParameter(e.to_string()))?;
    let chi_e = ChiSquared::new(s.chi2_df).map_err(|e| AcdError::InvalidParameter(e.to_string()))?;
    let mut x = DMatrix::zeros(s.n, s.p);
    let mut y = DVector::zeros(s.n);
    let mut z = DVector::zeros(s.p);
    for i in 0..s.n {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut row = &l * &z;
        let noise = if is_out[i] {
            let scale = (rng.sample(chi_t) / s.t_df).sqrt();
            row.apply(|v| *v = s.outlier_shift + *v / scale);
            let e: f64 = rng.sample(chi_e);
            if s.center_chi2 {
                e - s.chi2_df
            } else {
                e
            }
        } else {
            s.clean_noise_sd * rng.sample::<f64, _>(StandardNormal)
        };
        let index = s.intercept + row.dot(&beta);
        y[i] = match s.link {
            Link::Linear => index,
            Link::Squared => index * index,
        } + noise;
        x.row_mut(i).copy_from(&row.transpose());
    }
    Ok(LabeledSample {
        data: Dataset::new(x, y)?,
        outliers,
        beta,
    })
}

fn sorted_set(v: &[usize]) -> Vec<usize> {
    let mut s = v.to_vec();
    s.sort_unstable();
    s.dedup();
    s
}

/// Fraction of true outliers that were flagged.
pub fn tpr(flagged: &[usize], truth: &[usize]) -> Result<f64> {
    let truth = sorted_set(truth);
    if truth.is_empty() {
        return Err(AcdError::InvalidParameter("true outlier set is empty".into()));
    }
    let flagged = sorted_set(flagged);
    let hits = truth.iter().filter(|i| flagged.binary_search(i).is_ok()).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Fraction of truly null coefficients that were selected.
pub fn selection_fpr(selected: &[usize], beta: &DVector<f64>) -> Result<f64> {
    let nulls = beta.iter().filter(|&&b| b == 0.0).count();
    if nulls == 0 {
        return Err(AcdError::InvalidParameter("no null coefficients".into()));
    }
    let spurious = sorted_set(selected)
        .into_iter()
        .filter(|&k| k < beta.len() && beta[k] == 0.0)
        .count();
    Ok(spurious as f64 / nulls as f64)
}

/// Detection procedures compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Flags nothing; selection on all rows.
    All,
    /// Classical Cook's distance, normalized and flagged like ACD.
    Ckd,
    AcdLasso,
    AcdScad,
    /// Flags exactly the true outliers.
    Oracle,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::All => "ALL",
            Method::Ckd => "CKD",
            Method::AcdLasso => "ACD-LASSO",
            Method::AcdScad => "ACD-SCAD",
            Method::Oracle => "ORACLE",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Some(Method::All),
            "ckd" | "cook" => Some(Method::Ckd),
            "acd-lasso" | "lasso" => Some(Method::AcdLasso),
            "acd-scad" | "scad" => Some(Method::AcdScad),
            "oracle" => Some(Method::Oracle),
            _ => None,
        }
    }

    /// Flagged rows (0-based, ascending). `truth` is needed only by the oracle.
    pub fn flag(&self, d: &Dataset, truth: Option<&[usize]>, rule: CutoffRule, seed: u64) -> Result<Vec<usize>> {
        match self {
            Method::All => Ok(Vec::new()),
            Method::Oracle => truth
                .map(sorted_set)
                .ok_or_else(|| AcdError::InvalidParameter("oracle detector needs the true outliers".into())),
            Method::Ckd => {
                let fit = ols(d)?;
                let cd = cooks_distance(&fit, d, CookScale::Predictors)?;
                Ok(normalize_and_flag(&cd, rule)?.flagged)
            }
            Method::AcdLasso | Method::AcdScad => {
                let pen = if *self == Method::AcdLasso {
                    PenaltySpec::lasso()
                } else {
                    PenaltySpec::scad()
                };
                Ok(run_acd(d, &pen, rule, &AcdOptions::seeded(seed))?.flagged)
            }
        }
    }
}

/// Variables selected by a cross-validated SCAD fit on all rows of `d`.
pub fn scad_select(d: &Dataset, seed: u64) -> Result<Vec<usize>> {
    let n = d.n();
    let w = vec![1.0 / n as f64; n];
    let problem = WeightedDesign::new(d.x(), d.y(), &w, None)?;
    let pen = PenaltySpec::scad();
    let folds = Folds::random(n, pen.cv_folds, &mut ChaCha8Rng::seed_from_u64(seed))?;
    Ok(problem.solve(&pen, Some(&folds))?.active_set())
}

#[derive(Debug, Clone)]
pub struct TrimOutcome {
    pub flagged: Vec<usize>,
    /// 0-based variable indices.
    pub selected: Vec<usize>,
}

/// Remove detector-flagged rows, then select variables with SCAD.
pub fn trim_and_select(sample: &LabeledSample, method: Method, rule: CutoffRule, seed: u64) -> Result<TrimOutcome> {
    let d = &sample.data;
    let flagged = method.flag(d, Some(&sample.outliers), rule, seed)?;
    if 2 * flagged.len() > d.n() {
        return Err(AcdError::DegenerateTrim {
            flagged: flagged.len(),
            n: d.n(),
        });
    }
    let kept = d.without_rows(&flagged)?;
    let selected = scad_select(&kept, seed)?;
    Ok(TrimOutcome { flagged, selected })
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub names: Vec<String>,
    pub proportions: Vec<f64>,
    pub reps: usize,
}

impl StabilityReport {
    /// Variables selected in at least half of the replicates.
    pub fn stable(&self) -> Vec<usize> {
        (0..self.proportions.len()).filter(|&k| self.proportions[k] >= 0.5).collect()
    }
}

/// Selection frequency over random subsamples, optionally trimming the rows a
/// detector flags within each subsample.
pub fn stability_selection(
    d: &Dataset,
    detector: Option<Method>,
    reps: usize,
    frac: f64,
    rule: CutoffRule,
    seed: u64,
) -> Result<StabilityReport> {
    if reps == 0 {
        return Err(AcdError::InvalidParameter("need at least one replicate".into()));
    }
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(AcdError::InvalidParameter(format!("subsample fraction {frac} outside (0, 1]")));
    }
    if detector == Some(Method::Oracle) {
        return Err(AcdError::InvalidParameter("oracle detector needs simulated data".into()));
    }
    let m = (frac * d.n() as f64).round() as usize;
    if m < 10 {
        return Err(AcdError::InvalidParameter(format!("subsample of {m} rows is below 10")));
    }
    let picks: Vec<Result<Vec<usize>>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r as u64);
            let mut rows = sample_indices(&mut rng, d.n(), m).into_vec();
            rows.sort_unstable();
            let sub = d.select_rows(&rows)?;
            let fit_seed = rng.next_u64();
            let sub = match detector {
                Some(method) => {
                    let flagged = method.flag(&sub, None, rule, fit_seed)?;
                    if 2 * flagged.len() > sub.n() {
                        return Err(AcdError::DegenerateTrim {
                            flagged: flagged.len(),
                            n: sub.n(),
                        });
                    }
                    sub.without_rows(&flagged)?
                }
                None => sub,
            };
            scad_select(&sub, fit_seed)
        })
        .collect();
    let mut counts = vec![0usize; d.p()];
    for pick in picks {
        for k in pick? {
            counts[k] += 1;
        }
    }
    Ok(StabilityReport {
        names: (0..d.p()).map(|k| d.name(k)).collect(),
        proportions: counts.iter().map(|&c| c as f64 / reps as f64).collect(),
        reps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// True positive rate of each detector.
    Detect,
    /// Selection false positive rate after trimming.
    Trim,
}

impl Experiment {
    pub fn metric(&self) -> &'static str {
        match self {
            Experiment::Detect => "tpr",
            Experiment::Trim => "fpr",
        }
    }
}

/// One metric value from one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub method: Method,
    pub metric: &'static str,
    pub value: f64,
}

/// Methods compared by default; Cook's distance is dropped when p + 1 >= n.
pub fn default_methods(experiment: Experiment, s: &SimScenario) -> Vec<Method> {
    let ckd = s.n > s.p + 1;
    let mut out = Vec::new();
    if experiment == Experiment::Trim {
        out.push(Method::All);
    }
    if ckd {
        out.push(Method::Ckd);
    }
    out.push(Method::AcdLasso);
    out.push(Method::AcdScad);
    out
}

/// Run `reps` replicates, each with its own generator stream.
pub fn run_experiment(
    s: &SimScenario,
    experiment: Experiment,
    methods: &[Method],
    reps: usize,
    rule: CutoffRule,
    seed: u64,
) -> Result<Vec<ReplicateRow>> {
    s.validate()?;
    if experiment == Experiment::Detect && s.n_outliers() == 0 {
        return Err(AcdError::InvalidParameter("detection rates need contaminated rows".into()));
    }
    let per_rep: Vec<Result<Vec<ReplicateRow>>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r as u64);
            let sample = gen_model(s, &mut rng)?;
            let fit_seed = rng.next_u64();
            methods
                .iter()
                .map(|&method| {
                    let value = match experiment {
                        Experiment::Detect => {
                            let flagged = method.flag(&sample.data, Some(&sample.outliers), rule, fit_seed)?;
                            tpr(&flagged, &sample.outliers)?
                        }
                        Experiment::Trim => {
                            let out = trim_and_select(&sample, method, rule, fit_seed)?;
                            selection_fpr(&out.selected, &sample.beta)?
                        }
                    };
                    Ok(ReplicateRow {
                        replicate: r,
                        method,
                        metric: experiment.metric(),
                        value,
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.at_stage("replicate"))
        })
        .collect();
    let mut rows = Vec::with_capacity(reps * methods.len());
    for rep in per_rep {
        rows.extend(rep?);
    }
    Ok(rows)
}
