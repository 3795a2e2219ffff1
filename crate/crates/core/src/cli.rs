//! Command-line surface.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::CorrelationSpec;
use crate::error::{AcdError, Result};
use crate::influence::{run_acd, AcdOptions, CutoffRule, DistanceDesign};
use crate::io::{
    boxplot_svg, group_by_method, read_csv, render_replicates_csv, render_stability_csv, with_suffix, write_report,
};
use crate::penalized::{PenaltyFamily, PenaltySpec};
use crate::sim::{default_methods, run_experiment, scad_select, stability_selection, Experiment, Link, Method, SimScenario};

/// Environment variable that overrides `--threads`.
pub const THREADS_ENV: &str = "ACD_THREADS";

#[derive(Debug, Clone, Parser)]
#[command(name = "acd", version, about = "Adaptive Cook's distance influence diagnostics")]
pub struct RunConfig {
    /// Worker threads (default: all logical cores; ACD_THREADS overrides).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Flag influential observations in a CSV dataset.
    Detect(DetectArgs),
    /// Run a Monte Carlo experiment on a contaminated scenario.
    Simulate(SimulateArgs),
    /// Select variables with SCAD before and after trimming flagged rows.
    TrimSelect(TrimArgs),
    /// Selection proportions over repeated subsamples.
    Stability(StabilityArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PenaltyArg {
    Lasso,
    Scad,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DetectorArg {
    Lasso,
    Scad,
    Ckd,
}

impl DetectorArg {
    fn method(self) -> Method {
        match self {
            DetectorArg::Lasso => Method::AcdLasso,
            DetectorArg::Scad => Method::AcdScad,
            DetectorArg::Ckd => Method::Ckd,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StructureArg {
    Identity,
    Ar1,
    Exchangeable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Motivating,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ExperimentArg {
    Detect,
    Trim,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LinkArg {
    Linear,
    Squared,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DesignArg {
    Standardized,
    Raw,
}

/// `auto` (mean + 2 SD) or `fixed:<c>`.
pub fn parse_cutoff(s: &str) -> std::result::Result<CutoffRule, String> {
    match s {
        "auto" => Ok(CutoffRule::MeanPlus2SD),
        _ => {
            let c = s
                .strip_prefix("fixed:")
                .ok_or_else(|| format!("expected 'auto' or 'fixed:<value>', got '{s}'"))?;
            c.parse::<f64>()
                .ok()
                .filter(|c| c.is_finite())
                .map(CutoffRule::Fixed)
                .ok_or_else(|| format!("invalid cutoff value '{c}'"))
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CutoffArgs {
    /// Flagging rule: auto (mean + 2 SD) or fixed:<c>.
    #[arg(long, default_value = "auto", value_parser = parse_cutoff)]
    pub cutoff: CutoffRule,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct PenaltyArgs {
    #[arg(long, value_enum, default_value = "lasso")]
    pub penalty: PenaltyArg,

    /// Fixed penalty level; cross-validated when omitted.
    #[arg(long)]
    pub lambda: Option<f64>,

    #[arg(long, default_value_t = 5)]
    pub folds: usize,

    #[arg(long, default_value_t = 3.7)]
    pub gamma: f64,
}

impl PenaltyArgs {
    pub fn spec(&self) -> PenaltySpec {
        let family = match self.penalty {
            PenaltyArg::Lasso => PenaltyFamily::Lasso,
            PenaltyArg::Scad => PenaltyFamily::Scad,
        };
        let mut pen = PenaltySpec::new(family).with_folds(self.folds).with_gamma(self.gamma);
        if let Some(l) = self.lambda {
            pen = pen.with_lambda(l);
        }
        pen
    }
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub response: String,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[command(flatten)]
    pub cutoff: CutoffArgs,
    /// Predictors used in the distance quadratic form.
    #[arg(long, value_enum, default_value = "standardized")]
    pub design: DesignArg,
    /// Output prefix for `<prefix>.csv` and `<prefix>.svg`.
    #[arg(long, default_value = "acd_report")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "1")]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value = "ar1")]
    pub structure: StructureArg,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, value_enum, default_value = "detect")]
    pub experiment: ExperimentArg,
    #[arg(long, value_enum, default_value = "linear")]
    pub link: LinkArg,
    /// Subtract the mean of the contaminated chi-square noise.
    #[arg(long)]
    pub center_noise: bool,
    #[command(flatten)]
    pub cutoff: CutoffArgs,
    #[arg(long, default_value = "sim")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrimArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub response: String,
    #[arg(long, value_enum, default_value = "lasso")]
    pub detector: DetectorArg,
    #[command(flatten)]
    pub cutoff: CutoffArgs,
    #[arg(long, default_value = "trim")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct StabilityArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub response: String,
    #[arg(long, value_enum, default_value = "lasso")]
    pub detector: DetectorArg,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.95)]
    pub frac: f64,
    #[command(flatten)]
    pub cutoff: CutoffArgs,
    #[arg(long, default_value = "stability")]
    pub out: PathBuf,
}

impl SimulateArgs {
    pub fn scenario(&self) -> Result<SimScenario> {
        let corr = match self.structure {
            StructureArg::Identity => CorrelationSpec::Identity,
            StructureArg::Ar1 => CorrelationSpec::Ar1(self.rho),
            StructureArg::Exchangeable => CorrelationSpec::Exchangeable(self.rho),
        };
        let base = match self.model {
            ModelArg::One => SimScenario::model_one(corr),
            ModelArg::Two => SimScenario::model_two(corr),
            ModelArg::Motivating => SimScenario::motivating(corr),
        };
        let link = match self.link {
            LinkArg::Linear => Link::Linear,
            LinkArg::Squared => Link::Squared,
        };
        let s = SimScenario {
            center_chi2: self.center_noise,
            ..base.with_link(link)
        };
        s.validate()?;
        Ok(s)
    }
}

/// Thread count: ACD_THREADS, then `--threads`, then all cores.
pub fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .map(Some)
            .ok_or_else(|| AcdError::InvalidParameter(format!("{THREADS_ENV}='{v}' is not a positive integer"))),
        Err(_) => match flag {
            Some(0) => Err(AcdError::InvalidParameter("--threads must be positive".into())),
            other => Ok(other),
        },
    }
}

/// Execute a parsed command and return the files written.
pub fn run_command(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = resolve_threads(cfg.threads)? {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| AcdError::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cfg.command))
}

fn format_vars(selected: &[usize], names: &[String]) -> String {
    selected.iter().map(|&k| names[k].as_str()).collect::<Vec<_>>().join(";")
}

fn dispatch(cmd: &Command) -> Result<Vec<PathBuf>> {
    match cmd {
        Command::Detect(a) => {
            let d = read_csv(&a.input, &a.response)?;
            let opts = AcdOptions {
                seed: a.cutoff.seed,
                design: match a.design {
                    DesignArg::Standardized => DistanceDesign::Standardized,
                    DesignArg::Raw => DistanceDesign::Raw,
                },
                folds: None,
            };
            let report = run_acd(&d, &a.penalty.spec(), a.cutoff.cutoff, &opts)?;
            for w in &report.warnings {
                log::warn!("{w}");
            }
            let flagged: Vec<String> = report.flagged.iter().map(|i| (i + 1).to_string()).collect();
            log::info!("flagged {} of {}: {}", flagged.len(), d.n(), flagged.join(" "));
            let (csv, svg) = write_report(&report, d.names(), &a.out)?;
            Ok(vec![csv, svg])
        }
        Command::Simulate(a) => {
            let s = a.scenario()?;
            let experiment = match a.experiment {
                ExperimentArg::Detect => Experiment::Detect,
                ExperimentArg::Trim => Experiment::Trim,
            };
            let methods = default_methods(experiment, &s);
            let rows = run_experiment(&s, experiment, &methods, a.reps, a.cutoff.cutoff, a.cutoff.seed)?;
            let csv = with_suffix(&a.out, "csv");
            let svg = with_suffix(&a.out, "svg");
            fs::write(&csv, render_replicates_csv(&rows))?;
            let metric = experiment.metric().to_uppercase();
            let title = format!("{metric} over {} replicates", a.reps);
            fs::write(&svg, boxplot_svg(&group_by_method(&rows), &title, &metric))?;
            Ok(vec![csv, svg])
        }
        Command::TrimSelect(a) => {
            let d = read_csv(&a.input, &a.response)?;
            let method = a.detector.method();
            let flagged = method.flag(&d, None, a.cutoff.cutoff, a.cutoff.seed)?;
            if 2 * flagged.len() > d.n() {
                return Err(AcdError::DegenerateTrim {
                    flagged: flagged.len(),
                    n: d.n(),
                });
            }
            let names: Vec<String> = (0..d.p()).map(|k| d.name(k)).collect();
            let before = scad_select(&d, a.cutoff.seed)?;
            let after = scad_select(&d.without_rows(&flagged)?, a.cutoff.seed)?;
            let rows: Vec<String> = flagged.iter().map(|i| (i + 1).to_string()).collect();
            let text = format!(
                "stage,items\ntrimmed_rows,{}\nbefore,{}\nafter,{}\n",
                rows.join(";"),
                format_vars(&before, &names),
                format_vars(&after, &names)
            );
            let path = with_suffix(&a.out, "csv");
            fs::write(&path, text)?;
            Ok(vec![path])
        }
        Command::Stability(a) => {
            let d = read_csv(&a.input, &a.response)?;
            let (rule, seed) = (a.cutoff.cutoff, a.cutoff.seed);
            let raw = stability_selection(&d, None, a.reps, a.frac, rule, seed)?;
            let trimmed = stability_selection(&d, Some(a.detector.method()), a.reps, a.frac, rule, seed)?;
            let path = with_suffix(&a.out, "csv");
            fs::write(&path, render_stability_csv(&[("raw", &raw), ("trimmed", &trimmed)]))?;
            Ok(vec![path])
        }
    }
}
