//! Command-line pipeline: dataset generation, sensor placement, DDPF runs
//! and the acceptance suite.

mod pipeline;
pub mod suite;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ddpf::{DEFAULT_LAMBDA_G, DEFAULT_LAMBDA_L, EXACTNESS_REL_TOL, TOL_CONE, TOL_LIN};
use crate::network::{self, RadialNetwork};
use crate::powerflow::DEFAULT_TOL_PF;
use crate::socp::SolverSettings;

pub use pipeline::{
    cmd_generate, cmd_place, cmd_run_ddpf, BudgetRow, EvaluationReport, GenerateSummary, PlacementEntry, Quantiles, StepResult,
    PlacementReport,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CRITERION: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {msg}")]
    Input { path: PathBuf, msg: String },
    #[error("{0}")]
    Pipeline(String),
    #[error("{failed} acceptance criteria failed")]
    CriteriaFailed { failed: usize },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::CriteriaFailed { .. } => EXIT_CRITERION,
            _ => EXIT_USAGE,
        }
    }
}

pub(crate) fn pipeline_err(e: impl std::fmt::Display) -> CliError {
    CliError::Pipeline(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub tol_pf: f64,
    pub pf_max_iter: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub solver_max_iter: usize,
    pub tol_lin: f64,
    pub tol_cone: f64,
    pub exactness_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            tol_pf: DEFAULT_TOL_PF,
            pf_max_iter: crate::powerflow::DEFAULT_MAX_ITER,
            eps_abs: s.eps_abs,
            eps_rel: s.eps_rel,
            solver_max_iter: s.max_iter,
            tol_lin: TOL_LIN,
            tol_cone: TOL_CONE,
            exactness_rel: EXACTNESS_REL_TOL,
        }
    }
}

impl Tolerances {
    pub fn solver(&self) -> SolverSettings {
        SolverSettings { eps_abs: self.eps_abs, eps_rel: self.eps_rel, max_iter: self.solver_max_iter }
    }
}

/// Pipeline settings, read from JSON and overridden by command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Matpower `.m`, native `.json`, or `synthetic:<n>` for a generated feeder.
    pub case: String,
    pub seed: u64,
    pub t_day: usize,
    /// `None` picks the fewest days with at least `3n + 1` columns.
    pub days_train: Option<usize>,
    pub days_test: usize,
    /// Load scale of the test days relative to training.
    pub test_scale: f64,
    pub v0: f64,
    pub budgets: Vec<usize>,
    pub lambda_g: f64,
    pub lambda_l: f64,
    pub tolerances: Tolerances,
    pub out: PathBuf,
    pub scenario_stride: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            case: "synthetic:30".into(),
            seed: 1,
            t_day: 96,
            days_train: None,
            days_test: 1,
            test_scale: 0.6,
            v0: 1.0,
            budgets: Vec::new(),
            lambda_g: DEFAULT_LAMBDA_G,
            lambda_l: DEFAULT_LAMBDA_L,
            tolerances: Tolerances::default(),
            out: PathBuf::from("out"),
            scenario_stride: 1,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let t = &self.tolerances;
        let positive = [
            ("tol_pf", t.tol_pf),
            ("eps_abs", t.eps_abs),
            ("eps_rel", t.eps_rel),
            ("tol_lin", t.tol_lin),
            ("tol_cone", t.tol_cone),
            ("exactness_rel", t.exactness_rel),
            ("v0", self.v0),
            ("test_scale", self.test_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Usage(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lambda_g >= 0.0 && self.lambda_l >= 0.0) {
            return Err(CliError::Usage("regularization weights must be non-negative".into()));
        }
        if self.t_day < 2 || self.days_test == 0 || self.days_train == Some(0) {
            return Err(CliError::Usage("t_day >= 2 and at least one day of each dataset required".into()));
        }
        if t.pf_max_iter == 0 || t.solver_max_iter == 0 || self.scenario_stride == 0 {
            return Err(CliError::Usage("iteration limits and scenario_stride must be positive".into()));
        }
        Ok(())
    }

    /// Budgets checked against a network with `n + 1` nodes.
    pub fn budgets_for(&self, n: usize) -> Result<Vec<usize>, CliError> {
        let mut b = if self.budgets.is_empty() { vec![n + 1] } else { self.budgets.clone() };
        if let Some(bad) = b.iter().find(|&&x| x < 1 || x > n + 1) {
            return Err(CliError::Usage(format!("budget {bad} outside [1, {}]", n + 1)));
        }
        b.sort_unstable_by(|a, b| b.cmp(a));
        b.dedup();
        Ok(b)
    }

    pub fn train_days(&self, n: usize) -> usize {
        self.days_train.unwrap_or_else(|| (3 * n + 1).div_ceil(self.t_day).max(1) + 1)
    }
}

/// Loads the case named by `name`.
pub fn load_case(name: &str, seed: u64) -> Result<RadialNetwork, CliError> {
    if let Some(n) = name.strip_prefix("synthetic:") {
        let n: usize = n.parse().map_err(|_| CliError::Usage(format!("bad synthetic size {n:?}")))?;
        if n == 0 {
            return Err(CliError::Usage("synthetic case needs at least one node".into()));
        }
        return Ok(network::random_radial(n, seed, (0.001, 0.05), (0.001, 0.05), 0.6));
    }
    let path = Path::new(name);
    let text = fs::read_to_string(path).map_err(|e| CliError::Input { path: path.into(), msg: e.to_string() })?;
    let parsed = if path.extension().is_some_and(|e| e == "m") {
        network::parse_matpower_case(&text)
    } else {
        network::parse_native_network(&text)
    };
    parsed.map_err(|e| CliError::Input { path: path.into(), msg: e.to_string() })
}

#[derive(Debug, Parser)]
#[command(name = "ddpf", version, about = "Data-driven DistFlow with budgeted sensor placement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub case: Option<String>,
    /// Comma-separated sensor budgets.
    #[arg(long, global = true, value_delimiter = ',')]
    pub budget: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate training and test datasets.
    Generate,
    /// Place sensors for every budget.
    Place,
    /// Solve the DDPF on the test day and evaluate.
    Run,
    /// Run the acceptance suite.
    Verify,
}

impl Cli {
    pub fn config(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text =
                    fs::read_to_string(p).map_err(|e| CliError::Input { path: p.clone(), msg: e.to_string() })?;
                PipelineConfig::from_json(&text)?
            }
            None => PipelineConfig::default(),
        };
        if let Some(c) = &self.case {
            cfg.case = c.clone();
        }
        if let Some(b) = &self.budget {
            cfg.budgets = b.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.config()?;
    match cli.command {
        Command::Generate => {
            let s = cmd_generate(&cfg)?;
            println!(
                "train T = {} test T = {} rank {} of {} (pe_satisfied = {})",
                s.train_len, s.test_len, s.stacked_rank, s.pe_rank, s.pe_satisfied
            );
        }
        Command::Place => {
            let rep = cmd_place(&cfg)?;
            for e in &rep.entries {
                println!(
                    "budget {:>4}  |R| {:>4}  radializing {:>3}  reduction {:>5.1}%  largest cluster {:>3}  max error {:.3e}",
                    e.budget,
                    e.kept.len(),
                    e.radializing.len(),
                    e.reduction_pct,
                    e.largest_cluster,
                    e.max_error
                );
            }
        }
        Command::Run => {
            let rep = cmd_run_ddpf(&cfg)?;
            for r in &rep.rows {
                println!(
                    "reduction {:>5.1}%  |R| {:>4}  ddpf {:.3e}  reduced model {:.3e}  failed steps {}",
                    r.reduction_pct, r.kept, r.max_error_ddpf, r.max_error_baseline, r.failed_steps
                );
            }
        }
        Command::Verify => {
            let report = suite::run_suite(&cfg);
            for c in &report.criteria {
                println!("{}", c.line());
            }
            fs::create_dir_all(&cfg.out).map_err(|e| CliError::Input { path: cfg.out.clone(), msg: e.to_string() })?;
            pipeline::write_json(&cfg.out.join("verify.json"), &report)?;
            let failed = report.criteria.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(CliError::CriteriaFailed { failed });
            }
        }
    }
    Ok(())
}
