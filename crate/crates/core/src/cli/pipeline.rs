use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{load_case, pipeline_err, CliError, PipelineConfig};
use crate::data::{build_hankel, generate_dataset, synth_profiles, MeasuredSet, TrajectoryDataset};
use crate::ddpf::{reconstruct_full_voltages, DdpfOptions, ReducedDdpf};
use crate::network::{parse_native_network, serialize_native_network, RadialNetwork};
use crate::reduction::{
    greedy_placement, radialize, reduced_power_flow, reduction_percentage, scenarios_from_dataset,
    score_assignment, AssignmentMatrix, MergeStep,
};

const NETWORK_FILE: &str = "network.json";
const TRAIN_DIR: &str = "train";
const TEST_DIR: &str = "test";
const PLACEMENT_FILE: &str = "placement.json";

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(pipeline_err)?;
    fs::write(path, text + "\n").map_err(|e| CliError::Input { path: path.into(), msg: e.to_string() })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input { path: path.into(), msg: e.to_string() })?;
    serde_json::from_str(&text).map_err(|e| CliError::Input { path: path.into(), msg: e.to_string() })
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Input { path: path.into(), msg: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Input { path: path.into(), msg: e.to_string() })
}

fn read_network(out: &Path) -> Result<RadialNetwork, CliError> {
    let path = out.join(NETWORK_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::Input { path: path.clone(), msg: e.to_string() })?;
    parse_native_network(&text).map_err(|e| CliError::Input { path, msg: e.to_string() })
}

fn read_dataset(dir: PathBuf) -> Result<TrajectoryDataset, CliError> {
    TrajectoryDataset::read_dir(&dir).map_err(|e| CliError::Input { path: dir, msg: e.to_string() })
}

fn create_out(cfg: &PipelineConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::Input { path: cfg.out.clone(), msg: e.to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub case: String,
    pub n: usize,
    pub seed: u64,
    pub train_len: usize,
    pub test_len: usize,
    pub stacked_rank: usize,
    pub pe_rank: usize,
    pub pe_satisfied: bool,
}

/// Writes the network, the training days and the scaled test days.
pub fn cmd_generate(cfg: &PipelineConfig) -> Result<GenerateSummary, CliError> {
    let net = load_case(&cfg.case, cfg.seed)?;
    let n = net.n();
    let profiles = synth_profiles(n, cfg.t_day, cfg.seed);
    let test_profiles = profiles.with_jitter_seed(cfg.seed.wrapping_add(1)).scaled(cfg.test_scale);
    let train = generate_dataset(&net, &profiles, cfg.train_days(n), cfg.v0).map_err(pipeline_err)?;
    let test = generate_dataset(&net, &test_profiles, cfg.days_test, cfg.v0).map_err(pipeline_err)?;
    let hs = build_hankel(&train, &MeasuredSet::Full).map_err(pipeline_err)?;
    create_out(cfg)?;
    let net_path = cfg.out.join(NETWORK_FILE);
    fs::write(&net_path, serialize_native_network(&net))
        .map_err(|e| CliError::Input { path: net_path, msg: e.to_string() })?;
    for (name, ds) in [(TRAIN_DIR, &train), (TEST_DIR, &test)] {
        let dir = cfg.out.join(name);
        ds.write_dir(&dir).map_err(|e| CliError::Input { path: dir, msg: e.to_string() })?;
    }
    let summary = GenerateSummary {
        case: cfg.case.clone(),
        n,
        seed: cfg.seed,
        train_len: train.len(),
        test_len: test.len(),
        stacked_rank: hs.stacked_rank,
        pe_rank: 3 * n + 1,
        pe_satisfied: hs.pe_satisfied,
    };
    write_json(&cfg.out.join("generate.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementEntry {
    pub budget: usize,
    pub kept_star: Vec<usize>,
    pub radializing: Vec<usize>,
    pub kept: Vec<usize>,
    /// `(node, representative)` pairs of the final assignment.
    pub assignment: Vec<(usize, usize)>,
    pub trace: Vec<MergeStep>,
    pub reduction_pct: f64,
    pub largest_cluster: usize,
    /// Worst reconstruction error of the final assignment over the
    /// training scenarios.
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementReport {
    pub n: usize,
    pub scenarios: usize,
    pub entries: Vec<PlacementEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Timing {
    /// Seconds per budget, in report order.
    wall_time_s: Vec<(usize, f64)>,
}

/// Runs the greedy reduction once down to the smallest budget; every
/// larger budget is a prefix of the same merge sequence.
pub fn cmd_place(cfg: &PipelineConfig) -> Result<PlacementReport, CliError> {
    let net = read_network(&cfg.out)?;
    let train = read_dataset(cfg.out.join(TRAIN_DIR))?;
    let n = net.n();
    let budgets = cfg.budgets_for(n)?;
    let y = net.build_admittance();
    let start = Instant::now();
    let scenarios = scenarios_from_dataset(&net, &train, cfg.scenario_stride).map_err(pipeline_err)?;
    let smallest = *budgets.last().expect("at least one budget");
    let full = greedy_placement(&net, &y, &scenarios, smallest).map_err(pipeline_err)?;
    let shared = start.elapsed().as_secs_f64();

    let mut entries = Vec::with_capacity(budgets.len());
    let mut timing = Timing { wall_time_s: Vec::new() };
    for &budget in &budgets {
        let t0 = Instant::now();
        let steps = n + 1 - budget;
        let trace = full.trace[..steps].to_vec();
        let mut assignment = AssignmentMatrix::identity(n);
        for s in &trace {
            assignment = assignment.merged(&net, s.node).map_err(pipeline_err)?;
        }
        let rad = radialize(&net, &assignment.kept()).map_err(pipeline_err)?;
        let fin = AssignmentMatrix::nearest_upstream(&net, &rad.kept).map_err(pipeline_err)?;
        let max_error = score_assignment(&y, &fin, &scenarios).map_err(pipeline_err)?;
        entries.push(PlacementEntry {
            budget,
            kept_star: rad.kept_star.iter().copied().collect(),
            radializing: rad.radializing.iter().copied().collect(),
            kept: rad.kept.iter().copied().collect(),
            assignment: fin.triples(),
            trace,
            reduction_pct: reduction_percentage(n, rad.kept.len()),
            largest_cluster: fin.largest_cluster(),
            max_error,
        });
        timing.wall_time_s.push((budget, shared + t0.elapsed().as_secs_f64()));
    }
    entries.sort_by(|a, b| a.reduction_pct.total_cmp(&b.reduction_pct).then(b.budget.cmp(&a.budget)));
    let report = PlacementReport { n, scenarios: scenarios.len(), entries };
    create_out(cfg)?;
    write_json(&cfg.out.join(PLACEMENT_FILE), &report)?;
    write_json(&cfg.out.join("placement_timing.json"), &timing)?;
    let rows: Vec<Vec<String>> = report
        .entries
        .iter()
        .map(|e| {
            vec![
                e.budget.to_string(),
                format!("{:.1}", e.reduction_pct),
                e.kept.len().to_string(),
                e.radializing.len().to_string(),
                e.largest_cluster.to_string(),
                format!("{:e}", e.max_error),
            ]
        })
        .collect();
    write_csv(
        &cfg.out.join("placement.csv"),
        &["budget", "reduction_pct", "sensors", "radializing_sensors", "largest_cluster", "max_error"],
        &rows,
    )?;
    Ok(report)
}

/// Signed-error summary of one node over the test day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl Quantiles {
    /// Linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(Self { min: v[0], q25: at(0.25), median: at(0.5), q75: at(0.75), max: v[v.len() - 1] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub step: usize,
    pub ddpf_error: Option<f64>,
    pub baseline_error: Option<f64>,
    pub iterations: usize,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub budget: usize,
    pub reduction_pct: f64,
    pub kept: usize,
    pub radializing: usize,
    pub largest_cluster: usize,
    pub max_error_ddpf: f64,
    pub max_error_baseline: f64,
    pub failed_steps: usize,
    /// Per non-slack node, signed DDPF error quantiles.
    pub node_quantiles: Vec<Quantiles>,
    pub steps: Vec<StepResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n: usize,
    pub t_test: usize,
    pub lambda_g: f64,
    pub lambda_l: f64,
    pub rows: Vec<BudgetRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunTiming {
    budget: usize,
    total_s: f64,
    max_solve_s: f64,
    mean_solve_s: f64,
}

fn truth_magnitudes(ds: &TrajectoryDataset, t: usize) -> Vec<f64> {
    let n = ds.n();
    let mut v = Vec::with_capacity(n + 1);
    v.push(ds.y[(4 * n, t)].max(0.0).sqrt());
    v.extend((0..n).map(|i| ds.y[(3 * n + i, t)].max(0.0).sqrt()));
    v
}

struct StepOutcome {
    result: StepResult,
    signed: Option<Vec<f64>>,
    solve_s: f64,
}

/// Solves the reduced DDPF at every test step for each placement and
/// compares against the oracle and the reduced-model baseline.
pub fn cmd_run_ddpf(cfg: &PipelineConfig) -> Result<EvaluationReport, CliError> {
    let net = read_network(&cfg.out)?;
    let train = read_dataset(cfg.out.join(TRAIN_DIR))?;
    let test = read_dataset(cfg.out.join(TEST_DIR))?;
    let placement: PlacementReport = read_json(&cfg.out.join(PLACEMENT_FILE))?;
    let n = net.n();
    if train.n() != n || test.n() != n || placement.n != n || test.meta.measured.is_some() {
        return Err(CliError::Usage("datasets, placement and network disagree; rerun generate and place".into()));
    }
    let opts = DdpfOptions { solver: cfg.tolerances.solver(), v0: cfg.v0, ..Default::default() };
    let mut rows = Vec::with_capacity(placement.entries.len());
    let mut timing = Vec::new();
    for entry in &placement.entries {
        let t0 = Instant::now();
        let kept_star: BTreeSet<usize> = entry.kept_star.iter().copied().collect();
        let rad = radialize(&net, &kept_star).map_err(pipeline_err)?;
        if rad.kept.iter().copied().collect::<Vec<_>>() != entry.kept {
            return Err(CliError::Usage(format!("placement for budget {} does not match the network", entry.budget)));
        }
        let assign = AssignmentMatrix::nearest_upstream(&net, &rad.kept).map_err(pipeline_err)?;
        let hs = build_hankel(&train, &MeasuredSet::Nodes(rad.kept.clone())).map_err(pipeline_err)?;
        let solver = ReducedDdpf::new(&hs, &rad.reduced.slack_adjacent(), cfg.lambda_g, cfg.lambda_l, opts)
            .map_err(pipeline_err)?;
        let outcomes: Vec<StepOutcome> = (0..test.len())
            .into_par_iter()
            .map(|t| {
                let inj = test.input(t);
                let truth = truth_magnitudes(&test, t);
                let baseline_error = reduced_power_flow(&rad.reduced, &assign, &inj, cfg.v0)
                    .ok()
                    .map(|b| b.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
                let s0 = Instant::now();
                let solved = solver.solve(&inj);
                let solve_s = s0.elapsed().as_secs_f64();
                let (ddpf_error, signed, iterations, status) = match solved {
                    Ok(sol) => match reconstruct_full_voltages(&sol, &assign) {
                        Ok(mut rec) => {
                            let e = rec.compare(&truth);
                            let signed: Vec<f64> =
                                rec.magnitudes.iter().zip(&truth).skip(1).map(|(a, b)| a - b).collect();
                            (Some(e), Some(signed), sol.stats.iterations, "optimal".to_string())
                        }
                        Err(e) => (None, None, sol.stats.iterations, e.to_string()),
                    },
                    Err(e) => (None, None, 0, e.to_string()),
                };
                StepOutcome {
                    result: StepResult { step: t, ddpf_error, baseline_error, iterations, status },
                    signed,
                    solve_s,
                }
            })
            .collect();
        let failed_steps = outcomes.iter().filter(|o| o.result.ddpf_error.is_none()).count();
        let node_quantiles = (0..n)
            .map(|i| {
                let vals: Vec<f64> = outcomes.iter().filter_map(|o| o.signed.as_ref().map(|s| s[i])).collect();
                Quantiles::of(&vals).unwrap_or(Quantiles { min: 0.0, q25: 0.0, median: 0.0, q75: 0.0, max: 0.0 })
            })
            .collect();
        let worst = |f: fn(&StepResult) -> Option<f64>| {
            outcomes.iter().filter_map(|o| f(&o.result)).fold(0.0, f64::max)
        };
        let max_solve_s = outcomes.iter().map(|o| o.solve_s).fold(0.0, f64::max);
        let mean_solve_s = outcomes.iter().map(|o| o.solve_s).sum::<f64>() / outcomes.len().max(1) as f64;
        rows.push(BudgetRow {
            budget: entry.budget,
            reduction_pct: entry.reduction_pct,
            kept: entry.kept.len(),
            radializing: entry.radializing.len(),
            largest_cluster: assign.largest_cluster(),
            max_error_ddpf: worst(|r| r.ddpf_error),
            max_error_baseline: worst(|r| r.baseline_error),
            failed_steps,
            node_quantiles,
            steps: outcomes.into_iter().map(|o| o.result).collect(),
        });
        timing.push(RunTiming { budget: entry.budget, total_s: t0.elapsed().as_secs_f64(), max_solve_s, mean_solve_s });
    }
    rows.sort_by(|a, b| a.reduction_pct.total_cmp(&b.reduction_pct).then(b.budget.cmp(&a.budget)));
    let report = EvaluationReport { n, t_test: test.len(), lambda_g: cfg.lambda_g, lambda_l: cfg.lambda_l, rows };
    write_evaluation(cfg, &report)?;
    write_json(&cfg.out.join("evaluation_timing.json"), &timing)?;
    Ok(report)
}

fn write_evaluation(cfg: &PipelineConfig, report: &EvaluationReport) -> Result<(), CliError> {
    write_json(&cfg.out.join("evaluation.json"), report)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
    let summary: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.budget.to_string(),
                format!("{:.1}", r.reduction_pct),
                r.kept.to_string(),
                r.radializing.to_string(),
                r.largest_cluster.to_string(),
                format!("{:e}", r.max_error_ddpf),
                format!("{:e}", r.max_error_baseline),
                r.failed_steps.to_string(),
            ]
        })
        .collect();
    write_csv(
        &cfg.out.join("evaluation.csv"),
        &[
            "budget",
            "reduction_pct",
            "sensors",
            "radializing_sensors",
            "largest_cluster",
            "max_error_ddpf",
            "max_error_reduced_model",
            "failed_steps",
        ],
        &summary,
    )?;
    let mut series = Vec::new();
    let mut quant = Vec::new();
    for r in &report.rows {
        for s in &r.steps {
            series.push(vec![
                r.budget.to_string(),
                format!("{:.1}", r.reduction_pct),
                s.step.to_string(),
                opt(s.ddpf_error),
                opt(s.baseline_error),
                s.iterations.to_string(),
                s.status.clone(),
            ]);
        }
        for (i, q) in r.node_quantiles.iter().enumerate() {
            quant.push(vec![
                r.budget.to_string(),
                format!("{:.1}", r.reduction_pct),
                (i + 1).to_string(),
                format!("{:e}", q.min),
                format!("{:e}", q.q25),
                format!("{:e}", q.median),
                format!("{:e}", q.q75),
                format!("{:e}", q.max),
            ]);
        }
    }
    write_csv(
        &cfg.out.join("error_series.csv"),
        &["budget", "reduction_pct", "step", "ddpf_error", "reduced_model_error", "iterations", "status"],
        &series,
    )?;
    write_csv(
        &cfg.out.join("node_error_quantiles.csv"),
        &["budget", "reduction_pct", "node", "min", "q25", "median", "q75", "max"],
        &quant,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate_order_statistics() {
        let q = Quantiles::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((q.min, q.q25, q.median, q.q75, q.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        let q = Quantiles::of(&[0.0, 1.0]).unwrap();
        assert_eq!(q.median, 0.5);
        assert!(Quantiles::of(&[]).is_none());
    }
}
