//! Data-driven DistFlow: the Hankel-constrained power flow programs, the
//! behavior membership test and the relaxation exactness check.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{self, HankelSystem};
use crate::powerflow::InjectionVector;
use crate::reduction::AssignmentMatrix;
use crate::socp::{AdmmSolver, Cone, IpmSolver, ConicProgram, ConicSolver, SocpError, SolveStatus, SolverSettings};

pub const TOL_LIN: f64 = 1e-7;
pub const TOL_CONE: f64 = 1e-7;
pub const EXACTNESS_REL_TOL: f64 = 1e-6;
pub const EPS_DEN: f64 = 1e-12;
pub const DEFAULT_LAMBDA_G: f64 = 1e-5;
pub const DEFAULT_LAMBDA_L: f64 = 1e3;
/// Relative singular value cut for the row space of the reduced data.
const ROW_SPACE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DdpfError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("conic solver failed with status {status:?}")]
    SolverFailure { status: SolveStatus },
    #[error("conic solver error: {0}")]
    Solver(#[from] SocpError),
    #[error("requested operating point is infeasible for the recorded behavior")]
    InfeasibleOperatingPoint,
    #[error("reduced network has no edge into the slack node")]
    MissingSlackAdjacency,
    #[error("assignment inconsistent with the measured set: {0}")]
    InconsistentAssignment(String),
}

/// Conic backend used for DDPF programs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    InteriorPoint,
    Splitting,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdpfOptions {
    pub solver: SolverSettings,
    pub backend: Backend,
    /// Squared slack voltage imposed on the `v0` row.
    pub v0: f64,
}

impl Default for DdpfOptions {
    fn default() -> Self {
        Self { solver: SolverSettings::default(), backend: Backend::default(), v0: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub iterations: usize,
    pub wall_time_s: f64,
    pub eq_residual: f64,
    pub cone_violation: f64,
}

/// One solved operating point. Output vectors are indexed like `nodes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdpfSolution {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Non-slack nodes carrying output rows, ascending.
    pub nodes: Vec<usize>,
    pub p_flow: Vec<f64>,
    pub q_flow: Vec<f64>,
    /// Hankel-consistent squared currents.
    pub current_sq: Vec<f64>,
    pub voltage_sq: Vec<f64>,
    pub slack_voltage_sq: f64,
    pub g: Vec<f64>,
    /// Current slack, reduced problems only.
    pub sigma: Option<Vec<f64>>,
    /// Adjusted squared currents `l + sigma`, reduced problems only.
    pub current_sq_adj: Option<Vec<f64>>,
    /// `v l - P^2 - Q^2` per edge, using the adjusted current when present.
    pub cone_gap: Vec<f64>,
    pub status: SolveStatus,
    pub objective: f64,
    pub stats: SolverStats,
    pub warnings: Vec<String>,
}

impl DdpfSolution {
    pub fn voltage_magnitudes(&self) -> Vec<f64> {
        self.voltage_sq.iter().map(|v| v.max(0.0).sqrt()).collect()
    }

    pub fn g_sum(&self) -> f64 {
        self.g.iter().sum()
    }

    pub fn g_norm(&self) -> f64 {
        self.g.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Member,
    NonMember,
    /// Data not persistently exciting; the test cannot decide.
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipReport {
    pub verdict: Verdict,
    pub linear_residual: f64,
    pub cone_residual: f64,
    pub g: DVector<f64>,
    pub warning: Option<String>,
}

/// Decides whether `(u, y)` is a DistFlow trajectory point given full
/// output data: the point must lie in the Hankel column span and satisfy
/// `v l = P^2 + Q^2` at every edge.
pub fn membership_test(
    hs: &HankelSystem,
    u: &[f64],
    y: &[f64],
    tol_lin: f64,
    tol_cone: f64,
) -> Result<MembershipReport, DdpfError> {
    let n = hs.n;
    if !hs.measured.is_full(n) || hs.h_y.nrows() != 4 * n + 1 {
        return Err(DdpfError::DimensionMismatch { expected: 4 * n + 1, got: hs.h_y.nrows() });
    }
    let lin = data::check_static_membership(hs, u, y, tol_lin).map_err(|e| match e {
        data::DataError::DimensionMismatch { expected, got } => DdpfError::DimensionMismatch { expected, got },
        other => unreachable!("membership only reports dimension errors: {other}"),
    })?;
    let cone_residual = (0..n)
        .map(|i| (y[3 * n + i] * y[2 * n + i] - y[i] * y[i] - y[n + i] * y[n + i]).abs())
        .fold(0.0, f64::max);
    let (verdict, warning) = if !hs.pe_satisfied {
        (
            Verdict::Indeterminate,
            Some(format!("data rank {} below {}; membership undecidable", hs.stacked_rank, 3 * n + 1)),
        )
    } else if lin.residual <= tol_lin && cone_residual <= tol_cone {
        (Verdict::Member, None)
    } else {
        (Verdict::NonMember, None)
    };
    Ok(MembershipReport { verdict, linear_residual: lin.residual, cone_residual, g: lin.g, warning })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exactness {
    pub exact: bool,
    pub max_rel_gap: f64,
}

pub fn check_exactness(sol: &DdpfSolution, rel_tol: f64) -> Exactness {
    let l = sol.current_sq_adj.as_ref().unwrap_or(&sol.current_sq);
    let max_rel_gap = (0..sol.nodes.len())
        .map(|k| {
            let vl = sol.voltage_sq[k] * l[k];
            let gap = vl - sol.p_flow[k].powi(2) - sol.q_flow[k].powi(2);
            gap / vl.max(EPS_DEN)
        })
        .fold(0.0, f64::max);
    Exactness { exact: max_rel_gap <= rel_tol, max_rel_gap }
}

/// Variable layout of a built program.
struct Layout {
    n: usize,
    /// Offset of `g` (after its epigraph head in the reduced program).
    g: usize,
    s: usize,
    edges: usize,
    m: usize,
    sigma: Option<usize>,
}

struct Builder {
    rows: Vec<(Vec<(usize, f64)>, f64)>,
}

impl Builder {
    fn row(&mut self, entries: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push((entries, rhs));
    }

    fn finish(self, c: DVector<f64>, cones: Vec<Cone>) -> ConicProgram {
        let nv = c.len();
        let mut a = DMatrix::zeros(self.rows.len(), nv);
        let mut b = DVector::zeros(self.rows.len());
        for (i, (entries, rhs)) in self.rows.into_iter().enumerate() {
            for (j, v) in entries {
                a[(i, j)] += v;
            }
            b[i] = rhs;
        }
        ConicProgram { c, a, b, cones }
    }
}

fn hankel_row(h: &DMatrix<f64>, row: usize, g_off: usize) -> Vec<(usize, f64)> {
    h.row(row).iter().enumerate().map(|(j, &v)| (g_off + j, v)).collect()
}

/// Shared constraints: oversatisfaction, Hankel output rows tied to the
/// cone blocks, and the slack voltage row.
fn common_rows(hs: &HankelSystem, u_star: &InjectionVector, lay: &Layout, v0: f64, b: &mut Builder) {
    let n = lay.n;
    let stacked = u_star.stacked();
    for (j, &rhs) in stacked.iter().enumerate() {
        let mut e = hankel_row(&hs.h_u, j, lay.g);
        e.push((lay.s + j, 1.0));
        b.row(e, rhs);
    }
    let m = lay.m;
    for k in 0..m {
        let blk = lay.edges + 4 * k;
        // P, Q, v rows
        for (block, var, coef) in [(0, 2, -1.0), (1, 3, -1.0), (3, 0, -1.0)] {
            let mut e = hankel_row(&hs.h_y, block * m + k, lay.g);
            e.push((blk + var, coef));
            b.row(e, 0.0);
        }
        // l row: H_l g (+ sigma) = 2 w2
        let mut e = hankel_row(&hs.h_y, 2 * m + k, lay.g);
        e.push((blk + 1, -2.0));
        if let Some(sig) = lay.sigma {
            e.push((sig + k, 1.0));
        }
        b.row(e, 0.0);
    }
    b.row(hankel_row(&hs.h_y, 4 * m, lay.g), v0);
    debug_assert_eq!(hs.h_u.nrows(), 2 * n);
}

fn check_inputs(hs: &HankelSystem, u_star: &InjectionVector) -> Result<(), DdpfError> {
    let n = hs.n;
    if u_star.len() != n {
        return Err(DdpfError::DimensionMismatch { expected: n, got: u_star.len() });
    }
    let m = hs.measured_nodes().len();
    if hs.h_y.nrows() != 4 * m + 1 || hs.h_u.nrows() != 2 * n {
        return Err(DdpfError::DimensionMismatch { expected: 4 * m + 1, got: hs.h_y.nrows() });
    }
    Ok(())
}

/// Full-measurement program: `min 1'l` over the Hankel behavior with load
/// oversatisfaction and the cone relaxation of `v l = P^2 + Q^2`.
pub fn build_full_program(hs: &HankelSystem, u_star: &InjectionVector, v0: f64) -> Result<ConicProgram, DdpfError> {
    check_inputs(hs, u_star)?;
    let (n, t) = (hs.n, hs.t());
    let m = hs.measured_nodes().len();
    let lay = Layout { n, g: 0, s: t, edges: t + 2 * n, m, sigma: None };
    let nv = t + 2 * n + 4 * m;
    let mut c = DVector::zeros(nv);
    for k in 0..m {
        c[lay.edges + 4 * k + 1] = 2.0;
    }
    let mut b = Builder { rows: Vec::new() };
    common_rows(hs, u_star, &lay, v0, &mut b);
    let mut cones = vec![Cone::Free(t), Cone::NonNegative(2 * n)];
    cones.extend(std::iter::repeat_n(Cone::RotatedSecondOrder(4), m));
    Ok(b.finish(c, cones))
}

/// Reduced-measurement program with quadratic regularization of `g` and of
/// the current slack, plus the slack-import penalty over `slack_adjacent`.
pub fn build_reduced_program(
    hs: &HankelSystem,
    u_star: &InjectionVector,
    slack_adjacent: &[usize],
    lambda_g: f64,
    lambda_l: f64,
    v0: f64,
) -> Result<ConicProgram, DdpfError> {
    check_inputs(hs, u_star)?;
    let (n, t) = (hs.n, hs.t());
    let nodes = hs.measured_nodes();
    let m = nodes.len();
    if slack_adjacent.is_empty() {
        return Err(DdpfError::MissingSlackAdjacency);
    }
    // [t_g, h_g, g] [s] [edges] [t_s, h_s, sigma]
    let g_head = 0;
    let s = t + 2;
    let edges = s + 2 * n;
    let sig_head = edges + 4 * m;
    let nv = sig_head + 2 + m;
    let lay = Layout { n, g: g_head + 2, s, edges, m, sigma: Some(sig_head + 2) };
    let mut c = DVector::zeros(nv);
    for k in 0..m {
        c[edges + 4 * k + 1] = 2.0;
    }
    for &i in slack_adjacent {
        let k = nodes.binary_search(&i).map_err(|_| DdpfError::MissingSlackAdjacency)?;
        c[edges + 4 * k + 2] -= 1.0;
        c[edges + 4 * k + 3] -= 1.0;
    }
    c[g_head] = lambda_g;
    c[sig_head] = lambda_l;
    let mut b = Builder { rows: Vec::new() };
    common_rows(hs, u_star, &lay, v0, &mut b);
    b.row(vec![(g_head + 1, 1.0)], 0.5);
    b.row(vec![(sig_head + 1, 1.0)], 0.5);
    let mut cones = vec![Cone::RotatedSecondOrder(t + 2), Cone::NonNegative(2 * n)];
    cones.extend(std::iter::repeat_n(Cone::RotatedSecondOrder(4), m));
    cones.push(Cone::RotatedSecondOrder(m + 2));
    Ok(b.finish(c, cones))
}

fn extract(
    hs: &HankelSystem,
    u_star: &InjectionVector,
    z: &DVector<f64>,
    g_off: usize,
    edges: usize,
    sigma: Option<usize>,
    sol: crate::socp::ConicSolution,
) -> DdpfSolution {
    let (n, t) = (hs.n, hs.t());
    let nodes = hs.measured_nodes();
    let m = nodes.len();
    let s_off = edges - 2 * n;
    let p = (0..n).map(|i| u_star.p[i] - z[s_off + i]).collect();
    let q = (0..n).map(|i| u_star.q[i] - z[s_off + n + i]).collect();
    let g: Vec<f64> = z.rows(g_off, t).iter().copied().collect();
    let gv = DVector::from_column_slice(&g);
    let y = &hs.h_y * &gv;
    let blk = |k: usize, j: usize| z[edges + 4 * k + j];
    let voltage_sq: Vec<f64> = (0..m).map(|k| blk(k, 0)).collect();
    let p_flow: Vec<f64> = (0..m).map(|k| blk(k, 2)).collect();
    let q_flow: Vec<f64> = (0..m).map(|k| blk(k, 3)).collect();
    let cone_l: Vec<f64> = (0..m).map(|k| 2.0 * blk(k, 1)).collect();
    let cone_gap = (0..m).map(|k| voltage_sq[k] * cone_l[k] - p_flow[k].powi(2) - q_flow[k].powi(2)).collect();
    let mut warnings = Vec::new();
    let (current_sq, sigma, current_sq_adj) = match sigma {
        None => (cone_l, None, None),
        Some(off) => {
            let sig: Vec<f64> = z.rows(off, m).iter().copied().collect();
            let l_r: Vec<f64> = (0..m).map(|k| y[2 * m + k]).collect();
            for k in 0..m {
                if l_r[k] + sig[k] < 0.0 {
                    warnings.push(format!("negative adjusted current at node {}", nodes[k]));
                }
            }
            (l_r, Some(sig), Some(cone_l))
        }
    };
    DdpfSolution {
        p,
        q,
        nodes,
        p_flow,
        q_flow,
        current_sq,
        voltage_sq,
        slack_voltage_sq: y[4 * m],
        g,
        sigma,
        current_sq_adj,
        cone_gap,
        status: sol.status,
        objective: sol.objective,
        stats: SolverStats {
            iterations: sol.iterations,
            wall_time_s: sol.wall_time.as_secs_f64(),
            eq_residual: sol.eq_residual,
            cone_violation: sol.cone_violation,
        },
        warnings,
    }
}

fn run(prog: &ConicProgram, opts: &DdpfOptions) -> Result<crate::socp::ConicSolution, DdpfError> {
    let sol = match opts.backend {
        Backend::InteriorPoint => IpmSolver.solve(prog, &opts.solver)?,
        Backend::Splitting => AdmmSolver.solve(prog, &opts.solver)?,
    };
    match sol.status {
        SolveStatus::Optimal => Ok(sol),
        SolveStatus::Infeasible => Err(DdpfError::InfeasibleOperatingPoint),
        status => Err(DdpfError::SolverFailure { status }),
    }
}

pub fn solve_ddpf_full(hs: &HankelSystem, u_star: &InjectionVector) -> Result<DdpfSolution, DdpfError> {
    solve_ddpf_full_with(hs, u_star, &DdpfOptions::default())
}

pub fn solve_ddpf_full_with(
    hs: &HankelSystem,
    u_star: &InjectionVector,
    opts: &DdpfOptions,
) -> Result<DdpfSolution, DdpfError> {
    let prog = build_full_program(hs, u_star, opts.v0)?;
    let sol = run(&prog, opts)?;
    let (t, n) = (hs.t(), hs.n);
    let z = sol.z.clone();
    Ok(extract(hs, u_star, &z, 0, t + 2 * n, None, sol))
}

pub fn solve_ddpf_reduced(
    hs: &HankelSystem,
    u_star: &InjectionVector,
    slack_adjacent: &[usize],
    lambda_g: f64,
    lambda_l: f64,
) -> Result<DdpfSolution, DdpfError> {
    solve_ddpf_reduced_with(hs, u_star, slack_adjacent, lambda_g, lambda_l, &DdpfOptions::default())
}

pub fn solve_ddpf_reduced_with(
    hs: &HankelSystem,
    u_star: &InjectionVector,
    slack_adjacent: &[usize],
    lambda_g: f64,
    lambda_l: f64,
    opts: &DdpfOptions,
) -> Result<DdpfSolution, DdpfError> {
    ReducedDdpf::new(hs, slack_adjacent, lambda_g, lambda_l, *opts)?.solve(u_star)
}

/// Reduced problem prepared for repeated solves over one dataset.
///
/// Components of `g` in the nullspace of the stacked Hankel matrix change
/// no constraint and only add to `|g|^2`, so they vanish at the optimum;
/// `g` is therefore parametrized as `V a` with `V` an orthonormal basis of
/// the row space, which keeps `|g| = |a|` and removes flat directions.
#[derive(Debug, Clone)]
pub struct ReducedDdpf {
    compressed: HankelSystem,
    basis: DMatrix<f64>,
    slack_adjacent: Vec<usize>,
    lambda_g: f64,
    lambda_l: f64,
    opts: DdpfOptions,
}

impl ReducedDdpf {
    pub fn new(
        hs: &HankelSystem,
        slack_adjacent: &[usize],
        lambda_g: f64,
        lambda_l: f64,
        opts: DdpfOptions,
    ) -> Result<Self, DdpfError> {
        if slack_adjacent.is_empty() {
            return Err(DdpfError::MissingSlackAdjacency);
        }
        let svd = hs.stacked().svd(false, true);
        let v_t = svd.v_t.expect("requested");
        let smax = svd.singular_values.max();
        let keep: Vec<usize> =
            (0..svd.singular_values.len()).filter(|&k| svd.singular_values[k] > ROW_SPACE_TOL * smax).collect();
        let basis = v_t.select_rows(keep.iter()).transpose();
        let compressed = HankelSystem {
            n: hs.n,
            h_u: &hs.h_u * &basis,
            h_y: &hs.h_y * &basis,
            measured: hs.measured.clone(),
            stacked_rank: hs.stacked_rank,
            pe_satisfied: hs.pe_satisfied,
        };
        Ok(Self { compressed, basis, slack_adjacent: slack_adjacent.to_vec(), lambda_g, lambda_l, opts })
    }

    /// Program in the row-space coordinates `a`.
    pub fn program(&self, u_star: &InjectionVector) -> Result<ConicProgram, DdpfError> {
        build_reduced_program(
            &self.compressed,
            u_star,
            &self.slack_adjacent,
            self.lambda_g,
            self.lambda_l,
            self.opts.v0,
        )
    }

    pub fn solve(&self, u_star: &InjectionVector) -> Result<DdpfSolution, DdpfError> {
        let prog = self.program(u_star)?;
        let sol = run(&prog, &self.opts)?;
        let hs = &self.compressed;
        let (r, n) = (hs.t(), hs.n);
        let m = hs.measured_nodes().len();
        let edges = r + 2 + 2 * n;
        let z = sol.z.clone();
        let mut out = extract(hs, u_star, &z, 2, edges, Some(edges + 4 * m + 2), sol);
        let a = DVector::from_column_slice(&out.g);
        out.g = (&self.basis * a).iter().copied().collect();
        Ok(out)
    }
}

/// Solves many operating points concurrently, keeping input order.
pub fn solve_many<F>(points: &[InjectionVector], f: F) -> Vec<Result<DdpfSolution, DdpfError>>
where
    F: Fn(&InjectionVector) -> Result<DdpfSolution, DdpfError> + Sync + Send,
{
    points.par_iter().map(f).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Measured,
    ProxiedBy(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    /// `|V|` for every node, slack first.
    pub magnitudes: Vec<f64>,
    pub provenance: Vec<Provenance>,
    pub max_error: Option<f64>,
}

impl ReconstructionResult {
    /// Records `max |V - oracle|` and returns it.
    pub fn compare(&mut self, oracle: &[f64]) -> f64 {
        let e = self.magnitudes.iter().zip(oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        self.max_error = Some(e);
        e
    }
}

/// Fills unmeasured nodes with their representative's measured magnitude.
pub fn reconstruct_full_voltages(
    sol: &DdpfSolution,
    assignment: &AssignmentMatrix,
) -> Result<ReconstructionResult, DdpfError> {
    let n = assignment.n();
    let measured: BTreeSet<usize> = sol.nodes.iter().copied().chain([0]).collect();
    if sol.nodes.iter().any(|&i| i > n) {
        return Err(DdpfError::InconsistentAssignment("solution node outside the network".into()));
    }
    let measured_mag = |i: usize| -> f64 {
        if i == 0 {
            sol.slack_voltage_sq.max(0.0).sqrt()
        } else {
            let k = sol.nodes.binary_search(&i).expect("checked membership");
            sol.voltage_sq[k].max(0.0).sqrt()
        }
    };
    let mut magnitudes = Vec::with_capacity(n + 1);
    let mut provenance = Vec::with_capacity(n + 1);
    for j in 0..=n {
        if measured.contains(&j) {
            magnitudes.push(measured_mag(j));
            provenance.push(Provenance::Measured);
        } else {
            let rep = assignment.representative(j);
            if !measured.contains(&rep) {
                return Err(DdpfError::InconsistentAssignment(format!(
                    "node {j} is represented by unmeasured node {rep}"
                )));
            }
            magnitudes.push(measured_mag(rep));
            provenance.push(Provenance::ProxiedBy(rep));
        }
    }
    Ok(ReconstructionResult { magnitudes, provenance, max_error: None })
}
