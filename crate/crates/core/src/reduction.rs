//! Kron reduction, greedy budgeted sensor placement and radialization.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::TrajectoryDataset;
use crate::network::{AdmittanceMatrix, NetworkError, RadialNetwork, RawBranch};
use crate::powerflow::{self, InjectionVector, PowerFlowError};

/// Off-diagonal admittances below this magnitude do not count as edges.
pub const EDGE_TOL: f64 = 1e-9;
/// Effective resistances in `[-R_CLAMP, 0)` are rounded to zero.
pub const R_CLAMP: f64 = 1e-9;
const PHASOR_TOL: f64 = 1e-12;
const PHASOR_MAX_ITER: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReductionError {
    #[error("interior block of the admittance matrix is singular")]
    SingularInterior,
    #[error("kept set must contain the slack node and valid indices")]
    InvalidKeptSet,
    #[error("invalid merge of node {0}")]
    InvalidMerge(usize),
    #[error("budget {budget} infeasible for {nodes} nodes")]
    BudgetInfeasible { budget: usize, nodes: usize },
    #[error("assignment invariant violated: {0}")]
    InvariantViolation(String),
    #[error("negative effective resistance {r} between nodes {a} and {b}")]
    NegativeResistance { a: usize, b: usize, r: f64 },
    #[error("phasor power flow failed: {0}")]
    NoConvergence(#[from] PowerFlowError),
    #[error("equivalent network: {0}")]
    Network(#[from] NetworkError),
}

/// Binary representative assignment: node `j` is proxied by `rep[j]`.
/// `Pi[i][j] = 1` iff `rep[j] == i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentMatrix {
    rep: Vec<usize>,
}

impl AssignmentMatrix {
    pub fn identity(n: usize) -> Self {
        Self { rep: (0..=n).collect() }
    }

    /// From a dense 0/1 matrix; every column must hold exactly one 1.
    pub fn from_matrix(pi: &DMatrix<u8>) -> Result<Self, ReductionError> {
        if pi.nrows() != pi.ncols() || pi.nrows() == 0 {
            return Err(ReductionError::InvariantViolation("matrix must be square and nonempty".into()));
        }
        let mut rep = Vec::with_capacity(pi.ncols());
        for j in 0..pi.ncols() {
            let ones: Vec<usize> = (0..pi.nrows()).filter(|&i| pi[(i, j)] != 0).collect();
            if ones.len() != 1 || pi.column(j).iter().any(|&v| v > 1) {
                return Err(ReductionError::InvariantViolation(format!("column {j} is not a unit vector")));
            }
            rep.push(ones[0]);
        }
        Ok(Self { rep })
    }

    /// Each node proxied by its nearest ancestor-or-self in `kept`.
    pub fn nearest_upstream(net: &RadialNetwork, kept: &BTreeSet<usize>) -> Result<Self, ReductionError> {
        if !kept.contains(&0) || kept.iter().any(|&i| i > net.n()) {
            return Err(ReductionError::InvalidKeptSet);
        }
        let rep = (0..=net.n())
            .map(|j| *net.path_to_root(j).iter().find(|k| kept.contains(k)).expect("root is kept"))
            .collect();
        Ok(Self { rep })
    }

    pub fn n(&self) -> usize {
        self.rep.len() - 1
    }

    pub fn representative(&self, j: usize) -> usize {
        self.rep[j]
    }

    pub fn representatives(&self) -> &[usize] {
        &self.rep
    }

    pub fn trace(&self) -> usize {
        self.rep.iter().enumerate().filter(|(j, &r)| *j == r).count()
    }

    pub fn kept(&self) -> BTreeSet<usize> {
        self.rep.iter().enumerate().filter(|(j, &r)| *j == r).map(|(j, _)| j).collect()
    }

    pub fn clusters(&self) -> BTreeMap<usize, BTreeSet<usize>> {
        let mut out: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for (j, &r) in self.rep.iter().enumerate() {
            out.entry(r).or_default().insert(j);
        }
        out
    }

    pub fn largest_cluster(&self) -> usize {
        self.clusters().values().map(BTreeSet::len).max().unwrap_or(0)
    }

    pub fn matrix(&self) -> DMatrix<u8> {
        let m = self.rep.len();
        let mut pi = DMatrix::zeros(m, m);
        for (j, &r) in self.rep.iter().enumerate() {
            pi[(r, j)] = 1;
        }
        pi
    }

    /// Nonzero entries `(i, j)` of the matrix, column order.
    pub fn triples(&self) -> Vec<(usize, usize)> {
        self.rep.iter().enumerate().map(|(j, &r)| (r, j)).collect()
    }

    /// Sums injections per representative.
    pub fn aggregate<T: Copy + std::ops::AddAssign + Default>(&self, values: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); values.len()];
        for (j, &r) in self.rep.iter().enumerate() {
            out[r] += values[j];
        }
        out
    }

    /// Checks the structural rules: slack kept, representatives represent
    /// themselves, every cluster is a connected subtree hanging below its
    /// representative.
    pub fn audit(&self, net: &RadialNetwork) -> Result<(), ReductionError> {
        let bad = |s: String| Err(ReductionError::InvariantViolation(s));
        if self.rep.len() != net.node_count() {
            return bad(format!("{} columns for {} nodes", self.rep.len(), net.node_count()));
        }
        if self.rep[0] != 0 {
            return bad("slack is not kept".into());
        }
        for (j, &i) in self.rep.iter().enumerate() {
            if i >= self.rep.len() {
                return bad(format!("node {j} assigned to unknown node {i}"));
            }
            if self.rep[i] != i {
                return bad(format!("node {j} assigned to non-representative {i}"));
            }
            if i != j {
                if !net.is_descendant(j, i) {
                    return bad(format!("node {j} is not downstream of its representative {i}"));
                }
                if let Some(k) = net.path_interior(i, j).into_iter().find(|&k| self.rep[k] != i) {
                    return bad(format!("cluster of {i} disconnected at {k}"));
                }
            }
        }
        Ok(())
    }

    /// Upstream representative that absorbs `u`'s cluster when `u` loses its
    /// sensor.
    pub fn merge_target(&self, net: &RadialNetwork, u: usize) -> Result<usize, ReductionError> {
        if u == 0 || u > self.n() || self.rep[u] != u {
            return Err(ReductionError::InvalidMerge(u));
        }
        let parent = net.parent(u).ok_or(ReductionError::InvalidMerge(u))?;
        Ok(self.rep[parent])
    }

    pub fn merged(&self, net: &RadialNetwork, u: usize) -> Result<Self, ReductionError> {
        let target = self.merge_target(net, u)?;
        let mut rep = self.rep.clone();
        for r in rep.iter_mut() {
            if *r == u {
                *r = target;
            }
        }
        Ok(Self { rep })
    }
}

/// Kron-reduced admittance and, when it is a tree, the equivalent network.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedNetwork {
    pub y_kron: DMatrix<Complex64>,
    /// Original node index of each reduced row, ascending (slack first).
    pub kept: Vec<usize>,
    pub is_radial: bool,
    /// Internal node `k` corresponds to original node `kept[k]`.
    pub network: Option<RadialNetwork>,
}

impl ReducedNetwork {
    /// Reduced edges `(a, b)` in original indices, `a < b`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let m = self.kept.len();
        let mut out = Vec::new();
        for a in 0..m {
            for b in (a + 1)..m {
                if self.y_kron[(a, b)].norm() > EDGE_TOL {
                    out.push((self.kept[a], self.kept[b]));
                }
            }
        }
        out
    }

    /// Kept nodes sharing a reduced edge with the slack.
    pub fn slack_adjacent(&self) -> Vec<usize> {
        (1..self.kept.len()).filter(|&k| self.y_kron[(0, k)].norm() > EDGE_TOL).map(|k| self.kept[k]).collect()
    }
}

fn is_tree(m: usize, edges: &[(usize, usize)]) -> bool {
    if edges.len() + 1 != m {
        return false;
    }
    let mut adj = vec![Vec::new(); m];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; m];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// `Y_RR - Y_RU Y_UU^-1 Y_UR` for the complementary sets.
pub fn schur_complement(y: &DMatrix<Complex64>, kept: &[usize]) -> Result<DMatrix<Complex64>, ReductionError> {
    let keep: BTreeSet<usize> = kept.iter().copied().collect();
    let elim: Vec<usize> = (0..y.nrows()).filter(|i| !keep.contains(i)).collect();
    let block = |r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |a, b| y[(r[a], c[b])]);
    let y_rr = block(kept, kept);
    if elim.is_empty() {
        return Ok(y_rr);
    }
    let y_uu = block(&elim, &elim);
    let y_ur = block(&elim, kept);
    let y_ru = block(kept, &elim);
    let lu = y_uu.lu();
    let diag: Vec<f64> = lu.u().diagonal().iter().map(|d| d.norm()).collect();
    let dmax = diag.iter().copied().fold(0.0, f64::max);
    let dmin = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if !(dmax > 0.0) || dmin <= 1e-14 * dmax {
        return Err(ReductionError::SingularInterior);
    }
    let x = lu.solve(&y_ur).ok_or(ReductionError::SingularInterior)?;
    let out = y_rr - y_ru * x;
    if out.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(ReductionError::SingularInterior);
    }
    Ok(out)
}

/// Eliminates the nodes outside `kept` one at a time.
pub fn kron_reduce_sequential(y: &DMatrix<Complex64>, kept: &BTreeSet<usize>) -> Result<DMatrix<Complex64>, ReductionError> {
    let mut cur = y.clone();
    let mut labels: Vec<usize> = (0..y.nrows()).collect();
    while let Some(pos) = labels.iter().position(|l| !kept.contains(l)) {
        let rest: Vec<usize> = (0..labels.len()).filter(|&k| k != pos).collect();
        let piv = cur[(pos, pos)];
        if piv.norm() == 0.0 {
            return Err(ReductionError::SingularInterior);
        }
        cur = DMatrix::from_fn(rest.len(), rest.len(), |a, b| {
            let (i, j) = (rest[a], rest[b]);
            cur[(i, j)] - cur[(i, pos)] * cur[(pos, j)] / piv
        });
        labels.remove(pos);
    }
    Ok(cur)
}

/// Kron reduction onto `kept`. The equivalent radial network is extracted
/// when the reduced graph is a tree.
pub fn kron_reduce(
    net: &RadialNetwork,
    y: &AdmittanceMatrix,
    kept: &BTreeSet<usize>,
) -> Result<ReducedNetwork, ReductionError> {
    if !kept.contains(&0) || kept.iter().any(|&i| i >= y.dim()) {
        return Err(ReductionError::InvalidKeptSet);
    }
    let kept_v: Vec<usize> = kept.iter().copied().collect();
    let y_kron = schur_complement(&y.y, &kept_v)?;
    let m = kept_v.len();
    let mut local_edges = Vec::new();
    for a in 0..m {
        for b in (a + 1)..m {
            if y_kron[(a, b)].norm() > EDGE_TOL {
                local_edges.push((a, b));
            }
        }
    }
    let is_radial = is_tree(m, &local_edges);
    let network = if is_radial {
        let mut raw = Vec::with_capacity(local_edges.len());
        for &(a, b) in &local_edges {
            let z = -y_kron[(a, b)].inv();
            let mut r = z.re;
            if r < 0.0 {
                if r >= -R_CLAMP {
                    r = 0.0;
                } else {
                    return Err(ReductionError::NegativeResistance { a: kept_v[a], b: kept_v[b], r });
                }
            }
            raw.push(RawBranch { from: kept_v[a] as i64, to: kept_v[b] as i64, r, x: z.im });
        }
        let ids: Vec<i64> = kept_v.iter().map(|&i| i as i64).collect();
        Some(RadialNetwork::from_raw(net.base_mva(), net.base_kv(), 0, &ids, &raw)?)
    } else {
        None
    };
    Ok(ReducedNetwork { y_kron, kept: kept_v, is_radial, network })
}

/// Historical operating point: phasors and nodal current injections.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub voltages: Vec<Complex64>,
    pub currents: Vec<Complex64>,
}

/// Re-solves the operating point in phasor form and returns the nodal
/// currents `I_i = conj(s_i / V_i)`, with the slack current balancing the
/// network.
pub fn current_injections(
    net: &RadialNetwork,
    y: &AdmittanceMatrix,
    inj: &InjectionVector,
    v0_sq: f64,
) -> Result<Scenario, ReductionError> {
    let sol = powerflow::solve_phasor(net, inj, Complex64::new(v0_sq.sqrt(), 0.0), PHASOR_TOL, PHASOR_MAX_ITER)?;
    let v = sol.voltages;
    let mut currents = Vec::with_capacity(v.len());
    let i0: Complex64 = (0..v.len()).map(|k| y.y[(0, k)] * v[k]).sum();
    currents.push(i0);
    for i in 1..v.len() {
        currents.push((Complex64::new(inj.p[i - 1], inj.q[i - 1]) / v[i]).conj());
    }
    Ok(Scenario { voltages: v, currents })
}

/// Scenarios from every `stride`-th column of a full dataset.
pub fn scenarios_from_dataset(
    net: &RadialNetwork,
    ds: &TrajectoryDataset,
    stride: usize,
) -> Result<Vec<Scenario>, ReductionError> {
    let y = net.build_admittance();
    let n = net.n();
    let cols: Vec<usize> = (0..ds.len()).step_by(stride.max(1)).collect();
    cols.par_iter()
        .map(|&t| {
            let v0 = ds.y[(ds.y.nrows() - 1, t)];
            current_injections(net, &y, &ds.input(t), v0)
        })
        .collect::<Result<Vec<_>, _>>()
        .inspect(|v| debug_assert!(v.iter().all(|s| s.voltages.len() == n + 1)))
}

/// Slack-anchored solver for `Y V = I` on the non-slack rows.
struct AnchoredKcl {
    /// `Y_{++}^-1`.
    z: DMatrix<Complex64>,
    /// `Y_{++}^-1 Y_{+0}`.
    z_slack: Vec<Complex64>,
}

impl AnchoredKcl {
    fn new(y: &AdmittanceMatrix) -> Result<Self, ReductionError> {
        let m = y.dim();
        let rest: Vec<usize> = (1..m).collect();
        let y_pp = y.block(&rest, &rest);
        let y_p0 = y.block(&rest, &[0]);
        let z = y_pp.try_inverse().ok_or(ReductionError::SingularInterior)?;
        let z_slack = (&z * y_p0).iter().copied().collect();
        Ok(Self { z, z_slack })
    }

    /// Full voltage vector for injections `cur` (slack entry ignored).
    fn solve(&self, cur: &[Complex64], v0: Complex64) -> Vec<Complex64> {
        let n = self.z.nrows();
        let mut v = vec![v0; n + 1];
        for k in 0..n {
            let mut acc = -self.z_slack[k] * v0;
            for j in 0..n {
                acc += self.z[(k, j)] * cur[j + 1];
            }
            v[k + 1] = acc;
        }
        v
    }
}

fn reconstruction_error(assign: &[usize], v: &[Complex64], truth: &[Complex64]) -> f64 {
    assign.iter().enumerate().map(|(j, &r)| (v[r].norm() - truth[j].norm()).abs()).fold(0.0, f64::max)
}

/// Score of `current` with node `u`'s cluster merged upstream: worst
/// reconstruction error `max_t |Pi' |V| - |V_hat||` where `V` solves the
/// aggregated KCL anchored at the historical slack voltage.
pub fn score_candidate(
    net: &RadialNetwork,
    y: &AdmittanceMatrix,
    current: &AssignmentMatrix,
    u: usize,
    scenarios: &[Scenario],
) -> Result<f64, ReductionError> {
    let trial = current.merged(net, u)?;
    score_assignment(y, &trial, scenarios)
}

/// Reconstruction score of a fixed assignment.
pub fn score_assignment(
    y: &AdmittanceMatrix,
    assignment: &AssignmentMatrix,
    scenarios: &[Scenario],
) -> Result<f64, ReductionError> {
    let kcl = AnchoredKcl::new(y)?;
    Ok(scenarios
        .iter()
        .map(|s| {
            let agg = assignment.aggregate(&s.currents);
            let v = kcl.solve(&agg, s.voltages[0]);
            reconstruction_error(assignment.representatives(), &v, &s.voltages)
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub node: usize,
    pub into: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub assignment: AssignmentMatrix,
    pub trace: Vec<MergeStep>,
}

/// Greedy reduction from the identity assignment: each step scores every
/// admissible single merge in parallel and commits the best one (ties to
/// the lowest node index) until `budget` representatives remain.
pub fn greedy_placement(
    net: &RadialNetwork,
    y: &AdmittanceMatrix,
    scenarios: &[Scenario],
    budget: usize,
) -> Result<Placement, ReductionError> {
    let n = net.n();
    if budget < 1 || budget > n + 1 {
        return Err(ReductionError::BudgetInfeasible { budget, nodes: n + 1 });
    }
    let kcl = AnchoredKcl::new(y)?;
    let mut assignment = AssignmentMatrix::identity(n);
    // current model voltages per scenario, updated incrementally
    let mut model: Vec<Vec<Complex64>> =
        scenarios.iter().map(|s| kcl.solve(&s.currents, s.voltages[0])).collect();
    let mut trace = Vec::with_capacity(n + 1 - budget);
    while assignment.trace() > budget {
        let candidates: Vec<usize> = (1..=n).filter(|&u| assignment.representative(u) == u).collect();
        let clusters = assignment.clusters();
        let scored: Vec<(f64, usize, usize)> = candidates
            .par_iter()
            .map(|&u| {
                let target = assignment.merge_target(net, u).expect("candidate is a representative");
                let members = &clusters[&u];
                let trial: Vec<usize> =
                    assignment.representatives().iter().map(|&r| if r == u { target } else { r }).collect();
                let score = scenarios
                    .iter()
                    .zip(&model)
                    .map(|(s, v)| {
                        let moved: Complex64 = members.iter().map(|&j| s.currents[j]).sum();
                        merged_error(&kcl, &trial, v, &s.voltages, u, target, moved)
                    })
                    .fold(0.0, f64::max);
                (score, u, target)
            })
            .collect();
        let &(score, u, target) = scored
            .iter()
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .ok_or(ReductionError::BudgetInfeasible { budget, nodes: n + 1 })?;
        let members = &clusters[&u];
        for (s, v) in scenarios.iter().zip(model.iter_mut()) {
            let moved: Complex64 = members.iter().map(|&j| s.currents[j]).sum();
            apply_move(&kcl, v, u, target, moved);
        }
        assignment = assignment.merged(net, u)?;
        assignment.audit(net)?;
        trace.push(MergeStep { node: u, into: target, score });
    }
    Ok(Placement { assignment, trace })
}

/// Voltage change from moving injection `moved` from node `u` to `target`.
fn delta(kcl: &AnchoredKcl, k: usize, u: usize, target: usize, moved: Complex64) -> Complex64 {
    let to = if target == 0 { Complex64::new(0.0, 0.0) } else { kcl.z[(k - 1, target - 1)] };
    (to - kcl.z[(k - 1, u - 1)]) * moved
}

fn merged_error(
    kcl: &AnchoredKcl,
    trial: &[usize],
    v: &[Complex64],
    truth: &[Complex64],
    u: usize,
    target: usize,
    moved: Complex64,
) -> f64 {
    // only representative voltages are read
    let mut mag = vec![0.0; v.len()];
    for (j, &r) in trial.iter().enumerate() {
        if r == j {
            mag[j] = if j == 0 { v[0].norm() } else { (v[j] + delta(kcl, j, u, target, moved)).norm() };
        }
    }
    trial.iter().enumerate().map(|(j, &r)| (mag[r] - truth[j].norm()).abs()).fold(0.0, f64::max)
}

fn apply_move(kcl: &AnchoredKcl, v: &mut [Complex64], u: usize, target: usize, moved: Complex64) {
    for k in 1..v.len() {
        v[k] += delta(kcl, k, u, target, moved);
    }
}

/// Result of re-adding the Steiner branching nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Radialization {
    pub kept_star: BTreeSet<usize>,
    pub radializing: BTreeSet<usize>,
    pub kept: BTreeSet<usize>,
    pub reduced: ReducedNetwork,
}

/// Nodes of the minimal subtree spanning `kept` (which contains the root).
pub fn steiner_nodes(net: &RadialNetwork, kept: &BTreeSet<usize>) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for &k in kept {
        for p in net.path_to_root(k) {
            if !out.insert(p) {
                break;
            }
        }
    }
    out
}

pub fn radialize(net: &RadialNetwork, kept_star: &BTreeSet<usize>) -> Result<Radialization, ReductionError> {
    if !kept_star.contains(&0) || kept_star.iter().any(|&i| i > net.n()) {
        return Err(ReductionError::InvalidKeptSet);
    }
    let steiner = steiner_nodes(net, kept_star);
    let radializing: BTreeSet<usize> = steiner
        .iter()
        .copied()
        .filter(|&v| !kept_star.contains(&v))
        .filter(|&v| {
            let down = net.children(v).iter().filter(|c| steiner.contains(c)).count();
            let up = usize::from(v != 0);
            down + up >= 3
        })
        .collect();
    let kept: BTreeSet<usize> = kept_star.union(&radializing).copied().collect();
    let reduced = kron_reduce(net, &net.build_admittance(), &kept)?;
    if !reduced.is_radial {
        return Err(ReductionError::InvariantViolation("radialized network is not a tree".into()));
    }
    Ok(Radialization { kept_star: kept_star.clone(), radializing, kept, reduced })
}

pub fn reduction_percentage(n: usize, kept: usize) -> f64 {
    (n + 1 - kept) as f64 / (n + 1) as f64 * 100.0
}

/// Model-based baseline: DistFlow on the equivalent reduced network with
/// injections aggregated by `assignment`; returns `|V|` for all original
/// nodes via the same proxies.
pub fn reduced_power_flow(
    reduced: &ReducedNetwork,
    assignment: &AssignmentMatrix,
    inj: &InjectionVector,
    v0: f64,
) -> Result<Vec<f64>, ReductionError> {
    let net = reduced.network.as_ref().ok_or_else(|| {
        ReductionError::InvariantViolation("baseline needs a radial reduced network".into())
    })?;
    let n = assignment.n();
    let mut p = vec![0.0; n + 1];
    let mut q = vec![0.0; n + 1];
    p[1..].copy_from_slice(&inj.p);
    q[1..].copy_from_slice(&inj.q);
    let (p, q) = (assignment.aggregate(&p), assignment.aggregate(&q));
    let local = InjectionVector {
        p: reduced.kept[1..].iter().map(|&i| p[i]).collect(),
        q: reduced.kept[1..].iter().map(|&i| q[i]).collect(),
    };
    let state = powerflow::solve_distflow(net, &local, v0, powerflow::DEFAULT_TOL_PF, powerflow::DEFAULT_MAX_ITER)?;
    let mut mag = vec![0.0; n + 1];
    for (k, &orig) in reduced.kept.iter().enumerate() {
        mag[orig] = state.v_at(k).max(0.0).sqrt();
    }
    Ok((0..=n).map(|j| mag[assignment.representative(j)]).collect())
}
