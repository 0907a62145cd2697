//! Model-based DistFlow oracle.
//!
//! Sign convention: `p`, `q` are net injections, so loads are negative. The
//! flow `P_i` is the sending-end flow on the branch from node `i` towards its
//! parent, which makes it negative when node `i` and its subtree consume
//! power. Vectors are indexed by node `i - 1` for `i = 1..=n`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::RadialNetwork;

pub const DEFAULT_TOL_PF: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerFlowError {
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("voltage collapse at node {node} (v = {v:e})")]
    VoltageCollapse { node: usize, v: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("negative squared voltage {v:e} at node {node}")]
    NegativeSquaredVoltage { node: usize, v: f64 },
    #[error("singular power-flow Jacobian")]
    SingularJacobian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionVector {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl InjectionVector {
    pub fn zeros(n: usize) -> Self {
        Self { p: vec![0.0; n], q: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// `vstack(p, q)`.
    pub fn stacked(&self) -> Vec<f64> {
        self.p.iter().chain(&self.q).copied().collect()
    }

    pub fn from_stacked(u: &[f64]) -> Self {
        let n = u.len() / 2;
        Self { p: u[..n].to_vec(), q: u[n..2 * n].to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowState {
    pub p_flow: Vec<f64>,
    pub q_flow: Vec<f64>,
    pub current_sq: Vec<f64>,
    pub voltage_sq: Vec<f64>,
    pub slack_voltage_sq: f64,
}

impl PowerFlowState {
    pub fn n(&self) -> usize {
        self.p_flow.len()
    }

    /// `vstack(P, Q, l, v, v0)`, length `4n + 1`.
    pub fn stacked(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(4 * self.n() + 1);
        y.extend_from_slice(&self.p_flow);
        y.extend_from_slice(&self.q_flow);
        y.extend_from_slice(&self.current_sq);
        y.extend_from_slice(&self.voltage_sq);
        y.push(self.slack_voltage_sq);
        y
    }

    pub fn from_stacked(y: &[f64]) -> Self {
        let n = (y.len() - 1) / 4;
        Self {
            p_flow: y[..n].to_vec(),
            q_flow: y[n..2 * n].to_vec(),
            current_sq: y[2 * n..3 * n].to_vec(),
            voltage_sq: y[3 * n..4 * n].to_vec(),
            slack_voltage_sq: y[4 * n],
        }
    }

    /// Squared voltage of any node, slack included.
    pub fn v_at(&self, node: usize) -> f64 {
        if node == 0 {
            self.slack_voltage_sq
        } else {
            self.voltage_sq[node - 1]
        }
    }
}

/// Max absolute residual per DistFlow equation family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub active: f64,
    pub reactive: f64,
    pub voltage: f64,
    pub cone: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.active.max(self.reactive).max(self.voltage).max(self.cone)
    }
}

/// Backward-forward sweep from a flat start.
pub fn solve_distflow(
    net: &RadialNetwork,
    inj: &InjectionVector,
    v0: f64,
    tol_pf: f64,
    max_iter: usize,
) -> Result<PowerFlowState, PowerFlowError> {
    let n = net.n();
    check_len(n, inj.p.len())?;
    check_len(n, inj.q.len())?;
    let order = net.bfs_order();
    let mut pf = vec![0.0; n];
    let mut qf = vec![0.0; n];
    let mut l = vec![0.0; n];
    let mut v = vec![v0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        for &i in order.iter().rev().filter(|&&i| i != 0) {
            let mut ps = inj.p[i - 1];
            let mut qs = inj.q[i - 1];
            for &c in net.children(i) {
                let br = net.branch(c);
                ps += pf[c - 1] - br.r * l[c - 1];
                qs += qf[c - 1] - br.x * l[c - 1];
            }
            pf[i - 1] = ps;
            qf[i - 1] = qs;
        }
        for &i in order.iter().filter(|&&i| i != 0) {
            let br = net.branch(i);
            let vp = if br.parent == 0 { v0 } else { v[br.parent - 1] };
            let vi = vp + 2.0 * (br.r * pf[i - 1] + br.x * qf[i - 1]) - br.z_sq() * l[i - 1];
            if !(vi > 0.0) {
                return Err(PowerFlowError::VoltageCollapse { node: i, v: vi });
            }
            v[i - 1] = vi;
        }
        residual = (0..n)
            .map(|k| (l[k] * v[k] - pf[k] * pf[k] - qf[k] * qf[k]).abs())
            .fold(0.0, f64::max);
        if residual <= tol_pf {
            return Ok(PowerFlowState {
                p_flow: pf,
                q_flow: qf,
                current_sq: l,
                voltage_sq: v,
                slack_voltage_sq: v0,
            });
        }
        for k in 0..n {
            l[k] = (pf[k] * pf[k] + qf[k] * qf[k]) / v[k];
        }
    }
    Err(PowerFlowError::NoConvergence { iterations: max_iter, residual })
}

/// Evaluates every DistFlow equation at `state`.
pub fn residuals(
    net: &RadialNetwork,
    state: &PowerFlowState,
    inj: &InjectionVector,
) -> Result<ResidualReport, PowerFlowError> {
    let n = net.n();
    for len in [
        inj.p.len(),
        inj.q.len(),
        state.p_flow.len(),
        state.q_flow.len(),
        state.current_sq.len(),
        state.voltage_sq.len(),
    ] {
        check_len(n, len)?;
    }
    let mut rep = ResidualReport { active: 0.0, reactive: 0.0, voltage: 0.0, cone: 0.0 };
    for i in 1..=n {
        let k = i - 1;
        let mut ps = inj.p[k];
        let mut qs = inj.q[k];
        for &c in net.children(i) {
            let br = net.branch(c);
            ps += state.p_flow[c - 1] - br.r * state.current_sq[c - 1];
            qs += state.q_flow[c - 1] - br.x * state.current_sq[c - 1];
        }
        rep.active = rep.active.max((state.p_flow[k] - ps).abs());
        rep.reactive = rep.reactive.max((state.q_flow[k] - qs).abs());
        let br = net.branch(i);
        let drop = state.voltage_sq[k] - 2.0 * (br.r * state.p_flow[k] + br.x * state.q_flow[k])
            + br.z_sq() * state.current_sq[k];
        rep.voltage = rep.voltage.max((state.v_at(br.parent) - drop).abs());
        let cone = state.current_sq[k] * state.voltage_sq[k]
            - state.p_flow[k] * state.p_flow[k]
            - state.q_flow[k] * state.q_flow[k];
        rep.cone = rep.cone.max(cone.abs());
    }
    Ok(rep)
}

/// `|V_i| = sqrt(v_i)` for the non-slack nodes.
pub fn voltage_magnitudes(state: &PowerFlowState) -> Result<Vec<f64>, PowerFlowError> {
    state
        .voltage_sq
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            if v < 0.0 {
                Err(PowerFlowError::NegativeSquaredVoltage { node: k + 1, v })
            } else {
                Ok(v.sqrt())
            }
        })
        .collect()
}

fn check_len(expected: usize, got: usize) -> Result<(), PowerFlowError> {
    if expected == got {
        Ok(())
    } else {
        Err(PowerFlowError::DimensionMismatch { expected, got })
    }
}

// ---------------------------------------------------------------------------
// Complex-phasor power flow on I = Y V.

/// Complex nodal voltages (slack at index 0) of a converged phasor solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasorSolution {
    pub voltages: Vec<Complex64>,
    pub iterations: usize,
}

impl PhasorSolution {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.voltages[1..].iter().map(|v| v.norm()).collect()
    }
}

/// Polar Newton-Raphson on the nodal equations `S = diag(V) conj(Y V)`,
/// slack voltage `slack` at node 0, all other nodes PQ.
///
/// The mismatch cannot drop below the round-off of `Y V`, so `tol` is
/// raised to a small multiple of `eps * max_i sum_j |Y_ij| * |V0|^2` on
/// stiff feeders.
pub fn solve_phasor(
    net: &RadialNetwork,
    inj: &InjectionVector,
    slack: Complex64,
    tol: f64,
    max_iter: usize,
) -> Result<PhasorSolution, PowerFlowError> {
    let n = net.n();
    check_len(n, inj.p.len())?;
    check_len(n, inj.q.len())?;
    let y = net.build_admittance().y;
    let m = n + 1;
    let mut vm: Vec<f64> = vec![slack.norm(); m];
    let mut va: Vec<f64> = vec![slack.arg(); m];
    let y_scale = (0..m).map(|i| y.row(i).iter().map(|c| c.norm()).sum::<f64>()).fold(0.0, f64::max);
    let tol = tol.max(64.0 * f64::EPSILON * y_scale * slack.norm_sqr());
    let mut residual = f64::INFINITY;
    for it in 0..=max_iter {
        let v: Vec<Complex64> = (0..m).map(|k| Complex64::from_polar(vm[k], va[k])).collect();
        let vv = DVector::from_vec(v.clone());
        let ibus = &y * &vv;
        let mut mis = DVector::<f64>::zeros(2 * n);
        for i in 1..m {
            let s = v[i] * ibus[i].conj();
            mis[i - 1] = s.re - inj.p[i - 1];
            mis[n + i - 1] = s.im - inj.q[i - 1];
        }
        residual = mis.amax();
        if residual <= tol {
            return Ok(PhasorSolution { voltages: v, iterations: it });
        }
        if it == max_iter {
            break;
        }
        // dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
        // dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
        let mut jac = DMatrix::<f64>::zeros(2 * n, 2 * n);
        let j = Complex64::i();
        for a in 1..m {
            for b in 1..m {
                let yab = y[(a, b)];
                let mut d_va = -(yab * v[b]).conj();
                let vb_unit = v[b] / vm[b];
                let mut d_vm = v[a] * (yab * vb_unit).conj();
                if a == b {
                    d_va += ibus[a].conj();
                    d_vm += ibus[a].conj() * vb_unit;
                }
                let d_va = j * v[a] * d_va;
                jac[(a - 1, b - 1)] = d_va.re;
                jac[(a - 1, n + b - 1)] = d_vm.re;
                jac[(n + a - 1, b - 1)] = d_va.im;
                jac[(n + a - 1, n + b - 1)] = d_vm.im;
            }
        }
        let dx = jac.lu().solve(&(-mis)).ok_or(PowerFlowError::SingularJacobian)?;
        for i in 1..m {
            va[i] += dx[i - 1];
            vm[i] += dx[n + i - 1];
            if !(vm[i] > 0.0) {
                return Err(PowerFlowError::VoltageCollapse { node: i, v: vm[i] * vm[i] });
            }
        }
    }
    Err(PowerFlowError::NoConvergence { iterations: max_iter, residual })
}
