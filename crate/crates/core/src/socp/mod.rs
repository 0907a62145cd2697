//! Second-order cone programs in standard form
//!
//! ```text
//! minimize  c'z   subject to  A z = b,  z in K = K_1 x ... x K_p
//! ```
//!
//! where each block `K_i` is free, the non-negative orthant, or the rotated
//! second-order cone `{ (w1, w2, w3..wd) : 2 w1 w2 >= sum_k wk^2, w1, w2 >= 0 }`.
//! A product-cone point `v*l >= P^2 + Q^2` is therefore written as the block
//! `(v, l/2, P, Q)`.

mod admm;
mod ipm;
mod presolve;
pub mod qr;

use std::io::{self, Write};
use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use admm::AdmmSolver;
pub use ipm::IpmSolver;

pub const DEFAULT_EPS_ABS: f64 = 1e-8;
pub const DEFAULT_EPS_REL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SocpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("numerical breakdown at iteration {iteration}: {detail}")]
    NumericalBreakdown { iteration: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cone {
    Free(usize),
    NonNegative(usize),
    /// Dimension `d >= 3`.
    RotatedSecondOrder(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Free(d) | Cone::NonNegative(d) | Cone::RotatedSecondOrder(d) => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Consecutive variable blocks covering `0..c.len()`.
    pub cones: Vec<Cone>,
}

impl ConicProgram {
    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<(), SocpError> {
        let n = self.c.len();
        let total: usize = self.cones.iter().map(Cone::dim).sum();
        if total != n {
            return Err(SocpError::DimensionMismatch(format!("cones cover {total} of {n} variables")));
        }
        if self.a.ncols() != n {
            return Err(SocpError::DimensionMismatch(format!("A has {} columns, c has {n}", self.a.ncols())));
        }
        if self.a.nrows() != self.b.len() {
            return Err(SocpError::DimensionMismatch(format!(
                "A has {} rows, b has {}",
                self.a.nrows(),
                self.b.len()
            )));
        }
        if let Some(c) = self.cones.iter().find(|c| matches!(c, Cone::RotatedSecondOrder(d) if *d < 3)) {
            return Err(SocpError::DimensionMismatch(format!("rotated cone of dimension {}", c.dim())));
        }
        let finite = self.c.iter().chain(self.a.iter()).chain(self.b.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(SocpError::DimensionMismatch("non-finite data".into()));
        }
        Ok(())
    }

    /// Block boundaries `(offset, cone)`.
    pub fn blocks(&self) -> impl Iterator<Item = (usize, Cone)> + '_ {
        self.cones.iter().scan(0usize, |off, &c| {
            let start = *off;
            *off += c.dim();
            Some((start, c))
        })
    }

    /// Plain-text sparse dump for cross-checking with external solvers.
    ///
    /// Lines: `dims <n> <m>`, `cone <kind> <dim>`, `c <j> <v>`, `b <i> <v>`,
    /// `A <i> <j> <v>` (zero-based, nonzeros only).
    pub fn write_sparse<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "dims {} {}", self.n_vars(), self.b.len())?;
        for c in &self.cones {
            let (kind, d) = match *c {
                Cone::Free(d) => ("free", d),
                Cone::NonNegative(d) => ("nonneg", d),
                Cone::RotatedSecondOrder(d) => ("rsoc", d),
            };
            writeln!(w, "cone {kind} {d}")?;
        }
        for (j, v) in self.c.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            writeln!(w, "c {j} {v:e}")?;
        }
        for (i, v) in self.b.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            writeln!(w, "b {i} {v:e}")?;
        }
        for i in 0..self.a.nrows() {
            for j in 0..self.a.ncols() {
                let v = self.a[(i, j)];
                if v != 0.0 {
                    writeln!(w, "A {i} {j} {v:e}")?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { eps_abs: DEFAULT_EPS_ABS, eps_rel: DEFAULT_EPS_REL, max_iter: DEFAULT_MAX_ITER }
    }
}

/// Rows dropped before solving.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresolveReport {
    pub zero_rows: usize,
    pub duplicate_rows: usize,
    pub dependent_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub z: DVector<f64>,
    pub status: SolveStatus,
    pub objective: f64,
    pub eq_residual: f64,
    pub cone_violation: f64,
    pub iterations: usize,
    pub wall_time: Duration,
    pub presolve: PresolveReport,
}

/// Any conic backend. Implementations must be deterministic for fixed
/// inputs and settings.
pub trait ConicSolver: Sync {
    fn solve(&self, prog: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution, SocpError>;
}

/// Solves with the bundled operator-splitting solver.
pub fn solve(prog: &ConicProgram, eps_abs: f64, eps_rel: f64, max_iter: usize) -> Result<ConicSolution, SocpError> {
    AdmmSolver.solve(prog, &SolverSettings { eps_abs, eps_rel, max_iter })
}

/// Residuals recomputed from the program data alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub eq_residual: f64,
    pub cone_violation: f64,
    pub objective: f64,
}

pub fn verify_solution(prog: &ConicProgram, sol: &ConicSolution) -> Result<VerifyReport, SocpError> {
    verify_point(prog, &sol.z)
}

pub fn verify_point(prog: &ConicProgram, z: &DVector<f64>) -> Result<VerifyReport, SocpError> {
    prog.validate()?;
    if z.len() != prog.n_vars() {
        return Err(SocpError::DimensionMismatch(format!(
            "solution has {} entries, program has {}",
            z.len(),
            prog.n_vars()
        )));
    }
    let eq_residual = if prog.b.is_empty() { 0.0 } else { (&prog.a * z - &prog.b).amax() };
    let cone_violation = prog
        .blocks()
        .map(|(off, c)| cone_violation(c, z.as_slice()[off..off + c.dim()].as_ref()))
        .fold(0.0, f64::max);
    Ok(VerifyReport { eq_residual, cone_violation, objective: prog.c.dot(z) })
}

/// Violation of one block: negative parts, and for the rotated cone also
/// `sum_k wk^2 - 2 w1 w2` when positive.
pub fn cone_violation(cone: Cone, w: &[f64]) -> f64 {
    match cone {
        Cone::Free(_) => 0.0,
        Cone::NonNegative(_) => w.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max),
        Cone::RotatedSecondOrder(_) => {
            let tail: f64 = w[2..].iter().map(|v| v * v).sum();
            let gap = tail - 2.0 * w[0] * w[1];
            gap.max(-w[0]).max(-w[1]).max(0.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verify_reports_b_norm_for_zero_point() {
        let prog = ConicProgram {
            c: DVector::from_vec(vec![1.0, 0.0]),
            a: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            b: DVector::from_vec(vec![0.5, -3.0]),
            cones: vec![Cone::Free(2)],
        };
        let r = verify_point(&prog, &DVector::zeros(2)).unwrap();
        assert_eq!(r.eq_residual, 3.0);
    }

    #[test]
    fn rotated_cone_violation_arithmetic() {
        assert_eq!(cone_violation(Cone::RotatedSecondOrder(3), &[1.0, 1.0, 2.0]), 2.0);
        assert_eq!(cone_violation(Cone::RotatedSecondOrder(3), &[1.0, 1.0, 1.0]), 0.0);
        assert_eq!(cone_violation(Cone::NonNegative(2), &[1.0, -0.25]), 0.25);
    }

    #[test]
    fn dimension_checks() {
        let prog = ConicProgram {
            c: DVector::zeros(3),
            a: DMatrix::zeros(1, 3),
            b: DVector::zeros(1),
            cones: vec![Cone::NonNegative(2)],
        };
        assert!(prog.validate().is_err());
        let ok = ConicProgram { cones: vec![Cone::NonNegative(3)], ..prog };
        assert!(verify_point(&ok, &DVector::zeros(2)).is_err());
    }
}
