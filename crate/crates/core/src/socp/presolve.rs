//! Shared presolve for the bundled conic solvers.
//!
//! Zero and duplicate rows are dropped. Free variables are eliminated: their
//! columns span a subspace of the equality range, so the cone variables only
//! have to satisfy the projected system `(I - U U') A_K z = (I - U U') b` and
//! the free part is recovered by least squares afterwards. A linear cost on
//! free variables is moved onto the cone variables through the multiplier
//! `y` with `A_F' y = c_F`. The remaining affine set is stored as
//! `x_p + null(Q')` with `Q` an orthonormal basis of the constraint row space.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::qr::PivotedQr;
use super::{verify_point, ConicProgram, ConicSolution, Cone, PresolveReport, SolveStatus};

const RANK_TOL: f64 = 1e-10;

pub(crate) fn finish(
    prog: &ConicProgram,
    z: DVector<f64>,
    status: SolveStatus,
    iterations: usize,
    start: Instant,
    presolve: PresolveReport,
) -> ConicSolution {
    let rep = verify_point(prog, &z).expect("validated program");
    ConicSolution {
        z,
        status,
        objective: rep.objective,
        eq_residual: rep.eq_residual,
        cone_violation: rep.cone_violation,
        iterations,
        wall_time: start.elapsed(),
        presolve,
    }
}

/// Cone blocks over the cone-variable subvector.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Block {
    NonNeg { off: usize, dim: usize },
    Rsoc { off: usize, dim: usize },
}

pub(crate) struct Presolved {
    pub(crate) n: usize,
    pub(crate) free_idx: Vec<usize>,
    pub(crate) cone_idx: Vec<usize>,
    pub(crate) blocks: Vec<Block>,
    /// Rows of the original system that survived presolve.
    pub(crate) a_k: DMatrix<f64>,
    pub(crate) b: DVector<f64>,
    pub(crate) free_qr: Option<PivotedQr>,
    pub(crate) c_k: DVector<f64>,
    /// Orthonormal basis `Q` of the row space of the reduced constraints;
    /// the affine set is `{x : Q' x = Q' x_p}`.
    pub(crate) row_q: DMatrix<f64>,
    pub(crate) x_p: DVector<f64>,
    pub(crate) a_red: DMatrix<f64>,
    pub(crate) b_red: DVector<f64>,
    pub(crate) unbounded_free: bool,
    pub(crate) report: PresolveReport,
}

impl Presolved {
    pub(crate) fn new(prog: &ConicProgram) -> Result<Self, SolveStatus> {
        let n = prog.n_vars();
        let mut report = PresolveReport::default();

        // zero and duplicate rows
        let scale_b = prog.b.amax().max(1.0);
        let mut keep = Vec::with_capacity(prog.a.nrows());
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
        for i in 0..prog.a.nrows() {
            let row = prog.a.row(i);
            if row.iter().all(|&v| v == 0.0) {
                if prog.b[i].abs() > 1e-12 * scale_b {
                    return Err(SolveStatus::Infeasible);
                }
                report.zero_rows += 1;
                continue;
            }
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            if let Some(&prev) = seen.get(&key) {
                if prog.b[prev] != prog.b[i] {
                    return Err(SolveStatus::Infeasible);
                }
                report.duplicate_rows += 1;
                continue;
            }
            seen.insert(key, i);
            keep.push(i);
        }
        let a = prog.a.select_rows(keep.iter());
        let b = prog.b.select_rows(keep.iter());
        let m = keep.len();

        let mut free_idx = Vec::new();
        let mut cone_idx = Vec::new();
        let mut blocks = Vec::new();
        for (off, cone) in prog.blocks() {
            match cone {
                Cone::Free(d) => free_idx.extend(off..off + d),
                Cone::NonNegative(d) => {
                    blocks.push(Block::NonNeg { off: cone_idx.len(), dim: d });
                    cone_idx.extend(off..off + d);
                }
                Cone::RotatedSecondOrder(d) => {
                    blocks.push(Block::Rsoc { off: cone_idx.len(), dim: d });
                    cone_idx.extend(off..off + d);
                }
            }
        }
        let a_f = a.select_columns(free_idx.iter());
        let a_k = a.select_columns(cone_idx.iter());
        let c_f = prog.c.select_rows(free_idx.iter());
        let mut c_k = prog.c.select_rows(cone_idx.iter());

        let mut unbounded_free = false;
        let (a_red, b_red, free_qr) = if free_idx.is_empty() || m == 0 {
            if c_f.amax() > 0.0 {
                unbounded_free = true;
            }
            (a_k.clone(), b.clone(), None)
        } else {
            let qr = PivotedQr::new(&a_f, RANK_TOL);
            let u = &qr.q;
            // cost transfer: y = U s with R11' s = (P' c_F)[..r]
            let pc = DVector::from_iterator(qr.rank, qr.perm[..qr.rank].iter().map(|&j| c_f[j]));
            let s = qr.solve_upper_tr(&pc);
            let y = u * &s;
            let back = a_f.tr_mul(&y);
            if (back - &c_f).amax() > 1e-9 * c_f.amax().max(1.0) {
                unbounded_free = true;
            }
            c_k -= a_k.tr_mul(&y);
            let a_red = &a_k - u * u.tr_mul(&a_k);
            let b_red = &b - u * u.tr_mul(&b);
            (a_red, b_red, Some(qr))
        };
        let r_f = free_qr.as_ref().map_or(0, |q| q.rank);

        let nk = cone_idx.len();
        let (row_q, x_p) = if nk == 0 {
            (DMatrix::zeros(0, 0), DVector::zeros(0))
        } else if a_red.nrows() == 0 {
            (DMatrix::zeros(nk, 0), DVector::zeros(nk))
        } else {
            let qr = PivotedQr::new(&a_red.transpose(), RANK_TOL);
            let rhs = DVector::from_iterator(qr.rank, qr.perm[..qr.rank].iter().map(|&i| b_red[i]));
            let s = qr.solve_upper_tr(&rhs);
            (qr.q.clone(), &qr.q * s)
        };
        let r_k = row_q.ncols();
        report.dependent_rows = m.saturating_sub(r_f + r_k);

        if nk > 0 && a_red.nrows() > 0 {
            let res = (&a_red * &x_p - &b_red).amax();
            if res > 1e-9 * b.amax().max(1.0) {
                return Err(SolveStatus::Infeasible);
            }
        } else if nk == 0 && m > 0 {
            let res = b_red.amax();
            if res > 1e-9 * b.amax().max(1.0) {
                return Err(SolveStatus::Infeasible);
            }
        }

        Ok(Self {
            n,
            free_idx,
            cone_idx,
            blocks,
            a_k,
            b,
            free_qr,
            c_k,
            row_q,
            x_p,
            a_red,
            b_red,
            unbounded_free,
            report,
        })
    }

    pub(crate) fn eq_residual(&self, z: &DVector<f64>) -> f64 {
        if self.a_red.nrows() == 0 {
            return 0.0;
        }
        let mut r = self.b_red.clone();
        r.gemv(1.0, &self.a_red, z, -1.0);
        r.amax()
    }

    /// Full variable vector from the cone part.
    pub(crate) fn expand(&self, zk: &DVector<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(self.n);
        for (k, &j) in self.cone_idx.iter().enumerate() {
            z[j] = zk[k];
        }
        if let Some(qr) = &self.free_qr {
            let mut rhs = self.b.clone();
            if !self.cone_idx.is_empty() {
                rhs.gemv(-1.0, &self.a_k, zk, 1.0);
            }
            let s = qr.q.tr_mul(&rhs);
            let xf = qr.solve_upper(&s);
            for (i, &p) in qr.perm[..qr.rank].iter().enumerate() {
                z[self.free_idx[p]] = xf[i];
            }
        }
        z
    }
}

