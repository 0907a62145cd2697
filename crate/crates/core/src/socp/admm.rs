//! Operator-splitting reference solver.
//!
//! After the shared presolve, `min c'z, z in {A z = b} ∩ K` is solved by
//! Douglas-Rachford splitting between the affine set (an exact orthogonal
//! projection, factored once) and the cone product, with over-relaxation
//! and residual-balancing step-size updates. Iterates `z` are always
//! exactly in the cone.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::presolve::{finish, Block, Presolved};
use super::qr::PivotedQr;
use super::{ConicProgram, ConicSolution, ConicSolver, PresolveReport, SocpError, SolveStatus, SolverSettings};

const ALPHA: f64 = 1.6;
const RHO_INIT: f64 = 1.0;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const ADAPT_EVERY: usize = 50;
const STALL_WINDOW: usize = 2000;

#[derive(Debug, Clone, Copy, Default)]
pub struct AdmmSolver;

impl ConicSolver for AdmmSolver {
    fn solve(&self, prog: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution, SocpError> {
        let start = Instant::now();
        prog.validate()?;
        let pre = match Presolved::new(prog) {
            Ok(p) => p,
            Err(status) => {
                return Ok(finish(prog, DVector::zeros(prog.n_vars()), status, 0, start, PresolveReport::default()))
            }
        };
        let proj = Projector::new(&pre);
        let (zk, status, iterations) = proj.iterate(&pre, settings);
        let z = pre.expand(&zk);
        let mut status = status;
        if status == SolveStatus::Optimal && pre.unbounded_free {
            status = SolveStatus::Unbounded;
        }
        Ok(finish(prog, z, status, iterations, start, pre.report))
    }
}

/// Projection onto the affine set, stored in whichever of the row-space or
/// nullspace forms has fewer columns.
struct Projector {
    basis: DMatrix<f64>,
    nullspace_form: bool,
}

impl Projector {
    fn new(pre: &Presolved) -> Self {
        let nk = pre.x_p.len();
        let r = pre.row_q.ncols();
        if 2 * r > nk {
            let proj = DMatrix::identity(nk, nk) - &pre.row_q * pre.row_q.transpose();
            let null = PivotedQr::new(&proj, 1e-8);
            Self { basis: null.q, nullspace_form: true }
        } else {
            Self { basis: pre.row_q.clone(), nullspace_form: false }
        }
    }

    fn project_affine(&self, pre: &Presolved, v: &DVector<f64>, tmp: &mut DVector<f64>, out: &mut DVector<f64>) {
        if self.nullspace_form {
            tmp.gemv_tr(1.0, &self.basis, v, 0.0);
            out.copy_from(&pre.x_p);
            out.gemv(1.0, &self.basis, tmp, 1.0);
        } else {
            tmp.gemv_tr(1.0, &self.basis, v, 0.0);
            out.copy_from(v);
            out.gemv(-1.0, &self.basis, tmp, 1.0);
            *out += &pre.x_p;
        }
    }

    fn project_cone(pre: &Presolved, v: &mut DVector<f64>) {
        for blk in &pre.blocks {
            match *blk {
                Block::NonNeg { off, dim } => {
                    for x in v.rows_mut(off, dim).iter_mut() {
                        if *x < 0.0 {
                            *x = 0.0;
                        }
                    }
                }
                Block::Rsoc { off, dim } => project_rsoc(&mut v.as_mut_slice()[off..off + dim]),
            }
        }
    }

    fn iterate(&self, pre: &Presolved, s: &SolverSettings) -> (DVector<f64>, SolveStatus, usize) {
        let nk = pre.cone_idx.len();
        if nk == 0 {
            return (DVector::zeros(0), SolveStatus::Optimal, 0);
        }
        let dim_tmp = self.basis.ncols();
        let mut tmp = DVector::zeros(dim_tmp);
        let mut v = DVector::zeros(nk);
        let mut x = DVector::zeros(nk);
        let mut z = pre.x_p.clone();
        Self::project_cone(pre, &mut z);
        let mut z_old = z.clone();
        let mut w = DVector::<f64>::zeros(nk);
        let mut rho = RHO_INIT;
        let c_norm = pre.c_k.amax();
        let mut stall_ref: Option<(DVector<f64>, DVector<f64>)> = None;

        for k in 1..=s.max_iter {
            // x = Proj_affine(z - w - c / rho)
            v.copy_from(&z);
            v -= &w;
            v.axpy(-1.0 / rho, &pre.c_k, 1.0);
            self.project_affine(pre, &v, &mut tmp, &mut x);
            // relaxed point, cone step, dual update
            z_old.copy_from(&z);
            // v <- alpha x + (1 - alpha) z_old + w
            v.copy_from(&x);
            v.axpy(1.0 - ALPHA, &z_old, ALPHA);
            let xh = v.clone();
            v += &w;
            z.copy_from(&v);
            Self::project_cone(pre, &mut z);
            w += &xh;
            w -= &z;

            let mut r_p: f64 = 0.0;
            let mut r_d: f64 = 0.0;
            let mut nx: f64 = 0.0;
            let mut nz: f64 = 0.0;
            let mut nw: f64 = 0.0;
            for i in 0..nk {
                r_p = r_p.max((x[i] - z[i]).abs());
                r_d = r_d.max((z[i] - z_old[i]).abs());
                nx = nx.max(x[i].abs());
                nz = nz.max(z[i].abs());
                nw = nw.max(w[i].abs());
            }
            r_d *= rho;
            let tol_p = s.eps_abs + s.eps_rel * nx.max(nz);
            let tol_d = s.eps_abs + s.eps_rel * c_norm.max(rho * nw);
            if !(r_p.is_finite() && r_d.is_finite()) {
                return (z, SolveStatus::MaxIter, k);
            }
            if r_p <= tol_p && r_d <= tol_d && pre.eq_residual(&z) <= s.eps_abs {
                return (z, SolveStatus::Optimal, k);
            }
            if nz > 1e12 {
                return (z, SolveStatus::Unbounded, k);
            }
            if k % STALL_WINDOW == 0 {
                // infeasible problems settle at a fixed nonzero gap x - z
                // while unbounded problems drift along a recession direction
                let d = &x - &z;
                if let Some((prev_d, prev_z)) = &stall_ref {
                    let dn = d.amax();
                    if dn > 1e3 * tol_p && (&d - prev_d).amax() <= 1e-7 * dn {
                        let drift = (&z - prev_z).amax();
                        let descent = pre.c_k.dot(&z) < pre.c_k.dot(prev_z);
                        let status = if drift > 1e-6 * nz.max(1.0) && descent {
                            SolveStatus::Unbounded
                        } else {
                            SolveStatus::Infeasible
                        };
                        return (z, status, k);
                    }
                }
                stall_ref = Some((d, z.clone()));
            }
            if k % ADAPT_EVERY == 0 {
                let rel_p = r_p / nx.max(nz).max(1e-12);
                let rel_d = r_d / (rho * nw).max(c_norm).max(1e-12);
                if rel_d > 0.0 && rel_p > 0.0 {
                    let ratio = (rel_p / rel_d).sqrt();
                    if !(0.2..=5.0).contains(&ratio) {
                        let new_rho = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
                        w *= rho / new_rho;
                        rho = new_rho;
                    }
                }
            }
        }
        (z, SolveStatus::MaxIter, s.max_iter)
    }

}

/// Euclidean projection onto `2 w1 w2 >= |w3..|^2, w1, w2 >= 0`, via the
/// orthogonal map `t = (w1 + w2)/sqrt2, s = (w1 - w2)/sqrt2` onto the
/// standard cone `t >= |(s, w3..)|`.
pub(crate) fn project_rsoc(w: &mut [f64]) {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let t = h * (w[0] + w[1]);
    let s = h * (w[0] - w[1]);
    let tail_sq: f64 = w[2..].iter().map(|v| v * v).sum();
    let norm = (s * s + tail_sq).sqrt();
    if norm <= t {
        return;
    }
    if norm <= -t {
        w.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let a = 0.5 * (t + norm);
    let f = a / norm;
    let s2 = s * f;
    w[0] = h * (a + s2);
    w[1] = h * (a - s2);
    for v in &mut w[2..] {
        *v *= f;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::socp::{cone_violation, Cone};

    #[test]
    fn rsoc_projection_lands_on_boundary() {
        let mut w = [1.0, 1.0, 3.0, -1.0];
        project_rsoc(&mut w);
        let gap = 2.0 * w[0] * w[1] - w[2] * w[2] - w[3] * w[3];
        assert!(gap.abs() < 1e-14);
        let mut inside = [2.0, 1.0, 1.0];
        project_rsoc(&mut inside);
        assert_eq!(inside, [2.0, 1.0, 1.0]);
        let mut polar = [-1.0, -1.0, 0.1];
        project_rsoc(&mut polar);
        assert_eq!(polar, [0.0, 0.0, 0.0]);
        assert_eq!(cone_violation(Cone::RotatedSecondOrder(4), &w), 0.0);
    }

    #[test]
    fn rsoc_projection_is_nearest_point() {
        // compare against a brute-force search over boundary points
        let p = [0.3, -0.2, 0.7];
        let mut w = p;
        project_rsoc(&mut w);
        let d_proj: f64 = w.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum();
        let mut best = f64::INFINITY;
        for i in 0..400 {
            for j in -400..=400 {
                let a = i as f64 * 0.005;
                let c = j as f64 * 0.005;
                // boundary: b = c^2 / (2a)
                if a == 0.0 {
                    continue;
                }
                let bb = c * c / (2.0 * a);
                let d = (a - p[0]).powi(2) + (bb - p[1]).powi(2) + (c - p[2]).powi(2);
                best = best.min(d);
            }
        }
        assert!(d_proj <= best + 1e-9);
        assert!(d_proj >= best - 1e-3);
    }

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn lp_on_simplex() {
        let prog = ConicProgram {
            c: DVector::from_vec(vec![1.0, 0.0]),
            a: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            b: DVector::from_vec(vec![1.0]),
            cones: vec![Cone::NonNegative(2)],
        };
        let sol = AdmmSolver.solve(&prog, &settings()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.objective.abs() < 1e-7);
        assert!((sol.z[1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn rotated_cone_minimum() {
        // 2 w1 w2 >= 4 with w1 = w2 gives w1 = sqrt2
        let prog = ConicProgram {
            c: DVector::from_vec(vec![1.0, 1.0, 0.0]),
            a: DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 1.0, 1.0, -1.0, 0.0]),
            b: DVector::from_vec(vec![2.0, 0.0]),
            cones: vec![Cone::RotatedSecondOrder(3)],
        };
        let sol = AdmmSolver.solve(&prog, &settings()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 2.0 * 2f64.sqrt()).abs() < 1e-6, "{}", sol.objective);
        assert_eq!(sol.cone_violation, 0.0);
    }

    #[test]
    fn least_squares_through_free_variables() {
        // min t  s.t.  (t, 1/2, M x - d) in rsoc, x free; optimum |M x* - d|^2
        let m = DMatrix::from_fn(6, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.5 + 0.1 * j as f64);
        let d = DVector::from_fn(6, |i, _| (i as f64).sin());
        let x_star = m.clone().svd(true, true).solve(&d, 1e-12).unwrap();
        let best = (&m * &x_star - &d).norm_squared();
        // vars: x (3 free), then t, h, e (6)
        let nv = 3 + 2 + 6;
        let mut a = DMatrix::zeros(7, nv);
        let mut b = DVector::zeros(7);
        for i in 0..6 {
            for j in 0..3 {
                a[(i, j)] = m[(i, j)];
            }
            a[(i, 5 + i)] = -1.0;
            b[i] = d[i];
        }
        a[(6, 4)] = 1.0;
        b[6] = 0.5;
        let mut c = DVector::zeros(nv);
        c[3] = 1.0;
        let prog = ConicProgram { c, a, b, cones: vec![Cone::Free(3), Cone::RotatedSecondOrder(8)] };
        let sol = AdmmSolver.solve(&prog, &settings()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - best).abs() < 1e-6, "{} vs {best}", sol.objective);
        assert!(sol.eq_residual < 1e-8);
        let x = sol.z.rows(0, 3).into_owned();
        assert!((x - x_star).amax() < 1e-4);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let infeasible = ConicProgram {
            c: DVector::from_vec(vec![1.0, 1.0]),
            a: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            b: DVector::from_vec(vec![-1.0]),
            cones: vec![Cone::NonNegative(2)],
        };
        let s = AdmmSolver.solve(&infeasible, &settings()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);

        let unbounded = ConicProgram {
            c: DVector::from_vec(vec![-1.0, 0.0]),
            a: DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            b: DVector::from_vec(vec![0.0]),
            cones: vec![Cone::NonNegative(2)],
        };
        let s = AdmmSolver.solve(&unbounded, &settings()).unwrap();
        assert_eq!(s.status, SolveStatus::Unbounded);

        let inconsistent = ConicProgram {
            c: DVector::from_vec(vec![0.0, 0.0]),
            a: DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]),
            b: DVector::from_vec(vec![1.0, 1.0]),
            cones: vec![Cone::NonNegative(2)],
        };
        let s = AdmmSolver.solve(&inconsistent, &settings()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn duplicate_and_zero_rows_are_dropped() {
        let prog = ConicProgram {
            c: DVector::from_vec(vec![1.0, 2.0]),
            a: DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0]),
            b: DVector::from_vec(vec![1.0, 0.0, 1.0]),
            cones: vec![Cone::NonNegative(2)],
        };
        let sol = AdmmSolver.solve(&prog, &settings()).unwrap();
        assert_eq!(sol.presolve.zero_rows, 1);
        assert_eq!(sol.presolve.duplicate_rows, 1);
        assert!((sol.objective - 1.0).abs() < 1e-7);
    }
}
