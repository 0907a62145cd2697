//! Primal-dual interior-point solver with Nesterov-Todd scaling and
//! Mehrotra predictor-corrector steps.
//!
//! Works on the presolved cone variables with the orthonormal equality
//! system `Q' x = Q' x_p`. Rotated cone blocks are mapped to standard
//! second-order cones by the involution
//! `(w1, w2) -> ((w1 + w2)/sqrt2, (w1 - w2)/sqrt2)`, which is its own
//! inverse and transpose.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};

use super::presolve::{finish, Block, Presolved};
use super::{ConicProgram, ConicSolution, ConicSolver, PresolveReport, SocpError, SolveStatus, SolverSettings};

const STEP_FRACTION: f64 = 0.99;
const MAX_IPM_ITER: usize = 200;
/// The duality gap is driven this much below `eps_abs` so that active cone
/// constraints end up tight to working precision.
const GAP_MARGIN: f64 = 1e-3;
const DIVERGENCE: f64 = 1e10;

#[derive(Debug, Clone, Copy, Default)]
pub struct IpmSolver;

impl ConicSolver for IpmSolver {
    fn solve(&self, prog: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution, SocpError> {
        let start = Instant::now();
        prog.validate()?;
        let pre = match Presolved::new(prog) {
            Ok(p) => p,
            Err(status) => {
                return Ok(finish(prog, DVector::zeros(prog.n_vars()), status, 0, start, PresolveReport::default()))
            }
        };
        let (zk, mut status, iterations) = Ipm::new(&pre).run(settings)?;
        let z = pre.expand(&zk);
        if status == SolveStatus::Optimal && pre.unbounded_free {
            status = SolveStatus::Unbounded;
        }
        Ok(finish(prog, z, status, iterations, start, pre.report))
    }
}

/// Involution mapping rotated blocks to standard ones (and back).
fn rotate(blocks: &[Block], v: &mut [f64]) {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for blk in blocks {
        if let Block::Rsoc { off, .. } = *blk {
            let (a, b) = (v[off], v[off + 1]);
            v[off] = h * (a + b);
            v[off + 1] = h * (a - b);
        }
    }
}

/// Per-block Nesterov-Todd scaling `W` with `W^-1 x = W s = lambda`.
enum BlockScaling {
    Orthant(Vec<f64>),
    Soc { eta: f64, w: Vec<f64> },
}

struct Ipm<'a> {
    pre: &'a Presolved,
    /// Equality matrix `Q' T` (rows orthonormal).
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
    degree: f64,
}

fn soc_det(v: &[f64]) -> f64 {
    v[0] * v[0] - v[1..].iter().map(|x| x * x).sum::<f64>()
}

/// `W_bar v` for the hyperbolic scaling point `w` (`w' J w = 1`).
fn wbar_apply(w: &[f64], v: &[f64], out: &mut [f64]) {
    let w0 = w[0];
    let dot: f64 = w[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum();
    out[0] = w0 * v[0] + dot;
    let k = v[0] + dot / (1.0 + w0);
    for i in 1..v.len() {
        out[i] = v[i] + k * w[i];
    }
}

/// `W_bar^-1 v = J W_bar J v`.
fn wbar_inv_apply(w: &[f64], v: &[f64], out: &mut [f64]) {
    let w0 = w[0];
    let dot: f64 = w[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum();
    out[0] = w0 * v[0] - dot;
    let k = -v[0] + dot / (1.0 + w0);
    for i in 1..v.len() {
        out[i] = v[i] + k * w[i];
    }
}

impl<'a> Ipm<'a> {
    fn new(pre: &'a Presolved) -> Self {
        let mut qt = pre.row_q.clone();
        for mut col in qt.column_iter_mut() {
            rotate(&pre.blocks, col.as_mut_slice());
        }
        let a = qt.transpose();
        let b = pre.row_q.tr_mul(&pre.x_p);
        let mut c = pre.c_k.clone();
        rotate(&pre.blocks, c.as_mut_slice());
        let degree = pre
            .blocks
            .iter()
            .map(|blk| match *blk {
                Block::NonNeg { dim, .. } => dim as f64,
                Block::Rsoc { .. } => 1.0,
            })
            .sum();
        Self { pre, a, b, c, degree }
    }

    fn blocks(&self) -> &[Block] {
        &self.pre.blocks
    }

    /// Smallest "eigenvalue" of `v` with respect to the cone.
    fn min_eig(&self, v: &DVector<f64>) -> f64 {
        let mut m = f64::INFINITY;
        for blk in self.blocks() {
            match *blk {
                Block::NonNeg { off, dim } => {
                    for i in off..off + dim {
                        m = m.min(v[i]);
                    }
                }
                Block::Rsoc { off, dim } => {
                    let tail = v.rows(off + 1, dim - 1).norm();
                    m = m.min(v[off] - tail);
                }
            }
        }
        m
    }

    fn add_identity(&self, v: &mut DVector<f64>, t: f64) {
        for blk in self.blocks() {
            match *blk {
                Block::NonNeg { off, dim } => {
                    for i in off..off + dim {
                        v[i] += t;
                    }
                }
                Block::Rsoc { off, .. } => v[off] += t,
            }
        }
    }

    fn make_interior(&self, v: &mut DVector<f64>) {
        let m = self.min_eig(v);
        if m < 1e-8 * v.amax().max(1.0) {
            self.add_identity(v, 1.0 - m);
        }
    }

    /// Largest `alpha` with `v + alpha d` in the cone.
    fn max_step(&self, v: &DVector<f64>, d: &DVector<f64>) -> f64 {
        let mut alpha = f64::INFINITY;
        for blk in self.blocks() {
            match *blk {
                Block::NonNeg { off, dim } => {
                    for i in off..off + dim {
                        if d[i] < 0.0 {
                            alpha = alpha.min(-v[i] / d[i]);
                        }
                    }
                }
                Block::Rsoc { off, dim } => {
                    let x = &v.as_slice()[off..off + dim];
                    let y = &d.as_slice()[off..off + dim];
                    alpha = alpha.min(soc_step(x, y));
                }
            }
        }
        alpha
    }

    fn scaling(&self, x: &DVector<f64>, s: &DVector<f64>) -> Option<Vec<BlockScaling>> {
        let mut out = Vec::with_capacity(self.blocks().len());
        for blk in self.blocks() {
            match *blk {
                Block::NonNeg { off, dim } => {
                    let d: Vec<f64> = (off..off + dim).map(|i| (x[i] / s[i]).sqrt()).collect();
                    if d.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                        return None;
                    }
                    out.push(BlockScaling::Orthant(d));
                }
                Block::Rsoc { off, dim } => {
                    let xb = &x.as_slice()[off..off + dim];
                    let sb = &s.as_slice()[off..off + dim];
                    let (dx, ds) = (soc_det(xb), soc_det(sb));
                    if !(dx > 0.0 && ds > 0.0 && xb[0] > 0.0 && sb[0] > 0.0) {
                        return None;
                    }
                    let (nx, ns) = (dx.sqrt(), ds.sqrt());
                    let eta = (dx / ds).sqrt().sqrt();
                    let xbar: Vec<f64> = xb.iter().map(|v| v / nx).collect();
                    let sbar: Vec<f64> = sb.iter().map(|v| v / ns).collect();
                    let dot: f64 = xbar.iter().zip(&sbar).map(|(a, b)| a * b).sum();
                    let gamma = ((1.0 + dot) / 2.0).sqrt();
                    let mut w = vec![0.0; dim];
                    w[0] = (xbar[0] + sbar[0]) / (2.0 * gamma);
                    for i in 1..dim {
                        w[i] = (xbar[i] - sbar[i]) / (2.0 * gamma);
                    }
                    out.push(BlockScaling::Soc { eta, w });
                }
            }
        }
        Some(out)
    }

    /// `W v` (or `W^-1 v` when `inverse`).
    fn apply_w(&self, sc: &[BlockScaling], v: &[f64], out: &mut [f64], inverse: bool) {
        for (blk, bs) in self.blocks().iter().zip(sc) {
            let (off, dim) = match *blk {
                Block::NonNeg { off, dim } | Block::Rsoc { off, dim } => (off, dim),
            };
            match bs {
                BlockScaling::Orthant(d) => {
                    for k in 0..dim {
                        out[off + k] = if inverse { v[off + k] / d[k] } else { v[off + k] * d[k] };
                    }
                }
                BlockScaling::Soc { eta, w } => {
                    let (src, dst) = (&v[off..off + dim], &mut out[off..off + dim]);
                    if inverse {
                        wbar_inv_apply(w, src, dst);
                        dst.iter_mut().for_each(|x| *x /= eta);
                    } else {
                        wbar_apply(w, src, dst);
                        dst.iter_mut().for_each(|x| *x *= eta);
                    }
                }
            }
        }
    }

    /// Jordan product `u o v`.
    fn jordan(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for blk in self.blocks() {
            match *blk {
                Block::NonNeg { off, dim } => {
                    for i in off..off + dim {
                        out[i] = u[i] * v[i];
                    }
                }
                Block::Rsoc { off, dim } => {
                    out[off] = (off..off + dim).map(|i| u[i] * v[i]).sum();
                    for i in off + 1..off + dim {
                        out[i] = u[off] * v[i] + v[off] * u[i];
                    }
                }
            }
        }
        out
    }

    /// Solves `lambda o u = r` for `u`.
    fn jordan_div(&self, lambda: &[f64], r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; r.len()];
        for blk in self.blocks() {
            match *blk {
                Block::NonNeg { off, dim } => {
                    for i in off..off + dim {
                        out[i] = r[i] / lambda[i];
                    }
                }
                Block::Rsoc { off, dim } => {
                    let l = &lambda[off..off + dim];
                    let rr = &r[off..off + dim];
                    let det = soc_det(l);
                    let dot: f64 = l[1..].iter().zip(&rr[1..]).map(|(a, b)| a * b).sum();
                    let u0 = (l[0] * rr[0] - dot) / det;
                    out[off] = u0;
                    for k in 1..dim {
                        out[off + k] = (rr[k] - u0 * l[k]) / l[0];
                    }
                }
            }
        }
        out
    }

    fn run(&self, st: &SolverSettings) -> Result<(DVector<f64>, SolveStatus, usize), SocpError> {
        let nk = self.c.len();
        if nk == 0 {
            return Ok((DVector::zeros(0), SolveStatus::Optimal, 0));
        }
        let r = self.a.nrows();
        let mut x = self.a.tr_mul(&self.b);
        self.make_interior(&mut x);
        let mut y = &self.a * &self.c;
        let mut s = &self.c - self.a.tr_mul(&y);
        self.make_interior(&mut s);
        let c_norm = self.c.amax();
        let mut e = DVector::zeros(nk);
        self.add_identity(&mut e, 1.0);
        let max_iter = st.max_iter.min(MAX_IPM_ITER);
        let mut best: Option<(DVector<f64>, f64)> = None;
        let mut prev_gap = f64::INFINITY;
        let mut done = max_iter;

        for it in 0..=max_iter {
            let r_p = &self.b - &self.a * &x;
            let r_d = &self.c - self.a.tr_mul(&y) - &s;
            let gap = x.dot(&s);
            let pobj = self.c.dot(&x);
            let pres = r_p.amax();
            let dres = r_d.amax();
            let tol_d = st.eps_abs + st.eps_rel * c_norm;
            let tol_gap = st.eps_abs + st.eps_rel * pobj.abs();
            let eq_ok = |x: &DVector<f64>| self.original_residual(x) <= st.eps_abs;
            if pres <= 0.1 * st.eps_abs && dres <= tol_d && gap <= GAP_MARGIN * tol_gap && eq_ok(&x) {
                return Ok((self.to_rsoc(&x), SolveStatus::Optimal, it));
            }
            // keep the best loosely converged iterate in case progress stalls
            if pres <= 0.1 * st.eps_abs && dres <= tol_d && gap <= tol_gap && eq_ok(&x) {
                if gap > 0.5 * prev_gap {
                    return Ok((self.to_rsoc(&x), SolveStatus::Optimal, it));
                }
                if best.as_ref().is_none_or(|(_, g)| gap < *g) {
                    best = Some((x.clone(), gap));
                }
            }
            prev_gap = gap;
            if x.amax() > DIVERGENCE * (1.0 + self.b.amax()) && pobj < 0.0 {
                return Ok((self.to_rsoc(&x), SolveStatus::Unbounded, it));
            }
            if y.amax() > DIVERGENCE * (1.0 + c_norm) && self.b.dot(&y) > 0.0 {
                return Ok((self.to_rsoc(&x), SolveStatus::Infeasible, it));
            }
            if it == max_iter {
                break;
            }
            let Some(sc) = self.scaling(&x, &s) else {
                done = it;
                break;
            };
            let mut lambda = vec![0.0; nk];
            self.apply_w(&sc, x.as_slice(), &mut lambda, true);

            // G = A W, row by row
            let mut g = DMatrix::zeros(r, nk);
            let mut row = vec![0.0; nk];
            for i in 0..r {
                let src: Vec<f64> = self.a.row(i).iter().copied().collect();
                self.apply_w(&sc, &src, &mut row, false);
                for (j, v) in row.iter().enumerate() {
                    g[(i, j)] = *v;
                }
            }
            let m = &g * g.transpose();
            let Some(chol) = factor(m) else {
                return Err(SocpError::NumericalBreakdown { iteration: it, detail: "normal matrix not positive definite".into() })
            };
            let mut w_rd = vec![0.0; nk];
            self.apply_w(&sc, r_d.as_slice(), &mut w_rd, false);
            let solve = |rc: &[f64]| -> (DVector<f64>, DVector<f64>, DVector<f64>) {
                let u = self.jordan_div(&lambda, rc);
                let t = DVector::from_iterator(nk, u.iter().zip(&w_rd).map(|(a, b)| a - b));
                let rhs = &r_p - &g * &t;
                let mut dy = chol.solve(&rhs);
                let res = &rhs - &g * (g.tr_mul(&dy));
                dy += chol.solve(&res);
                let inner = t + g.tr_mul(&dy);
                let mut dx = vec![0.0; nk];
                self.apply_w(&sc, inner.as_slice(), &mut dx, false);
                let ds = &r_d - self.a.tr_mul(&dy);
                (DVector::from_vec(dx), dy, ds)
            };

            // predictor
            let ll = self.jordan(&lambda, &lambda);
            let rc_aff: Vec<f64> = ll.iter().map(|v| -v).collect();
            let (dx_a, _dy_a, ds_a) = solve(&rc_aff);
            let a_aff = 1f64.min(self.max_step(&x, &dx_a)).min(self.max_step(&s, &ds_a));
            let gap_aff = (&x + &dx_a * a_aff).dot(&(&s + &ds_a * a_aff));
            let mu = gap / self.degree;
            let sigma = (gap_aff / gap).clamp(0.0, 1.0).powi(3);

            // corrector
            let mut wi_dx = vec![0.0; nk];
            let mut w_ds = vec![0.0; nk];
            self.apply_w(&sc, dx_a.as_slice(), &mut wi_dx, true);
            self.apply_w(&sc, ds_a.as_slice(), &mut w_ds, false);
            let cross = self.jordan(&wi_dx, &w_ds);
            let rc: Vec<f64> = (0..nk).map(|i| -ll[i] - cross[i] + sigma * mu * e[i]).collect();
            let (dx, dy, ds) = solve(&rc);
            let step = (STEP_FRACTION * self.max_step(&x, &dx).min(self.max_step(&s, &ds))).min(1.0);
            if !(step.is_finite() && step > 1e-12) {
                done = it;
                break;
            }
            x += &dx * step;
            y += &dy * step;
            s += &ds * step;
        }
        match best {
            Some((x, _)) => Ok((self.to_rsoc(&x), SolveStatus::Optimal, done)),
            None => Ok((self.to_rsoc(&x), SolveStatus::MaxIter, done)),
        }
    }

    /// Residual of the presolved constraints in their original scaling.
    fn original_residual(&self, x: &DVector<f64>) -> f64 {
        self.pre.eq_residual(&self.to_rsoc(x))
    }

    fn to_rsoc(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut z = x.clone();
        rotate(self.blocks(), z.as_mut_slice());
        z
    }
}

fn factor(mut m: DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let scale = m.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut reg = 0.0;
    for _ in 0..6 {
        if let Some(ch) = Cholesky::new(m.clone()) {
            return Some(ch);
        }
        let next = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
        for i in 0..m.nrows() {
            m[(i, i)] += next - reg;
        }
        reg = next;
    }
    None
}

/// Largest step keeping `x + alpha d` in the standard second-order cone.
fn soc_step(x: &[f64], d: &[f64]) -> f64 {
    let a = soc_det(d);
    let b = 2.0 * (x[0] * d[0] - x[1..].iter().zip(&d[1..]).map(|(p, q)| p * q).sum::<f64>());
    let c = soc_det(x);
    let mut alpha = f64::INFINITY;
    if d[0] < 0.0 {
        alpha = -x[0] / d[0];
    }
    let disc = b * b - 4.0 * a * c;
    if a.abs() < 1e-300 {
        if b < 0.0 {
            alpha = alpha.min(-c / b);
        }
    } else if disc >= 0.0 {
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        for root in [q / a, if q != 0.0 { c / q } else { f64::INFINITY }] {
            if root > 0.0 {
                alpha = alpha.min(root);
            }
        }
    }
    alpha.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::socp::Cone;

    #[test]
    fn nt_scaling_maps_both_points_to_lambda() {
        let blocks = [Block::Rsoc { off: 0, dim: 3 }];
        let pre_x = DVector::from_vec(vec![2.0, 0.5, -0.7]);
        let pre_s = DVector::from_vec(vec![1.5, -0.3, 0.9]);
        let ipm = Ipm {
            pre: &dummy(&blocks),
            a: DMatrix::zeros(0, 3),
            b: DVector::zeros(0),
            c: DVector::zeros(3),
            degree: 1.0,
        };
        let sc = ipm.scaling(&pre_x, &pre_s).unwrap();
        let mut l1 = vec![0.0; 3];
        let mut l2 = vec![0.0; 3];
        ipm.apply_w(&sc, pre_x.as_slice(), &mut l1, true);
        ipm.apply_w(&sc, pre_s.as_slice(), &mut l2, false);
        for k in 0..3 {
            assert!((l1[k] - l2[k]).abs() < 1e-12, "{l1:?} {l2:?}");
        }
        // W^-1 W = I
        let mut back = vec![0.0; 3];
        ipm.apply_w(&sc, &l2, &mut back, true);
        for k in 0..3 {
            assert!((back[k] - pre_s[k]).abs() < 1e-12);
        }
        // Jordan division inverts the product
        let prod = ipm.jordan(&l1, &[0.3, 0.1, -0.2]);
        let u = ipm.jordan_div(&l1, &prod);
        assert!((u[0] - 0.3).abs() < 1e-12 && (u[1] - 0.1).abs() < 1e-12 && (u[2] + 0.2).abs() < 1e-12);
    }

    fn dummy(blocks: &[Block]) -> Presolved {
        let prog = ConicProgram {
            c: DVector::zeros(3),
            a: DMatrix::zeros(0, 3),
            b: DVector::zeros(0),
            cones: vec![Cone::RotatedSecondOrder(3)],
        };
        let mut p = Presolved::new(&prog).unwrap();
        p.blocks = blocks.to_vec();
        p
    }

    #[test]
    fn soc_step_hits_boundary() {
        let x = [1.0, 0.0, 0.0];
        let d = [0.0, 1.0, 0.0];
        assert!((soc_step(&x, &d) - 1.0).abs() < 1e-15);
        let d2 = [1.0, 0.5, 0.0];
        assert_eq!(soc_step(&x, &d2), f64::INFINITY);
    }

    fn lp() -> ConicProgram {
        ConicProgram {
            c: DVector::from_vec(vec![1.0, 0.0]),
            a: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            b: DVector::from_vec(vec![1.0]),
            cones: vec![Cone::NonNegative(2)],
        }
    }

    #[test]
    fn lp_on_simplex() {
        let sol = IpmSolver.solve(&lp(), &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.objective.abs() < 1e-8);
        assert!((sol.z[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rotated_cone_minimum() {
        let prog = ConicProgram {
            c: DVector::from_vec(vec![1.0, 1.0, 0.0]),
            a: DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 1.0, 1.0, -1.0, 0.0]),
            b: DVector::from_vec(vec![2.0, 0.0]),
            cones: vec![Cone::RotatedSecondOrder(3)],
        };
        let sol = IpmSolver.solve(&prog, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 2.0 * 2f64.sqrt()).abs() < 1e-8, "{}", sol.objective);
        let gap = 2.0 * sol.z[0] * sol.z[1] - sol.z[2] * sol.z[2];
        assert!(gap.abs() < 1e-7, "{gap}");
    }

    /// Least-norm residual with free variables and a rotated cone epigraph.
    fn least_squares(scale: f64) -> (ConicProgram, f64) {
        let m = DMatrix::from_fn(6, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.5 + 0.1 * j as f64);
        let d = DVector::from_fn(6, |i, _| (i as f64).sin());
        let x_star = m.clone().svd(true, true).solve(&d, 1e-12).unwrap();
        let best = (&m * &x_star - &d).norm_squared();
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
        c[3] = scale;
        (ConicProgram { c, a, b, cones: vec![Cone::Free(3), Cone::RotatedSecondOrder(8)] }, best * scale)
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let (prog, best) = least_squares(1.0);
        let sol = IpmSolver.solve(&prog, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - best).abs() < 1e-8, "{} vs {best}", sol.objective);
        assert!(sol.eq_residual < 1e-9);
    }

    #[test]
    fn objective_scaling_does_not_move_the_minimiser() {
        let (p1, _) = least_squares(1.0);
        let (p2, _) = least_squares(250.0);
        let s1 = IpmSolver.solve(&p1, &SolverSettings::default()).unwrap();
        let s2 = IpmSolver.solve(&p2, &SolverSettings::default()).unwrap();
        assert!((&s1.z - &s2.z).amax() < 1e-5);
    }

    #[test]
    fn agrees_with_splitting_solver() {
        use crate::socp::AdmmSolver;
        let st = SolverSettings::default();
        let (prog, _) = least_squares(1.0);
        for p in [prog, lp()] {
            let a = AdmmSolver.solve(&p, &st).unwrap();
            let b = IpmSolver.solve(&p, &st).unwrap();
            assert!((a.objective - b.objective).abs() <= 10.0 * st.eps_abs, "{} {}", a.objective, b.objective);
        }
    }

    #[test]
    fn infeasible_and_unbounded() {
        let st = SolverSettings::default();
        let infeasible = ConicProgram {
            c: DVector::from_vec(vec![1.0, 1.0]),
            a: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            b: DVector::from_vec(vec![-1.0]),
            cones: vec![Cone::NonNegative(2)],
        };
        assert_eq!(IpmSolver.solve(&infeasible, &st).unwrap().status, SolveStatus::Infeasible);
        let unbounded = ConicProgram {
            c: DVector::from_vec(vec![-1.0, 0.0]),
            a: DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
            b: DVector::from_vec(vec![0.0]),
            cones: vec![Cone::NonNegative(2)],
        };
        assert_eq!(IpmSolver.solve(&unbounded, &st).unwrap().status, SolveStatus::Unbounded);
    }
}
