//! Rank-revealing column-pivoted QR by Gram-Schmidt with
//! re-orthogonalization.

use nalgebra::{DMatrix, DVector};

/// `M[:, perm] ~= Q * R` truncated at the numerical rank.
///
/// `q` is `nrows x rank` with orthonormal columns, `r` is `rank x ncols`
/// upper trapezoidal in the pivoted column order.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub perm: Vec<usize>,
    pub rank: usize,
}

impl PivotedQr {
    /// Columns whose residual norm falls below `rel_tol` times the largest
    /// initial column norm are treated as dependent.
    pub fn new(m: &DMatrix<f64>, rel_tol: f64) -> Self {
        let (nr, nc) = m.shape();
        let mut work = m.clone();
        let mut perm: Vec<usize> = (0..nc).collect();
        let mut norms: Vec<f64> = (0..nc).map(|j| work.column(j).norm_squared()).collect();
        let scale = norms.iter().copied().fold(0.0, f64::max).sqrt();
        let kmax = nr.min(nc);
        let mut q = DMatrix::<f64>::zeros(nr, kmax);
        let mut r = DMatrix::<f64>::zeros(kmax, nc);
        let mut rank = 0;
        if scale == 0.0 {
            return Self { q: q.columns(0, 0).into_owned(), r: r.rows(0, 0).into_owned(), perm, rank };
        }
        for k in 0..kmax {
            // pick the column with the largest remaining norm; recompute the
            // candidate exactly to avoid downdating drift
            let (mut best, mut best_norm) = (k, -1.0);
            for j in k..nc {
                if norms[j] > best_norm {
                    best_norm = norms[j];
                    best = j;
                }
            }
            if best != k {
                work.swap_columns(k, best);
                r.swap_columns(k, best);
                norms.swap(k, best);
                perm.swap(k, best);
            }
            let mut v = work.column(k).clone_owned();
            // two passes of classical Gram-Schmidt against the accepted basis
            for _ in 0..2 {
                if rank > 0 {
                    let qk = q.columns(0, rank);
                    let coef = qk.tr_mul(&v);
                    v -= qk * &coef;
                    for (i, c) in coef.iter().enumerate() {
                        r[(i, k)] += c;
                    }
                }
            }
            let nv = v.norm();
            if nv <= rel_tol * scale {
                break;
            }
            v /= nv;
            r[(k, k)] = nv;
            q.set_column(k, &v);
            rank += 1;
            // project the new direction out of the remaining columns
            for j in (k + 1)..nc {
                let c = v.dot(&work.column(j));
                r[(k, j)] = c;
                work.column_mut(j).axpy(-c, &v, 1.0);
                norms[j] = work.column(j).norm_squared();
            }
        }
        Self {
            q: q.columns(0, rank).into_owned(),
            r: r.rows(0, rank).into_owned(),
            perm,
            rank,
        }
    }

    /// Solves `R11 s = rhs` (upper triangular, leading `rank` block).
    pub fn solve_upper(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let k = self.rank;
        let mut s = DVector::zeros(k);
        for i in (0..k).rev() {
            let mut acc = rhs[i];
            for j in (i + 1)..k {
                acc -= self.r[(i, j)] * s[j];
            }
            s[i] = acc / self.r[(i, i)];
        }
        s
    }

    /// Solves `R11^T s = rhs` (lower triangular).
    pub fn solve_upper_tr(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let k = self.rank;
        let mut s = DVector::zeros(k);
        for i in 0..k {
            let mut acc = rhs[i];
            for j in 0..i {
                acc -= self.r[(j, i)] * s[j];
            }
            s[i] = acc / self.r[(i, i)];
        }
        s
    }
}
