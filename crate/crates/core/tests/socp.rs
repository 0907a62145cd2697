use ddpf::socp::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn simplex(c: &[f64]) -> ConicProgram {
    let k = c.len();
    ConicProgram {
        c: DVector::from_column_slice(c),
        a: DMatrix::from_element(1, k, 1.0),
        b: DVector::from_vec(vec![1.0]),
        cones: vec![Cone::NonNegative(k)],
    }
}

/// min a w1 + b w2 subject to w3 = s and 2 w1 w2 >= s^2.
fn rotated(a: f64, b: f64, s: f64) -> ConicProgram {
    ConicProgram {
        c: DVector::from_vec(vec![a, b, 0.0]),
        a: DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]),
        b: DVector::from_vec(vec![s]),
        cones: vec![Cone::RotatedSecondOrder(3)],
    }
}

/// min ||M x - d||^2 written as min t with (t, 1/2, M x - d) in the rotated cone.
fn least_squares(m: &DMatrix<f64>, d: &DVector<f64>) -> ConicProgram {
    let (rows, cols) = m.shape();
    let nv = cols + 2 + rows;
    let mut a = DMatrix::zeros(rows + 1, nv);
    let mut b = DVector::zeros(rows + 1);
    for i in 0..rows {
        for j in 0..cols {
            a[(i, j)] = m[(i, j)];
        }
        a[(i, cols + 2 + i)] = -1.0;
        b[i] = d[i];
    }
    a[(rows, cols + 1)] = 1.0;
    b[rows] = 0.5;
    let mut c = DVector::zeros(nv);
    c[cols] = 1.0;
    ConicProgram { c, a, b, cones: vec![Cone::Free(cols), Cone::RotatedSecondOrder(2 + rows)] }
}

fn settings() -> SolverSettings {
    SolverSettings::default()
}

#[test]
fn rotated_cone_optimum_matches_am_gm() {
    for (a, b, s) in [(1.0f64, 1.0f64, 2.0f64), (3.0, 0.5, -1.0), (0.2, 7.0, 0.3)] {
        let best = s.abs() * (2.0f64 * a * b).sqrt();
        let sol = IpmSolver.solve(&rotated(a, b, s), &settings()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - best).abs() <= 1e-7 * best.max(1.0), "{a} {b} {s}: {}", sol.objective);
        let admm = AdmmSolver.solve(&rotated(a, b, s), &settings()).unwrap();
        assert!((admm.objective - best).abs() <= 1e-5 * best.max(1.0), "{}", admm.objective);
    }
}

#[test]
fn duplicate_rows_are_presolved() {
    let mut p = simplex(&[2.0, 1.0, 3.0]);
    p.a = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
    p.b = DVector::from_vec(vec![1.0, 1.0, 2.0]);
    let sol = IpmSolver.solve(&p, &settings()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective - 1.0).abs() < 1e-8);
    let dropped = sol.presolve.duplicate_rows + sol.presolve.dependent_rows;
    assert_eq!(dropped, 2);
    let v = verify_solution(&p, &sol).unwrap();
    assert!(v.eq_residual < 1e-8 && v.cone_violation < 1e-8);
}

#[test]
fn malformed_programs_are_rejected() {
    let mut p = simplex(&[1.0, 2.0]);
    p.cones = vec![Cone::NonNegative(3)];
    assert!(IpmSolver.solve(&p, &settings()).is_err());
    assert!(rotated(1.0, 1.0, 1.0).validate().is_ok());
    let mut q = rotated(1.0, 1.0, 1.0);
    q.cones = vec![Cone::Free(1), Cone::RotatedSecondOrder(2)];
    assert!(q.validate().is_err());
}

#[test]
fn sparse_dump_lists_nonzeros() {
    let mut out = Vec::new();
    rotated(1.0, 0.0, 2.0).write_sparse(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().next(), Some("dims 3 1"));
    assert_eq!(text.lines().filter(|l| l.starts_with("c ")).count(), 1);
    assert!(text.contains("A 0 2 1e0"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn simplex_minimum_is_the_smallest_cost(c in prop::collection::vec(-5.0f64..5.0, 2..12)) {
        let best = c.iter().copied().fold(f64::INFINITY, f64::min);
        let sol = IpmSolver.solve(&simplex(&c), &settings()).unwrap();
        prop_assert_eq!(sol.status, SolveStatus::Optimal);
        prop_assert!((sol.objective - best).abs() <= 1e-7, "{} vs {}", sol.objective, best);
        let v = verify_solution(&simplex(&c), &sol).unwrap();
        prop_assert!(v.eq_residual <= 1e-8 && v.cone_violation <= 1e-8);
    }

    #[test]
    fn least_squares_matches_the_svd(seed in any::<u64>(), rows in 3usize..9, cols in 1usize..3) {
        let mut s = seed;
        let mut draw = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let m = DMatrix::from_fn(rows, cols, |_, _| draw());
        let d = DVector::from_fn(rows, |_, _| draw());
        let x = m.clone().svd(true, true).solve(&d, 1e-14).unwrap();
        let best = (&m * &x - &d).norm_squared();
        let p = least_squares(&m, &d);
        let ipm = IpmSolver.solve(&p, &settings()).unwrap();
        prop_assert_eq!(ipm.status, SolveStatus::Optimal);
        prop_assert!((ipm.objective - best).abs() <= 1e-7 * best.max(1.0), "{} vs {}", ipm.objective, best);
        let admm = AdmmSolver.solve(&p, &settings()).unwrap();
        prop_assert!((admm.objective - best).abs() <= 1e-5 * best.max(1.0), "{} vs {}", admm.objective, best);
    }
}
