use std::collections::BTreeSet;

use ddpf::data::*;
use ddpf::ddpf::*;
use ddpf::network::*;
use ddpf::powerflow::{solve_distflow, InjectionVector};
use ddpf::reduction::*;
use ddpf::socp::SolveStatus;
use proptest::prelude::*;

struct Setup {
    net: RadialNetwork,
    train: TrajectoryDataset,
    test: TrajectoryDataset,
}

fn setup(n: usize, seed: u64) -> Setup {
    let net = random_radial(n, seed, (0.001, 0.05), (0.001, 0.05), 0.5);
    let prof = synth_profiles(n, 96, seed);
    let train = generate_steps(&net, &prof, 0, 3 * n + 1 + 12, 1.0).unwrap();
    let test = generate_steps(&net, &prof.with_jitter_seed(seed + 1).scaled(0.6), 0, 12, 1.0).unwrap();
    Setup { net, train, test }
}

fn truth(ds: &TrajectoryDataset, t: usize) -> Vec<f64> {
    let n = ds.n();
    std::iter::once(ds.y[(4 * n, t)].sqrt()).chain((0..n).map(|i| ds.y[(3 * n + i, t)].sqrt())).collect()
}

#[test]
fn full_program_recovers_the_power_flow() {
    let s = setup(6, 3);
    let hs = build_hankel(&s.train, &MeasuredSet::Full).unwrap();
    assert!(hs.pe_satisfied);
    for backend in [Backend::InteriorPoint, Backend::Splitting] {
        let opts = DdpfOptions { backend, ..Default::default() };
        for t in [0, 5, 11] {
            let inj = s.test.input(t);
            let sol = solve_ddpf_full_with(&hs, &inj, &opts).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal);
            // independent check against the sweep at the same injections
            let pf = solve_distflow(&s.net, &inj, 1.0, 1e-12, 100).unwrap();
            let err = sol.voltage_sq.iter().zip(&pf.voltage_sq).map(|(a, b)| (a.sqrt() - b.sqrt()).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-5, "{backend:?} step {t}: {err}");
            assert!(sol.p.iter().zip(&inj.p).all(|(a, b)| (a - b).abs() <= 1e-8));
            assert!(check_exactness(&sol, 1e-6).exact, "{:?}", check_exactness(&sol, 1e-6));
            assert!((sol.g_sum() - 1.0).abs() <= 1e-6, "{}", sol.g_sum());
        }
    }
}

#[test]
fn reduced_program_with_every_node_matches_the_full_one() {
    let s = setup(6, 5);
    let n = 6;
    let all: BTreeSet<usize> = (0..=n).collect();
    let hs = build_hankel(&s.train, &MeasuredSet::Nodes(all.clone())).unwrap();
    let rad = radialize(&s.net, &all).unwrap();
    assert_eq!(rad.reduced.slack_adjacent(), s.net.children(0).to_vec());
    let solver = ReducedDdpf::new(&hs, &rad.reduced.slack_adjacent(), DEFAULT_LAMBDA_G, DEFAULT_LAMBDA_L, DdpfOptions::default())
        .unwrap();
    let pi = AssignmentMatrix::identity(n);
    for t in 0..s.test.len() {
        let sol = solver.solve(&s.test.input(t)).unwrap();
        assert_eq!(sol.nodes, (1..=n).collect::<Vec<_>>());
        assert!(sol.sigma.is_some() && sol.current_sq_adj.is_some());
        let mut rec = reconstruct_full_voltages(&sol, &pi).unwrap();
        assert!(rec.provenance.iter().all(|p| *p == Provenance::Measured));
        let e = rec.compare(&truth(&s.test, t));
        assert!(e <= 1e-4, "step {t}: {e}");
    }
    assert!(matches!(
        ReducedDdpf::new(&hs, &[], DEFAULT_LAMBDA_G, DEFAULT_LAMBDA_L, DdpfOptions::default()),
        Err(DdpfError::MissingSlackAdjacency)
    ));
}

#[test]
fn reconstruction_marks_proxied_nodes() {
    let s = setup(8, 9);
    let kept_star: BTreeSet<usize> = [0, 3, 7].into_iter().collect();
    let rad = radialize(&s.net, &kept_star).unwrap();
    let assign = AssignmentMatrix::nearest_upstream(&s.net, &rad.kept).unwrap();
    let hs = build_hankel(&s.train, &MeasuredSet::Nodes(rad.kept.clone())).unwrap();
    assert!(!hs.pe_satisfied);
    let sol = solve_ddpf_reduced(&hs, &s.test.input(2), &rad.reduced.slack_adjacent(), DEFAULT_LAMBDA_G, DEFAULT_LAMBDA_L)
        .unwrap();
    let rec = reconstruct_full_voltages(&sol, &assign).unwrap();
    assert_eq!(rec.magnitudes.len(), 9);
    for j in 0..=8 {
        let r = assign.representative(j);
        if rad.kept.contains(&j) {
            assert_eq!(rec.provenance[j], Provenance::Measured);
        } else {
            assert_eq!(rec.provenance[j], Provenance::ProxiedBy(r));
            assert_eq!(rec.magnitudes[j], rec.magnitudes[r]);
        }
    }
    // an assignment pointing at an unmeasured node is refused
    let wrong = AssignmentMatrix::identity(8);
    if rad.kept.len() < 9 {
        assert!(reconstruct_full_voltages(&sol, &wrong).is_err());
    }
}

#[test]
fn membership_needs_persistent_excitation() {
    let s = setup(5, 2);
    let n = 5;
    let thin = build_hankel(&s.train.columns(&(0..3 * n).collect::<Vec<_>>()), &MeasuredSet::Full).unwrap();
    let u: Vec<f64> = s.test.u.column(0).iter().copied().collect();
    let y: Vec<f64> = s.test.y.column(0).iter().copied().collect();
    let r = membership_test(&thin, &u, &y, TOL_LIN, TOL_CONE).unwrap();
    assert_eq!(r.verdict, Verdict::Indeterminate);
    assert!(r.warning.is_some());

    let hs = build_hankel(&s.train, &MeasuredSet::Full).unwrap();
    assert_eq!(membership_test(&hs, &u, &y, TOL_LIN, TOL_CONE).unwrap().verdict, Verdict::Member);
    // a common shift of all squared voltages keeps the linear relations
    // but breaks v l = P^2 + Q^2
    let mut bad_y = y.clone();
    for v in &mut bad_y[3 * n..] {
        *v += 0.05;
    }
    let r = membership_test(&hs, &u, &bad_y, TOL_LIN, TOL_CONE).unwrap();
    assert!(r.linear_residual <= 1e-8, "{}", r.linear_residual);
    assert_eq!(r.verdict, Verdict::NonMember);
}

#[test]
fn solutions_serialize() {
    let s = setup(4, 1);
    let hs = build_hankel(&s.train, &MeasuredSet::Full).unwrap();
    let sol = solve_ddpf_full(&hs, &s.test.input(0)).unwrap();
    let back: DdpfSolution = serde_json::from_str(&sol.to_json()).unwrap();
    assert_eq!(back, sol);
}

#[test]
fn wrong_input_length_is_an_error() {
    let s = setup(4, 1);
    let hs = build_hankel(&s.train, &MeasuredSet::Full).unwrap();
    assert!(solve_ddpf_full(&hs, &InjectionVector::zeros(3)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn full_program_on_random_feeders(n in 2usize..8, seed in 0u64..1000) {
        let s = setup(n, seed);
        let hs = build_hankel(&s.train, &MeasuredSet::Full).unwrap();
        prop_assume!(hs.pe_satisfied);
        let sol = solve_ddpf_full(&hs, &s.test.input((seed % 12) as usize)).unwrap();
        let want = truth(&s.test, (seed % 12) as usize);
        let got = sol.voltage_magnitudes();
        for i in 0..n {
            prop_assert!((got[i] - want[i + 1]).abs() <= 1e-5);
        }
        prop_assert!(check_exactness(&sol, 1e-6).exact);
    }
}
