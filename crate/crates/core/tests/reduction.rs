use std::collections::BTreeSet;

use ddpf::data::{generate_dataset, synth_profiles};
use ddpf::network::*;
use ddpf::reduction::*;
use num_complex::Complex64;
use proptest::prelude::*;

fn feeder(n: usize, seed: u64, chain: f64) -> RadialNetwork {
    random_radial(n, seed, (0.001, 0.05), (0.001, 0.05), chain)
}

fn kept_from_mask(n: usize, mask: u64) -> BTreeSet<usize> {
    std::iter::once(0).chain((1..=n).filter(|i| mask >> (i % 64) & 1 == 1)).collect()
}

/// Sum of branch impedances on the tree path from `a` down to `b`.
fn path_impedance(net: &RadialNetwork, a: usize, b: usize) -> Complex64 {
    let mut z = Complex64::new(0.0, 0.0);
    let mut k = b;
    while k != a {
        let br = net.branch(k);
        z += Complex64::new(br.r, br.x);
        k = net.parent(k).expect("a is an ancestor of b");
    }
    z
}

#[test]
fn reduction_percentage_counts_removed_nodes() {
    assert_eq!(reduction_percentage(32, 33), 0.0);
    assert!((reduction_percentage(32, 8) - 25.0 / 33.0 * 100.0).abs() < 1e-12);
    assert!((reduction_percentage(140, 33) - 108.0 / 141.0 * 100.0).abs() < 1e-12);
}

#[test]
fn full_budget_keeps_every_node_with_zero_error() {
    let n = 12;
    let net = feeder(n, 4, 0.5);
    let ds = generate_dataset(&net, &synth_profiles(n, 16, 4), 1, 1.0).unwrap();
    let sc = scenarios_from_dataset(&net, &ds, 1).unwrap();
    let p = greedy_placement(&net, &net.build_admittance(), &sc, n + 1).unwrap();
    assert!(p.trace.is_empty());
    assert_eq!(p.assignment, AssignmentMatrix::identity(n));
    assert!(score_assignment(&net.build_admittance(), &p.assignment, &sc).unwrap() <= 1e-12);
    assert!(greedy_placement(&net, &net.build_admittance(), &sc, 0).is_err());
    assert!(greedy_placement(&net, &net.build_admittance(), &sc, n + 2).is_err());
}

#[test]
fn baseline_on_full_set_matches_distflow() {
    let n = 9;
    let net = feeder(n, 8, 0.4);
    let profiles = synth_profiles(n, 4, 2);
    let all: BTreeSet<usize> = (0..=n).collect();
    let rad = radialize(&net, &all).unwrap();
    let pi = AssignmentMatrix::identity(n);
    for t in 0..4 {
        let inj = profiles.injection(t);
        let got = reduced_power_flow(&rad.reduced, &pi, &inj, 1.0).unwrap();
        let want = ddpf::powerflow::solve_phasor(&net, &inj, Complex64::new(1.0, 0.0), 1e-12, 50).unwrap().magnitudes();
        for i in 1..=n {
            assert!((got[i] - want[i - 1]).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn block_and_sequential_elimination_agree(n in 2usize..25, seed in any::<u64>(), mask in any::<u64>()) {
        let net = feeder(n, seed, 0.5);
        let y = net.build_admittance();
        let kept = kept_from_mask(n, mask);
        let kv: Vec<usize> = kept.iter().copied().collect();
        let block = schur_complement(&y.y, &kv).unwrap();
        let seq = kron_reduce_sequential(&y.y, &kept).unwrap();
        let scale = y.y.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let diff = (&block - &seq).iter().map(|c| c.norm()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-10 * scale, "{diff}");
        // the reduced matrix is again a symmetric Laplacian
        for a in 0..kv.len() {
            let row: Complex64 = block.row(a).iter().sum();
            prop_assert!(row.norm() <= 1e-9 * scale);
            for b in 0..kv.len() {
                prop_assert!((block[(a, b)] - block[(b, a)]).norm() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn radialized_sets_reduce_to_series_trees(n in 2usize..40, seed in any::<u64>(), mask in any::<u64>(), chain in 0.0f64..1.0) {
        let net = feeder(n, seed, chain);
        let kept_star = kept_from_mask(n, mask);
        let rad = radialize(&net, &kept_star).unwrap();
        prop_assert!(rad.reduced.is_radial);
        prop_assert!(rad.kept_star.is_subset(&rad.kept));
        prop_assert!(rad.radializing.is_disjoint(&kept_star));
        let union: BTreeSet<usize> = kept_star.union(&rad.radializing).copied().collect();
        prop_assert_eq!(&union, &rad.kept);
        let eq = rad.reduced.network.as_ref().unwrap();
        prop_assert_eq!(eq.node_count(), rad.kept.len());
        // every reduced edge is the series combination of the tree path
        for k in 1..eq.node_count() {
            let child = rad.reduced.kept[k];
            let parent = rad.reduced.kept[eq.parent(k).unwrap()];
            prop_assert!(net.is_descendant(child, parent));
            let z = path_impedance(&net, parent, child);
            let br = eq.branch(k);
            prop_assert!((Complex64::new(br.r, br.x) - z).norm() <= 1e-9 * z.norm().max(1e-3));
        }
        // radializing nodes branch inside the spanning subtree
        let steiner = steiner_nodes(&net, &kept_star);
        for &v in &rad.radializing {
            let down = net.children(v).iter().filter(|c| steiner.contains(c)).count();
            prop_assert!(down >= 2);
        }
    }

    #[test]
    fn nearest_upstream_assignments_are_admissible(n in 1usize..40, seed in any::<u64>(), mask in any::<u64>()) {
        let net = feeder(n, seed, 0.5);
        let kept = kept_from_mask(n, mask);
        let a = AssignmentMatrix::nearest_upstream(&net, &kept).unwrap();
        a.audit(&net).unwrap();
        prop_assert_eq!(a.kept(), kept.clone());
        prop_assert_eq!(a.trace(), kept.len());
        let pi = a.matrix();
        for j in 0..=n {
            prop_assert_eq!(pi.column(j).iter().map(|&v| v as usize).sum::<usize>(), 1);
        }
        prop_assert_eq!(AssignmentMatrix::from_matrix(&pi).unwrap(), a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn greedy_traces_nest_and_scores_are_exact(n in 3usize..16, seed in any::<u64>(), cut in 0usize..100) {
        let net = feeder(n, seed, 0.5);
        let y = net.build_admittance();
        let ds = generate_dataset(&net, &synth_profiles(n, 6, seed), 1, 1.0).unwrap();
        let sc = scenarios_from_dataset(&net, &ds, 1).unwrap();
        let small = 1 + cut % n;
        let big = small + (n + 1 - small) / 2;
        let ps = greedy_placement(&net, &y, &sc, small).unwrap();
        let pb = greedy_placement(&net, &y, &sc, big).unwrap();
        prop_assert_eq!(ps.assignment.trace(), small);
        prop_assert_eq!(pb.assignment.trace(), big);
        prop_assert_eq!(&ps.trace[..pb.trace.len()], &pb.trace[..]);
        ps.assignment.audit(&net).unwrap();
        // the recorded score is the error of the committed assignment
        if let Some(last) = ps.trace.last() {
            let direct = score_assignment(&y, &ps.assignment, &sc).unwrap();
            prop_assert!((last.score - direct).abs() <= 1e-9, "{} vs {}", last.score, direct);
        }
        // each step chose the cheapest admissible merge
        let mut cur = AssignmentMatrix::identity(n);
        for step in ps.trace.iter().take(3) {
            for u in 1..=n {
                if cur.representative(u) == u {
                    let s = score_candidate(&net, &y, &cur, u, &sc).unwrap();
                    prop_assert!(step.score <= s + 1e-9);
                }
            }
            cur = cur.merged(&net, step.node).unwrap();
        }
    }
}
