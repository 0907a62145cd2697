use std::fs;

use ddpf::network::*;
use num_complex::Complex64;
use proptest::prelude::*;

fn case(name: &str) -> RadialNetwork {
    let text = fs::read_to_string(format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap();
    parse_matpower_case(&text).unwrap()
}

#[test]
fn distribution_cases_parse_as_trees() {
    for (name, nodes) in [("case33bw.m", 33), ("case85.m", 85), ("case141.m", 141)] {
        let net = case(name);
        assert_eq!(net.node_count(), nodes, "{name}");
        assert_eq!(net.branches().len(), nodes - 1, "{name}");
        assert_eq!(net.external_id(0), 1, "{name} slack is bus 1");
    }
}

#[test]
fn case141_admittance_is_a_laplacian() {
    let net = case("case141.m");
    let y = net.build_admittance();
    assert_eq!(y.dim(), 141);
    // one branch has |y| ~ 1.6e6 p.u., where adjacent doubles are 2.3e-10
    // apart; row sums are therefore checked to a few ulps of the diagonal
    for i in 0..y.dim() {
        let exact: f64 = y.y.row(i).iter().map(|c| c.re).sum::<f64>().abs()
            + y.y.row(i).iter().map(|c| c.im).sum::<f64>().abs();
        assert!(exact <= 4.0 * f64::EPSILON * y.y[(i, i)].norm(), "row {i}: {exact}");
    }
    assert!(y.max_row_sum() <= 4.0 * f64::EPSILON * 1.6e6);
    assert_eq!(y.max_asymmetry(), 0.0);
    // off-diagonal entries are exactly -1/z of the connecting branch
    for i in 1..net.node_count() {
        let b = net.branch(i);
        let p = net.parent(i).unwrap();
        let z = Complex64::new(b.r, b.x);
        assert!((y.y[(i, p)] + z.inv()).norm() <= 1e-12 * z.inv().norm());
    }
}

#[test]
fn case33bw_impedances_are_converted_from_ohms() {
    // first branch of the Baran-Wu feeder: 0.0922 + j0.0470 ohm on 12.66 kV, 10 MVA
    let net = case("case33bw.m");
    let zbase = 12.66f64 * 12.66 / 10.0;
    let b = net.branch(net.internal_id(2).unwrap());
    assert!((b.r - 0.0922 / zbase).abs() < 1e-12);
    assert!((b.x - 0.0470 / zbase).abs() < 1e-12);
}

#[test]
fn native_format_round_trips() {
    let net = case("case85.m");
    let text = serialize_native_network(&net);
    let back = parse_native_network(&text).unwrap();
    assert_eq!(back.node_count(), net.node_count());
    for i in 0..net.node_count() {
        assert_eq!(back.external_id(i), net.external_id(i));
        assert_eq!(back.parent(i), net.parent(i));
    }
    for i in 1..net.node_count() {
        assert_eq!(back.branch(i).r, net.branch(i).r);
        assert_eq!(back.branch(i).x, net.branch(i).x);
    }
}

#[test]
fn cycles_and_disconnected_graphs_are_rejected() {
    let buses = [0i64, 1, 2, 3];
    let cyc = [
        RawBranch { from: 1, to: 0, r: 0.01, x: 0.01 },
        RawBranch { from: 2, to: 1, r: 0.01, x: 0.01 },
        RawBranch { from: 0, to: 2, r: 0.01, x: 0.01 },
    ];
    assert!(RadialNetwork::from_raw(1.0, 1.0, 0, &buses, &cyc).is_err());
    let split = [RawBranch { from: 1, to: 0, r: 0.01, x: 0.01 }, RawBranch { from: 3, to: 2, r: 0.01, x: 0.01 }];
    assert!(RadialNetwork::from_raw(1.0, 1.0, 0, &buses, &split).is_err());
}

proptest! {
    #[test]
    fn random_feeders_are_rooted_trees(n in 1usize..80, seed in any::<u64>(), chain in 0.0f64..1.0) {
        let net = random_radial(n, seed, (0.001, 0.05), (0.001, 0.05), chain);
        prop_assert_eq!(net.node_count(), n + 1);
        prop_assert_eq!(net.branches().len(), n);
        prop_assert!(net.parent(0).is_none());
        for i in 1..=n {
            let path = net.path_to_root(i);
            prop_assert_eq!(path.first().copied(), Some(i));
            prop_assert_eq!(path.last().copied(), Some(0));
            prop_assert_eq!(path.len(), net.depth(i) + 1);
            let b = net.branch(i);
            prop_assert!((0.001..=0.05).contains(&b.r) && (0.001..=0.05).contains(&b.x));
        }
        let y = net.build_admittance();
        prop_assert!(y.max_row_sum() <= 1e-9);
        prop_assert_eq!(y.max_asymmetry(), 0.0);
    }

    #[test]
    fn descendants_agree_with_paths(n in 2usize..40, seed in any::<u64>()) {
        let net = random_radial(n, seed, (0.001, 0.05), (0.001, 0.05), 0.5);
        for i in 0..=n {
            for j in 0..=n {
                let via_path = i != j && net.path_to_root(j).contains(&i);
                prop_assert_eq!(net.is_descendant(j, i), via_path);
            }
        }
    }
}
