use ddpf::network::*;
use ddpf::powerflow::*;
use num_complex::Complex64;
use proptest::prelude::*;

/// Complex-current backward/forward sweep, written independently of the
/// library: I_i = conj(s_i / V_i), branch currents summed upstream, then
/// V_child = V_parent - z I.
fn phasor_sweep(net: &RadialNetwork, inj: &InjectionVector, v0: f64) -> Vec<f64> {
    let m = net.node_count();
    let mut v = vec![Complex64::new(v0.sqrt(), 0.0); m];
    let order = net.bfs_order().to_vec();
    for _ in 0..500 {
        let mut cur = vec![Complex64::new(0.0, 0.0); m];
        for i in 1..m {
            // loads are negative injections; current drawn from the node
            cur[i] = -(Complex64::new(inj.p[i - 1], inj.q[i - 1]) / v[i]).conj();
        }
        for &i in order.iter().rev() {
            if let Some(p) = net.parent(i) {
                let c = cur[i];
                cur[p] += c;
            }
        }
        let mut delta: f64 = 0.0;
        for &i in &order {
            if let Some(p) = net.parent(i) {
                let b = net.branch(i);
                let nv = v[p] - Complex64::new(b.r, b.x) * cur[i];
                delta = delta.max((nv - v[i]).norm());
                v[i] = nv;
            }
        }
        if delta < 1e-15 {
            break;
        }
    }
    v[1..].iter().map(|c| c.norm()).collect()
}

fn loads(n: usize, seed: u64, cap: f64) -> InjectionVector {
    let mut inj = InjectionVector::zeros(n);
    let mut s = seed;
    for i in 0..n {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let u = (s >> 11) as f64 / (1u64 << 53) as f64;
        inj.p[i] = -cap * u;
        inj.q[i] = -0.4 * cap * u;
    }
    inj
}

#[test]
fn matches_independent_sweep_on_the_baran_wu_feeder() {
    let text = std::fs::read_to_string(format!("{}/tests/data/case33bw.m", env!("CARGO_MANIFEST_DIR"))).unwrap();
    let net = parse_matpower_case(&text).unwrap();
    let inj = loads(net.n(), 3, 0.01);
    let state = solve_distflow(&net, &inj, 1.0, 1e-12, 200).unwrap();
    let mag = voltage_magnitudes(&state).unwrap();
    let reference = phasor_sweep(&net, &inj, 1.0);
    let gap = mag.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap < 1e-10, "{gap}");
    assert!(residuals(&net, &state, &inj).unwrap().max() <= 1e-10);
}

#[test]
fn stacked_layout_round_trips() {
    let net = random_radial(7, 5, (0.001, 0.05), (0.001, 0.05), 0.5);
    let state = solve_distflow(&net, &loads(7, 9, 0.05), 1.02, 1e-12, 100).unwrap();
    let y = state.stacked();
    assert_eq!(y.len(), 4 * 7 + 1);
    assert_eq!(PowerFlowState::from_stacked(&y), state);
    assert_eq!(state.v_at(0), 1.02);
}

#[test]
fn leaf_flow_equals_its_injection() {
    // at a leaf P = p exactly and l = (P^2 + Q^2) / v
    let net = random_radial(10, 2, (0.001, 0.05), (0.001, 0.05), 0.3);
    let inj = loads(10, 4, 0.05);
    let s = solve_distflow(&net, &inj, 1.0, 1e-12, 100).unwrap();
    for i in 1..=10 {
        if net.children(i).is_empty() {
            assert_eq!(s.p_flow[i - 1], inj.p[i - 1]);
            let l = (s.p_flow[i - 1].powi(2) + s.q_flow[i - 1].powi(2)) / s.voltage_sq[i - 1];
            assert!((l - s.current_sq[i - 1]).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sweep_newton_and_reference_agree(n in 1usize..40, seed in any::<u64>(), chain in 0.0f64..1.0, cap in 0.0f64..0.02) {
        let net = random_radial(n, seed, (0.001, 0.05), (0.001, 0.05), chain);
        let inj = loads(n, seed ^ 7, cap);
        let state = solve_distflow(&net, &inj, 1.0, 1e-10, 200).unwrap();
        prop_assert!(residuals(&net, &state, &inj).unwrap().max() <= 1e-10);
        let mag = voltage_magnitudes(&state).unwrap();
        let newton = solve_phasor(&net, &inj, Complex64::new(1.0, 0.0), 1e-12, 50).unwrap().magnitudes();
        let sweep = phasor_sweep(&net, &inj, 1.0);
        for k in 0..n {
            prop_assert!((mag[k] - newton[k]).abs() <= 1e-8);
            prop_assert!((mag[k] - sweep[k]).abs() <= 1e-8);
        }
        // loads only: voltages fall monotonically away from the slack
        for i in 1..=n {
            let p = net.parent(i).unwrap();
            prop_assert!(state.v_at(i) <= state.v_at(p) + 1e-12);
        }
    }

    #[test]
    fn losses_are_nonnegative(n in 1usize..30, seed in any::<u64>(), cap in 0.0f64..0.02) {
        let net = random_radial(n, seed, (0.001, 0.05), (0.001, 0.05), 0.5);
        let inj = loads(n, seed, cap);
        let s = solve_distflow(&net, &inj, 1.0, 1e-10, 200).unwrap();
        // slack supplies the loads plus r l on every edge
        let roots: Vec<usize> = net.children(0).to_vec();
        let supplied: f64 = roots.iter().map(|&k| -(s.p_flow[k - 1] - net.branch(k).r * s.current_sq[k - 1])).sum();
        let demand: f64 = -inj.p.iter().sum::<f64>();
        let losses: f64 = (1..=n).map(|k| net.branch(k).r * s.current_sq[k - 1]).sum();
        prop_assert!(s.current_sq.iter().all(|&l| l >= 0.0));
        prop_assert!((supplied - demand - losses).abs() <= 1e-9);
    }
}
