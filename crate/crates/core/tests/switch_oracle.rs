//! Non-blocking switch: exhaustive routing and a dense-state check.

mod common;

use common::*;
use mqnc_core::dense::{gates, MeasBasis};
use mqnc_core::switch::{
    execute_schedule, permutations, route, verify_matching, MeasureBasis, Setting, SwitchError, SwitchNetwork,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn every_permutation_routes_up_to_five_lines() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for k in 2..=5 {
        let net = SwitchNetwork::build(k).unwrap();
        assert_eq!(net.blocks().len(), k * (k - 1) / 2);
        assert_eq!(net.n_qubits(), 4 * k * (k - 1) + k);
        assert!(net.graph().max_degree() <= 3);
        assert!(net.is_planar_layout());
        let perms = permutations(k);
        assert_eq!(perms.len(), (1..=k).product::<usize>());
        for perm in perms {
            let sched = route(&net, &perm).unwrap();
            for trial in 0..4 {
                let bits: Vec<u8> = (0..sched.outcome_count())
                    .map(|_| if trial == 0 { 0 } else { rng.gen_range(0..2) })
                    .collect();
                let g = execute_schedule(&net, &sched, &bits).unwrap();
                assert!(verify_matching(&net, &perm, &g), "k={k} perm={perm:?}");
            }
        }
    }
}

#[test]
fn identity_permutation_is_all_straight() {
    let net = SwitchNetwork::build(4).unwrap();
    let sched = route(&net, &[0, 1, 2, 3]).unwrap();
    assert!(sched.settings.iter().all(|s| *s == Setting::Straight));
    let rev = route(&net, &[3, 2, 1, 0]).unwrap();
    assert!(rev.settings.iter().all(|s| *s == Setting::Cross));
}

#[test]
fn invalid_requests_are_rejected() {
    assert!(matches!(SwitchNetwork::build(1), Err(SwitchError::TooSmall(1))));
    let net = SwitchNetwork::build(3).unwrap();
    assert!(matches!(
        route(&net, &[0, 0, 1]),
        Err(SwitchError::NotPermutation { .. })
    ));
    assert!(matches!(route(&net, &[0, 1]), Err(SwitchError::NotPermutation { .. })));
    let sched = route(&net, &[2, 0, 1]).unwrap();
    assert!(matches!(
        execute_schedule(&net, &sched, &[0]),
        Err(SwitchError::OutcomeCount { .. })
    ));
}

#[test]
fn two_line_switch_matches_dense_simulation() {
    let net = SwitchNetwork::build(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for perm in permutations(2) {
        let sched = route(&net, &perm).unwrap();
        for _ in 0..8 {
            let bits: Vec<u8> = (0..sched.outcome_count()).map(|_| rng.gen_range(0..2)).collect();
            let mut g = net.graph().clone();
            let mut d = dense_of(&g);
            let mut removed: Vec<usize> = Vec::new();
            let mut next = bits.iter().copied();
            for m in sched.rounds.iter().flatten() {
                match m.basis {
                    MeasureBasis::Xpair => {
                        let (a, b) = (m.qubits[0], m.qubits[1]);
                        let s = (next.next().unwrap(), next.next().unwrap());
                        g.measure_x_pair(a, b, s).unwrap();
                        d = d
                            .measure_basis(shifted(a, &removed), MeasBasis::X, s.0, false)
                            .unwrap()
                            .0;
                        removed.push(a);
                        d = d
                            .measure_basis(shifted(b, &removed), MeasBasis::X, s.1, false)
                            .unwrap()
                            .0;
                        removed.push(b);
                    }
                    MeasureBasis::Z => {
                        let a = m.qubits[0];
                        let s = next.next().unwrap();
                        g.measure_z(a, s).unwrap();
                        d = d.measure_basis(shifted(a, &removed), MeasBasis::Z, s, false).unwrap().0;
                        removed.push(a);
                    }
                    MeasureBasis::Y => {
                        let a = m.qubits[0];
                        let s = next.next().unwrap();
                        let nbrs = g.neighbors(a);
                        g.measure_y(a, s).unwrap();
                        d = d.measure_basis(shifted(a, &removed), MeasBasis::Y, s, false).unwrap().0;
                        removed.push(a);
                        for b in nbrs {
                            d.apply_gate1(shifted(b, &removed), &gates::sdg()).unwrap();
                        }
                    }
                }
            }
            assert!(verify_matching(&net, &perm, &g));
            // dense output equals the tracked graph with its Pauli frame
            assert!(same(&d, &dense_of(&g)), "perm {perm:?} bits {bits:?}");
        }
    }
}

#[test]
fn schedule_json_lists_rounds() {
    let net = SwitchNetwork::build(3).unwrap();
    let sched = route(&net, &[1, 2, 0]).unwrap();
    let v: serde_json::Value = serde_json::from_str(&sched.to_json_string()).unwrap();
    assert_eq!(v["k"], 3);
    assert!(v["rounds"].as_array().unwrap().len() >= 3);
}
