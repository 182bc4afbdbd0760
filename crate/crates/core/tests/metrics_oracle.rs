//! Metric identities checked against independent computations.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use mqnc_core::dense::{gates, Channel, DenseState};
use mqnc_core::linalg::{c, frobenius_distance, kron, project_psd_trace, trace_distance, CMatrix};
use mqnc_core::metrics::*;
use mqnc_core::protocol::{pair_state, run_full_experiment, InputState, Mode, Policy, ResourcePrep};
use mqnc_core::topology::butterfly_graph;
use mqnc_core::{GraphState, NoiseModel};
use num_complex::Complex64;
use proptest::prelude::*;

fn gate_matrix(g: &gates_t::Gate) -> CMatrix {
    CMatrix::from_fn(2, 2, |i, j| g[i][j])
}

mod gates_t {
    pub type Gate = mqnc_core::dense::Gate1;
}

fn random_unitary(a: f64, b: f64, cc: f64) -> CMatrix {
    gate_matrix(&gates::mul(&gates::rz(a), &gates::mul(&gates::ry(b), &gates::rz(cc))))
}

#[test]
fn depolarizing_average_fidelity_two_ways() {
    for p in [0.0, 0.1, 0.37, 0.8, 1.0] {
        let choi = ChoiMatrix::from_channel(&Channel::Depolarizing(p)).unwrap();
        let closed = average_gate_fidelity(&choi);
        let mc = haar_average_fidelity(&choi, 20_000, 3);
        assert!((closed - (1.0 - p / 2.0)).abs() < 1e-12);
        assert!((closed - mc).abs() < 1e-3);
    }
}

#[test]
fn biased_channel_average_fidelity_two_ways() {
    for ch in [
        Channel::AmplitudeDamping(0.3),
        Channel::AmplitudeDamping(AMPLITUDE_DAMPING_PRESET),
        Channel::BitFlip(0.2),
    ] {
        let choi = ChoiMatrix::from_channel(&ch).unwrap();
        let closed = average_gate_fidelity(&choi);
        let mc = haar_average_fidelity(&choi, 400_000, 11);
        assert!((closed - mc).abs() < 1e-3, "{ch:?}: {closed} vs {mc}");
    }
}

#[test]
fn full_sphere_cap_equals_average_fidelity() {
    for ch in [
        Channel::Depolarizing(0.2),
        Channel::AmplitudeDamping(0.3),
        Channel::PhaseFlip(0.4),
    ] {
        let choi = ChoiMatrix::from_channel(&ch).unwrap();
        let cap = CapSpec::new(InputState { theta: 0.7, phi: 1.3 }, PI).unwrap();
        let f = cap_average_fidelity(&choi, &cap);
        assert!((f - average_gate_fidelity(&choi)).abs() < 1e-6, "{ch:?}: {f}");
    }
}

#[test]
fn identity_caps_are_perfect_and_isotropic_caps_are_flat() {
    let id = ChoiMatrix::identity();
    let dep = ChoiMatrix::from_channel(&Channel::Depolarizing(0.3)).unwrap();
    for s in InputState::fibonacci_grid(8) {
        for t in [0.1, 1.0, 2.5] {
            let cap = CapSpec::with_points(s, t, 2000).unwrap();
            assert!((cap_average_fidelity(&id, &cap) - 1.0).abs() < 1e-12);
            assert!((cap_average_fidelity(&dep, &cap) - 0.85).abs() < 1e-12);
        }
    }
}

#[test]
fn amplitude_damping_preset_beats_classical_line_on_small_caps() {
    let choi = ChoiMatrix::from_channel(&Channel::AmplitudeDamping(AMPLITUDE_DAMPING_PRESET)).unwrap();
    assert!(average_gate_fidelity(&choi) < CLASSICAL_FIDELITY);
    let center = best_cap_center(&choi);
    assert!(center.theta < 1e-3, "fixed point is |0>: {center:?}");
    let radii = default_radii(40);
    let coarse = cap_curve(&choi, center, &radii, CAP_POINTS, &ClassicalBound::Constant).unwrap();
    let fine = cap_curve(&choi, center, &radii, 10 * CAP_POINTS, &ClassicalBound::Constant).unwrap();
    for (a, b) in coarse.iter().zip(&fine) {
        assert!((a.f_cap - b.f_cap).abs() < 1e-6);
    }
    let above = radii_above_bound(&fine);
    assert!(!above.is_empty() && above.len() < radii.len());
    for w in fine.windows(2) {
        assert!(w[1].f_cap <= w[0].f_cap + 1e-12, "cap average decreases with radius");
    }
}

#[test]
fn cap_average_from_samples_tracks_lattice() {
    let choi = ChoiMatrix::from_channel(&Channel::AmplitudeDamping(0.5)).unwrap();
    let samples = bloch_grid(&choi, 50_000);
    let cap = CapSpec::new(InputState::zero(), 1.0).unwrap();
    let a = cap_average_from_samples(&samples, &cap).unwrap();
    assert!((a - cap_average_fidelity(&choi, &cap)).abs() < 1e-3);
    let center = best_sample_center(&samples).unwrap();
    assert!(center.theta < 0.05);
    let tiny = CapSpec::new(InputState { theta: PI, phi: 0.0 }, 0.05).unwrap();
    assert_eq!(
        cap_average_from_samples(&samples[..3], &tiny).unwrap_err(),
        MetricsError::EmptyCap
    );
}

#[test]
fn pure_fidelity_matches_general_formula() {
    let g = GraphState::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
    let ket = graph_state_vector(&g).unwrap();
    let mut d = DenseState::build_graph_state(&g.edges(), 3).unwrap();
    d.apply_channel(&Channel::Depolarizing(0.2), &[0, 1]).unwrap();
    d.apply_channel(&Channel::AmplitudeDamping(0.3), &[2]).unwrap();
    let sigma = d.density_matrix();
    let a = fidelity_pure(&ket, &sigma).unwrap();
    let b = fidelity(&ket_density(&ket), &sigma).unwrap();
    assert!((a - b).abs() < 1e-10);
    assert!((fidelity(&sigma, &ket_density(&ket)).unwrap() - b).abs() < 1e-10);
}

#[test]
fn stabilizer_expansion_reproduces_fidelity() {
    let g6 = butterfly_graph();
    let products = stabilizer_projector_expansion(&g6).unwrap();
    let settings = measurement_settings(&products);
    let mut d = DenseState::build_graph_state(&g6.edges(), 6).unwrap();
    d.apply_channel(&Channel::Depolarizing(0.1), &[0, 2]).unwrap();
    d.apply_channel(&Channel::AmplitudeDamping(0.2), &[3]).unwrap();
    let sigma = d.density_matrix();
    let counts = exact_basis_counts(&sigma, &settings).unwrap();
    let from_settings = fidelity_from_settings(&g6, &counts).unwrap();
    let direct = fidelity_pure(&graph_state_vector(&g6).unwrap(), &sigma).unwrap();
    assert!((from_settings - direct).abs() < 1e-9);
}

#[test]
fn sampled_tomography_error_is_shot_limited() {
    let g = GraphState::from_edges(2, &[(0, 1)]).unwrap();
    let mut d = DenseState::build_graph_state(&g.edges(), 2).unwrap();
    d.apply_channel(&Channel::Depolarizing(0.2), &[0, 1]).unwrap();
    let truth = d.density_matrix();
    let mean_error = |shots: usize| -> f64 {
        (0..20u64)
            .map(|seed| {
                let counts = sample_basis_counts(&truth, &tomography_bases(2), shots, &[], seed).unwrap();
                trace_distance(&state_tomography(2, &counts, None).unwrap().rho, &truth)
            })
            .sum::<f64>()
            / 20.0
    };
    // at 4000 shots per basis the typical error sits at the 2% level
    let e4k = mean_error(4000);
    assert!(e4k < 0.025, "{e4k}");
    let e64k = mean_error(64_000);
    assert!(e64k < e4k / 3.0, "{e4k} -> {e64k}");
}

#[test]
fn mitigated_tomography_undoes_readout_bias() {
    let g = GraphState::from_edges(2, &[(0, 1)]).unwrap();
    let truth = ket_density(&graph_state_vector(&g).unwrap());
    let readout = [[[0.92, 0.08], [0.12, 0.88]]; 2];
    let counts = sample_basis_counts(&truth, &tomography_bases(2), 20_000, &readout, 8).unwrap();
    let raw = state_tomography(2, &counts, None).unwrap();
    let cm = mqnc_core::sampling::calibrate(&readout, 20_000, 9).unwrap();
    let fixed = state_tomography(2, &counts, Some(&cm)).unwrap();
    assert!(fixed.mitigated);
    let (fr, ff) = (
        fidelity(&truth, &raw.rho).unwrap(),
        fidelity(&truth, &fixed.rho).unwrap(),
    );
    assert!(ff > fr + 0.05 && ff > 0.97, "{fr} -> {ff}");
}

#[test]
fn preset_pairs_beat_prior_reference_values() {
    let noise = NoiseModel::preset("ibm-like").unwrap();
    let ideal = ket_density(&graph_state_vector(&GraphState::from_edges(2, &[(0, 1)]).unwrap()).unwrap());
    for mode in Mode::ALL {
        for pair in 0..2 {
            let (rho, _) = pair_state(mode, pair, &noise, Policy::Postselect, &ResourcePrep::Direct).unwrap();
            let f = fidelity(&ideal, &rho).unwrap();
            let cc = concurrence(&rho).unwrap();
            assert!(f > 0.57 && cc > 0.58, "{mode} {pair}: F={f} C={cc}");
        }
    }
}

#[test]
fn noiseless_teleport_channel_is_identity() {
    for mode in Mode::ALL {
        for pair in 0..2 {
            let outputs: BTreeMap<String, CMatrix> = PROCESS_INPUTS
                .iter()
                .zip(InputState::tomography_inputs())
                .map(|(l, s)| {
                    let r = run_full_experiment(
                        mode,
                        pair,
                        &s,
                        &NoiseModel::noiseless(),
                        Policy::Postselect,
                        &ResourcePrep::Direct,
                    )
                    .unwrap();
                    (l.to_string(), r.state)
                })
                .collect();
            let pt = process_tomography(&outputs).unwrap();
            assert!(frobenius_distance(&pt.choi.matrix, &ChoiMatrix::identity().matrix) < 1e-9);
            assert!((average_gate_fidelity(&pt.choi) - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn noisy_teleport_choi_is_physical() {
    let noise = NoiseModel::depolarizing(0.002, 0.03);
    let outputs: BTreeMap<String, CMatrix> = PROCESS_INPUTS
        .iter()
        .zip(InputState::tomography_inputs())
        .map(|(l, s)| {
            let r = run_full_experiment(Mode::Cross, 0, &s, &noise, Policy::Postselect, &ResourcePrep::Direct).unwrap();
            (l.to_string(), r.state)
        })
        .collect();
    let pt = process_tomography(&outputs).unwrap();
    let f = average_gate_fidelity(&pt.choi);
    assert!(f < 1.0 && f > CLASSICAL_FIDELITY);
    // the channel model agrees with direct runs on fresh inputs
    for s in InputState::fibonacci_grid(10) {
        let r = run_full_experiment(Mode::Cross, 0, &s, &noise, Policy::Postselect, &ResourcePrep::Direct).unwrap();
        assert!((per_state_fidelity(&pt.choi, &s) - r.fidelity).abs() < 1e-9);
    }
}

fn unit(x: f64) -> Complex64 {
    c(x, 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn concurrence_is_local_unitary_invariant(p in 0.0f64..1.0, a in proptest::array::uniform6(0.0f64..6.3)) {
        let rho = werner(p);
        let u = kron(&random_unitary(a[0], a[1], a[2]), &random_unitary(a[3], a[4], a[5]));
        let rotated = &u * &rho * u.adjoint();
        prop_assert!((concurrence(&rho).unwrap() - concurrence(&rotated).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn choi_projections_are_idempotent(entries in proptest::collection::vec(-1.0f64..1.0, 32)) {
        let m = CMatrix::from_fn(4, 4, |i, j| c(entries[i * 4 + j], entries[16 + i * 4 + j]));
        let raw = (&m + m.adjoint()) * unit(0.5) + CMatrix::identity(4, 4) * unit(0.5);
        let once = project_psd_trace(&raw, 2.0);
        let twice = project_psd_trace(&once, 2.0);
        prop_assert!(frobenius_distance(&once, &twice) < 1e-9);

        let outputs: BTreeMap<String, CMatrix> = PROCESS_INPUTS
            .iter()
            .zip(InputState::tomography_inputs())
            .map(|(l, s)| (l.to_string(), ChoiMatrix { matrix: raw.clone() }.apply(&s.density())))
            .collect();
        if let Ok(first) = process_tomography(&outputs) {
            let again: BTreeMap<String, CMatrix> = PROCESS_INPUTS
                .iter()
                .zip(InputState::tomography_inputs())
                .map(|(l, s)| (l.to_string(), first.choi.apply(&s.density())))
                .collect();
            let second = process_tomography(&again).unwrap();
            prop_assert!(frobenius_distance(&first.choi.matrix, &second.choi.matrix) < 1e-8);
        }
    }

    #[test]
    fn cap_average_is_continuous_in_radius(t in 0.06f64..3.0) {
        let choi = ChoiMatrix::from_channel(&Channel::AmplitudeDamping(0.4)).unwrap();
        let a = cap_average_fidelity(&choi, &CapSpec::with_points(InputState::zero(), t, 5000).unwrap());
        let b = cap_average_fidelity(&choi, &CapSpec::with_points(InputState::zero(), t + 1e-4, 5000).unwrap());
        prop_assert!((a - b).abs() < 1e-3);
    }
}
