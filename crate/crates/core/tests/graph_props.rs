use mqnc_core::{GraphError, GraphState, Pauli};
use proptest::prelude::*;

fn arb_graph(max_n: usize) -> impl Strategy<Value = GraphState> {
    (1..=max_n)
        .prop_flat_map(|n| {
            let pairs = n * (n - 1) / 2;
            (
                Just(n),
                proptest::collection::vec(any::<bool>(), pairs),
                proptest::collection::vec(0u8..4, n),
            )
        })
        .prop_map(|(n, bits, frame)| {
            let mut edges = Vec::new();
            let mut k = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if bits[k] {
                        edges.push((i, j));
                    }
                    k += 1;
                }
            }
            let mut g = GraphState::from_edges(n, &edges).unwrap();
            for (q, f) in frame.into_iter().enumerate() {
                g.set_frame(q, Pauli::new(f & 1 == 1, f & 2 == 2));
            }
            g
        })
}

fn symmetric_and_clean(g: &GraphState) -> bool {
    (0..g.n()).all(|i| {
        !g.has_edge(i, i)
            && (0..g.n()).all(|j| g.has_edge(i, j) == g.has_edge(j, i))
            && (g.is_alive(i) || g.degree(i) == 0)
    })
}

proptest! {
    #[test]
    fn toggle_twice_is_identity(g in arb_graph(9), i in 0usize..9, j in 0usize..9) {
        prop_assume!(i < g.n() && j < g.n() && i != j);
        let mut h = g.clone();
        h.toggle_edge(i, j).unwrap();
        h.toggle_edge(i, j).unwrap();
        prop_assert_eq!(h, g);
    }

    #[test]
    fn local_complement_twice_restores_adjacency(g in arb_graph(9), a in 0usize..9) {
        prop_assume!(a < g.n());
        let mut h = g.clone();
        h.local_complement(a).unwrap();
        prop_assert!(symmetric_and_clean(&h));
        h.local_complement(a).unwrap();
        prop_assert_eq!(h.edges(), g.edges());
    }

    #[test]
    fn measured_qubits_are_inert(g in arb_graph(9), a in 0usize..9, basis in 0u8..2, bit in 0u8..2) {
        prop_assume!(a < g.n());
        let mut h = g.clone();
        if basis == 0 { h.measure_z(a, bit).unwrap(); } else { h.measure_y(a, bit).unwrap(); }
        prop_assert!(symmetric_and_clean(&h));
        prop_assert_eq!(h.degree(a), 0);
        prop_assert_eq!(h.local_complement(a), Err(GraphError::DeadQubit(a)));
        prop_assert_eq!(h.measure_z(a, 0), Err(GraphError::DeadQubit(a)));
        prop_assert_eq!(h.measure_y(a, 0), Err(GraphError::DeadQubit(a)));
        if g.n() > 1 {
            let other = (a + 1) % g.n();
            prop_assert_eq!(h.toggle_edge(a, other), Err(GraphError::DeadQubit(a)));
        }
    }

    #[test]
    fn x_pair_kills_both_and_stays_symmetric(g in arb_graph(9), bits in (0u8..2, 0u8..2)) {
        if let Some((a, b)) = g.edges().first().copied() {
            let mut h = g.clone();
            h.measure_x_pair(a, b, bits).unwrap();
            prop_assert!(!h.is_alive(a) && !h.is_alive(b));
            prop_assert!(symmetric_and_clean(&h));
        }
    }

    #[test]
    fn json_round_trip(g in arb_graph(9)) {
        let s = g.to_json_string();
        let back = GraphState::from_json_str(&s).unwrap();
        prop_assert_eq!(back.to_json_string(), s);
        prop_assert_eq!(back, g);
    }
}
