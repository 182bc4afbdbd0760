//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use mqnc_core::dense::{gates, states_equal, DenseState, MeasBasis};
use mqnc_core::{GraphState, Pauli};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-9;

/// Dense `F |G>` over the live qubits of `g`, in increasing index order.
pub fn dense_of(g: &GraphState) -> DenseState {
    let (c, _) = g.compact();
    let mut d = DenseState::build_graph_state(&c.edges(), c.n()).unwrap();
    for (q, p) in c.frame().iter().enumerate() {
        if p.z {
            d.apply_gate1(q, &gates::z()).unwrap();
        }
        if p.x {
            d.apply_gate1(q, &gates::x()).unwrap();
        }
    }
    d
}

pub fn same(a: &DenseState, b: &DenseState) -> bool {
    a.n() == b.n() && states_equal(a.amplitudes().unwrap(), b.amplitudes().unwrap(), TOL)
}

pub fn random_frame(g: &mut GraphState, rng: &mut ChaCha8Rng) {
    for q in 0..g.n() {
        g.set_frame(q, Pauli::new(rng.gen(), rng.gen()));
    }
}

pub fn graph_from_mask(n: usize, mask: u64) -> GraphState {
    let mut edges = Vec::new();
    let mut bit = 0;
    for i in 0..n {
        for j in i + 1..n {
            if mask >> bit & 1 == 1 {
                edges.push((i, j));
            }
            bit += 1;
        }
    }
    GraphState::from_edges(n, &edges).unwrap()
}

pub fn random_graph(n: usize, rng: &mut ChaCha8Rng) -> GraphState {
    let pairs = n * (n - 1) / 2;
    let mask = if pairs == 0 {
        0
    } else {
        rng.gen::<u64>() & ((1u64 << pairs) - 1)
    };
    graph_from_mask(n, mask)
}

/// Index of `q` after removing the qubits in `removed`.
pub fn shifted(q: usize, removed: &[usize]) -> usize {
    q - removed.iter().filter(|&&r| r < q).count()
}

/// Runs every rule on every applicable qubit and both outcomes; returns the
/// number of checks performed.
pub fn check_all_rules(g: &GraphState) -> usize {
    let n = g.n();
    let base = dense_of(g);
    let mut checks = 0;

    for i in 0..n {
        for j in i + 1..n {
            let mut h = g.clone();
            h.toggle_edge(i, j).unwrap();
            let mut d = base.clone();
            d.apply_cz(i, j).unwrap();
            assert!(same(&d, &dense_of(&h)), "toggle({i},{j}) on {g:?}");
            checks += 1;
        }
    }

    for a in 0..n {
        let nbrs = g.neighbors(a);

        let mut h = g.clone();
        h.local_complement(a).unwrap();
        let mut d = base.clone();
        d.apply_local_complement(a, &nbrs).unwrap();
        assert!(same(&d, &dense_of(&h)), "LC({a}) on {g:?}");
        checks += 1;

        for s in 0..2u8 {
            let mut h = g.clone();
            h.measure_z(a, s).unwrap();
            let (d, p) = base.measure_basis(a, MeasBasis::Z, s, false).unwrap();
            assert!((p - 0.5).abs() < 1e-12);
            assert!(same(&d, &dense_of(&h)), "Z({a})={s} on {g:?}");

            let mut h = g.clone();
            h.measure_y(a, s).unwrap();
            let (mut d, p) = base.measure_basis(a, MeasBasis::Y, s, false).unwrap();
            assert!((p - 0.5).abs() < 1e-12);
            for &b in &nbrs {
                d.apply_gate1(shifted(b, &[a]), &gates::sdg()).unwrap();
            }
            assert!(same(&d, &dense_of(&h)), "Y({a})={s} on {g:?}");
            checks += 2;
        }

        for &b in nbrs.iter().filter(|&&b| b > a) {
            for sa in 0..2u8 {
                for sb in 0..2u8 {
                    let mut h = g.clone();
                    h.measure_x_pair(a, b, (sa, sb)).unwrap();
                    let (d, pa) = base.measure_basis(a, MeasBasis::X, sa, false).unwrap();
                    let (d, pb) = d.measure_basis(shifted(b, &[a]), MeasBasis::X, sb, false).unwrap();
                    assert!((pa * pb - 0.25).abs() < 1e-12);
                    assert!(same(&d, &dense_of(&h)), "Xpair({a},{b})=({sa},{sb}) on {g:?}");
                    checks += 1;
                }
            }
        }
    }
    checks
}
