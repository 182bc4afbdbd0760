//! Planar `k x k` non-blocking switch built from butterfly blocks.
//!
//! The network has `k` lines. Stage `t` (for `t = 0..k`) places a 2x2 block
//! on every line pair `(i, i+1)` with `i = t mod 2`, which gives the
//! `k(k-1)/2` comparators of an odd-even transposition sorting network.
//!
//! Qubit accounting: each line starts at a source qubit. Every block a line
//! passes through contributes an in-port `p`, an out-port `q` and a link
//! qubit `l` after `q`; each block also owns two central qubits `c_in`
//! (joined to both in-ports) and `c_out` (joined to both out-ports). A line
//! that skips a stage is wired straight through to its next in-port. The
//! last link qubit of a line is its destination. This gives
//! `8 k(k-1)/2 + k = 4k(k-1) + k` qubits with no qubit shared between
//! blocks, and every qubit has degree at most 3.
//!
//! A block measured in the X-pair basis on `(c_in, c_out)` swaps its two
//! lines; Z measurements on both central qubits pass them straight. Y
//! measurements on the remaining port and link qubits then contract each
//! line into a single source-destination edge.

use serde::{Deserialize, Serialize};

use crate::graph::{GraphError, GraphState};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SwitchError {
    #[error("switch size must be at least 2, got {0}")]
    TooSmall(usize),
    #[error("not a permutation of 0..{k}: {perm:?}")]
    NotPermutation { k: usize, perm: Vec<usize> },
    #[error("schedule is for k={schedule}, network has k={network}")]
    Mismatch { network: usize, schedule: usize },
    #[error("expected {expected} outcome bits, got {got}")]
    OutcomeCount { expected: usize, got: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Cross,
    Straight,
}

/// One 2x2 block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SwitchBlock {
    pub stage: usize,
    /// Upper line; the block joins lines `line` and `line + 1`.
    pub line: usize,
    pub c_in: usize,
    pub c_out: usize,
    /// `(p, q)` for the upper and lower line.
    pub ports: [(usize, usize); 2],
    /// Link qubit after each out-port.
    pub links: [usize; 2],
}

/// The switch graph with its port annotations.
#[derive(Clone, Debug)]
pub struct SwitchNetwork {
    k: usize,
    blocks: Vec<SwitchBlock>,
    graph: GraphState,
    sources: Vec<usize>,
    destinations: Vec<usize>,
    /// Qubits of each line from source to destination, central qubits
    /// excluded.
    lines: Vec<Vec<usize>>,
    coords: Vec<(usize, usize)>,
}

impl SwitchNetwork {
    pub fn build(k: usize) -> Result<Self, SwitchError> {
        if k < 2 {
            return Err(SwitchError::TooSmall(k));
        }
        let mut coords: Vec<(usize, usize)> = Vec::new();
        let mut edges = Vec::new();
        let new_qubit = |coords: &mut Vec<(usize, usize)>, pos| {
            coords.push(pos);
            coords.len() - 1
        };
        let sources: Vec<usize> = (0..k).map(|i| new_qubit(&mut coords, (2 * i, 0))).collect();
        let mut lines: Vec<Vec<usize>> = sources.iter().map(|&s| vec![s]).collect();
        let mut blocks = Vec::new();
        for t in 0..k {
            let mut i = t % 2;
            while i + 1 < k {
                let col = 3 * t + 1;
                let mut ports = [(0, 0); 2];
                let mut links = [0; 2];
                for (slot, line) in [i, i + 1].into_iter().enumerate() {
                    let p = new_qubit(&mut coords, (2 * line, col));
                    let q = new_qubit(&mut coords, (2 * line, col + 1));
                    let l = new_qubit(&mut coords, (2 * line, col + 2));
                    edges.push((*lines[line].last().expect("line has a source"), p));
                    edges.push((p, q));
                    edges.push((q, l));
                    lines[line].extend([p, q, l]);
                    ports[slot] = (p, q);
                    links[slot] = l;
                }
                let c_in = new_qubit(&mut coords, (2 * i + 1, col));
                let c_out = new_qubit(&mut coords, (2 * i + 1, col + 1));
                edges.extend([
                    (c_in, ports[0].0),
                    (c_in, ports[1].0),
                    (c_out, ports[0].1),
                    (c_out, ports[1].1),
                ]);
                edges.push((c_in, c_out));
                blocks.push(SwitchBlock {
                    stage: t,
                    line: i,
                    c_in,
                    c_out,
                    ports,
                    links,
                });
                i += 2;
            }
        }
        let destinations: Vec<usize> = lines.iter().map(|l| *l.last().expect("nonempty line")).collect();
        let n = coords.len();
        assert_eq!(blocks.len(), k * (k - 1) / 2, "block count");
        assert_eq!(n, 4 * k * (k - 1) + k, "qubit count");
        let graph = GraphState::from_edges(n, &edges)?;
        Ok(SwitchNetwork {
            k,
            blocks,
            graph,
            sources,
            destinations,
            lines,
            coords,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn blocks(&self) -> &[SwitchBlock] {
        &self.blocks
    }

    pub fn graph(&self) -> &GraphState {
        &self.graph
    }

    pub fn n_qubits(&self) -> usize {
        self.graph.n()
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn destinations(&self) -> &[usize] {
        &self.destinations
    }

    /// Grid position `(row, column)` of every qubit: line `i` runs along
    /// row `2i`, central qubits sit on odd rows.
    pub fn coords(&self) -> &[(usize, usize)] {
        &self.coords
    }

    /// Every edge is a horizontal or vertical segment of the grid, no qubit
    /// lies strictly inside a segment, and no two segments cross.
    pub fn is_planar_layout(&self) -> bool {
        let segs: Vec<((usize, usize), (usize, usize))> = self
            .graph
            .edges()
            .iter()
            .map(|&(a, b)| (self.coords[a], self.coords[b]))
            .collect();
        let inside = |s: &((usize, usize), (usize, usize)), p: (usize, usize)| {
            let ((r0, c0), (r1, c1)) = *s;
            if r0 == r1 {
                p.0 == r0 && p.1 > c0.min(c1) && p.1 < c0.max(c1)
            } else {
                p.1 == c0 && p.0 > r0.min(r1) && p.0 < r0.max(r1)
            }
        };
        for s in &segs {
            let ((r0, c0), (r1, c1)) = *s;
            if r0 != r1 && c0 != c1 {
                return false;
            }
            if self.coords.iter().any(|&p| inside(s, p)) {
                return false;
            }
        }
        for (x, a) in segs.iter().enumerate() {
            for b in &segs[x + 1..] {
                let (h, v) = match (a.0 .0 == a.1 .0, b.0 .0 == b.1 .0) {
                    (true, false) => (a, b),
                    (false, true) => (b, a),
                    _ => continue,
                };
                let row = h.0 .0;
                let col = v.0 .1;
                let crosses = col > h.0 .1.min(h.1 .1)
                    && col < h.0 .1.max(h.1 .1)
                    && row > v.0 .0.min(v.1 .0)
                    && row < v.0 .0.max(v.1 .0);
                if crosses {
                    return false;
                }
            }
        }
        true
    }

    /// JSON export: the graph in the standard graph format plus port
    /// annotations.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "graph": self.graph.to_json(),
            "k": self.k,
            "sources": self.sources,
            "destinations": self.destinations,
            "switches": self.blocks,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasureBasis {
    Xpair,
    Z,
    Y,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measurement {
    pub qubits: Vec<usize>,
    pub basis: MeasureBasis,
}

/// Per-block settings plus the measurement rounds realising them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub k: usize,
    pub permutation: Vec<usize>,
    /// One entry per block, in block order.
    pub settings: Vec<Setting>,
    pub rounds: Vec<Vec<Measurement>>,
}

impl Schedule {
    /// Number of outcome bits consumed by [`execute_schedule`].
    pub fn outcome_count(&self) -> usize {
        self.rounds.iter().flatten().map(|m| m.qubits.len()).sum()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("schedule JSON serialisation cannot fail")
    }
}

fn check_permutation(k: usize, perm: &[usize]) -> Result<(), SwitchError> {
    let mut seen = vec![false; k];
    let ok = perm.len() == k && perm.iter().all(|&d| d < k && !std::mem::replace(&mut seen[d], true));
    if ok {
        Ok(())
    } else {
        Err(SwitchError::NotPermutation { k, perm: perm.to_vec() })
    }
}

/// Compute block settings for `perm` (source `i` goes to destination
/// `perm[i]`) by odd-even transposition: a block crosses exactly when the
/// stream on its upper line is bound for a larger destination than the one
/// on its lower line.
///
/// Rounds: one round of central-qubit measurements per stage, followed by
/// Y rounds that walk every line from source to destination, one line
/// position per round.
pub fn route(net: &SwitchNetwork, perm: &[usize]) -> Result<Schedule, SwitchError> {
    let k = net.k;
    check_permutation(k, perm)?;
    let mut on_line: Vec<usize> = perm.to_vec();
    let mut settings = Vec::with_capacity(net.blocks.len());
    let mut rounds: Vec<Vec<Measurement>> = vec![Vec::new(); k];
    for b in &net.blocks {
        let cross = on_line[b.line] > on_line[b.line + 1];
        if cross {
            on_line.swap(b.line, b.line + 1);
            rounds[b.stage].push(Measurement {
                qubits: vec![b.c_in, b.c_out],
                basis: MeasureBasis::Xpair,
            });
            settings.push(Setting::Cross);
        } else {
            rounds[b.stage].push(Measurement {
                qubits: vec![b.c_in],
                basis: MeasureBasis::Z,
            });
            rounds[b.stage].push(Measurement {
                qubits: vec![b.c_out],
                basis: MeasureBasis::Z,
            });
            settings.push(Setting::Straight);
        }
    }
    rounds.retain(|r| !r.is_empty());
    let longest = net.lines.iter().map(Vec::len).max().unwrap_or(0);
    for pos in 1..longest.saturating_sub(1) {
        let round: Vec<Measurement> = net
            .lines
            .iter()
            .filter(|line| pos < line.len() - 1)
            .map(|line| Measurement {
                qubits: vec![line[pos]],
                basis: MeasureBasis::Y,
            })
            .collect();
        rounds.push(round);
    }
    Ok(Schedule {
        k,
        permutation: perm.to_vec(),
        settings,
        rounds,
    })
}

/// Replay the schedule on the network graph with the given outcome bits
/// (consumed in schedule order).
pub fn execute_schedule(net: &SwitchNetwork, schedule: &Schedule, outcomes: &[u8]) -> Result<GraphState, SwitchError> {
    if schedule.k != net.k || schedule.settings.len() != net.blocks.len() {
        return Err(SwitchError::Mismatch {
            network: net.k,
            schedule: schedule.k,
        });
    }
    let expected = schedule.outcome_count();
    if outcomes.len() != expected {
        return Err(SwitchError::OutcomeCount {
            expected,
            got: outcomes.len(),
        });
    }
    let mut g = net.graph.clone();
    let mut bits = outcomes.iter().copied();
    let mut next = || bits.next().expect("length checked");
    for m in schedule.rounds.iter().flatten() {
        match (m.basis, m.qubits.as_slice()) {
            (MeasureBasis::Xpair, &[a, b]) => {
                let s = (next(), next());
                g.measure_x_pair(a, b, s)?;
            }
            (MeasureBasis::Z, &[a]) => {
                g.measure_z(a, next())?;
            }
            (MeasureBasis::Y, &[a]) => {
                g.measure_y(a, next())?;
            }
            _ => {
                return Err(SwitchError::Mismatch {
                    network: net.k,
                    schedule: schedule.k,
                })
            }
        }
    }
    Ok(g)
}

/// The final graph is exactly the matching `source_i - destination_perm[i]`
/// with everything else measured.
pub fn verify_matching(net: &SwitchNetwork, perm: &[usize], g: &GraphState) -> bool {
    let mut expect: Vec<(usize, usize)> = (0..net.k)
        .map(|i| {
            let (a, b) = (net.sources[i], net.destinations[perm[i]]);
            (a.min(b), a.max(b))
        })
        .collect();
    expect.sort_unstable();
    let endpoints: std::collections::HashSet<usize> = net.sources.iter().chain(&net.destinations).copied().collect();
    g.edges() == expect && (0..g.n()).all(|q| g.is_alive(q) == endpoints.contains(&q))
}

/// All permutations of `0..k` in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            return out;
        };
        let j = (i + 1..k).rev().find(|&j| cur[j] > cur[i]).expect("pivot exists");
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_formulas() {
        for (k, blocks, qubits) in [(2, 1, 10), (3, 3, 27), (4, 6, 52), (5, 10, 85)] {
            let net = SwitchNetwork::build(k).unwrap();
            assert_eq!(net.blocks().len(), blocks);
            assert_eq!(net.n_qubits(), qubits);
            assert!(net.graph().is_connected());
            assert!(net.graph().max_degree() <= 4);
            assert!(net.is_planar_layout());
        }
        assert_eq!(SwitchNetwork::build(1).unwrap_err(), SwitchError::TooSmall(1));
    }

    #[test]
    fn k2_block_is_the_butterfly() {
        let net = SwitchNetwork::build(2).unwrap();
        let b = &net.blocks()[0];
        let g = net.graph();
        assert!(g.has_edge(b.c_in, b.c_out));
        assert_eq!(g.degree(b.c_in), 3);
        assert_eq!(g.degree(b.c_out), 3);
    }

    #[test]
    fn routing_examples() {
        let net = SwitchNetwork::build(4).unwrap();
        let s = route(&net, &[0, 1, 2, 3]).unwrap();
        assert!(s.settings.iter().all(|&x| x == Setting::Straight));

        let s = route(&net, &[1, 0, 3, 2]).unwrap();
        let crossed: Vec<usize> = s
            .settings
            .iter()
            .enumerate()
            .filter(|(_, &x)| x == Setting::Cross)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(crossed.len(), 2);
        assert!(crossed.iter().all(|&i| net.blocks()[i].stage == 0));

        let net3 = SwitchNetwork::build(3).unwrap();
        let s = route(&net3, &[2, 1, 0]).unwrap();
        assert!(s.settings.iter().all(|&x| x == Setting::Cross));

        assert!(matches!(
            route(&net3, &[0, 0, 1]),
            Err(SwitchError::NotPermutation { .. })
        ));
        assert!(matches!(route(&net3, &[0, 1]), Err(SwitchError::NotPermutation { .. })));
    }

    #[test]
    fn k2_identity_and_swap() {
        let net = SwitchNetwork::build(2).unwrap();
        for perm in [[0, 1], [1, 0]] {
            let s = route(&net, &perm).unwrap();
            let g = execute_schedule(&net, &s, &vec![0; s.outcome_count()]).unwrap();
            assert!(verify_matching(&net, &perm, &g));
        }
    }

    #[test]
    fn schedule_structure() {
        let net = SwitchNetwork::build(3).unwrap();
        let s = route(&net, &[1, 2, 0]).unwrap();
        let mut seen = std::collections::HashSet::new();
        let mut y_started = false;
        for m in s.rounds.iter().flatten() {
            for &q in &m.qubits {
                assert!(seen.insert(q), "qubit {q} measured twice");
            }
            if m.basis == MeasureBasis::Y {
                y_started = true;
            } else {
                assert!(!y_started, "switch setting after cleanup");
            }
        }
        assert_eq!(seen.len(), net.n_qubits() - 2 * net.k());
        let json = s.to_json_string();
        assert!(json.contains(r#"{"qubits":["#) && json.contains(r#""basis":"Xpair""#));
        let back: Schedule = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn outcome_length_is_checked() {
        let net = SwitchNetwork::build(2).unwrap();
        let s = route(&net, &[0, 1]).unwrap();
        assert!(matches!(
            execute_schedule(&net, &s, &[0]),
            Err(SwitchError::OutcomeCount { .. })
        ));
    }

    #[test]
    fn permutation_enumeration() {
        assert_eq!(permutations(3).len(), 6);
        assert_eq!(permutations(5).len(), 120);
        assert_eq!(permutations(3)[5], vec![2, 1, 0]);
    }
}
