//! Adjacency-level graph-state engine with Pauli byproduct tracking.
//!
//! A [`GraphState`] represents the physical state `F |G>` where `|G>` is the
//! graph state of the live qubits and `F` is the tensor product of the
//! per-qubit frame entries. Measured qubits are marked dead and keep an
//! all-zero adjacency row.
//!
//! Local-Clifford conventions:
//!
//! * Local complementation on `a` applies the unitary
//!   `exp(-i pi/4 X_a) prod_{b in N_a} exp(+i pi/4 Z_b)`, which maps `|G>`
//!   exactly onto `|tau_a(G)>`.
//! * A Y measurement on `a` leaves `S_{N_a} Z_{N_a}^s |G'>` on the remaining
//!   qubits. The engine applies the fixed correction `S^dagger` to every
//!   neighbour as part of the measurement, so only the Pauli `Z_{N_a}^s`
//!   enters the frame.
//! * Z and X-pair measurements need no correction beyond Paulis.
//!
//! Outcome bits are always injected by the caller.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::pauli::{Pauli, PauliString};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("qubit {qubit} out of range for a {n}-qubit graph")]
    OutOfRange { qubit: usize, n: usize },
    #[error("qubit {0} has already been measured")]
    DeadQubit(usize),
    #[error("operation needs two distinct qubits, got {0} twice")]
    SameQubit(usize),
    #[error("qubits {0} and {1} are not adjacent")]
    NotAdjacent(usize, usize),
    #[error("duplicate edge {{{0},{1}}}")]
    DuplicateEdge(usize, usize),
    #[error("outcome bit must be 0 or 1, got {0}")]
    InvalidOutcome(u8),
    #[error("frame has {got} entries, expected {expected}")]
    FrameLength { expected: usize, got: usize },
    #[error("malformed graph JSON: {0}")]
    Json(String),
}

/// Measurement basis of a graph-core measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    X,
    Y,
    Z,
}

/// Record of a measurement performed on a [`GraphState`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasureOutcome {
    pub qubits: Vec<usize>,
    pub basis: Basis,
    pub bits: Vec<u8>,
}

#[derive(Clone, PartialEq, Eq)]
pub struct GraphState {
    n: usize,
    adj: Vec<bool>,
    alive: Vec<bool>,
    frame: Vec<Pauli>,
}

impl fmt::Debug for GraphState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GraphState")
            .field("n", &self.n)
            .field("edges", &self.edges())
            .field("dead", &self.dead_qubits())
            .field("frame", &self.frame.iter().map(|p| p.label()).collect::<Vec<_>>())
            .finish()
    }
}

fn check_bit(b: u8) -> Result<bool, GraphError> {
    match b {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(GraphError::InvalidOutcome(other)),
    }
}

impl GraphState {
    /// `n` qubits in `|+>`, no edges.
    pub fn new(n: usize) -> Self {
        GraphState {
            n,
            adj: vec![false; n * n],
            alive: vec![true; n],
            frame: vec![Pauli::I; n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut g = GraphState::new(n);
        for &(i, j) in edges {
            g.check_pair(i, j)?;
            if g.has_edge(i, j) {
                return Err(GraphError::DuplicateEdge(i.min(j), i.max(j)));
            }
            g.set_edge(i, j, true);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_alive(&self, q: usize) -> bool {
        self.alive[q]
    }

    pub fn alive_qubits(&self) -> Vec<usize> {
        (0..self.n).filter(|&q| self.alive[q]).collect()
    }

    pub fn dead_qubits(&self) -> Vec<usize> {
        (0..self.n).filter(|&q| !self.alive[q]).collect()
    }

    pub fn frame(&self) -> &[Pauli] {
        &self.frame
    }

    pub fn frame_of(&self, q: usize) -> Pauli {
        self.frame[q]
    }

    pub fn set_frame(&mut self, q: usize, p: Pauli) {
        self.frame[q] = p;
    }

    /// Clear all byproducts (after they have been corrected).
    pub fn clear_frame(&mut self) {
        self.frame.iter_mut().for_each(|p| *p = Pauli::I);
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j]
    }

    fn set_edge(&mut self, i: usize, j: usize, v: bool) {
        self.adj[i * self.n + j] = v;
        self.adj[j * self.n + i] = v;
    }

    fn flip_edge(&mut self, i: usize, j: usize) {
        let v = !self.has_edge(i, j);
        self.set_edge(i, j, v);
    }

    pub fn neighbors(&self, a: usize) -> Vec<usize> {
        (0..self.n).filter(|&b| self.adj[a * self.n + b]).collect()
    }

    pub fn degree(&self, a: usize) -> usize {
        self.adj[a * self.n..(a + 1) * self.n].iter().filter(|&&e| e).count()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|q| self.degree(q)).max().unwrap_or(0)
    }

    /// Sorted edge list, `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&e| e).count() / 2
    }

    /// Adjacency equality, ignoring frames and liveness.
    pub fn same_adjacency(&self, other: &GraphState) -> bool {
        self.n == other.n && self.adj == other.adj
    }

    /// Whether the live part of the graph is connected.
    pub fn is_connected(&self) -> bool {
        let live = self.alive_qubits();
        let Some(&start) = live.first() else { return true };
        let mut seen = vec![false; self.n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            for w in self.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        live.iter().all(|&q| seen[q])
    }

    fn check_live(&self, q: usize) -> Result<(), GraphError> {
        if q >= self.n {
            return Err(GraphError::OutOfRange { qubit: q, n: self.n });
        }
        if !self.alive[q] {
            return Err(GraphError::DeadQubit(q));
        }
        Ok(())
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<(), GraphError> {
        self.check_live(i)?;
        self.check_live(j)?;
        if i == j {
            return Err(GraphError::SameQubit(i));
        }
        Ok(())
    }

    fn kill(&mut self, a: usize) {
        for b in 0..self.n {
            self.adj[a * self.n + b] = false;
            self.adj[b * self.n + a] = false;
        }
        self.alive[a] = false;
        self.frame[a] = Pauli::I;
    }

    fn complement_within(&mut self, set: &[usize]) {
        for (k, &u) in set.iter().enumerate() {
            for &v in &set[k + 1..] {
                self.flip_edge(u, v);
            }
        }
    }

    /// Apply CZ between `i` and `j` (toggles the edge).
    ///
    /// Frame entries are pushed through the gate: an X byproduct on one end
    /// picks up a Z on the other.
    pub fn toggle_edge(&mut self, i: usize, j: usize) -> Result<(), GraphError> {
        self.check_pair(i, j)?;
        let (fi, fj) = (self.frame[i], self.frame[j]);
        if fi.x {
            self.frame[j] = self.frame[j].mul(Pauli::Z);
        }
        if fj.x {
            self.frame[i] = self.frame[i].mul(Pauli::Z);
        }
        self.flip_edge(i, j);
        Ok(())
    }

    /// Local complementation on `a` (complements the neighbourhood of `a`).
    pub fn local_complement(&mut self, a: usize) -> Result<(), GraphError> {
        self.check_live(a)?;
        let nbrs = self.neighbors(a);
        // conjugation by exp(-i pi/4 X): Z <-> Y on a
        let fa = self.frame[a];
        if fa.z {
            self.frame[a] = Pauli::new(!fa.x, fa.z);
        }
        // conjugation by exp(+i pi/4 Z): X <-> Y on neighbours
        for &b in &nbrs {
            let fb = self.frame[b];
            if fb.x {
                self.frame[b] = Pauli::new(fb.x, !fb.z);
            }
        }
        self.complement_within(&nbrs);
        Ok(())
    }

    /// Z measurement on `a` with outcome `bit`: removes `a`.
    pub fn measure_z(&mut self, a: usize, bit: u8) -> Result<MeasureOutcome, GraphError> {
        self.check_live(a)?;
        let s = check_bit(bit)? ^ self.frame[a].x;
        let nbrs = self.neighbors(a);
        if s {
            for &b in &nbrs {
                self.frame[b] = self.frame[b].mul(Pauli::Z);
            }
        }
        self.kill(a);
        Ok(MeasureOutcome {
            qubits: vec![a],
            basis: Basis::Z,
            bits: vec![bit],
        })
    }

    /// Y measurement on `a` with outcome `bit`: removes `a` and complements
    /// its neighbourhood. Includes the `S^dagger` correction on neighbours.
    pub fn measure_y(&mut self, a: usize, bit: u8) -> Result<MeasureOutcome, GraphError> {
        self.check_live(a)?;
        let fa = self.frame[a];
        let s = check_bit(bit)? ^ (fa.x ^ fa.z);
        let nbrs = self.neighbors(a);
        for &b in &nbrs {
            // conjugation by S^dagger: X <-> Y
            let fb = self.frame[b];
            let mut p = if fb.x { Pauli::new(fb.x, !fb.z) } else { fb };
            if s {
                p = p.mul(Pauli::Z);
            }
            self.frame[b] = p;
        }
        self.kill(a);
        self.complement_within(&nbrs);
        Ok(MeasureOutcome {
            qubits: vec![a],
            basis: Basis::Y,
            bits: vec![bit],
        })
    }

    /// X measurements on the adjacent pair `(a, b)`: removes both and
    /// complements the bipartite graph between `N_a \ {b}` and `N_b \ {a}`.
    ///
    /// Byproducts: `Z^{s_b}` on `N_a \ {b}`, `Z^{s_a}` on `N_b \ {a}`, and an
    /// extra `Z` on every common neighbour.
    pub fn measure_x_pair(&mut self, a: usize, b: usize, bits: (u8, u8)) -> Result<MeasureOutcome, GraphError> {
        self.check_pair(a, b)?;
        if !self.has_edge(a, b) {
            return Err(GraphError::NotAdjacent(a, b));
        }
        let sa = check_bit(bits.0)? ^ self.frame[a].z;
        let sb = check_bit(bits.1)? ^ self.frame[b].z;
        let na: Vec<usize> = self.neighbors(a).into_iter().filter(|&v| v != b).collect();
        let nb: Vec<usize> = self.neighbors(b).into_iter().filter(|&v| v != a).collect();
        self.kill(a);
        self.kill(b);
        for &u in &na {
            for &v in &nb {
                if u != v {
                    self.flip_edge(u, v);
                }
            }
        }
        for &u in &na {
            let mut z = sb;
            if nb.contains(&u) {
                z ^= true;
            }
            if z {
                self.frame[u] = self.frame[u].mul(Pauli::Z);
            }
        }
        for &v in &nb {
            if sa {
                self.frame[v] = self.frame[v].mul(Pauli::Z);
            }
        }
        Ok(MeasureOutcome {
            qubits: vec![a, b],
            basis: Basis::X,
            bits: vec![bits.0, bits.1],
        })
    }

    /// Stabilizer generators `S_i = ± X_i prod_j Z_j^{adj_ij}` of the current
    /// state, with signs induced by the frame. Requires all qubits alive.
    pub fn to_stabilizers(&self) -> Result<Vec<PauliString>, GraphError> {
        if let Some(q) = (0..self.n).find(|&q| !self.alive[q]) {
            return Err(GraphError::DeadQubit(q));
        }
        Ok((0..self.n)
            .map(|i| {
                let mut x = vec![false; self.n];
                let mut z = vec![false; self.n];
                x[i] = true;
                let mut anti = self.frame[i].z;
                for j in self.neighbors(i) {
                    z[j] = true;
                    anti ^= self.frame[j].x;
                }
                PauliString::from_parts(if anti { 2 } else { 0 }, x, z)
            })
            .collect())
    }

    /// Restrict to the live qubits, relabelled in increasing order. Returns
    /// the compacted graph and the original index of each new qubit.
    pub fn compact(&self) -> (GraphState, Vec<usize>) {
        let live = self.alive_qubits();
        let mut g = GraphState::new(live.len());
        for (a, &u) in live.iter().enumerate() {
            g.frame[a] = self.frame[u];
            for (b, &v) in live.iter().enumerate().skip(a + 1) {
                if self.has_edge(u, v) {
                    g.set_edge(a, b, true);
                }
            }
        }
        (g, live)
    }

    /// Induced subgraph on `qubits` (in the given order).
    pub fn induced(&self, qubits: &[usize]) -> GraphState {
        let mut g = GraphState::new(qubits.len());
        for (a, &u) in qubits.iter().enumerate() {
            g.frame[a] = self.frame[u];
            g.alive[a] = self.alive[u];
            for (b, &v) in qubits.iter().enumerate().skip(a + 1) {
                if self.has_edge(u, v) {
                    g.set_edge(a, b, true);
                }
            }
        }
        g
    }

    pub fn to_json(&self) -> GraphJson {
        let dead = self.dead_qubits();
        GraphJson {
            n: self.n,
            edges: self.edges().into_iter().map(|(i, j)| [i, j]).collect(),
            frame: self.frame.clone(),
            dead,
        }
    }

    pub fn from_json(doc: &GraphJson) -> Result<Self, GraphError> {
        if doc.frame.len() != doc.n && !doc.frame.is_empty() {
            return Err(GraphError::FrameLength {
                expected: doc.n,
                got: doc.frame.len(),
            });
        }
        let edges: Vec<(usize, usize)> = doc.edges.iter().map(|e| (e[0], e[1])).collect();
        let mut g = GraphState::from_edges(doc.n, &edges)?;
        if !doc.frame.is_empty() {
            g.frame = doc.frame.clone();
        }
        for &q in &doc.dead {
            if q >= doc.n {
                return Err(GraphError::OutOfRange { qubit: q, n: doc.n });
            }
            if g.degree(q) != 0 {
                return Err(GraphError::Json(format!("dead qubit {q} still has edges")));
            }
            g.alive[q] = false;
        }
        Ok(g)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_json()).expect("graph JSON serialisation cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<Self, GraphError> {
        let doc: GraphJson = serde_json::from_str(s).map_err(|e| GraphError::Json(e.to_string()))?;
        GraphState::from_json(&doc)
    }
}

/// Wire format: `{"n": 3, "edges": [[0,1],[1,2]], "frame": ["I","Z","I"]}`.
///
/// `dead` lists measured qubits and is omitted when empty.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(default)]
    pub frame: Vec<Pauli>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dead: Vec<usize>,
}
