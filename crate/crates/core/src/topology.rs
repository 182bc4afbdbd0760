//! Hardware coupling maps and graph-state compilation onto them.
//!
//! A [`RewirePlan`] is a list of native steps (CZ on a coupling edge, local
//! complementation, Y measurement) acting on physical qubits, together with
//! the logical-to-physical placement of the target graph. Every planner in
//! this module returns plans that have been replayed through
//! [`verify_plan`]; a planner may fail, but it never returns a wrong plan.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::graph::{GraphError, GraphState};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TopoError {
    #[error("unknown topology `{0}`")]
    UnknownTopology(String),
    #[error("cannot read topology: {0}")]
    Io(String),
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("qubit {qubit} out of range for {n} qubits")]
    OutOfRange { qubit: usize, n: usize },
    #[error("invalid coupling edge {{{0},{1}}}")]
    InvalidEdge(usize, usize),
    #[error("topology is disconnected")]
    Disconnected,
    #[error("map has {got} entries, target has {expected} qubits")]
    MapLength { expected: usize, got: usize },
    #[error("map places two logical qubits on physical qubit {0}")]
    MapCollision(usize),
    #[error("no free path from {a} to {b}; blocked by {blocking:?}")]
    NoPath { a: usize, b: usize, blocking: Vec<usize> },
    #[error("search budget of {budget} nodes exhausted")]
    BudgetExhausted { budget: usize },
    #[error("search region of {0} qubits is too large")]
    RegionTooLarge(usize),
    #[error("embedding needs a heavy-hex patch of at least {required_rows}x{required_cols}, got {rows}x{cols}")]
    Insufficient {
        required_rows: usize,
        required_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("operation requires a generated heavy-hex topology")]
    NotHeavyHex,
    #[error("embedding failed: {0}")]
    Embedding(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// How a topology was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    HeavyHex { rows: usize, cols: usize },
    SquareGrid { width: usize, height: usize },
    Custom,
}

/// Undirected hardware coupling graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    name: String,
    qubits: Vec<String>,
    edges: Vec<(usize, usize)>,
    generator: Generator,
    adj: Vec<Vec<usize>>,
    /// Lattice position of each qubit for generated topologies.
    coords: Option<Vec<(usize, usize)>>,
}

#[derive(Serialize, Deserialize)]
struct TopologyJson {
    name: String,
    qubits: Vec<String>,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<Generator>,
}

const FALCON_27_EDGES: [(usize, usize); 28] = [
    (0, 1),
    (1, 2),
    (1, 4),
    (2, 3),
    (3, 5),
    (4, 7),
    (5, 8),
    (6, 7),
    (7, 10),
    (8, 9),
    (8, 11),
    (10, 12),
    (11, 14),
    (12, 13),
    (12, 15),
    (13, 14),
    (14, 16),
    (15, 18),
    (16, 19),
    (17, 18),
    (18, 21),
    (19, 20),
    (19, 22),
    (21, 23),
    (22, 25),
    (23, 24),
    (24, 25),
    (25, 26),
];

impl Topology {
    /// Build from an edge list; labels default to the decimal index.
    pub fn custom(name: &str, n: usize, edges: &[(usize, usize)]) -> Result<Self, TopoError> {
        let qubits = (0..n).map(|q| q.to_string()).collect();
        Topology::build(name.to_string(), qubits, edges.to_vec(), Generator::Custom, None)
    }

    fn build(
        name: String,
        qubits: Vec<String>,
        edges: Vec<(usize, usize)>,
        generator: Generator,
        coords: Option<Vec<(usize, usize)>>,
    ) -> Result<Self, TopoError> {
        let n = qubits.len();
        let mut adj = vec![Vec::new(); n];
        let mut seen = HashSet::new();
        let mut norm = Vec::with_capacity(edges.len());
        for &(a, b) in &edges {
            if a >= n || b >= n || a == b {
                return Err(TopoError::InvalidEdge(a, b));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(TopoError::InvalidEdge(a, b));
            }
            adj[a].push(b);
            adj[b].push(a);
            norm.push(e);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        norm.sort_unstable();
        Ok(Topology {
            name,
            qubits,
            edges: norm,
            generator,
            adj,
            coords,
        })
    }

    /// IBM 27-qubit falcon coupling map.
    pub fn falcon27() -> Self {
        Topology::custom("ibm-falcon-27", 27, &FALCON_27_EDGES).expect("built-in topology is valid")
    }

    /// Heavy-hex patch with `rows` rows of `cols` qubits. Rows `r` and `r+1`
    /// are joined by bridge qubits at columns `c = 0 mod 4` (even `r`) or
    /// `c = 2 mod 4` (odd `r`).
    pub fn heavy_hex(rows: usize, cols: usize) -> Self {
        let mut index = BTreeMap::new();
        let mut coords = Vec::new();
        let mut labels = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                index.insert((2 * r, c), coords.len());
                coords.push((2 * r, c));
                labels.push(format!("r{r}c{c}"));
            }
            if r + 1 < rows {
                let start = if r % 2 == 0 { 0 } else { 2 };
                for c in (start..cols).step_by(4) {
                    index.insert((2 * r + 1, c), coords.len());
                    coords.push((2 * r + 1, c));
                    labels.push(format!("b{r}c{c}"));
                }
            }
        }
        let mut edges = Vec::new();
        for (&(y, x), &q) in &index {
            if y % 2 == 0 {
                if let Some(&right) = index.get(&(y, x + 1)) {
                    edges.push((q, right));
                }
            } else {
                edges.push((index[&(y - 1, x)], q));
                edges.push((q, index[&(y + 1, x)]));
            }
        }
        Topology::build(
            format!("heavy-hex-{rows}x{cols}"),
            labels,
            edges,
            Generator::HeavyHex { rows, cols },
            Some(coords),
        )
        .expect("generated topology is valid")
    }

    /// `width x height` square grid, row-major numbering.
    pub fn square_grid(width: usize, height: usize) -> Self {
        let mut edges = Vec::new();
        let mut coords = Vec::new();
        for y in 0..height {
            for x in 0..width {
                let q = y * width + x;
                coords.push((y, x));
                if x + 1 < width {
                    edges.push((q, q + 1));
                }
                if y + 1 < height {
                    edges.push((q, q + width));
                }
            }
        }
        let labels = (0..width * height).map(|q| q.to_string()).collect();
        Topology::build(
            format!("square-grid-{width}x{height}"),
            labels,
            edges,
            Generator::SquareGrid { width, height },
            Some(coords),
        )
        .expect("generated topology is valid")
    }

    /// Simple path `0 - 1 - ... - n-1`.
    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|q| (q - 1, q)).collect();
        Topology::custom(&format!("path-{n}"), n, &edges).expect("path is valid")
    }

    /// Built-in names: `ibm-falcon-27`, `heavy-hex-RxC`, `square-grid-WxH`,
    /// `path-N`.
    pub fn builtin(name: &str) -> Result<Self, TopoError> {
        let unknown = || TopoError::UnknownTopology(name.to_string());
        let dims = |rest: &str| -> Result<(usize, usize), TopoError> {
            let (a, b) = rest.split_once('x').ok_or_else(unknown)?;
            Ok((a.parse().map_err(|_| unknown())?, b.parse().map_err(|_| unknown())?))
        };
        if name == "ibm-falcon-27" {
            Ok(Topology::falcon27())
        } else if let Some(rest) = name.strip_prefix("heavy-hex-") {
            let (r, c) = dims(rest)?;
            Ok(Topology::heavy_hex(r, c))
        } else if let Some(rest) = name.strip_prefix("square-grid-") {
            let (w, h) = dims(rest)?;
            Ok(Topology::square_grid(w, h))
        } else if let Some(rest) = name.strip_prefix("path-") {
            Ok(Topology::path(rest.parse().map_err(|_| unknown())?))
        } else {
            Err(unknown())
        }
    }

    /// A built-in name, or otherwise a path to a topology JSON file.
    pub fn load(reference: &str) -> Result<Self, TopoError> {
        match Topology::builtin(reference) {
            Ok(t) => Ok(t),
            Err(TopoError::UnknownTopology(_)) if std::path::Path::new(reference).exists() => {
                let text = std::fs::read_to_string(reference).map_err(|e| TopoError::Io(e.to_string()))?;
                Topology::from_json_str(&text)
            }
            Err(e) => Err(e),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self, TopoError> {
        let doc: TopologyJson = serde_json::from_str(s).map_err(|e| TopoError::Json(e.to_string()))?;
        if let Some(Generator::HeavyHex { rows, cols }) = doc.generator {
            let t = Topology::heavy_hex(rows, cols);
            if t.edges.len() == doc.edges.len() {
                return Ok(Topology { name: doc.name, ..t });
            }
        }
        let edges = doc.edges.iter().map(|e| (e[0], e[1])).collect();
        Topology::build(doc.name, doc.qubits, edges, Generator::Custom, None)
    }

    pub fn to_json_string(&self) -> String {
        let doc = TopologyJson {
            name: self.name.clone(),
            qubits: self.qubits.clone(),
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
            generator: match self.generator {
                Generator::Custom => None,
                g => Some(g),
            },
        };
        serde_json::to_string(&doc).expect("topology JSON serialisation cannot fail")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.qubits.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.qubits
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn generator(&self) -> Generator {
        self.generator
    }

    pub fn coords(&self) -> Option<&[(usize, usize)]> {
        self.coords.as_deref()
    }

    pub fn neighbors(&self, q: usize) -> &[usize] {
        &self.adj[q]
    }

    pub fn is_coupled(&self, a: usize, b: usize) -> bool {
        a < self.n() && self.adj[a].binary_search(&b).is_ok()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_connected(&self) -> bool {
        self.n() == 0 || self.bfs_path(0, usize::MAX, &HashSet::new()).1.iter().all(|&d| d)
    }

    fn check(&self, q: usize) -> Result<(), TopoError> {
        if q >= self.n() {
            Err(TopoError::OutOfRange { qubit: q, n: self.n() })
        } else {
            Ok(())
        }
    }

    // BFS from `a` avoiding `blocked` (except the endpoints). Returns the
    // path to `b` if reachable and the visited mask. Neighbours are explored
    // in increasing index order, which fixes tie-breaks.
    fn bfs_path(&self, a: usize, b: usize, blocked: &HashSet<usize>) -> (Option<Vec<usize>>, Vec<bool>) {
        let mut prev = vec![usize::MAX; self.n()];
        let mut seen = vec![false; self.n()];
        let mut queue = VecDeque::from([a]);
        seen[a] = true;
        while let Some(u) = queue.pop_front() {
            if u == b {
                let mut path = vec![b];
                let mut cur = b;
                while cur != a {
                    cur = prev[cur];
                    path.push(cur);
                }
                path.reverse();
                return (Some(path), seen);
            }
            for &v in &self.adj[u] {
                if !seen[v] && (v == b || !blocked.contains(&v)) {
                    seen[v] = true;
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        (None, seen)
    }

    /// Shortest path with deterministic tie-breaking (lowest-index neighbour
    /// first).
    pub fn shortest_path(&self, a: usize, b: usize) -> Option<Vec<usize>> {
        self.bfs_path(a, b, &HashSet::new()).0
    }

    pub fn distance(&self, a: usize, b: usize) -> Option<usize> {
        self.shortest_path(a, b).map(|p| p.len() - 1)
    }
}

/// One native rewiring step on physical qubits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanStep {
    Cz(usize, usize),
    Lc(usize),
    Y(usize),
}

#[derive(Serialize, Deserialize)]
struct StepJson {
    op: String,
    qubits: Vec<usize>,
}

impl Serialize for PlanStep {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let (op, qubits) = match *self {
            PlanStep::Cz(a, b) => ("CZ", vec![a, b]),
            PlanStep::Lc(a) => ("LC", vec![a]),
            PlanStep::Y(a) => ("Y", vec![a]),
        };
        StepJson {
            op: op.to_string(),
            qubits,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PlanStep {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let j = StepJson::deserialize(d)?;
        match (j.op.as_str(), j.qubits.as_slice()) {
            ("CZ", &[a, b]) => Ok(PlanStep::Cz(a, b)),
            ("LC", &[a]) => Ok(PlanStep::Lc(a)),
            ("Y", &[a]) => Ok(PlanStep::Y(a)),
            _ => Err(D::Error::custom(format!("invalid step {} {:?}", j.op, j.qubits))),
        }
    }
}

/// Ordered native steps plus the placement `map[logical] = physical`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewirePlan {
    pub steps: Vec<PlanStep>,
    pub map: Vec<usize>,
}

impl RewirePlan {
    pub fn cz_count(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s, PlanStep::Cz(..))).count()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("plan JSON serialisation cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<Self, TopoError> {
        serde_json::from_str(s).map_err(|e| TopoError::Json(e.to_string()))
    }

    /// Qubits touched by any step or the map.
    pub fn support(&self) -> Vec<usize> {
        let mut q: Vec<usize> = self.map.clone();
        for s in &self.steps {
            match *s {
                PlanStep::Cz(a, b) => q.extend([a, b]),
                PlanStep::Lc(a) | PlanStep::Y(a) => q.push(a),
            }
        }
        q.sort_unstable();
        q.dedup();
        q
    }
}

/// Why a plan is not executable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PlanViolation {
    pub step: usize,
    pub reason: String,
}

/// Outcome of replaying a plan.
#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    /// Executable and final adjacency equals the target.
    pub valid: bool,
    pub matches_target: bool,
    pub violation: Option<PlanViolation>,
    pub cz_count: usize,
    /// Largest live degree seen at any qubit during the replay.
    pub peak_degree: usize,
    /// Final physical state (all topology qubits).
    pub graph: GraphState,
    /// Frame on the mapped qubits, in logical order.
    pub frame: Vec<crate::pauli::Pauli>,
}

/// Replay `plan` from `|+>^N` on the topology and compare with `target`.
///
/// Y measurements are replayed with outcome 0. The target must match on the
/// mapped qubits, and every other qubit must end up without edges.
pub fn verify_plan(plan: &RewirePlan, target: &GraphState, topo: &Topology) -> Result<VerifyReport, TopoError> {
    if plan.map.len() != target.n() {
        return Err(TopoError::MapLength {
            expected: target.n(),
            got: plan.map.len(),
        });
    }
    let mut used = HashSet::new();
    for &p in &plan.map {
        topo.check(p)?;
        if !used.insert(p) {
            return Err(TopoError::MapCollision(p));
        }
    }
    let mut g = GraphState::new(topo.n());
    let mut violation = None;
    let mut peak = 0;
    for (idx, step) in plan.steps.iter().enumerate() {
        let result = match *step {
            PlanStep::Cz(a, b) => {
                if a >= topo.n() || b >= topo.n() || !topo.is_coupled(a, b) {
                    Err(format!("CZ({a},{b}) is not on a coupling edge"))
                } else {
                    g.toggle_edge(a, b).map_err(|e| e.to_string())
                }
            }
            PlanStep::Lc(a) => g.local_complement(a).map_err(|e| e.to_string()),
            PlanStep::Y(a) => g.measure_y(a, 0).map(|_| ()).map_err(|e| e.to_string()),
        };
        if let Err(reason) = result {
            violation = Some(PlanViolation { step: idx, reason });
            break;
        }
        peak = peak.max(g.max_degree());
    }
    let matches_target = violation.is_none() && {
        let mapped: HashSet<usize> = plan.map.iter().copied().collect();
        let inner = (0..target.n())
            .all(|i| (i + 1..target.n()).all(|j| target.has_edge(i, j) == g.has_edge(plan.map[i], plan.map[j])));
        let outer = g.edges().iter().all(|(a, b)| mapped.contains(a) && mapped.contains(b));
        let alive = plan.map.iter().all(|&p| g.is_alive(p));
        inner && outer && alive
    };
    let frame = plan.map.iter().map(|&p| g.frame_of(p)).collect();
    Ok(VerifyReport {
        valid: violation.is_none() && matches_target,
        matches_target,
        violation,
        cz_count: plan.cz_count(),
        peak_degree: peak,
        graph: g,
        frame,
    })
}

/// The butterfly resource edge set on logical qubits `0..6`.
pub const BUTTERFLY_EDGES: [(usize, usize); 7] = [(0, 1), (4, 5), (0, 2), (2, 4), (2, 3), (1, 3), (3, 5)];

/// Physical placement used on the falcon device.
pub const FALCON_MAP: [usize; 6] = [5, 3, 8, 9, 11, 14];

pub fn butterfly_graph() -> GraphState {
    GraphState::from_edges(6, &BUTTERFLY_EDGES).expect("butterfly edges are valid")
}

/// Hand-derived seven-CZ preparation of the butterfly resource on the falcon
/// device, in application order.
pub fn falcon_plan() -> RewirePlan {
    use PlanStep::{Cz, Lc};
    let logical = [
        Cz(0, 1),
        Cz(0, 2),
        Cz(3, 2),
        Lc(0),
        Lc(1),
        Lc(2),
        Lc(3),
        Cz(5, 4),
        Cz(2, 4),
        Lc(4),
        Lc(5),
        Lc(2),
        Cz(2, 4),
        Cz(0, 2),
        Lc(4),
    ];
    let m = FALCON_MAP;
    let steps = logical
        .iter()
        .map(|s| match *s {
            Cz(a, b) => Cz(m[a], m[b]),
            Lc(a) => Lc(m[a]),
            PlanStep::Y(a) => PlanStep::Y(m[a]),
        })
        .collect();
    RewirePlan { steps, map: m.to_vec() }
}

fn find_free_path(topo: &Topology, a: usize, b: usize, avoid: &HashSet<usize>) -> Result<Vec<usize>, TopoError> {
    topo.check(a)?;
    topo.check(b)?;
    let (path, seen) = topo.bfs_path(a, b, avoid);
    path.ok_or_else(|| {
        // report the blocked qubits on the frontier of the reachable region
        let mut blocking: Vec<usize> = avoid
            .iter()
            .copied()
            .filter(|&q| q < topo.n() && topo.neighbors(q).iter().any(|&v| seen[v]))
            .collect();
        blocking.sort_unstable();
        TopoError::NoPath { a, b, blocking }
    })
}

/// Connect `a` and `b` through a free path: CZs along the path, then Y
/// measurements on the interior from `a` towards `b`.
///
/// Qubits in `avoid` may not be used as path interior.
pub fn plan_linear_contraction(
    topo: &Topology,
    a: usize,
    b: usize,
    avoid: &HashSet<usize>,
) -> Result<RewirePlan, TopoError> {
    let path = find_free_path(topo, a, b, avoid)?;
    let mut steps: Vec<PlanStep> = path.windows(2).map(|w| PlanStep::Cz(w[0], w[1])).collect();
    steps.extend(path[1..path.len() - 1].iter().map(|&q| PlanStep::Y(q)));
    let plan = RewirePlan { steps, map: vec![a, b] };
    let target = GraphState::from_edges(2, &[(0, 1)])?;
    debug_assert!(verify_plan(&plan, &target, topo)?.valid);
    Ok(plan)
}

/// Connect `hub` to both `left` and `right` through a single shared junction
/// qubit.
///
/// Round one contracts the three branch paths onto the junction with Y
/// measurements; round two measures the junction itself in Y, which leaves
/// a triangle, and a final local complementation on the hub removes the
/// `left`-`right` edge. Returns the plan and the junction qubit.
pub fn plan_junction_contraction(
    topo: &Topology,
    hub: usize,
    left: usize,
    right: usize,
    avoid: &HashSet<usize>,
) -> Result<(RewirePlan, usize), TopoError> {
    for q in [hub, left, right] {
        topo.check(q)?;
    }
    let ends = [hub, left, right];
    let mut best: Option<(usize, usize, [Vec<usize>; 3])> = None;
    for j in 0..topo.n() {
        if ends.contains(&j) || avoid.contains(&j) {
            continue;
        }
        let mut blocked: HashSet<usize> = avoid.clone();
        blocked.extend(ends);
        blocked.insert(j);
        let mut paths: Vec<Vec<usize>> = Vec::new();
        let mut ok = true;
        for &e in &ends {
            blocked.remove(&e);
            match topo.bfs_path(j, e, &blocked).0 {
                Some(p) => {
                    blocked.extend(p.iter().copied());
                    paths.push(p);
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let len: usize = paths.iter().map(Vec::len).sum();
        if best.as_ref().is_none_or(|(l, _, _)| len < *l) {
            let [p0, p1, p2]: [Vec<usize>; 3] = paths.try_into().expect("three branches");
            best = Some((len, j, [p0, p1, p2]));
        }
    }
    let (_, junction, paths) = best.ok_or_else(|| TopoError::NoPath {
        a: hub,
        b: left,
        blocking: {
            let mut v: Vec<usize> = avoid.iter().copied().collect();
            v.sort_unstable();
            v
        },
    })?;
    let mut steps = Vec::new();
    for p in &paths {
        steps.extend(p.windows(2).map(|w| PlanStep::Cz(w[0], w[1])));
    }
    for p in &paths {
        steps.extend(p[1..p.len() - 1].iter().map(|&q| PlanStep::Y(q)));
    }
    steps.push(PlanStep::Y(junction));
    steps.push(PlanStep::Lc(hub));
    let plan = RewirePlan {
        steps,
        map: vec![hub, left, right],
    };
    let target = GraphState::from_edges(3, &[(0, 1), (0, 2)])?;
    debug_assert!(verify_plan(&plan, &target, topo)?.valid);
    Ok((plan, junction))
}

// Search state over a small region: upper-triangular adjacency bits and a
// liveness mask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
struct Region {
    adj: u64,
    alive: u16,
}

fn pair_bit(m: usize, i: usize, j: usize) -> u64 {
    let (i, j) = (i.min(j), i.max(j));
    let idx = i * (2 * m - i - 1) / 2 + (j - i - 1);
    1u64 << idx
}

fn region_neighbors(m: usize, adj: u64, a: usize) -> Vec<usize> {
    (0..m).filter(|&b| b != a && adj & pair_bit(m, a, b) != 0).collect()
}

fn complement_region(m: usize, adj: u64, nbrs: &[usize]) -> u64 {
    let mut out = adj;
    for (x, &u) in nbrs.iter().enumerate() {
        for &v in &nbrs[x + 1..] {
            out ^= pair_bit(m, u, v);
        }
    }
    out
}

/// Default node budget for [`plan_target_graph`].
pub const DEFAULT_BUDGET: usize = 100_000;

/// Cheapest plan (fewest CZs) producing `target` on the mapped qubits.
///
/// Uniform-cost search over graphs on the region `map + ancillas`. CZs on
/// coupling edges cost one; local complementations and Y measurements of
/// ancillas are free. Fails explicitly once `budget` nodes have been
/// expanded.
pub fn plan_target_graph(
    topo: &Topology,
    target: &GraphState,
    map: &[usize],
    ancillas: &[usize],
    budget: usize,
) -> Result<RewirePlan, TopoError> {
    if map.len() != target.n() {
        return Err(TopoError::MapLength {
            expected: target.n(),
            got: map.len(),
        });
    }
    let region: Vec<usize> = map.iter().chain(ancillas).copied().collect();
    let m = region.len();
    if m > 11 {
        return Err(TopoError::RegionTooLarge(m));
    }
    let mut uniq = HashSet::new();
    for &q in &region {
        topo.check(q)?;
        if !uniq.insert(q) {
            return Err(TopoError::MapCollision(q));
        }
    }
    let n = target.n();
    let mut goal_adj = 0u64;
    for (i, j) in target.edges() {
        goal_adj |= pair_bit(m, i, j);
    }
    let couplings: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .filter(|&(i, j)| topo.is_coupled(region[i], region[j]))
        .collect();
    let start = Region {
        adj: 0,
        alive: ((1u32 << m) - 1) as u16,
    };
    let is_goal = |s: &Region| {
        if s.adj != goal_adj {
            return false;
        }
        (0..n).all(|i| s.alive & (1 << i) != 0)
    };
    // 0-1 BFS: free moves go to the front of the deque.
    let mut best: HashMap<Region, usize> = HashMap::from([(start, 0)]);
    let mut parent: HashMap<Region, (Region, PlanStep)> = HashMap::new();
    let mut deque = VecDeque::from([(start, 0usize)]);
    let mut expanded = 0usize;
    while let Some((s, cost)) = deque.pop_front() {
        if best.get(&s).is_some_and(|&c| c < cost) {
            continue;
        }
        if is_goal(&s) {
            let mut steps = Vec::new();
            let mut cur = s;
            while let Some(&(prev, step)) = parent.get(&cur) {
                steps.push(step);
                cur = prev;
            }
            steps.reverse();
            let plan = RewirePlan {
                steps,
                map: map.to_vec(),
            };
            let report = verify_plan(&plan, target, topo)?;
            assert!(report.valid, "search produced an invalid plan");
            return Ok(plan);
        }
        expanded += 1;
        if expanded > budget {
            return Err(TopoError::BudgetExhausted { budget });
        }
        let mut push = |next: Region, step: PlanStep, c: usize, front: bool| {
            if best.get(&next).is_none_or(|&old| c < old) {
                best.insert(next, c);
                parent.insert(next, (s, step));
                if front {
                    deque.push_front((next, c));
                } else {
                    deque.push_back((next, c));
                }
            }
        };
        for (a, &phys) in region.iter().enumerate() {
            if s.alive & (1 << a) == 0 {
                continue;
            }
            let nbrs = region_neighbors(m, s.adj, a);
            if nbrs.len() >= 2 {
                let next = Region {
                    adj: complement_region(m, s.adj, &nbrs),
                    alive: s.alive,
                };
                push(next, PlanStep::Lc(phys), cost, true);
            }
            if a >= n {
                let mut adj = complement_region(m, s.adj, &nbrs);
                for &b in &nbrs {
                    adj &= !pair_bit(m, a, b);
                }
                let next = Region {
                    adj,
                    alive: s.alive & !(1 << a),
                };
                push(next, PlanStep::Y(phys), cost, true);
            }
        }
        for &(i, j) in &couplings {
            if s.alive & (1 << i) != 0 && s.alive & (1 << j) != 0 {
                let next = Region {
                    adj: s.adj ^ pair_bit(m, i, j),
                    alive: s.alive,
                };
                push(next, PlanStep::Cz(region[i], region[j]), cost + 1, false);
            }
        }
    }
    Err(TopoError::BudgetExhausted { budget })
}

/// Two-qubit gate counts of the naive SWAP-routing comparator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BaselineCount {
    /// SWAPs counted as three CZ-equivalents each, plus one CZ per edge.
    pub cz_equivalents: usize,
    /// CNOT count (identical to CZ-equivalents: a SWAP is three CNOTs and a
    /// CZ is one CNOT up to single-qubit gates).
    pub cnots: usize,
    /// SWAP gates inserted.
    pub swaps: usize,
    /// SWAP and CZ each counted as one two-qubit gate.
    pub gates_swap_as_one: usize,
}

/// Naive SWAP baseline: every target edge is routed independently along the
/// shortest path (lowest-index tie-break) with `d - 1` SWAPs followed by one
/// CZ.
pub fn swap_baseline_count(topo: &Topology, target: &GraphState, map: &[usize]) -> Result<BaselineCount, TopoError> {
    if !topo.is_connected() {
        return Err(TopoError::Disconnected);
    }
    if map.len() != target.n() {
        return Err(TopoError::MapLength {
            expected: target.n(),
            got: map.len(),
        });
    }
    let mut swaps = 0;
    let mut czs = 0;
    for (i, j) in target.edges() {
        topo.check(map[i])?;
        topo.check(map[j])?;
        let d = topo.distance(map[i], map[j]).ok_or(TopoError::Disconnected)?;
        swaps += d - 1;
        czs += 1;
    }
    Ok(BaselineCount {
        cz_equivalents: 3 * swaps + czs,
        cnots: 3 * swaps + czs,
        swaps,
        gates_swap_as_one: swaps + czs,
    })
}

/// Host rows/columns a switch of size `k` needs for the embedding of
/// [`embed_switch_heavy_hex`].
pub fn heavy_hex_dims_for_switch(k: usize) -> (usize, usize) {
    let rows = (2 * k - 2) * EMBED_ROW_SCALE + 1;
    let cols = 3 * k * EMBED_COL_SCALE + 3;
    (rows, cols)
}

const EMBED_ROW_SCALE: usize = 2;
const EMBED_COL_SCALE: usize = 4;

/// Embed the `k x k` switch graph on a generated heavy-hex patch.
///
/// Every switch qubit sits on a degree-3 row qubit near a scaled copy of its
/// grid position, shifted along the row so that its single bridge points
/// towards its vertical neighbour; every switch edge is realised as a CZ chain along a
/// vertex-disjoint host path whose interior is then removed by Y
/// measurements, one path position per round. The returned plan is verified
/// by replay against [`crate::switch::SwitchNetwork::build`], including the
/// four-connection degree limit.
pub fn embed_switch_heavy_hex(k: usize, topo: &Topology) -> Result<RewirePlan, TopoError> {
    let Generator::HeavyHex { rows, cols } = topo.generator else {
        return Err(TopoError::NotHeavyHex);
    };
    let (required_rows, required_cols) = heavy_hex_dims_for_switch(k);
    if rows < required_rows || cols < required_cols {
        return Err(TopoError::Insufficient {
            required_rows,
            required_cols,
            rows,
            cols,
        });
    }
    let net = crate::switch::SwitchNetwork::build(k).map_err(|e| TopoError::Embedding(e.to_string()))?;
    let coords = topo.coords.as_ref().ok_or(TopoError::NotHeavyHex)?;
    let index: HashMap<(usize, usize), usize> = coords.iter().enumerate().map(|(q, &c)| (c, q)).collect();
    let target = net.graph();
    let grid = net.coords();
    let map: Vec<usize> = (0..target.n())
        .map(|v| {
            let (r, c) = grid[v];
            let y = 2 * r * EMBED_ROW_SCALE;
            let x = c * EMBED_COL_SCALE;
            // a heavy-hex row qubit has one bridge, either up or down
            let up = target.neighbors(v).iter().any(|&u| grid[u].0 < r);
            let down = target.neighbors(v).iter().any(|&u| grid[u].0 > r);
            let wanted = if up {
                y.checked_sub(1)
            } else if down {
                Some(y + 1)
            } else {
                None
            };
            (0..4)
                .map(|dx| (y, x + dx))
                .find(|&(_, x)| wanted.is_none_or(|w| index.contains_key(&(w, x))))
                .and_then(|pos| index.get(&pos).copied())
                .ok_or_else(|| TopoError::Embedding(format!("no host qubit near {:?}", (y, x))))
        })
        .collect::<Result<_, _>>()?;
    let mut blocked: HashSet<usize> = map.iter().copied().collect();
    let mut edges = target.edges();
    let host_dist = |e: &(usize, usize)| {
        let (a, b) = (coords[map[e.0]], coords[map[e.1]]);
        a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
    };
    // row segments first so that vertical detours cannot cut them off
    edges.sort_by_key(|e| (grid[e.0].0 != grid[e.1].0, host_dist(e), *e));
    let mut paths = Vec::with_capacity(edges.len());
    for &(u, v) in &edges {
        let path = find_free_path(topo, map[u], map[v], &blocked)?;
        blocked.extend(path.iter().copied());
        paths.push(path);
    }
    let mut steps = Vec::new();
    for p in &paths {
        steps.extend(p.windows(2).map(|w| PlanStep::Cz(w[0], w[1])));
    }
    let longest = paths.iter().map(Vec::len).max().unwrap_or(0);
    for round in 1..longest.saturating_sub(1) {
        for p in &paths {
            if round < p.len() - 1 {
                steps.push(PlanStep::Y(p[round]));
            }
        }
    }
    let plan = RewirePlan { steps, map };
    let report = verify_plan(&plan, target, topo)?;
    if !report.valid {
        return Err(TopoError::Embedding(format!("replay mismatch: {:?}", report.violation)));
    }
    if report.peak_degree > 4 {
        return Err(TopoError::Embedding(format!(
            "peak degree {} exceeds 4",
            report.peak_degree
        )));
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn falcon_is_heavy_hex_like() {
        let t = Topology::falcon27();
        assert_eq!(t.n(), 27);
        assert_eq!(t.edges().len(), 28);
        assert!(t.max_degree() <= 3);
        assert!(t.is_connected());
        for (a, b) in [(3, 5), (5, 8), (8, 9), (8, 11), (11, 14)] {
            assert!(t.is_coupled(a, b));
        }
    }

    #[test]
    fn generators_respect_degree_bounds() {
        let h = Topology::heavy_hex(5, 13);
        assert!(h.max_degree() <= 3);
        assert!(h.is_connected());
        let g = Topology::square_grid(4, 3);
        assert_eq!(g.max_degree(), 4);
        assert_eq!(g.edges().len(), 3 * 3 + 4 * 2);
    }

    #[test]
    fn topology_json_round_trip() {
        for t in [Topology::falcon27(), Topology::heavy_hex(3, 9), Topology::path(4)] {
            let s = t.to_json_string();
            let back = Topology::from_json_str(&s).unwrap();
            assert_eq!(back.edges(), t.edges());
            assert_eq!(back.to_json_string(), s);
        }
        assert!(Topology::from_json_str(r#"{"name":"x","qubits":["a","b"],"edges":[[0,0]]}"#).is_err());
    }

    #[test]
    fn builtin_names() {
        assert_eq!(
            Topology::builtin("heavy-hex-3x5").unwrap().generator(),
            Generator::HeavyHex { rows: 3, cols: 5 }
        );
        assert_eq!(Topology::builtin("path-3").unwrap().n(), 3);
        assert!(matches!(
            Topology::load("no-such-topology"),
            Err(TopoError::UnknownTopology(_))
        ));
    }

    #[test]
    fn plan_json_format() {
        let plan = RewirePlan {
            steps: vec![PlanStep::Cz(0, 1), PlanStep::Lc(1), PlanStep::Y(2)],
            map: vec![0, 1],
        };
        let s = plan.to_json_string();
        assert_eq!(
            s,
            r#"{"steps":[{"op":"CZ","qubits":[0,1]},{"op":"LC","qubits":[1]},{"op":"Y","qubits":[2]}],"map":[0,1]}"#
        );
        assert_eq!(RewirePlan::from_json_str(&s).unwrap(), plan);
        assert!(RewirePlan::from_json_str(r#"{"steps":[{"op":"CZ","qubits":[0]}],"map":[]}"#).is_err());
    }

    #[test]
    fn empty_plan_for_empty_target() {
        let t = Topology::path(3);
        let r = verify_plan(&RewirePlan::default(), &GraphState::new(0), &t).unwrap();
        assert!(r.valid);
        assert_eq!(r.cz_count, 0);
    }

    #[test]
    fn non_coupled_cz_is_reported() {
        let t = Topology::path(3);
        let plan = RewirePlan {
            steps: vec![PlanStep::Cz(0, 1), PlanStep::Cz(0, 2)],
            map: vec![0, 2],
        };
        let r = verify_plan(&plan, &GraphState::from_edges(2, &[(0, 1)]).unwrap(), &t).unwrap();
        assert!(!r.valid);
        assert_eq!(r.violation.unwrap().step, 1);
    }

    #[test]
    fn falcon_plan_builds_butterfly_with_seven_czs() {
        let r = verify_plan(&falcon_plan(), &butterfly_graph(), &Topology::falcon27()).unwrap();
        assert!(r.valid, "{:?}", r.violation);
        assert_eq!(r.cz_count, 7);
        assert!(r.frame.iter().all(|p| p.is_identity()));
    }

    #[test]
    fn baseline_examples() {
        let t = Topology::path(4);
        let edge = GraphState::from_edges(2, &[(0, 1)]).unwrap();
        assert_eq!(swap_baseline_count(&t, &edge, &[0, 1]).unwrap().cz_equivalents, 1);
        assert_eq!(swap_baseline_count(&t, &edge, &[0, 2]).unwrap().cz_equivalents, 4);
        let b = swap_baseline_count(&Topology::falcon27(), &butterfly_graph(), &FALCON_MAP).unwrap();
        assert_eq!(b.cz_equivalents, 19);
        assert_eq!(b.swaps, 4);
        let split = Topology::custom("split", 4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(
            swap_baseline_count(&split, &edge, &[0, 1]),
            Err(TopoError::Disconnected)
        );
    }

    #[test]
    fn linear_contraction_examples() {
        let t = Topology::path(5);
        let p = plan_linear_contraction(&t, 0, 1, &HashSet::new()).unwrap();
        assert_eq!(p.steps, vec![PlanStep::Cz(0, 1)]);
        let p = plan_linear_contraction(&t, 0, 3, &HashSet::new()).unwrap();
        assert_eq!(p.cz_count(), 3);
        assert_eq!(p.steps.iter().filter(|s| matches!(s, PlanStep::Y(_))).count(), 2);
        let err = plan_linear_contraction(&t, 0, 4, &HashSet::from([2])).unwrap_err();
        assert_eq!(
            err,
            TopoError::NoPath {
                a: 0,
                b: 4,
                blocking: vec![2]
            }
        );
    }

    #[test]
    fn junction_contraction_connects_hub_to_both_leaves() {
        // plus-shaped patch: junction 4 with arms to 1, 3, 5, 7
        let t = Topology::square_grid(3, 3);
        let (plan, junction) = plan_junction_contraction(&t, 1, 3, 5, &HashSet::new()).unwrap();
        assert_eq!(junction, 4);
        let target = GraphState::from_edges(3, &[(0, 1), (0, 2)]).unwrap();
        let r = verify_plan(&plan, &target, &t).unwrap();
        assert!(r.valid);
        let ys = plan.steps.iter().filter(|s| matches!(s, PlanStep::Y(_))).count();
        assert_eq!(ys, 1);
        assert_eq!(plan.steps.last(), Some(&PlanStep::Lc(1)));
    }

    #[test]
    fn triangle_on_path_needs_two_czs() {
        let tri = GraphState::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let plan = plan_target_graph(&Topology::path(3), &tri, &[0, 1, 2], &[], DEFAULT_BUDGET).unwrap();
        assert_eq!(plan.cz_count(), 2);
        assert_eq!(plan.steps.iter().filter(|s| matches!(s, PlanStep::Lc(_))).count(), 1);
    }

    #[test]
    fn single_edge_needs_one_cz() {
        let edge = GraphState::from_edges(2, &[(0, 1)]).unwrap();
        let plan = plan_target_graph(&Topology::path(2), &edge, &[0, 1], &[], DEFAULT_BUDGET).unwrap();
        assert_eq!(plan.steps, vec![PlanStep::Cz(0, 1)]);
    }

    #[test]
    fn switch_embeddings_replay_to_switch_graph() {
        for k in 2..=3 {
            let (r, c) = heavy_hex_dims_for_switch(k);
            let topo = Topology::heavy_hex(r, c);
            let plan = embed_switch_heavy_hex(k, &topo).unwrap();
            let net = crate::switch::SwitchNetwork::build(k).unwrap();
            let report = verify_plan(&plan, net.graph(), &topo).unwrap();
            assert!(report.valid);
            assert!(report.peak_degree <= 4);
        }
    }

    #[test]
    fn switch_embedding_rejects_small_patch() {
        let (r, c) = heavy_hex_dims_for_switch(3);
        let err = embed_switch_heavy_hex(3, &Topology::heavy_hex(r - 2, c)).unwrap_err();
        assert_eq!(
            err,
            TopoError::Insufficient {
                required_rows: r,
                required_cols: c,
                rows: r - 2,
                cols: c
            }
        );
        assert_eq!(
            embed_switch_heavy_hex(2, &Topology::falcon27()),
            Err(TopoError::NotHeavyHex)
        );
    }

    #[test]
    fn search_budget_is_enforced() {
        let plan = plan_target_graph(&Topology::falcon27(), &butterfly_graph(), &FALCON_MAP, &[], 3);
        assert_eq!(plan, Err(TopoError::BudgetExhausted { budget: 3 }));
    }
}
