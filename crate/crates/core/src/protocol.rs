//! Butterfly network coding over a six-qubit graph state, with
//! teleportation of input states across the generated pairs.
//!
//! Logical labels: sources `0` and `4`, central qubits `2` and `3`,
//! destinations `1` and `5`. Measuring the central pair in X gives the
//! cross pairs `(0,5)`, `(4,1)`; measuring it in Z gives the straight pairs
//! `(0,1)`, `(4,5)`. Inputs are attached to the source-side qubit of a pair.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dense::{gates, DenseError, DenseState, Gate1, MeasBasis, NoiseModel};
use crate::graph::{GraphError, GraphState};
use crate::linalg::{c, CMatrix, ZERO};
use crate::pauli::Pauli;
use crate::sampling::{self, SamplingError, ShotRecord};
use crate::topology::{butterfly_graph, PlanStep, RewirePlan, BUTTERFLY_EDGES};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dense(#[from] DenseError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("pair index {0} is not 0 or 1")]
    InvalidPairIndex(usize),
    #[error("qubits {p} and {q} are not an isolated live pair")]
    NotAPair { p: usize, q: usize },
    #[error("Bloch angles (theta={theta}, phi={phi}) out of range")]
    InvalidInput { theta: f64, phi: f64 },
    #[error("{got} outcomes given, {expected} expected")]
    OutcomeCount { expected: usize, got: usize },
    #[error("plan does not prepare the butterfly resource: {0}")]
    PlanMismatch(String),
    #[error("no branches retained")]
    EmptySample,
}

/// Which pairs the network code produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Cross,
    Straight,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Cross, Mode::Straight];

    /// Output pairs as (source-side, destination-side).
    pub fn pairs(self) -> [(usize, usize); 2] {
        match self {
            Mode::Cross => [(0, 5), (4, 1)],
            Mode::Straight => [(0, 1), (4, 5)],
        }
    }

    pub fn central_basis(self) -> MeasBasis {
        match self {
            Mode::Cross => MeasBasis::X,
            Mode::Straight => MeasBasis::Z,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Cross => "cross",
            Mode::Straight => "straight",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cross" => Ok(Mode::Cross),
            "straight" => Ok(Mode::Straight),
            other => Err(format!("unknown mode `{other}` (expected cross or straight)")),
        }
    }
}

/// The six-qubit butterfly resource.
#[derive(Clone, Debug, PartialEq)]
pub struct ButterflyResource {
    pub graph: GraphState,
}

impl ButterflyResource {
    pub const CENTRAL: (usize, usize) = (2, 3);

    pub fn new() -> Self {
        ButterflyResource {
            graph: butterfly_graph(),
        }
    }
}

impl Default for ButterflyResource {
    fn default() -> Self {
        Self::new()
    }
}

/// Pairs produced by the network code, with the Pauli frame on each qubit
/// of each pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PairConfig {
    pub mode: Mode,
    pub pairs: [(usize, usize); 2],
    pub frames: [(Pauli, Pauli); 2],
}

impl PairConfig {
    pub fn frames_identity(&self) -> bool {
        self.frames.iter().all(|(a, b)| a.is_identity() && b.is_identity())
    }
}

/// Measure the central qubits of a fresh resource.
pub fn run_network_code(mode: Mode, outcomes: (u8, u8)) -> Result<(PairConfig, GraphState), ProtocolError> {
    let mut g = ButterflyResource::new().graph;
    let (a, b) = ButterflyResource::CENTRAL;
    match mode {
        Mode::Cross => {
            g.measure_x_pair(a, b, outcomes)?;
        }
        Mode::Straight => {
            g.measure_z(a, outcomes.0)?;
            g.measure_z(b, outcomes.1)?;
        }
    }
    let pairs = mode.pairs();
    let frames = pairs.map(|(p, q)| (g.frame_of(p), g.frame_of(q)));
    Ok((PairConfig { mode, pairs, frames }, g))
}

/// Pure single-qubit input `cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputState {
    pub theta: f64,
    pub phi: f64,
}

impl InputState {
    pub fn new(theta: f64, phi: f64) -> Result<Self, ProtocolError> {
        if !(0.0..=PI).contains(&theta) || !(0.0..2.0 * PI).contains(&phi) {
            return Err(ProtocolError::InvalidInput { theta, phi });
        }
        Ok(InputState { theta, phi })
    }

    pub fn zero() -> Self {
        InputState { theta: 0.0, phi: 0.0 }
    }

    pub fn ket(&self) -> [Complex64; 2] {
        [
            c((self.theta / 2.0).cos(), 0.0),
            Complex64::from_polar((self.theta / 2.0).sin(), self.phi),
        ]
    }

    pub fn density(&self) -> CMatrix {
        let k = self.ket();
        CMatrix::from_fn(2, 2, |i, j| k[i] * k[j].conj())
    }

    pub fn bloch(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        [st * self.phi.cos(), st * self.phi.sin(), ct]
    }

    /// Point of the sphere along a Bloch vector.
    pub fn from_bloch(v: [f64; 3]) -> Self {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let theta = (v[2] / r).clamp(-1.0, 1.0).acos();
        let phi = v[1].atan2(v[0]).rem_euclid(2.0 * PI);
        InputState {
            theta,
            phi: if phi >= 2.0 * PI { 0.0 } else { phi },
        }
    }

    /// `n` near-uniform points on the sphere (Fibonacci lattice).
    pub fn fibonacci_grid(n: usize) -> Vec<InputState> {
        let golden = PI * (3.0 - 5f64.sqrt());
        (0..n)
            .map(|i| {
                let z = 1.0 - (2 * i + 1) as f64 / n as f64;
                InputState {
                    theta: z.acos(),
                    phi: (i as f64 * golden).rem_euclid(2.0 * PI),
                }
            })
            .collect()
    }

    /// Inputs used for single-qubit process tomography: `|0>, |1>, |+>, |+i>`.
    pub fn tomography_inputs() -> [InputState; 4] {
        [
            InputState { theta: 0.0, phi: 0.0 },
            InputState { theta: PI, phi: 0.0 },
            InputState {
                theta: PI / 2.0,
                phi: 0.0,
            },
            InputState {
                theta: PI / 2.0,
                phi: PI / 2.0,
            },
        ]
    }
}

/// `X^x Z^z` as a gate.
pub fn pauli_gate(p: Pauli) -> Gate1 {
    let mut g = gates::identity();
    if p.z {
        g = gates::z();
    }
    if p.x {
        g = gates::mul(&gates::x(), &g);
    }
    g
}

fn apply_pauli_density(rho: &CMatrix, p: Pauli) -> CMatrix {
    let g = pauli_gate(p);
    let u = CMatrix::from_fn(2, 2, |i, j| g[i][j]);
    &u * rho * u.adjoint()
}

/// Pauli left on the far qubit `q` after teleporting over a pair with frame
/// `(frame_p, frame_q)` and X outcomes `s0` (input) and `s1` (near qubit).
pub fn teleport_byproduct(frame_p: Pauli, frame_q: Pauli, outcomes: (u8, u8)) -> Pauli {
    let s0 = (outcomes.0 == 1) ^ frame_p.x;
    let s1 = (outcomes.1 == 1) ^ frame_p.z;
    frame_q.mul(Pauli::new(s1, s0))
}

/// Result of teleporting one input over a pair.
#[derive(Clone, Debug)]
pub struct TeleportResult {
    /// Output after undoing the byproduct.
    pub corrected: DenseState,
    /// Output before correction.
    pub raw: DenseState,
    pub byproduct: Pauli,
    pub probability: f64,
}

fn dense_of_graph(g: &GraphState) -> Result<(DenseState, Vec<usize>), ProtocolError> {
    let (cg, orig) = g.compact();
    let mut d = DenseState::build_graph_state(&cg.edges(), cg.n())?;
    for (q, p) in cg.frame().iter().enumerate() {
        if !p.is_identity() {
            d.apply_gate1(q, &pauli_gate(*p))?;
        }
    }
    Ok((d, orig))
}

/// Attach `input` to `p` with a CZ and measure the input and `p` in X with
/// the given outcomes. `(p, q)` must be an isolated edge of `graph`.
pub fn teleport_over_pair(
    graph: &GraphState,
    pair: (usize, usize),
    input: &InputState,
    outcomes: (u8, u8),
) -> Result<TeleportResult, ProtocolError> {
    let (p, q) = pair;
    let ok = p < graph.n()
        && q < graph.n()
        && graph.is_alive(p)
        && graph.is_alive(q)
        && graph.has_edge(p, q)
        && graph.degree(p) == 1
        && graph.degree(q) == 1;
    if !ok {
        return Err(ProtocolError::NotAPair { p, q });
    }
    let pair_graph = graph.induced(&[p, q]);
    // induced graph: p -> 0, q -> 1
    let (mut d, _) = dense_of_graph(&pair_graph)?;
    let pi = 0;
    // input on a new last qubit
    let amps = d.amplitudes().expect("fresh graph state is pure").to_vec();
    let k = input.ket();
    let joined: Vec<Complex64> = amps.iter().flat_map(|a| [a * k[0], a * k[1]]).collect();
    d = DenseState::from_amplitudes(joined)?;
    let inq = d.n() - 1;
    d.apply_cz(inq, pi)?;
    let (d, p0) = d.measure_basis(inq, MeasBasis::X, outcomes.0, false)?;
    let (d, p1) = d.measure_basis(pi, MeasBasis::X, outcomes.1, false)?;
    let raw = d;
    let byproduct = teleport_byproduct(graph.frame_of(p), graph.frame_of(q), outcomes);
    let mut corrected = raw.clone();
    corrected.apply_gate1(0, &gates::dagger(&pauli_gate(byproduct)))?;
    Ok(TeleportResult {
        corrected,
        raw,
        byproduct,
        probability: p0 * p1,
    })
}

/// Teleport along a line `input - l1 - ... - lm`, measuring the input and
/// every line qubit but the last in X. Returns the output state and the
/// accumulated single-qubit Clifford `prod X^{s_k} H`.
pub fn teleport_along_line(input: &InputState, outcomes: &[u8]) -> Result<(DenseState, Gate1), ProtocolError> {
    let m = outcomes.len();
    if m == 0 {
        return Err(ProtocolError::OutcomeCount { expected: 1, got: 0 });
    }
    let edges: Vec<(usize, usize)> = (0..m).map(|i| (i, i + 1)).collect();
    let mut d = DenseState::build_graph_state(&edges[1..], m + 1)?;
    d.apply_gate1(0, &gates::mul(&gates::bloch_prep(input.theta, input.phi), &gates::h()))?;
    d.apply_cz(0, 1)?;
    let mut u = gates::identity();
    for &s in outcomes {
        let (next, _) = d.measure_basis(0, MeasBasis::X, s, false)?;
        d = next;
        let step = if s == 1 {
            gates::mul(&gates::x(), &gates::h())
        } else {
            gates::h()
        };
        u = gates::mul(&step, &u);
    }
    Ok((d, u))
}

/// What to do with branches whose byproduct is not the identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Keep only identity-byproduct branches.
    Postselect,
    /// Apply the Pauli correction on every branch.
    Feedforward,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Postselect => "postselect",
            Policy::Feedforward => "feedforward",
        })
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "postselect" => Ok(Policy::Postselect),
            "feedforward" => Ok(Policy::Feedforward),
            other => Err(format!("unknown policy `{other}` (expected postselect or feedforward)")),
        }
    }
}

/// How the six-qubit resource is prepared in the dense simulation.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum ResourcePrep {
    /// One CZ per resource edge.
    #[default]
    Direct,
    /// Replay a native plan (physical indices; `map[logical] = physical`).
    Plan(RewirePlan),
}

/// Prepared resource: dense register and the position of each logical
/// qubit in it.
#[derive(Clone, Debug)]
pub struct PreparedResource {
    pub state: DenseState,
    /// Register index of logical qubits `0..6`.
    pub logical: [usize; 6],
    pub cz_count: usize,
}

/// Prepare the resource in `extra` additional trailing qubits initialised
/// to `|0>`, applying gate noise from `noise`.
pub fn prepare_resource(
    prep: &ResourcePrep,
    noise: &NoiseModel,
    extra: usize,
) -> Result<PreparedResource, ProtocolError> {
    noise.validate()?;
    match prep {
        ResourcePrep::Direct => {
            let mut d = register(6, extra, noise)?;
            let all: Vec<usize> = (0..6 + extra).collect();
            for &(a, b) in &BUTTERFLY_EDGES {
                d.apply_cz_noisy(a, b, noise)?;
                let idle: Vec<usize> = all.iter().copied().filter(|&q| q != a && q != b).collect();
                d.apply_idle(&idle, noise)?;
            }
            Ok(PreparedResource {
                state: d,
                logical: [0, 1, 2, 3, 4, 5],
                cz_count: BUTTERFLY_EDGES.len(),
            })
        }
        ResourcePrep::Plan(plan) => prepare_from_plan(plan, noise, extra),
    }
}

// |+>^n (x) |0>^extra, as a density matrix when noise is present.
fn register(n: usize, extra: usize, noise: &NoiseModel) -> Result<DenseState, ProtocolError> {
    let mut d = DenseState::plus(n + extra)?;
    for q in n..n + extra {
        d.apply_gate1(q, &gates::h())?;
    }
    if !noise.is_noiseless() {
        d.to_density()?;
    }
    Ok(d)
}

fn prepare_from_plan(plan: &RewirePlan, noise: &NoiseModel, extra: usize) -> Result<PreparedResource, ProtocolError> {
    if plan.map.len() != 6 {
        return Err(ProtocolError::PlanMismatch(format!(
            "map has {} entries",
            plan.map.len()
        )));
    }
    let support = plan.support();
    let pos = |phys: usize| support.binary_search(&phys).expect("support covers every step");
    let n = support.len();
    let mut g = GraphState::new(n);
    let mut d = register(n, extra, noise)?;
    let all: Vec<usize> = (0..n + extra).collect();
    for step in &plan.steps {
        let touched: Vec<usize> = match *step {
            PlanStep::Cz(a, b) => {
                let (a, b) = (pos(a), pos(b));
                g.toggle_edge(a, b)?;
                d.apply_cz_noisy(a, b, noise)?;
                vec![a, b]
            }
            PlanStep::Lc(a) => {
                let a = pos(a);
                let nbrs = g.neighbors(a);
                g.local_complement(a)?;
                d.apply_local_complement(a, &nbrs)?;
                let mut t = vec![a];
                t.extend(nbrs);
                if noise.p1 > 0.0 {
                    for &q in &t {
                        d.apply_gate1_noisy(q, &gates::identity(), noise)?;
                    }
                }
                t
            }
            PlanStep::Y(a) => {
                let a = pos(a);
                let nbrs = g.neighbors(a);
                g.measure_y(a, 0)?;
                let (next, _) = d.measure_basis(a, MeasBasis::Y, 0, true)?;
                d = next;
                for &b in &nbrs {
                    d.apply_gate1(b, &gates::sdg())?;
                }
                vec![a]
            }
        };
        let idle: Vec<usize> = all.iter().copied().filter(|q| !touched.contains(q)).collect();
        d.apply_idle(&idle, noise)?;
    }
    let logical: [usize; 6] = std::array::from_fn(|l| pos(plan.map[l]));
    let target = butterfly_graph();
    for i in 0..6 {
        for j in i + 1..6 {
            if g.has_edge(logical[i], logical[j]) != target.has_edge(i, j) {
                return Err(ProtocolError::PlanMismatch(format!("edge ({i},{j}) differs")));
            }
        }
        if g.neighbors(logical[i]).iter().any(|v| !logical.contains(v)) {
            return Err(ProtocolError::PlanMismatch(format!(
                "logical qubit {i} has an outside neighbour"
            )));
        }
    }
    for &q in &logical {
        let f = g.frame_of(q);
        if !f.is_identity() {
            d.apply_gate1(q, &gates::dagger(&pauli_gate(f)))?;
        }
    }
    Ok(PreparedResource {
        state: d,
        logical,
        cz_count: plan.cz_count(),
    })
}

/// One reported outcome pattern of the full experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Branch {
    /// Reported bits: central qubit 2, central qubit 3, input, near qubit.
    pub outcomes: [u8; 4],
    pub probability: f64,
    pub byproduct: Pauli,
    pub retained: bool,
}

/// Outcome of the full protocol for one input.
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    /// Output density matrix on the far qubit (normalised over retained branches).
    pub state: CMatrix,
    pub fidelity: f64,
    pub retained_fraction: f64,
    pub branches: Vec<Branch>,
}

fn pair_for(mode: Mode, pair_index: usize) -> Result<(usize, usize), ProtocolError> {
    mode.pairs()
        .get(pair_index)
        .copied()
        .ok_or(ProtocolError::InvalidPairIndex(pair_index))
}

fn bits4(i: usize) -> [u8; 4] {
    std::array::from_fn(|k| (i >> (3 - k) & 1) as u8)
}

fn readout_weight(noise: &NoiseModel, qubits: &[usize], truth: &[u8], reported: &[u8]) -> f64 {
    qubits
        .iter()
        .zip(truth.iter().zip(reported))
        .map(|(&q, (&t, &r))| noise.readout_for(q)[t as usize][r as usize])
        .product()
}

/// Byproduct on the far qubit for reported outcomes `[m2, m3, s0, s1]`.
pub fn experiment_byproduct(mode: Mode, pair_index: usize, outcomes: [u8; 4]) -> Result<Pauli, ProtocolError> {
    let (p, q) = pair_for(mode, pair_index)?;
    let (_, g) = run_network_code(mode, (outcomes[0], outcomes[1]))?;
    Ok(teleport_byproduct(
        g.frame_of(p),
        g.frame_of(q),
        (outcomes[2], outcomes[3]),
    ))
}

/// Run network coding and teleport `input` across pair `pair_index`.
///
/// All sixteen outcome branches are enumerated exactly. Reported outcomes
/// pass through the readout confusion of the measured register qubits
/// (`2`, `3`, input `6`, near qubit). Under [`Policy::Postselect`] only
/// branches whose reported byproduct is the identity are kept.
pub fn run_full_experiment(
    mode: Mode,
    pair_index: usize,
    input: &InputState,
    noise: &NoiseModel,
    policy: Policy,
    prep: &ResourcePrep,
) -> Result<ExperimentResult, ProtocolError> {
    let (p, q) = pair_for(mode, pair_index)?;
    let res = prepare_resource(prep, noise, 1)?;
    let l = res.logical;
    let inq = res.state.n() - 1;
    let mut d = res.state;
    d.apply_gate1_noisy(inq, &gates::bloch_prep(input.theta, input.phi), noise)?;
    d.apply_cz_noisy(inq, l[p], noise)?;

    let measured = [l[2], l[3], inq, l[p]];
    let bases = [mode.central_basis(), mode.central_basis(), MeasBasis::X, MeasBasis::X];
    let readout_qubits = [2, 3, 6, p];
    let true_branches: Vec<([u8; 4], CMatrix)> = (0..16)
        .filter_map(|i| {
            let bits = bits4(i);
            project_branch(&d, &measured, &bases, &bits, l[q])
                .transpose()
                .map(|r| r.map(|rho| (bits, rho)))
        })
        .collect::<Result<_, ProtocolError>>()?;

    let mut out = CMatrix::from_element(2, 2, ZERO);
    let mut branches = Vec::with_capacity(16);
    for r in 0..16 {
        let reported = bits4(r);
        let byproduct = experiment_byproduct(mode, pair_index, reported)?;
        let retained = policy == Policy::Feedforward || byproduct.is_identity();
        let mut prob = 0.0;
        for (truth, rho) in &true_branches {
            let w = readout_weight(noise, &readout_qubits, truth, &reported);
            if w == 0.0 {
                continue;
            }
            prob += w * rho.trace().re;
            if retained {
                out += apply_pauli_density(rho, byproduct) * c(w, 0.0);
            }
        }
        branches.push(Branch {
            outcomes: reported,
            probability: prob,
            byproduct,
            retained,
        });
    }
    let kept: f64 = branches.iter().filter(|b| b.retained).map(|b| b.probability).sum();
    if kept <= 1e-15 {
        return Err(ProtocolError::EmptySample);
    }
    let state = out / c(kept, 0.0);
    let k = input.ket();
    let fidelity = (k[0].conj() * (state[(0, 0)] * k[0] + state[(0, 1)] * k[1])
        + k[1].conj() * (state[(1, 0)] * k[0] + state[(1, 1)] * k[1]))
        .re
        .clamp(0.0, 1.0);
    Ok(ExperimentResult {
        state,
        fidelity,
        retained_fraction: kept,
        branches,
    })
}

// Unnormalised reduced state of `keep` for one projection pattern, or None
// for a zero-probability branch.
fn project_branch(
    d: &DenseState,
    qubits: &[usize],
    bases: &[MeasBasis],
    bits: &[u8],
    keep: usize,
) -> Result<Option<CMatrix>, ProtocolError> {
    let mut s = d.clone();
    let mut prob = 1.0;
    for ((&qb, &b), &bit) in qubits.iter().zip(bases).zip(bits) {
        match s.measure_basis(qb, b, bit, true) {
            Ok((next, p)) => {
                s = next;
                prob *= p;
            }
            Err(DenseError::ZeroProbability { .. }) => return Ok(None),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Some(s.reduced_density(&[keep])? * c(prob, 0.0)))
}

/// Two-qubit state of pair `pair_index` after network coding.
///
/// Pair frames are corrected under feedforward; under postselection only
/// reported central outcomes `(0,0)` are kept. Returns the state (qubit
/// order: source side, destination side) and the retained fraction.
pub fn pair_state(
    mode: Mode,
    pair_index: usize,
    noise: &NoiseModel,
    policy: Policy,
    prep: &ResourcePrep,
) -> Result<(CMatrix, f64), ProtocolError> {
    let (p, q) = pair_for(mode, pair_index)?;
    let res = prepare_resource(prep, noise, 0)?;
    let l = res.logical;
    let basis = mode.central_basis();
    let mut out = CMatrix::from_element(4, 4, ZERO);
    let mut kept = 0.0;
    for t in 0..4usize {
        let truth = [(t >> 1) as u8, (t & 1) as u8];
        let (s, p0) = match res.state.measure_basis(l[2], basis, truth[0], true) {
            Ok(v) => v,
            Err(DenseError::ZeroProbability { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        let (s, p1) = match s.measure_basis(l[3], basis, truth[1], true) {
            Ok(v) => v,
            Err(DenseError::ZeroProbability { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        let rho = s.reduced_density(&[l[p], l[q]])?;
        for r in 0..4usize {
            let reported = [(r >> 1) as u8, (r & 1) as u8];
            let w = p0 * p1 * readout_weight(noise, &[2, 3], &truth, &reported);
            if w == 0.0 {
                continue;
            }
            let (_, g) = run_network_code(mode, (reported[0], reported[1]))?;
            let (fp, fq) = (g.frame_of(p), g.frame_of(q));
            let retained = policy == Policy::Feedforward || (fp.is_identity() && fq.is_identity());
            if retained {
                let a = pauli_gate(fp);
                let b = pauli_gate(fq);
                let u = CMatrix::from_fn(4, 4, |i, j| a[i >> 1][j >> 1] * b[i & 1][j & 1]);
                out += &u * &rho * u.adjoint() * c(w, 0.0);
                kept += w;
            }
        }
    }
    if kept <= 1e-15 {
        return Err(ProtocolError::EmptySample);
    }
    Ok((out / c(kept, 0.0), kept))
}

/// Sample shot records of the full experiment from its exact branch
/// distribution. Each record has bits `[m2, m3, s0, s1]`, its byproduct and
/// whether it is retained under `policy`.
pub fn sample_experiment(result: &ExperimentResult, shots: usize, seed: u64) -> Vec<ShotRecord> {
    let probs: Vec<f64> = result.branches.iter().map(|b| b.probability).collect();
    sampling::sample_indices(&probs, shots, seed)
        .into_iter()
        .map(|i| {
            let b = &result.branches[i];
            ShotRecord {
                bits: b.outcomes.to_vec(),
                retained: b.retained,
                byproduct: Some(b.byproduct),
            }
        })
        .collect()
}

/// Result record written by the command-line driver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub mode: Mode,
    pub pair: usize,
    pub input: InputState,
    pub policy: Policy,
    pub fidelity: f64,
    pub retained_fraction: f64,
    pub shots: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::falcon_plan;

    #[test]
    fn network_code_examples() {
        let (cfg, g) = run_network_code(Mode::Cross, (0, 0)).unwrap();
        assert_eq!(g.edges(), vec![(0, 5), (1, 4)]);
        assert!(cfg.frames_identity());
        for s in 0..4u8 {
            let (cfg, g) = run_network_code(Mode::Straight, (s >> 1, s & 1)).unwrap();
            assert_eq!(g.edges(), vec![(0, 1), (4, 5)]);
            assert_eq!(cfg.frames_identity(), s == 0);
            let (cfg, _) = run_network_code(Mode::Cross, (s >> 1, s & 1)).unwrap();
            assert_eq!(cfg.frames_identity(), s == 0);
        }
    }

    #[test]
    fn central_outcomes_are_uniform() {
        let d = DenseState::build_graph_state(&BUTTERFLY_EDGES, 6).unwrap();
        for mode in Mode::ALL {
            for s in 0..4u8 {
                let (d2, p0) = d.measure_basis(2, mode.central_basis(), s >> 1, true).unwrap();
                let (_, p1) = d2.measure_basis(3, mode.central_basis(), s & 1, true).unwrap();
                assert!((p0 * p1 - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn teleport_zero_over_ideal_pair() {
        let g = GraphState::from_edges(2, &[(0, 1)]).unwrap();
        let t = teleport_over_pair(&g, (0, 1), &InputState::zero(), (0, 0)).unwrap();
        assert!(t.byproduct.is_identity());
        assert!((t.raw.expectation_str("Z").unwrap() - 1.0).abs() < 1e-12);
        assert!((t.probability - 0.25).abs() < 1e-12);
    }

    #[test]
    fn teleport_rejects_dead_or_embedded_pairs() {
        let mut g = GraphState::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let inp = InputState::zero();
        assert!(matches!(
            teleport_over_pair(&g, (0, 1), &inp, (0, 0)),
            Err(ProtocolError::NotAPair { .. })
        ));
        g.measure_z(2, 0).unwrap();
        assert!(teleport_over_pair(&g, (0, 1), &inp, (0, 0)).is_ok());
        g.measure_z(1, 0).unwrap();
        assert!(matches!(
            teleport_over_pair(&g, (0, 1), &inp, (0, 0)),
            Err(ProtocolError::NotAPair { .. })
        ));
    }

    #[test]
    fn input_validation_and_bloch() {
        assert!(InputState::new(-0.1, 0.0).is_err());
        assert!(InputState::new(0.5, 2.0 * PI).is_err());
        let s = InputState::new(PI / 2.0, PI / 2.0).unwrap();
        let b = s.bloch();
        assert!(b[0].abs() < 1e-12 && (b[1] - 1.0).abs() < 1e-12);
        let back = InputState::from_bloch(b);
        assert!((back.theta - s.theta).abs() < 1e-12 && (back.phi - s.phi).abs() < 1e-12);
    }

    #[test]
    fn plan_prep_matches_direct_prep() {
        let direct = prepare_resource(&ResourcePrep::Direct, &NoiseModel::noiseless(), 0).unwrap();
        let plan = prepare_resource(&ResourcePrep::Plan(falcon_plan()), &NoiseModel::noiseless(), 0).unwrap();
        assert_eq!(plan.cz_count, 7);
        let a = direct.state.amplitudes().unwrap();
        // plan support is exactly the six mapped qubits, in physical order
        let mut reordered = vec![ZERO; 64];
        for (i, amp) in plan.state.amplitudes().unwrap().iter().enumerate() {
            let mut j = 0;
            for l in 0..6 {
                let bit = i >> (5 - plan.logical[l]) & 1;
                j |= bit << (5 - l);
            }
            reordered[j] = *amp;
        }
        assert!(crate::dense::states_equal(a, &reordered, 1e-10));
    }

    #[test]
    fn plan_prep_rejects_wrong_target() {
        let mut plan = falcon_plan();
        plan.steps.pop();
        assert!(matches!(
            prepare_resource(&ResourcePrep::Plan(plan), &NoiseModel::noiseless(), 0),
            Err(ProtocolError::PlanMismatch(_))
        ));
    }

    #[test]
    fn invalid_pair_index() {
        let r = run_full_experiment(
            Mode::Cross,
            2,
            &InputState::zero(),
            &NoiseModel::noiseless(),
            Policy::Postselect,
            &ResourcePrep::Direct,
        );
        assert_eq!(r.unwrap_err(), ProtocolError::InvalidPairIndex(2));
    }

    #[test]
    fn mode_and_policy_parse() {
        assert_eq!("Cross".parse::<Mode>().unwrap(), Mode::Cross);
        assert_eq!("feedforward".parse::<Policy>().unwrap(), Policy::Feedforward);
        assert!("diagonal".parse::<Mode>().is_err());
        assert_eq!(serde_json::to_string(&Mode::Straight).unwrap(), "\"straight\"");
    }
}
