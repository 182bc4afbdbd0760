//! Brute-force state-vector and density-matrix simulator.
//!
//! Qubit 0 is the most significant bit of a basis index, so the Pauli string
//! `"XZ"` is the matrix `X (x) Z`. A density matrix is stored row-major and is
//! treated internally as a `2n`-qubit vector (row qubits, then column
//! qubits), which lets one kernel serve both representations.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{c, CMatrix, I, ONE, ZERO};
use crate::pauli::PauliString;

pub const MAX_VECTOR_QUBITS: usize = 20;
pub const MAX_DENSITY_QUBITS: usize = 14;

const PROB_EPS: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DenseError {
    #[error("qubit {qubit} out of range for {n} qubits")]
    OutOfRange { qubit: usize, n: usize },
    #[error("{n} qubits exceeds the {limit}-qubit ceiling for this representation")]
    Capacity { n: usize, limit: usize },
    #[error("duplicate edge {{{0},{1}}}")]
    DuplicateEdge(usize, usize),
    #[error("invalid edge {{{0},{1}}}")]
    InvalidEdge(usize, usize),
    #[error("requested outcome {outcome} on qubit {qubit} has zero probability")]
    ZeroProbability { qubit: usize, outcome: u8 },
    #[error("Pauli string has length {got}, state has {expected} qubits")]
    PauliLength { expected: usize, got: usize },
    #[error("invalid probability {0}")]
    InvalidProbability(f64),
    #[error("confusion matrix row {row} sums to {sum}")]
    NotStochastic { row: usize, sum: f64 },
    #[error("operator dimension {got} does not match {expected}")]
    OperatorShape { expected: usize, got: usize },
}

/// Single-qubit projective measurement basis.
///
/// `Equator(theta)` has outcome 0 on `(|0> + e^{i theta}|1>)/sqrt 2` and
/// outcome 1 on `(|0> - e^{i theta}|1>)/sqrt 2`. `X` and `Y` are the equator
/// bases at `0` and `pi/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum MeasBasis {
    X,
    Y,
    Z,
    Equator(f64),
}

impl MeasBasis {
    /// Ket of the given outcome.
    pub fn ket(self, outcome: u8) -> [Complex64; 2] {
        let sign = if outcome == 0 { 1.0 } else { -1.0 };
        match self {
            MeasBasis::Z => {
                if outcome == 0 {
                    [ONE, ZERO]
                } else {
                    [ZERO, ONE]
                }
            }
            MeasBasis::X => MeasBasis::Equator(0.0).ket(outcome),
            MeasBasis::Y => MeasBasis::Equator(std::f64::consts::FRAC_PI_2).ket(outcome),
            MeasBasis::Equator(theta) => {
                let e = Complex64::from_polar(sign * FRAC_1_SQRT_2, theta);
                [c(FRAC_1_SQRT_2, 0.0), e]
            }
        }
    }

    pub fn from_letter(l: char) -> Option<MeasBasis> {
        match l {
            'X' => Some(MeasBasis::X),
            'Y' => Some(MeasBasis::Y),
            'Z' => Some(MeasBasis::Z),
            _ => None,
        }
    }

    /// Unitary rotating this basis onto the computational basis
    /// (`U |outcome_k> = |k>`).
    pub fn rotation(self) -> Gate1 {
        let k0 = self.ket(0);
        let k1 = self.ket(1);
        [[k0[0].conj(), k0[1].conj()], [k1[0].conj(), k1[1].conj()]]
    }
}

/// Row-major single-qubit gate.
pub type Gate1 = [[Complex64; 2]; 2];

pub mod gates {
    use super::*;

    pub fn identity() -> Gate1 {
        [[ONE, ZERO], [ZERO, ONE]]
    }
    pub fn x() -> Gate1 {
        [[ZERO, ONE], [ONE, ZERO]]
    }
    pub fn y() -> Gate1 {
        [[ZERO, -I], [I, ZERO]]
    }
    pub fn z() -> Gate1 {
        [[ONE, ZERO], [ZERO, -ONE]]
    }
    pub fn h() -> Gate1 {
        let r = c(FRAC_1_SQRT_2, 0.0);
        [[r, r], [r, -r]]
    }
    pub fn s() -> Gate1 {
        [[ONE, ZERO], [ZERO, I]]
    }
    pub fn sdg() -> Gate1 {
        [[ONE, ZERO], [ZERO, -I]]
    }
    /// `exp(-i theta X / 2)`.
    pub fn rx(theta: f64) -> Gate1 {
        let (s, co) = (theta / 2.0).sin_cos();
        [[c(co, 0.0), c(0.0, -s)], [c(0.0, -s), c(co, 0.0)]]
    }
    /// `exp(-i theta Y / 2)`.
    pub fn ry(theta: f64) -> Gate1 {
        let (s, co) = (theta / 2.0).sin_cos();
        [[c(co, 0.0), c(-s, 0.0)], [c(s, 0.0), c(co, 0.0)]]
    }
    /// `exp(-i theta Z / 2)`.
    pub fn rz(theta: f64) -> Gate1 {
        [
            [Complex64::from_polar(1.0, -theta / 2.0), ZERO],
            [ZERO, Complex64::from_polar(1.0, theta / 2.0)],
        ]
    }
    /// Vertex part of local complementation, `exp(-i pi/4 X)`.
    pub fn lc_vertex() -> Gate1 {
        rx(2.0 * FRAC_PI_4)
    }
    /// Neighbour part of local complementation, `exp(+i pi/4 Z)`.
    pub fn lc_neighbor() -> Gate1 {
        rz(-2.0 * FRAC_PI_4)
    }
    /// Prepares `cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>` from `|0>`.
    pub fn bloch_prep(theta: f64, phi: f64) -> Gate1 {
        mul(&rz(phi), &ry(theta))
    }
    pub fn mul(a: &Gate1, b: &Gate1) -> Gate1 {
        let mut out = [[ZERO; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        out
    }
    pub fn dagger(a: &Gate1) -> Gate1 {
        [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
    }
    pub fn pauli(letter: char) -> Gate1 {
        match letter {
            'I' => identity(),
            'X' => x(),
            'Y' => y(),
            'Z' => z(),
            other => panic!("not a Pauli letter: {other}"),
        }
    }
}

/// Apply a `k`-qubit operator (row-major `2^k x 2^k`) to `targets` of a
/// vector over `total` qubits.
fn apply_op(data: &mut [Complex64], total: usize, targets: &[usize], op: &[Complex64]) {
    let k = targets.len();
    let dim = 1usize << k;
    debug_assert_eq!(op.len(), dim * dim);
    let masks: Vec<usize> = targets.iter().map(|&t| 1usize << (total - 1 - t)).collect();
    let all_mask: usize = masks.iter().sum();
    let offsets: Vec<usize> = (0..dim)
        .map(|sub| (0..k).filter(|&b| sub >> (k - 1 - b) & 1 == 1).map(|b| masks[b]).sum())
        .collect();
    let mut buf = vec![ZERO; dim];
    for base in 0..data.len() {
        if base & all_mask != 0 {
            continue;
        }
        for (sub, off) in offsets.iter().enumerate() {
            buf[sub] = data[base | off];
        }
        for (row, off) in offsets.iter().enumerate() {
            let mut acc = ZERO;
            for (col, v) in buf.iter().enumerate() {
                acc += op[row * dim + col] * v;
            }
            data[base | off] = acc;
        }
    }
}

fn gate_to_vec(g: &Gate1) -> Vec<Complex64> {
    vec![g[0][0], g[0][1], g[1][0], g[1][1]]
}

fn conj_vec(v: &[Complex64]) -> Vec<Complex64> {
    v.iter().map(|z| z.conj()).collect()
}

fn cz_op() -> Vec<Complex64> {
    let mut m = vec![ZERO; 16];
    m[0] = ONE;
    m[5] = ONE;
    m[10] = ONE;
    m[15] = -ONE;
    m
}

/// Quantum channel acting on one or more qubits.
#[derive(Clone, Debug, PartialEq)]
pub enum Channel {
    /// `rho -> (1-p) rho + p Tr_S(rho) (x) I/2^k` on the k target qubits jointly.
    Depolarizing(f64),
    /// `rho -> (1-p) rho + p Z rho Z` on each target.
    PhaseFlip(f64),
    /// `rho -> (1-p) rho + p X rho X` on each target.
    BitFlip(f64),
    /// Amplitude damping with decay probability gamma on each target.
    AmplitudeDamping(f64),
    /// Explicit Kraus operators over all targets jointly (row-major `2^k x 2^k`).
    Kraus(Vec<Vec<Complex64>>),
}

impl Channel {
    /// Kraus operators for a channel on `k` qubits.
    pub fn kraus(&self, k: usize) -> Result<Vec<Vec<Complex64>>, DenseError> {
        let check = |p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(DenseError::InvalidProbability(p))
            }
        };
        let per_qubit = |single: Vec<Gate1>| -> Vec<Vec<Complex64>> {
            // tensor the single-qubit Kraus set over k qubits
            let mut ops: Vec<CMatrix> = vec![CMatrix::from_element(1, 1, ONE)];
            for _ in 0..k {
                let mut next = Vec::new();
                for o in &ops {
                    for g in &single {
                        let m = CMatrix::from_row_slice(2, 2, &gate_to_vec(g));
                        next.push(o.kronecker(&m));
                    }
                }
                ops = next;
            }
            ops.into_iter().map(|m| m.transpose().as_slice().to_vec()).collect()
        };
        Ok(match self {
            Channel::Depolarizing(p) => {
                check(*p)?;
                let d2 = 1usize << (2 * k);
                let strings = pauli_strings(k);
                strings
                    .into_iter()
                    .enumerate()
                    .map(|(idx, s)| {
                        let w = if idx == 0 {
                            1.0 - p * (d2 as f64 - 1.0) / d2 as f64
                        } else {
                            p / d2 as f64
                        };
                        let m = crate::linalg::pauli_string_matrix(&s) * c(w.sqrt(), 0.0);
                        m.transpose().as_slice().to_vec()
                    })
                    .collect()
            }
            Channel::PhaseFlip(p) => {
                check(*p)?;
                let a = (1.0 - p).sqrt();
                let b = p.sqrt();
                per_qubit(vec![scale(&gates::identity(), a), scale(&gates::z(), b)])
            }
            Channel::BitFlip(p) => {
                check(*p)?;
                let a = (1.0 - p).sqrt();
                let b = p.sqrt();
                per_qubit(vec![scale(&gates::identity(), a), scale(&gates::x(), b)])
            }
            Channel::AmplitudeDamping(g) => {
                check(*g)?;
                let k0 = [[ONE, ZERO], [ZERO, c((1.0 - g).sqrt(), 0.0)]];
                let k1 = [[ZERO, c(g.sqrt(), 0.0)], [ZERO, ZERO]];
                per_qubit(vec![k0, k1])
            }
            Channel::Kraus(ops) => {
                let dim = 1usize << k;
                for o in ops {
                    if o.len() != dim * dim {
                        return Err(DenseError::OperatorShape {
                            expected: dim * dim,
                            got: o.len(),
                        });
                    }
                }
                ops.clone()
            }
        })
    }
}

fn scale(g: &Gate1, s: f64) -> Gate1 {
    let f = c(s, 0.0);
    [[g[0][0] * f, g[0][1] * f], [g[1][0] * f, g[1][1] * f]]
}

/// All `4^k` Pauli strings on k qubits, identity first.
pub fn pauli_strings(k: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    for _ in 0..k {
        out = out
            .iter()
            .flat_map(|s| ['I', 'X', 'Y', 'Z'].iter().map(move |l| format!("{s}{l}")))
            .collect();
    }
    out
}

/// Gate-attached noise parameters.
///
/// `p2` is the depolarizing probability per two-qubit gate. Hardware figures
/// quoted per SWAP (three CNOTs) must be converted by the caller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub p1: f64,
    pub p2: f64,
    /// Per-qubit row-stochastic confusion matrices `P(reported | true)`,
    /// indexed `[true][reported]`. Qubits beyond the list read out perfectly.
    #[serde(default)]
    pub readout: Vec<[[f64; 2]; 2]>,
    /// Phase-flip probability applied to every qubit after each step.
    #[serde(default)]
    pub idle_dephasing: Option<f64>,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::noiseless()
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        NoiseModel {
            p1: 0.0,
            p2: 0.0,
            readout: Vec::new(),
            idle_dephasing: None,
        }
    }

    pub fn depolarizing(p1: f64, p2: f64) -> Self {
        NoiseModel {
            p1,
            p2,
            ..NoiseModel::noiseless()
        }
    }

    /// Same symmetric flip probability on `n` qubits.
    pub fn with_symmetric_readout(mut self, flip: f64, n: usize) -> Self {
        self.readout = vec![[[1.0 - flip, flip], [flip, 1.0 - flip]]; n];
        self
    }

    /// Named presets: `ideal`, `ibm-like` and `cairo-like` (readout on 27 qubits).
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "ideal" | "noiseless" => Some(NoiseModel::noiseless()),
            "ibm-like" => Some(NoiseModel::depolarizing(0.001, 0.02).with_symmetric_readout(0.03, 27)),
            "cairo-like" => Some(NoiseModel::depolarizing(0.0005, 0.01).with_symmetric_readout(0.02, 27)),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 3] = ["ideal", "ibm-like", "cairo-like"];

    pub fn validate(&self) -> Result<(), DenseError> {
        for p in [self.p1, self.p2].into_iter().chain(self.idle_dephasing) {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(DenseError::InvalidProbability(p));
            }
        }
        for m in &self.readout {
            for (row, r) in m.iter().enumerate() {
                if r.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                    return Err(DenseError::InvalidProbability(r[0].min(r[1])));
                }
                let sum = r[0] + r[1];
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(DenseError::NotStochastic { row, sum });
                }
            }
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.p1 == 0.0
            && self.p2 == 0.0
            && self.idle_dephasing.unwrap_or(0.0) == 0.0
            && self.readout.iter().all(|m| m[0][1] == 0.0 && m[1][0] == 0.0)
    }

    pub fn readout_for(&self, q: usize) -> [[f64; 2]; 2] {
        self.readout.get(q).copied().unwrap_or([[1.0, 0.0], [0.0, 1.0]])
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Repr {
    Vector(Vec<Complex64>),
    Density(Vec<Complex64>),
}

/// Pure or mixed state of `n` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseState {
    n: usize,
    repr: Repr,
}

impl DenseState {
    /// `|0...0>`.
    pub fn zero(n: usize) -> Result<Self, DenseError> {
        if n > MAX_VECTOR_QUBITS {
            return Err(DenseError::Capacity {
                n,
                limit: MAX_VECTOR_QUBITS,
            });
        }
        let mut v = vec![ZERO; 1 << n];
        v[0] = ONE;
        Ok(DenseState {
            n,
            repr: Repr::Vector(v),
        })
    }

    /// `|+>^n`.
    pub fn plus(n: usize) -> Result<Self, DenseError> {
        if n > MAX_VECTOR_QUBITS {
            return Err(DenseError::Capacity {
                n,
                limit: MAX_VECTOR_QUBITS,
            });
        }
        let amp = c((1.0 / (1u64 << n) as f64).sqrt(), 0.0);
        Ok(DenseState {
            n,
            repr: Repr::Vector(vec![amp; 1 << n]),
        })
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self, DenseError> {
        let n = amps.len().trailing_zeros() as usize;
        if amps.len() != 1 << n || amps.is_empty() {
            return Err(DenseError::OperatorShape {
                expected: 1 << n,
                got: amps.len(),
            });
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        Ok(DenseState {
            n,
            repr: Repr::Vector(amps.into_iter().map(|a| a / norm).collect()),
        })
    }

    pub fn from_density(m: &CMatrix) -> Result<Self, DenseError> {
        let d = m.nrows();
        let n = d.trailing_zeros() as usize;
        if d != 1 << n || m.ncols() != d {
            return Err(DenseError::OperatorShape {
                expected: 1 << n,
                got: d,
            });
        }
        if n > MAX_DENSITY_QUBITS {
            return Err(DenseError::Capacity {
                n,
                limit: MAX_DENSITY_QUBITS,
            });
        }
        Ok(DenseState {
            n,
            repr: Repr::Density(m.transpose().as_slice().to_vec()),
        })
    }

    /// `|G> = prod_{(i,j) in E} CZ_ij |+>^n`.
    pub fn build_graph_state(edges: &[(usize, usize)], n: usize) -> Result<Self, DenseError> {
        let mut seen = std::collections::HashSet::new();
        for &(i, j) in edges {
            if i == j || i >= n || j >= n {
                return Err(DenseError::InvalidEdge(i, j));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(DenseError::DuplicateEdge(i.min(j), i.max(j)));
            }
        }
        let mut s = DenseState::plus(n)?;
        if let Repr::Vector(v) = &mut s.repr {
            for (idx, amp) in v.iter_mut().enumerate() {
                let bit = |q: usize| idx >> (n - 1 - q) & 1 == 1;
                let parity = edges.iter().filter(|&&(i, j)| bit(i) && bit(j)).count() % 2;
                if parity == 1 {
                    *amp = -*amp;
                }
            }
        }
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn is_density(&self) -> bool {
        matches!(self.repr, Repr::Density(_))
    }

    pub fn amplitudes(&self) -> Option<&[Complex64]> {
        match &self.repr {
            Repr::Vector(v) => Some(v),
            Repr::Density(_) => None,
        }
    }

    /// Density matrix (computed from the vector when pure).
    pub fn density_matrix(&self) -> CMatrix {
        let d = self.dim();
        match &self.repr {
            Repr::Vector(v) => CMatrix::from_fn(d, d, |i, j| v[i] * v[j].conj()),
            Repr::Density(m) => CMatrix::from_row_slice(d, d, m),
        }
    }

    /// Switch to the density-matrix representation.
    pub fn to_density(&mut self) -> Result<(), DenseError> {
        if let Repr::Vector(v) = &self.repr {
            if self.n > MAX_DENSITY_QUBITS {
                return Err(DenseError::Capacity {
                    n: self.n,
                    limit: MAX_DENSITY_QUBITS,
                });
            }
            let d = v.len();
            let mut m = vec![ZERO; d * d];
            for i in 0..d {
                for j in 0..d {
                    m[i * d + j] = v[i] * v[j].conj();
                }
            }
            self.repr = Repr::Density(m);
        }
        Ok(())
    }

    fn check_qubit(&self, q: usize) -> Result<(), DenseError> {
        if q >= self.n {
            Err(DenseError::OutOfRange { qubit: q, n: self.n })
        } else {
            Ok(())
        }
    }

    /// Apply a unitary (or any operator) `op` on `targets`.
    pub fn apply_operator(&mut self, targets: &[usize], op: &[Complex64]) -> Result<(), DenseError> {
        for &t in targets {
            self.check_qubit(t)?;
        }
        let dim = 1usize << targets.len();
        if op.len() != dim * dim {
            return Err(DenseError::OperatorShape {
                expected: dim * dim,
                got: op.len(),
            });
        }
        let n = self.n;
        match &mut self.repr {
            Repr::Vector(v) => apply_op(v, n, targets, op),
            Repr::Density(m) => {
                apply_op(m, 2 * n, targets, op);
                let cols: Vec<usize> = targets.iter().map(|t| t + n).collect();
                apply_op(m, 2 * n, &cols, &conj_vec(op));
            }
        }
        Ok(())
    }

    pub fn apply_gate1(&mut self, q: usize, g: &Gate1) -> Result<(), DenseError> {
        self.apply_operator(&[q], &gate_to_vec(g))
    }

    pub fn apply_cz(&mut self, i: usize, j: usize) -> Result<(), DenseError> {
        if i == j {
            return Err(DenseError::InvalidEdge(i, j));
        }
        self.apply_operator(&[i, j], &cz_op())
    }

    /// Apply a Pauli string (letters only, sign ignored).
    pub fn apply_pauli_letters(&mut self, letters: &str) -> Result<(), DenseError> {
        if letters.len() != self.n {
            return Err(DenseError::PauliLength {
                expected: self.n,
                got: letters.len(),
            });
        }
        for (q, l) in letters.chars().enumerate() {
            if l != 'I' {
                self.apply_gate1(q, &gates::pauli(l))?;
            }
        }
        Ok(())
    }

    /// Local complementation unitary about `a` with neighbourhood `nbrs`.
    pub fn apply_local_complement(&mut self, a: usize, nbrs: &[usize]) -> Result<(), DenseError> {
        self.apply_gate1(a, &gates::lc_vertex())?;
        for &b in nbrs {
            self.apply_gate1(b, &gates::lc_neighbor())?;
        }
        Ok(())
    }

    /// Apply a CPTP map on `qubits`, promoting to a density matrix first.
    pub fn apply_channel(&mut self, channel: &Channel, qubits: &[usize]) -> Result<(), DenseError> {
        for &q in qubits {
            self.check_qubit(q)?;
        }
        self.to_density()?;
        if let Channel::Depolarizing(p) = *channel {
            if !(0.0..=1.0).contains(&p) {
                return Err(DenseError::InvalidProbability(p));
            }
            self.depolarize(p, qubits);
            return Ok(());
        }
        let kraus = channel.kraus(qubits.len())?;
        let n = self.n;
        let Repr::Density(m) = &mut self.repr else {
            unreachable!()
        };
        let cols: Vec<usize> = qubits.iter().map(|t| t + n).collect();
        let mut acc = vec![ZERO; m.len()];
        for k in &kraus {
            let mut tmp = m.clone();
            apply_op(&mut tmp, 2 * n, qubits, k);
            apply_op(&mut tmp, 2 * n, &cols, &conj_vec(k));
            for (a, t) in acc.iter_mut().zip(tmp) {
                *a += t;
            }
        }
        *m = acc;
        Ok(())
    }

    // rho -> (1-p) rho + p Tr_S(rho) (x) I/2^k, without enumerating Kraus
    // operators.
    fn depolarize(&mut self, p: f64, qubits: &[usize]) {
        if p == 0.0 {
            return;
        }
        let n = self.n;
        let d = self.dim();
        let Repr::Density(m) = &mut self.repr else {
            unreachable!()
        };
        let masks: Vec<usize> = qubits.iter().map(|&q| 1usize << (n - 1 - q)).collect();
        let all: usize = masks.iter().sum();
        let k = qubits.len();
        let offsets: Vec<usize> = (0..1usize << k)
            .map(|s| (0..k).filter(|&b| s >> b & 1 == 1).map(|b| masks[b]).sum())
            .collect();
        let scale = c(p / (1usize << k) as f64, 0.0);
        let keep = c(1.0 - p, 0.0);
        for r in (0..d).filter(|r| r & all == 0) {
            for cc in (0..d).filter(|cc| cc & all == 0) {
                let sum: Complex64 = offsets.iter().map(|o| m[(r | o) * d + (cc | o)]).sum();
                for ro in &offsets {
                    for co in &offsets {
                        m[(r | ro) * d + (cc | co)] *= keep;
                    }
                }
                for o in &offsets {
                    m[(r | o) * d + (cc | o)] += scale * sum;
                }
            }
        }
    }

    /// Single-qubit gate followed by `p1` depolarizing noise.
    pub fn apply_gate1_noisy(&mut self, q: usize, g: &Gate1, noise: &NoiseModel) -> Result<(), DenseError> {
        self.apply_gate1(q, g)?;
        if noise.p1 > 0.0 {
            self.apply_channel(&Channel::Depolarizing(noise.p1), &[q])?;
        }
        Ok(())
    }

    /// CZ followed by two-qubit depolarizing noise `p2`.
    pub fn apply_cz_noisy(&mut self, i: usize, j: usize, noise: &NoiseModel) -> Result<(), DenseError> {
        self.apply_cz(i, j)?;
        if noise.p2 > 0.0 {
            self.apply_channel(&Channel::Depolarizing(noise.p2), &[i, j])?;
        }
        Ok(())
    }

    /// Idle dephasing on the listed qubits, if the model has any.
    pub fn apply_idle(&mut self, qubits: &[usize], noise: &NoiseModel) -> Result<(), DenseError> {
        if let Some(p) = noise.idle_dephasing.filter(|&p| p > 0.0) {
            for &q in qubits {
                self.apply_channel(&Channel::PhaseFlip(p), &[q])?;
            }
        }
        Ok(())
    }

    pub fn norm_or_trace(&self) -> f64 {
        match &self.repr {
            Repr::Vector(v) => v.iter().map(|a| a.norm_sqr()).sum(),
            Repr::Density(m) => {
                let d = self.dim();
                (0..d).map(|i| m[i * d + i].re).sum()
            }
        }
    }

    fn normalize(&mut self) {
        let t = self.norm_or_trace();
        match &mut self.repr {
            Repr::Vector(v) => {
                let s = 1.0 / t.sqrt();
                v.iter_mut().for_each(|a| *a *= s);
            }
            Repr::Density(m) => {
                let s = 1.0 / t;
                m.iter_mut().for_each(|a| *a *= s);
            }
        }
    }

    /// Probability of `outcome` when measuring `qubit` in `basis`.
    pub fn outcome_probability(&self, qubit: usize, basis: MeasBasis, outcome: u8) -> Result<f64, DenseError> {
        self.check_qubit(qubit)?;
        let ket = basis.ket(outcome);
        let mut proj = self.clone();
        let p = projector(ket);
        proj.apply_operator_left(qubit, &p);
        Ok(match &proj.repr {
            Repr::Vector(v) => v.iter().map(|a| a.norm_sqr()).sum(),
            Repr::Density(m) => {
                let d = self.dim();
                (0..d).map(|i| m[i * d + i].re).sum()
            }
        })
    }

    // Applies `op` to the ket side only (for a density matrix: op * rho).
    fn apply_operator_left(&mut self, q: usize, op: &[Complex64]) {
        let n = self.n;
        match &mut self.repr {
            Repr::Vector(v) => apply_op(v, n, &[q], op),
            Repr::Density(m) => apply_op(m, 2 * n, &[q], op),
        }
    }

    /// Projective measurement with a requested outcome.
    ///
    /// Returns the post-measurement state and the Born probability. With
    /// `keep = true` the measured qubit stays in the register, projected
    /// onto the outcome state; otherwise it is removed and higher qubits
    /// shift down by one.
    pub fn measure_basis(
        &self,
        qubit: usize,
        basis: MeasBasis,
        outcome: u8,
        keep: bool,
    ) -> Result<(DenseState, f64), DenseError> {
        self.check_qubit(qubit)?;
        let ket = basis.ket(outcome);
        let prob = self.outcome_probability(qubit, basis, outcome)?;
        if prob < PROB_EPS {
            return Err(DenseError::ZeroProbability { qubit, outcome });
        }
        let mut out = if keep {
            let mut s = self.clone();
            s.apply_operator(&[qubit], &projector(ket))?;
            s
        } else {
            self.contract(qubit, ket)
        };
        out.normalize();
        Ok((out, prob))
    }

    /// Sample an outcome from the Born rule and measure.
    pub fn measure_random<R: Rng + ?Sized>(
        &self,
        qubit: usize,
        basis: MeasBasis,
        keep: bool,
        rng: &mut R,
    ) -> Result<(DenseState, u8, f64), DenseError> {
        let p0 = self.outcome_probability(qubit, basis, 0)?;
        let outcome = if rng.gen::<f64>() < p0 { 0 } else { 1 };
        let (s, p) = self.measure_basis(qubit, basis, outcome, keep)?;
        Ok((s, outcome, p))
    }

    // <m|_q applied to the state, removing qubit q (unnormalised).
    fn contract(&self, q: usize, ket: [Complex64; 2]) -> DenseState {
        let n = self.n;
        let bra = [ket[0].conj(), ket[1].conj()];
        let low_bits = n - 1 - q;
        let split = |j: usize, b: usize| {
            let hi = j >> low_bits;
            let lo = j & ((1 << low_bits) - 1);
            (((hi << 1) | b) << low_bits) | lo
        };
        let d_new = 1usize << (n - 1);
        match &self.repr {
            Repr::Vector(v) => {
                let out = (0..d_new)
                    .map(|j| bra[0] * v[split(j, 0)] + bra[1] * v[split(j, 1)])
                    .collect();
                DenseState {
                    n: n - 1,
                    repr: Repr::Vector(out),
                }
            }
            Repr::Density(m) => {
                let d = self.dim();
                let mut out = vec![ZERO; d_new * d_new];
                for r in 0..d_new {
                    for cc in 0..d_new {
                        let mut acc = ZERO;
                        for b in 0..2 {
                            for b2 in 0..2 {
                                acc += bra[b] * m[split(r, b) * d + split(cc, b2)] * ket[b2];
                            }
                        }
                        out[r * d_new + cc] = acc;
                    }
                }
                DenseState {
                    n: n - 1,
                    repr: Repr::Density(out),
                }
            }
        }
    }

    /// `Tr(P rho)` for a Pauli string such as `"XZ"` or `"-YY"`.
    pub fn expectation(&self, pauli: &PauliString) -> Result<f64, DenseError> {
        if pauli.len() != self.n {
            return Err(DenseError::PauliLength {
                expected: self.n,
                got: pauli.len(),
            });
        }
        let sign = pauli.sign().unwrap_or(1.0);
        let letters = pauli.letters();
        let mut applied = self.clone();
        for (q, l) in letters.chars().enumerate() {
            if l != 'I' {
                applied.apply_operator_left(q, &gate_to_vec(&gates::pauli(l)));
            }
        }
        let val = match (&self.repr, &applied.repr) {
            (Repr::Vector(a), Repr::Vector(b)) => a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>(),
            (Repr::Density(_), Repr::Density(m)) => {
                let d = self.dim();
                (0..d).map(|i| m[i * d + i]).sum()
            }
            _ => unreachable!(),
        };
        Ok(sign * val.re)
    }

    /// Convenience wrapper parsing the Pauli string.
    pub fn expectation_str(&self, pauli: &str) -> Result<f64, DenseError> {
        let p: PauliString = pauli.parse().map_err(|_| DenseError::PauliLength {
            expected: self.n,
            got: 0,
        })?;
        self.expectation(&p)
    }

    /// Reduced density matrix of `keep` (in that order).
    pub fn reduced_density(&self, keep: &[usize]) -> Result<CMatrix, DenseError> {
        for &q in keep {
            self.check_qubit(q)?;
        }
        let n = self.n;
        let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
        let dk = 1usize << keep.len();
        let dt = 1usize << traced.len();
        let index = |kb: usize, tb: usize| {
            let mut idx = 0usize;
            for (pos, &q) in keep.iter().enumerate() {
                if kb >> (keep.len() - 1 - pos) & 1 == 1 {
                    idx |= 1 << (n - 1 - q);
                }
            }
            for (pos, &q) in traced.iter().enumerate() {
                if tb >> (traced.len() - 1 - pos) & 1 == 1 {
                    idx |= 1 << (n - 1 - q);
                }
            }
            idx
        };
        let mut out = CMatrix::zeros(dk, dk);
        match &self.repr {
            Repr::Vector(v) => {
                for t in 0..dt {
                    for r in 0..dk {
                        let a = v[index(r, t)];
                        if a == ZERO {
                            continue;
                        }
                        for cc in 0..dk {
                            out[(r, cc)] += a * v[index(cc, t)].conj();
                        }
                    }
                }
            }
            Repr::Density(m) => {
                let d = self.dim();
                for t in 0..dt {
                    for r in 0..dk {
                        for cc in 0..dk {
                            out[(r, cc)] += m[index(r, t) * d + index(cc, t)];
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// `<phi| rho |phi>` for a pure target over all qubits.
    pub fn fidelity_with_pure(&self, target: &[Complex64]) -> f64 {
        match &self.repr {
            Repr::Vector(v) => v
                .iter()
                .zip(target)
                .map(|(a, t)| t.conj() * a)
                .sum::<Complex64>()
                .norm_sqr(),
            Repr::Density(m) => {
                let d = self.dim();
                let mut acc = ZERO;
                for i in 0..d {
                    for j in 0..d {
                        acc += target[i].conj() * m[i * d + j] * target[j];
                    }
                }
                acc.re
            }
        }
    }

    /// Check the representation invariants (unit norm, or Hermitian
    /// trace-one with eigenvalues above `-1e-9`).
    pub fn is_valid(&self, tol: f64) -> bool {
        match &self.repr {
            Repr::Vector(_) => (self.norm_or_trace() - 1.0).abs() < tol,
            Repr::Density(_) => {
                let m = self.density_matrix();
                let herm = (&m - m.adjoint()).iter().all(|z| z.norm() < tol);
                let (vals, _) = crate::linalg::eigh(&m);
                herm && (self.norm_or_trace() - 1.0).abs() < tol && vals.iter().all(|&v| v > -1e-9)
            }
        }
    }
}

fn projector(ket: [Complex64; 2]) -> Vec<Complex64> {
    vec![
        ket[0] * ket[0].conj(),
        ket[0] * ket[1].conj(),
        ket[1] * ket[0].conj(),
        ket[1] * ket[1].conj(),
    ]
}

/// Global-phase-insensitive equality of two pure states.
pub fn states_equal(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
    let ov: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    ov.norm_sqr() >= 1.0 - tol
}
