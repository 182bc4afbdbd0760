//! Figures of merit: state and process fidelities, entanglement measures,
//! the graph-state GME witness, stabilizer measurement planning,
//! tomography and spherical-cap teleportation averages.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{Channel, DenseError, DenseState, MeasBasis};
use crate::graph::{GraphError, GraphState};
use crate::linalg::{
    c, eigh, frobenius_distance, hermitize, inv_sqrtm, kron, partial_trace, pauli_string_matrix, project_psd_trace,
    sqrtm_psd, trace, CMatrix, I, ONE, ZERO,
};
use crate::pauli::PauliString;
use crate::protocol::InputState;
use crate::sampling::{self, stream_seed, ConfusionMatrix, SamplingError};

/// Smallest cap radius accepted by the cap integrator (radians).
pub const CAP_CUTOFF: f64 = 0.05;
/// Default number of integration points per cap.
pub const CAP_POINTS: usize = 20_000;
/// Average fidelity reachable with classical communication alone.
pub const CLASSICAL_FIDELITY: f64 = 2.0 / 3.0;
/// Decay probability of the biased amplitude-damping preset.
pub const AMPLITUDE_DAMPING_PRESET: f64 = 0.9;
/// Largest graph accepted by the bipartition search.
pub const MAX_WITNESS_QUBITS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {expected} vs {got}")]
    Dimension { expected: usize, got: usize },
    #[error("expected a two-qubit state, got dimension {0}")]
    NotTwoQubit(usize),
    #[error("{0} qubits exceeds the limit of {MAX_WITNESS_QUBITS}")]
    TooManyQubits(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dense(#[from] DenseError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("missing measurement basis `{0}`")]
    MissingBasis(String),
    #[error("invalid basis label `{0}`")]
    InvalidBasis(String),
    #[error("no counts for basis `{0}`")]
    EmptyBasis(String),
    #[error("missing process-tomography input `{0}`")]
    MissingInput(String),
    #[error("cap radius {theta0} below cutoff {cutoff}")]
    CapTooSmall { theta0: f64, cutoff: f64 },
    #[error("cap radius {0} above pi")]
    CapTooLarge(f64),
    #[error("no samples inside the cap")]
    EmptyCap,
    #[error("invalid classical bound table: {0}")]
    InvalidBound(String),
    #[error("Choi matrix is not invertible on the input space")]
    Singular,
}

fn check_square(a: &CMatrix, b: &CMatrix) -> Result<(), MetricsError> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(MetricsError::Dimension {
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    Ok(())
}

/// Uhlmann fidelity `(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2`.
pub fn fidelity(rho: &CMatrix, sigma: &CMatrix) -> Result<f64, MetricsError> {
    check_square(rho, sigma)?;
    let s = sqrtm_psd(rho);
    let (vals, _) = eigh(&(&s * sigma * &s));
    // round-off eigenvalues of rank-deficient products would add O(sqrt(eps))
    let floor = 1e-12 * vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let root: f64 = vals.iter().filter(|&&v| v > floor).map(|v| v.sqrt()).sum();
    Ok(root.powi(2).clamp(0.0, 1.0))
}

/// `<psi| sigma |psi>`.
pub fn fidelity_pure(ket: &[Complex64], sigma: &CMatrix) -> Result<f64, MetricsError> {
    if ket.len() != sigma.nrows() {
        return Err(MetricsError::Dimension {
            expected: sigma.nrows(),
            got: ket.len(),
        });
    }
    let v = nalgebra::DVector::from_column_slice(ket);
    Ok((v.adjoint() * sigma * &v)[(0, 0)].re.clamp(0.0, 1.0))
}

pub fn ket_density(ket: &[Complex64]) -> CMatrix {
    CMatrix::from_fn(ket.len(), ket.len(), |i, j| ket[i] * ket[j].conj())
}

/// `Tr(rho^2)`.
pub fn purity(rho: &CMatrix) -> f64 {
    trace(&(rho * rho)).re
}

/// Wootters concurrence of a two-qubit state.
pub fn concurrence(rho: &CMatrix) -> Result<f64, MetricsError> {
    if rho.nrows() != 4 || rho.ncols() != 4 {
        return Err(MetricsError::NotTwoQubit(rho.nrows()));
    }
    let yy = pauli_string_matrix("YY");
    let tilde = &yy * rho.map(|z| z.conj()) * &yy;
    let s = sqrtm_psd(rho);
    let (vals, _) = eigh(&(&s * tilde * &s));
    let floor = 1e-12 * vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut l: Vec<f64> = vals.iter().map(|&v| if v > floor { v.sqrt() } else { 0.0 }).collect();
    l.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok((l[0] - l[1] - l[2] - l[3]).clamp(0.0, 1.0))
}

/// `p |Phi+><Phi+| + (1-p) I/4`.
pub fn werner(p: f64) -> CMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let bell = [c(h, 0.0), ZERO, ZERO, c(h, 0.0)];
    ket_density(&bell) * c(p, 0.0) + CMatrix::identity(4, 4) * c((1.0 - p) / 4.0, 0.0)
}

/// Amplitudes of the graph state on the live qubits of `graph`, frame
/// ignored.
pub fn graph_state_vector(graph: &GraphState) -> Result<Vec<Complex64>, MetricsError> {
    let (g, _) = graph.compact();
    let d = DenseState::build_graph_state(&g.edges(), g.n())?;
    Ok(d.amplitudes().expect("graph state is pure").to_vec())
}

/// Largest squared Schmidt coefficient of `|G>` over all bipartitions.
pub fn bipartition_overlap(graph: &GraphState) -> Result<f64, MetricsError> {
    let (g, _) = graph.compact();
    let n = g.n();
    if n > MAX_WITNESS_QUBITS {
        return Err(MetricsError::TooManyQubits(n));
    }
    if n < 2 {
        return Ok(1.0);
    }
    let amps = graph_state_vector(&g)?;
    let mut best: f64 = 0.0;
    // qubit 0 always in part A; A != everything
    for mask in 0..(1usize << (n - 1)) - 1 {
        let a: Vec<usize> = std::iter::once(0)
            .chain((1..n).filter(|q| mask >> (q - 1) & 1 == 1))
            .collect();
        let b: Vec<usize> = (0..n).filter(|q| !a.contains(q)).collect();
        let sub =
            |i: usize, part: &[usize]| -> usize { part.iter().fold(0, |acc, &q| (acc << 1) | (i >> (n - 1 - q) & 1)) };
        let mut m = CMatrix::from_element(1 << a.len(), 1 << b.len(), ZERO);
        for (i, amp) in amps.iter().enumerate() {
            m[(sub(i, &a), sub(i, &b))] = *amp;
        }
        let sv = m.svd(false, false).singular_values;
        best = best.max(sv.max().powi(2));
    }
    Ok(best)
}

/// Fidelity-based GME witness `alpha - F`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub fidelity: f64,
    pub alpha: f64,
    pub value: f64,
    /// Negative value certifies genuine multipartite entanglement.
    pub certified: bool,
    /// Set for disconnected graphs, where the witness cannot certify.
    pub vacuous: bool,
}

/// Witness for a measured fidelity against `graph`.
pub fn gme_witness(fidelity: f64, graph: &GraphState) -> Result<Witness, MetricsError> {
    let (alpha, vacuous) = if graph.compact().0.is_connected() {
        (bipartition_overlap(graph)?, false)
    } else {
        (1.0, true)
    };
    let value = alpha - fidelity;
    Ok(Witness {
        fidelity,
        alpha,
        value,
        certified: !vacuous && value < 0.0,
        vacuous,
    })
}

/// Witness for a state `sigma` on the live qubits of `graph`.
pub fn gme_witness_state(sigma: &CMatrix, graph: &GraphState) -> Result<Witness, MetricsError> {
    let f = fidelity_pure(&graph_state_vector(graph)?, sigma)?;
    gme_witness(f, graph)
}

/// All `2^n` products of the stabilizer generators; `|G><G|` equals their
/// sum divided by `2^n`.
pub fn stabilizer_projector_expansion(graph: &GraphState) -> Result<Vec<PauliString>, MetricsError> {
    let gens = graph.to_stabilizers()?;
    let n = gens.len();
    Ok((0..1usize << n)
        .map(|mask| {
            (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .fold(PauliString::identity(n), |acc, i| acc.mul(&gens[i]))
        })
        .collect())
}

/// Group Pauli products into local measurement settings.
///
/// A setting assigns one of X, Y, Z to every qubit; a product is measured
/// by a setting when they agree on every non-identity position. Products
/// are placed greedily, heaviest first, into the first compatible setting;
/// positions left free at the end are set to Z.
pub fn measurement_settings(products: &[PauliString]) -> Vec<String> {
    let mut order: Vec<String> = products
        .iter()
        .map(|p| p.letters())
        .filter(|l| l.chars().any(|c| c != 'I'))
        .collect();
    order.sort_by(|a, b| {
        let w = |s: &str| s.chars().filter(|&c| c != 'I').count();
        w(b).cmp(&w(a)).then(a.cmp(b))
    });
    order.dedup();
    let mut settings: Vec<Vec<char>> = Vec::new();
    for p in &order {
        let fits = |s: &Vec<char>| p.chars().zip(s).all(|(l, &m)| l == 'I' || m == '*' || m == l);
        match settings.iter_mut().find(|s| fits(s)) {
            Some(s) => {
                for (slot, l) in s.iter_mut().zip(p.chars()) {
                    if l != 'I' {
                        *slot = l;
                    }
                }
            }
            None => settings.push(p.chars().map(|l| if l == 'I' { '*' } else { l }).collect()),
        }
    }
    settings
        .into_iter()
        .map(|s| s.into_iter().map(|l| if l == '*' { 'Z' } else { l }).collect())
        .collect()
}

/// Setting that measures `letters`, if any.
pub fn covering_setting<'a>(letters: &str, settings: &'a [String]) -> Option<&'a str> {
    settings
        .iter()
        .find(|s| letters.chars().zip(s.chars()).all(|(l, m)| l == 'I' || l == m))
        .map(|s| s.as_str())
}

/// Counts per basis label (e.g. `"XZ"`) keyed by bitstring.
pub type BasisCounts = BTreeMap<String, BTreeMap<String, f64>>;

/// Parity expectation of the positions where `letters` is not `I`.
pub fn parity_expectation(letters: &str, counts: &BTreeMap<String, f64>) -> Option<f64> {
    let total: f64 = counts.values().sum();
    if total <= 0.0 {
        return None;
    }
    let support: Vec<usize> = letters
        .char_indices()
        .filter(|(_, l)| *l != 'I')
        .map(|(i, _)| i)
        .collect();
    let s: f64 = counts
        .iter()
        .map(|(bits, &v)| {
            let b = bits.as_bytes();
            let odd = support.iter().filter(|&&q| b[q] == b'1').count() % 2 == 1;
            if odd {
                -v
            } else {
                v
            }
        })
        .sum();
    Some(s / total)
}

/// Graph-state fidelity from local-setting counts: the mean of the signed
/// expectations of every stabilizer product.
pub fn fidelity_from_settings(graph: &GraphState, counts: &BasisCounts) -> Result<f64, MetricsError> {
    let products = stabilizer_projector_expansion(graph)?;
    let settings: Vec<String> = counts.keys().cloned().collect();
    let mut sum = 0.0;
    for p in &products {
        let letters = p.letters();
        let sign = p.sign().unwrap_or(1.0);
        if letters.chars().all(|l| l == 'I') {
            sum += sign;
            continue;
        }
        let s = covering_setting(&letters, &settings).ok_or_else(|| MetricsError::MissingBasis(letters.clone()))?;
        sum +=
            sign * parity_expectation(&letters, &counts[s]).ok_or_else(|| MetricsError::EmptyBasis(s.to_string()))?;
    }
    Ok((sum / products.len() as f64).clamp(0.0, 1.0))
}

fn basis_of(label: &str) -> Result<Vec<MeasBasis>, MetricsError> {
    label
        .chars()
        .map(|l| match l {
            'X' | 'Y' | 'Z' => Ok(MeasBasis::from_letter(l).expect("letter checked")),
            _ => Err(MetricsError::InvalidBasis(label.to_string())),
        })
        .collect()
}

/// Sampled counts of `rho` in each listed basis. Basis `i` uses sub-stream
/// `i` of `seed`; `readout` is the per-qubit confusion.
pub fn sample_basis_counts(
    rho: &CMatrix,
    bases: &[String],
    shots: usize,
    readout: &[[[f64; 2]; 2]],
    seed: u64,
) -> Result<BasisCounts, MetricsError> {
    let state = DenseState::from_density(rho)?;
    bases
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let records =
                sampling::sample_shots(&state, &basis_of(label)?, shots, readout, stream_seed(seed, i as u64))?;
            let counts = sampling::counts_from_records(&records)
                .into_iter()
                .map(|(k, v)| (k, v as f64))
                .collect();
            Ok((label.clone(), counts))
        })
        .collect()
}

/// Exact outcome probabilities of `rho` in each listed basis.
pub fn exact_basis_counts(rho: &CMatrix, bases: &[String]) -> Result<BasisCounts, MetricsError> {
    let state = DenseState::from_density(rho)?;
    let m = state.n();
    bases
        .iter()
        .map(|label| {
            let probs = sampling::outcome_distribution(&state, &basis_of(label)?)?;
            let counts = probs
                .into_iter()
                .enumerate()
                .map(|(i, p)| (sampling::bitstring(&sampling::index_bits(i, m)), p))
                .collect();
            Ok((label.clone(), counts))
        })
        .collect()
}

/// All `3^m` Pauli basis labels in lexicographic X < Y < Z order.
pub fn tomography_bases(m: usize) -> Vec<String> {
    (0..3usize.pow(m as u32))
        .map(|mut i| {
            let mut s = vec!['X'; m];
            for q in (0..m).rev() {
                s[q] = ['X', 'Y', 'Z'][i % 3];
                i /= 3;
            }
            s.into_iter().collect()
        })
        .collect()
}

/// Reconstructed state.
#[derive(Clone, Debug)]
pub struct TomoResult {
    /// Physical estimate (PSD, trace one).
    pub rho: CMatrix,
    /// Linear-inversion estimate before projection.
    pub raw: CMatrix,
    pub counts: BasisCounts,
    pub mitigated: bool,
    /// Frobenius distance removed by the physicality projection.
    pub residual: f64,
}

/// Linear-inversion state tomography over all `3^m` Pauli bases followed by
/// projection onto the closest PSD trace-one matrix. Each Pauli
/// expectation is averaged over every basis that measures it. When
/// `confusion` is given, counts are readout-mitigated first.
pub fn state_tomography(
    m: usize,
    counts: &BasisCounts,
    confusion: Option<&ConfusionMatrix>,
) -> Result<TomoResult, MetricsError> {
    let bases = tomography_bases(m);
    let mut used = BasisCounts::new();
    for b in &bases {
        let raw = counts.get(b).ok_or_else(|| MetricsError::MissingBasis(b.clone()))?;
        if raw.values().sum::<f64>() <= 0.0 {
            return Err(MetricsError::EmptyBasis(b.clone()));
        }
        for k in raw.keys() {
            if k.len() != m {
                return Err(SamplingError::InvalidBitstring(k.clone()).into());
            }
        }
        let c = match confusion {
            Some(cm) => sampling::mitigate(raw, cm)?,
            None => raw.clone(),
        };
        used.insert(b.clone(), c);
    }
    let d = 1usize << m;
    let mut raw = CMatrix::from_element(d, d, ZERO);
    for i in 0..4usize.pow(m as u32) {
        let mut letters = vec!['I'; m];
        let mut k = i;
        for q in (0..m).rev() {
            letters[q] = ['I', 'X', 'Y', 'Z'][k % 4];
            k /= 4;
        }
        let label: String = letters.iter().collect();
        let exps: Vec<f64> = bases
            .iter()
            .filter(|b| label.chars().zip(b.chars()).all(|(l, m)| l == 'I' || l == m))
            .filter_map(|b| parity_expectation(&label, &used[b]))
            .collect();
        let e = exps.iter().sum::<f64>() / exps.len() as f64;
        raw += pauli_string_matrix(&label) * c(e / d as f64, 0.0);
    }
    let raw = hermitize(&raw);
    let rho = project_psd_trace(&raw, 1.0);
    let residual = frobenius_distance(&rho, &raw);
    Ok(TomoResult {
        rho,
        raw,
        counts: used,
        mitigated: confusion.is_some(),
        residual,
    })
}

/// Single-qubit channel in Choi form `J = sum_ij |i><j| (x) E(|i><j|)`
/// (input factor first, `Tr J = 2`).
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiMatrix {
    pub matrix: CMatrix,
}

/// Process-tomography outcome.
#[derive(Clone, Debug)]
pub struct ProcessTomography {
    pub choi: ChoiMatrix,
    pub raw: CMatrix,
    /// Frobenius change from the positivity projection.
    pub cp_residual: f64,
    /// Frobenius change from the trace-preservation fix.
    pub tp_residual: f64,
}

/// Labels of the four tomography inputs.
pub const PROCESS_INPUTS: [&str; 4] = ["0", "1", "+", "+i"];

impl ChoiMatrix {
    pub fn identity() -> Self {
        ChoiMatrix::from_kraus(&[vec![ONE, ZERO, ZERO, ONE]])
    }

    /// From row-major 2x2 Kraus operators.
    pub fn from_kraus(kraus: &[Vec<Complex64>]) -> Self {
        let mut j = CMatrix::from_element(4, 4, ZERO);
        for k in kraus {
            // vec(K) with input index first: |K>> = sum_i |i> (x) K|i>
            let v: Vec<Complex64> = (0..4).map(|idx| k[(idx & 1) * 2 + (idx >> 1)]).collect();
            j += ket_density(&v);
        }
        ChoiMatrix { matrix: j }
    }

    pub fn from_channel(ch: &Channel) -> Result<Self, MetricsError> {
        Ok(ChoiMatrix::from_kraus(&ch.kraus(1)?))
    }

    /// Optimal measure-and-prepare channel (measure Z, resend the outcome).
    pub fn measure_and_resend() -> Self {
        ChoiMatrix::from_kraus(&[vec![ONE, ZERO, ZERO, ZERO], vec![ZERO, ZERO, ZERO, ONE]])
    }

    /// Linear reconstruction from the outputs of `|0>, |1>, |+>, |+i>`.
    pub fn from_outputs(outputs: &BTreeMap<String, CMatrix>) -> Result<Self, MetricsError> {
        let get = |k: &str| outputs.get(k).ok_or_else(|| MetricsError::MissingInput(k.to_string()));
        let (r0, r1, rp, ri) = (get("0")?, get("1")?, get("+")?, get("+i")?);
        let e01 = rp + ri * I - (r0 + r1) * c(0.5, 0.5);
        let e10 = e01.adjoint();
        let blocks = [[r0.clone(), e01], [e10, r1.clone()]];
        let j = CMatrix::from_fn(4, 4, |r, col| blocks[r >> 1][col >> 1][(r & 1, col & 1)]);
        Ok(ChoiMatrix { matrix: j })
    }

    /// `E(rho) = Tr_in[(rho^T (x) I) J]`.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let big = kron(&rho.transpose(), &CMatrix::identity(2, 2)) * &self.matrix;
        partial_trace(&big, 2, 2, false)
    }

    /// `Tr_out J`, equal to the identity for trace-preserving maps.
    pub fn input_marginal(&self) -> CMatrix {
        partial_trace(&self.matrix, 2, 2, true)
    }

    /// Affine Bloch map `r -> A r + t`.
    pub fn bloch_map(&self) -> BlochMap {
        let bloch = |rho: &CMatrix| -> [f64; 3] {
            ['X', 'Y', 'Z'].map(|l| trace(&(pauli_string_matrix(&l.to_string()) * rho)).re)
        };
        let half = CMatrix::identity(2, 2) * c(0.5, 0.0);
        let t = bloch(&self.apply(&half));
        let mut a = [[0.0; 3]; 3];
        for (k, l) in ['X', 'Y', 'Z'].iter().enumerate() {
            let rho = &half + pauli_string_matrix(&l.to_string()) * c(0.5, 0.0);
            let out = bloch(&self.apply(&rho));
            for row in 0..3 {
                a[row][k] = out[row] - t[row];
            }
        }
        BlochMap { a, t }
    }
}

/// Linear inversion from output states, then positivity projection and
/// trace-preservation fix `J -> (M^{-1/2} (x) I) J (M^{-1/2} (x) I)` with
/// `M = Tr_out J`.
pub fn process_tomography(outputs: &BTreeMap<String, CMatrix>) -> Result<ProcessTomography, MetricsError> {
    let raw = hermitize(&ChoiMatrix::from_outputs(outputs)?.matrix);
    let cp = project_psd_trace(&raw, 2.0);
    let cp_residual = frobenius_distance(&cp, &raw);
    let tp = tp_fix(&cp)?;
    let tp_residual = frobenius_distance(&tp, &cp);
    Ok(ProcessTomography {
        choi: ChoiMatrix { matrix: tp },
        raw,
        cp_residual,
        tp_residual,
    })
}

fn tp_fix(j: &CMatrix) -> Result<CMatrix, MetricsError> {
    let m = partial_trace(j, 2, 2, true);
    let s = inv_sqrtm(&m).ok_or(MetricsError::Singular)?;
    let big = kron(&s, &CMatrix::identity(2, 2));
    Ok(hermitize(&(&big * j * &big)))
}

/// Process tomography from single-qubit output counts per input label and
/// basis (`X`, `Y`, `Z`).
pub fn process_tomography_from_counts(
    counts: &BTreeMap<String, BasisCounts>,
    confusion: Option<&ConfusionMatrix>,
) -> Result<ProcessTomography, MetricsError> {
    let mut outputs = BTreeMap::new();
    for label in PROCESS_INPUTS {
        let c = counts
            .get(label)
            .ok_or_else(|| MetricsError::MissingInput(label.to_string()))?;
        outputs.insert(label.to_string(), state_tomography(1, c, confusion)?.raw);
    }
    process_tomography(&outputs)
}

/// Affine action of a qubit channel on Bloch vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlochMap {
    pub a: [[f64; 3]; 3],
    pub t: [f64; 3],
}

impl BlochMap {
    /// Fidelity `(1 + r . (A r + t)) / 2` of the output with a pure input.
    pub fn fidelity(&self, r: [f64; 3]) -> f64 {
        let out: [f64; 3] = std::array::from_fn(|i| (0..3).map(|k| self.a[i][k] * r[k]).sum::<f64>() + self.t[i]);
        (1.0 + r.iter().zip(out).map(|(x, y)| x * y).sum::<f64>()) / 2.0
    }
}

/// `F_pro = <Phi+| J/2 |Phi+>`.
pub fn process_fidelity(choi: &ChoiMatrix) -> f64 {
    let j = &choi.matrix;
    [0usize, 3]
        .iter()
        .flat_map(|&a| [0usize, 3].map(move |b| (a, b)))
        .map(|(a, b)| j[(a, b)].re)
        .sum::<f64>()
        / 4.0
}

/// Average gate fidelity to the identity, `(2 F_pro + 1) / 3`.
pub fn average_gate_fidelity(choi: &ChoiMatrix) -> f64 {
    (2.0 * process_fidelity(choi) + 1.0) / 3.0
}

/// `<psi| E(|psi><psi|) |psi>`.
pub fn per_state_fidelity(choi: &ChoiMatrix, input: &InputState) -> f64 {
    choi.bloch_map().fidelity(input.bloch())
}

/// Monte Carlo average of the per-state fidelity over Haar-random inputs.
pub fn haar_average_fidelity(choi: &ChoiMatrix, samples: usize, seed: u64) -> f64 {
    let map = choi.bloch_map();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sum: f64 = (0..samples)
        .map(|_| {
            let z: f64 = rng.gen_range(-1.0..=1.0);
            let phi: f64 = rng.gen_range(0.0..2.0 * PI);
            let s = (1.0 - z * z).sqrt();
            map.fidelity([s * phi.cos(), s * phi.sin(), z])
        })
        .sum();
    sum / samples as f64
}

/// Spherical cap of Bloch directions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapSpec {
    pub center: InputState,
    pub theta0: f64,
    pub points: usize,
}

impl CapSpec {
    pub fn new(center: InputState, theta0: f64) -> Result<Self, MetricsError> {
        CapSpec::with_points(center, theta0, CAP_POINTS)
    }

    pub fn with_points(center: InputState, theta0: f64, points: usize) -> Result<Self, MetricsError> {
        if theta0.is_nan() || theta0 < CAP_CUTOFF {
            return Err(MetricsError::CapTooSmall {
                theta0,
                cutoff: CAP_CUTOFF,
            });
        }
        if theta0 > PI + 1e-12 {
            return Err(MetricsError::CapTooLarge(theta0));
        }
        Ok(CapSpec {
            center,
            theta0: theta0.min(PI),
            points: points.max(1),
        })
    }

    pub fn contains(&self, r: [f64; 3]) -> bool {
        let c = self.center.bloch();
        let dot: f64 = c.iter().zip(r).map(|(a, b)| a * b).sum();
        dot >= self.theta0.cos() - 1e-12
    }

    /// Area-uniform Fibonacci lattice on the cap.
    pub fn lattice(&self) -> Vec<[f64; 3]> {
        let golden = PI * (3.0 - 5f64.sqrt());
        let n = self.points;
        let h = 1.0 - self.theta0.cos();
        let (st, ct) = self.center.theta.sin_cos();
        let (sp, cp) = self.center.phi.sin_cos();
        (0..n)
            .map(|i| {
                let z = 1.0 - h * (i as f64 + 0.5) / n as f64;
                let s = (1.0 - z * z).max(0.0).sqrt();
                let a = i as f64 * golden;
                let (x, y) = (s * a.cos(), s * a.sin());
                // rotate the north pole onto the centre: R_z(phi) R_y(theta)
                let (x1, z1) = (ct * x + st * z, -st * x + ct * z);
                [cp * x1 - sp * y, sp * x1 + cp * y, z1]
            })
            .collect()
    }
}

/// Area-uniform average fidelity over a cap.
pub fn cap_average_fidelity(choi: &ChoiMatrix, cap: &CapSpec) -> f64 {
    let map = choi.bloch_map();
    let pts = cap.lattice();
    pts.iter().map(|&r| map.fidelity(r)).sum::<f64>() / pts.len() as f64
}

/// Mean of sampled fidelities lying inside a cap (samples are assumed
/// area-uniform on the sphere).
pub fn cap_average_from_samples(samples: &[BlochSample], cap: &CapSpec) -> Result<f64, MetricsError> {
    let inside: Vec<f64> = samples
        .iter()
        .filter(|s| {
            cap.contains(
                InputState {
                    theta: s.theta,
                    phi: s.phi,
                }
                .bloch(),
            )
        })
        .map(|s| s.fidelity)
        .collect();
    if inside.is_empty() {
        return Err(MetricsError::EmptyCap);
    }
    Ok(inside.iter().sum::<f64>() / inside.len() as f64)
}

/// Direction of highest per-state fidelity.
pub fn best_cap_center(choi: &ChoiMatrix) -> InputState {
    let map = choi.bloch_map();
    let grid = InputState::fibonacci_grid(4000);
    let mut r = grid
        .iter()
        .map(|s| s.bloch())
        .max_by(|a, b| map.fidelity(*a).partial_cmp(&map.fidelity(*b)).unwrap())
        .expect("grid is non-empty");
    // projected gradient ascent on the sphere
    for _ in 0..200 {
        let g: [f64; 3] =
            std::array::from_fn(|i| (0..3).map(|k| (map.a[i][k] + map.a[k][i]) * r[k]).sum::<f64>() + map.t[i]);
        let step: [f64; 3] = std::array::from_fn(|i| r[i] + 0.05 * g[i]);
        let norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
        let next = step.map(|v| v / norm);
        if map.fidelity(next) < map.fidelity(r) {
            break;
        }
        r = next;
    }
    InputState::from_bloch(r)
}

/// Sample with the highest fidelity.
pub fn best_sample_center(samples: &[BlochSample]) -> Option<InputState> {
    samples
        .iter()
        .max_by(|a, b| a.fidelity.partial_cmp(&b.fidelity).unwrap())
        .map(|s| InputState {
            theta: s.theta,
            phi: s.phi,
        })
}

/// Classical reference fidelity.
#[derive(Clone, Debug, PartialEq)]
pub enum ClassicalBound {
    /// Full-sphere value 2/3 at every radius.
    Constant,
    /// User-supplied `(theta0, bound)` table, interpolated linearly.
    Table(Vec<(f64, f64)>),
}

impl ClassicalBound {
    pub fn table(mut rows: Vec<(f64, f64)>) -> Result<Self, MetricsError> {
        if rows.is_empty() {
            return Err(MetricsError::InvalidBound("empty table".into()));
        }
        rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for &(t, b) in &rows {
            if !(CLASSICAL_FIDELITY - 1e-12..=1.0).contains(&b) {
                return Err(MetricsError::InvalidBound(format!("bound {b} at {t} outside [2/3, 1]")));
            }
        }
        if rows.windows(2).any(|w| w[1].1 > w[0].1 + 1e-12) {
            return Err(MetricsError::InvalidBound(
                "bound must not increase with the cap radius".into(),
            ));
        }
        Ok(ClassicalBound::Table(rows))
    }

    pub fn at(&self, theta0: f64) -> f64 {
        match self {
            ClassicalBound::Constant => CLASSICAL_FIDELITY,
            ClassicalBound::Table(rows) => {
                if theta0 <= rows[0].0 {
                    return rows[0].1;
                }
                for w in rows.windows(2) {
                    if theta0 <= w[1].0 {
                        let f = (theta0 - w[0].0) / (w[1].0 - w[0].0);
                        return w[0].1 + f * (w[1].1 - w[0].1);
                    }
                }
                rows[rows.len() - 1].1
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapPoint {
    pub theta0: f64,
    #[serde(rename = "F_cap")]
    pub f_cap: f64,
    pub bound: f64,
}

/// Cap average about `center` for each radius in `theta0s`.
pub fn cap_curve(
    choi: &ChoiMatrix,
    center: InputState,
    theta0s: &[f64],
    points: usize,
    bound: &ClassicalBound,
) -> Result<Vec<CapPoint>, MetricsError> {
    theta0s
        .iter()
        .map(|&t| {
            let cap = CapSpec::with_points(center, t, points)?;
            Ok(CapPoint {
                theta0: t,
                f_cap: cap_average_fidelity(choi, &cap),
                bound: bound.at(t),
            })
        })
        .collect()
}

/// `n` evenly spaced radii from the cutoff to pi.
pub fn default_radii(n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![PI];
    }
    (0..n)
        .map(|i| CAP_CUTOFF + (PI - CAP_CUTOFF) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Radii at which the curve is above its bound.
pub fn radii_above_bound(curve: &[CapPoint]) -> Vec<f64> {
    curve.iter().filter(|p| p.f_cap > p.bound).map(|p| p.theta0).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochSample {
    pub theta: f64,
    pub phi: f64,
    #[serde(rename = "F")]
    pub fidelity: f64,
}

/// Per-state fidelity on a Fibonacci grid of `n` inputs.
pub fn bloch_grid(choi: &ChoiMatrix, n: usize) -> Vec<BlochSample> {
    let map = choi.bloch_map();
    InputState::fibonacci_grid(n)
        .into_iter()
        .map(|s| BlochSample {
            theta: s.theta,
            phi: s.phi,
            fidelity: map.fidelity(s.bloch()),
        })
        .collect()
}

/// CSV view of a Bloch grid.
pub fn bloch_csv(samples: &[BlochSample]) -> String {
    let mut out = String::from("theta,phi,fidelity\n");
    for s in samples {
        out.push_str(&format!("{:.12},{:.12},{:.12}\n", s.theta, s.phi, s.fidelity));
    }
    out
}

/// CSV view of a cap curve.
pub fn cap_curve_csv(curve: &[CapPoint]) -> String {
    let mut out = String::from("theta0,F_cap,bound\n");
    for p in curve {
        out.push_str(&format!("{:.12},{:.12},{:.12}\n", p.theta0, p.f_cap, p.bound));
    }
    out
}

/// Per-pair metrics report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub pair: Option<String>,
    #[serde(rename = "F")]
    pub fidelity: Option<f64>,
    #[serde(rename = "P")]
    pub purity: Option<f64>,
    #[serde(rename = "C")]
    pub concurrence: Option<f64>,
    pub alpha: Option<f64>,
    pub witness: Option<f64>,
    #[serde(rename = "F_ave")]
    pub f_ave: Option<f64>,
    pub cap_curve: Vec<CapPoint>,
    pub bloch_grid: Vec<BlochSample>,
}

/// Serialise a 2x2 Choi/density matrix as `[[re, im], ...]` rows.
pub fn matrix_to_json(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|k| [m[(r, k)].re, m[(r, k)].im]).collect())
        .collect()
}

pub fn matrix_from_json(rows: &[Vec<[f64; 2]>]) -> Result<CMatrix, MetricsError> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(MetricsError::Dimension {
            expected: n,
            got: rows.iter().map(|r| r.len()).max().unwrap_or(0),
        });
    }
    Ok(CMatrix::from_fn(n, n, |r, k| c(rows[r][k][0], rows[r][k][1])))
}
