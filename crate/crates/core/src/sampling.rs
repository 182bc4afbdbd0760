//! Seeded shot sampling, readout confusion, mitigation and post-selection.
//!
//! Seeding: shots are drawn in chunks of [`CHUNK`]. Chunk `i` of a run with
//! master seed `s` uses a ChaCha8 generator seeded with
//! [`stream_seed`]`(s, i)`, so results do not depend on thread count.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::{DenseError, DenseState, MeasBasis};
use crate::pauli::Pauli;

pub const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplingError {
    #[error(transparent)]
    Dense(#[from] DenseError),
    #[error("{got} bases given for {expected} qubits")]
    BasisCount { expected: usize, got: usize },
    #[error("confusion matrix row {row} sums to {sum}")]
    NotStochastic { row: usize, sum: f64 },
    #[error("confusion matrix entry {0} outside [0, 1]")]
    InvalidEntry(f64),
    #[error("confusion matrix must be {expected}x{expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("confusion matrix is singular")]
    Singular,
    #[error("bitstring `{0}` does not match the register")]
    InvalidBitstring(String),
    #[error("no records retained after post-selection")]
    EmptySelection,
    #[error("accepted outcome set is empty")]
    NoAcceptedOutcomes,
    #[error("malformed JSON: {0}")]
    Json(String),
}

/// SplitMix64 finaliser.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of sub-stream `stream` derived from `master`.
pub fn stream_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

/// Draw `shots` indices from a discrete distribution.
pub fn sample_indices(probs: &[f64], shots: usize, seed: u64) -> Vec<usize> {
    let total: f64 = probs.iter().sum();
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in probs {
        acc += p.max(0.0) / total;
        cdf.push(acc);
    }
    let last = probs.len().saturating_sub(1);
    let chunks = shots.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, chunk as u64));
            let len = CHUNK.min(shots - chunk * CHUNK);
            let cdf = &cdf;
            (0..len)
                .map(move |_| {
                    let u: f64 = rng.gen();
                    cdf.partition_point(|&c| c <= u).min(last)
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Bits of `index` over `m` qubits, qubit 0 first.
pub fn index_bits(index: usize, m: usize) -> Vec<u8> {
    (0..m).map(|q| (index >> (m - 1 - q) & 1) as u8).collect()
}

pub fn bitstring(bits: &[u8]) -> String {
    bits.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect()
}

pub fn parse_bitstring(s: &str) -> Result<usize, SamplingError> {
    if s.is_empty() || !s.chars().all(|c| c == '0' || c == '1') {
        return Err(SamplingError::InvalidBitstring(s.to_string()));
    }
    usize::from_str_radix(s, 2).map_err(|_| SamplingError::InvalidBitstring(s.to_string()))
}

/// One measured shot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ShotRecord {
    pub bits: Vec<u8>,
    pub retained: bool,
    /// Pauli byproduct implied by the outcomes, when the caller knows it.
    pub byproduct: Option<Pauli>,
}

impl ShotRecord {
    pub fn new(bits: Vec<u8>) -> Self {
        ShotRecord {
            bits,
            retained: true,
            byproduct: None,
        }
    }
}

/// Born-rule distribution of measuring every qubit in its basis.
pub fn outcome_distribution(state: &DenseState, bases: &[MeasBasis]) -> Result<Vec<f64>, SamplingError> {
    if bases.len() != state.n() {
        return Err(SamplingError::BasisCount {
            expected: state.n(),
            got: bases.len(),
        });
    }
    let mut s = state.clone();
    for (q, b) in bases.iter().enumerate() {
        if *b != MeasBasis::Z {
            s.apply_gate1(q, &b.rotation())?;
        }
    }
    let probs: Vec<f64> = match s.amplitudes() {
        Some(v) => v.iter().map(|a| a.norm_sqr()).collect(),
        None => {
            let m = s.density_matrix();
            (0..m.nrows()).map(|i| m[(i, i)].re.max(0.0)).collect()
        }
    };
    let total: f64 = probs.iter().sum();
    Ok(probs.into_iter().map(|p| p / total).collect())
}

/// Apply independent per-qubit confusion to a distribution over `m` qubits.
/// Qubits beyond `readout` read out perfectly.
pub fn apply_readout(probs: &[f64], readout: &[[[f64; 2]; 2]]) -> Vec<f64> {
    let m = probs.len().trailing_zeros() as usize;
    let mut out = probs.to_vec();
    for (q, c) in readout.iter().enumerate().take(m) {
        let mask = 1usize << (m - 1 - q);
        for i in (0..out.len()).filter(|i| i & mask == 0) {
            let (p0, p1) = (out[i], out[i | mask]);
            out[i] = p0 * c[0][0] + p1 * c[1][0];
            out[i | mask] = p0 * c[0][1] + p1 * c[1][1];
        }
    }
    out
}

/// Sample `shots` measurements of every qubit with readout confusion
/// `readout[q][true][reported]`.
pub fn sample_shots(
    state: &DenseState,
    bases: &[MeasBasis],
    shots: usize,
    readout: &[[[f64; 2]; 2]],
    seed: u64,
) -> Result<Vec<ShotRecord>, SamplingError> {
    let probs = apply_readout(&outcome_distribution(state, bases)?, readout);
    let m = state.n();
    Ok(sample_indices(&probs, shots, seed)
        .into_iter()
        .map(|i| ShotRecord::new(index_bits(i, m)))
        .collect())
}

pub fn counts_from_records(records: &[ShotRecord]) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry(bitstring(&r.bits)).or_insert(0) += 1;
    }
    counts
}

/// Counts file: `{"basis": "XZ", "counts": {"01": 12, ...}, "seed": 7}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountsFile {
    pub basis: String,
    pub counts: BTreeMap<String, u64>,
    pub seed: u64,
}

impl CountsFile {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("counts JSON serialisation cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<Self, SamplingError> {
        serde_json::from_str(s).map_err(|e| SamplingError::Json(e.to_string()))
    }
}

/// Row-stochastic readout matrix `C[true][reported]` over `m` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionMatrix {
    m: usize,
    data: DMatrix<f64>,
}

impl ConfusionMatrix {
    pub fn new(m: usize, rows: &[Vec<f64>]) -> Result<Self, SamplingError> {
        let d = 1usize << m;
        if rows.len() != d || rows.iter().any(|r| r.len() != d) {
            return Err(SamplingError::Dimension {
                expected: d,
                got: rows.len(),
            });
        }
        for (row, r) in rows.iter().enumerate() {
            if let Some(&bad) = r.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(SamplingError::InvalidEntry(bad));
            }
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(SamplingError::NotStochastic { row, sum });
            }
        }
        Ok(ConfusionMatrix {
            m,
            data: DMatrix::from_fn(d, d, |i, j| rows[i][j]),
        })
    }

    pub fn identity(m: usize) -> Self {
        let d = 1usize << m;
        ConfusionMatrix {
            m,
            data: DMatrix::identity(d, d),
        }
    }

    pub fn single(c: [[f64; 2]; 2]) -> Result<Self, SamplingError> {
        ConfusionMatrix::new(1, &[c[0].to_vec(), c[1].to_vec()])
    }

    /// Same symmetric flip probability on each of `m` qubits.
    pub fn symmetric(flip: f64, m: usize) -> Result<Self, SamplingError> {
        ConfusionMatrix::per_qubit(&vec![[[1.0 - flip, flip], [flip, 1.0 - flip]]; m])
    }

    pub fn per_qubit(readout: &[[[f64; 2]; 2]]) -> Result<Self, SamplingError> {
        let parts: Vec<ConfusionMatrix> = readout
            .iter()
            .map(|c| ConfusionMatrix::single(*c))
            .collect::<Result<_, _>>()?;
        Ok(ConfusionMatrix::tensor(&parts))
    }

    /// Kronecker product, first factor on the most significant qubits.
    pub fn tensor(parts: &[ConfusionMatrix]) -> Self {
        parts.iter().fold(
            ConfusionMatrix {
                m: 0,
                data: DMatrix::identity(1, 1),
            },
            |acc, p| ConfusionMatrix {
                m: acc.m + p.m,
                data: acc.data.kronecker(&p.data),
            },
        )
    }

    pub fn qubits(&self) -> usize {
        self.m
    }

    pub fn entry(&self, true_index: usize, reported: usize) -> f64 {
        self.data[(true_index, reported)]
    }

    /// Reported distribution for a true distribution.
    pub fn apply(&self, probs: &[f64]) -> Vec<f64> {
        let p = nalgebra::DVector::from_column_slice(probs);
        (self.data.transpose() * p).iter().copied().collect()
    }

    /// Invert the confusion on a reported distribution (no clipping).
    pub fn unfold(&self, reported: &[f64]) -> Result<Vec<f64>, SamplingError> {
        let lu = self.data.transpose().lu();
        let det = lu.determinant();
        if det.abs() < 1e-12 {
            return Err(SamplingError::Singular);
        }
        let q = nalgebra::DVector::from_column_slice(reported);
        let x = lu.solve(&q).ok_or(SamplingError::Singular)?;
        Ok(x.iter().copied().collect())
    }
}

/// Readout-mitigated quasi-counts: the counts are multiplied by the inverse
/// confusion; negative entries are clipped to zero and the result rescaled
/// to the original total.
pub fn mitigate(
    counts: &BTreeMap<String, f64>,
    confusion: &ConfusionMatrix,
) -> Result<BTreeMap<String, f64>, SamplingError> {
    let m = confusion.qubits();
    let d = 1usize << m;
    let mut q = vec![0.0; d];
    for (k, &v) in counts {
        if k.len() != m {
            return Err(SamplingError::InvalidBitstring(k.clone()));
        }
        q[parse_bitstring(k)?] += v;
    }
    let total: f64 = q.iter().sum();
    let x: Vec<f64> = confusion.unfold(&q)?.into_iter().map(|v| v.max(0.0)).collect();
    let kept: f64 = x.iter().sum();
    let scale = if kept > 0.0 { total / kept } else { 0.0 };
    Ok((0..d).map(|i| (bitstring(&index_bits(i, m)), x[i] * scale)).collect())
}

/// Estimate a confusion matrix from calibration circuits.
///
/// For `m <= 3` every basis state is prepared and the full `2^m x 2^m`
/// matrix is estimated jointly; otherwise each qubit is calibrated alone
/// from `|0>` and `|1>` and the product is returned. `readout` is the
/// device's true per-qubit confusion.
pub fn calibrate(readout: &[[[f64; 2]; 2]], shots: usize, seed: u64) -> Result<ConfusionMatrix, SamplingError> {
    let m = readout.len();
    let estimate = |truth: &[f64], stream: u64| -> Vec<f64> {
        let mut row = vec![0.0; truth.len()];
        for i in sample_indices(truth, shots, stream_seed(seed, stream)) {
            row[i] += 1.0;
        }
        row.iter().map(|c| c / shots as f64).collect()
    };
    if m <= 3 {
        let d = 1usize << m;
        let rows: Vec<Vec<f64>> = (0..d)
            .map(|t| {
                let mut basis = vec![0.0; d];
                basis[t] = 1.0;
                estimate(&apply_readout(&basis, readout), t as u64)
            })
            .collect();
        ConfusionMatrix::new(m, &rows)
    } else {
        let parts: Vec<ConfusionMatrix> = readout
            .iter()
            .enumerate()
            .map(|(q, c)| {
                let r0 = estimate(&c[0], 2 * q as u64);
                let r1 = estimate(&c[1], 2 * q as u64 + 1);
                ConfusionMatrix::single([[r0[0], r0[1]], [r1[0], r1[1]]])
            })
            .collect::<Result<_, _>>()?;
        Ok(ConfusionMatrix::tensor(&parts))
    }
}

/// Retained records with their fraction and binomial standard error.
#[derive(Clone, Debug, PartialEq)]
pub struct PostSelection {
    pub records: Vec<ShotRecord>,
    pub retained_fraction: f64,
    pub std_error: f64,
}

pub fn binomial_std_error(p: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    }
}

/// Keep the records accepted by `accept`. Bitstrings are never altered.
pub fn postselect(
    records: &[ShotRecord],
    accept: impl Fn(&ShotRecord) -> bool,
) -> Result<PostSelection, SamplingError> {
    let kept: Vec<ShotRecord> = records
        .iter()
        .filter(|r| accept(r))
        .map(|r| ShotRecord {
            retained: true,
            ..r.clone()
        })
        .collect();
    if kept.is_empty() {
        return Err(SamplingError::EmptySelection);
    }
    let f = kept.len() as f64 / records.len() as f64;
    Ok(PostSelection {
        std_error: binomial_std_error(f, records.len()),
        retained_fraction: f,
        records: kept,
    })
}

/// Keep the records whose bitstring is in `accepted`.
pub fn postselect_outcomes(
    records: &[ShotRecord],
    accepted: &BTreeSet<Vec<u8>>,
) -> Result<PostSelection, SamplingError> {
    if accepted.is_empty() {
        return Err(SamplingError::NoAcceptedOutcomes);
    }
    postselect(records, |r| accepted.contains(&r.bits))
}

/// Flag records in place (`retained = accept(record)`) and return the
/// retained fraction.
pub fn mark_retained(records: &mut [ShotRecord], accept: impl Fn(&ShotRecord) -> bool) -> f64 {
    let mut kept = 0usize;
    for r in records.iter_mut() {
        r.retained = accept(r);
        kept += r.retained as usize;
    }
    kept as f64 / records.len().max(1) as f64
}
