//! Small complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Single-qubit Pauli matrices in `I, X, Y, Z` order.
pub fn pauli_matrix(letter: char) -> CMatrix {
    match letter {
        'I' => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ONE]),
        'X' => CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        'Y' => CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        'Z' => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        other => panic!("not a Pauli letter: {other}"),
    }
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Tensor product of Pauli letters, leftmost letter on the most significant
/// qubit.
pub fn pauli_string_matrix(letters: &str) -> CMatrix {
    letters
        .chars()
        .fold(CMatrix::from_element(1, 1, ONE), |acc, l| kron(&acc, &pauli_matrix(l)))
}

/// Make a matrix exactly Hermitian by averaging with its adjoint.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Eigen-decomposition of a Hermitian matrix; eigenvalues ascending.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitize(m));
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMatrix::from_fn(m.nrows(), m.ncols(), |r, k| eig.eigenvectors[(r, idx[k])]);
    (vals, vecs)
}

/// Rebuild `V diag(f(lambda)) V^dagger`.
pub fn spectral_map(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (vals, vecs) = eigh(m);
    let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&v| c(f(v), 0.0)),
    ));
    &vecs * d * vecs.adjoint()
}

/// Square root of a positive semidefinite matrix (negative eigenvalues clipped).
pub fn sqrtm_psd(m: &CMatrix) -> CMatrix {
    spectral_map(m, |v| v.max(0.0).sqrt())
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Euclidean projection of a real vector onto the simplex `{x >= 0, sum x = total}`.
pub fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - total) / (k as f64 + 1.0);
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Closest matrix (Frobenius norm) that is positive semidefinite with the
/// given trace: eigenvalues are projected onto the simplex.
pub fn project_psd_trace(m: &CMatrix, total: f64) -> CMatrix {
    let (vals, vecs) = eigh(m);
    let proj = project_simplex(&vals, total);
    let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        proj.len(),
        proj.iter().map(|&v| c(v, 0.0)),
    ));
    hermitize(&(&vecs * d * vecs.adjoint()))
}

/// Partial trace of a bipartite operator on `dim_a * dim_b`, tracing out the
/// second factor when `keep_first` is true.
pub fn partial_trace(m: &CMatrix, dim_a: usize, dim_b: usize, keep_first: bool) -> CMatrix {
    if keep_first {
        CMatrix::from_fn(dim_a, dim_a, |i, j| {
            (0..dim_b).map(|k| m[(i * dim_b + k, j * dim_b + k)]).sum()
        })
    } else {
        CMatrix::from_fn(dim_b, dim_b, |i, j| {
            (0..dim_a).map(|k| m[(k * dim_b + i, k * dim_b + j)]).sum()
        })
    }
}

pub fn frobenius_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Trace distance `||a - b||_1 / 2` for Hermitian arguments.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let (vals, _) = eigh(&(a - b));
    vals.iter().map(|v| v.abs()).sum::<f64>() / 2.0
}

/// Inverse square root of a positive definite matrix.
pub fn inv_sqrtm(m: &CMatrix) -> Option<CMatrix> {
    let (vals, _) = eigh(m);
    if vals.iter().any(|&v| v <= 1e-14) {
        return None;
    }
    Some(spectral_map(m, |v| 1.0 / v.sqrt()))
}
