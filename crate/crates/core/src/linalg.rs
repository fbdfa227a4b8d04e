//! Small dense complex linear-algebra helpers and the unitary DFT.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Eigen-decomposition of a Hermitian matrix, eigenvalues descending.
pub fn hermitian_eig(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let sym = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Eigenvalues of `H Q H^H / sigma2`, descending, length `rows(H)`.
pub fn gram_eigenvalues(h: &CMat, q: &CMat, sigma2: f64) -> Vec<f64> {
    let g = h * q * h.adjoint() / Complex64::new(sigma2, 0.0);
    hermitian_eig(&g).0.into_iter().map(|x| x.max(0.0)).collect()
}

/// `U diag(values) U^H`.
pub fn from_eig(values: &[f64], vectors: &CMat) -> CMat {
    let mut scaled = vectors.clone();
    for (c, &v) in values.iter().enumerate() {
        scaled.column_mut(c).scale_mut(v);
    }
    &scaled * vectors.adjoint()
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Real trace of a (Hermitian) matrix.
pub fn trace_re(m: &CMat) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|k| m[(k, k)].re).sum()
}

/// Orthonormal completion: returns an `n x n` unitary whose first columns are
/// the (orthonormal) columns of `partial`.
pub fn complete_unitary(partial: &CMat) -> CMat {
    let n = partial.nrows();
    let mut cols: Vec<CVec> = partial.column_iter().map(|c| c.into_owned()).collect();
    let mut e = 0;
    while cols.len() < n && e < n {
        let mut cand = CVec::zeros(n);
        cand[e] = ONE;
        e += 1;
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dotc(&cand);
                cand -= c * proj;
            }
        }
        let norm = cand.norm();
        if norm > 1e-8 {
            cols.push(cand / Complex64::new(norm, 0.0));
        }
    }
    CMat::from_columns(&cols)
}

/// Unitary DFT of length `len`: `(F x)_k = len^{-1/2} sum_n x_n e^{-j 2 pi k n / len}`.
#[derive(Clone)]
pub struct Dft {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Dft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dft").field("len", &self.len).finish()
    }
}

impl Dft {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Dft { len, forward: planner.plan_fft_forward(len), inverse: planner.plan_fft_inverse(len) }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place `x <- F x` on each consecutive chunk of `len` entries.
    pub fn forward(&self, x: &mut [Complex64]) {
        self.forward.process(x);
        self.scale(x);
    }

    /// In-place `x <- F^H x` on each consecutive chunk of `len` entries.
    pub fn inverse(&self, x: &mut [Complex64]) {
        self.inverse.process(x);
        self.scale(x);
    }

    fn scale(&self, x: &mut [Complex64]) {
        let s = 1.0 / (self.len as f64).sqrt();
        x.iter_mut().for_each(|z| *z *= s);
    }
}
