//! Shared fixtures and independent reference computations for the
//! integration tests.
#![allow(dead_code)]

use std::f64::consts::{LN_2, PI};

use lplmmse::channel::TapSet;
use lplmmse::linalg::CMat;
use lplmmse::rng::{complex_normal, SimRng};
use lplmmse::Complex64;
use nalgebra::DMatrix;
use rand::Rng;

pub fn two_tap() -> TapSet {
    TapSet::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/two_tap.json")).unwrap()
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn gaussian_matrix(rows: usize, cols: usize, var: f64, rng: &mut SimRng) -> CMat {
    DMatrix::from_fn(rows, cols, |_, _| complex_normal(rng, var))
}

pub fn gaussian_vector(len: usize, var: f64, rng: &mut SimRng) -> Vec<Complex64> {
    (0..len).map(|_| complex_normal(rng, var)).collect()
}

/// `F[k, n] = exp(-2πi kn/J) / √J`.
pub fn dft_matrix(j: usize) -> CMat {
    let s = 1.0 / (j as f64).sqrt();
    DMatrix::from_fn(j, j, |k, n| Complex64::from_polar(s, -2.0 * PI * (k * n % j) as f64 / j as f64))
}

/// Dense LMMSE: `x̂ = x̄ + v A^H R^{-1} (y - A x̄)` and
/// `M = v I - v^2 A^H R^{-1} A`, `R = v A A^H + σ² I`.
pub fn dense_lmmse(a: &CMat, y: &[Complex64], x_bar: &[Complex64], v: f64, sigma2: f64) -> (Vec<Complex64>, CMat) {
    let (m, n) = a.shape();
    let r = a * a.adjoint() * c(v, 0.0) + CMat::identity(m, m) * c(sigma2, 0.0);
    let r_inv = r.try_inverse().expect("R is invertible");
    let xb = DMatrix::from_column_slice(n, 1, x_bar);
    let yy = DMatrix::from_column_slice(m, 1, y);
    let gain = a.adjoint() * &r_inv * c(v, 0.0);
    let x_hat = &xb + &gain * (yy - a * &xb);
    let mmse = CMat::identity(n, n) * c(v, 0.0) - &gain * a * c(v, 0.0);
    (x_hat.iter().copied().collect(), mmse)
}

/// `Σ_n log2(1 + g_n)` / count.
pub fn mean_log2_1p(snr: &[f64]) -> f64 {
    snr.iter().map(|a| (1.0 + a).ln()).sum::<f64>() / (snr.len() as f64 * LN_2)
}

/// `log2 det(I + H Q H^H / σ²)` by LU.
pub fn log2_det(h: &CMat, q: &CMat, sigma2: f64) -> f64 {
    let m = h.nrows();
    let x = CMat::identity(m, m) + h * q * h.adjoint() / c(sigma2, 0.0);
    x.determinant().re.ln() / LN_2
}

/// Uniform point on `{w >= 0, Σ w = total}`.
pub fn random_simplex(n: usize, total: f64, rng: &mut SimRng) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| total * x / s).collect()
}

/// Squared singular values of an `n x n` Rayleigh matrix.
pub fn random_lambda2(n: usize, rng: &mut SimRng) -> Vec<f64> {
    let h = gaussian_matrix(n, n, 1.0, rng);
    h.singular_values().iter().map(|s| s * s).collect()
}

/// Bisection for an increasing `f` with `f(lo) < 0 < f(hi)`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    assert!(f(lo) < 0.0 && f(hi) > 0.0, "root not bracketed");
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
