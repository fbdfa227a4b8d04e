//! LMMSE estimation and extrinsic message extraction.
//!
//! Every observation model implements [`LinearModel`]. The structured
//! models (diagonal-times-DFT for full CSIT, the block operator for partial
//! CSIT) run in `O(J log J)`; [`DenseModel`] solves the normal equations
//! directly and serves as the reference path.

use num_complex::Complex64;

use crate::constellation::{posterior_messages, prior_stats, Constellation, PriorStats, SymbolPrior};
use crate::error::{Error, Result};
use crate::linalg::{trace_re, CMat, CVec, Dft, ZERO};
use crate::precoder::{FullCsitPrecoder, PartialCsitPrecoder};

/// LMMSE output: the estimate and the common diagonal of its error
/// covariance.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub x_hat: Vec<Complex64>,
    pub mmse: f64,
}

/// `y = A x + noise` with `A` known to the receiver.
pub trait LinearModel: Sync {
    fn input_len(&self) -> usize;
    fn output_len(&self) -> usize;
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64>;
    fn adjoint(&self, y: &[Complex64]) -> Vec<Complex64>;
    /// `x̂ = x̄ + v A^H R^{-1} (y - A x̄)` with `R = v A A^H + sigma2 I`, and
    /// `J^{-1} tr(v I - v^2 A^H R^{-1} A)`.
    fn lmmse(&self, y: &[Complex64], x_bar: &[Complex64], v: f64, sigma2: f64) -> Result<Estimate>;
}

fn check_inputs(model: &dyn LinearModel, y: &[Complex64], x_bar: &[Complex64], v: f64, sigma2: f64) -> Result<()> {
    if y.len() != model.output_len() || x_bar.len() != model.input_len() {
        return Err(Error::Dimension(format!(
            "model maps {} -> {}, got x̄ of {} and y of {}",
            model.input_len(),
            model.output_len(),
            x_bar.len(),
            y.len()
        )));
    }
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::domain(format!("prior variance must be positive, got {v}")));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::domain(format!("noise power must be positive, got {sigma2}")));
    }
    Ok(())
}

/// `J^{-1} sum_k (1/v + d_k^2/sigma2)^{-1}`.
pub fn mmse_diagonal(d: &[f64], v: f64, sigma2: f64) -> Result<f64> {
    if !(v > 0.0) || !(sigma2 > 0.0) || d.is_empty() {
        return Err(Error::domain("mmse_diagonal needs v > 0, sigma2 > 0 and at least one gain"));
    }
    Ok(d.iter().map(|dk| 1.0 / (1.0 / v + dk * dk / sigma2)).sum::<f64>() / d.len() as f64)
}

/// `A = D F` with real diagonal `D` and the unitary DFT `F`.
#[derive(Debug, Clone)]
pub struct DiagonalDft {
    d: Vec<f64>,
    dft: Dft,
}

impl DiagonalDft {
    pub fn new(d: Vec<f64>) -> Self {
        let dft = Dft::new(d.len());
        DiagonalDft { d, dft }
    }

    pub fn gains(&self) -> &[f64] {
        &self.d
    }
}

fn diag_dft_apply(d: &[f64], dft: &Dft, x: &[Complex64]) -> Vec<Complex64> {
    let mut z = x.to_vec();
    dft.forward(&mut z);
    z.iter_mut().zip(d).for_each(|(z, d)| *z *= d);
    z
}

fn diag_dft_adjoint(d: &[f64], dft: &Dft, y: &[Complex64]) -> Vec<Complex64> {
    let mut z: Vec<Complex64> = y.iter().zip(d).map(|(y, d)| y * d).collect();
    dft.inverse(&mut z);
    z
}

fn diag_dft_lmmse(d: &[f64], dft: &Dft, y: &[Complex64], x_bar: &[Complex64], v: f64, sigma2: f64) -> Result<Estimate> {
    let ax = diag_dft_apply(d, dft, x_bar);
    let mut t: Vec<Complex64> = y
        .iter()
        .zip(&ax)
        .zip(d)
        .map(|((y, a), dk)| (y - a) * (v * dk / (v * dk * dk + sigma2)))
        .collect();
    dft.inverse(&mut t);
    let x_hat = x_bar.iter().zip(&t).map(|(a, b)| a + b).collect();
    Ok(Estimate { x_hat, mmse: mmse_diagonal(d, v, sigma2)? })
}

impl LinearModel for DiagonalDft {
    fn input_len(&self) -> usize {
        self.d.len()
    }
    fn output_len(&self) -> usize {
        self.d.len()
    }
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        diag_dft_apply(&self.d, &self.dft, x)
    }
    fn adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        diag_dft_adjoint(&self.d, &self.dft, y)
    }
    fn lmmse(&self, y: &[Complex64], x_bar: &[Complex64], v: f64, sigma2: f64) -> Result<Estimate> {
        check_inputs(self, y, x_bar, v, sigma2)?;
        diag_dft_lmmse(&self.d, &self.dft, y, x_bar, v, sigma2)
    }
}

/// In the mode domain the full-CSIT precoder and channel reduce to `D F`.
impl LinearModel for FullCsitPrecoder {
    fn input_len(&self) -> usize {
        self.block_len()
    }
    fn output_len(&self) -> usize {
        self.block_len()
    }
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        diag_dft_apply(self.effective_gains(), self.dft(), x)
    }
    fn adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        diag_dft_adjoint(self.effective_gains(), self.dft(), y)
    }
    fn lmmse(&self, y: &[Complex64], x_bar: &[Complex64], v: f64, sigma2: f64) -> Result<Estimate> {
        check_inputs(self, y, x_bar, v, sigma2)?;
        diag_dft_lmmse(self.effective_gains(), self.dft(), y, x_bar, v, sigma2)
    }
}

/// `R` is block-diagonal with one `M x M` block `v H_t Q H_t^H + sigma2 I`
/// per channel use.
impl LinearModel for PartialCsitPrecoder {
    fn input_len(&self) -> usize {
        self.block_len()
    }
    fn output_len(&self) -> usize {
        self.channels().len() * self.rx()
    }
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        PartialCsitPrecoder::apply(self, x)
    }
    fn adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        PartialCsitPrecoder::adjoint(self, y)
    }
    fn lmmse(&self, y: &[Complex64], x_bar: &[Complex64], v: f64, sigma2: f64) -> Result<Estimate> {
        check_inputs(self, y, x_bar, v, sigma2)?;
        let m = self.rx();
        let ax = PartialCsitPrecoder::apply(self, x_bar);
        let mut s = vec![ZERO; y.len()];
        let mut reduction = 0.0;
        for (t, h) in self.channels().iter().enumerate() {
            let hqh = h * self.covariance() * h.adjoint();
            let r = &hqh * Complex64::new(v, 0.0) + CMat::identity(m, m) * Complex64::new(sigma2, 0.0);
            let chol = r.cholesky().ok_or_else(|| Error::domain("singular innovation covariance"))?;
            let innov = CVec::from_iterator(m, (0..m).map(|k| y[t * m + k] - ax[t * m + k]));
            let sol = chol.solve(&innov);
            s[t * m..(t + 1) * m].copy_from_slice(sol.as_slice());
            reduction += trace_re(&chol.solve(&hqh));
        }
        let back = PartialCsitPrecoder::adjoint(self, &s);
        let x_hat = x_bar.iter().zip(&back).map(|(a, b)| a + b * v).collect();
        let mmse = v - v * v * reduction / x_bar.len() as f64;
        Ok(Estimate { x_hat, mmse })
    }
}

/// Explicit matrix `A`; LMMSE by direct solves.
#[derive(Debug, Clone)]
pub struct DenseModel {
    a: CMat,
}

impl DenseModel {
    pub fn new(a: CMat) -> Self {
        DenseModel { a }
    }

    /// Materialises any model column by column.
    pub fn from_model(model: &dyn LinearModel) -> Self {
        let n = model.input_len();
        let mut a = CMat::zeros(model.output_len(), n);
        let mut e = vec![ZERO; n];
        for k in 0..n {
            e[k] = Complex64::new(1.0, 0.0);
            for (r, val) in model.apply(&e).into_iter().enumerate() {
                a[(r, k)] = val;
            }
            e[k] = ZERO;
        }
        DenseModel { a }
    }

    pub fn matrix(&self) -> &CMat {
        &self.a
    }

    fn innovation_cholesky(&self, v: f64, sigma2: f64) -> Result<nalgebra::Cholesky<Complex64, nalgebra::Dyn>> {
        let m = self.a.nrows();
        let r = &self.a * self.a.adjoint() * Complex64::new(v, 0.0) + CMat::identity(m, m) * Complex64::new(sigma2, 0.0);
        r.cholesky().ok_or_else(|| Error::domain("singular innovation covariance"))
    }

    /// Error covariance `v I - v^2 A^H R^{-1} A`.
    pub fn mmse_matrix(&self, v: f64, sigma2: f64) -> Result<CMat> {
        let n = self.a.ncols();
        let chol = self.innovation_cholesky(v, sigma2)?;
        Ok(CMat::identity(n, n) * Complex64::new(v, 0.0) - self.a.adjoint() * chol.solve(&self.a) * Complex64::new(v * v, 0.0))
    }
}

impl LinearModel for DenseModel {
    fn input_len(&self) -> usize {
        self.a.ncols()
    }
    fn output_len(&self) -> usize {
        self.a.nrows()
    }
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        (&self.a * CVec::from_column_slice(x)).as_slice().to_vec()
    }
    fn adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        (self.a.adjoint() * CVec::from_column_slice(y)).as_slice().to_vec()
    }
    fn lmmse(&self, y: &[Complex64], x_bar: &[Complex64], v: f64, sigma2: f64) -> Result<Estimate> {
        check_inputs(self, y, x_bar, v, sigma2)?;
        let xb = CVec::from_column_slice(x_bar);
        let innov = CVec::from_column_slice(y) - &self.a * &xb;
        let chol = self.innovation_cholesky(v, sigma2)?;
        let x_hat = &xb + self.a.adjoint() * chol.solve(&innov) * Complex64::new(v, 0.0);
        let mmse = trace_re(&self.mmse_matrix(v, sigma2)?) / x_bar.len() as f64;
        Ok(Estimate { x_hat: x_hat.as_slice().to_vec(), mmse })
    }
}

/// `x̂` alone.
pub fn lmmse_estimate(model: &dyn LinearModel, y: &[Complex64], x_bar: &[Complex64], v: f64, sigma2: f64) -> Result<Vec<Complex64>> {
    Ok(model.lmmse(y, x_bar, v, sigma2)?.x_hat)
}

/// Extrinsic observations `b_i = x_i + n_i` with common variance `u`.
#[derive(Debug, Clone)]
pub struct ExtrinsicBlock {
    pub b: Vec<Complex64>,
    pub u: f64,
}

/// Smallest accepted `1/u`; smaller positive values are clamped to it.
pub const MIN_EXTRINSIC_PRECISION: f64 = 1e-12;

/// `1/u = 1/M_ii - 1/v`, `b_i = u (x̂_i / M_ii - x̄_i / v)`.
pub fn extrinsic(x_hat: &[Complex64], x_bar: &[Complex64], v: f64, m_ii: f64) -> Result<ExtrinsicBlock> {
    if x_hat.len() != x_bar.len() {
        return Err(Error::Dimension("x̂ and x̄ differ in length".into()));
    }
    if !(v > 0.0 && m_ii > 0.0) {
        return Err(Error::domain(format!("need v > 0 and M_ii > 0, got v = {v}, M_ii = {m_ii}")));
    }
    let mut precision = 1.0 / m_ii - 1.0 / v;
    // Below a few ulps of 1/v the difference is rounding noise, not information.
    if m_ii >= v || precision <= 8.0 * f64::EPSILON / v {
        return Err(Error::NoExtrinsicInformation { mmse: m_ii, variance: v });
    }
    if precision < MIN_EXTRINSIC_PRECISION {
        log::warn!("extrinsic precision {precision:e} clamped to {MIN_EXTRINSIC_PRECISION:e}");
        precision = MIN_EXTRINSIC_PRECISION;
    }
    let u = 1.0 / precision;
    let b = x_hat.iter().zip(x_bar).map(|(xh, xb)| (xh / m_ii - xb / v) * u).collect();
    Ok(ExtrinsicBlock { b, u })
}

/// One detector pass: prior statistics, LMMSE, extrinsic step, messages.
#[derive(Debug, Clone)]
pub struct Detection {
    pub prior: PriorStats,
    pub estimate: Estimate,
    pub block: ExtrinsicBlock,
    pub posteriors: Vec<SymbolPrior>,
}

pub fn detect_block(
    model: &dyn LinearModel,
    y: &[Complex64],
    priors: &[SymbolPrior],
    constellation: &Constellation,
    sigma2: f64,
) -> Result<Detection> {
    let prior = prior_stats(priors, constellation)?;
    let estimate = model.lmmse(y, &prior.means, prior.variance, sigma2)?;
    let block = extrinsic(&estimate.x_hat, &prior.means, prior.variance, estimate.mmse)?;
    let posteriors = block
        .b
        .iter()
        .map(|b| posterior_messages(*b, block.u, constellation))
        .collect::<Result<Vec<_>>>()?;
    Ok(Detection { prior, estimate, block, posteriors })
}
