//! Detector transfer function φ, matched decoder curves ψ, the chart
//! recursion, and achievable rates.
//!
//! Internally every integral is in nats; the public rate functions report
//! bits per antenna per channel use.

use std::f64::consts::LN_2;

use crate::constellation::GammaCurve;
use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::linalg::{gram_eigenvalues, CMat};
use crate::quadrature::{integrate, integrate_breakpoints, integrate_to_infinity, integrate_vec, QuadOptions};

/// A scalar transfer curve.
pub trait Curve: Sync {
    fn eval(&self, x: f64) -> f64;

    /// Abscissae where the curve or its slope may jump.
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }

    /// The curve vanishes identically beyond this abscissa.
    fn support_end(&self) -> Option<f64> {
        None
    }
}

/// A closure viewed as a [`Curve`].
pub struct FnCurve<F> {
    f: F,
    kinks: Vec<f64>,
    support_end: Option<f64>,
}

impl<F: Fn(f64) -> f64 + Sync> FnCurve<F> {
    pub fn new(f: F) -> Self {
        FnCurve { f, kinks: Vec::new(), support_end: None }
    }

    pub fn with_kinks(mut self, kinks: Vec<f64>) -> Self {
        self.kinks = kinks;
        self
    }

    pub fn with_support_end(mut self, end: f64) -> Self {
        self.support_end = Some(end);
        self
    }
}

impl<F: Fn(f64) -> f64 + Sync> Curve for FnCurve<F> {
    fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }
    fn kinks(&self) -> Vec<f64> {
        self.kinks.clone()
    }
    fn support_end(&self) -> Option<f64> {
        self.support_end
    }
}

/// The detector's SINR-variance map for a set of per-mode SNRs
/// `a_n = d_n^2 / sigma2`:
///
/// `φ(v) = (mean 1/(1/v + a_n))^{-1} - 1/v = mean(a/(1+va)) / mean(1/(1+va))`.
#[derive(Debug, Clone)]
pub struct Phi {
    snr: Vec<f64>,
}

impl Phi {
    pub fn from_snr(snr: Vec<f64>) -> Result<Self> {
        if snr.is_empty() {
            return Err(Error::Dimension("phi needs at least one mode".into()));
        }
        if snr.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::domain("mode SNRs must be finite and non-negative"));
        }
        Ok(Phi { snr })
    }

    /// Full CSIT: effective gains `d_n` and noise power.
    pub fn full(gains: &[f64], sigma2: f64) -> Result<Self> {
        check_sigma2(sigma2)?;
        Phi::from_snr(gains.iter().map(|d| d * d / sigma2).collect())
    }

    /// Partial CSIT: pools, for each channel sample, the eigenvalues of
    /// `H Q H^H / sigma2` padded with zeros to `N` entries.
    pub fn partial(samples: &[CMat], q: &CMat, sigma2: f64) -> Result<Self> {
        check_sigma2(sigma2)?;
        let n = q.nrows();
        if samples.is_empty() {
            return Err(Error::TooFewSamples { need: 1, got: 0 });
        }
        let mut snr = Vec::with_capacity(samples.len() * n);
        for h in samples {
            if h.ncols() != n {
                return Err(Error::Dimension(format!("channel has {} columns, Q is {n}x{n}", h.ncols())));
            }
            let mu = gram_eigenvalues(h, q, sigma2);
            let r = n.min(h.nrows());
            snr.extend(mu.iter().take(r));
            snr.extend(std::iter::repeat_n(0.0, n - r));
        }
        Phi::from_snr(snr)
    }

    pub fn snr(&self) -> &[f64] {
        &self.snr
    }

    pub fn eval(&self, v: f64) -> f64 {
        let v = v.max(0.0);
        let (mut s0, mut s1) = (0.0, 0.0);
        for a in &self.snr {
            let t = 1.0 / (1.0 + v * a);
            s0 += t;
            s1 += a * t;
        }
        s1 / s0
    }

    /// φ(0) = mean(a).
    pub fn at_zero(&self) -> f64 {
        self.eval(0.0)
    }

    pub fn at_one(&self) -> f64 {
        self.eval(1.0)
    }

    /// ∂φ(v)/∂a_n for every mode.
    pub fn sensitivity(&self, v: f64, out: &mut [f64]) {
        let v = v.max(0.0);
        let n = self.snr.len() as f64;
        let s0: f64 = self.snr.iter().map(|a| 1.0 / (1.0 + v * a)).sum::<f64>() / n;
        let scale = 1.0 / (n * s0 * s0);
        for (o, a) in out.iter_mut().zip(&self.snr) {
            let t = 1.0 / (1.0 + v * a);
            *o = scale * t * t;
        }
    }

    fn slope(&self, v: f64) -> f64 {
        let (mut s0, mut s1, mut t1, mut u1) = (0.0, 0.0, 0.0, 0.0);
        for a in &self.snr {
            let t = 1.0 / (1.0 + v * a);
            s0 += t;
            s1 += a * t;
            t1 += a * t * t;
            u1 += a * a * t * t;
        }
        (s1 * t1 - u1 * s0) / (s0 * s0)
    }

    /// v in [0, 1] with φ(v) = ρ for ρ in [φ(1), φ(0)] (safeguarded Newton).
    pub fn inverse(&self, rho: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        if rho >= self.at_zero() {
            return 0.0;
        }
        if rho <= self.at_one() {
            return 1.0;
        }
        let mut v = 0.5;
        for _ in 0..200 {
            let f = self.eval(v) - rho;
            if f == 0.0 {
                return v;
            }
            if f > 0.0 {
                lo = v;
            } else {
                hi = v;
            }
            let d = self.slope(v);
            let newton = v - f / d;
            v = if d < 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= 4.0 * f64::EPSILON * hi.max(1e-300) || (f.abs() <= 1e-15 * rho.abs()) {
                break;
            }
        }
        v
    }

    /// Verifies φ is non-increasing on `points + 1` equispaced `v` in `[0, 1]`.
    pub fn check_monotone(&self, points: usize) -> Result<()> {
        let mut prev = self.eval(0.0);
        for k in 1..=points {
            let v = k as f64 / points as f64;
            let cur = self.eval(v);
            if cur > prev * (1.0 + 1e-12) + 1e-300 {
                return Err(Error::NonMonotone { lo: (k - 1) as f64 / points as f64, hi: v });
            }
            prev = cur;
        }
        Ok(())
    }
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("noise power must be positive, got {sigma2}")))
    }
}

fn check_v(v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("variance must lie in (0, 1], got {v}")))
    }
}

/// φ(v) for full CSIT, evaluated literally as
/// `(N^{-1} sum (1/v + d_n^2/sigma2)^{-1})^{-1} - 1/v`.
pub fn phi_full(v: f64, gains: &[f64], sigma2: f64) -> Result<f64> {
    check_v(v)?;
    check_sigma2(sigma2)?;
    if gains.is_empty() {
        return Err(Error::Dimension("no gains".into()));
    }
    let mean: f64 = gains.iter().map(|d| 1.0 / (1.0 / v + d * d / sigma2)).sum::<f64>() / gains.len() as f64;
    Ok(1.0 / mean - 1.0 / v)
}

/// φ(v) for partial CSIT: `(N^{-1} E tr (I/v + Q^{1/2} H^H H Q^{1/2}/sigma2)^{-1})^{-1} - 1/v`
/// with the expectation replaced by the sample mean.
pub fn phi_partial(v: f64, samples: &[CMat], q: &CMat, sigma2: f64) -> Result<f64> {
    check_v(v)?;
    check_sigma2(sigma2)?;
    let n = q.nrows();
    if samples.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let mut trace = 0.0;
    for h in samples {
        let mu = gram_eigenvalues(h, q, sigma2);
        let r = n.min(h.nrows());
        trace += mu.iter().take(r).map(|m| v / (1.0 + v * m)).sum::<f64>() + (n - r) as f64 * v;
    }
    let mean = trace / (samples.len() * n) as f64;
    Ok(1.0 / mean - 1.0 / v)
}

/// The decoder curve matched to φ:
/// 1 below φ(1), φ⁻¹(ρ) on `[φ(1), φ(0))`, 0 from φ(0) on.
#[derive(Debug, Clone)]
pub struct MatchedPsi {
    phi: Phi,
    lo: f64,
    hi: f64,
}

/// Grid used to check φ's monotonicity before inverting it.
pub const MONOTONE_CHECK_POINTS: usize = 256;

pub fn matched_psi(phi: &Phi) -> Result<MatchedPsi> {
    phi.check_monotone(MONOTONE_CHECK_POINTS)?;
    Ok(MatchedPsi { phi: phi.clone(), lo: phi.at_one(), hi: phi.at_zero() })
}

impl MatchedPsi {
    pub fn phi(&self) -> &Phi {
        &self.phi
    }

    /// `(φ(1), φ(0))`, the edges of the matching band.
    pub fn band(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

impl Curve for MatchedPsi {
    fn eval(&self, rho: f64) -> f64 {
        if rho >= self.hi {
            0.0
        } else if rho < self.lo {
            1.0
        } else {
            self.phi.inverse(rho)
        }
    }
    fn kinks(&self) -> Vec<f64> {
        vec![self.lo, self.hi]
    }
    fn support_end(&self) -> Option<f64> {
        Some(self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// v -> ρ
    Phi,
    /// ρ -> v
    Psi,
}

/// A sampled monotone curve with shape-preserving interpolation.
#[derive(Debug, Clone)]
pub struct TransferCurve {
    direction: Direction,
    interp: MonotoneCubic,
}

impl TransferCurve {
    /// Knots must have strictly increasing abscissae. A ψ curve must be
    /// non-increasing with values in `[0, 1]`.
    pub fn new(direction: Direction, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() < 2 || x.len() != y.len() {
            return Err(Error::Dimension("a sampled curve needs at least two (x, y) pairs".into()));
        }
        if x.iter().chain(&y).any(|t| !t.is_finite()) {
            return Err(Error::domain("curve samples must be finite"));
        }
        if let Some(w) = x.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotone { lo: w[0], hi: w[1] });
        }
        if direction == Direction::Psi {
            if y.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::domain("psi values must lie in [0, 1]"));
            }
            if let Some(k) = (1..y.len()).find(|&k| y[k] > y[k - 1]) {
                return Err(Error::NonMonotone { lo: x[k - 1], hi: x[k] });
            }
        }
        Ok(TransferCurve { direction, interp: MonotoneCubic::new(x, y) })
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        self.interp.knots()
    }
}

impl Curve for TransferCurve {
    fn eval(&self, x: f64) -> f64 {
        self.interp.eval(x)
    }
    fn kinks(&self) -> Vec<f64> {
        self.interp.knots().0.to_vec()
    }
    fn support_end(&self) -> Option<f64> {
        let (x, y) = self.interp.knots();
        (*y.last().unwrap() == 0.0).then(|| *x.last().unwrap())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointTrace {
    /// `(ρ_i, v_i)` for i = 1, 2, ...
    pub iterations: Vec<(f64, f64)>,
    pub v_star: f64,
    pub converged: bool,
}

/// Iterates `ρ ← φ(v)`, `v ← ψ(ρ)` from `v0` until `|Δv| < tol`, `v` hits
/// zero, or `cap` iterations.
pub fn fixed_point(phi: impl Fn(f64) -> f64, psi: impl Fn(f64) -> f64, v0: f64, tol: f64, cap: usize) -> FixedPointTrace {
    let mut v = v0;
    let mut iterations = Vec::new();
    for _ in 0..cap {
        let rho = phi(v);
        let next = psi(rho).clamp(0.0, 1.0);
        iterations.push((rho, next));
        let done = (next - v).abs() < tol || next <= 0.0;
        v = next;
        if done {
            return FixedPointTrace { iterations, v_star: v, converged: true };
        }
    }
    FixedPointTrace { iterations, v_star: v, converged: false }
}

/// ∫ (ψ(ρ)⁻¹ + ρ)⁻¹ dρ over [0, ∞), in bits.
pub fn rate_from_psi(psi: &dyn Curve) -> Result<f64> {
    let f = |rho: f64| {
        let p = psi.eval(rho);
        if p > 0.0 {
            p / (1.0 + rho * p)
        } else {
            0.0
        }
    };
    let opts = QuadOptions { abs_tol: 1e-10, rel_tol: 1e-12, max_intervals: 20_000 };
    let mut points = vec![0.0];
    let mut kinks: Vec<f64> = psi.kinks().into_iter().filter(|k| k.is_finite() && *k > 0.0).collect();
    kinks.sort_by(f64::total_cmp);
    let nats = match psi.support_end() {
        Some(end) => {
            points.extend(kinks.into_iter().filter(|k| *k < end));
            points.push(end.max(0.0));
            integrate_breakpoints(f, &points, opts)?.value
        }
        None => {
            for rho in [1e8, 1e10, 1e12] {
                let tail = rho * f(rho);
                if tail > 1e-4 {
                    return Err(Error::Divergent(format!("rho * integrand is {tail:e} at rho = {rho:e}; psi decays too slowly")));
                }
            }
            let split = kinks.last().copied().unwrap_or(1.0).max(1.0);
            points.extend(kinks.into_iter().filter(|k| *k < split));
            points.push(split);
            let head = integrate_breakpoints(f, &points, opts)?.value;
            let tail = integrate_to_infinity(f, split, opts).map_err(|e| match e {
                Error::Quadrature { value, error } => {
                    Error::Divergent(format!("tail integral did not settle (value {value:e}, error {error:e})"))
                }
                other => other,
            })?;
            head + tail.value
        }
    };
    Ok(nats / LN_2)
}

/// Closed-form rate with Gaussian signalling: `N^{-1} sum log2(1 + d_n^2/sigma2)`.
pub fn rate_gaussian(gains: &[f64], sigma2: f64) -> Result<f64> {
    let phi = Phi::full(gains, sigma2)?;
    Ok(mean_log2_1p(phi.snr()))
}

fn mean_log2_1p(snr: &[f64]) -> f64 {
    snr.iter().map(|a| a.ln_1p()).sum::<f64>() / (snr.len() as f64 * LN_2)
}

/// Threshold below which γ is treated as zero when truncating the
/// discrete-constellation rate integral.
pub const GAMMA_TRUNCATION: f64 = 1e-9;

fn truncation_point(gamma: &GammaCurve) -> f64 {
    let mut rho = 1.0;
    while gamma.value(rho) >= GAMMA_TRUNCATION && rho < 1e9 {
        rho *= 2.0;
    }
    rho
}

/// Rate of a matched decoder with a discrete constellation (or Gaussian
/// signalling), in bits:
/// `log|S| - ∫ γ(ρ + φ(γ(ρ))) dρ`.
///
/// With the Gaussian γ the equivalent form `∫ γ(ρ) - γ(ρ + φ(γ(ρ))) dρ`
/// is used, since `∫ γ` itself diverges.
pub fn rate_constellation(phi: &Phi, gamma: &GammaCurve) -> Result<f64> {
    let opts = QuadOptions { abs_tol: 1e-11, rel_tol: 1e-12, max_intervals: 8000 };
    let nats = match gamma.constellation() {
        None => {
            let f = |rho: f64| {
                let g = gamma.value(rho);
                g - gamma.value(rho + phi.eval(g))
            };
            integrate_to_infinity(f, 0.0, opts)?.value
        }
        Some(c) => {
            let end = truncation_point(gamma);
            let f = |rho: f64| gamma.value(rho + phi.eval(gamma.value(rho)));
            c.log_cardinality() - integrate(f, 0.0, end, opts)?.value
        }
    };
    Ok(nats / LN_2)
}

/// [`rate_constellation`] together with its gradient with respect to each mode
/// SNR `a_n`, both in bits.
pub fn rate_constellation_with_gradient(phi: &Phi, gamma: &GammaCurve) -> Result<(f64, Vec<f64>)> {
    let value = rate_constellation(phi, gamma)?;
    let n = phi.snr().len();
    let opts = QuadOptions { abs_tol: 1e-11, rel_tol: 1e-9, max_intervals: 8000 };
    let mut sens = vec![0.0; n];
    let mut integrand = |rho: f64, out: &mut [f64]| {
        let g = gamma.value(rho);
        let slope = gamma.derivative(rho + phi.eval(g));
        phi.sensitivity(g, &mut sens);
        for (o, s) in out.iter_mut().zip(&sens) {
            *o = -slope * s;
        }
    };
    let grad = if gamma.is_gaussian() {
        let mapped = |t: f64, out: &mut [f64]| {
            let s = 1.0 - t;
            integrand(t / s, out);
            let jac = 1.0 / (s * s);
            out.iter_mut().for_each(|o| *o = if o.is_finite() { *o * jac } else { 0.0 });
        };
        integrate_vec(mapped, n, 0.0, 1.0, opts)?.value
    } else {
        integrate_vec(integrand, n, 0.0, truncation_point(gamma), opts)?.value
    };
    Ok((value, grad.into_iter().map(|g| g / LN_2).collect()))
}

/// `N^{-1} E[log2 det(I + H Q H^H / sigma2)]` over the supplied samples.
pub fn rate_partial_gaussian(samples: &[CMat], q: &CMat, sigma2: f64) -> Result<f64> {
    check_sigma2(sigma2)?;
    if samples.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let n = q.nrows() as f64;
    let total: f64 = samples
        .iter()
        .map(|h| gram_eigenvalues(h, q, sigma2).iter().map(|m| m.ln_1p()).sum::<f64>())
        .sum();
    Ok(total / (samples.len() as f64 * n * LN_2))
}
