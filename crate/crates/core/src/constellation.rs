//! Signal sets, symbol messages and the γ (MMSE) function.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::par;
use crate::quadrature::{gauss_hermite, integrate_breakpoints, QuadOptions};

/// Lower clamp on the common prior variance.
pub const VARIANCE_FLOOR: f64 = 1e-12;

const POINT_TOL: f64 = 1e-9;

/// A finite, zero-mean, unit-power signal set with uniform priors.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    label: String,
    points: Vec<Complex64>,
    /// Per-axis levels when the set is the full product of its real and
    /// imaginary level sets; γ then splits into two 1-D integrals.
    axes: Option<(Vec<f64>, Vec<f64>)>,
}

impl Constellation {
    pub fn new(label: impl Into<String>, points: Vec<Complex64>) -> Result<Self> {
        let label = label.into();
        if points.len() < 2 {
            return Err(Error::Constellation(format!("{label}: need at least two points")));
        }
        if points.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
            return Err(Error::Constellation(format!("{label}: non-finite point")));
        }
        let n = points.len() as f64;
        let mean: Complex64 = points.iter().sum::<Complex64>() / n;
        if mean.norm() > POINT_TOL {
            return Err(Error::Constellation(format!("{label}: mean {mean} is not zero")));
        }
        let power = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / n;
        if (power - 1.0).abs() > POINT_TOL {
            return Err(Error::Constellation(format!("{label}: average power {power} is not one")));
        }
        for (i, a) in points.iter().enumerate() {
            if points[..i].iter().any(|b| (a - b).norm() < POINT_TOL) {
                return Err(Error::Constellation(format!("{label}: duplicate point {a}")));
            }
        }
        let axes = product_axes(&points);
        Ok(Constellation { label, points, axes })
    }

    pub fn bpsk() -> Self {
        let pts = vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)];
        Constellation::new("bpsk", pts).expect("bpsk is valid")
    }

    pub fn qpsk() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let pts = vec![
            Complex64::new(a, a),
            Complex64::new(-a, a),
            Complex64::new(-a, -a),
            Complex64::new(a, -a),
        ];
        Constellation::new("qpsk", pts).expect("qpsk is valid")
    }

    /// Standard 16-QAM, built as two superposed QPSK layers with power ratio 4:1.
    pub fn qam16() -> Self {
        let mut c = Constellation::scm(&[4.0, 1.0]).expect("16-QAM is valid");
        c.label = "qam16".into();
        c
    }

    /// Superposition of `ratios.len()` QPSK layers with the given power ratios.
    pub fn scm(ratios: &[f64]) -> Result<Self> {
        if ratios.is_empty() || ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Constellation("SCM power ratios must be positive".into()));
        }
        let total: f64 = ratios.iter().sum();
        let amps: Vec<f64> = ratios.iter().map(|r| (r / total).sqrt()).collect();
        let base = Constellation::qpsk().points;
        let mut points = vec![Complex64::new(0.0, 0.0)];
        for amp in &amps {
            points = points.iter().flat_map(|p| base.iter().map(move |q| p + q * amp)).collect();
        }
        let label = format!(
            "scm:{}:{}",
            ratios.len(),
            ratios.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(",")
        );
        Constellation::new(label, points)
    }

    /// `bpsk`, `qpsk`, `qam16`, or `scm:<n>:<r1>,<r2>,...` (`:` also accepted
    /// between ratios).
    pub fn parse(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Constellation::bpsk()),
            "qpsk" => Ok(Constellation::qpsk()),
            "qam16" | "16qam" => Ok(Constellation::qam16()),
            other => {
                let rest = other
                    .strip_prefix("scm:")
                    .ok_or_else(|| Error::Constellation(format!("unknown constellation '{name}'")))?;
                let (n, ratios) = rest
                    .split_once(':')
                    .ok_or_else(|| Error::Constellation(format!("expected scm:<n>:<ratios>, got '{name}'")))?;
                let n: usize = n
                    .parse()
                    .map_err(|_| Error::Constellation(format!("bad layer count in '{name}'")))?;
                let ratios = ratios
                    .split([',', ':'])
                    .map(|r| r.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::Constellation(format!("bad power ratio in '{name}'")))?;
                if ratios.len() != n {
                    return Err(Error::Constellation(format!(
                        "'{name}' declares {n} layers but lists {} ratios",
                        ratios.len()
                    )));
                }
                Constellation::scm(&ratios)
            }
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// ln |S|.
    pub fn log_cardinality(&self) -> f64 {
        (self.points.len() as f64).ln()
    }

    pub fn is_separable(&self) -> bool {
        self.axes.is_some()
    }
}

fn distinct_sorted(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    xs
}

fn product_axes(points: &[Complex64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let re = distinct_sorted(points.iter().map(|p| p.re).collect());
    let im = distinct_sorted(points.iter().map(|p| p.im).collect());
    (re.len() * im.len() == points.len()).then_some((re, im))
}

/// Message over the constellation points at one symbol position.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolPrior(pub Vec<f64>);

impl SymbolPrior {
    pub fn uniform(size: usize) -> Self {
        SymbolPrior(vec![1.0 / size as f64; size])
    }

    pub fn delta(size: usize, index: usize) -> Self {
        let mut p = vec![0.0; size];
        p[index] = 1.0;
        SymbolPrior(p)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    fn check(&self, size: usize) -> std::result::Result<(), String> {
        if self.0.len() != size {
            return Err(format!("expected {size} likelihoods, got {}", self.0.len()));
        }
        if self.0.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err("likelihoods must be finite and non-negative".into());
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("likelihoods sum to {sum}, not 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorStats {
    pub means: Vec<Complex64>,
    /// Block-averaged variance before clamping.
    pub raw_variance: f64,
    /// `raw_variance` clamped to `[VARIANCE_FLOOR, 1]`.
    pub variance: f64,
}

/// Per-position means and the common (block-averaged) variance.
pub fn prior_stats(priors: &[SymbolPrior], constellation: &Constellation) -> Result<PriorStats> {
    if priors.is_empty() {
        return Err(Error::Dimension("empty prior block".into()));
    }
    let pts = constellation.points();
    let mut means = Vec::with_capacity(priors.len());
    let mut total = 0.0;
    for (position, prior) in priors.iter().enumerate() {
        prior.check(pts.len()).map_err(|reason| Error::InvalidPrior { position, reason })?;
        let mean: Complex64 = prior.0.iter().zip(pts).map(|(a, s)| s * a).sum();
        total += prior.0.iter().zip(pts).map(|(a, s)| a * (s - mean).norm_sqr()).sum::<f64>();
        means.push(mean);
    }
    let raw_variance = total / priors.len() as f64;
    Ok(PriorStats { means, raw_variance, variance: raw_variance.clamp(VARIANCE_FLOOR, 1.0) })
}

/// Normalised `exp(-d2_k / u)`.
pub fn posterior_from_sq_distances(d2: &[f64], u: f64) -> Vec<f64> {
    let min = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = d2.iter().map(|d| (-(d - min) / u).exp()).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    w
}

/// Messages `β(k) ∝ exp(-|b - s_k|^2 / u)` for an AWGN observation `b`.
pub fn posterior_messages(b: Complex64, u: f64, constellation: &Constellation) -> Result<SymbolPrior> {
    if !(u > 0.0) {
        return Err(Error::domain(format!("extrinsic variance must be positive, got {u}")));
    }
    let d2: Vec<f64> = constellation.points().iter().map(|s| (b - s).norm_sqr()).collect();
    Ok(SymbolPrior(posterior_from_sq_distances(&d2, u)))
}

/// MMSE of a uniform symbol observed in complex AWGN with SNR `rho`.
pub fn gamma(constellation: &Constellation, rho: f64) -> Result<f64> {
    if rho.is_nan() || rho < 0.0 {
        return Err(Error::domain(format!("gamma needs rho >= 0, got {rho}")));
    }
    if rho == 0.0 {
        return Ok(1.0);
    }
    if rho.is_infinite() {
        return Ok(0.0);
    }
    match &constellation.axes {
        Some((re, im)) => {
            let s = (0.5 / rho).sqrt();
            Ok(axis_mmse(re, s)? + axis_mmse(im, s)?)
        }
        None => Ok(gamma_hermite(constellation.points(), rho)),
    }
}

const AXIS_SPAN: f64 = 12.0;

/// `E[(x - E[x | x + s z])^2]` for `x` uniform on `levels`, `z ~ N(0, 1)`.
fn axis_mmse(levels: &[f64], s: f64) -> Result<f64> {
    if levels.len() < 2 {
        return Ok(0.0);
    }
    let inv2s2 = 0.5 / (s * s);
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mids: Vec<f64> = levels.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let opts = QuadOptions { abs_tol: 1e-14, rel_tol: 1e-12, max_intervals: 4000 };
    let mut total = 0.0;
    for &x in levels {
        let mut pts = vec![-AXIS_SPAN];
        pts.extend(mids.iter().map(|m| (m - x) / s).filter(|z| z.abs() < AXIS_SPAN));
        pts.push(AXIS_SPAN);
        let mut logw = vec![0.0; levels.len()];
        let integrand = |z: f64| {
            let y = x + s * z;
            let mut max = f64::NEG_INFINITY;
            for (l, a) in logw.iter_mut().zip(levels) {
                *l = -(y - a) * (y - a) * inv2s2;
                max = max.max(*l);
            }
            let (mut num, mut den) = (0.0, 0.0);
            for (l, a) in logw.iter().zip(levels) {
                let e = (l - max).exp();
                num += e * a;
                den += e;
            }
            let err = x - num / den;
            norm * (-0.5 * z * z).exp() * err * err
        };
        total += integrate_breakpoints(integrand, &pts, opts)?.value;
    }
    Ok(total / levels.len() as f64)
}

const HERMITE_ORDER: usize = 128;

fn hermite_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_hermite(HERMITE_ORDER))
}

/// 2-D Gauss–Hermite evaluation for sets that are not an I/Q product.
fn gamma_hermite(points: &[Complex64], rho: f64) -> f64 {
    let (t, w) = hermite_rule();
    let scale = 1.0 / rho.sqrt();
    let mut logw = vec![0.0; points.len()];
    let mut total = 0.0;
    for &x in points {
        for (ti, wi) in t.iter().zip(w) {
            for (tj, wj) in t.iter().zip(w) {
                let y = x + Complex64::new(*ti, *tj) * scale;
                let mut max = f64::NEG_INFINITY;
                for (l, s) in logw.iter_mut().zip(points) {
                    *l = -(y - s).norm_sqr() * rho;
                    max = max.max(*l);
                }
                let mut num = Complex64::new(0.0, 0.0);
                let mut den = 0.0;
                for (l, s) in logw.iter().zip(points) {
                    let e = (l - max).exp();
                    num += s * e;
                    den += e;
                }
                total += wi * wj * (x - num / den).norm_sqr();
            }
        }
    }
    total / (std::f64::consts::PI * points.len() as f64)
}

pub const GRID_MIN: f64 = 1e-3;
pub const GRID_MAX: f64 = 1e3;
pub const GRID_POINTS: usize = 512;

#[derive(Debug, Clone)]
enum GammaKind {
    Gaussian,
    Table { constellation: Constellation, curve: MonotoneCubic, at_min: f64 },
}

/// Tabulated γ with monotone interpolation and a bisection inverse.
///
/// The table holds 512 log-spaced samples of γ and its slope on
/// `[1e-3, 1e3]`, joined by monotone cubic Hermite pieces in `ln ρ`. Below the grid the curve is linear towards `γ(0) = 1`; above it
/// γ is evaluated directly.
#[derive(Debug, Clone)]
pub struct GammaCurve {
    label: String,
    kind: GammaKind,
}

impl GammaCurve {
    /// γ(ρ) = 1/(1+ρ), the Gaussian-signalling limit.
    pub fn gaussian() -> Self {
        GammaCurve { label: "gaussian".into(), kind: GammaKind::Gaussian }
    }

    pub fn build(constellation: &Constellation) -> Result<Self> {
        let step = (GRID_MAX / GRID_MIN).ln() / (GRID_POINTS - 1) as f64;
        let ln_rho: Vec<f64> = (0..GRID_POINTS).map(|k| GRID_MIN.ln() + step * k as f64).collect();
        // Value and log-slope at each knot; the slope comes from a central
        // difference of the quadrature in ln ρ.
        const H: f64 = 1e-4;
        let sampled = par::try_map_range(GRID_POINTS, |k| -> Result<(f64, f64)> {
            let t = ln_rho[k];
            let g = gamma(constellation, t.exp())?;
            let up = gamma(constellation, (t + H).exp())?;
            let dn = gamma(constellation, (t - H).exp())?;
            Ok((g, (up - dn) / (2.0 * H)))
        })?;
        let mut values = Vec::with_capacity(GRID_POINTS);
        let mut slopes = Vec::with_capacity(GRID_POINTS);
        let mut running = 1.0f64;
        for (g, s) in sampled {
            running = running.min(g.clamp(0.0, 1.0));
            values.push(running);
            slopes.push(s.min(0.0));
        }
        let at_min = values[0];
        Ok(GammaCurve {
            label: constellation.label().to_string(),
            kind: GammaKind::Table {
                constellation: constellation.clone(),
                curve: MonotoneCubic::with_slopes(ln_rho, values, slopes),
                at_min,
            },
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn constellation(&self) -> Option<&Constellation> {
        match &self.kind {
            GammaKind::Gaussian => None,
            GammaKind::Table { constellation, .. } => Some(constellation),
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.kind, GammaKind::Gaussian)
    }

    pub fn value(&self, rho: f64) -> f64 {
        if !(rho > 0.0) {
            return 1.0;
        }
        if rho.is_infinite() {
            return 0.0;
        }
        match &self.kind {
            GammaKind::Gaussian => 1.0 / (1.0 + rho),
            GammaKind::Table { constellation, curve, at_min } => {
                if rho < GRID_MIN {
                    1.0 + (at_min - 1.0) * rho / GRID_MIN
                } else if rho <= GRID_MAX {
                    curve.eval(rho.ln())
                } else {
                    gamma(constellation, rho).unwrap_or(0.0)
                }
            }
        }
    }

    /// dγ/dρ.
    pub fn derivative(&self, rho: f64) -> f64 {
        let rho = rho.max(0.0);
        if rho.is_infinite() {
            return 0.0;
        }
        match &self.kind {
            GammaKind::Gaussian => -1.0 / ((1.0 + rho) * (1.0 + rho)),
            GammaKind::Table { curve, at_min, .. } => {
                if rho < GRID_MIN {
                    (at_min - 1.0) / GRID_MIN
                } else if rho <= GRID_MAX {
                    curve.derivative(rho.ln()) / rho
                } else {
                    let h = 1e-3 * rho;
                    (self.value(rho + h) - self.value(rho - h)) / (2.0 * h)
                }
            }
        }
    }

    /// ρ with γ(ρ) = v, by bisection.
    pub fn inverse(&self, v: f64) -> Result<f64> {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::domain(format!("gamma inverse needs v in (0, 1], got {v}")));
        }
        if v == 1.0 {
            return Ok(0.0);
        }
        if let GammaKind::Gaussian = self.kind {
            return Ok(1.0 / v - 1.0);
        }
        let mut hi = 1.0;
        while self.value(hi) > v {
            hi *= 2.0;
            if hi > 1e12 {
                return Ok(hi);
            }
        }
        let mut lo = 0.0;
        for _ in 0..300 {
            let mid = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * hi };
            let g = self.value(mid);
            if (g - v).abs() <= 1e-14 {
                return Ok(mid);
            }
            if g > v {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `(ρ, γ)` pairs: ρ = 0 followed by the tabulation grid.
    pub fn samples(&self) -> Vec<(f64, f64)> {
        let step = (GRID_MAX / GRID_MIN).ln() / (GRID_POINTS - 1) as f64;
        std::iter::once((0.0, 1.0))
            .chain((0..GRID_POINTS).map(|k| {
                let rho = (GRID_MIN.ln() + step * k as f64).exp();
                (rho, self.value(rho))
            }))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn named_sets_are_valid() {
        for name in ["bpsk", "qpsk", "qam16", "scm:3:16,4,1", "scm:2:3:1"] {
            let c = Constellation::parse(name).unwrap();
            assert!(c.is_separable(), "{name}");
        }
        assert!(Constellation::parse("scm:2:1,1").is_err());
        assert!(Constellation::parse("scm:3:1,2").is_err());
        assert!(Constellation::parse("8psk").is_err());
    }

    #[test]
    fn qam16_levels() {
        let c = Constellation::qam16();
        let mut re: Vec<f64> = c.points().iter().map(|p| p.re * 10f64.sqrt()).collect();
        re.sort_by(f64::total_cmp);
        re.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        let want = [-3.0, -1.0, 1.0, 3.0];
        assert_eq!(re.len(), 4);
        for (a, b) in re.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_sets() {
        let p = |re, im| Complex64::new(re, im);
        assert!(Constellation::new("one", vec![p(1.0, 0.0)]).is_err());
        assert!(Constellation::new("biased", vec![p(1.0, 0.0), p(0.0, 1.0)]).is_err());
        assert!(Constellation::new("weak", vec![p(0.5, 0.0), p(-0.5, 0.0)]).is_err());
    }

    #[test]
    fn uniform_and_delta_priors() {
        let c = Constellation::qpsk();
        let s = prior_stats(&vec![SymbolPrior::uniform(4); 8], &c).unwrap();
        assert!(s.means.iter().all(|m| m.norm() < 1e-15));
        assert!((s.variance - 1.0).abs() < 1e-15);

        let s = prior_stats(&[SymbolPrior::delta(4, 0), SymbolPrior::delta(4, 2)], &c).unwrap();
        assert_eq!(s.means[0], c.points()[0]);
        assert_eq!(s.means[1], c.points()[2]);
        assert_eq!(s.raw_variance, 0.0);
        assert_eq!(s.variance, VARIANCE_FLOOR);
    }

    #[test]
    fn unnormalised_prior_is_rejected() {
        let c = Constellation::qpsk();
        let bad = vec![SymbolPrior::uniform(4), SymbolPrior(vec![0.5, 0.5, 0.5, 0.0])];
        match prior_stats(&bad, &c) {
            Err(Error::InvalidPrior { position, .. }) => assert_eq!(position, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn posterior_special_cases() {
        let c = Constellation::qpsk();
        let b = posterior_messages(Complex64::new(0.0, 0.0), 0.7, &c).unwrap();
        assert!(b.0.iter().all(|p| (p - 0.25).abs() < 1e-15));
        let b = posterior_messages(c.points()[1], 1e-6, &c).unwrap();
        assert!((b.0[1] - 1.0).abs() < 1e-12);
        assert!(posterior_messages(c.points()[1], 0.0, &c).is_err());
    }

    #[test]
    fn posterior_matches_kernel() {
        let c = Constellation::qpsk();
        let b = Complex64::new(0.3, 0.1);
        let got = posterior_messages(b, 0.5, &c).unwrap();
        let raw: Vec<f64> = c.points().iter().map(|s| (-(b - s).norm_sqr() / 0.5).exp()).collect();
        let z: f64 = raw.iter().sum();
        for (g, r) in got.0.iter().zip(&raw) {
            assert!((g - r / z).abs() < 1e-15);
        }
    }

    #[test]
    fn gamma_endpoints_and_domain() {
        for c in [Constellation::bpsk(), Constellation::qpsk(), Constellation::qam16()] {
            assert_eq!(gamma(&c, 0.0).unwrap(), 1.0);
            assert_eq!(gamma(&c, f64::INFINITY).unwrap(), 0.0);
            assert!(gamma(&c, -1.0).is_err());
        }
    }

    #[test]
    fn qpsk_gamma_is_bpsk_gamma_at_half_snr() {
        // QPSK is two BPSK axes each carrying half the power.
        let b = Constellation::bpsk();
        let q = Constellation::qpsk();
        for rho in [0.1, 1.0, 4.0, 20.0] {
            let gb = gamma(&b, rho / 2.0).unwrap();
            let gq = gamma(&q, rho).unwrap();
            assert!((gq - gb).abs() < 1e-10, "rho {rho}: {gq} vs {gb}");
        }
    }

    #[test]
    fn hermite_path_agrees_with_separable_path() {
        let c = Constellation::qpsk();
        for rho in [0.2, 1.0, 3.0] {
            let sep = gamma(&c, rho).unwrap();
            let gh = gamma_hermite(c.points(), rho);
            assert!((sep - gh).abs() < 1e-7, "rho {rho}: {sep} vs {gh}");
        }
    }

    #[test]
    fn curve_inverse_round_trips() {
        let c = Constellation::qpsk();
        let curve = GammaCurve::build(&c).unwrap();
        assert_eq!(curve.inverse(1.0).unwrap(), 0.0);
        let v = gamma(&c, 5.0).unwrap();
        let r = curve.inverse(v).unwrap();
        assert!((r - 5.0).abs() < 1e-6, "{r} {} {v}", curve.value(5.0));
        assert!(curve.inverse(0.0).is_err());
        assert!(curve.inverse(1.5).is_err());

        let q16 = GammaCurve::build(&Constellation::qam16()).unwrap();
        let r = q16.inverse(0.5).unwrap();
        assert!((q16.value(r) - 0.5).abs() < 1e-10);
        for k in 0..=99 {
            let v = 0.01 + 0.99 * k as f64 / 99.0;
            let r = q16.inverse(v).unwrap();
            assert!((q16.value(r) - v).abs() < 1e-6);
        }
    }

    #[test]
    fn curve_tracks_direct_quadrature() {
        let c = Constellation::qam16();
        let curve = GammaCurve::build(&c).unwrap();
        for rho in [2e-3, 0.05, 0.7, 3.3, 12.0, 47.0, 150.0, 900.0] {
            let direct = gamma(&c, rho).unwrap();
            assert!((curve.value(rho) - direct).abs() < 1e-6, "rho {rho}");
        }
    }

    #[test]
    fn gaussian_curve() {
        let g = GammaCurve::gaussian();
        assert!((g.value(3.0) - 0.25).abs() < 1e-15);
        assert!((g.inverse(0.25).unwrap() - 3.0).abs() < 1e-12);
        assert!((g.derivative(1.0) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn gamma_is_decreasing_and_convex() {
        for c in [Constellation::qpsk(), Constellation::qam16()] {
            let h = 0.1;
            let g: Vec<f64> = (0..200).map(|k| gamma(&c, h * k as f64).unwrap()).collect();
            for w in g.windows(3) {
                assert!(w[1] < w[0]);
                assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn posterior_is_normalised_and_shift_invariant(
            d2 in proptest::collection::vec(0.0f64..50.0, 2..16),
            u in 0.01f64..10.0,
            shift in -20.0f64..20.0,
        ) {
            let a = posterior_from_sq_distances(&d2, u);
            let shifted: Vec<f64> = d2.iter().map(|d| d + shift).collect();
            let b = posterior_from_sq_distances(&shifted, u);
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
