//! The superposition-coded-modulation ladder that realises a target decoder
//! curve with Gaussian layers and successive decoding.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_breakpoints, QuadOptions};
use crate::transfer::{Curve, FnCurve};

/// Grid sizes used by the differentiability check.
const COARSE: usize = 4096;
const FINE: usize = 8192;

/// Layer powers and rates for `n` layers over `[0, rho_max]`.
#[derive(Debug, Clone)]
pub struct Ladder {
    pub rho_max: f64,
    /// `r_i = i rho_max / n`, `i = 0..=n+1`.
    pub r: Vec<f64>,
    /// `p_i = ψ(r_i)`, `i = 0..=n+1`.
    pub p: Vec<f64>,
    /// `Δp_i = p_{i-1} - p_i` for layers `i = 1..=n` (index `i - 1`).
    pub dp: Vec<f64>,
    /// `ln(1 + Δp_i / (p_{i+1} + 1/r_i))`, nats.
    pub rates: Vec<f64>,
    /// `Δp_i / (p_{i+1} + 1/r_i)`, nats.
    pub linear_rates: Vec<f64>,
}

impl Ladder {
    pub fn layers(&self) -> usize {
        self.dp.len()
    }

    /// Sum of layer rates, bits.
    pub fn total_rate(&self) -> f64 {
        self.rates.iter().sum::<f64>() / LN_2
    }

    /// Sum of linearised layer rates, bits.
    pub fn total_linear_rate(&self) -> f64 {
        self.linear_rates.iter().sum::<f64>() / LN_2
    }
}

/// Rejects ψ with jumps on `[0, rho_max]`: the largest step between grid
/// neighbours must roughly halve when the grid is refined.
pub fn check_differentiable(psi: &dyn Curve, rho_max: f64) -> Result<()> {
    let jump = |points: usize| -> (f64, f64) {
        let h = rho_max / points as f64;
        let mut worst = (0.0, 0.0);
        let mut prev = psi.eval(0.0);
        for k in 1..=points {
            let cur = psi.eval(h * k as f64);
            let j = (cur - prev).abs();
            if j > worst.0 {
                worst = (j, h * (k as f64 - 0.5));
            }
            prev = cur;
        }
        worst
    };
    let (coarse, _) = jump(COARSE);
    let (fine, at) = jump(FINE);
    if fine > 1e-9 && fine > 0.75 * coarse {
        return Err(Error::NotDifferentiable { at, jump: fine });
    }
    Ok(())
}

fn check_monotone(psi: &dyn Curve, rho_max: f64) -> Result<()> {
    let h = rho_max / FINE as f64;
    let mut prev = psi.eval(0.0);
    for k in 1..=FINE + 1 {
        let cur = psi.eval(h * k as f64);
        if cur > prev + 1e-12 {
            return Err(Error::NonMonotone { lo: h * (k - 1) as f64, hi: h * k as f64 });
        }
        prev = cur;
    }
    Ok(())
}

/// Builds the `n`-layer ladder for target `psi` on `[0, rho_max]`, with
/// `p_{n+1} = ψ(rho_max + Δr)`.
pub fn build_ladder(psi: &dyn Curve, n: usize, rho_max: f64) -> Result<Ladder> {
    if n == 0 {
        return Err(Error::config("the ladder needs at least one layer"));
    }
    if !(rho_max > 0.0 && rho_max.is_finite()) {
        return Err(Error::domain(format!("rho_max must be positive, got {rho_max}")));
    }
    check_monotone(psi, rho_max)?;
    check_differentiable(psi, rho_max)?;
    let tail = rho_max * psi.eval(rho_max);
    if tail >= 0.01 {
        log::warn!("rho_max * psi(rho_max) = {tail:.3e}; the truncated ladder misses part of the rate");
    }
    let dr = rho_max / n as f64;
    let r: Vec<f64> = (0..=n + 1).map(|i| if i == n { rho_max } else { dr * i as f64 }).collect();
    let p: Vec<f64> = r.iter().map(|x| psi.eval(*x)).collect();
    let dp: Vec<f64> = (1..=n).map(|i| (p[i - 1] - p[i]).max(0.0)).collect();
    let linear_rates: Vec<f64> = (1..=n).map(|i| dp[i - 1] / (p[i + 1] + 1.0 / r[i])).collect();
    let rates = linear_rates.iter().map(|x| x.ln_1p()).collect();
    Ok(Ladder { rho_max, r, p, dp, rates, linear_rates })
}

/// Staircase decoder curve of a ladder: `p_0` at 0, `p_i` on
/// `(r_{i-1}, r_i]`, and 0 beyond `rho_max`.
#[derive(Debug, Clone)]
pub struct Staircase {
    r: Vec<f64>,
    p: Vec<f64>,
}

pub fn ladder_psi(ladder: &Ladder) -> Staircase {
    let n = ladder.layers();
    Staircase { r: ladder.r[..=n].to_vec(), p: ladder.p[..=n].to_vec() }
}

impl Curve for Staircase {
    fn eval(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return self.p[0];
        }
        let n = self.r.len() - 1;
        if rho > self.r[n] {
            return 0.0;
        }
        let i = self.r.partition_point(|&x| x < rho);
        self.p[i.max(1)]
    }
    fn kinks(&self) -> Vec<f64> {
        self.r.clone()
    }
    fn support_end(&self) -> Option<f64> {
        self.r.last().copied()
    }
}

/// Length of the prefix of layers decodable one after another at input SNR
/// `rho`.
pub fn check_successive_decodable(ladder: &Ladder, rho: f64) -> usize {
    if !(rho > 0.0) {
        return 0;
    }
    let inv = 1.0 / rho;
    for k in 1..=ladder.layers() {
        let achievable = (ladder.dp[k - 1] / (ladder.p[k + 1] + inv)).ln_1p();
        let need = ladder.rates[k - 1];
        if achievable < need * (1.0 - 1e-12) {
            return k - 1;
        }
    }
    ladder.layers()
}

/// The `n → ∞` limit of the ladder rate on `[0, rho_max]`, bits:
/// `∫_0^{rho_max} ψ/(1 + ρψ) dρ - ln(1 + rho_max ψ(rho_max))`.
pub fn limit_rate(psi: &dyn Curve, rho_max: f64) -> Result<f64> {
    Ok((truncated_area(psi, rho_max)? - (rho_max * psi.eval(rho_max)).ln_1p()) / LN_2)
}

/// `∫_0^{rho_max} (ψ^{-1} + ρ)^{-1} dρ`, bits.
pub fn truncated_rate(psi: &dyn Curve, rho_max: f64) -> Result<f64> {
    Ok(truncated_area(psi, rho_max)? / LN_2)
}

fn truncated_area(psi: &dyn Curve, rho_max: f64) -> Result<f64> {
    let mut pts = vec![0.0];
    let mut kinks: Vec<f64> = psi.kinks().into_iter().filter(|k| *k > 0.0 && *k < rho_max).collect();
    kinks.sort_by(f64::total_cmp);
    pts.extend(kinks);
    pts.push(rho_max);
    let f = |rho: f64| {
        let p = psi.eval(rho);
        if p > 0.0 {
            p / (1.0 + rho * p)
        } else {
            0.0
        }
    };
    Ok(integrate_breakpoints(f, &pts, QuadOptions { abs_tol: 1e-11, rel_tol: 1e-12, max_intervals: 20_000 })?.value)
}

/// Gaussian mollification `E ψ(ρ + width Z)` (ψ held at ψ(0) for negative
/// arguments), for turning step-shaped curves into admissible targets.
pub fn smooth<'a>(psi: &'a dyn Curve, width: f64) -> FnCurve<impl Fn(f64) -> f64 + Sync + 'a> {
    const REACH: f64 = 9.0;
    let kinks = psi.kinks();
    let density = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    FnCurve::new(move |rho: f64| {
        let mut pts = vec![-REACH, REACH];
        for k in std::iter::once(0.0).chain(kinks.iter().copied()) {
            let z = (k - rho) / width;
            if z.abs() < REACH {
                pts.push(z);
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let f = |z: f64| density * (-0.5 * z * z).exp() * psi.eval((rho + width * z).max(0.0));
        integrate_breakpoints(f, &pts, QuadOptions { abs_tol: 1e-13, rel_tol: 1e-12, max_intervals: 4000 })
            .map(|i| i.value)
            .unwrap_or(f64::NAN)
    })
}
