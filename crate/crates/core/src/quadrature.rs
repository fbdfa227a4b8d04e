//! Adaptive Gauss–Kronrod (7/15) integration and Gauss–Hermite rules.
//!
//! The adaptive driver always bisects the interval with the largest error
//! estimate, so for a given integrand and tolerance the final partition is
//! deterministic. Interval contributions are summed left to right with
//! Neumaier compensation.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 1e-10, rel_tol: 1e-10, max_intervals: 4000 }
    }
}

impl QuadOptions {
    pub fn abs(abs_tol: f64) -> Self {
        QuadOptions { abs_tol, rel_tol: 0.0, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct VecIntegral {
    pub value: Vec<f64>,
    /// Largest per-component error estimate.
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    c: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }
    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
    frozen: bool,
}

/// One 15-point Kronrod panel on `[a, b]` for a `dim`-valued integrand.
fn kronrod_panel<F>(f: &mut F, a: f64, b: f64, dim: usize, scratch: &mut Scratch) -> (Vec<f64>, f64)
where
    F: FnMut(f64, &mut [f64]),
{
    let centr = 0.5 * (a + b);
    let hlgth = 0.5 * (b - a);
    let dhlgth = hlgth.abs();

    // 15 evaluations: index 7 is the centre, j and 14-j mirror.
    for (k, slot) in scratch.fv.chunks_mut(dim).enumerate() {
        let x = if k < 7 {
            centr - hlgth * XGK[k]
        } else if k == 7 {
            centr
        } else {
            centr + hlgth * XGK[14 - k]
        };
        f(x, slot);
    }

    let mut out = vec![0.0; dim];
    let mut worst: f64 = 0.0;
    for d in 0..dim {
        let fv = |k: usize| scratch.fv[k * dim + d];
        let fc = fv(7);
        let mut resg = fc * WG[3];
        let mut resk = fc * WGK[7];
        let mut resabs = resk.abs();
        for j in 0..7 {
            let (f1, f2) = (fv(j), fv(14 - j));
            resk += WGK[j] * (f1 + f2);
            resabs += WGK[j] * (f1.abs() + f2.abs());
            if j % 2 == 1 {
                resg += WG[j / 2] * (f1 + f2);
            }
        }
        let reskh = resk * 0.5;
        let mut resasc = WGK[7] * (fc - reskh).abs();
        for j in 0..7 {
            resasc += WGK[j] * ((fv(j) - reskh).abs() + (fv(14 - j) - reskh).abs());
        }
        let result = resk * hlgth;
        resabs *= dhlgth;
        resasc *= dhlgth;
        let mut abserr = ((resk - resg) * hlgth).abs();
        if resasc != 0.0 && abserr != 0.0 {
            abserr = resasc * (200.0 * abserr / resasc).powf(1.5).min(1.0);
        }
        if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            abserr = abserr.max(50.0 * f64::EPSILON * resabs);
        }
        if !result.is_finite() {
            abserr = f64::INFINITY;
        }
        out[d] = result;
        worst = worst.max(abserr);
    }
    (out, worst)
}

struct Scratch {
    fv: Vec<f64>,
}

/// Adaptive integration of a vector-valued integrand over `[a, b]`.
///
/// The integrand writes its `dim` components into the provided slice. The
/// stopping rule is `error <= max(abs_tol, rel_tol * max_k |I_k|)` where the
/// error is the largest per-component estimate.
pub fn integrate_vec<F>(mut f: F, dim: usize, a: f64, b: f64, opts: QuadOptions) -> Result<VecIntegral>
where
    F: FnMut(f64, &mut [f64]),
{
    if a == b {
        return Ok(VecIntegral { value: vec![0.0; dim], error: 0.0, evaluations: 0 });
    }
    let mut scratch = Scratch { fv: vec![0.0; 15 * dim] };
    let (value, error) = kronrod_panel(&mut f, a, b, dim, &mut scratch);
    let mut panels = vec![Panel { a, b, value, error, frozen: false }];
    let mut evaluations = 15;

    loop {
        let (total, err) = totals(&panels, dim);
        let scale = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = opts.abs_tol.max(opts.rel_tol * scale);
        if err <= tol {
            return Ok(VecIntegral { value: total, error: err, evaluations });
        }
        let worst = panels
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.frozen)
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i);
        let Some(i) = worst else {
            // Every remaining panel is at the resolution limit.
            if err.is_finite() {
                return Ok(VecIntegral { value: total, error: err, evaluations });
            }
            return Err(Error::Quadrature { value: total[0], error: err });
        };
        if panels.len() >= opts.max_intervals || !err.is_finite() && panels.len() > 64 {
            return Err(Error::Quadrature { value: total[0], error: err });
        }
        let p = &panels[i];
        let (pa, pb) = (p.a, p.b);
        let mid = 0.5 * (pa + pb);
        if !(mid > pa && mid < pb) || (pb - pa).abs() < 1e-13 * (pa.abs() + pb.abs()) {
            panels[i].frozen = true;
            continue;
        }
        let (lv, le) = kronrod_panel(&mut f, pa, mid, dim, &mut scratch);
        let (rv, re) = kronrod_panel(&mut f, mid, pb, dim, &mut scratch);
        evaluations += 30;
        panels[i] = Panel { a: pa, b: mid, value: lv, error: le, frozen: false };
        panels.push(Panel { a: mid, b: pb, value: rv, error: re, frozen: false });
    }
}

fn totals(panels: &[Panel], dim: usize) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..panels.len()).collect();
    order.sort_by(|&x, &y| panels[x].a.total_cmp(&panels[y].a));
    let mut sums = vec![Neumaier::default(); dim];
    let mut err = Neumaier::default();
    for &i in &order {
        for (s, v) in sums.iter_mut().zip(&panels[i].value) {
            s.add(*v);
        }
        err.add(panels[i].error);
    }
    (sums.iter().map(Neumaier::value).collect(), err.value())
}

/// Adaptive integration of a scalar integrand over `[a, b]`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<Integral>
where
    F: FnMut(f64) -> f64,
{
    let r = integrate_vec(|x, out| out[0] = f(x), 1, a, b, opts)?;
    Ok(Integral { value: r.value[0], error: r.error, evaluations: r.evaluations })
}

/// Integrates over consecutive segments `[p0, p1], [p1, p2], ...`.
///
/// Points must be sorted; duplicates are skipped. The absolute tolerance is
/// shared evenly between segments.
pub fn integrate_breakpoints<F>(mut f: F, points: &[f64], opts: QuadOptions) -> Result<Integral>
where
    F: FnMut(f64) -> f64,
{
    let segments: Vec<(f64, f64)> = points
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| (w[0], w[1]))
        .collect();
    let per = QuadOptions { abs_tol: opts.abs_tol / segments.len().max(1) as f64, ..opts };
    let mut sum = Neumaier::default();
    let mut error = 0.0;
    let mut evaluations = 0;
    for (a, b) in segments {
        let r = integrate(&mut f, a, b, per)?;
        sum.add(r.value);
        error += r.error;
        evaluations += r.evaluations;
    }
    Ok(Integral { value: sum.value(), error, evaluations })
}

/// Integral over `[a, inf)` through the map `x = a + t / (1 - t)`.
pub fn integrate_to_infinity<F>(mut f: F, a: f64, opts: QuadOptions) -> Result<Integral>
where
    F: FnMut(f64) -> f64,
{
    integrate(
        |t| {
            let s = 1.0 - t;
            let x = a + t / s;
            let v = f(x) / (s * s);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        opts,
    )
}

/// Gauss–Hermite nodes and weights for the weight `exp(-x^2)` (Golub–Welsch).
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "Gauss-Hermite order must be positive");
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let off = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = off;
        jacobi[(k, k - 1)] = off;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    // Symmetrise to remove eigen-solver asymmetry in the last bits.
    let n = pairs.len();
    for k in 0..n / 2 {
        let x = 0.5 * (pairs[n - 1 - k].0 - pairs[k].0);
        let w = 0.5 * (pairs[k].1 + pairs[n - 1 - k].1);
        pairs[k] = (-x, w);
        pairs[n - 1 - k] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    pairs.into_iter().unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_smooth_integrals() {
        let r = integrate(|x| x * x, 0.0, 3.0, QuadOptions::default()).unwrap();
        assert!((r.value - 9.0).abs() < 1e-13);
        let r = integrate(f64::sin, 0.0, std::f64::consts::PI, QuadOptions::abs(1e-13)).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kink_is_resolved_adaptively() {
        let r = integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0, QuadOptions::abs(1e-12)).unwrap();
        assert!((r.value - (0.045 + 0.245)).abs() < 1e-11);
    }

    #[test]
    fn semi_infinite_exponential() {
        let r = integrate_to_infinity(|x| (-x).exp(), 0.0, QuadOptions::abs(1e-12)).unwrap();
        assert!((r.value - 1.0).abs() < 1e-11);
        let r = integrate_to_infinity(|x| 1.0 / (1.0 + x * x), 0.0, QuadOptions::abs(1e-11)).unwrap();
        assert!((r.value - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
    }

    #[test]
    fn log_divergent_tail_is_reported() {
        let r = integrate_to_infinity(|x| 1.0 / (1.0 + x), 0.0, QuadOptions::abs(1e-10));
        assert!(r.is_err());
    }

    #[test]
    fn vector_integrand_shares_partition() {
        let r = integrate_vec(
            |x, out| {
                out[0] = x.exp();
                out[1] = x.cos();
            },
            2,
            0.0,
            1.0,
            QuadOptions::abs(1e-13),
        )
        .unwrap();
        assert!((r.value[0] - (1f64.exp() - 1.0)).abs() < 1e-12);
        assert!((r.value[1] - 1f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn hermite_rule_moments() {
        let (x, w) = gauss_hermite(40);
        let pi_sqrt = std::f64::consts::PI.sqrt();
        let m0: f64 = w.iter().sum();
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((m0 - pi_sqrt).abs() < 1e-12);
        assert!((m2 - pi_sqrt / 2.0).abs() < 1e-12);
        assert!((m4 - 3.0 * pi_sqrt / 4.0).abs() < 1e-12);
    }
}
