//! Precoders and power allocation.
//!
//! Full CSIT: `x̃ = V W^{1/2} F x` over the extended (block-diagonal) channel,
//! with W from water-filling, flat allocation, or the discrete-constellation
//! rate objective. Partial CSIT: `x̃ = P̃ Π̃ F̃ x` with `Q = P P^H` optimised
//! over channel samples.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::Exp1;

use crate::channel::{extended_gain_sequence, ExtendedGains, Svd};
use crate::constellation::GammaCurve;
use crate::error::{Error, Result};
use crate::linalg::{frobenius, from_eig, hermitian_eig, trace_re, CMat, Dft, ZERO};
use crate::rng::{stream_rng, streams};
use crate::transfer::{rate_constellation, rate_constellation_with_gradient, Phi};

/// Per-mode powers `w_n` with budget `N^{-1} sum w_n <= P`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub w: Vec<f64>,
    pub budget: f64,
}

impl PowerAllocation {
    pub fn mean_power(&self) -> f64 {
        self.w.iter().sum::<f64>() / self.w.len() as f64
    }
}

fn check_power(p: f64) -> Result<()> {
    if p > 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("power budget must be positive, got {p}")))
    }
}

/// Water-filling `w_n = max(0, μ - sigma2/λ_n²)` with `N^{-1} sum w_n = P`.
///
/// The water level is found exactly from the active set, so modes with
/// equal gains receive identical powers.
pub fn waterfill(lambda2: &[f64], sigma2: f64, p: f64) -> Result<PowerAllocation> {
    check_power(p)?;
    if !(sigma2 > 0.0) {
        return Err(Error::domain(format!("noise power must be positive, got {sigma2}")));
    }
    if lambda2.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::domain("squared gains must be finite and non-negative"));
    }
    let mut floors: Vec<f64> = lambda2.iter().filter(|l| **l > 0.0).map(|l| sigma2 / l).collect();
    if floors.is_empty() {
        return Err(Error::NoUsableEigenmode);
    }
    floors.sort_by(f64::total_cmp);
    let total = p * lambda2.len() as f64;
    let mut level = 0.0;
    let mut acc = 0.0;
    for (k, f) in floors.iter().enumerate() {
        acc += f;
        let mu = (total + acc) / (k + 1) as f64;
        if mu <= *f {
            break;
        }
        level = mu;
    }
    let w = lambda2.iter().map(|l| if *l > 0.0 { (level - sigma2 / l).max(0.0) } else { 0.0 }).collect();
    Ok(PowerAllocation { w, budget: p })
}

/// `w_n = P` for every mode.
pub fn flat_allocation(n: usize, p: f64) -> PowerAllocation {
    PowerAllocation { w: vec![p; n], budget: p }
}

/// Euclidean projection onto `{x >= 0, sum x <= total}`.
pub fn project_capped_simplex(x: &mut [f64], total: f64) {
    let clipped: f64 = x.iter().map(|v| v.max(0.0)).sum();
    if clipped <= total {
        x.iter_mut().for_each(|v| *v = v.max(0.0));
        return;
    }
    let mut sorted: Vec<f64> = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (k, s) in sorted.iter().enumerate() {
        acc += s;
        let t = (acc - total) / (k + 1) as f64;
        if s - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    x.iter_mut().for_each(|v| *v = (*v - tau).max(0.0));
}

#[derive(Debug, Clone, Copy)]
pub struct AscentOptions {
    pub max_iterations: usize,
    /// Stop when the projected-gradient step (unit step size) falls below this.
    pub tolerance: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        AscentOptions { max_iterations: 500, tolerance: 1e-9 }
    }
}

struct Ascent {
    x: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
}

/// Projected gradient ascent with Armijo backtracking on a concave objective.
fn projected_ascent(
    x0: Vec<f64>,
    objective: &dyn Fn(&[f64]) -> Result<f64>,
    gradient: &dyn Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
    project: &dyn Fn(&mut [f64]),
    opts: AscentOptions,
) -> Result<Ascent> {
    let mut x = x0;
    project(&mut x);
    let (mut value, mut grad) = gradient(&x)?;
    let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-3);
    let gmax = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
    let mut step = if gmax > 0.0 { scale / gmax } else { 1.0 };
    for it in 0..opts.max_iterations {
        let mut unit: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a + g).collect();
        project(&mut unit);
        let stationarity = unit.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if stationarity <= opts.tolerance {
            return Ok(Ascent { x, value, iterations: it, converged: true });
        }
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
            project(&mut cand);
            let lin: f64 = cand.iter().zip(&x).zip(&grad).map(|((c, a), g)| g * (c - a)).sum();
            let f = objective(&cand)?;
            if f >= value + 1e-4 * lin && lin >= 0.0 {
                accepted = Some(cand);
                break;
            }
            step *= 0.5;
        }
        let Some(next) = accepted else {
            return Ok(Ascent { x, value, iterations: it, converged: true });
        };
        x = next;
        let (v, g) = gradient(&x)?;
        value = v;
        grad = g;
        step *= 2.0;
    }
    Ok(Ascent { x, value, iterations: opts.max_iterations, converged: false })
}

#[derive(Debug, Clone, Copy)]
pub struct DiscreteOptions {
    pub restarts: usize,
    pub seed: u64,
    pub ascent: AscentOptions,
}

impl Default for DiscreteOptions {
    fn default() -> Self {
        DiscreteOptions { restarts: 20, seed: 0, ascent: AscentOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteOptimum {
    pub allocation: PowerAllocation,
    /// Objective value in bits per antenna per channel use.
    pub rate: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final objective of every start (water-filling start first).
    pub restart_rates: Vec<f64>,
}

/// Discrete-constellation rate of a power allocation over modes with squared
/// gains `lambda2`.
pub fn discrete_rate(lambda2: &[f64], w: &[f64], sigma2: f64, gamma: &GammaCurve) -> Result<f64> {
    let snr = lambda2.iter().zip(w).map(|(l, w)| l * w.max(0.0) / sigma2).collect();
    rate_constellation(&Phi::from_snr(snr)?, gamma)
}

/// Maximises the discrete-constellation rate over `{w >= 0, N^{-1} sum w <= P}`.
///
/// Starts from water-filling and from `restarts` random feasible points;
/// the best end point is returned.
pub fn optimize_w_discrete(
    lambda2: &[f64],
    sigma2: f64,
    p: f64,
    gamma: &GammaCurve,
    opts: DiscreteOptions,
) -> Result<DiscreteOptimum> {
    let wf = waterfill(lambda2, sigma2, p)?;
    let n = lambda2.len();
    let total = p * n as f64;
    let objective = |w: &[f64]| discrete_rate(lambda2, w, sigma2, gamma);
    let gradient = |w: &[f64]| -> Result<(f64, Vec<f64>)> {
        let snr = lambda2.iter().zip(w).map(|(l, w)| l * w.max(0.0) / sigma2).collect();
        let (value, da) = rate_constellation_with_gradient(&Phi::from_snr(snr)?, gamma)?;
        Ok((value, da.iter().zip(lambda2).map(|(g, l)| g * l / sigma2).collect()))
    };
    let project = |w: &mut [f64]| project_capped_simplex(w, total);

    let mut rng = stream_rng(opts.seed, streams::RESTARTS);
    let mut starts = vec![wf.w.clone()];
    for _ in 0..opts.restarts {
        let e: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let s: f64 = e.iter().sum();
        starts.push(e.iter().map(|x| total * x / s).collect());
    }
    let runs = crate::par::map_slice(&starts, |x0| projected_ascent(x0.clone(), &objective, &gradient, &project, opts.ascent));
    let mut best: Option<Ascent> = None;
    let mut restart_rates = Vec::with_capacity(runs.len());
    let mut iterations = 0;
    let mut converged = true;
    for run in runs {
        let run = run?;
        restart_rates.push(run.value);
        iterations += run.iterations;
        converged &= run.converged;
        if best.as_ref().is_none_or(|b| run.value > b.value) {
            best = Some(run);
        }
    }
    let best = best.expect("at least the water-filling start");
    if !converged {
        log::warn!("discrete power optimisation hit the iteration cap on at least one start");
    }
    Ok(DiscreteOptimum {
        allocation: PowerAllocation { w: best.x, budget: p },
        rate: best.value,
        iterations,
        converged,
        restart_rates,
    })
}

/// The full-CSIT precoder `x̃ = V W^{1/2} F x` over `J` symbols, for one or
/// more subcarriers with per-subcarrier SVDs.
#[derive(Debug, Clone)]
pub struct FullCsitPrecoder {
    n: usize,
    svds: Vec<Svd>,
    w: Vec<f64>,
    layout: ExtendedGains,
    d: Vec<f64>,
    dft: Dft,
}

/// Builds the precoder for `svds` (one per subcarrier) and powers `w`
/// (flattened `subcarrier * N + mode`). The mode ordering is drawn from
/// `rng`.
pub fn build_full_csit<R: Rng + ?Sized>(svds: &[Svd], allocation: &PowerAllocation, j: usize, rng: &mut R) -> Result<FullCsitPrecoder> {
    let n = svds.first().map(|s| s.v.nrows()).ok_or_else(|| Error::config("no subcarriers"))?;
    if svds.iter().any(|s| s.v.nrows() != n) {
        return Err(Error::Dimension("subcarriers disagree on the number of transmit antennas".into()));
    }
    if allocation.w.len() != svds.len() * n {
        return Err(Error::Dimension(format!(
            "{} powers for {} modes",
            allocation.w.len(),
            svds.len() * n
        )));
    }
    if j % n != 0 {
        return Err(Error::config(format!("block length {j} is not a multiple of N = {n}")));
    }
    let groups: Vec<Vec<f64>> = svds.iter().map(|s| s.gains.clone()).collect();
    let layout = extended_gain_sequence(&groups, j, rng)?;
    let d = layout.source.iter().map(|&b| groups[b / n][b % n] * allocation.w[b].max(0.0).sqrt()).collect();
    Ok(FullCsitPrecoder { n, svds: svds.to_vec(), w: allocation.w.clone(), layout, d, dft: Dft::new(j) })
}

impl FullCsitPrecoder {
    pub fn block_len(&self) -> usize {
        self.d.len()
    }

    pub fn antennas(&self) -> usize {
        self.n
    }

    pub fn subcarriers(&self) -> usize {
        self.svds.len()
    }

    /// Effective gains `d_k = λ √w` in detector order.
    pub fn effective_gains(&self) -> &[f64] {
        &self.d
    }

    pub fn layout(&self) -> &ExtendedGains {
        &self.layout
    }

    pub fn dft(&self) -> &Dft {
        &self.dft
    }

    /// Subcarrier seen by channel use `t`.
    pub fn subcarrier_of_use(&self, t: usize) -> usize {
        t % self.svds.len()
    }

    /// Antenna signals, `J` entries ordered as `use * N + antenna`.
    pub fn transmit(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut z = x.to_vec();
        self.dft.forward(&mut z);
        let mut modes = vec![ZERO; z.len()];
        for (k, zk) in z.iter().enumerate() {
            modes[self.layout.slot[k]] = zk * self.w[self.layout.source[k]].max(0.0).sqrt();
        }
        let n = self.n;
        let mut out = vec![ZERO; z.len()];
        for t in 0..z.len() / n {
            let v = &self.svds[self.subcarrier_of_use(t)].v;
            for a in 0..n {
                out[t * n + a] = (0..n).map(|m| v[(a, m)] * modes[t * n + m]).sum();
            }
        }
        out
    }

    /// Rotates received signals (`M` entries per channel use) into the mode
    /// domain, returning `J` entries in detector order. Modes without a
    /// receive dimension read zero.
    pub fn receive(&self, y: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let uses = self.d.len() / n;
        let m = y.len() / uses;
        let mut modes = vec![ZERO; self.d.len()];
        for t in 0..uses {
            let u = &self.svds[self.subcarrier_of_use(t)].u;
            for k in 0..u.ncols() {
                modes[t * n + k] = (0..m).map(|r| u[(r, k)].conj() * y[t * m + r]).sum();
            }
        }
        self.layout.slot.iter().map(|&s| modes[s]).collect()
    }
}

/// Permutation `Π̃`: entry `k` of block `q_i` (of length `L = J/N`) goes to
/// channel use `k`, antenna `(k + i) mod N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    n: usize,
    map: Vec<usize>,
}

pub fn build_permutation(j: usize, n: usize) -> Result<Permutation> {
    if n == 0 || j == 0 || j % (n * n) != 0 {
        return Err(Error::config(format!("block length {j} is not a multiple of N^2 = {}", n * n)));
    }
    let l = j / n;
    let map = (0..n).flat_map(|i| (0..l).map(move |k| k * n + (k + i) % n)).collect();
    Ok(Permutation { n, map })
}

impl Permutation {
    pub fn antennas(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// DFT block length `L = J / N`.
    pub fn block_len(&self) -> usize {
        self.map.len() / self.n
    }

    /// Transmit slot (`use * N + antenna`) of DFT output `i * L + k`.
    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }
}

/// Hermitian square root of a PSD matrix.
pub fn sqrt_psd(q: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eig(q);
    let roots: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    from_eig(&roots, &vecs)
}

/// Composite operator `A = H̃ P̃ Π̃ F̃` for partial CSIT.
#[derive(Debug, Clone)]
pub struct PartialCsitPrecoder {
    p: CMat,
    q: CMat,
    perm: Permutation,
    channels: Vec<CMat>,
    dft: Dft,
}

/// `channels` holds one `M x N` matrix per channel use (`J / N` of them).
/// Fails when `N^{-1} tr(P P^H)` exceeds `budget`.
pub fn build_partial_csit(p_matrix: &CMat, perm: &Permutation, channels: Vec<CMat>, budget: f64) -> Result<PartialCsitPrecoder> {
    let n = perm.antennas();
    if p_matrix.shape() != (n, n) {
        return Err(Error::Dimension(format!("P must be {n}x{n}")));
    }
    let l = perm.block_len();
    if channels.len() != l {
        return Err(Error::Dimension(format!("{} channel matrices for {l} channel uses", channels.len())));
    }
    let m = channels[0].nrows();
    if channels.iter().any(|h| h.shape() != (m, n)) {
        return Err(Error::Dimension("channel matrices must all be M x N".into()));
    }
    let q = p_matrix * p_matrix.adjoint();
    let power = trace_re(&q) / n as f64;
    if power > budget * (1.0 + 1e-9) {
        return Err(Error::config(format!("precoder power {power} exceeds the budget {budget}")));
    }
    Ok(PartialCsitPrecoder { p: p_matrix.clone(), q, perm: perm.clone(), channels, dft: Dft::new(l) })
}

impl PartialCsitPrecoder {
    pub fn block_len(&self) -> usize {
        self.perm.len()
    }

    pub fn rx(&self) -> usize {
        self.channels[0].nrows()
    }

    pub fn channels(&self) -> &[CMat] {
        &self.channels
    }

    pub fn covariance(&self) -> &CMat {
        &self.q
    }

    pub fn mean_power(&self) -> f64 {
        trace_re(&self.q) / self.perm.antennas() as f64
    }

    /// `x̃ = P̃ Π̃ F̃ x`, ordered `use * N + antenna`.
    pub fn transmit(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.perm.antennas();
        let l = self.perm.block_len();
        let mut q = x.to_vec();
        for block in q.chunks_mut(l) {
            self.dft.forward(block);
        }
        let mut s = vec![ZERO; q.len()];
        for (idx, &slot) in self.perm.as_slice().iter().enumerate() {
            s[slot] = q[idx];
        }
        let mut out = vec![ZERO; q.len()];
        for t in 0..l {
            for a in 0..n {
                out[t * n + a] = (0..n).map(|b| self.p[(a, b)] * s[t * n + b]).sum();
            }
        }
        out
    }

    /// `A x`: noiseless receive signals, `M` per channel use.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let xt = self.transmit(x);
        let n = self.perm.antennas();
        let m = self.rx();
        let mut y = vec![ZERO; self.channels.len() * m];
        for (t, h) in self.channels.iter().enumerate() {
            for r in 0..m {
                y[t * m + r] = (0..n).map(|a| h[(r, a)] * xt[t * n + a]).sum();
            }
        }
        y
    }

    /// `A^H y`.
    pub fn adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        let n = self.perm.antennas();
        let m = self.rx();
        let l = self.perm.block_len();
        let mut s = vec![ZERO; l * n];
        for (t, h) in self.channels.iter().enumerate() {
            for a in 0..n {
                let xa: Complex64 = (0..m).map(|r| h[(r, a)].conj() * y[t * m + r]).sum();
                s[t * n + a] = xa;
            }
        }
        let mut ps = vec![ZERO; l * n];
        for t in 0..l {
            for b in 0..n {
                ps[t * n + b] = (0..n).map(|a| self.p[(a, b)].conj() * s[t * n + a]).sum();
            }
        }
        let mut q: Vec<Complex64> = self.perm.as_slice().iter().map(|&slot| ps[slot]).collect();
        for block in q.chunks_mut(l) {
            self.dft.inverse(block);
        }
        q
    }
}

#[derive(Debug, Clone)]
pub struct CovarianceOptimum {
    pub q: CMat,
    /// Objective in bits per antenna per channel use.
    pub rate: f64,
    /// `||Q - Proj(Q + G)||_F` at the returned point.
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Projection onto `{Q = Q^H >= 0, tr Q <= total}`: eigenvalues projected
/// onto the capped simplex.
pub fn project_psd_trace(q: &CMat, total: f64) -> CMat {
    let (mut vals, vecs) = hermitian_eig(q);
    project_capped_simplex(&mut vals, total);
    from_eig(&vals, &vecs)
}

/// Real coordinates of a Hermitian matrix: diagonal, then (re, im) of the
/// strict upper triangle, scaled so the Euclidean inner product equals
/// `Re tr(A B)`.
fn herm_to_vec(q: &CMat) -> Vec<f64> {
    let n = q.nrows();
    let mut out = Vec::with_capacity(n * n);
    for k in 0..n {
        out.push(q[(k, k)].re);
    }
    let s = std::f64::consts::SQRT_2;
    for r in 0..n {
        for c in r + 1..n {
            out.push(s * q[(r, c)].re);
            out.push(s * q[(r, c)].im);
        }
    }
    out
}

fn vec_to_herm(x: &[f64], n: usize) -> CMat {
    let mut q = CMat::zeros(n, n);
    for k in 0..n {
        q[(k, k)] = Complex64::new(x[k], 0.0);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut idx = n;
    for r in 0..n {
        for c in r + 1..n {
            let z = Complex64::new(s * x[idx], s * x[idx + 1]);
            q[(r, c)] = z;
            q[(c, r)] = z.conj();
            idx += 2;
        }
    }
    q
}

fn check_samples(samples: &[CMat]) -> Result<usize> {
    let n = samples.first().ok_or(Error::TooFewSamples { need: 1, got: 0 })?.ncols();
    if samples.iter().any(|h| h.ncols() != n) {
        return Err(Error::Dimension("channel samples disagree on N".into()));
    }
    Ok(n)
}

/// Gradient-based ascent over Hermitian `Q` on the trace-constrained PSD set.
fn optimize_covariance(
    n: usize,
    p: f64,
    objective: &dyn Fn(&CMat) -> Result<f64>,
    gradient: &dyn Fn(&CMat) -> Result<(f64, CMat)>,
    opts: AscentOptions,
) -> Result<CovarianceOptimum> {
    let total = p * n as f64;
    let obj = |x: &[f64]| objective(&vec_to_herm(x, n));
    let grad = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (v, g) = gradient(&vec_to_herm(x, n))?;
        Ok((v, herm_to_vec(&g)))
    };
    let project = |x: &mut [f64]| {
        let q = project_psd_trace(&vec_to_herm(x, n), total);
        x.copy_from_slice(&herm_to_vec(&q));
    };
    let x0 = herm_to_vec(&(CMat::identity(n, n) * Complex64::new(p, 0.0)));
    let run = projected_ascent(x0, &obj, &grad, &project, opts)?;
    let q = vec_to_herm(&run.x, n);
    let (_, g) = gradient(&q)?;
    let kkt_residual = frobenius(&(&q - project_psd_trace(&(&q + g), total)));
    if !run.converged {
        log::warn!("covariance optimisation hit the iteration cap (KKT residual {kkt_residual:e})");
    }
    Ok(CovarianceOptimum {
        q,
        rate: run.value,
        kkt_residual,
        iterations: run.iterations,
        converged: run.converged,
    })
}

/// Maximises `N^{-1} E log2 det(I + H Q H^H / sigma2)` over
/// `N^{-1} tr Q <= P` using the supplied samples.
pub fn optimize_q(samples: &[CMat], sigma2: f64, p: f64, opts: AscentOptions) -> Result<CovarianceOptimum> {
    check_power(p)?;
    let n = check_samples(samples)?;
    let scale = 1.0 / (samples.len() as f64 * n as f64 * std::f64::consts::LN_2);
    let objective = |q: &CMat| crate::transfer::rate_partial_gaussian(samples, q, sigma2);
    let gradient = |q: &CMat| -> Result<(f64, CMat)> {
        let mut g = CMat::zeros(n, n);
        let mut value = 0.0;
        for h in samples {
            let m = h.nrows();
            let x = CMat::identity(m, m) + h * q * h.adjoint() / Complex64::new(sigma2, 0.0);
            let chol = x.clone().cholesky().ok_or_else(|| Error::domain("I + HQH^H/σ² is not positive definite"))?;
            value += chol.l().diagonal().iter().map(|d| 2.0 * d.re.ln()).sum::<f64>();
            g += h.adjoint() * chol.solve(h) / Complex64::new(sigma2, 0.0);
        }
        Ok((value * scale, g * Complex64::new(scale, 0.0)))
    };
    optimize_covariance(n, p, &objective, &gradient, opts)
}

/// Maximises the discrete-constellation rate with `φ` pooled over the
/// samples, over `N^{-1} tr Q <= P`.
pub fn optimize_q_discrete(samples: &[CMat], sigma2: f64, p: f64, gamma: &GammaCurve, opts: AscentOptions) -> Result<CovarianceOptimum> {
    check_power(p)?;
    let n = check_samples(samples)?;
    let objective = |q: &CMat| rate_constellation(&Phi::partial(samples, q, sigma2)?, gamma);
    let gradient = |q: &CMat| -> Result<(f64, CMat)> {
        let mut snr = Vec::with_capacity(samples.len() * n);
        let mut dirs = Vec::with_capacity(samples.len() * n);
        for h in samples {
            let (mu, e) = hermitian_eig(&(h * q * h.adjoint() / Complex64::new(sigma2, 0.0)));
            let r = n.min(h.nrows());
            for k in 0..n {
                if k < r {
                    snr.push(mu[k].max(0.0));
                    dirs.push(Some(h.adjoint() * e.column(k)));
                } else {
                    snr.push(0.0);
                    dirs.push(None);
                }
            }
        }
        let (value, da) = rate_constellation_with_gradient(&Phi::from_snr(snr)?, gamma)?;
        let mut g = CMat::zeros(n, n);
        for (b, w) in dirs.iter().zip(&da) {
            if let Some(b) = b {
                g += b * b.adjoint() * Complex64::new(w / sigma2, 0.0);
            }
        }
        Ok((value, g))
    };
    optimize_covariance(n, p, &objective, &gradient, opts)
}
