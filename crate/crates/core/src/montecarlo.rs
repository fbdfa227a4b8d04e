//! Monte-Carlo harness: the iterative detector run against genie decoders
//! that realise a prescribed decoder curve ψ.

use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::constellation::{posterior_messages, prior_stats, Constellation, GammaCurve, SymbolPrior, VARIANCE_FLOOR};
use crate::detector::{detect_block, DenseModel, LinearModel};
use crate::error::{Error, Result};
use crate::io::Table;
use crate::linalg::{CMat, ZERO};
use crate::precoder::{FullCsitPrecoder, PartialCsitPrecoder};
use crate::rng::{complex_normal, stream_rng, SimRng};
use crate::stats::{gaussianity_report, ResidualStats, MIN_RESIDUALS};
use crate::transfer::{Curve, Phi};

/// Transmitter, physical channel and receive front end for one block.
#[derive(Debug, Clone)]
pub enum Link {
    /// Full CSIT: one `M x N` matrix per subcarrier; channel use `t` sees
    /// subcarrier `t mod Jc`.
    Full { precoder: FullCsitPrecoder, channels: Vec<CMat>, sigma2: f64 },
    Partial { precoder: PartialCsitPrecoder, sigma2: f64 },
}

impl Link {
    pub fn full(precoder: FullCsitPrecoder, channels: Vec<CMat>, sigma2: f64) -> Result<Self> {
        if channels.len() != precoder.subcarriers() {
            return Err(Error::Dimension(format!(
                "{} channel matrices for {} subcarriers",
                channels.len(),
                precoder.subcarriers()
            )));
        }
        if channels.iter().any(|h| h.ncols() != precoder.antennas() || h.nrows() < precoder.antennas()) {
            return Err(Error::Dimension("full-CSIT links need M >= N channel matrices with N columns".into()));
        }
        check_sigma2(sigma2)?;
        Ok(Link::Full { precoder, channels, sigma2 })
    }

    pub fn partial(precoder: PartialCsitPrecoder, sigma2: f64) -> Result<Self> {
        check_sigma2(sigma2)?;
        Ok(Link::Partial { precoder, sigma2 })
    }

    pub fn block_len(&self) -> usize {
        self.model().input_len()
    }

    pub fn sigma2(&self) -> f64 {
        match self {
            Link::Full { sigma2, .. } | Link::Partial { sigma2, .. } => *sigma2,
        }
    }

    /// The receiver's linear model for the signal returned by [`Link::observe`].
    pub fn model(&self) -> &dyn LinearModel {
        match self {
            Link::Full { precoder, .. } => precoder,
            Link::Partial { precoder, .. } => precoder,
        }
    }

    /// Sends `x` through the channel with fresh noise.
    pub fn observe<R: Rng + ?Sized>(&self, x: &[Complex64], rng: &mut R) -> Vec<Complex64> {
        match self {
            Link::Full { precoder, channels, sigma2 } => {
                let xt = precoder.transmit(x);
                let n = precoder.antennas();
                let m = channels[0].nrows();
                let uses = xt.len() / n;
                let mut y = vec![ZERO; uses * m];
                for t in 0..uses {
                    let h = &channels[precoder.subcarrier_of_use(t)];
                    for r in 0..m {
                        let s: Complex64 = (0..n).map(|a| h[(r, a)] * xt[t * n + a]).sum();
                        y[t * m + r] = s + complex_normal(rng, *sigma2);
                    }
                }
                precoder.receive(&y)
            }
            Link::Partial { precoder, sigma2 } => {
                let mut y = precoder.apply(x);
                y.iter_mut().for_each(|v| *v += complex_normal(rng, *sigma2));
                y
            }
        }
    }
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("noise power must be positive, got {sigma2}")))
    }
}

/// Uniform i.i.d. symbols: indices and values.
pub fn random_symbols<R: Rng + ?Sized>(constellation: &Constellation, len: usize, rng: &mut R) -> (Vec<usize>, Vec<Complex64>) {
    let pts = constellation.points();
    let idx: Vec<usize> = (0..len).map(|_| rng.random_range(0..pts.len())).collect();
    let x = idx.iter().map(|&k| pts[k]).collect();
    (idx, x)
}

/// Priors drawn as posteriors of `a_i = x_i + CN(0, 1/s)`, with `s` chosen so
/// the expected prior variance is `v`.
pub fn priors_at_variance<R: Rng + ?Sized>(
    v: f64,
    x: &[Complex64],
    gamma: &GammaCurve,
    constellation: &Constellation,
    rng: &mut R,
) -> Result<Vec<SymbolPrior>> {
    if v.is_nan() {
        return Err(Error::domain("genie target variance is NaN"));
    }
    if !(0.0..=1.0).contains(&v) {
        log::warn!("genie target variance {v:e} clamped to [{VARIANCE_FLOOR:e}, 1]");
    }
    let v = v.clamp(VARIANCE_FLOOR, 1.0);
    if v >= 1.0 {
        return Ok(vec![SymbolPrior::uniform(constellation.len()); x.len()]);
    }
    let s = gamma.inverse(v)?;
    let noise = 1.0 / s;
    x.iter()
        .map(|xi| posterior_messages(xi + complex_normal(rng, noise), noise, constellation))
        .collect()
}

/// Decoder stand-in: given input SNR ρ, emits priors of variance ψ(ρ).
pub struct GenieDecoder<'a> {
    psi: &'a dyn Curve,
    gamma: GammaCurve,
    constellation: Constellation,
}

impl<'a> GenieDecoder<'a> {
    pub fn new(psi: &'a dyn Curve, constellation: &Constellation) -> Result<Self> {
        Ok(GenieDecoder { psi, gamma: GammaCurve::build(constellation)?, constellation: constellation.clone() })
    }

    /// Reuses a tabulated γ; it must belong to `constellation`.
    pub fn with_gamma(psi: &'a dyn Curve, gamma: GammaCurve) -> Result<Self> {
        let constellation = gamma
            .constellation()
            .cloned()
            .ok_or_else(|| Error::config("the genie needs a discrete constellation"))?;
        Ok(GenieDecoder { psi, gamma, constellation })
    }

    pub fn psi(&self) -> &dyn Curve {
        self.psi
    }

    pub fn gamma(&self) -> &GammaCurve {
        &self.gamma
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    pub fn messages<R: Rng + ?Sized>(&self, rho: f64, x: &[Complex64], rng: &mut R) -> Result<Vec<SymbolPrior>> {
        genie_messages(self.psi, rho, x, &self.gamma, &self.constellation, rng)
    }
}

pub fn genie_messages<R: Rng + ?Sized>(
    psi: &dyn Curve,
    rho: f64,
    x: &[Complex64],
    gamma: &GammaCurve,
    constellation: &Constellation,
    rng: &mut R,
) -> Result<Vec<SymbolPrior>> {
    if !(rho >= 0.0) {
        return Err(Error::domain(format!("genie input SNR must be >= 0, got {rho}")));
    }
    priors_at_variance(psi.eval(rho), x, gamma, constellation, rng)
}

/// Which LMMSE implementation the receiver runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorPath {
    /// Structured FFT / per-use path.
    #[default]
    Fast,
    /// Explicit matrix solves; slow, used as a reference.
    Dense,
}

#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub max_iterations: usize,
    /// Stop once the prior variance changes by less than this.
    pub tolerance: f64,
    pub detector: DetectorPath,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { max_iterations: 50, tolerance: 1e-4, detector: DetectorPath::Fast }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Block-averaged prior variance entering the detector.
    pub v_meas: f64,
    /// `1 / mean|b - x|^2`.
    pub rho_meas: f64,
    /// The detector's own `1/u`.
    pub rho_detector: f64,
    /// `ψ(φ(v))` evaluated at the previous iteration's `v_meas` (1 at the
    /// first iteration).
    pub v_pred: f64,
    /// `φ(v_meas)`.
    pub rho_pred: f64,
    pub residuals: Option<ResidualStats>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub trial: u64,
    pub block_len: usize,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    /// Prior variance after the last genie pass.
    pub v_final: f64,
    /// Hard decisions on the final priors that miss the transmitted symbol.
    pub symbol_errors: usize,
    pub elapsed_seconds: f64,
}

impl RunReport {
    /// Everything except the timing.
    pub fn same_outcome(&self, other: &RunReport) -> bool {
        self.seed == other.seed
            && self.trial == other.trial
            && self.block_len == other.block_len
            && self.iterations == other.iterations
            && self.converged == other.converged
            && self.v_final == other.v_final
            && self.symbol_errors == other.symbol_errors
    }

    /// Columns `iter, v_meas, rho_meas, v_pred, rho_pred`.
    pub fn trace(&self) -> Table {
        let mut t = Table::new(&["iter", "v_meas", "rho_meas", "v_pred", "rho_pred"]);
        for r in &self.iterations {
            t.push(vec![r.iter as f64, r.v_meas, r.rho_meas, r.v_pred, r.rho_pred]);
        }
        t
    }
}

fn residual_power(b: &[Complex64], x: &[Complex64]) -> f64 {
    b.iter().zip(x).map(|(b, x)| (b - x).norm_sqr()).sum::<f64>() / b.len() as f64
}

/// Alternates detection and genie decoding on one block. Trial `trial` uses
/// generator stream `trial` of `seed`.
pub fn run_iterative(link: &Link, phi: &Phi, genie: &GenieDecoder, cfg: RunConfig, seed: u64, trial: u64) -> Result<RunReport> {
    let start = Instant::now();
    let mut rng = stream_rng(seed, trial);
    let c = genie.constellation();
    let dense = match cfg.detector {
        DetectorPath::Fast => None,
        DetectorPath::Dense => Some(DenseModel::from_model(link.model())),
    };
    let model: &dyn LinearModel = match &dense {
        Some(d) => d,
        None => link.model(),
    };
    let j = link.block_len();
    let (idx, x) = random_symbols(c, j, &mut rng);
    let y = link.observe(&x, &mut rng);

    let mut priors = vec![SymbolPrior::uniform(c.len()); j];
    let mut v_pred = 1.0;
    let mut iterations = Vec::new();
    let mut converged = false;
    let mut v_final = 1.0;
    for iter in 1..=cfg.max_iterations {
        let det = detect_block(model, &y, &priors, c, link.sigma2())?;
        let v_meas = det.prior.raw_variance;
        let rho_pred = phi.eval(det.prior.variance);
        let residuals: Vec<Complex64> = det.block.b.iter().zip(&x).map(|(b, x)| b - x).collect();
        let stats = if j >= MIN_RESIDUALS { Some(gaussianity_report(&residuals, &x)?) } else { None };
        iterations.push(IterationRecord {
            iter,
            v_meas,
            rho_meas: 1.0 / residual_power(&det.block.b, &x),
            rho_detector: 1.0 / det.block.u,
            v_pred,
            rho_pred,
            residuals: stats,
        });
        v_pred = genie.psi().eval(rho_pred);
        priors = genie.messages(1.0 / det.block.u, &x, &mut rng)?;
        v_final = prior_stats(&priors, c)?.raw_variance;
        if (v_final - v_meas).abs() < cfg.tolerance || v_final < cfg.tolerance {
            converged = true;
            break;
        }
    }
    let symbol_errors = priors
        .iter()
        .zip(&idx)
        .filter(|(p, &k)| {
            let best = p.0.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i);
            best != Some(k)
        })
        .count();
    Ok(RunReport {
        seed,
        trial,
        block_len: j,
        iterations,
        converged,
        v_final,
        symbol_errors,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

/// `trials` independent runs (streams `0..trials`), in trial order.
pub fn run_trials(link: &Link, phi: &Phi, genie: &GenieDecoder, cfg: RunConfig, seed: u64, trials: usize) -> Result<Vec<RunReport>> {
    crate::par::try_map_range(trials, |t| run_iterative(link, phi, genie, cfg, seed, t as u64))
}

/// One detector pass with genie priors of target variance `v`.
#[derive(Debug, Clone)]
pub struct ResidualSample {
    /// Measured prior variance the detector used.
    pub prior_variance: f64,
    /// The detector's extrinsic variance `u`.
    pub u: f64,
    pub residuals: Vec<Complex64>,
    pub symbols: Vec<Complex64>,
}

pub fn residual_sample(link: &Link, gamma: &GammaCurve, v: f64, rng: &mut SimRng) -> Result<ResidualSample> {
    let c = gamma.constellation().ok_or_else(|| Error::config("residual sampling needs a discrete constellation"))?;
    let (_, x) = random_symbols(c, link.block_len(), rng);
    let y = link.observe(&x, rng);
    let priors = priors_at_variance(v, &x, gamma, c, rng)?;
    let det = detect_block(link.model(), &y, &priors, c, link.sigma2())?;
    let residuals = det.block.b.iter().zip(&x).map(|(b, x)| b - x).collect();
    Ok(ResidualSample { prior_variance: det.prior.variance, u: det.block.u, residuals, symbols: x })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::FnCurve;

    #[test]
    fn genie_extremes() {
        let c = Constellation::qpsk();
        let gamma = GammaCurve::build(&c).unwrap();
        let mut rng = stream_rng(3, 0);
        let (_, x) = random_symbols(&c, 64, &mut rng);
        let one = FnCurve::new(|_| 1.0);
        let p = genie_messages(&one, 2.0, &x, &gamma, &c, &mut rng).unwrap();
        assert!(p.iter().all(|q| q.0.iter().all(|w| *w == 0.25)));
        let zero = FnCurve::new(|_| 0.0);
        let p = genie_messages(&zero, 2.0, &x, &gamma, &c, &mut rng).unwrap();
        assert!(prior_stats(&p, &c).unwrap().raw_variance < 1e-6);
        assert!(genie_messages(&zero, -1.0, &x, &gamma, &c, &mut rng).is_err());
    }
}
