//! Scenario assembly shared by the command-line tool and the test suites.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{isi_to_parallel, svd_decompose, Svd, TapSet};
use crate::constellation::GammaCurve;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::montecarlo::Link;
use crate::precoder::{
    build_full_csit, build_partial_csit, build_permutation, flat_allocation, optimize_w_discrete, sqrt_psd, waterfill,
    DiscreteOptions, PowerAllocation,
};
use crate::transfer::Phi;

/// `sigma2 = P N / 10^(snr_db / 10)`.
pub fn sigma2_from_snr_db(snr_db: f64, power: f64, antennas: usize) -> f64 {
    power * antennas as f64 / 10f64.powf(snr_db / 10.0)
}

/// `10 log10(P N / sigma2)`.
pub fn snr_db(power: f64, antennas: usize, sigma2: f64) -> f64 {
    10.0 * (power * antennas as f64 / sigma2).log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecoderKind {
    Flat,
    Waterfill,
    Optimized,
}

impl FromStr for PrecoderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "flat" => Ok(PrecoderKind::Flat),
            "waterfill" | "water-filling" => Ok(PrecoderKind::Waterfill),
            "optimized" | "optimised" | "opt" => Ok(PrecoderKind::Optimized),
            other => Err(Error::Parse(format!("unknown precoder `{other}` (flat, waterfill, optimized)"))),
        }
    }
}

/// Full-CSIT channel: one `M x N` matrix per subcarrier and its SVD.
#[derive(Debug, Clone)]
pub struct ParallelChannel {
    channels: Vec<CMat>,
    svds: Vec<Svd>,
    lambda2: Vec<f64>,
}

impl ParallelChannel {
    pub fn from_matrices(channels: Vec<CMat>) -> Result<Self> {
        let n = channels.first().ok_or_else(|| Error::config("no channel matrices"))?.ncols();
        if channels.iter().any(|h| h.ncols() != n) {
            return Err(Error::Dimension("channel matrices disagree on N".into()));
        }
        let svds: Vec<Svd> = channels.iter().map(svd_decompose).collect();
        let lambda2 = svds.iter().flat_map(|s| s.gains.iter().map(|g| g * g)).collect();
        Ok(ParallelChannel { channels, svds, lambda2 })
    }

    pub fn from_taps(taps: &TapSet, subcarriers: usize) -> Result<Self> {
        Self::from_matrices(isi_to_parallel(taps, subcarriers)?)
    }

    pub fn antennas(&self) -> usize {
        self.channels[0].ncols()
    }

    pub fn subcarriers(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[CMat] {
        &self.channels
    }

    pub fn svds(&self) -> &[Svd] {
        &self.svds
    }

    /// Squared eigenmode gains, `subcarrier * N + mode`.
    pub fn lambda2(&self) -> &[f64] {
        &self.lambda2
    }

    /// `optimized` needs a discrete `gamma`; with none (or the Gaussian one)
    /// it coincides with water-filling.
    pub fn allocate(
        &self,
        kind: PrecoderKind,
        sigma2: f64,
        power: f64,
        gamma: Option<&GammaCurve>,
        opts: DiscreteOptions,
    ) -> Result<PowerAllocation> {
        match (kind, gamma) {
            (PrecoderKind::Flat, _) => Ok(flat_allocation(self.lambda2.len(), power)),
            (PrecoderKind::Waterfill, _) | (PrecoderKind::Optimized, None) => waterfill(&self.lambda2, sigma2, power),
            (PrecoderKind::Optimized, Some(g)) if g.is_gaussian() => waterfill(&self.lambda2, sigma2, power),
            (PrecoderKind::Optimized, Some(g)) => Ok(optimize_w_discrete(&self.lambda2, sigma2, power, g, opts)?.allocation),
        }
    }

    /// Effective gains `λ √w` per base mode.
    pub fn mode_gains(&self, allocation: &PowerAllocation) -> Vec<f64> {
        self.lambda2.iter().zip(&allocation.w).map(|(l, w)| (l * w.max(0.0)).sqrt()).collect()
    }

    pub fn phi(&self, allocation: &PowerAllocation, sigma2: f64) -> Result<Phi> {
        Phi::full(&self.mode_gains(allocation), sigma2)
    }

    /// Block of `j` symbols over these subcarriers, with a mode ordering
    /// drawn from `rng`.
    pub fn link<R: Rng + ?Sized>(&self, allocation: &PowerAllocation, j: usize, sigma2: f64, rng: &mut R) -> Result<Link> {
        let precoder = build_full_csit(&self.svds, allocation, j, rng)?;
        Link::full(precoder, self.channels.clone(), sigma2)
    }
}

/// Partial-CSIT block with transmit covariance `q`: `P = Q^{1/2}`, the
/// cyclic-shift permutation and one channel matrix per channel use.
pub fn partial_csit_link(q: &CMat, channels: Vec<CMat>, sigma2: f64, power: f64) -> Result<Link> {
    let n = q.nrows();
    let perm = build_permutation(channels.len() * n, n)?;
    let precoder = build_partial_csit(&sqrt_psd(q), &perm, channels, power)?;
    Link::partial(precoder, sigma2)
}
