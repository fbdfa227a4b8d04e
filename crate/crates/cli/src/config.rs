//! Experiment configuration: a JSON file with every field optional, plus
//! command-line overrides.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use lplmmse::montecarlo::DetectorPath;
use lplmmse::system::PrecoderKind;
use lplmmse::Constellation;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Tap JSON for a frequency-selective channel (full CSIT). The built-in
    /// two-tap 2x2 channel is used when neither this nor `theta` is set.
    pub channel_file: Option<PathBuf>,
    /// Mean-feedback Rician ensemble (partial CSIT).
    pub theta: Option<f64>,
    pub antennas: usize,
    /// Ensemble draws used by the partial-CSIT analysis.
    pub samples: usize,
    pub subcarriers: usize,
    pub constellation: String,
    pub precoder: PrecoderKind,
    pub power: f64,
    pub snr_db: Vec<f64>,
    /// Simulated block length J.
    pub block_len: usize,
    pub seed: u64,
    pub restarts: usize,
    pub detector: DetectorPath,
    pub trials: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Decoder curve: `matched`, `inverse-square` or `csv:<path>` (columns
    /// `rho, psi`).
    pub psi: String,
    /// Subtracted from the matched curve, clamped at zero.
    pub psi_gap: f64,
    pub layers: usize,
    pub rho_max: Option<f64>,
    /// Gaussian smoothing width applied to the ladder target.
    pub smooth: Option<f64>,
    pub points: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            channel_file: None,
            theta: None,
            antennas: 2,
            samples: 2000,
            subcarriers: 256,
            constellation: "qam16".into(),
            precoder: PrecoderKind::Waterfill,
            power: 1.0,
            snr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            block_len: 1024,
            seed: 0,
            restarts: 20,
            detector: DetectorPath::Fast,
            trials: 1,
            max_iterations: 50,
            tolerance: 1e-4,
            psi: "matched".into(),
            psi_gap: 0.0,
            layers: 100,
            rho_max: None,
            smooth: None,
            points: 256,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, msg: String| anyhow::anyhow!("config.{name}: {msg}");
        if self.channel_file.is_some() && self.theta.is_some() {
            bail!(field("theta", "set either channel_file or theta, not both".into()));
        }
        if let Some(t) = self.theta {
            if !(0.0..=1.0).contains(&t) {
                return Err(field("theta", format!("must lie in [0, 1], got {t}")));
            }
        }
        if self.antennas == 0 {
            return Err(field("antennas", "must be positive".into()));
        }
        if self.samples == 0 {
            return Err(field("samples", "must be positive".into()));
        }
        if self.subcarriers == 0 {
            return Err(field("subcarriers", "must be positive".into()));
        }
        if self.constellation != "gaussian" {
            Constellation::parse(&self.constellation).map_err(|e| field("constellation", e.to_string()))?;
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return Err(field("power", format!("must be positive, got {}", self.power)));
        }
        if self.snr_db.is_empty() {
            return Err(field("snr_db", "grid is empty".into()));
        }
        for (k, s) in self.snr_db.iter().enumerate() {
            if !s.is_finite() {
                return Err(field(&format!("snr_db[{k}]"), format!("not finite: {s}")));
            }
            if k > 0 && *s <= self.snr_db[k - 1] {
                return Err(field(&format!("snr_db[{k}]"), "grid must be strictly increasing".into()));
            }
        }
        let n = self.antennas;
        if self.theta.is_some() {
            if self.block_len % (n * n) != 0 || self.block_len == 0 {
                return Err(field("block_len", format!("partial CSIT needs a positive multiple of N² = {}", n * n)));
            }
        } else if self.block_len == 0 {
            return Err(field("block_len", "must be positive".into()));
        }
        if self.trials == 0 {
            return Err(field("trials", "must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(field("max_iterations", "must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(field("tolerance", "must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.psi_gap) {
            return Err(field("psi_gap", format!("must lie in [0, 1), got {}", self.psi_gap)));
        }
        if !matches!(self.psi.as_str(), "matched" | "inverse-square") && !self.psi.starts_with("csv:") {
            return Err(field("psi", format!("expected matched, inverse-square or csv:<path>, got '{}'", self.psi)));
        }
        if self.layers == 0 {
            return Err(field("layers", "must be positive".into()));
        }
        if let Some(r) = self.rho_max {
            if !(r > 0.0 && r.is_finite()) {
                return Err(field("rho_max", format!("must be positive, got {r}")));
            }
        }
        if let Some(w) = self.smooth {
            if !(w > 0.0 && w.is_finite()) {
                return Err(field("smooth", format!("must be positive, got {w}")));
            }
        }
        if self.points < 2 {
            return Err(field("points", "need at least two points".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn errors_name_the_field() {
        let cfg = ExperimentConfig { snr_db: vec![0.0, 5.0, 5.0], ..Default::default() };
        assert!(cfg.validate().unwrap_err().to_string().starts_with("config.snr_db[2]"));
        let cfg = ExperimentConfig { theta: Some(0.5), block_len: 6, ..Default::default() };
        assert!(cfg.validate().unwrap_err().to_string().starts_with("config.block_len"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"snr": [1]}"#).is_err());
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"seed": 7, "precoder": "flat"}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.precoder, PrecoderKind::Flat);
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { seed: 1, ..Default::default() };
        assert_eq!(a.hash(), ExperimentConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
