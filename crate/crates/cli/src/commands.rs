use std::f64::consts::LN_2;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use lplmmse::channel::{FadingEnsemble, TapSet};
use lplmmse::io::Table;
use lplmmse::linalg::CMat;
use lplmmse::montecarlo::{run_trials, GenieDecoder, Link, RunConfig};
use lplmmse::par;
use lplmmse::precoder::{optimize_q, optimize_q_discrete, AscentOptions, DiscreteOptions, PowerAllocation};
use lplmmse::rng::stream_rng;
use lplmmse::scm::{build_ladder, ladder_psi, limit_rate, smooth};
use lplmmse::system::{partial_csit_link, sigma2_from_snr_db, ParallelChannel, PrecoderKind};
use lplmmse::transfer::{
    matched_psi, rate_gaussian, rate_constellation, rate_partial_gaussian, Curve, Direction, FnCurve, Phi, TransferCurve,
};
use lplmmse::{Constellation, GammaCurve};
use serde_json::{json, Value};

use crate::config::ExperimentConfig;

const BUILTIN_TAPS: &str = include_str!("../../core/fixtures/two_tap.json");

/// Stream ids for link construction, clear of the per-trial streams.
const LINK_STREAM: u64 = 1 << 50;
/// Frame ids for the partial-CSIT ensemble.
const ANALYSIS_FRAME: u64 = 1;
const LINK_FRAME: u64 = 2;

/// Writes files under the output directory, each carrying the config hash
/// and seed.
pub struct Output {
    dir: PathBuf,
    hash: String,
    seed: u64,
}

impl Output {
    pub fn new(dir: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Output { dir: dir.to_path_buf(), hash: cfg.hash(), seed: cfg.seed })
    }

    fn header(&self) -> String {
        format!("config_hash={} seed={}", self.hash, self.seed)
    }

    pub fn csv(&self, name: &str, table: &Table, notes: &[String]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let mut comments = vec![self.header()];
        comments.extend_from_slice(notes);
        table.save(&path, &comments).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn json(&self, name: &str, body: Value) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let doc = json!({ "config_hash": self.hash, "seed": self.seed, "body": body });
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Signalling alphabet: a constellation or Gaussian.
struct Signalling {
    gamma: GammaCurve,
}

impl Signalling {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let gamma = if cfg.constellation == "gaussian" {
            GammaCurve::gaussian()
        } else {
            GammaCurve::build(&Constellation::parse(&cfg.constellation)?)?
        };
        Ok(Signalling { gamma })
    }

    fn constellation(&self) -> Option<&Constellation> {
        self.gamma.constellation()
    }

    /// Bits per symbol, infinite for Gaussian signalling.
    fn limit(&self) -> f64 {
        self.constellation().map_or(f64::INFINITY, |c| c.log_cardinality() / LN_2)
    }
}

enum Scenario {
    Full(ParallelChannel),
    Partial { ensemble: FadingEnsemble, samples: Vec<CMat> },
}

/// Transmit strategy for one SNR point.
enum Strategy {
    Allocation(PowerAllocation),
    Covariance(CMat),
}

impl Scenario {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        if let Some(theta) = cfg.theta {
            let n = cfg.antennas;
            let ensemble = FadingEnsemble::new(n, n, theta, cfg.seed, 0)?;
            let samples = ensemble.samples(cfg.samples, cfg.seed, ANALYSIS_FRAME);
            return Ok(Scenario::Partial { ensemble, samples });
        }
        let taps = match &cfg.channel_file {
            Some(p) => TapSet::load(p).with_context(|| format!("config.channel_file: {}", p.display()))?,
            None => TapSet::from_json(BUILTIN_TAPS)?,
        };
        Ok(Scenario::Full(ParallelChannel::from_taps(&taps, cfg.subcarriers)?))
    }

    fn antennas(&self) -> usize {
        match self {
            Scenario::Full(ch) => ch.antennas(),
            Scenario::Partial { samples, .. } => samples[0].ncols(),
        }
    }

    fn strategy(&self, kind: PrecoderKind, cfg: &ExperimentConfig, sigma2: f64, gamma: &GammaCurve) -> Result<Strategy> {
        match self {
            Scenario::Full(ch) => {
                let opts = DiscreteOptions { restarts: cfg.restarts, seed: cfg.seed, ascent: AscentOptions::default() };
                Ok(Strategy::Allocation(ch.allocate(kind, sigma2, cfg.power, Some(gamma), opts)?))
            }
            Scenario::Partial { samples, .. } => {
                let n = samples[0].ncols();
                let q = match kind {
                    PrecoderKind::Flat => CMat::identity(n, n) * lplmmse::Complex64::new(cfg.power, 0.0),
                    PrecoderKind::Optimized if !gamma.is_gaussian() => {
                        optimize_q_discrete(samples, sigma2, cfg.power, gamma, AscentOptions::default())?.q
                    }
                    _ => optimize_q(samples, sigma2, cfg.power, AscentOptions::default())?.q,
                };
                Ok(Strategy::Covariance(q))
            }
        }
    }

    fn phi(&self, strategy: &Strategy, sigma2: f64) -> Result<Phi> {
        Ok(match (self, strategy) {
            (Scenario::Full(ch), Strategy::Allocation(a)) => ch.phi(a, sigma2)?,
            (Scenario::Partial { samples, .. }, Strategy::Covariance(q)) => Phi::partial(samples, q, sigma2)?,
            _ => unreachable!("strategy matches scenario"),
        })
    }

    /// Rate of the strategy with the given signalling, bits per antenna per
    /// channel use.
    fn rate(&self, strategy: &Strategy, sigma2: f64, gamma: &GammaCurve) -> Result<f64> {
        if gamma.is_gaussian() {
            return Ok(match (self, strategy) {
                (Scenario::Full(ch), Strategy::Allocation(a)) => rate_gaussian(&ch.mode_gains(a), sigma2)?,
                (Scenario::Partial { samples, .. }, Strategy::Covariance(q)) => rate_partial_gaussian(samples, q, sigma2)?,
                _ => unreachable!("strategy matches scenario"),
            });
        }
        Ok(rate_constellation(&self.phi(strategy, sigma2)?, gamma)?)
    }

    fn link(&self, strategy: &Strategy, cfg: &ExperimentConfig, sigma2: f64, point: usize) -> Result<Link> {
        let mut rng = stream_rng(cfg.seed, LINK_STREAM + point as u64);
        Ok(match (self, strategy) {
            (Scenario::Full(ch), Strategy::Allocation(a)) => {
                ch.link(a, cfg.block_len, sigma2, &mut rng).context("config.block_len")?
            }
            (Scenario::Partial { ensemble, .. }, Strategy::Covariance(q)) => {
                let uses = cfg.block_len / q.nrows();
                let channels = ensemble.sample_with(uses, &mut stream_rng(cfg.seed, LINK_STREAM + LINK_FRAME + point as u64));
                partial_csit_link(q, channels, sigma2, cfg.power)?
            }
            _ => unreachable!("strategy matches scenario"),
        })
    }
}

fn sigma2(cfg: &ExperimentConfig, n: usize, snr_db: f64) -> f64 {
    sigma2_from_snr_db(snr_db, cfg.power, n)
}

fn note(key: &str, value: impl std::fmt::Display) -> String {
    format!("{key}={value}")
}

pub fn rates(cfg: &ExperimentConfig, out: &Output) -> Result<Vec<PathBuf>> {
    let scenario = Scenario::new(cfg)?;
    let sig = Signalling::new(cfg)?;
    let gaussian = GammaCurve::gaussian();
    let n = scenario.antennas();
    let rows = par::try_map_range(cfg.snr_db.len(), |k| -> Result<Vec<f64>> {
        let db = cfg.snr_db[k];
        let s2 = sigma2(cfg, n, db);
        let mut row = vec![db];
        for kind in [PrecoderKind::Flat, PrecoderKind::Waterfill, PrecoderKind::Optimized] {
            let st = scenario.strategy(kind, cfg, s2, &sig.gamma)?;
            row.push(scenario.rate(&st, s2, &sig.gamma)?);
        }
        let wf = scenario.strategy(PrecoderKind::Waterfill, cfg, s2, &gaussian)?;
        row.push(scenario.rate(&wf, s2, &gaussian)?);
        row.push(sig.limit());
        Ok(row)
    })?;
    let mut table =
        Table::new(&["snr_db", "rate_flat", "rate_wf", "rate_opt", "capacity_wf", "capacity_constellation_limit"]);
    rows.into_iter().for_each(|r| table.push(r));
    let notes = [note("signalling", sig.gamma.label()), note("units", "bits per antenna per channel use")];
    Ok(vec![out.csv("rates.csv", &table, &notes)?])
}

pub fn transfer(cfg: &ExperimentConfig, out: &Output) -> Result<Vec<PathBuf>> {
    let scenario = Scenario::new(cfg)?;
    let sig = Signalling::new(cfg)?;
    let n = scenario.antennas();
    let mut phi_table = Table::new(&["snr_db", "v", "phi"]);
    let mut psi_table = Table::new(&["snr_db", "rho", "psi"]);
    let mut bands = Vec::new();
    for &db in &cfg.snr_db {
        let s2 = sigma2(cfg, n, db);
        let st = scenario.strategy(cfg.precoder, cfg, s2, &sig.gamma)?;
        let phi = scenario.phi(&st, s2)?;
        let psi = matched_psi(&phi)?;
        let m = cfg.points;
        for k in 1..=m {
            let v = k as f64 / m as f64;
            phi_table.push(vec![db, v, phi.eval(v)]);
        }
        let top = 1.25 * phi.at_zero();
        for k in 0..m {
            let rho = top * k as f64 / (m - 1) as f64;
            psi_table.push(vec![db, rho, psi.eval(rho)]);
        }
        let (lo, hi) = psi.band();
        bands.push(format!("band snr_db={db} phi(1)={lo} phi(0)={hi}"));
    }
    let mut files = vec![out.csv("phi.csv", &phi_table, &[])?, out.csv("psi.csv", &psi_table, &bands)?];
    if sig.constellation().is_some() {
        let mut g = Table::new(&["rho", "gamma"]);
        sig.gamma.samples().into_iter().for_each(|(r, v)| g.push(vec![r, v]));
        files.push(out.csv("gamma.csv", &g, &[note("constellation", sig.gamma.label())])?);
    }
    Ok(files)
}

fn load_psi_csv(path: &str) -> Result<TransferCurve> {
    let text = std::fs::read_to_string(path).with_context(|| format!("config.psi: reading {path}"))?;
    let table = Table::parse(&text)?;
    let rho = table.column("rho").ok_or_else(|| anyhow!("config.psi: {path} has no 'rho' column"))?;
    let psi = table.column("psi").ok_or_else(|| anyhow!("config.psi: {path} has no 'psi' column"))?;
    TransferCurve::new(Direction::Psi, rho, psi).with_context(|| format!("config.psi: {path}"))
}

/// The decoder curve named by `cfg.psi`, given the detector map.
fn decoder_curve<'a>(cfg: &ExperimentConfig, phi: &Phi) -> Result<Box<dyn Curve + 'a>> {
    let gap = cfg.psi_gap;
    Ok(match cfg.psi.as_str() {
        "matched" => {
            let m = matched_psi(phi)?;
            let end = m.support_end();
            Box::new(FnCurve::new(move |r: f64| (m.eval(r) - gap).max(0.0)).with_support_end(end.unwrap_or(f64::INFINITY)))
        }
        "inverse-square" => Box::new(FnCurve::new(|r: f64| (1.0 + r).powi(-2))),
        other => Box::new(load_psi_csv(other.trim_start_matches("csv:"))?),
    })
}

pub fn simulate(cfg: &ExperimentConfig, out: &Output) -> Result<Vec<PathBuf>> {
    let scenario = Scenario::new(cfg)?;
    let sig = Signalling::new(cfg)?;
    let constellation = sig
        .constellation()
        .cloned()
        .ok_or_else(|| anyhow!("config.constellation: simulation needs a discrete constellation"))?;
    let n = scenario.antennas();
    let run_cfg = RunConfig { max_iterations: cfg.max_iterations, tolerance: cfg.tolerance, detector: cfg.detector };
    let mut files = Vec::new();
    let mut summary = Table::new(&["snr_db", "trial", "iterations", "converged", "v_final", "symbol_errors"]);
    for (point, &db) in cfg.snr_db.iter().enumerate() {
        let s2 = sigma2(cfg, n, db);
        let st = scenario.strategy(cfg.precoder, cfg, s2, &sig.gamma)?;
        let phi = scenario.phi(&st, s2)?;
        let psi = decoder_curve(cfg, &phi)?;
        let genie = GenieDecoder::with_gamma(psi.as_ref(), sig.gamma.clone())?;
        let link = scenario.link(&st, cfg, s2, point)?;
        let seed = cfg.seed.wrapping_add(point as u64);
        for rep in run_trials(&link, &phi, &genie, run_cfg, seed, cfg.trials)? {
            log::info!("snr {db} dB trial {}: {:.3}s", rep.trial, rep.elapsed_seconds);
            let stem = format!("simulate_p{point}_t{}", rep.trial);
            files.push(out.csv(&format!("{stem}.csv"), &rep.trace(), &[note("snr_db", db), note("block_len", rep.block_len)])?);
            let mut body = serde_json::to_value(&rep)?;
            if let Value::Object(map) = &mut body {
                map.remove("elapsed_seconds");
                map.insert("snr_db".into(), json!(db));
            }
            files.push(out.json(&format!("{stem}.json"), body)?);
            summary.push(vec![
                db,
                rep.trial as f64,
                rep.iterations.len() as f64,
                if rep.converged { 1.0 } else { 0.0 },
                rep.v_final,
                rep.symbol_errors as f64,
            ]);
        }
    }
    files.push(out.csv("simulate_summary.csv", &summary, &[note("constellation", constellation.label())])?);
    Ok(files)
}

pub fn scm_ladder(cfg: &ExperimentConfig, out: &Output) -> Result<Vec<PathBuf>> {
    let phi = if cfg.psi == "matched" {
        let scenario = Scenario::new(cfg)?;
        let sig = Signalling::new(cfg)?;
        let s2 = sigma2(cfg, scenario.antennas(), cfg.snr_db[0]);
        let st = scenario.strategy(cfg.precoder, cfg, s2, &sig.gamma)?;
        Some(scenario.phi(&st, s2)?)
    } else {
        None
    };
    let target = match &phi {
        Some(p) => decoder_curve(cfg, p)?,
        None => decoder_curve(cfg, &Phi::from_snr(vec![1.0])?)?,
    };
    let last_knot = match cfg.psi.strip_prefix("csv:") {
        Some(path) => load_psi_csv(path)?.knots().0.last().copied(),
        None => None,
    };
    let rho_max = match (cfg.rho_max, target.support_end().filter(|e| e.is_finite()).or(last_knot)) {
        (Some(r), _) => r,
        (None, Some(end)) => end,
        _ => bail!("config.rho_max: required for a target without compact support"),
    };
    let smoothed;
    let psi: &dyn Curve = match cfg.smooth {
        Some(w) => {
            smoothed = smooth(target.as_ref(), w);
            &smoothed
        }
        None => target.as_ref(),
    };
    let ladder = build_ladder(psi, cfg.layers, rho_max)?;
    let stair = ladder_psi(&ladder);
    let mut table = Table::new(&["i", "r_i", "p_i", "dp_i", "rate_i", "linear_rate_i"]);
    for i in 1..=ladder.layers() {
        table.push(vec![
            i as f64,
            ladder.r[i],
            ladder.p[i],
            ladder.dp[i - 1],
            ladder.rates[i - 1] / LN_2,
            ladder.linear_rates[i - 1] / LN_2,
        ]);
    }
    let notes = [
        note("psi", &cfg.psi),
        note("rho_max", rho_max),
        note("total_rate_bits", ladder.total_rate()),
        note("limit_rate_bits", limit_rate(psi, rho_max)?),
        note("staircase_at_rho_max", stair.eval(rho_max)),
    ];
    Ok(vec![out.csv("ladder.csv", &table, &notes)?])
}

pub fn optimize_precoder(cfg: &ExperimentConfig, out: &Output) -> Result<Vec<PathBuf>> {
    let scenario = Scenario::new(cfg)?;
    let sig = Signalling::new(cfg)?;
    let n = scenario.antennas();
    let results = par::try_map_range(cfg.snr_db.len(), |k| -> Result<Value> {
        let db = cfg.snr_db[k];
        let s2 = sigma2(cfg, n, db);
        let st = scenario.strategy(cfg.precoder, cfg, s2, &sig.gamma)?;
        let rate = scenario.rate(&st, s2, &sig.gamma)?;
        Ok(match &st {
            Strategy::Allocation(a) => json!({ "snr_db": db, "rate_bits": rate, "w": a.w }),
            Strategy::Covariance(q) => {
                let re: Vec<Vec<f64>> = (0..q.nrows()).map(|i| (0..q.ncols()).map(|j| q[(i, j)].re).collect()).collect();
                let im: Vec<Vec<f64>> = (0..q.nrows()).map(|i| (0..q.ncols()).map(|j| q[(i, j)].im).collect()).collect();
                json!({ "snr_db": db, "rate_bits": rate, "q_re": re, "q_im": im })
            }
        })
    })?;
    let mut files = vec![out.json(
        "precoder.json",
        json!({ "precoder": cfg.precoder, "signalling": sig.gamma.label(), "points": results }),
    )?];
    if let Scenario::Full(ch) = &scenario {
        let mut table = Table::new(&["snr_db", "mode", "lambda2", "w"]);
        for r in &results {
            let db = r["snr_db"].as_f64().unwrap_or(f64::NAN);
            let w = r["w"].as_array().cloned().unwrap_or_default();
            for (m, (l, w)) in ch.lambda2().iter().zip(w).enumerate() {
                table.push(vec![db, m as f64, *l, w.as_f64().unwrap_or(f64::NAN)]);
            }
        }
        files.push(out.csv("allocation.csv", &table, &[])?);
    }
    Ok(files)
}
