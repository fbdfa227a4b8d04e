use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use lplmmse::montecarlo::DetectorPath;
use lplmmse::system::PrecoderKind;

mod commands;
mod config;

use commands::Output;
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "lplmmse", version, about = "Linear-precoded MIMO with iterative LMMSE detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Achievable rates of flat, water-filling and optimised precoders over the SNR grid.
    Rates,
    /// Detector map φ and matched decoder curve ψ samples.
    Transfer,
    /// Iterative detection with a genie decoder.
    Simulate,
    /// Layered superposition ladder for a decoder curve.
    ScmLadder,
    /// Optimised power allocation or transmit covariance.
    OptimizePrecoder,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    constellation: Option<String>,
    #[arg(long, global = true)]
    precoder: Option<PrecoderKind>,
    #[arg(long, global = true)]
    power: Option<f64>,
    /// Comma-separated SNR grid in dB.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    snr_db: Option<Vec<f64>>,
    #[arg(long, global = true)]
    channel_file: Option<PathBuf>,
    #[arg(long, global = true)]
    theta: Option<f64>,
    #[arg(long, global = true)]
    restarts: Option<usize>,
    #[arg(long, global = true, value_parser = parse_detector)]
    detector: Option<DetectorPath>,
    #[arg(long, global = true)]
    block_len: Option<usize>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    subcarriers: Option<usize>,
    #[arg(long, global = true)]
    psi: Option<String>,
    #[arg(long, global = true)]
    psi_gap: Option<f64>,
    #[arg(long, global = true)]
    layers: Option<usize>,
    #[arg(long, global = true)]
    rho_max: Option<f64>,
    #[arg(long, global = true)]
    smooth: Option<f64>,
    /// Grid size for transfer curves.
    #[arg(long, global = true)]
    points: Option<usize>,
}

fn parse_detector(s: &str) -> Result<DetectorPath, String> {
    match s {
        "fast" => Ok(DetectorPath::Fast),
        "dense" => Ok(DetectorPath::Dense),
        other => Err(format!("unknown detector '{other}' (fast, dense)")),
    }
}

fn resolve(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    macro_rules! take {
        ($($f:ident),*) => { $( if let Some(v) = &c.$f { cfg.$f = v.clone().into(); } )* };
    }
    take!(seed, constellation, precoder, power, snr_db, restarts, detector, block_len, trials, samples, subcarriers, psi, psi_gap, layers, points);
    if c.channel_file.is_some() {
        cfg.channel_file = c.channel_file.clone();
    }
    if c.theta.is_some() {
        cfg.theta = c.theta;
    }
    if c.rho_max.is_some() {
        cfg.rho_max = c.rho_max;
    }
    if c.smooth.is_some() {
        cfg.smooth = c.smooth;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.common.threads {
        if !lplmmse::par::configure_threads(t) {
            log::warn!("--threads {t} ignored");
        }
    }
    let cfg = resolve(&cli.common)?;
    let out = Output::new(&cli.common.out_dir, &cfg)?;
    let files = match cli.command {
        Command::Rates => commands::rates(&cfg, &out)?,
        Command::Transfer => commands::transfer(&cfg, &out)?,
        Command::Simulate => commands::simulate(&cfg, &out)?,
        Command::ScmLadder => commands::scm_ladder(&cfg, &out)?,
        Command::OptimizePrecoder => commands::optimize_precoder(&cfg, &out)?,
    };
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}
