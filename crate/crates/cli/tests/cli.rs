use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lplmmse::io::Table;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lplmmse"));
    c.env("RUST_LOG", "error").env_remove("RUST_BACKTRACE");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().args(args).arg("--out-dir").arg(dir).output().expect("binary runs");
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn table(path: PathBuf) -> Table {
    Table::parse(&read(path)).unwrap()
}

fn assert_header(text: &str) {
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("# config_hash="), "{first}");
    let hash = first.trim_start_matches("# config_hash=").split(' ').next().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(first.contains(" seed="));
}

#[test]
fn rates_columns_behave() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["rates", "--snr-db=-10,-5,0,5,10", "--subcarriers", "8", "--constellation", "qpsk", "--restarts", "1"]);
    let text = read(dir.path().join("rates.csv"));
    assert_header(&text);
    let t = Table::parse(&text).unwrap();
    let flat = t.column("rate_flat").unwrap();
    let wf = t.column("rate_wf").unwrap();
    let opt = t.column("rate_opt").unwrap();
    let cap = t.column("capacity_wf").unwrap();
    for col in [&flat, &wf, &opt, &cap] {
        assert!(col.windows(2).all(|w| w[1] > w[0]));
    }
    for k in 0..flat.len() {
        assert!(opt[k] >= wf[k] - 1e-9);
        assert!(wf[k] <= cap[k] + 1e-9 && opt[k] <= cap[k] + 1e-9);
        assert!(opt[k] <= 2.0 + 1e-9);
    }
    assert!(wf[0] > flat[0] && wf[1] > flat[1]);
    assert!(t.column("capacity_constellation_limit").unwrap().iter().all(|c| *c == 2.0));
}

#[test]
fn gaussian_rates_equal_capacity() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["rates", "--snr-db=-5,5,15", "--subcarriers", "16", "--constellation", "gaussian"]);
    let t = table(dir.path().join("rates.csv"));
    let wf = t.column("rate_wf").unwrap();
    let cap = t.column("capacity_wf").unwrap();
    for (a, b) in wf.iter().zip(&cap) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn transfer_output_and_band_structure() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["transfer", "--snr-db", "6.7", "--subcarriers", "64"]);
    let phi = table(dir.path().join("phi.csv"));
    assert_eq!(phi.rows.len(), 256);
    let v = phi.column("v").unwrap();
    let f = phi.column("phi").unwrap();
    assert!(f.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(v[255], 1.0);

    let psi_text = read(dir.path().join("psi.csv"));
    assert_header(&psi_text);
    let band = psi_text.lines().find(|l| l.starts_with("# band")).unwrap();
    let field = |key: &str| -> f64 { band.split(key).nth(1).unwrap().split(' ').next().unwrap().parse().unwrap() };
    let (lo, hi) = (field("phi(1)="), field("phi(0)="));
    assert_eq!(lo, f[255]);
    assert!(hi > f[0]);
    let psi = Table::parse(&psi_text).unwrap();
    for (rho, p) in psi.column("rho").unwrap().iter().zip(psi.column("psi").unwrap()) {
        if *rho < lo {
            assert_eq!(p, 1.0);
        }
        if *rho >= hi {
            assert_eq!(p, 0.0);
        }
        assert!((0.0..=1.0).contains(&p));
    }
    let gamma = table(dir.path().join("gamma.csv"));
    assert_eq!(gamma.column("gamma").unwrap()[0], 1.0);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["transfer", "--snr-db", "6.7", "--subcarriers", "32"];
    run(a.path(), &args);
    run(b.path(), &[&args[..], &["--threads", "1"]].concat());
    for name in ["phi.csv", "psi.csv", "gamma.csv"] {
        assert_eq!(read(a.path().join(name)), read(b.path().join(name)), "{name}");
    }
    let sim = ["simulate", "--snr-db", "6.7", "--subcarriers", "64", "--block-len", "256", "--constellation", "qpsk", "--trials", "3", "--psi-gap", "0.05"];
    run(a.path(), &sim);
    run(b.path(), &sim);
    for name in ["simulate_summary.csv", "simulate_p0_t2.csv", "simulate_p0_t2.json"] {
        assert_eq!(read(a.path().join(name)), read(b.path().join(name)), "{name}");
    }
}

#[test]
fn simulate_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["simulate", "--snr-db", "6.7", "--subcarriers", "64", "--block-len", "512", "--constellation", "qpsk", "--psi-gap", "0.05"]);
    let report: serde_json::Value = serde_json::from_str(&read(dir.path().join("simulate_p0_t0.json"))).unwrap();
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(report["body"]["block_len"], 512);
    assert_eq!(report["body"]["converged"], true);
    assert!(report["body"].get("elapsed_seconds").is_none());
    let trace = table(dir.path().join("simulate_p0_t0.csv"));
    assert_eq!(trace.header, ["iter", "v_meas", "rho_meas", "v_pred", "rho_pred"]);
    let summary = table(dir.path().join("simulate_summary.csv"));
    assert_eq!(summary.column("symbol_errors").unwrap(), [0.0]);
}

#[test]
fn scm_ladder_examples() {
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat.csv");
    std::fs::write(&flat, "rho,psi\n0,0.5\n10,0.5\n").unwrap();
    let arg = format!("csv:{}", flat.display());
    run(dir.path(), &["scm-ladder", "--psi", &arg, "--layers", "10"]);
    let t = table(dir.path().join("ladder.csv"));
    assert!(t.column("dp_i").unwrap().iter().all(|d| *d == 0.0));
    assert!(t.column("rate_i").unwrap().iter().all(|r| *r == 0.0));

    run(dir.path(), &["scm-ladder", "--psi", "inverse-square", "--layers", "1000", "--rho-max", "50"]);
    let text = read(dir.path().join("ladder.csv"));
    assert_header(&text);
    let total: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("# total_rate_bits="))
        .unwrap()
        .parse()
        .unwrap();
    let t = Table::parse(&text).unwrap();
    assert_eq!(t.header, ["i", "r_i", "p_i", "dp_i", "rate_i", "linear_rate_i"]);
    assert!((t.column("rate_i").unwrap().iter().sum::<f64>() - total).abs() < 1e-9);
}

#[test]
fn optimize_precoder_meets_budget() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["optimize-precoder", "--snr-db", "0,10", "--subcarriers", "4", "--power", "2"]);
    let t = table(dir.path().join("allocation.csv"));
    for db in [0.0, 10.0] {
        let w: Vec<f64> = t.rows.iter().filter(|r| r[0] == db).map(|r| r[3]).collect();
        assert_eq!(w.len(), 8);
        assert!((w.iter().sum::<f64>() / 8.0 - 2.0).abs() < 1e-9);
    }
    let doc: serde_json::Value = serde_json::from_str(&read(dir.path().join("precoder.json"))).unwrap();
    assert_eq!(doc["body"]["points"].as_array().unwrap().len(), 2);

    run(dir.path(), &["optimize-precoder", "--snr-db", "0", "--theta", "0.5", "--samples", "100"]);
    let doc: serde_json::Value = serde_json::from_str(&read(dir.path().join("precoder.json"))).unwrap();
    let q = &doc["body"]["points"][0]["q_re"];
    let trace = q[0][0].as_f64().unwrap() + q[1][1].as_f64().unwrap();
    assert!((trace - 2.0).abs() < 1e-6, "trace {trace}");
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"snr_db": [0.0, 3.0], "subcarriers": 8, "constellation": "gaussian", "seed": 4}"#).unwrap();
    let cfg_arg = cfg.to_str().unwrap();
    run(dir.path(), &["rates", "--config", cfg_arg]);
    let text = read(dir.path().join("rates.csv"));
    assert!(text.lines().next().unwrap().ends_with("seed=4"));
    assert_eq!(Table::parse(&text).unwrap().rows.len(), 2);
    run(dir.path(), &["rates", "--config", cfg_arg, "--seed", "9", "--snr-db", "1"]);
    let text = read(dir.path().join("rates.csv"));
    assert!(text.lines().next().unwrap().ends_with("seed=9"));
    assert_eq!(Table::parse(&text).unwrap().column("snr_db").unwrap(), [1.0]);
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["rates", "--snr-db", "5,1", "--out-dir"]).arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("config.snr_db[1]"));
    let out = bin().args(["simulate", "--constellation", "gaussian", "--out-dir"]).arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("config.constellation"));
}
