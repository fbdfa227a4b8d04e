//! Channel models: ISI taps to per-subcarrier matrices, the SVD of a MIMO
//! channel, the extended gain ordering, and the mean-feedback fading
//! ensemble.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complete_unitary, CMat};
use crate::rng::{complex_normal, stream_rng, streams};

/// A fixed MIMO channel `y = H x + noise` with noise power `sigma2` per
/// complex dimension.
#[derive(Debug, Clone)]
pub struct MimoChannel {
    pub h: CMat,
    pub sigma2: f64,
}

impl MimoChannel {
    pub fn new(h: CMat, sigma2: f64) -> Result<Self> {
        if h.nrows() == 0 || h.ncols() == 0 {
            return Err(Error::Dimension("channel matrix must be non-empty".into()));
        }
        if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::domain("channel matrix has non-finite entries"));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::domain(format!("noise power must be positive, got {sigma2}")));
        }
        Ok(MimoChannel { h, sigma2 })
    }
}

/// ISI taps `H_0, ..., H_{T-1}`, each `M x N`.
#[derive(Debug, Clone)]
pub struct TapSet {
    m: usize,
    n: usize,
    taps: Vec<CMat>,
}

#[derive(Serialize, Deserialize)]
struct TapFile {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    taps: Vec<Vec<Vec<[f64; 2]>>>,
}

impl TapSet {
    pub fn new(taps: Vec<CMat>) -> Result<Self> {
        let first = taps.first().ok_or_else(|| Error::config("tap set is empty"))?;
        let (m, n) = first.shape();
        if m == 0 || n == 0 {
            return Err(Error::Dimension("taps must be non-empty matrices".into()));
        }
        if taps.iter().any(|t| t.shape() != (m, n)) {
            return Err(Error::Dimension("all taps must share one shape".into()));
        }
        Ok(TapSet { m, n, taps })
    }

    /// Parses `{ "M": .., "N": .., "taps": [ [[ [re, im], .. ], ..], .. ] }`.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: TapFile = serde_json::from_str(text)?;
        let mut taps = Vec::with_capacity(file.taps.len());
        for (l, rows) in file.taps.iter().enumerate() {
            if rows.len() != file.m || rows.iter().any(|r| r.len() != file.n) {
                return Err(Error::Parse(format!("tap {l} is not {}x{}", file.m, file.n)));
            }
            taps.push(DMatrix::from_fn(file.m, file.n, |r, c| {
                let [re, im] = rows[r][c];
                Complex64::new(re, im)
            }));
        }
        TapSet::new(taps)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        TapSet::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = TapFile {
            m: self.m,
            n: self.n,
            taps: self
                .taps
                .iter()
                .map(|t| (0..self.m).map(|r| (0..self.n).map(|c| [t[(r, c)].re, t[(r, c)].im]).collect()).collect())
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn rx(&self) -> usize {
        self.m
    }

    pub fn tx(&self) -> usize {
        self.n
    }

    pub fn taps(&self) -> &[CMat] {
        &self.taps
    }
}

/// Frequency responses `H(k) = sum_l H_l exp(-j 2 pi l k / Jc)`, `k = 0..Jc`.
pub fn isi_to_parallel(taps: &TapSet, subcarriers: usize) -> Result<Vec<CMat>> {
    if subcarriers < taps.taps.len() {
        return Err(Error::config(format!(
            "{} subcarriers cannot carry {} taps",
            subcarriers,
            taps.taps.len()
        )));
    }
    Ok((0..subcarriers)
        .map(|k| {
            let mut acc = CMat::zeros(taps.m, taps.n);
            for (l, tap) in taps.taps.iter().enumerate() {
                let angle = -2.0 * std::f64::consts::PI * ((l * k) % subcarriers) as f64 / subcarriers as f64;
                acc += tap * Complex64::from_polar(1.0, angle);
            }
            acc
        })
        .collect())
}

/// `H = U diag(gains) V^H` with `V` square.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `M x min(M, N)` with orthonormal columns.
    pub u: CMat,
    /// Length `N`, descending; entries past `min(M, N)` are zero.
    pub gains: Vec<f64>,
    /// `N x N` unitary.
    pub v: CMat,
}

/// SVD with a reproducible phase convention: the largest-magnitude entry of
/// each column of `V` is real and positive.
pub fn svd_decompose(h: &CMat) -> Svd {
    let (m, n) = h.shape();
    let r = m.min(n);
    let svd = h.clone().svd(true, true);
    let u_raw = svd.u.expect("requested U");
    let v_raw = svd.v_t.expect("requested V^H").adjoint();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut u = CMat::zeros(m, r);
    let mut v_thin = CMat::zeros(n, r);
    let mut gains = vec![0.0; n];
    for (dst, &src) in order.iter().enumerate() {
        gains[dst] = svd.singular_values[src].max(0.0);
        let vc = v_raw.column(src);
        let pivot = vc.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or(Complex64::new(1.0, 0.0));
        let phase = if pivot.norm() > 0.0 { pivot.conj() / pivot.norm() } else { Complex64::new(1.0, 0.0) };
        v_thin.set_column(dst, &(vc * phase));
        u.set_column(dst, &(u_raw.column(src) * phase));
    }
    let mut v = complete_unitary(&v_thin);
    for c in r..n {
        let pivot = v.column(c).iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
        let phase = pivot.conj() / pivot.norm();
        let col = v.column(c) * phase;
        v.set_column(c, &col);
    }
    Svd { u, gains, v }
}

/// Ordering of the extended (block-diagonal) channel's eigenmodes.
#[derive(Debug, Clone)]
pub struct ExtendedGains {
    /// Gain at each of the `J` positions.
    pub gains: Vec<f64>,
    /// Index into the flattened base list (`subcarrier * N + mode`).
    pub source: Vec<usize>,
    /// Transmit slot `t * N + mode` of the extended channel, where channel
    /// use `t` sees subcarrier `t mod Jc`.
    pub slot: Vec<usize>,
}

/// Lays out `J / (Jc N)` copies of every per-subcarrier gain in a seeded
/// uniformly random order.
pub fn extended_gain_sequence<R: Rng + ?Sized>(groups: &[Vec<f64>], j: usize, rng: &mut R) -> Result<ExtendedGains> {
    let jc = groups.len();
    let n = groups.first().map_or(0, Vec::len);
    if jc == 0 || n == 0 || groups.iter().any(|g| g.len() != n) {
        return Err(Error::config("gain groups must be non-empty and of equal length"));
    }
    if j % (jc * n) != 0 {
        return Err(Error::config(format!("block length {j} is not a multiple of {jc} x {n}")));
    }
    let copies = j / (jc * n);
    let mut source: Vec<usize> = (0..jc * n).flat_map(|b| std::iter::repeat_n(b, copies)).collect();
    source.shuffle(rng);
    let mut used = vec![0usize; jc * n];
    let slot = source
        .iter()
        .map(|&b| {
            let (c, mode) = (b / n, b % n);
            let t = c + jc * used[b];
            used[b] += 1;
            t * n + mode
        })
        .collect();
    let gains = source.iter().map(|&b| groups[b / n][b % n]).collect();
    Ok(ExtendedGains { gains, source, slot })
}

/// Mean-feedback fading: `H = E[H] + dH` with `E[H]` entries `CN(0, theta)`
/// and `dH` entries `CN(0, 1 - theta)`.
#[derive(Debug, Clone)]
pub struct FadingEnsemble {
    theta: f64,
    mean: CMat,
}

impl FadingEnsemble {
    /// Draws the mean part for `frame` from the master `seed`.
    pub fn new(rx: usize, tx: usize, theta: f64, seed: u64, frame: u64) -> Result<Self> {
        check_theta(theta)?;
        let mut rng = stream_rng(seed, streams::fading_mean(frame));
        let mean = DMatrix::from_fn(rx, tx, |_, _| complex_normal(&mut rng, theta));
        Ok(FadingEnsemble { theta, mean })
    }

    pub fn with_mean(mean: CMat, theta: f64) -> Result<Self> {
        check_theta(theta)?;
        Ok(FadingEnsemble { theta, mean })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn mean(&self) -> &CMat {
        &self.mean
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<CMat> {
        let var = 1.0 - self.theta;
        (0..count).map(|_| self.mean.map(|m| m + complex_normal(rng, var))).collect()
    }

    /// `count` draws on the stream reserved for `frame`.
    pub fn samples(&self, count: usize, seed: u64, frame: u64) -> Vec<CMat> {
        self.sample_with(count, &mut stream_rng(seed, streams::fading_delta(frame)))
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(Error::domain(format!("theta must lie in [0, 1], got {theta}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;
    use crate::rng::stream_rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_tap_is_flat() {
        let h0 = CMat::from_row_slice(2, 2, &[c(1.0, 0.5), c(0.0, 1.0), c(-0.3, 0.0), c(2.0, -1.0)]);
        let taps = TapSet::new(vec![h0.clone()]).unwrap();
        for hk in isi_to_parallel(&taps, 4).unwrap() {
            assert!(frobenius(&(hk - &h0)) < 1e-15);
        }
    }

    #[test]
    fn two_point_dft() {
        let one = CMat::from_element(1, 1, c(1.0, 0.0));
        let taps = TapSet::new(vec![one.clone(), one]).unwrap();
        let hs = isi_to_parallel(&taps, 2).unwrap();
        assert!((hs[0][(0, 0)] - c(2.0, 0.0)).norm() < 1e-15);
        assert!(hs[1][(0, 0)].norm() < 1e-15);
        assert!(isi_to_parallel(&taps, 1).is_err());
    }

    #[test]
    fn tap_json_round_trip() {
        let text = r#"{"M":1,"N":2,"taps":[[[[1.0,0.5],[0.0,-1.0]]]]}"#;
        let taps = TapSet::from_json(text).unwrap();
        assert_eq!((taps.rx(), taps.tx()), (1, 2));
        let again = TapSet::from_json(&taps.to_json().unwrap()).unwrap();
        assert_eq!(again.taps()[0], taps.taps()[0]);
        assert!(TapSet::from_json(r#"{"M":2,"N":2,"taps":[[[[1.0,0.0]]]]}"#).is_err());
    }

    #[test]
    fn svd_simple_cases() {
        let s = svd_decompose(&CMat::identity(2, 2));
        assert_eq!(s.gains, vec![1.0, 1.0]);
        let d = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(3.0, 0.0)]);
        let s = svd_decompose(&d);
        assert!((s.gains[0] - 3.0).abs() < 1e-15 && s.gains[1] == 0.0);
    }

    #[test]
    fn wide_channel_gets_padded_gains_and_square_v() {
        let h = CMat::from_row_slice(1, 3, &[c(1.0, 1.0), c(0.5, 0.0), c(0.0, -2.0)]);
        let s = svd_decompose(&h);
        assert_eq!(s.gains.len(), 3);
        assert_eq!(s.gains[1..], [0.0, 0.0]);
        let err = s.v.adjoint() * &s.v - CMat::identity(3, 3);
        assert!(frobenius(&err) < 1e-12);
        let mut lam = CMat::zeros(1, 3);
        lam[(0, 0)] = c(s.gains[0], 0.0);
        assert!(frobenius(&(&s.u * lam * s.v.adjoint() - &h)) < 1e-12);
    }

    #[test]
    fn extended_sequence_copies_and_slots() {
        let mut rng = stream_rng(1, 0);
        let e = extended_gain_sequence(&[vec![2.0, 1.0]], 4, &mut rng).unwrap();
        let mut g = e.gains.clone();
        g.sort_by(f64::total_cmp);
        assert_eq!(g, vec![1.0, 1.0, 2.0, 2.0]);
        let mut slots = e.slot.clone();
        slots.sort();
        assert_eq!(slots, vec![0, 1, 2, 3]);
        for (k, &s) in e.slot.iter().enumerate() {
            assert_eq!(s % 2, e.source[k] % 2);
        }
        assert!(extended_gain_sequence(&[vec![2.0, 1.0]], 5, &mut rng).is_err());
    }

    #[test]
    fn theta_bounds() {
        assert!(FadingEnsemble::new(2, 2, 1.5, 0, 0).is_err());
        let e = FadingEnsemble::new(2, 2, 1.0, 3, 0).unwrap();
        for s in e.samples(5, 3, 0) {
            assert_eq!(&s, e.mean());
        }
        let z = FadingEnsemble::new(2, 2, 0.0, 3, 0).unwrap();
        assert!(z.mean().iter().all(|x| x.norm() == 0.0));
    }
}
