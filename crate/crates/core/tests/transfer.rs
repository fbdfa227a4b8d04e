mod common;

use std::f64::consts::LN_2;

use common::{c, gaussian_matrix, gaussian_vector, log2_det, mean_log2_1p};
use lplmmse::channel::{svd_decompose, FadingEnsemble};
use lplmmse::constellation::gamma;
use lplmmse::detector::mmse_diagonal;
use lplmmse::linalg::{from_eig, CMat};
use lplmmse::montecarlo::Link;
use lplmmse::precoder::{build_partial_csit, build_permutation, sqrt_psd, waterfill};
use lplmmse::rng::stream_rng;
use lplmmse::transfer::{
    fixed_point, matched_psi, phi_full, phi_partial, rate_from_psi, rate_gaussian, rate_constellation, rate_partial_gaussian, Curve,
    Direction, FnCurve, Phi, TransferCurve,
};
use lplmmse::{Constellation, Error, GammaCurve};
use proptest::prelude::*;

#[test]
fn phi_equal_gains_is_constant() {
    let phi = Phi::full(&[1.5; 4], 0.25).unwrap();
    for v in [0.0, 1e-3, 0.2, 0.7, 1.0] {
        assert!((phi.eval(v) - 9.0).abs() < 1e-12);
    }
}

#[test]
fn phi_zero_gains_is_zero() {
    let phi = Phi::full(&[0.0, 0.0], 1.0).unwrap();
    for v in [0.0, 0.5, 1.0] {
        assert_eq!(phi.eval(v), 0.0);
    }
}

#[test]
fn phi_matches_detector_sinr() {
    let d = [1.0, 2.0];
    for v in [0.1, 0.5, 1.0] {
        let m = mmse_diagonal(&d, v, 1.0).unwrap();
        let expect = 1.0 / m - 1.0 / v;
        assert!((phi_full(v, &d, 1.0).unwrap() - expect).abs() < 1e-12);
        // By hand: M = (1/(1/v+1) + 1/(1/v+4)) / 2.
        let hand = 1.0 / (0.5 * (1.0 / (1.0 / v + 1.0) + 1.0 / (1.0 / v + 4.0))) - 1.0 / v;
        assert!((expect - hand).abs() < 1e-12);
    }
}

#[test]
fn phi_partial_zero_covariance() {
    let mut rng = stream_rng(1, 0);
    let samples: Vec<CMat> = (0..20).map(|_| gaussian_matrix(2, 2, 1.0, &mut rng)).collect();
    let q = CMat::zeros(2, 2);
    assert_eq!(phi_partial(0.5, &samples, &q, 1.0).unwrap(), 0.0);
}

#[test]
fn phi_partial_single_channel_reduces_to_full() {
    let mut rng = stream_rng(2, 0);
    let h = gaussian_matrix(3, 3, 1.0, &mut rng);
    let svd = svd_decompose(&h);
    let lambda2: Vec<f64> = svd.gains.iter().map(|g| g * g).collect();
    let alloc = waterfill(&lambda2, 0.5, 1.0).unwrap();
    let q = from_eig(&alloc.w, &svd.v);
    let d: Vec<f64> = lambda2.iter().zip(&alloc.w).map(|(l, w)| (l * w).sqrt()).collect();
    for v in [0.05, 0.4, 1.0] {
        let a = phi_partial(v, std::slice::from_ref(&h), &q, 0.5).unwrap();
        let b = phi_full(v, &d, 0.5).unwrap();
        assert!((a - b).abs() < 1e-9 * b.max(1.0), "{a} vs {b}");
    }
}

/// Averages the per-block detector MMSE of the finite precoded system over
/// many frames and compares `1/mmse - 1/v` with the ensemble map.
#[test]
fn phi_partial_matches_finite_system() {
    let (n, j, sigma2, v) = (2, 64, 0.5, 0.4);
    let l = j / n;
    let ens = FadingEnsemble::new(n, n, 0.5, 3, 0).unwrap();
    let reference = ens.samples(20_000, 3, 1);
    let q = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.3, 0.0), c(0.7, 0.0)]));
    let p = sqrt_psd(&q);
    let perm = build_permutation(j, n).unwrap();
    let mut rng = stream_rng(3, 2);
    let frames = 200;
    let mut mmse = 0.0;
    for _ in 0..frames {
        let channels = ens.sample_with(l, &mut rng);
        let link = Link::partial(build_partial_csit(&p, &perm, channels, 1.0).unwrap(), sigma2).unwrap();
        let y = gaussian_vector(l * n, 1.0, &mut rng);
        let x_bar = gaussian_vector(j, 0.1, &mut rng);
        mmse += link.model().lmmse(&y, &x_bar, v, sigma2).unwrap().mmse;
    }
    let finite = 1.0 / (mmse / frames as f64) - 1.0 / v;
    let ensemble = phi_partial(v, &reference, &q, sigma2).unwrap();
    assert!((finite / ensemble - 1.0).abs() < 0.01, "finite {finite} vs ensemble {ensemble}");
}

#[test]
fn matched_psi_of_constant_phi_is_a_step() {
    let phi = Phi::full(&[2.0, 2.0], 1.0).unwrap();
    let psi = matched_psi(&phi).unwrap();
    assert_eq!(psi.band(), (4.0, 4.0));
    assert_eq!(psi.eval(3.999), 1.0);
    assert_eq!(psi.eval(4.0), 0.0);
    assert_eq!(psi.eval(10.0), 0.0);
}

#[test]
fn matched_psi_inverts_phi() {
    let phi = Phi::full(&[0.3, 1.0, 2.5], 0.2).unwrap();
    let psi = matched_psi(&phi).unwrap();
    assert_eq!(psi.eval(0.0), 1.0);
    for k in 1..50 {
        let v = k as f64 / 50.0;
        assert!((psi.eval(phi.eval(v)) - v).abs() < 1e-8);
    }
}

#[test]
fn fixed_point_limits() {
    let phi = Phi::full(&[1.0, 2.0], 0.5).unwrap();
    let perfect = fixed_point(|v| phi.eval(v), |_| 0.0, 1.0, 1e-9, 100);
    assert_eq!(perfect.iterations.len(), 1);
    assert_eq!(perfect.v_star, 0.0);
    assert!(perfect.converged);

    let useless = fixed_point(|v| phi.eval(v), |_| 1.0, 1.0, 1e-9, 100);
    assert_eq!(useless.v_star, 1.0);
    assert!(useless.converged);

    let psi = matched_psi(&phi).unwrap();
    let gap = fixed_point(|v| phi.eval(v), |r| psi.eval(r) - 1e-3, 1.0, 1e-12, 100_000);
    assert!(gap.converged);
    assert!(gap.v_star < 1e-2, "v* = {}", gap.v_star);
}

#[test]
fn rate_from_constant_phi() {
    for s in [0.5, 3.0, 20.0] {
        let phi = Phi::from_snr(vec![s]).unwrap();
        let psi = matched_psi(&phi).unwrap();
        let r = rate_from_psi(&psi).unwrap();
        assert!((r - (1.0 + s).log2()).abs() < 1e-9);
    }
}

#[test]
fn rate_from_inverse_square_curve() {
    let psi = FnCurve::new(|r: f64| (1.0 + r).powi(-2));
    // ∫ dρ / (ρ² + 3ρ + 1) over [0, ∞) with roots (-3 ± √5)/2.
    let s5 = 5f64.sqrt();
    let (r1, r2) = ((-3.0 + s5) / 2.0, (-3.0 - s5) / 2.0);
    let exact = -((-r1) / (-r2)).ln() / s5 / LN_2;
    let got = rate_from_psi(&psi).unwrap();
    assert!((got - exact).abs() < 1e-6, "{got} vs {exact}");
}

#[test]
fn rate_from_zero_curve() {
    let psi = FnCurve::new(|_| 0.0);
    assert_eq!(rate_from_psi(&psi).unwrap(), 0.0);
}

#[test]
fn rate_from_slowly_decaying_curve_diverges() {
    let psi = FnCurve::new(|r: f64| 1.0 / (1.0 + r).sqrt());
    assert!(matches!(rate_from_psi(&psi), Err(Error::Divergent(_))));
}

#[test]
fn gaussian_rate_examples() {
    assert!((rate_gaussian(&[1.0], 1.0).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(rate_gaussian(&[0.0, 0.0], 1.0).unwrap(), 0.0);
    let d = [1.0, 2.0];
    let expect = mean_log2_1p(&[1.0, 4.0]);
    assert!((rate_gaussian(&d, 1.0).unwrap() - expect).abs() < 1e-14);
    let psi = matched_psi(&Phi::full(&d, 1.0).unwrap()).unwrap();
    assert!((rate_from_psi(&psi).unwrap() - expect).abs() < 1e-7);
}

/// ∫_0^s γ(ρ) dρ by composite Simpson on the direct γ evaluation.
fn gamma_integral(c: &Constellation, s: f64) -> f64 {
    let n = 2000;
    let h = s / n as f64;
    let mut acc = gamma(c, 0.0).unwrap() + gamma(c, s).unwrap();
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * gamma(c, k as f64 * h).unwrap();
    }
    acc * h / 3.0 / LN_2
}

#[test]
fn constellation_rate_constant_phi_is_constellation_mutual_information() {
    let qpsk = Constellation::qpsk();
    let g = GammaCurve::build(&qpsk).unwrap();
    for s in [0.5, 2.0, 6.0] {
        let phi = Phi::from_snr(vec![s]).unwrap();
        let got = rate_constellation(&phi, &g).unwrap();
        let oracle = gamma_integral(&qpsk, s);
        assert!((got - oracle).abs() < 1e-5, "s = {s}: {got} vs {oracle}");
    }
}

#[test]
fn constellation_rate_limits() {
    for c in [Constellation::qpsk(), Constellation::qam16()] {
        let g = GammaCurve::build(&c).unwrap();
        let high = rate_constellation(&Phi::from_snr(vec![1e12]).unwrap(), &g).unwrap();
        assert!((high - c.log_cardinality() / LN_2).abs() < 1e-6, "{high}");
        let zero = rate_constellation(&Phi::from_snr(vec![0.0]).unwrap(), &g).unwrap();
        assert!(zero.abs() < 1e-8, "{zero:e}");
    }
}

#[test]
fn constellation_rate_with_gaussian_gamma_is_gaussian_rate() {
    let d = [0.4, 1.0, 1.7];
    for sigma2 in [0.1, 1.0] {
        let phi = Phi::full(&d, sigma2).unwrap();
        let a = rate_constellation(&phi, &GammaCurve::gaussian()).unwrap();
        let b = rate_gaussian(&d, sigma2).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn partial_rate_reductions() {
    let mut rng = stream_rng(5, 0);
    let h = gaussian_matrix(2, 2, 1.0, &mut rng);
    let svd = svd_decompose(&h);
    let lambda2: Vec<f64> = svd.gains.iter().map(|g| g * g).collect();
    let alloc = waterfill(&lambda2, 0.3, 1.0).unwrap();
    let q = from_eig(&alloc.w, &svd.v);
    let d: Vec<f64> = lambda2.iter().zip(&alloc.w).map(|(l, w)| (l * w).sqrt()).collect();
    let t3 = rate_partial_gaussian(std::slice::from_ref(&h), &q, 0.3).unwrap();
    assert!((t3 - rate_gaussian(&d, 0.3).unwrap()).abs() < 1e-10);
    assert_eq!(rate_partial_gaussian(std::slice::from_ref(&h), &CMat::zeros(2, 2), 0.3).unwrap(), 0.0);

    let samples: Vec<CMat> = (0..50).map(|_| gaussian_matrix(3, 2, 1.0, &mut rng)).collect();
    let g = gaussian_matrix(2, 2, 1.0, &mut rng);
    let q = &g * g.adjoint();
    let oracle = samples.iter().map(|h| log2_det(h, &q, 0.7)).sum::<f64>() / (50.0 * 2.0);
    assert!((rate_partial_gaussian(&samples, &q, 0.7).unwrap() - oracle).abs() < 1e-10);
}

#[test]
fn rates_ordered_across_snr() {
    let qpsk = GammaCurve::build(&Constellation::qpsk()).unwrap();
    let qam = GammaCurve::build(&Constellation::qam16()).unwrap();
    let d = [0.3, 0.8, 1.2, 1.6];
    for db in (-10..=30).step_by(5) {
        let sigma2 = 10f64.powf(-db as f64 / 10.0);
        let phi = Phi::full(&d, sigma2).unwrap();
        let r1 = rate_gaussian(&d, sigma2).unwrap();
        let rq = rate_constellation(&phi, &qpsk).unwrap();
        let r16 = rate_constellation(&phi, &qam).unwrap();
        assert!(rq <= r1 + 1e-9 && r16 <= r1 + 1e-9, "{db} dB: {rq} {r16} {r1}");
        assert!(rq <= 2.0 + 1e-9 && r16 <= 4.0 + 1e-9);
        assert!(rq <= r16 + 1e-9, "{db} dB: {rq} > {r16}");
    }
}

#[test]
fn rates_increase_with_snr_and_gain() {
    let qpsk = GammaCurve::build(&Constellation::qpsk()).unwrap();
    let mut prev = (0.0, 0.0);
    for k in 0..12 {
        let sigma2 = 2f64.powi(-k + 4);
        let d = [0.5, 1.0];
        let r1 = rate_gaussian(&d, sigma2).unwrap();
        let r2 = rate_constellation(&Phi::full(&d, sigma2).unwrap(), &qpsk).unwrap();
        assert!(r1 > prev.0 && r2 > prev.1 - 1e-9);
        prev = (r1, r2);
    }
    let low = rate_constellation(&Phi::full(&[0.5, 1.0], 1.0).unwrap(), &qpsk).unwrap();
    let high = rate_constellation(&Phi::full(&[0.6, 1.0], 1.0).unwrap(), &qpsk).unwrap();
    assert!(high > low);
}

#[test]
fn sampled_curve_validation() {
    assert!(TransferCurve::new(Direction::Psi, vec![0.0, 1.0], vec![0.5, 0.7]).is_err());
    assert!(TransferCurve::new(Direction::Psi, vec![0.0, 1.0], vec![1.2, 0.7]).is_err());
    assert!(TransferCurve::new(Direction::Phi, vec![1.0, 0.0], vec![0.0, 1.0]).is_err());
    let psi = TransferCurve::new(Direction::Psi, vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.0]).unwrap();
    assert_eq!(psi.support_end(), Some(2.0));
    assert!((psi.eval(1.0) - 0.5).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chart_trajectory_is_monotone(
        gains in proptest::collection::vec(0.1f64..3.0, 1..6),
        sigma2 in 0.05f64..2.0,
        gap in 0.0f64..0.2,
    ) {
        let phi = Phi::full(&gains, sigma2).unwrap();
        let psi = matched_psi(&phi).unwrap();
        let trace = fixed_point(|v| phi.eval(v), |r| psi.eval(r) - gap, 1.0, 1e-10, 2000);
        let mut v_prev = 1.0;
        let mut rho_prev = 0.0;
        for &(rho, v) in &trace.iterations {
            prop_assert!(v <= v_prev + 1e-12);
            prop_assert!(rho >= rho_prev - 1e-9 * rho.max(1.0));
            v_prev = v;
            rho_prev = rho;
        }
    }

    #[test]
    fn phi_is_increasing_in_snr_and_decreasing_in_v(
        gains in proptest::collection::vec(0.0f64..3.0, 1..6),
        v in 0.01f64..1.0,
    ) {
        let phi = Phi::full(&gains, 1.0).unwrap();
        let louder = Phi::full(&gains, 0.5).unwrap();
        prop_assert!(louder.eval(v) >= phi.eval(v) - 1e-12);
        prop_assert!(phi.eval(v) <= phi.eval(v * 0.5) + 1e-12);
    }
}
