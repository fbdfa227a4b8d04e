//! Residual statistics for the Gaussian-residual claim.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MIN_RESIDUALS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualStats {
    pub count: usize,
    pub mean_re: f64,
    pub mean_im: f64,
    /// `E|n - m|^2`.
    pub variance: f64,
    /// `E|n - m|^4 / (E|n - m|^2)^2 - 2`; zero for circular Gaussian noise.
    pub excess_kurtosis: f64,
    pub excess_kurtosis_re: f64,
    pub excess_kurtosis_im: f64,
    /// Jarque–Bera statistic summed over the real and imaginary parts.
    pub jarque_bera: f64,
    /// Upper tail of the χ²(4) law at `jarque_bera`.
    pub p_value: f64,
    /// `|corr(n, x)|` against the transmitted symbols.
    pub correlation: f64,
}

struct Moments {
    m2: f64,
    m3: f64,
    m4: f64,
}

fn moments(xs: impl Iterator<Item = f64>, n: f64) -> Moments {
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let x2 = x * x;
        m2 += x2;
        m3 += x2 * x;
        m4 += x2 * x2;
    }
    Moments { m2: m2 / n, m3: m3 / n, m4: m4 / n }
}

/// Summary statistics of residuals `n_i = b_i - x_i`.
pub fn gaussianity_report(residuals: &[Complex64], symbols: &[Complex64]) -> Result<ResidualStats> {
    let count = residuals.len();
    if count < MIN_RESIDUALS {
        return Err(Error::TooFewSamples { need: MIN_RESIDUALS, got: count });
    }
    if symbols.len() != count {
        return Err(Error::Dimension("residuals and symbols differ in length".into()));
    }
    let nf = count as f64;
    let mean: Complex64 = residuals.iter().sum::<Complex64>() / nf;
    let centred: Vec<Complex64> = residuals.iter().map(|r| r - mean).collect();
    let variance = centred.iter().map(|c| c.norm_sqr()).sum::<f64>() / nf;
    let fourth = centred.iter().map(|c| c.norm_sqr().powi(2)).sum::<f64>() / nf;
    let re = moments(centred.iter().map(|c| c.re), nf);
    let im = moments(centred.iter().map(|c| c.im), nf);
    let skew = |m: &Moments| m.m3 / m.m2.powf(1.5);
    let kurt = |m: &Moments| m.m4 / (m.m2 * m.m2) - 3.0;
    let jb = |m: &Moments| nf / 6.0 * (skew(m).powi(2) + kurt(m).powi(2) / 4.0);
    let jarque_bera = jb(&re) + jb(&im);

    let xm: Complex64 = symbols.iter().sum::<Complex64>() / nf;
    let cross: Complex64 = centred.iter().zip(symbols).map(|(c, x)| c * (x - xm).conj()).sum();
    let xvar: f64 = symbols.iter().map(|x| (x - xm).norm_sqr()).sum();
    let correlation = cross.norm() / (variance * nf * xvar).sqrt();

    Ok(ResidualStats {
        count,
        mean_re: mean.re,
        mean_im: mean.im,
        variance,
        excess_kurtosis: fourth / (variance * variance) - 2.0,
        excess_kurtosis_re: kurt(&re),
        excess_kurtosis_im: kurt(&im),
        jarque_bera,
        p_value: (-jarque_bera / 2.0).exp() * (1.0 + jarque_bera / 2.0),
        correlation,
    })
}
