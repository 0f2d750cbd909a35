//! Automatic expected block length for the stationary bootstrap, using the
//! flat-top lag-window rule with the corrected stationary-bootstrap constant.

use crate::quantile::TimeSeries;
use crate::{Error, Result};

/// Outcome of the automatic tuning of `gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaChoice {
    pub gamma: f64,
    /// Estimated expected block length per series; `None` where the rule degenerated.
    pub block_lengths: [Option<f64>; 2],
    /// Set when at least one series fell back to `1/ceil(T^(1/3))`.
    pub fallback: bool,
}

fn flat_top(x: f64) -> f64 {
    let x = x.abs();
    if x <= 0.5 {
        1.0
    } else if x <= 1.0 {
        2.0 * (1.0 - x)
    } else {
        0.0
    }
}

/// Sample autocovariances `R(0..=max_lag)` with divisor `n`.
fn autocovariances(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    (0..=max_lag)
        .map(|k| d[k..].iter().zip(&d[..n - k]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

/// Optimal expected block length for the stationary bootstrap of one series,
/// or `None` if the spectral estimate at frequency zero degenerates.
pub fn optimal_block_length(x: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 4 {
        return None;
    }
    let nf = n as f64;
    let kn = 5usize.max(nf.log10().sqrt().ceil() as usize);
    let m_max = (nf.sqrt().ceil() as usize + kn).min(n - 1);
    let b_max = (3.0 * nf.sqrt()).min(nf / 3.0).ceil();
    let c = 2.0;

    let acv = autocovariances(x, m_max);
    if acv[0] <= 0.0 {
        return None;
    }
    let acf: Vec<f64> = acv[1..].iter().map(|r| r / acv[0]).collect();
    let bound = c * (nf.log10() / nf).sqrt();
    let insignificant: Vec<bool> = acf.iter().map(|r| r.abs() < bound).collect();

    // first lag m starting a run of kn insignificant autocorrelations
    let m_hat = (0..insignificant.len().saturating_sub(kn - 1))
        .find(|&i| insignificant[i..i + kn].iter().all(|&b| b))
        .map(|i| i + 1)
        .or_else(|| insignificant.iter().rposition(|&b| !b).map(|i| i + 1))
        .unwrap_or(1);
    let m = (2 * m_hat).min(m_max);

    let mut g = 0.0;
    let mut s = acv[0];
    for k in 1..=m {
        let w = flat_top(k as f64 / m as f64);
        g += 2.0 * w * k as f64 * acv[k];
        s += 2.0 * w * acv[k];
    }
    let d_sb = 2.0 * s * s;
    if !(d_sb > 0.0) || !d_sb.is_finite() {
        return None;
    }
    let b = (2.0 * g * g / d_sb).cbrt() * nf.cbrt();
    b.is_finite().then_some(b.min(b_max))
}

/// `gamma` as the average of `1/b_i` over both series, clamped to `[1/T, 0.5]`.
pub fn choose_gamma(x1: &TimeSeries, x2: &TimeSeries) -> Result<GammaChoice> {
    let t = x1.len();
    if x2.len() != t {
        return Err(Error::InvalidSeries("series lengths differ".into()));
    }
    if t < 20 {
        return Err(Error::InvalidParameter(format!("automatic gamma needs T >= 20, got {t}")));
    }
    let fallback_gamma = 1.0 / (t as f64).cbrt().ceil();
    let b1 = optimal_block_length(x1.as_slice());
    let b2 = optimal_block_length(x2.as_slice());
    let inv = |b: Option<f64>| b.map_or(fallback_gamma, |b| 1.0 / b);
    let gamma = ((inv(b1) + inv(b2)) / 2.0).clamp(1.0 / t as f64, 0.5);
    Ok(GammaChoice { gamma, block_lengths: [b1, b2], fallback: b1.is_none() || b2.is_none() })
}
