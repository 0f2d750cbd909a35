//! Stationary bootstrap for the cross-quantilogram.
//!
//! The resampling unit is a row of the lag-aligned panel
//! `(x1_t, x2_{t-1}, ..., x2_{t-p})`, `t = p+1..T`, so a single resample
//! serves every lag coherently. Blocks start at uniform rows, have geometric
//! lengths with mean `1/gamma`, and wrap around the end of the panel.
//! Quantiles are re-estimated on each resample.

mod block_length;

pub use block_length::{choose_gamma, optimal_block_length, GammaChoice};

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cqgram::{cq_vector, CqResult, HitCounts, Portmanteau, QuantileGrid, QuantilePair};
use crate::quantile::{order_index, TimeSeries};
use crate::report::{LagInterval, Method, ReportConfig, TestReport};
use crate::rng::substream;
use crate::{Error, Result};

/// Redraws allowed for a degenerate replicate before giving up.
pub const MAX_REDRAWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbConfig {
    /// Geometric parameter; expected block length is `1/gamma`.
    pub gamma: f64,
    /// Number of bootstrap replicates `B`.
    pub replicates: usize,
    pub seed: u64,
    /// Significance level.
    pub tau: f64,
}

impl SbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParameter(format!("gamma {} outside (0,1)", self.gamma)));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("bootstrap needs B >= 1".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidParameter(format!("tau {} outside (0,1)", self.tau)));
        }
        Ok(())
    }
}

/// Rows of observation tuples drawn verbatim from the original sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPanel {
    width: usize,
    data: Vec<f64>,
}

impl AlignedPanel {
    /// Rows `(x1_t, x2_{t-1}, ..., x2_{t-p})` for `t = p+1..T`.
    pub fn lagged(x1: &[f64], x2: &[f64], p: usize) -> Result<Self> {
        let t = x1.len();
        if x2.len() != t || p == 0 || p >= t {
            return Err(Error::InvalidParameter(format!(
                "cannot align lags 1..={p} on series of lengths {} and {}",
                t,
                x2.len()
            )));
        }
        let mut data = Vec::with_capacity((t - p) * (p + 1));
        for i in p..t {
            data.push(x1[i]);
            data.extend((1..=p).map(|k| x2[i - k]));
        }
        Ok(Self { width: p + 1, data })
    }

    /// Rows `(x1_t, x2_{t-k}, z_{1t}, ..., z_{lt})` for `t = k+1..T`.
    pub fn with_controls(x1: &[f64], x2: &[f64], k: usize, controls: &[&[f64]]) -> Result<Self> {
        let t = x1.len();
        if x2.len() != t || controls.iter().any(|z| z.len() != t) || k >= t {
            return Err(Error::InvalidParameter("misaligned series for partial panel".into()));
        }
        let mut data = Vec::with_capacity((t - k) * (2 + controls.len()));
        for i in k..t {
            data.push(x1[i]);
            data.push(x2[i - k]);
            data.extend(controls.iter().map(|z| z[i]));
        }
        Ok(Self { width: 2 + controls.len(), data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidParameter("ragged or empty panel".into()));
        }
        Ok(Self { width, data: rows.concat() })
    }

    pub fn row_count(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.width)
    }

    pub fn select(&self, indices: &[usize]) -> AlignedPanel {
        let mut data = Vec::with_capacity(indices.len() * self.width);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        AlignedPanel { width: self.width, data }
    }

    pub(crate) fn gather_column(&self, indices: &[usize], col: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend(indices.iter().map(|&i| self.data[i * self.width + col]));
    }
}

/// Geometric block lengths on `{1, 2, ...}` until their sum first reaches `needed_total`.
pub fn sb_block_lengths<R: Rng + ?Sized>(rng: &mut R, needed_total: usize, gamma: f64) -> Vec<usize> {
    let geom = Geometric::new(gamma).expect("gamma in (0,1)");
    let mut lengths = Vec::new();
    let mut total = 0;
    while total < needed_total {
        let l = 1 + geom.sample(rng) as usize;
        total += l;
        lengths.push(l);
    }
    lengths
}

/// Row indices of one stationary-bootstrap resample of `row_count` rows.
pub fn sb_resample_indices<R: Rng + ?Sized>(row_count: usize, gamma: f64, rng: &mut R) -> Vec<usize> {
    let lengths = sb_block_lengths(rng, row_count, gamma);
    let mut idx = Vec::with_capacity(row_count + lengths.last().copied().unwrap_or(0));
    for l in lengths {
        let start = rng.random_range(0..row_count);
        idx.extend((0..l).map(|j| (start + j) % row_count));
    }
    idx.truncate(row_count);
    idx
}

pub fn sb_resample<R: Rng + ?Sized>(panel: &AlignedPanel, gamma: f64, rng: &mut R) -> AlignedPanel {
    panel.select(&sb_resample_indices(panel.row_count(), gamma, rng))
}

/// `B` bootstrap cross-quantilogram vectors for one quantile pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDistribution {
    pub pair: QuantilePair,
    /// Original sample length.
    pub t: usize,
    /// Full-sample estimates the replicates are centred on.
    pub rho_hat: Vec<f64>,
    /// `rho_star[b][k-1]`.
    pub rho_star: Vec<Vec<f64>>,
    /// `T |rho*_b - rho_hat|^2` per replicate.
    pub q_star: Vec<f64>,
    pub gamma: f64,
    pub replicates: usize,
    pub seed: u64,
    /// `(replicate, redraws)` for replicates that had to be redrawn.
    pub redraws: Vec<(usize, usize)>,
}

impl BootstrapDistribution {
    pub fn max_lag(&self) -> usize {
        self.rho_hat.len()
    }

    /// Bootstrap portmanteau draws using lags `1..=p`, centred on `rho_hat`.
    pub fn q_star_draws(&self, variant: Portmanteau, p: usize) -> Vec<f64> {
        let mut dev = vec![0.0; p];
        self.rho_star
            .iter()
            .map(|r| {
                for k in 0..p {
                    dev[k] = r[k] - self.rho_hat[k];
                }
                variant.statistic(self.t, &dev)
            })
            .collect()
    }
}

struct ResampleScratch {
    column: Vec<f64>,
    sorted: Vec<f64>,
    h1: Vec<bool>,
    h2: Vec<bool>,
}

impl ResampleScratch {
    fn new() -> Self {
        Self { column: Vec::new(), sorted: Vec::new(), h1: Vec::new(), h2: Vec::new() }
    }

    /// Hit flags of resampled column `col` against its own `a`-quantile.
    fn column_hits(&mut self, panel: &AlignedPanel, idx: &[usize], col: usize, a: f64, first: bool) {
        panel.gather_column(idx, col, &mut self.column);
        self.sorted.clone_from(&self.column);
        self.sorted.sort_unstable_by(f64::total_cmp);
        let q = self.sorted[order_index(self.sorted.len(), a) - 1];
        let out = if first { &mut self.h1 } else { &mut self.h2 };
        out.clear();
        out.extend(self.column.iter().map(|&v| v < q));
    }
}

/// Cross-quantilograms at lags `1..=p` recomputed on resampled rows of a lagged panel.
/// On failure returns the offending lag.
fn resample_rho(
    panel: &AlignedPanel,
    idx: &[usize],
    pairs: &[QuantilePair],
    scratch: &mut ResampleScratch,
) -> std::result::Result<Vec<Vec<f64>>, usize> {
    let p = panel.width() - 1;
    pairs
        .iter()
        .map(|pair| {
            scratch.column_hits(panel, idx, 0, pair.a1.value(), true);
            (1..=p)
                .map(|k| {
                    scratch.column_hits(panel, idx, k, pair.a2.value(), false);
                    HitCounts::tally(&scratch.h1, &scratch.h2)
                        .correlation(pair.a1, pair.a2)
                        .ok_or(k)
                })
                .collect()
        })
        .collect()
}

/// Bootstrap distributions for every pair of a grid, sharing the resamples
/// so that sup-type statistics can be formed replicate by replicate.
pub fn bootstrap_grid(
    x1: &TimeSeries,
    x2: &TimeSeries,
    p: usize,
    grid: &QuantileGrid,
    cfg: &SbConfig,
) -> Result<Vec<BootstrapDistribution>> {
    cfg.validate()?;
    let rho_hat: Vec<CqResult> = grid
        .pairs()
        .iter()
        .map(|&pair| cq_vector(x1, x2, p, pair))
        .collect::<Result<_>>()?;
    let panel = AlignedPanel::lagged(x1.as_slice(), x2.as_slice(), p)?;
    let n = panel.row_count();

    let draws: Vec<(Vec<Vec<f64>>, usize)> = (0..cfg.replicates)
        .into_par_iter()
        .map_init(ResampleScratch::new, |scratch, b| {
            for attempt in 0..=MAX_REDRAWS {
                let mut rng = substream(cfg.seed, &[b as u64, attempt as u64]);
                let idx = sb_resample_indices(n, cfg.gamma, &mut rng);
                if let Ok(r) = resample_rho(&panel, &idx, grid.pairs(), scratch) {
                    return Ok((r, attempt));
                }
            }
            Err(Error::ReplicateExhausted { replicate: b, retries: MAX_REDRAWS })
        })
        .collect::<Result<_>>()?;

    let redraws: Vec<(usize, usize)> = draws
        .iter()
        .enumerate()
        .filter(|(_, (_, a))| *a > 0)
        .map(|(b, (_, a))| (b, *a))
        .collect();

    Ok(rho_hat
        .into_iter()
        .enumerate()
        .map(|(j, cq)| {
            let rho_star: Vec<Vec<f64>> = draws.iter().map(|(r, _)| r[j].clone()).collect();
            let mut dist = BootstrapDistribution {
                pair: cq.pair,
                t: cq.t,
                rho_hat: cq.rho,
                rho_star,
                q_star: Vec::new(),
                gamma: cfg.gamma,
                replicates: cfg.replicates,
                seed: cfg.seed,
                redraws: redraws.clone(),
            };
            dist.q_star = dist.q_star_draws(Portmanteau::BoxPierce, p);
            dist
        })
        .collect())
}

/// Stationary-bootstrap distribution of the cross-quantilogram at lags `1..=p`.
/// Replicate `b` depends only on `(seed, b)`.
pub fn bootstrap_distribution(
    x1: &TimeSeries,
    x2: &TimeSeries,
    p: usize,
    pair: QuantilePair,
    cfg: &SbConfig,
) -> Result<BootstrapDistribution> {
    let grid = QuantileGrid::new(vec![pair])?;
    Ok(bootstrap_grid(x1, x2, p, &grid, cfg)?.remove(0))
}

/// Per-replicate supremum over the grid of the centred portmanteau draws.
pub fn sup_q_draws(dists: &[BootstrapDistribution], variant: Portmanteau, p: usize) -> Vec<f64> {
    let per: Vec<Vec<f64>> = dists.iter().map(|d| d.q_star_draws(variant, p)).collect();
    let b = per.first().map_or(0, Vec::len);
    (0..b)
        .map(|i| per.iter().map(|d| d[i]).fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// The `ceil(level * n)`-th order statistic of `sorted` (one-based, clamped).
fn order_stat(sorted: &[f64], level: f64) -> f64 {
    sorted[order_index(sorted.len(), level) - 1]
}

/// Equal-tailed percentiles `(c1, c2)` of `sqrt(T) (rho*_b(k) - rho_hat(k))`.
fn centred_percentiles(dist: &BootstrapDistribution, k: usize, tau: f64) -> (f64, f64) {
    let root_t = (dist.t as f64).sqrt();
    equal_tail(
        dist.rho_star
            .iter()
            .map(|r| root_t * (r[k - 1] - dist.rho_hat[k - 1]))
            .collect(),
        tau,
    )
}

/// `tau/2` and `1 - tau/2` order statistics of `d`.
pub(crate) fn equal_tail(mut d: Vec<f64>, tau: f64) -> (f64, f64) {
    d.sort_unstable_by(f64::total_cmp);
    (order_stat(&d, tau / 2.0), order_stat(&d, 1.0 - tau / 2.0))
}

pub(crate) fn check_ci_resolution(b: usize, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParameter(format!("tau {tau} outside (0,1)")));
    }
    if (b as f64) * tau < 2.0 {
        return Err(Error::InvalidParameter(format!(
            "B={b} replicates cannot resolve equal-tailed {tau} percentiles"
        )));
    }
    Ok(())
}

/// Per-lag `100(1-tau)%` percentile intervals `[rho + c1/sqrt(T), rho + c2/sqrt(T)]`.
pub fn bootstrap_ci(dist: &BootstrapDistribution, rho_hat: &CqResult, tau: f64) -> Result<Vec<LagInterval>> {
    check_ci_resolution(dist.replicates, tau)?;
    let root_t = (dist.t as f64).sqrt();
    Ok((1..=rho_hat.max_lag().min(dist.max_lag()))
        .map(|k| {
            let (c1, c2) = centred_percentiles(dist, k, tau);
            let r = rho_hat.rho[k - 1];
            LagInterval { k, estimate: r, low: r + c1 / root_t, high: r + c2 / root_t }
        })
        .collect())
}

/// Per-lag acceptance bands `[-c2/sqrt(T), -c1/sqrt(T)]` for `rho(k) = 0`;
/// an estimate lies outside its band exactly when its percentile interval
/// excludes zero.
pub fn bootstrap_null_band(dist: &BootstrapDistribution, tau: f64) -> Result<Vec<LagInterval>> {
    check_ci_resolution(dist.replicates, tau)?;
    let root_t = (dist.t as f64).sqrt();
    Ok((1..=dist.max_lag())
        .map(|k| {
            let (c1, c2) = centred_percentiles(dist, k, tau);
            LagInterval { k, estimate: dist.rho_hat[k - 1], low: -c2 / root_t, high: -c1 / root_t }
        })
        .collect())
}

/// `inf { c : #{draws <= c} / B >= 1 - tau }`, the `ceil((1-tau) B)`-th order statistic.
pub fn bootstrap_critical_value(draws: &[f64], tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParameter(format!("tau {tau} outside (0,1)")));
    }
    if draws.is_empty() || (draws.len() as f64) * tau < 1.0 - 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "need B >= 1/tau draws, got {} for tau={tau}",
            draws.len()
        )));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(order_stat(&sorted, 1.0 - tau))
}

/// Portmanteau test of `rho(1) = ... = rho(p) = 0` with a bootstrap critical value.
pub fn sb_test(
    x1: &TimeSeries,
    x2: &TimeSeries,
    p: usize,
    pair: QuantilePair,
    cfg: &SbConfig,
    variant: Portmanteau,
) -> Result<TestReport> {
    let dist = bootstrap_distribution(x1, x2, p, pair, cfg)?;
    report_from_distribution(&dist, p, cfg, variant)
}

pub(crate) fn report_from_distribution(
    dist: &BootstrapDistribution,
    p: usize,
    cfg: &SbConfig,
    variant: Portmanteau,
) -> Result<TestReport> {
    let statistic = variant.statistic(dist.t, &dist.rho_hat[..p]);
    let critical_value = bootstrap_critical_value(&dist.q_star_draws(variant, p), cfg.tau)?;
    let (intervals, null_bands) = if check_ci_resolution(cfg.replicates, cfg.tau).is_ok() {
        let cq = CqResult {
            pair: dist.pair,
            t: dist.t,
            rho: dist.rho_hat[..p].to_vec(),
            hit_counts: Vec::new(),
        };
        let mut bands = bootstrap_null_band(dist, cfg.tau)?;
        bands.truncate(p);
        (bootstrap_ci(dist, &cq, cfg.tau)?, bands)
    } else {
        (Vec::new(), Vec::new())
    };
    let mut notes = Vec::new();
    if !dist.redraws.is_empty() {
        notes.push(format!("{} degenerate replicates redrawn", dist.redraws.len()));
    }
    Ok(TestReport {
        method: Method::StationaryBootstrap,
        statistic,
        critical_value,
        reject: statistic > critical_value,
        intervals,
        null_bands,
        config: ReportConfig {
            pair: dist.pair,
            t: dist.t,
            p,
            tau: cfg.tau,
            gamma: Some(cfg.gamma),
            replicates: Some(cfg.replicates),
            seed: Some(cfg.seed),
            omega: None,
            betas: None,
        },
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn panel_small() -> AlignedPanel {
        let x1: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let x2: Vec<f64> = (0..12).map(|i| 100.0 + i as f64).collect();
        AlignedPanel::lagged(&x1, &x2, 2).unwrap()
    }

    #[test]
    fn lagged_panel_layout() {
        let p = panel_small();
        assert_eq!(p.row_count(), 10);
        assert_eq!(p.row(0), &[2.0, 101.0, 100.0]);
        assert_eq!(p.row(9), &[11.0, 110.0, 109.0]);
    }

    #[test]
    fn block_lengths_stopping_rule() {
        let mut rng = substream(3, &[]);
        for need in [1, 5, 37, 500] {
            let l = sb_block_lengths(&mut rng, need, 0.2);
            let total: usize = l.iter().sum();
            assert!(total >= need);
            assert!(total - l.last().unwrap() < need);
            assert!(l.iter().all(|&x| x >= 1));
        }
    }

    #[test]
    fn gamma_near_one_gives_unit_blocks() {
        let mut rng = substream(11, &[]);
        let l = sb_block_lengths(&mut rng, 10_000, 0.999_999);
        assert!(l.iter().all(|&x| x == 1));
    }

    #[test]
    fn geometric_mean_matches_inverse_gamma() {
        let mut rng = substream(5, &[]);
        let geom = Geometric::new(0.1).unwrap();
        let n = 100_000;
        let mean = (0..n).map(|_| 1.0 + geom.sample(&mut rng) as f64).sum::<f64>() / n as f64;
        assert!((mean - 10.0).abs() < 0.2, "mean {mean}");
    }

    #[test]
    fn geometric_goodness_of_fit() {
        // chi-square against Geom(gamma) on {1..=12} plus a tail cell
        let gamma = 0.3;
        let mut rng = substream(99, &[]);
        let lengths = sb_block_lengths(&mut rng, 1_000_000, gamma);
        let n = 100_000;
        let cells = 13;
        let mut obs = vec![0usize; cells];
        for &l in &lengths[..n] {
            obs[(l - 1).min(cells - 1)] += 1;
        }
        let mut stat = 0.0;
        for (c, &o) in obs.iter().enumerate() {
            let prob = if c < cells - 1 {
                gamma * (1.0 - gamma).powi(c as i32)
            } else {
                (1.0 - gamma).powi((cells - 1) as i32)
            };
            let e = prob * n as f64;
            stat += (o as f64 - e).powi(2) / e;
        }
        // chi2(12) 99th percentile
        assert!(stat < 26.217, "chi-square {stat}");
    }

    #[test]
    fn resample_rows_are_verbatim_and_deterministic() {
        let panel = panel_small();
        for seed in 0..50 {
            let a = sb_resample(&panel, 0.3, &mut substream(seed, &[]));
            let b = sb_resample(&panel, 0.3, &mut substream(seed, &[]));
            assert_eq!(a, b);
            assert_eq!(a.row_count(), panel.row_count());
            for row in a.rows() {
                assert!(panel.rows().any(|r| r == row));
            }
        }
    }

    #[test]
    fn resample_blocks_wrap_circularly() {
        let panel = panel_small();
        let mut rng = substream(1, &[]);
        let idx = sb_resample_indices(panel.row_count(), 0.01, &mut rng);
        // with long blocks almost every step is +1 mod n, including 9 -> 0
        let steps = idx.windows(2).filter(|w| w[1] == (w[0] + 1) % 10).count();
        assert!(steps >= 7);
        let wrapped = (0..200u64).any(|s| {
            let idx = sb_resample_indices(10, 0.01, &mut substream(s, &[9]));
            idx.windows(2).any(|w| w[0] == 9 && w[1] == 0)
        });
        assert!(wrapped);
    }

    #[test]
    fn critical_value_examples() {
        let draws: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(bootstrap_critical_value(&draws, 0.05).unwrap(), 95.0);
        assert_eq!(bootstrap_critical_value(&[4.2; 40], 0.05).unwrap(), 4.2);
        assert!(bootstrap_critical_value(&draws, 0.01).unwrap() >= bootstrap_critical_value(&draws, 0.05).unwrap());
        assert!(bootstrap_critical_value(&draws[..10], 0.05).is_err());
    }

    fn toy_distribution(star: Vec<f64>, hat: f64) -> BootstrapDistribution {
        let pair = QuantilePair::equal(0.5).unwrap();
        BootstrapDistribution {
            pair,
            t: 100,
            rho_hat: vec![hat],
            q_star: vec![0.0; star.len()],
            replicates: star.len(),
            rho_star: star.into_iter().map(|v| vec![v]).collect(),
            gamma: 0.5,
            seed: 0,
            redraws: vec![],
        }
    }

    #[test]
    fn degenerate_distribution_gives_zero_width_interval() {
        let d = toy_distribution(vec![0.2; 50], 0.2);
        let cq = CqResult { pair: d.pair, t: 100, rho: vec![0.2], hit_counts: vec![] };
        let ci = bootstrap_ci(&d, &cq, 0.05).unwrap();
        assert_eq!((ci[0].low, ci[0].high), (0.2, 0.2));
        assert!(bootstrap_ci(&toy_distribution(vec![0.2; 30], 0.2), &cq, 0.05).is_err());
    }

    #[test]
    fn interval_contains_estimate_when_centred_draws_straddle_zero() {
        let star: Vec<f64> = (0..200).map(|i| 0.1 + (i as f64 - 100.0) / 1000.0).collect();
        let d = toy_distribution(star, 0.1);
        let cq = CqResult { pair: d.pair, t: 100, rho: vec![0.1], hit_counts: vec![] };
        let ci = bootstrap_ci(&d, &cq, 0.05).unwrap()[0];
        assert!(ci.low <= 0.1 && 0.1 <= ci.high);
        let band = bootstrap_null_band(&d, 0.05).unwrap()[0];
        assert!(band.low < 0.0 && band.high > 0.0);
    }
}
