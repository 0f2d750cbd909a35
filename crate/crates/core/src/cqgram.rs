//! The sample cross-quantilogram and its portmanteau statistics.
//!
//! `rho_a(k)` correlates the hit process of `x1` at time `t` with the hit
//! process of `x2` at time `t - k`, using full-sample quantiles and sums over
//! the window `t = k+1..T`. Because each hit takes one of two values, every
//! sum in the ratio is a function of four integer counts; the estimator is
//! evaluated from those counts, which makes it independent of summation
//! order and exactly invariant to monotone transforms of either series.

use serde::{Deserialize, Serialize};

use crate::quantile::{empirical_quantile, QuantileLevel, TimeSeries};
use crate::{Error, Result};

/// Quantile levels of the predicted (`a1`) and predicting (`a2`) series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantilePair {
    pub a1: QuantileLevel,
    pub a2: QuantileLevel,
}

impl QuantilePair {
    pub fn new(a1: f64, a2: f64) -> Result<Self> {
        Ok(Self { a1: QuantileLevel::new(a1)?, a2: QuantileLevel::new(a2)? })
    }

    pub fn equal(a: f64) -> Result<Self> {
        Self::new(a, a)
    }
}

/// Finite discretization of a quantile range `A1 x A2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileGrid {
    pairs: Vec<QuantilePair>,
}

impl QuantileGrid {
    pub fn new(pairs: Vec<QuantilePair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidParameter("empty quantile grid".into()));
        }
        for (i, p) in pairs.iter().enumerate() {
            if pairs[..i].contains(p) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate quantile pair ({}, {})",
                    p.a1.value(),
                    p.a2.value()
                )));
            }
        }
        Ok(Self { pairs })
    }

    /// Cartesian product `a1s x a2s`, in row-major order of `a1s`.
    pub fn product(a1s: &[f64], a2s: &[f64]) -> Result<Self> {
        let mut pairs = Vec::with_capacity(a1s.len() * a2s.len());
        for &a1 in a1s {
            for &a2 in a2s {
                pairs.push(QuantilePair::new(a1, a2)?);
            }
        }
        Self::new(pairs)
    }

    pub fn pairs(&self) -> &[QuantilePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Hit counts over one lag window: `n` rows, `hits1 = #{x1_t < q1}`,
/// `hits2 = #{x2_{t-k} < q2}`, `joint` = both.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitCounts {
    pub n: usize,
    pub hits1: usize,
    pub hits2: usize,
    pub joint: usize,
}

impl HitCounts {
    /// Tallies the pairs `(h1[i], h2[i])`.
    pub fn tally(h1: &[bool], h2: &[bool]) -> Self {
        debug_assert_eq!(h1.len(), h2.len());
        let mut c = HitCounts { n: h1.len(), ..Default::default() };
        for (&a, &b) in h1.iter().zip(h2) {
            c.hits1 += a as usize;
            c.hits2 += b as usize;
            c.joint += (a && b) as usize;
        }
        c
    }

    /// Correlation of the two hit sequences, `None` when a sum of squared
    /// hits is zero (empty window).
    pub fn correlation(&self, a1: QuantileLevel, a2: QuantileLevel) -> Option<f64> {
        let num = hit_cross_moment(self.n, self.hits1, self.hits2, self.joint, a1.value(), a2.value());
        let d1 = hit_square_sum(self.n, self.hits1, a1.value());
        let d2 = hit_square_sum(self.n, self.hits2, a2.value());
        if d1 == 0.0 || d2 == 0.0 {
            return None;
        }
        Some((num / (d1 * d2).sqrt()).clamp(-1.0, 1.0))
    }
}

/// `sum psi_a(.)^2` over `n` rows of which `hits` are hits.
pub(crate) fn hit_square_sum(n: usize, hits: usize, a: f64) -> f64 {
    let (on, off) = (1.0 - a, -a);
    hits as f64 * (on * on) + (n - hits) as f64 * (off * off)
}

/// `sum psi_a(.) psi_b(.)` from the four cell counts of a 2x2 hit table.
pub(crate) fn hit_cross_moment(n: usize, hits1: usize, hits2: usize, joint: usize, a: f64, b: f64) -> f64 {
    let (on1, off1) = (1.0 - a, -a);
    let (on2, off2) = (1.0 - b, -b);
    let only1 = hits1 - joint;
    let only2 = hits2 - joint;
    let neither = n + joint - hits1 - hits2;
    joint as f64 * (on1 * on2)
        + only1 as f64 * (on1 * off2)
        + only2 as f64 * (off1 * on2)
        + neither as f64 * (off1 * off2)
}

/// Hit flags `x_t < q` for the full-sample `a`-quantile `q`.
pub(crate) fn hit_flags(x: &[f64], a: QuantileLevel) -> Result<Vec<bool>> {
    let q = empirical_quantile(x, a)?;
    Ok(x.iter().map(|&v| v < q).collect())
}

/// Counts for lag `k` given full-length hit flags of both series.
pub(crate) fn lag_counts(h1: &[bool], h2: &[bool], k: usize) -> HitCounts {
    let t = h1.len();
    HitCounts::tally(&h1[k..], &h2[..t - k])
}

/// Cross-quantilogram values `rho_a(1..=p)` with their window hit counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqResult {
    pub pair: QuantilePair,
    /// Sample length `T`.
    pub t: usize,
    /// `rho[k-1]` is the value at lag `k`.
    pub rho: Vec<f64>,
    pub hit_counts: Vec<HitCounts>,
}

impl CqResult {
    pub fn max_lag(&self) -> usize {
        self.rho.len()
    }

    /// First `p` lags; identical to recomputing with max lag `p`.
    pub fn truncated(&self, p: usize) -> CqResult {
        CqResult {
            pair: self.pair,
            t: self.t,
            rho: self.rho[..p].to_vec(),
            hit_counts: self.hit_counts[..p].to_vec(),
        }
    }

    /// Lag with the largest value and that value; ties go to the smaller lag.
    pub fn peak(&self) -> (usize, f64) {
        let mut best = (1, self.rho[0]);
        for (i, &r) in self.rho.iter().enumerate().skip(1) {
            if r > best.1 {
                best = (i + 1, r);
            }
        }
        best
    }
}

fn check_lengths(x1: &TimeSeries, x2: &TimeSeries) -> Result<usize> {
    if x1.len() != x2.len() {
        return Err(Error::InvalidSeries(format!(
            "series lengths differ: {} vs {}",
            x1.len(),
            x2.len()
        )));
    }
    Ok(x1.len())
}

/// Sample cross-quantilogram at lag `k` (`0 <= k <= T-2`).
pub fn cross_quantilogram(x1: &TimeSeries, x2: &TimeSeries, k: usize, pair: QuantilePair) -> Result<f64> {
    let t = check_lengths(x1, x2)?;
    if k + 2 > t {
        return Err(Error::InvalidParameter(format!("lag {k} needs k <= T-2 = {}", t - 2)));
    }
    let h1 = hit_flags(x1.as_slice(), pair.a1)?;
    let h2 = hit_flags(x2.as_slice(), pair.a2)?;
    lag_counts(&h1, &h2, k)
        .correlation(pair.a1, pair.a2)
        .ok_or(Error::ZeroDenominator { lag: k })
}

/// Cross-quantilogram at lags `1..=p`.
pub fn cq_vector(x1: &TimeSeries, x2: &TimeSeries, p: usize, pair: QuantilePair) -> Result<CqResult> {
    let t = check_lengths(x1, x2)?;
    if p == 0 || p + 2 > t {
        return Err(Error::InvalidParameter(format!("max lag p={p} must satisfy 1 <= p <= T-2")));
    }
    let h1 = hit_flags(x1.as_slice(), pair.a1)?;
    let h2 = hit_flags(x2.as_slice(), pair.a2)?;
    let mut rho = Vec::with_capacity(p);
    let mut hit_counts = Vec::with_capacity(p);
    for k in 1..=p {
        let c = lag_counts(&h1, &h2, k);
        rho.push(c.correlation(pair.a1, pair.a2).ok_or(Error::ZeroDenominator { lag: k })?);
        hit_counts.push(c);
    }
    Ok(CqResult { pair, t, rho, hit_counts })
}

/// Portmanteau aggregation of squared cross-quantilograms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Portmanteau {
    BoxPierce,
    BoxLjung,
}

impl Portmanteau {
    /// Statistic for sample length `t` and lag vector `rho` (lag `k` at index `k-1`).
    pub fn statistic(self, t: usize, rho: &[f64]) -> f64 {
        let tf = t as f64;
        match self {
            Portmanteau::BoxPierce => tf * rho.iter().map(|r| r * r).sum::<f64>(),
            Portmanteau::BoxLjung => {
                tf * (tf + 2.0)
                    * rho
                        .iter()
                        .enumerate()
                        .map(|(i, r)| r * r / (tf - (i + 1) as f64))
                        .sum::<f64>()
            }
        }
    }
}

/// `T sum_k rho(k)^2`.
pub fn q_box_pierce(rho: &CqResult) -> f64 {
    Portmanteau::BoxPierce.statistic(rho.t, &rho.rho)
}

/// `T (T+2) sum_k rho(k)^2 / (T-k)`.
pub fn q_box_ljung(rho: &CqResult) -> f64 {
    Portmanteau::BoxLjung.statistic(rho.t, &rho.rho)
}

/// Result of maximizing a portmanteau statistic over a quantile grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SupQ {
    pub value: f64,
    pub argmax: QuantilePair,
    /// Per-pair statistic in grid order, `None` for excluded pairs.
    pub per_pair: Vec<Option<f64>>,
    /// Pairs dropped because their cross-quantilogram was undefined.
    pub excluded: Vec<(QuantilePair, Error)>,
}

/// `sup_{a in grid} Q_a^{(p)}`; ties go to the earliest grid pair.
pub fn sup_q(x1: &TimeSeries, x2: &TimeSeries, p: usize, grid: &QuantileGrid, variant: Portmanteau) -> Result<SupQ> {
    let mut best: Option<(f64, QuantilePair)> = None;
    let mut per_pair = Vec::with_capacity(grid.len());
    let mut excluded = Vec::new();
    for &pair in grid.pairs() {
        match cq_vector(x1, x2, p, pair) {
            Ok(cq) => {
                let q = variant.statistic(cq.t, &cq.rho);
                per_pair.push(Some(q));
                if best.is_none_or(|(b, _)| q > b) {
                    best = Some((q, pair));
                }
            }
            Err(e @ Error::ZeroDenominator { .. }) => {
                per_pair.push(None);
                excluded.push((pair, e));
            }
            Err(e) => return Err(e),
        }
    }
    let (value, argmax) = best.ok_or(Error::AllPairsExcluded)?;
    Ok(SupQ { value, argmax, per_pair, excluded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ts(v: &[f64]) -> TimeSeries {
        TimeSeries::new(v.to_vec()).unwrap()
    }

    #[test]
    fn self_lag_zero_is_one() {
        let x = ts(&[0.3, -1.0, 2.2, 0.7, -0.1, 1.5, -2.0, 0.9]);
        for a in [0.1, 0.25, 0.5, 0.9] {
            let pair = QuantilePair::equal(a).unwrap();
            assert_eq!(cross_quantilogram(&x, &x, 0, pair).unwrap(), 1.0);
        }
    }

    #[test]
    fn three_point_example() {
        let x1 = ts(&[-1.0, 0.0, 1.0]);
        let x2 = ts(&[1.0, 0.0, -1.0]);
        let r = cross_quantilogram(&x1, &x2, 0, QuantilePair::equal(0.5).unwrap()).unwrap();
        assert_abs_diff_eq!(r, -1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn lag_bounds_and_length_mismatch() {
        let x = ts(&[1.0, 2.0, 3.0, 4.0]);
        let pair = QuantilePair::equal(0.5).unwrap();
        assert!(cross_quantilogram(&x, &x, 2, pair).is_ok());
        assert!(cross_quantilogram(&x, &x, 3, pair).is_err());
        assert!(cq_vector(&x, &x, 0, pair).is_err());
        let y = ts(&[1.0, 2.0, 3.0]);
        assert!(matches!(cross_quantilogram(&x, &y, 0, pair), Err(Error::InvalidSeries(_))));
    }

    #[test]
    fn empty_window_is_zero_denominator() {
        let c = HitCounts { n: 0, hits1: 0, hits2: 0, joint: 0 };
        let a = QuantileLevel::new(0.5).unwrap();
        assert_eq!(c.correlation(a, a), None);
    }

    #[test]
    fn portmanteau_examples() {
        let pair = QuantilePair::equal(0.5).unwrap();
        let cq = CqResult { pair, t: 100, rho: vec![0.1, -0.2], hit_counts: vec![HitCounts::default(); 2] };
        assert_abs_diff_eq!(q_box_pierce(&cq), 5.0, epsilon = 1e-12);
        let one = cq.truncated(1);
        assert_abs_diff_eq!(q_box_ljung(&one), 100.0 * 102.0 * 0.01 / 99.0, epsilon = 1e-12);
        let zero = CqResult { rho: vec![0.0; 3], hit_counts: vec![HitCounts::default(); 3], ..cq };
        assert_eq!(q_box_pierce(&zero), 0.0);
        assert_eq!(q_box_ljung(&zero), 0.0);
    }

    #[test]
    fn sup_over_singleton_grid_matches_pair() {
        let x1 = ts(&[0.5, -0.2, 1.3, -1.1, 0.8, 0.1, -0.7, 2.1, -0.4, 0.6, 1.9, -1.6]);
        let x2 = ts(&[1.1, 0.4, -0.9, 0.2, -1.5, 0.7, 1.2, -0.3, 0.9, -2.0, 0.05, 0.35]);
        let pair = QuantilePair::new(0.3, 0.6).unwrap();
        let grid = QuantileGrid::new(vec![pair]).unwrap();
        let s = sup_q(&x1, &x2, 3, &grid, Portmanteau::BoxLjung).unwrap();
        assert_eq!(s.value, q_box_ljung(&cq_vector(&x1, &x2, 3, pair).unwrap()));
        assert_eq!(s.argmax, pair);
    }

    #[test]
    fn grid_rejects_duplicates_and_empty() {
        let p = QuantilePair::equal(0.5).unwrap();
        assert!(QuantileGrid::new(vec![p, p]).is_err());
        assert!(QuantileGrid::new(vec![]).is_err());
        assert_eq!(QuantileGrid::product(&[0.1, 0.2], &[0.5, 0.6, 0.7]).unwrap().len(), 6);
    }

    fn series(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, len)
    }

    proptest! {
        #[test]
        fn values_bounded_and_prefix_consistent(
            (x1, x2) in (5usize..60).prop_flat_map(|n| (series(n..n + 1), series(n..n + 1))),
            a1 in 0.05f64..0.95, a2 in 0.05f64..0.95,
        ) {
            let (x1, x2) = (ts(&x1), ts(&x2));
            let pair = QuantilePair::new(a1, a2).unwrap();
            let p = (x1.len() - 2).min(5);
            let full = cq_vector(&x1, &x2, p, pair).unwrap();
            prop_assert!(full.rho.iter().all(|r| (-1.0..=1.0).contains(r)));
            let short = cq_vector(&x1, &x2, 1.max(p / 2), pair).unwrap();
            prop_assert_eq!(&short, &full.truncated(short.max_lag()));
            prop_assert_eq!(full.rho[0], cross_quantilogram(&x1, &x2, 1, pair).unwrap());
            prop_assert!(q_box_ljung(&full) >= q_box_pierce(&full));
        }

        #[test]
        fn sup_dominates_members(
            (x1, x2) in (12usize..40).prop_flat_map(|n| (series(n..n + 1), series(n..n + 1))),
        ) {
            let (x1, x2) = (ts(&x1), ts(&x2));
            let grid = QuantileGrid::product(&[0.2, 0.5, 0.8], &[0.3, 0.7]).unwrap();
            let s = sup_q(&x1, &x2, 2, &grid, Portmanteau::BoxPierce).unwrap();
            for q in s.per_pair.iter().flatten() {
                prop_assert!(s.value >= *q);
            }
        }
    }
}
