//! Unconditional quantiles via the check-loss program.
//!
//! The sample quantile is the left endpoint of the check-loss minimizer
//! interval: the `m`-th order statistic with `m = ceil(T a)`. This is the
//! inf-definition `inf { v : F_T(v) >= a }`, so it commutes exactly with any
//! strictly increasing transform of the data.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A finite-valued observation sequence of length at least two.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidSeries(format!(
                "need at least 2 observations, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!(
                "non-finite value {} at index {i}",
                values[i]
            )));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }

    /// Applies `f` elementwise; fails if the result is not finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.values.iter().map(|&v| f(v)).collect())
    }
}

impl AsRef<[f64]> for TimeSeries {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// A quantile level in the open unit interval.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QuantileLevel(f64);

impl QuantileLevel {
    pub fn new(a: f64) -> Result<Self> {
        if a > 0.0 && a < 1.0 {
            Ok(Self(a))
        } else {
            Err(Error::InvalidParameter(format!("quantile level {a} outside (0,1)")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for QuantileLevel {
    type Error = Error;
    fn try_from(a: f64) -> Result<Self> {
        Self::new(a)
    }
}

impl From<QuantileLevel> for f64 {
    fn from(a: QuantileLevel) -> f64 {
        a.0
    }
}

/// Check loss `u (a - 1[u < 0])`.
pub fn check_loss(u: f64, a: QuantileLevel) -> f64 {
    let a = a.value();
    if u < 0.0 {
        u * (a - 1.0)
    } else {
        u * a
    }
}

/// Quantile hit `1[u < 0] - a`. The inequality is strict, so `psi(0, a) = -a`.
pub fn psi(u: f64, a: QuantileLevel) -> f64 {
    if u < 0.0 {
        1.0 - a.value()
    } else {
        -a.value()
    }
}

/// Smallest integer `m >= n * f`. Products within a relative 1e-9 of an
/// integer are treated as that integer, so decimal levels such as 0.1 give
/// `ceil_mul(10, 0.1) == 1` despite their binary representation.
pub(crate) fn ceil_mul(n: usize, f: f64) -> usize {
    let p = n as f64 * f;
    let r = p.round();
    if (p - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as usize
    } else {
        p.ceil() as usize
    }
}

/// One-based order statistic index of the `a`-quantile in a sample of size `n`.
pub(crate) fn order_index(n: usize, a: f64) -> usize {
    ceil_mul(n, a).clamp(1, n)
}

/// Sample `a`-quantile of `x`: the smallest minimizer of the summed check loss.
pub fn empirical_quantile(x: &[f64], a: QuantileLevel) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::InvalidSeries("empty series".into()));
    }
    let mut buf = x.to_vec();
    Ok(select_quantile(&mut buf, a.value()))
}

/// In-place selection; reorders `buf`.
pub(crate) fn select_quantile(buf: &mut [f64], a: f64) -> f64 {
    let m = order_index(buf.len(), a);
    let (_, v, _) = buf.select_nth_unstable_by(m - 1, f64::total_cmp);
    *v
}

/// Quantiles of every prefix `x[..s]` for `s = ceil(T omega) ..= T`.
pub fn recursive_quantiles(x: &[f64], a: QuantileLevel, omega: f64) -> Result<Vec<f64>> {
    let start = trimmed_start(x.len(), omega)?;
    if start < 2 {
        return Err(Error::InvalidParameter(format!(
            "trimmed start ceil(T omega) = {start} must be at least 2"
        )));
    }
    let mut tracker = HitTracker::new(x, a.value());
    let mut flips = Vec::new();
    let mut out = Vec::with_capacity(x.len() + 1 - start);
    for s in 1..=x.len() {
        tracker.push(&mut flips);
        if s >= start {
            out.push(tracker.quantile());
        }
    }
    Ok(out)
}

/// First subsample size `ceil(T omega)` retained by the trimming.
pub(crate) fn trimmed_start(t: usize, omega: f64) -> Result<usize> {
    if !(omega > 0.0 && omega < 1.0) {
        return Err(Error::InvalidParameter(format!("trimming omega {omega} outside (0,1)")));
    }
    Ok(ceil_mul(t, omega).max(1))
}

/// Fenwick tree over value ranks supporting insertion and k-th smallest.
#[derive(Debug, Clone)]
struct OrderStatTree {
    tree: Vec<u32>,
    top: usize,
}

impl OrderStatTree {
    fn new(size: usize) -> Self {
        let top = if size == 0 { 0 } else { 1 << (usize::BITS - 1 - size.leading_zeros()) };
        Self { tree: vec![0; size + 1], top }
    }

    fn insert(&mut self, rank: usize) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Zero-based rank of the k-th smallest inserted element (k is one-based).
    fn kth(&self, k: usize) -> usize {
        let mut pos = 0;
        let mut rem = k as u32;
        let mut step = self.top;
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && self.tree[next] < rem {
                pos = next;
                rem -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }
}

/// Tracks the prefix quantile of one series and its hit flags `x_i < q_s`
/// as observations arrive one at a time.
#[derive(Debug, Clone)]
pub(crate) struct HitTracker<'a> {
    values: &'a [f64],
    level: f64,
    unique: Vec<f64>,
    rank: Vec<usize>,
    by_rank: Vec<Vec<usize>>,
    tree: OrderStatTree,
    threshold: usize,
    hits: Vec<bool>,
}

impl<'a> HitTracker<'a> {
    pub(crate) fn new(values: &'a [f64], level: f64) -> Self {
        let mut unique = values.to_vec();
        unique.sort_by(f64::total_cmp);
        unique.dedup();
        let rank: Vec<usize> = values
            .iter()
            .map(|v| unique.partition_point(|u| u < v))
            .collect();
        let mut by_rank = vec![Vec::new(); unique.len()];
        for (i, &r) in rank.iter().enumerate() {
            by_rank[r].push(i);
        }
        Self {
            values,
            level,
            tree: OrderStatTree::new(unique.len()),
            unique,
            rank,
            by_rank,
            threshold: 0,
            hits: Vec::with_capacity(values.len()),
        }
    }

    pub(crate) fn seen(&self) -> usize {
        self.hits.len()
    }

    pub(crate) fn hit(&self, i: usize) -> bool {
        self.hits[i]
    }

    pub(crate) fn quantile(&self) -> f64 {
        self.unique[self.threshold]
    }

    /// Admits the next observation. Indices of earlier observations whose
    /// hit flag changed are written to `flips`; the new flag for the
    /// admitted index is set but not reported.
    pub(crate) fn push(&mut self, flips: &mut Vec<usize>) {
        flips.clear();
        let i = self.hits.len();
        debug_assert!(i < self.values.len());
        self.tree.insert(self.rank[i]);
        let new = self.tree.kth(order_index(i + 1, self.level));
        let old = self.threshold;
        if i > 0 && new != old {
            let (lo, hi, to) = if new > old { (old, new, true) } else { (new, old, false) };
            for r in lo..hi {
                let idx = &self.by_rank[r];
                for &j in &idx[..idx.partition_point(|&j| j < i)] {
                    debug_assert_ne!(self.hits[j], to);
                    self.hits[j] = to;
                    flips.push(j);
                }
            }
        }
        self.threshold = new;
        self.hits.push(self.rank[i] < new);
    }
}
