//! One left-to-right pass over prefixes `x[..s]`, maintaining hit counts
//! under prefix quantiles.
//!
//! Each series has a [`HitTracker`]; each window holds a set of columns
//! `(series, offset)` read at rows `t = start..s`, where column `(j, off)`
//! at row `t` is the hit flag of series `j` at time `t - off`. When a prefix
//! quantile moves, only the rows touching flipped observations are
//! re-tallied, so a full pass costs `O(T log T)` for continuous data.

use crate::cqgram::HitCounts;
use crate::quantile::HitTracker;

#[derive(Debug, Clone)]
pub(crate) struct Window {
    cols: Vec<(usize, usize)>,
    start: usize,
    rows: usize,
    single: Vec<usize>,
    pair: Vec<usize>,
    stamp: Vec<u32>,
}

impl Window {
    pub(crate) fn new(cols: Vec<(usize, usize)>, len: usize) -> Self {
        let start = cols.iter().map(|c| c.1).max().unwrap_or(0);
        let w = cols.len();
        Self { cols, start, rows: 0, single: vec![0; w], pair: vec![0; w * w], stamp: vec![0; len] }
    }

    pub(crate) fn rows(&self) -> usize {
        self.rows
    }

    /// Number of hits in column `c`.
    pub(crate) fn hits(&self, c: usize) -> usize {
        self.single[c]
    }

    /// Number of rows where columns `c` and `d` are both hits.
    pub(crate) fn joint(&self, c: usize, d: usize) -> usize {
        self.pair[c * self.cols.len() + d]
    }

    /// Counts for a two-column window in the layout of the full-sample estimator.
    pub(crate) fn hit_counts(&self) -> HitCounts {
        HitCounts { n: self.rows, hits1: self.single[0], hits2: self.single[1], joint: self.joint(0, 1) }
    }

    fn apply(&mut self, flags: &[bool], sign: isize) {
        let w = self.cols.len();
        for c in 0..w {
            if flags[c] {
                self.single[c] = self.single[c].wrapping_add_signed(sign);
                for d in 0..w {
                    if flags[d] {
                        self.pair[c * w + d] = self.pair[c * w + d].wrapping_add_signed(sign);
                    }
                }
            }
        }
    }
}

pub(crate) struct RecursivePass<'a> {
    trackers: Vec<HitTracker<'a>>,
    pub(crate) windows: Vec<Window>,
    flips: Vec<Vec<usize>>,
    flipped_at: Vec<Vec<u32>>,
    step: u32,
    len: usize,
}

impl<'a> RecursivePass<'a> {
    /// `series[j]` is tracked at quantile level `levels[j]`.
    pub(crate) fn new(series: &[&'a [f64]], levels: &[f64], windows: Vec<Window>) -> Self {
        let len = series[0].len();
        Self {
            trackers: series.iter().zip(levels).map(|(s, &a)| HitTracker::new(s, a)).collect(),
            windows,
            flips: vec![Vec::new(); series.len()],
            flipped_at: vec![vec![0; len]; series.len()],
            step: 0,
            len,
        }
    }

    /// Admits observation `i = s - 1` of every series and returns `s`.
    pub(crate) fn advance(&mut self) -> usize {
        let i = self.trackers[0].seen();
        debug_assert!(i < self.len);
        self.step += 1;
        let step = self.step;
        for (j, tr) in self.trackers.iter_mut().enumerate() {
            tr.push(&mut self.flips[j]);
            for &u in &self.flips[j] {
                self.flipped_at[j][u] = step;
            }
        }

        let trackers = &self.trackers;
        let flipped_at = &self.flipped_at;
        let mut old = Vec::new();
        let mut new = Vec::new();
        let mut touched = Vec::new();
        for win in &mut self.windows {
            touched.clear();
            for &(j, off) in &win.cols {
                for &u in &self.flips[j] {
                    let t = u + off;
                    if t >= win.start && t < i && win.stamp[t] != step {
                        win.stamp[t] = step;
                        touched.push(t);
                    }
                }
            }
            for &t in &touched {
                new.clear();
                old.clear();
                for &(j, off) in &win.cols {
                    let h = trackers[j].hit(t - off);
                    new.push(h);
                    old.push(h ^ (flipped_at[j][t - off] == step));
                }
                win.apply(&old, -1);
                win.apply(&new, 1);
            }
            if i >= win.start {
                new.clear();
                new.extend(win.cols.iter().map(|&(j, off)| trackers[j].hit(i - off)));
                win.apply(&new, 1);
                win.rows += 1;
            }
        }
        i + 1
    }
}
