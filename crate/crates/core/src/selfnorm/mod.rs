//! Self-normalized inference from recursive subsample cross-quantilograms.
//!
//! The normalizer is built from estimates on the prefixes `x[..s]`,
//! `s = ceil(T omega)..=T`, each using its own prefix quantiles, so no
//! bandwidth or block length has to be chosen. Critical values come from a
//! simulated functional of Brownian motion, tabulated in [`CriticalValueTable`].

mod recursive;
mod table;

pub(crate) use recursive::{RecursivePass, Window};
pub use table::{CriticalValue, CriticalValueTable, TABLE_HEADER};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cqgram::{cq_vector, QuantilePair};
use crate::quantile::{ceil_mul, order_index, trimmed_start, TimeSeries};
use crate::report::{LagInterval, Method, ReportConfig, TestReport};
use crate::rng::substream;
use crate::{Error, Result};

/// Largest condition number accepted for a normalizer or hit matrix.
pub const MAX_CONDITION: f64 = 1e12;
pub const DEFAULT_OMEGA: f64 = 0.1;
pub const DEFAULT_N_GRID: usize = 1000;
pub const DEFAULT_N_REP: usize = 50_000;
pub const MIN_N_GRID: usize = 500;
pub const MIN_N_REP: usize = 10_000;
const BATCH: usize = 1000;

#[derive(Debug, Clone, Copy)]
pub struct SnConfig<'a> {
    /// Trimming fraction; the shortest subsample has `ceil(T omega)` observations.
    pub omega: f64,
    pub tau: f64,
    pub table: &'a CriticalValueTable,
}

impl SnConfig<'_> {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega < 1.0) {
            return Err(Error::InvalidParameter(format!("omega {} outside (0,1)", self.omega)));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidParameter(format!("tau {} outside (0,1)", self.tau)));
        }
        Ok(())
    }
}

/// Recursive estimates `rho_s(1..=p)` for `s = start..=t`.
/// A row is `None` when the subsample estimate was undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursiveCq {
    pub start: usize,
    pub t: usize,
    pub rows: Vec<Option<Vec<f64>>>,
}

impl RecursiveCq {
    pub fn from_rows(start: usize, t: usize, rows: Vec<Option<Vec<f64>>>) -> Result<Self> {
        if start == 0 || start > t || rows.len() != t + 1 - start {
            return Err(Error::InvalidParameter(format!(
                "{} rows do not cover s = {start}..={t}",
                rows.len()
            )));
        }
        let width = match rows.last() {
            Some(Some(r)) if !r.is_empty() => r.len(),
            _ => return Err(Error::InvalidParameter("final row missing".into())),
        };
        if rows.iter().flatten().any(|r| r.len() != width) {
            return Err(Error::InvalidParameter("ragged recursive rows".into()));
        }
        Ok(Self { start, t, rows })
    }

    pub fn width(&self) -> usize {
        self.full().len()
    }

    /// The full-sample row `s = T`.
    pub fn full(&self) -> &[f64] {
        self.rows.last().and_then(Option::as_deref).expect("final row present")
    }

    /// Row for subsample size `s`.
    pub fn row(&self, s: usize) -> Option<&[f64]> {
        s.checked_sub(self.start).and_then(|i| self.rows.get(i)).and_then(Option::as_deref)
    }

    pub fn missing(&self) -> usize {
        self.rows.iter().filter(|r| r.is_none()).count()
    }
}

/// Recursive cross-quantilograms at lags `1..=p` over prefixes `s >= ceil(T omega)`.
pub fn recursive_cq(
    x1: &TimeSeries,
    x2: &TimeSeries,
    p: usize,
    pair: QuantilePair,
    omega: f64,
) -> Result<RecursiveCq> {
    let t = x1.len();
    if x2.len() != t {
        return Err(Error::InvalidSeries("series lengths differ".into()));
    }
    let start = trimmed_start(t, omega)?;
    if p == 0 || start <= p + 2 {
        return Err(Error::InvalidParameter(format!(
            "need ceil(T omega) = {start} > p + 2 with p = {p} >= 1"
        )));
    }
    let windows = (1..=p).map(|k| Window::new(vec![(0, 0), (1, k)], t)).collect();
    let mut pass = RecursivePass::new(
        &[x1.as_slice(), x2.as_slice()],
        &[pair.a1.value(), pair.a2.value()],
        windows,
    );
    let mut rows = Vec::with_capacity(t + 1 - start);
    for _ in 0..t {
        let s = pass.advance();
        if s >= start {
            rows.push(
                pass.windows
                    .iter()
                    .map(|w| w.hit_counts().correlation(pair.a1, pair.a2))
                    .collect::<Option<Vec<f64>>>(),
            );
        }
    }
    if rows.last().is_some_and(Option::is_none) {
        let lag = pass.windows.iter().position(|w| w.hit_counts().correlation(pair.a1, pair.a2).is_none());
        return Err(Error::ZeroDenominator { lag: lag.map_or(0, |i| i + 1) });
    }
    RecursiveCq::from_rows(start, t, rows)
}

/// Self-normalizing matrix with the number of subsample rows it used.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub matrix: DMatrix<f64>,
    pub used: usize,
    pub dropped: usize,
}

/// `A = T^-2 sum_s s^2 (rho_s - rho_T)(rho_s - rho_T)'`; missing rows are skipped.
pub fn a_hat(rec: &RecursiveCq) -> Normalizer {
    let p = rec.width();
    let full = DVector::from_column_slice(rec.full());
    let mut a = DMatrix::zeros(p, p);
    let mut used = 0;
    for (i, row) in rec.rows.iter().enumerate() {
        let Some(row) = row else { continue };
        let s = (rec.start + i) as f64;
        let d = DVector::from_column_slice(row) - &full;
        for r in 0..p {
            for c in r..p {
                a[(r, c)] += s * s * (d[r] * d[c]);
            }
        }
        used += 1;
    }
    let t = rec.t as f64;
    a /= t * t;
    a.fill_lower_triangle_with_upper_triangle();
    Normalizer { matrix: a, used, dropped: rec.missing() }
}

pub(crate) fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// `S = T rho' A^-1 rho`.
pub fn s_statistic(rho: &[f64], t: usize, a: &DMatrix<f64>) -> Result<f64> {
    let p = rho.len();
    if a.nrows() != p || a.ncols() != p {
        return Err(Error::InvalidParameter(format!("normalizer is {}x{}, rho has {p} lags", a.nrows(), a.ncols())));
    }
    let condition = condition_number(a);
    if !(condition <= MAX_CONDITION) || a.iter().all(|&v| v == 0.0) {
        return Err(Error::SingularNormalizer { condition });
    }
    if p == 1 {
        return Ok(t as f64 * rho[0] * rho[0] / a[(0, 0)]);
    }
    let r = DVector::from_column_slice(rho);
    let solved = a
        .clone()
        .cholesky()
        .map(|c| c.solve(&r))
        .or_else(|| a.clone().lu().solve(&r))
        .ok_or(Error::SingularNormalizer { condition })?;
    Ok((t as f64 * r.dot(&solved)).max(0.0))
}

/// One draw of `B(1)' A^-1 B(1)` with `A = (1/n) sum_{j >= ceil(n omega)} (W_j - (j/n) W_n)(.)'`.
fn limit_draw<R: rand::Rng>(p: usize, n_grid: usize, j0s: &[usize], rng: &mut R, path: &mut Vec<f64>, out: &mut Vec<f64>) {
    let sd = (1.0 / n_grid as f64).sqrt();
    path.clear();
    path.resize(n_grid * p, 0.0);
    let mut w = vec![0.0; p];
    for j in 0..n_grid {
        for (c, wc) in w.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            *wc += sd * z;
            path[j * p + c] = *wc;
        }
    }
    let end = DVector::from_column_slice(&path[(n_grid - 1) * p..]);
    out.clear();
    for &j0 in j0s {
        let mut a = DMatrix::<f64>::zeros(p, p);
        let mut d = DVector::<f64>::zeros(p);
        for j in j0..=n_grid {
            let r = j as f64 / n_grid as f64;
            for c in 0..p {
                d[c] = path[(j - 1) * p + c] - r * end[c];
            }
            a.ger(1.0, &d, &d, 1.0);
        }
        a /= n_grid as f64;
        let v = if p == 1 {
            end[0] * end[0] / a[(0, 0)]
        } else {
            match a.cholesky() {
                Some(ch) => end.dot(&ch.solve(&end)),
                None => f64::INFINITY,
            }
        };
        out.push(v);
    }
}

/// Simulated `(1 - tau)` quantiles of the self-normalized limit for each
/// `omega` in `omegas`, all from the same Brownian paths.
/// Batch `i` of 1000 paths uses substream `(seed, [p, i])`.
pub fn simulate_sn_critical_values_multi(
    p: usize,
    omegas: &[f64],
    taus: &[f64],
    n_grid: usize,
    n_rep: usize,
    seed: u64,
) -> Result<Vec<CriticalValue>> {
    if p == 0 {
        return Err(Error::InvalidParameter("p must be at least 1".into()));
    }
    if n_grid < MIN_N_GRID {
        return Err(Error::InvalidParameter(format!("n_grid {n_grid} below minimum {MIN_N_GRID}")));
    }
    if n_rep < MIN_N_REP {
        return Err(Error::InvalidParameter(format!("n_rep {n_rep} below minimum {MIN_N_REP}")));
    }
    if omegas.is_empty() || taus.is_empty() {
        return Err(Error::InvalidParameter("empty omega or tau list".into()));
    }
    let mut j0s = Vec::with_capacity(omegas.len());
    for &o in omegas {
        if !(o > 0.0 && o < 1.0) {
            return Err(Error::InvalidParameter(format!("omega {o} outside (0,1)")));
        }
        j0s.push(ceil_mul(n_grid, o).max(1));
    }
    for &tau in taus {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidParameter(format!("tau {tau} outside (0,1)")));
        }
    }

    let batches = n_rep.div_ceil(BATCH);
    let draws: Vec<Vec<f64>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, &[p as u64, b as u64]);
            let size = BATCH.min(n_rep - b * BATCH);
            let mut path = Vec::new();
            let mut one = Vec::new();
            let mut out = vec![Vec::with_capacity(size); j0s.len()];
            for _ in 0..size {
                limit_draw(p, n_grid, &j0s, &mut rng, &mut path, &mut one);
                for (o, &v) in out.iter_mut().zip(&one) {
                    o.push(v);
                }
            }
            out.concat()
        })
        .collect();

    let mut entries = Vec::with_capacity(omegas.len() * taus.len());
    for (oi, &omega) in omegas.iter().enumerate() {
        let mut sample: Vec<f64> = draws
            .iter()
            .flat_map(|batch| {
                let size = batch.len() / j0s.len();
                batch[oi * size..(oi + 1) * size].iter().copied()
            })
            .collect();
        sample.sort_unstable_by(f64::total_cmp);
        for &tau in taus {
            entries.push(CriticalValue {
                p,
                omega,
                tau,
                value: sample[order_index(sample.len(), 1.0 - tau) - 1],
                n_grid,
                n_rep,
                seed,
            });
        }
    }
    Ok(entries)
}

pub fn simulate_sn_critical_values(
    p: usize,
    omega: f64,
    taus: &[f64],
    n_grid: usize,
    n_rep: usize,
    seed: u64,
) -> Result<Vec<CriticalValue>> {
    simulate_sn_critical_values_multi(p, &[omega], taus, n_grid, n_rep, seed)
}

/// Self-normalized omnibus test of `rho(1) = ... = rho(p) = 0`.
pub fn sn_test(x1: &TimeSeries, x2: &TimeSeries, p: usize, pair: QuantilePair, cfg: &SnConfig) -> Result<TestReport> {
    cfg.validate()?;
    let critical_value = cfg.table.lookup(p, cfg.omega, cfg.tau)?;
    let rec = recursive_cq(x1, x2, p, pair, cfg.omega)?;
    let norm = a_hat(&rec);
    let t = rec.t;
    let statistic = s_statistic(rec.full(), t, &norm.matrix)?;

    // per-lag bands from the scalar statistic
    let mut intervals = Vec::new();
    let mut null_bands = Vec::new();
    let mut notes = Vec::new();
    match cfg.table.lookup(1, cfg.omega, cfg.tau) {
        Ok(c1) => {
            for (i, &r) in rec.full().iter().enumerate() {
                let half = (c1 * norm.matrix[(i, i)] / t as f64).sqrt();
                intervals.push(LagInterval { k: i + 1, estimate: r, low: r - half, high: r + half });
                null_bands.push(LagInterval { k: i + 1, estimate: r, low: -half, high: half });
            }
        }
        Err(_) => notes.push("no p=1 critical value for per-lag bands".into()),
    }
    if norm.dropped > 0 {
        notes.push(format!("{} degenerate subsample rows dropped from the normalizer", norm.dropped));
    }
    debug_assert_eq!(rec.full(), cq_vector(x1, x2, p, pair).map(|c| c.rho).unwrap_or_default());
    Ok(TestReport {
        method: Method::SelfNormalized,
        statistic,
        critical_value,
        reject: statistic > critical_value,
        intervals,
        null_bands,
        config: ReportConfig {
            pair,
            t,
            p,
            tau: cfg.tau,
            gamma: None,
            replicates: None,
            seed: None,
            omega: Some(cfg.omega),
            betas: None,
        },
        notes,
    })
}
