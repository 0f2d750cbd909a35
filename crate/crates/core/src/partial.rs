//! Partial cross-quantilogram: dependence between the hits of `x1_t` and
//! `x2_{t-k}` after controlling for the hits of state variables `z_t`,
//! read off the inverse of the hit second-moment matrix.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::bootstrap::{check_ci_resolution, equal_tail, sb_resample_indices, AlignedPanel, SbConfig, MAX_REDRAWS};
use crate::cqgram::{hit_cross_moment, hit_flags, hit_square_sum, QuantilePair};
use crate::quantile::{order_index, psi, trimmed_start, QuantileLevel, TimeSeries};
use crate::report::{LagInterval, Method, ReportConfig, TestReport};
use crate::rng::substream;
use crate::selfnorm::{condition_number, RecursivePass, SnConfig, Window, MAX_CONDITION};
use crate::{Error, Result};

/// Control series `z_t` with their quantile levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPanel {
    pub series: Vec<TimeSeries>,
    pub levels: Vec<QuantileLevel>,
    /// Display names, used in error messages.
    pub names: Vec<String>,
}

impl ControlPanel {
    pub fn new(series: Vec<TimeSeries>, levels: Vec<QuantileLevel>) -> Result<Self> {
        let names = (1..=series.len()).map(|i| format!("z{i}")).collect();
        Self::named(series, levels, names)
    }

    pub fn named(series: Vec<TimeSeries>, levels: Vec<QuantileLevel>, names: Vec<String>) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::InvalidParameter("at least one control series required".into()));
        }
        if levels.len() != series.len() || names.len() != series.len() {
            return Err(Error::InvalidParameter(format!(
                "{} controls but {} levels and {} names",
                series.len(),
                levels.len(),
                names.len()
            )));
        }
        Ok(Self { series, levels, names })
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    fn check(&self, t: usize) -> Result<()> {
        match self.series.iter().position(|z| z.len() != t) {
            Some(i) => Err(Error::InvalidSeries(format!(
                "control {} has length {}, expected {t}",
                self.names[i],
                self.series[i].len()
            ))),
            None => Ok(()),
        }
    }
}

/// `R = (1/T) sum h h'` and its inverse when numerically invertible.
#[derive(Debug, Clone, PartialEq)]
pub struct HitMatrix {
    pub r_hat: DMatrix<f64>,
    pub p_hat: Option<DMatrix<f64>>,
    pub condition: f64,
}

impl HitMatrix {
    fn from_r(r_hat: DMatrix<f64>) -> Self {
        let condition = condition_number(&r_hat);
        let p_hat = if condition <= MAX_CONDITION { r_hat.clone().try_inverse() } else { None };
        Self { r_hat, p_hat, condition }
    }

    pub fn precision(&self) -> Result<&DMatrix<f64>> {
        self.p_hat.as_ref().ok_or(Error::SingularHitMatrix { condition: self.condition })
    }

    /// `-P12 / sqrt(P11 P22)`.
    pub fn partial(&self) -> Result<f64> {
        let p = self.precision()?;
        let d = p[(0, 0)] * p[(1, 1)];
        if !(d > 0.0) {
            return Err(Error::SingularHitMatrix { condition: self.condition });
        }
        Ok((-p[(0, 1)] / d.sqrt()).clamp(-1.0, 1.0))
    }
}

fn check_inputs(x1: &TimeSeries, x2: &TimeSeries, z: &ControlPanel, k: usize) -> Result<usize> {
    let t = x1.len();
    if x2.len() != t {
        return Err(Error::InvalidSeries("series lengths differ".into()));
    }
    z.check(t)?;
    if k == 0 || k + 2 > t {
        return Err(Error::InvalidParameter(format!("lag {k} needs 1 <= k <= T-2")));
    }
    Ok(t)
}

fn levels(pair: QuantilePair, z: &ControlPanel) -> Vec<f64> {
    let mut l = vec![pair.a1.value(), pair.a2.value()];
    l.extend(z.levels.iter().map(|b| b.value()));
    l
}

/// Hit vectors `[psi(x1_t), psi(x2_{t-k}), psi(z_t)]` for `t = k+1..T`.
pub fn hit_vectors(x1: &TimeSeries, x2: &TimeSeries, z: &ControlPanel, k: usize, pair: QuantilePair) -> Result<Vec<Vec<f64>>> {
    let t = check_inputs(x1, x2, z, k)?;
    let q1 = crate::quantile::empirical_quantile(x1.as_slice(), pair.a1)?;
    let q2 = crate::quantile::empirical_quantile(x2.as_slice(), pair.a2)?;
    let qz: Vec<f64> = z
        .series
        .iter()
        .zip(&z.levels)
        .map(|(s, &b)| crate::quantile::empirical_quantile(s.as_slice(), b))
        .collect::<Result<_>>()?;
    Ok((k..t)
        .map(|i| {
            let mut h = Vec::with_capacity(2 + z.len());
            h.push(psi(x1.as_slice()[i] - q1, pair.a1));
            h.push(psi(x2.as_slice()[i - k] - q2, pair.a2));
            for ((s, &b), &q) in z.series.iter().zip(&z.levels).zip(&qz) {
                h.push(psi(s.as_slice()[i] - q, b));
            }
            h
        })
        .collect())
}

/// `R = (1/t) sum h h'` over the given hit vectors.
pub fn hit_correlation(hits: &[Vec<f64>], t: usize) -> Result<HitMatrix> {
    let w = hits.first().map_or(0, Vec::len);
    if w == 0 || t == 0 || hits.iter().any(|h| h.len() != w) {
        return Err(Error::InvalidParameter("empty or ragged hit vectors".into()));
    }
    let mut r = DMatrix::zeros(w, w);
    for c in 0..w {
        for d in c..w {
            let v = hits.iter().map(|h| h[c] * h[d]).sum::<f64>() / t as f64;
            r[(c, d)] = v;
            r[(d, c)] = v;
        }
    }
    Ok(HitMatrix::from_r(r))
}

/// `R` from hit counts: `hits(c)` rows hit in column `c`, `joint(c, d)` in both.
fn matrix_from_counts(
    n: usize,
    hits: impl Fn(usize) -> usize,
    joint: impl Fn(usize, usize) -> usize,
    levels: &[f64],
    divisor: usize,
) -> HitMatrix {
    let w = levels.len();
    let mut r = DMatrix::zeros(w, w);
    for c in 0..w {
        r[(c, c)] = hit_square_sum(n, hits(c), levels[c]) / divisor as f64;
        for d in c + 1..w {
            let v = hit_cross_moment(n, hits(c), hits(d), joint(c, d), levels[c], levels[d]) / divisor as f64;
            r[(c, d)] = v;
            r[(d, c)] = v;
        }
    }
    HitMatrix::from_r(r)
}

/// Counts over aligned columns of hit flags.
fn counted_matrix(cols: &[&[bool]], levels: &[f64], divisor: usize) -> HitMatrix {
    let w = cols.len();
    let n = cols[0].len();
    let mut single = vec![0usize; w];
    let mut pair = vec![0usize; w * w];
    for i in 0..n {
        for c in 0..w {
            if cols[c][i] {
                single[c] += 1;
                for d in c + 1..w {
                    pair[c * w + d] += cols[d][i] as usize;
                }
            }
        }
    }
    matrix_from_counts(n, |c| single[c], |c, d| pair[c * w + d], levels, divisor)
}

/// Full-sample hit matrix at lag `k`.
pub fn hit_matrix(x1: &TimeSeries, x2: &TimeSeries, z: &ControlPanel, k: usize, pair: QuantilePair) -> Result<HitMatrix> {
    let t = check_inputs(x1, x2, z, k)?;
    let h1 = hit_flags(x1.as_slice(), pair.a1)?;
    let h2 = hit_flags(x2.as_slice(), pair.a2)?;
    let hz: Vec<Vec<bool>> = z
        .series
        .iter()
        .zip(&z.levels)
        .map(|(s, &b)| hit_flags(s.as_slice(), b))
        .collect::<Result<_>>()?;
    let mut cols: Vec<&[bool]> = vec![&h1[k..], &h2[..t - k]];
    cols.extend(hz.iter().map(|h| &h[k..]));
    Ok(counted_matrix(&cols, &levels(pair, z), t))
}

/// Sample partial cross-quantilogram `rho_{a|z}(k)`.
pub fn partial_cq(x1: &TimeSeries, x2: &TimeSeries, z: &ControlPanel, k: usize, pair: QuantilePair) -> Result<f64> {
    hit_matrix(x1, x2, z, k, pair)?.partial()
}

/// Partial value recomputed on resampled rows, quantiles re-estimated per column.
fn resample_partial(panel: &AlignedPanel, idx: &[usize], levels: &[f64], buf: &mut Vec<f64>) -> Option<f64> {
    let flags: Vec<Vec<bool>> = (0..panel.width())
        .map(|c| {
            panel.gather_column(idx, c, buf);
            let mut sorted = buf.clone();
            sorted.sort_unstable_by(f64::total_cmp);
            let q = sorted[order_index(sorted.len(), levels[c]) - 1];
            buf.iter().map(|&v| v < q).collect()
        })
        .collect();
    let cols: Vec<&[bool]> = flags.iter().map(Vec::as_slice).collect();
    counted_matrix(&cols, levels, idx.len()).partial().ok()
}

fn partial_config(pair: QuantilePair, t: usize, k: usize, tau: f64, z: &ControlPanel) -> ReportConfig {
    ReportConfig {
        pair,
        t,
        p: k,
        tau,
        gamma: None,
        replicates: None,
        seed: None,
        omega: None,
        betas: Some(z.levels.iter().map(|b| b.value()).collect()),
    }
}

/// Two-sided stationary-bootstrap test of `rho_{a|z}(k) = 0`.
///
/// With `(c1, c2)` the equal-tailed percentiles of `sqrt(T)(rho* - rho)`,
/// the null is rejected when the percentile interval
/// `[rho + c1/sqrt(T), rho + c2/sqrt(T)]` excludes zero, i.e. when the
/// statistic `sqrt(T) rho` leaves `[-c2, -c1]`. `critical_value` is the
/// bound on the side of the estimate.
pub fn partial_sb_test(
    x1: &TimeSeries,
    x2: &TimeSeries,
    z: &ControlPanel,
    k: usize,
    pair: QuantilePair,
    cfg: &SbConfig,
) -> Result<TestReport> {
    cfg.validate()?;
    check_ci_resolution(cfg.replicates, cfg.tau)?;
    let t = check_inputs(x1, x2, z, k)?;
    let rho = partial_cq(x1, x2, z, k, pair)?;
    let controls: Vec<&[f64]> = z.series.iter().map(TimeSeries::as_slice).collect();
    let panel = AlignedPanel::with_controls(x1.as_slice(), x2.as_slice(), k, &controls)?;
    let lv = levels(pair, z);
    let n = panel.row_count();

    let draws: Vec<(f64, usize)> = (0..cfg.replicates)
        .into_par_iter()
        .map_init(Vec::new, |buf, b| {
            for attempt in 0..=MAX_REDRAWS {
                let mut rng = substream(cfg.seed, &[b as u64, attempt as u64]);
                let idx = sb_resample_indices(n, cfg.gamma, &mut rng);
                if let Some(r) = resample_partial(&panel, &idx, &lv, buf) {
                    return Ok((r, attempt));
                }
            }
            Err(Error::ReplicateExhausted { replicate: b, retries: MAX_REDRAWS })
        })
        .collect::<Result<_>>()?;

    let root_t = (t as f64).sqrt();
    let (c1, c2) = equal_tail(draws.iter().map(|(r, _)| root_t * (r - rho)).collect(), cfg.tau);
    let statistic = root_t * rho;
    let redrawn = draws.iter().filter(|(_, a)| *a > 0).count();
    let mut notes = Vec::new();
    if redrawn > 0 {
        notes.push(format!("{redrawn} singular replicates redrawn"));
    }
    let mut config = partial_config(pair, t, k, cfg.tau, z);
    config.gamma = Some(cfg.gamma);
    config.replicates = Some(cfg.replicates);
    config.seed = Some(cfg.seed);
    Ok(TestReport {
        method: Method::StationaryBootstrap,
        statistic,
        critical_value: if statistic >= 0.0 { -c1 } else { -c2 },
        reject: statistic < -c2 || statistic > -c1,
        intervals: vec![LagInterval { k, estimate: rho, low: rho + c1 / root_t, high: rho + c2 / root_t }],
        null_bands: vec![LagInterval { k, estimate: rho, low: -c2 / root_t, high: -c1 / root_t }],
        config,
        notes,
    })
}

/// Recursive partial values for `s = ceil(T omega)..=T`, subsample quantiles
/// for every column including the controls. Singular subsamples give `None`.
pub fn recursive_partial(
    x1: &TimeSeries,
    x2: &TimeSeries,
    z: &ControlPanel,
    k: usize,
    pair: QuantilePair,
    omega: f64,
) -> Result<(usize, Vec<Option<f64>>)> {
    let t = check_inputs(x1, x2, z, k)?;
    let start = trimmed_start(t, omega)?;
    if start <= k + 2 {
        return Err(Error::InvalidParameter(format!("need ceil(T omega) = {start} > k + 2 with k = {k}")));
    }
    let mut series: Vec<&[f64]> = vec![x1.as_slice(), x2.as_slice()];
    series.extend(z.series.iter().map(TimeSeries::as_slice));
    let lv = levels(pair, z);
    let mut cols = vec![(0, 0), (1, k)];
    cols.extend((0..z.len()).map(|j| (2 + j, 0)));
    let mut pass = RecursivePass::new(&series, &lv, vec![Window::new(cols, t)]);
    let mut rows = Vec::with_capacity(t + 1 - start);
    for _ in 0..t {
        let s = pass.advance();
        if s >= start {
            let w = &pass.windows[0];
            let m = matrix_from_counts(w.rows(), |c| w.hits(c), |c, d| w.joint(c, d), &lv, s);
            rows.push(m.partial().ok());
        }
    }
    Ok((start, rows))
}

/// `T^-2 sum_s s^2 (rho_s - rho_T)^2` over the non-missing rows, with the
/// number of missing rows.
pub fn partial_normalizer(start: usize, t: usize, rows: &[Option<f64>]) -> Result<(f64, usize)> {
    let Some(Some(rho)) = rows.last().copied() else {
        return Err(Error::InvalidParameter("final recursive row missing".into()));
    };
    let mut a = 0.0;
    let mut dropped = 0;
    for (i, r) in rows.iter().enumerate() {
        match r {
            Some(r) => {
                let s = (start + i) as f64;
                a += s * s * (r - rho) * (r - rho);
            }
            None => dropped += 1,
        }
    }
    a /= (t * t) as f64;
    if !(a > 0.0) {
        return Err(Error::DegenerateNormalizer);
    }
    Ok((a, dropped))
}

/// Self-normalized two-sided test of `rho_{a|z}(k) = 0` using
/// `sqrt(T) rho / sqrt(A)` against the square root of the scalar critical value.
pub fn partial_sn_test(
    x1: &TimeSeries,
    x2: &TimeSeries,
    z: &ControlPanel,
    k: usize,
    pair: QuantilePair,
    cfg: &SnConfig,
) -> Result<TestReport> {
    cfg.validate()?;
    let c = cfg.table.lookup(1, cfg.omega, cfg.tau)?.sqrt();
    let (start, rows) = recursive_partial(x1, x2, z, k, pair, cfg.omega)?;
    let t = x1.len();
    let rho = match rows.last() {
        Some(Some(r)) => *r,
        _ => return Err(hit_matrix(x1, x2, z, k, pair)?.partial().err().unwrap_or(Error::DegenerateNormalizer)),
    };
    let (a, dropped) = partial_normalizer(start, t, &rows)?;
    let statistic = (t as f64).sqrt() * rho / a.sqrt();
    let half = c * (a / t as f64).sqrt();
    let mut notes = Vec::new();
    if dropped > 0 {
        notes.push(format!("{dropped} singular subsample rows dropped from the normalizer"));
    }
    let mut config = partial_config(pair, t, k, cfg.tau, z);
    config.omega = Some(cfg.omega);
    Ok(TestReport {
        method: Method::SelfNormalized,
        statistic,
        critical_value: c,
        reject: statistic.abs() > c,
        intervals: vec![LagInterval { k, estimate: rho, low: rho - half, high: rho + half }],
        null_bands: vec![LagInterval { k, estimate: rho, low: -half, high: half }],
        config,
        notes,
    })
}

/// Textbook first-order partial correlation of variables 1 and 2 given 3,
/// from the normalized matrix.
pub fn first_order_partial(r: &DMatrix<f64>) -> f64 {
    let c = |i: usize, j: usize| r[(i, j)] / (r[(i, i)] * r[(j, j)]).sqrt();
    let (r12, r13, r23) = (c(0, 1), c(0, 2), c(1, 2));
    (r12 - r13 * r23) / ((1.0 - r13 * r13) * (1.0 - r23 * r23)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cqgram::cross_quantilogram;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn ts(v: Vec<f64>) -> TimeSeries {
        TimeSeries::new(v).unwrap()
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, &[]);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn lvl(b: f64) -> QuantileLevel {
        QuantileLevel::new(b).unwrap()
    }

    fn one_control(z: Vec<f64>, b: f64) -> ControlPanel {
        ControlPanel::new(vec![ts(z)], vec![lvl(b)]).unwrap()
    }

    #[test]
    fn fixture_matches_closed_form() {
        let r = DMatrix::from_row_slice(3, 3, &[0.25, 0.05, 0.1, 0.05, 0.25, 0.1, 0.1, 0.1, 0.25]);
        let m = HitMatrix::from_r(r.clone());
        let via_inverse = m.partial().unwrap();
        assert_abs_diff_eq!(via_inverse, first_order_partial(&r), epsilon = 1e-12);
        // (0.2 - 0.16) / (1 - 0.16)
        assert_abs_diff_eq!(via_inverse, 0.04 / 0.84, epsilon = 1e-12);
        let id = m.p_hat.as_ref().unwrap() * &r;
        assert!((id - DMatrix::identity(3, 3)).abs().max() < 1e-10);
    }

    #[test]
    fn hit_vector_shape_and_values() {
        let x = ts(noise(50, 1));
        let z = one_control(vec![2.0; 50], 0.3);
        let pair = QuantilePair::equal(0.5).unwrap();
        let h = hit_vectors(&x, &x, &z, 1, pair).unwrap();
        assert_eq!(h.len(), 49);
        for v in &h {
            assert!(v[0] == 0.5 || v[0] == -0.5);
            assert!(v[1] == 0.5 || v[1] == -0.5);
            assert_eq!(v[2], -0.3);
        }
    }

    #[test]
    fn counted_and_summed_matrices_agree() {
        let x1 = ts(noise(120, 2));
        let x2 = ts(noise(120, 3));
        let z = ControlPanel::new(vec![ts(noise(120, 4)), ts(noise(120, 5))], vec![lvl(0.9), lvl(0.2)]).unwrap();
        let pair = QuantilePair::new(0.1, 0.4).unwrap();
        let k = 3;
        let summed = hit_correlation(&hit_vectors(&x1, &x2, &z, k, pair).unwrap(), 120).unwrap();
        let counted = hit_matrix(&x1, &x2, &z, k, pair).unwrap();
        assert!((&summed.r_hat - &counted.r_hat).abs().max() < 1e-12);
        assert_eq!(summed.r_hat, summed.r_hat.transpose());
        // diagonal carries the (T-k)/T shrinkage of the 1/T divisor
        let h1 = hit_flags(x1.as_slice(), pair.a1).unwrap();
        let hits = h1[k..].iter().filter(|&&b| b).count() as f64;
        let expect = (hits * 0.81 + (117.0 - hits) * 0.01) / 120.0;
        assert_abs_diff_eq!(counted.r_hat[(0, 0)], expect, epsilon = 1e-15);
    }

    #[test]
    fn median_diagonal_shrinks_by_window_share() {
        // psi^2 = 1/4 for every row at the median, so R11 = a(1-a)(T-k)/T exactly
        let x = ts(noise(100, 14));
        let z = one_control(noise(100, 15), 0.5);
        let pair = QuantilePair::equal(0.5).unwrap();
        let m = hit_matrix(&x, &x, &z, 3, pair).unwrap();
        for c in 0..3 {
            assert_eq!(m.r_hat[(c, c)], 0.25 * 97.0 / 100.0);
        }
    }

    #[test]
    fn orthogonal_control_reduces_to_plain_ratio() {
        let r = DMatrix::from_row_slice(3, 3, &[0.25, 0.07, 0.0, 0.07, 0.21, 0.0, 0.0, 0.0, 0.16]);
        let m = HitMatrix::from_r(r.clone());
        assert_abs_diff_eq!(m.partial().unwrap(), 0.07 / (0.25f64 * 0.21).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn collinear_control_is_singular() {
        let x1 = ts(noise(80, 6));
        let x2 = ts(noise(80, 7));
        let k = 1;
        // z_t = x2_{t-1}, so its hits duplicate the second column
        let mut zv = vec![0.0];
        zv.extend_from_slice(&x2.as_slice()[..79]);
        zv[0] = x2.as_slice()[79];
        let z = one_control(zv, 0.5);
        let pair = QuantilePair::equal(0.5).unwrap();
        let err = partial_cq(&x1, &x2, &z, k, pair).unwrap_err();
        assert!(matches!(err, Error::SingularHitMatrix { .. }), "{err:?}");
    }

    #[test]
    fn recursive_final_row_matches_full_sample() {
        let x1 = ts(noise(300, 8));
        let x2 = ts(noise(300, 9));
        let z = one_control(noise(300, 10), 0.95);
        let pair = QuantilePair::new(0.1, 0.2).unwrap();
        let (start, rows) = recursive_partial(&x1, &x2, &z, 2, pair, 0.1).unwrap();
        assert_eq!(start, 30);
        assert_eq!(rows.last().unwrap().unwrap(), partial_cq(&x1, &x2, &z, 2, pair).unwrap());
        // spot-check an interior row against recomputation on the prefix
        let s = 150;
        let pre = |x: &TimeSeries| ts(x.as_slice()[..s].to_vec());
        let zs = one_control(z.series[0].as_slice()[..s].to_vec(), 0.95);
        let direct = hit_matrix(&pre(&x1), &pre(&x2), &zs, 2, pair).unwrap();
        let scaled = HitMatrix::from_r(direct.r_hat.clone());
        assert_abs_diff_eq!(rows[s - start].unwrap(), scaled.partial().unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn constant_recursive_path_is_degenerate() {
        assert_eq!(partial_normalizer(3, 5, &[Some(0.2); 3]), Err(Error::DegenerateNormalizer));
        assert!(partial_normalizer(2, 3, &[Some(0.1), None]).is_err());
        let (a, dropped) = partial_normalizer(2, 4, &[Some(0.1), None, Some(0.3)]).unwrap();
        assert_abs_diff_eq!(a, 4.0 * 0.04 / 16.0, epsilon = 1e-15);
        assert_eq!(dropped, 1);
    }

    #[test]
    fn constant_control_keeps_rows_defined() {
        let pair = QuantilePair::equal(0.5).unwrap();
        let flat = ControlPanel::new(vec![ts(vec![1.0; 100])], vec![lvl(0.5)]).unwrap();
        let y = ts(noise(100, 1));
        let w = ts(noise(100, 2));
        let rows = recursive_partial(&y, &w, &flat, 1, pair, 0.1).unwrap().1;
        assert!(rows.iter().all(Option::is_some));
    }

    #[test]
    fn sb_report_contains_estimate_and_is_deterministic() {
        let x1 = ts(noise(300, 11));
        let x2 = ts(noise(300, 12));
        let z = one_control(noise(300, 13), 0.9);
        let pair = QuantilePair::equal(0.3).unwrap();
        let cfg = SbConfig { gamma: 0.2, replicates: 99, seed: 4, tau: 0.1 };
        let a = partial_sb_test(&x1, &x2, &z, 1, pair, &cfg).unwrap();
        let b = partial_sb_test(&x1, &x2, &z, 1, pair, &cfg).unwrap();
        assert_eq!(a, b);
        let ci = a.intervals[0];
        assert!(ci.low <= ci.estimate && ci.estimate <= ci.high, "{ci:?}");
        assert_eq!(a.config.betas, Some(vec![0.9]));
        // plain value computed alongside
        assert!(cross_quantilogram(&x1, &x2, 1, pair).unwrap().abs() <= 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn partial_identity_on_random_pd(
            v in proptest::collection::vec(-1.0f64..1.0, 9),
            ridge in 0.05f64..2.0,
        ) {
            let b = DMatrix::from_row_slice(3, 3, &v);
            let r = &b * b.transpose() + DMatrix::identity(3, 3) * ridge;
            let m = HitMatrix::from_r(r.clone());
            let p = m.partial().unwrap();
            prop_assert!((p - first_order_partial(&r)).abs() < 1e-12);
            prop_assert!(p.abs() <= 1.0);
        }

        #[test]
        fn partial_invariant_to_monotone_maps(
            v in proptest::collection::vec(-50.0f64..50.0, 3 * 60),
            a1 in 0.1f64..0.9,
            a2 in 0.1f64..0.9,
            b in 0.1f64..0.9,
            k in 1usize..4,
        ) {
            let x1 = ts(v[..60].to_vec());
            let x2 = ts(v[60..120].to_vec());
            let zr = v[120..].to_vec();
            let z = one_control(zr.clone(), b);
            let pair = QuantilePair::new(a1, a2).unwrap();
            let base = partial_cq(&x1, &x2, &z, k, pair);
            let y1 = x1.map(|u| u.powi(3)).unwrap();
            let y2 = x2.map(|u| 2.0 * u - 7.0).unwrap();
            let zz = one_control(zr.iter().map(|u| (u / 10.0).exp()).collect(), b);
            let moved = partial_cq(&y1, &y2, &zz, k, pair);
            match (base, moved) {
                (Ok(p), Ok(q)) => { prop_assert_eq!(p.to_bits(), q.to_bits()); prop_assert!(p.abs() <= 1.0); }
                (Err(e), Err(f)) => prop_assert_eq!(e, f),
                (p, q) => prop_assert!(false, "{:?} vs {:?}", p, q),
            }
        }
    }
}
