//! Data-generating processes and size/power experiments.
//!
//! Replication `r` of cell `c` draws its data from substream
//! `(seed, [c, r, 0])` and its bootstrap from `(seed, [c, r, 1])`, so every
//! cell is reproducible on its own and independent of thread scheduling.

use std::fmt::Write as _;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{choose_gamma, sb_test, SbConfig};
use crate::cqgram::{Portmanteau, QuantilePair};
use crate::quantile::TimeSeries;
use crate::report::Method;
use crate::rng::{derive_seed, substream};
use crate::selfnorm::{sn_test, CriticalValueTable, SnConfig};
use crate::{Error, Result};

pub const DEFAULT_BURN_IN: usize = 500;
pub const MIN_BURN_IN: usize = 200;
/// Initial conditional variance of the GARCH-X recursion, `0.1 / (1 - 0.2)`.
pub const DGP2_SIGMA2_INIT: f64 = 0.125;
/// Share of failed replications above which a cell is flagged.
pub const UNRELIABLE_SHARE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DgpKind {
    /// `(x1, x2)` iid bivariate standard normal.
    #[serde(rename = "1")]
    Dgp1,
    /// `x1` GARCH-X driven by lagged squared `x2`; `x2` iid standard normal.
    #[serde(rename = "2")]
    Dgp2,
}

impl DgpKind {
    pub fn id(self) -> u8 {
        match self {
            DgpKind::Dgp1 => 1,
            DgpKind::Dgp2 => 2,
        }
    }
}

impl FromStr for DgpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" | "dgp1" | "DGP1" => Ok(DgpKind::Dgp1),
            "2" | "dgp2" | "DGP2" => Ok(DgpKind::Dgp2),
            other => Err(Error::InvalidParameter(format!("unknown DGP `{other}`, expected 1 or 2"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub t: usize,
    /// Discarded initial draws; used by DGP2 only.
    pub burn_in: usize,
    pub seed: u64,
}

impl DgpSpec {
    pub fn generate(&self) -> Result<(TimeSeries, TimeSeries)> {
        match self.kind {
            DgpKind::Dgp1 => gen_dgp1(self.t, self.seed),
            DgpKind::Dgp2 => gen_dgp2(self.t, self.burn_in, self.seed),
        }
    }
}

fn check_length(t: usize) -> Result<()> {
    if t < 2 {
        return Err(Error::InvalidParameter(format!("sample length {t} below 2")));
    }
    Ok(())
}

pub fn gen_dgp1(t: usize, seed: u64) -> Result<(TimeSeries, TimeSeries)> {
    check_length(t)?;
    let mut rng = substream(seed, &[]);
    let mut x1 = Vec::with_capacity(t);
    let mut x2 = Vec::with_capacity(t);
    for _ in 0..t {
        x1.push(StandardNormal.sample(&mut rng));
        x2.push(StandardNormal.sample(&mut rng));
    }
    Ok((TimeSeries::new(x1)?, TimeSeries::new(x2)?))
}

/// `sigma2_t = 0.1 + 0.2 x1_{t-1}^2 + 0.2 sigma2_{t-1} + x2_{t-1}^2`, `x1_t = sigma_t e_t`.
pub fn gen_dgp2(t: usize, burn_in: usize, seed: u64) -> Result<(TimeSeries, TimeSeries)> {
    check_length(t)?;
    if burn_in < MIN_BURN_IN {
        return Err(Error::InvalidParameter(format!("burn-in {burn_in} below {MIN_BURN_IN}")));
    }
    let mut rng = substream(seed, &[]);
    let mut x1 = Vec::with_capacity(t);
    let mut x2 = Vec::with_capacity(t);
    let (mut prev1, mut prev2, mut prev_s2) = (0.0f64, 0.0f64, DGP2_SIGMA2_INIT);
    for i in 0..burn_in + t {
        let s2 = 0.1 + 0.2 * prev1 * prev1 + 0.2 * prev_s2 + prev2 * prev2;
        let e: f64 = StandardNormal.sample(&mut rng);
        let v2: f64 = StandardNormal.sample(&mut rng);
        let v1 = s2.sqrt() * e;
        if i >= burn_in {
            x1.push(v1);
            x2.push(v2);
        }
        (prev1, prev2, prev_s2) = (v1, v2, s2);
    }
    Ok((TimeSeries::new(x1)?, TimeSeries::new(x2)?))
}

/// Cells are the product `ts x ps x alphas`, in that nesting order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub dgp: DgpKind,
    pub method: Method,
    pub ts: Vec<usize>,
    pub ps: Vec<usize>,
    /// Equal-pair quantile levels.
    pub alphas: Vec<f64>,
    pub nrep: usize,
    /// Bootstrap replicates per test (SB only).
    pub replicates: usize,
    /// Fixed `gamma`; `None` tunes it per replication.
    pub gamma: Option<f64>,
    /// Trimming for SN.
    pub omega: f64,
    pub tau: f64,
    pub burn_in: usize,
    pub seed: u64,
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.ts.is_empty() || self.ps.is_empty() || self.alphas.is_empty() {
            return Err(Error::InvalidParameter("experiment grid has an empty axis".into()));
        }
        if self.nrep == 0 {
            return Err(Error::InvalidParameter("nrep must be at least 1".into()));
        }
        if let Some(&t) = self.ts.iter().find(|&&t| t < 50) {
            return Err(Error::InvalidParameter(format!("T={t} below 50")));
        }
        if self.dgp == DgpKind::Dgp2 && self.burn_in < MIN_BURN_IN {
            return Err(Error::InvalidParameter(format!("burn-in {} below {MIN_BURN_IN}", self.burn_in)));
        }
        for &a in &self.alphas {
            QuantilePair::equal(a)?;
        }
        Ok(())
    }

    /// `(cell index, T, p, alpha)` in output order.
    pub fn cells(&self) -> Vec<(usize, usize, usize, f64)> {
        let mut out = Vec::new();
        for &t in &self.ts {
            for &p in &self.ps {
                for &a in &self.alphas {
                    out.push((out.len(), t, p, a));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub dgp: u8,
    pub method: Method,
    #[serde(rename = "T")]
    pub t: usize,
    pub p: usize,
    pub alpha: f64,
    /// Rejections over completed replications.
    pub reject_freq: f64,
    pub mc_se: f64,
    pub nrep: usize,
    #[serde(rename = "B_or_table")]
    pub b_or_table: String,
    pub seed: u64,
    pub failures: usize,
    pub unreliable: bool,
}

fn one_replication(
    grid: &ExperimentGrid,
    table: Option<&CriticalValueTable>,
    cell: usize,
    r: usize,
    t: usize,
    p: usize,
    pair: QuantilePair,
) -> Result<bool> {
    let spec = DgpSpec {
        kind: grid.dgp,
        t,
        burn_in: grid.burn_in,
        seed: derive_seed(grid.seed, &[cell as u64, r as u64, 0]),
    };
    let (x1, x2) = spec.generate()?;
    let report = match grid.method {
        Method::StationaryBootstrap => {
            let gamma = match grid.gamma {
                Some(g) => g,
                None => choose_gamma(&x1, &x2)?.gamma,
            };
            let cfg = SbConfig {
                gamma,
                replicates: grid.replicates,
                seed: derive_seed(grid.seed, &[cell as u64, r as u64, 1]),
                tau: grid.tau,
            };
            sb_test(&x1, &x2, p, pair, &cfg, Portmanteau::BoxLjung)?
        }
        Method::SelfNormalized => {
            let table = table.ok_or_else(|| Error::InvalidParameter("SN experiment needs a table".into()))?;
            sn_test(&x1, &x2, p, pair, &SnConfig { omega: grid.omega, tau: grid.tau, table })?
        }
    };
    Ok(report.reject)
}

/// Empirical rejection frequencies for every cell of the grid.
pub fn run_size_power(grid: &ExperimentGrid, table: Option<&CriticalValueTable>) -> Result<Vec<CellResult>> {
    grid.validate()?;
    if grid.method == Method::SelfNormalized {
        let table = table.ok_or_else(|| Error::InvalidParameter("SN experiment needs a table".into()))?;
        for &p in &grid.ps {
            table.lookup(p, grid.omega, grid.tau)?;
        }
    }
    let mut out = Vec::new();
    for (cell, t, p, a) in grid.cells() {
        let pair = QuantilePair::equal(a)?;
        let outcomes: Vec<Result<bool>> = (0..grid.nrep)
            .into_par_iter()
            .map(|r| one_replication(grid, table, cell, r, t, p, pair))
            .collect();
        let mut rejections = 0usize;
        let mut failures = 0usize;
        for o in outcomes {
            match o {
                Ok(rej) => rejections += rej as usize,
                Err(e) if e.is_numerical() => failures += 1,
                Err(e) => return Err(e),
            }
        }
        let done = grid.nrep - failures;
        let f = if done > 0 { rejections as f64 / done as f64 } else { f64::NAN };
        out.push(CellResult {
            dgp: grid.dgp.id(),
            method: grid.method,
            t,
            p,
            alpha: a,
            reject_freq: f,
            mc_se: (f * (1.0 - f) / done.max(1) as f64).sqrt(),
            nrep: grid.nrep,
            b_or_table: match grid.method {
                Method::StationaryBootstrap => grid.replicates.to_string(),
                Method::SelfNormalized => format!("omega={}", grid.omega),
            },
            seed: grid.seed,
            failures,
            unreliable: failures as f64 > UNRELIABLE_SHARE * grid.nrep as f64,
        });
    }
    Ok(out)
}

/// Rows `(T, p)`, columns `alpha`; entries `freq (se)`, `*` marking unreliable cells.
pub fn format_table(cells: &[CellResult]) -> String {
    let mut alphas: Vec<f64> = Vec::new();
    let mut rows: Vec<(usize, usize)> = Vec::new();
    for c in cells {
        if !alphas.contains(&c.alpha) {
            alphas.push(c.alpha);
        }
        if !rows.contains(&(c.t, c.p)) {
            rows.push((c.t, c.p));
        }
    }
    let head = cells.first().map_or(String::new(), |c| {
        format!("DGP{} {} nominal rejection frequencies, nrep={}\n", c.dgp, c.method.tag(), c.nrep)
    });
    let mut out = head;
    let _ = write!(out, "{:>6} {:>3}", "T", "p");
    for a in &alphas {
        let _ = write!(out, " {:>16}", format!("alpha={a}"));
    }
    out.push('\n');
    for (t, p) in rows {
        let _ = write!(out, "{t:>6} {p:>3}");
        for a in &alphas {
            let cell = cells.iter().find(|c| c.t == t && c.p == p && c.alpha == *a);
            let text = cell.map_or("-".to_string(), |c| {
                format!("{:.3} ({:.3}){}", c.reject_freq, c.mc_se, if c.unreliable { "*" } else { "" })
            });
            let _ = write!(out, " {text:>16}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cqgram::cross_quantilogram;

    #[test]
    fn dgp1_moments_within_clt_band() {
        let t = 5000;
        let (x1, x2) = gen_dgp1(t, 17).unwrap();
        let band = 4.0 / (t as f64).sqrt();
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        assert!(mean(x1.as_slice()).abs() < band);
        assert!(mean(x2.as_slice()).abs() < band);
        let c: f64 = x1.as_slice()[1..].iter().zip(x2.as_slice()).map(|(a, b)| a * b).sum::<f64>() / t as f64;
        assert!(c.abs() < band, "{c}");
        assert_eq!(gen_dgp1(t, 17).unwrap(), (x1, x2));
    }

    #[test]
    fn dgp2_variance_floor_and_median_null() {
        let (x1, x2) = gen_dgp2(2000, DEFAULT_BURN_IN, 23).unwrap();
        assert!(x2.as_slice().iter().all(|v| v.is_finite()));
        // x1_t^2 / e_t^2 >= 0.1 is not observable; check the implied bound on a rerun
        let mut rng = substream(23, &[]);
        let (mut p1, mut p2, mut ps) = (0.0f64, 0.0f64, DGP2_SIGMA2_INIT);
        for _ in 0..DEFAULT_BURN_IN + 2000 {
            let s2 = 0.1 + 0.2 * p1 * p1 + 0.2 * ps + p2 * p2;
            assert!(s2 >= 0.1);
            let e: f64 = StandardNormal.sample(&mut rng);
            let v: f64 = StandardNormal.sample(&mut rng);
            (p1, p2, ps) = (s2.sqrt() * e, v, s2);
        }
        assert_eq!(p1, *x1.as_slice().last().unwrap());
        let med = QuantilePair::equal(0.5).unwrap();
        assert!(cross_quantilogram(&x1, &x2, 1, med).unwrap().abs() < 4.0 / 2000f64.sqrt());
        let tail = QuantilePair::equal(0.1).unwrap();
        assert!(cross_quantilogram(&x1, &x2, 1, tail).unwrap() > 4.0 / 2000f64.sqrt());
    }

    #[test]
    fn dgp2_rejects_short_burn_in() {
        assert!(gen_dgp2(100, 100, 1).is_err());
        assert!("3".parse::<DgpKind>().is_err());
        assert_eq!("2".parse::<DgpKind>().unwrap(), DgpKind::Dgp2);
    }

    fn small_grid(method: Method) -> ExperimentGrid {
        ExperimentGrid {
            dgp: DgpKind::Dgp1,
            method,
            ts: vec![200],
            ps: vec![1, 2],
            alphas: vec![0.5],
            nrep: 12,
            replicates: 60,
            gamma: None,
            omega: 0.1,
            tau: 0.05,
            burn_in: DEFAULT_BURN_IN,
            seed: 5,
        }
    }

    #[test]
    fn experiment_is_deterministic() {
        let g = small_grid(Method::StationaryBootstrap);
        let a = run_size_power(&g, None).unwrap();
        assert_eq!(a, run_size_power(&g, None).unwrap());
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|c| (0.0..=1.0).contains(&c.reject_freq)));
        let text = format_table(&a);
        assert!(text.contains("alpha=0.5"));
        let table = CriticalValueTable::builtin();
        let s = run_size_power(&small_grid(Method::SelfNormalized), Some(&table)).unwrap();
        assert_eq!(s[0].b_or_table, "omega=0.1");
    }

    #[test]
    fn sn_grid_requires_table_entries() {
        let mut g = small_grid(Method::SelfNormalized);
        assert!(run_size_power(&g, None).is_err());
        g.ps = vec![99];
        let table = CriticalValueTable::builtin();
        assert!(matches!(run_size_power(&g, Some(&table)), Err(Error::MissingCriticalValue { .. })));
    }
}
