use std::path::{Path, PathBuf};

use serde::Serialize;

use super::output::{config_hash, emit, file_digest, write_atomic, PartialRecord, PeakRecord, PortmanteauRecord, RhoRecord};
use super::{ingest_csv, CliError, CqArgs, CritvalsArgs, DataArgs, InferenceArgs, LagArgs, McArgs, MethodArg, PartialArgs, TABLE_ENV};
use crate::bootstrap::{
    bootstrap_ci, bootstrap_critical_value, bootstrap_grid, bootstrap_null_band, choose_gamma, report_from_distribution,
    SbConfig,
};
use crate::cqgram::{cross_quantilogram, Portmanteau, QuantileGrid, QuantilePair};
use crate::mc::{format_table, run_size_power, CellResult, ExperimentGrid};
use crate::partial::{partial_sb_test, partial_sn_test, ControlPanel};
use crate::quantile::{QuantileLevel, TimeSeries};
use crate::report::TestReport;
use crate::selfnorm::{a_hat, recursive_cq, s_statistic, simulate_sn_critical_values_multi, sn_test, CriticalValueTable, SnConfig};
use crate::Error;

const DEFAULT_B: usize = 1000;
const DEFAULT_MC_B: usize = 250;

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Expands `0.05,0.1` and `start:stop:step` tokens into levels.
pub(crate) fn parse_levels(tokens: &[String]) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::new();
    for tok in tokens {
        let parts: Vec<&str> = tok.split(':').map(str::trim).collect();
        let num = |s: &str| s.parse::<f64>().map_err(|_| config_err(format!("bad quantile level `{s}`")));
        match parts.as_slice() {
            [v] => out.push(num(v)?),
            [a, b, step] => {
                let (a, b, step) = (num(a)?, num(b)?, num(step)?);
                if !(step > 0.0) || b < a {
                    return Err(config_err(format!("bad level range `{tok}`")));
                }
                let n = ((b - a) / step + 1e-9).floor() as usize;
                out.extend((0..=n).map(|i| ((a + i as f64 * step) * 1e10).round() / 1e10));
            }
            _ => return Err(config_err(format!("bad level token `{tok}`"))),
        }
    }
    if out.is_empty() {
        return Err(config_err("empty quantile level list"));
    }
    for &a in &out {
        QuantileLevel::new(a).map_err(|e| CliError::from_core(e, ""))?;
    }
    Ok(out)
}

/// Sorted distinct lags from `--max-lag` or `--lags`.
pub(crate) fn resolve_lags(l: &LagArgs) -> Result<Vec<usize>, CliError> {
    let mut lags = match (&l.max_lag, &l.lags) {
        (Some(_), Some(_)) => return Err(config_err("give either --max-lag or --lags, not both")),
        (Some(m), None) => (1..=*m).collect(),
        (None, Some(spec)) => {
            let mut v = Vec::new();
            for tok in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                let num = |s: &str| s.trim().parse::<usize>().map_err(|_| config_err(format!("bad lag `{s}`")));
                match tok.split_once(['-', ':']) {
                    Some((a, b)) => v.extend(num(a)?..=num(b)?),
                    None => v.push(num(tok)?),
                }
            }
            v
        }
        (None, None) => return Err(config_err("a lag range is required (--max-lag or --lags)")),
    };
    lags.sort_unstable();
    lags.dedup();
    if lags.is_empty() {
        return Err(config_err("empty lag range"));
    }
    if lags[0] == 0 {
        return Err(config_err("lags start at 1"));
    }
    Ok(lags)
}

/// Critical values from `XQGRAM_CRITVAL_TABLE` if set, else the built-in table.
pub fn load_table() -> Result<CriticalValueTable, CliError> {
    match std::env::var_os(TABLE_ENV) {
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Data(format!("cannot read table {}: {e}", Path::new(&path).display())))?;
            CriticalValueTable::parse(&text).map_err(|e| CliError::from_core(e, &Path::new(&path).display().to_string()))
        }
        None => Ok(CriticalValueTable::builtin()),
    }
}

#[derive(Debug, Serialize)]
struct InputEcho {
    path: String,
    sha256: String,
}

fn echo_inputs(data: &DataArgs) -> Result<Vec<InputEcho>, CliError> {
    data.input
        .iter()
        .map(|p| {
            Ok(InputEcho {
                path: p.display().to_string(),
                sha256: file_digest(p).map_err(|e| CliError::Data(format!("cannot read {}: {e}", p.display())))?,
            })
        })
        .collect()
}

fn load_pair(data: &DataArgs, extra: &[String]) -> Result<(TimeSeries, TimeSeries, Vec<TimeSeries>), CliError> {
    let mut cols = vec![data.x1.clone(), data.x2.clone()];
    cols.extend(extra.iter().cloned());
    let mut s = ingest_csv(&data.input, &cols)?.into_iter();
    let x1 = s.next().expect("x1");
    let x2 = s.next().expect("x2");
    Ok((x1, x2, s.collect()))
}

fn pair_context(pair: QuantilePair) -> String {
    format!("alpha=({}, {})", pair.a1.value(), pair.a2.value())
}

fn lag_context(e: &Error, pair: QuantilePair) -> String {
    match e {
        Error::ZeroDenominator { lag } => format!("{}, k={lag}", pair_context(pair)),
        _ => pair_context(pair),
    }
}

fn resolve_gamma(inf: &InferenceArgs, x1: &TimeSeries, x2: &TimeSeries) -> Result<f64, CliError> {
    match inf.gamma {
        Some(g) => Ok(g),
        None => {
            let choice = choose_gamma(x1, x2).map_err(|e| CliError::from_core(e, "automatic gamma"))?;
            if choice.fallback {
                eprintln!("xqgram: block-length rule undefined, using gamma = {:.4}", choice.gamma);
            }
            Ok(choice.gamma)
        }
    }
}

/// Everything `cq` computed and the files it wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct CqOutput {
    pub rho: Vec<RhoRecord>,
    pub portmanteau: Vec<PortmanteauRecord>,
    pub peaks: Vec<PeakRecord>,
    pub reports: Vec<TestReport>,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct CqEcho<'a> {
    command: &'static str,
    inputs: Vec<InputEcho>,
    x1: &'a str,
    x2: &'a str,
    alpha1: &'a [f64],
    alpha2: &'a [f64],
    lags: &'a [usize],
    p: &'a [usize],
    method: MethodArg,
    replicates: Option<usize>,
    gamma: Option<f64>,
    omega: f64,
    tau: f64,
    seed: u64,
    format: super::Format,
}

fn peak_over(lags: &[usize], rho: &[f64]) -> (usize, f64) {
    let mut best = (lags[0], rho[lags[0] - 1]);
    for &k in &lags[1..] {
        if rho[k - 1] > best.1 {
            best = (k, rho[k - 1]);
        }
    }
    best
}

pub fn cmd_cq(args: &CqArgs) -> Result<CqOutput, CliError> {
    let lags = resolve_lags(&args.lags)?;
    let kmax = *lags.last().expect("nonempty");
    let a1 = parse_levels(&args.alpha1)?;
    let a2 = parse_levels(&args.alpha2)?;
    let grid = QuantileGrid::product(&a1, &a2).map_err(|e| CliError::from_core(e, "quantile grid"))?;
    let inf = &args.inference;
    if let Some(&p) = args.p.iter().find(|&&p| p == 0 || p > kmax) {
        return Err(config_err(format!("portmanteau order {p} outside 1..={kmax}")));
    }
    let inputs = echo_inputs(&args.data)?;
    let (x1, x2, _) = load_pair(&args.data, &[])?;
    let t = x1.len();
    if kmax + 2 > t {
        return Err(config_err(format!("max lag {kmax} needs T >= {}, have {t}", kmax + 2)));
    }

    let mut rho_records = Vec::new();
    let mut port = Vec::new();
    let mut peaks = Vec::new();
    let mut reports = Vec::new();
    let mut ps = args.p.clone();
    ps.sort_unstable();
    ps.dedup();
    let b = inf.b.unwrap_or(DEFAULT_B);

    match inf.method {
        MethodArg::Sb => {
            if ps.is_empty() {
                ps = (1..=kmax).collect();
            }
            let cfg = SbConfig { gamma: resolve_gamma(inf, &x1, &x2)?, replicates: b, seed: inf.seed, tau: inf.tau };
            let dists = bootstrap_grid(&x1, &x2, kmax, &grid, &cfg).map_err(|e| CliError::from_core(e, "bootstrap"))?;
            for dist in &dists {
                let pair = dist.pair;
                let ctx = |e: Error| CliError::from_core(e, &pair_context(pair));
                let cq = crate::cqgram::CqResult { pair, t, rho: dist.rho_hat.clone(), hit_counts: Vec::new() };
                let ci = bootstrap_ci(dist, &cq, inf.tau).map_err(ctx)?;
                let band = bootstrap_null_band(dist, inf.tau).map_err(ctx)?;
                for &k in &lags {
                    let (c, n) = (ci[k - 1], band[k - 1]);
                    rho_records.push(RhoRecord {
                        alpha1: pair.a1.value(),
                        alpha2: pair.a2.value(),
                        k,
                        rho_hat: c.estimate,
                        ci_low: c.low,
                        ci_high: c.high,
                        band_low: n.low,
                        band_high: n.high,
                    });
                }
                for &p in &ps {
                    let q = Portmanteau::BoxLjung.statistic(t, &dist.rho_hat[..p]);
                    let cv = bootstrap_critical_value(&dist.q_star_draws(Portmanteau::BoxLjung, p), inf.tau).map_err(ctx)?;
                    port.push(PortmanteauRecord {
                        alpha1: pair.a1.value(),
                        alpha2: pair.a2.value(),
                        p,
                        q,
                        critical_value: cv,
                        reject: q > cv,
                    });
                }
                let pmax = *ps.last().expect("nonempty");
                reports.push(report_from_distribution(dist, pmax, &cfg, Portmanteau::BoxLjung).map_err(ctx)?);
                let (peak_lag, peak_value) = peak_over(&lags, &dist.rho_hat);
                peaks.push(PeakRecord { alpha1: pair.a1.value(), alpha2: pair.a2.value(), peak_lag, peak_value });
            }
        }
        MethodArg::Sn => {
            let table = load_table()?;
            let c1 = table.lookup(1, inf.omega, inf.tau).map_err(|e| CliError::from_core(e, "per-lag bands"))?;
            if ps.is_empty() {
                ps = (1..=kmax).filter(|&p| table.get(p, inf.omega, inf.tau).is_some()).collect();
            }
            let cfg = SnConfig { omega: inf.omega, tau: inf.tau, table: &table };
            cfg.validate().map_err(|e| CliError::from_core(e, ""))?;
            for &pair in grid.pairs() {
                let ctx = |e: Error| {
                    let c = lag_context(&e, pair);
                    CliError::from_core(e, &c)
                };
                let rec = recursive_cq(&x1, &x2, kmax, pair, inf.omega).map_err(ctx)?;
                let a = a_hat(&rec).matrix;
                let rho = rec.full();
                for &k in &lags {
                    let half = (c1 * a[(k - 1, k - 1)] / t as f64).sqrt();
                    let r = rho[k - 1];
                    rho_records.push(RhoRecord {
                        alpha1: pair.a1.value(),
                        alpha2: pair.a2.value(),
                        k,
                        rho_hat: r,
                        ci_low: r - half,
                        ci_high: r + half,
                        band_low: -half,
                        band_high: half,
                    });
                }
                for &p in &ps {
                    let cv = table.lookup(p, inf.omega, inf.tau).map_err(ctx)?;
                    let sub = a.view((0, 0), (p, p)).into_owned();
                    let q = s_statistic(&rho[..p], t, &sub).map_err(ctx)?;
                    port.push(PortmanteauRecord {
                        alpha1: pair.a1.value(),
                        alpha2: pair.a2.value(),
                        p,
                        q,
                        critical_value: cv,
                        reject: q > cv,
                    });
                }
                if let Some(&pmax) = ps.last() {
                    reports.push(sn_test(&x1, &x2, pmax, pair, &cfg).map_err(ctx)?);
                }
                let (peak_lag, peak_value) = peak_over(&lags, rho);
                peaks.push(PeakRecord { alpha1: pair.a1.value(), alpha2: pair.a2.value(), peak_lag, peak_value });
            }
        }
    }

    let echo = CqEcho {
        command: "cq",
        inputs,
        x1: &args.data.x1,
        x2: &args.data.x2,
        alpha1: &a1,
        alpha2: &a2,
        lags: &lags,
        p: &ps,
        method: inf.method,
        replicates: (inf.method == MethodArg::Sb).then_some(b),
        gamma: inf.gamma,
        omega: inf.omega,
        tau: inf.tau,
        seed: inf.seed,
        format: args.output.format,
    };
    let stem = format!("cq-{}", config_hash(&echo));
    let dir = &args.output.out;
    let fmt = args.output.format;
    let io = |e: std::io::Error| CliError::Output(format!("{}: {e}", dir.display()));
    let files = vec![
        emit(dir, &format!("{stem}-rho"), &rho_records, fmt).map_err(io)?,
        emit(dir, &format!("{stem}-portmanteau"), &port, fmt).map_err(io)?,
        emit(dir, &format!("{stem}-peaks"), &peaks, fmt).map_err(io)?,
        emit(dir, &format!("{stem}-reports"), &reports, super::Format::Json).map_err(io)?,
    ];
    Ok(CqOutput { rho: rho_records, portmanteau: port, peaks, reports, files })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialOutput {
    pub records: Vec<PartialRecord>,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct PartialEcho<'a> {
    command: &'static str,
    inputs: Vec<InputEcho>,
    x1: &'a str,
    x2: &'a str,
    controls: &'a [String],
    beta: &'a [f64],
    alpha1: &'a [f64],
    alpha2: &'a [f64],
    lags: &'a [usize],
    method: MethodArg,
    replicates: Option<usize>,
    gamma: Option<f64>,
    omega: f64,
    tau: f64,
    seed: u64,
    format: super::Format,
}

pub fn cmd_partial(args: &PartialArgs) -> Result<PartialOutput, CliError> {
    let lags = resolve_lags(&args.lags)?;
    let a1 = parse_levels(&args.alpha1)?;
    let a2 = parse_levels(&args.alpha2)?;
    let grid = QuantileGrid::product(&a1, &a2).map_err(|e| CliError::from_core(e, "quantile grid"))?;
    let betas: Vec<f64> = match args.beta.len() {
        1 => vec![args.beta[0]; args.controls.len()],
        n if n == args.controls.len() => args.beta.clone(),
        n => return Err(config_err(format!("{n} beta levels for {} controls", args.controls.len()))),
    };
    let levels = betas
        .iter()
        .map(|&b| QuantileLevel::new(b))
        .collect::<crate::Result<Vec<_>>>()
        .map_err(|e| CliError::from_core(e, "beta"))?;
    let inf = &args.inference;
    let inputs = echo_inputs(&args.data)?;
    let (x1, x2, zs) = load_pair(&args.data, &args.controls)?;
    let t = x1.len();
    if lags.last().is_some_and(|&k| k + 2 > t) {
        return Err(config_err(format!("lags exceed T-2 = {}", t.saturating_sub(2))));
    }
    let z = ControlPanel::named(zs, levels, args.controls.clone()).map_err(|e| CliError::from_core(e, "controls"))?;
    let names = args.controls.join(", ");
    let b = inf.b.unwrap_or(DEFAULT_B);
    let table = match inf.method {
        MethodArg::Sn => Some(load_table()?),
        MethodArg::Sb => None,
    };
    let gamma = match inf.method {
        MethodArg::Sb => Some(resolve_gamma(inf, &x1, &x2)?),
        MethodArg::Sn => None,
    };

    let mut records = Vec::new();
    for &pair in grid.pairs() {
        for &k in &lags {
            let ctx = |e: Error| {
                let c = format!("{}, k={k}, controls [{names}]", pair_context(pair));
                CliError::from_core(e, &c)
            };
            let report = match inf.method {
                MethodArg::Sb => {
                    let cfg = SbConfig { gamma: gamma.expect("sb"), replicates: b, seed: inf.seed, tau: inf.tau };
                    partial_sb_test(&x1, &x2, &z, k, pair, &cfg)
                }
                MethodArg::Sn => {
                    let cfg = SnConfig { omega: inf.omega, tau: inf.tau, table: table.as_ref().expect("sn") };
                    partial_sn_test(&x1, &x2, &z, k, pair, &cfg)
                }
            }
            .map_err(ctx)?;
            let plain = cross_quantilogram(&x1, &x2, k, pair).map_err(ctx)?;
            let (ci, band) = (report.intervals[0], report.null_bands[0]);
            records.push(PartialRecord {
                alpha1: pair.a1.value(),
                alpha2: pair.a2.value(),
                k,
                partial: ci.estimate,
                ci_low: ci.low,
                ci_high: ci.high,
                band_low: band.low,
                band_high: band.high,
                statistic: report.statistic,
                critical_value: report.critical_value,
                reject: report.reject,
                plain,
            });
        }
    }

    let echo = PartialEcho {
        command: "partial",
        inputs,
        x1: &args.data.x1,
        x2: &args.data.x2,
        controls: &args.controls,
        beta: &betas,
        alpha1: &a1,
        alpha2: &a2,
        lags: &lags,
        method: inf.method,
        replicates: (inf.method == MethodArg::Sb).then_some(b),
        gamma: inf.gamma,
        omega: inf.omega,
        tau: inf.tau,
        seed: inf.seed,
        format: args.output.format,
    };
    let stem = format!("partial-{}", config_hash(&echo));
    let dir = &args.output.out;
    let path = emit(dir, &stem, &records, args.output.format)
        .map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
    Ok(PartialOutput { records, files: vec![path] })
}

#[derive(Debug, Clone, PartialEq)]
pub struct McOutput {
    pub cells: Vec<CellResult>,
    pub text: String,
    pub files: Vec<PathBuf>,
}

pub fn cmd_mc(args: &McArgs) -> Result<McOutput, CliError> {
    let inf = &args.inference;
    let grid = ExperimentGrid {
        dgp: args.dgp,
        method: inf.method.into(),
        ts: args.t.clone(),
        ps: args.p.clone(),
        alphas: parse_levels(&args.alpha)?,
        nrep: args.nrep,
        replicates: inf.b.unwrap_or(DEFAULT_MC_B),
        gamma: inf.gamma,
        omega: inf.omega,
        tau: inf.tau,
        burn_in: args.burn_in,
        seed: inf.seed,
    };
    let table = match inf.method {
        MethodArg::Sn => Some(load_table()?),
        MethodArg::Sb => None,
    };
    let cells = run_size_power(&grid, table.as_ref()).map_err(|e| CliError::from_core(e, "experiment"))?;
    let text = format_table(&cells);
    #[derive(Serialize)]
    struct Echo<'a> {
        command: &'static str,
        grid: &'a ExperimentGrid,
        table: Option<String>,
        format: super::Format,
    }
    let echo = Echo {
        command: "mc",
        grid: &grid,
        table: table.as_ref().map(CriticalValueTable::to_text),
        format: args.output.format,
    };
    let stem = format!("mc-{}", config_hash(&echo));
    let dir = &args.output.out;
    let io = |e: std::io::Error| CliError::Output(format!("{}: {e}", dir.display()));
    let data = emit(dir, &stem, &cells, args.output.format).map_err(io)?;
    let txt = dir.join(format!("{stem}.txt"));
    write_atomic(&txt, text.as_bytes()).map_err(io)?;
    Ok(McOutput { cells, text, files: vec![data, txt] })
}

/// Simulates the requested entries and writes them as `critvals.csv`.
pub fn cmd_critvals(args: &CritvalsArgs) -> Result<PathBuf, CliError> {
    if args.p.is_empty() {
        return Err(config_err("empty p list"));
    }
    let mut entries = Vec::new();
    for &p in &args.p {
        entries.extend(
            simulate_sn_critical_values_multi(p, &args.omega, &args.tau, args.n_grid, args.n_rep, args.seed)
                .map_err(|e| CliError::from_core(e, &format!("p={p}")))?,
        );
    }
    let table = CriticalValueTable::from_entries(entries);
    let path = args.out.join("critvals.csv");
    write_atomic(&path, table.to_text().as_bytes())
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    Ok(path)
}
