use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const TABLE_HEADER: &str = "# xqgram self-normalized critical values, format 1";
const COLUMNS: &str = "p,omega,tau,value,n_grid,n_rep,seed";

/// One simulated critical value with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalValue {
    pub p: usize,
    pub omega: f64,
    pub tau: f64,
    pub value: f64,
    pub n_grid: usize,
    pub n_rep: usize,
    pub seed: u64,
}

/// Critical values `c_{S,tau}` keyed by `(p, omega, tau)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CriticalValueTable {
    entries: Vec<CriticalValue>,
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

impl CriticalValueTable {
    /// The table shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(include_str!("../../data/critvals.csv")).expect("shipped table parses")
    }

    pub fn from_entries(entries: Vec<CriticalValue>) -> Self {
        let mut t = Self::default();
        for e in entries {
            t.insert(e);
        }
        t
    }

    pub fn entries(&self) -> &[CriticalValue] {
        &self.entries
    }

    /// Adds or replaces the entry for `(p, omega, tau)`.
    pub fn insert(&mut self, e: CriticalValue) {
        match self
            .entries
            .iter_mut()
            .find(|x| x.p == e.p && same(x.omega, e.omega) && same(x.tau, e.tau))
        {
            Some(x) => *x = e,
            None => self.entries.push(e),
        }
    }

    pub fn get(&self, p: usize, omega: f64, tau: f64) -> Option<&CriticalValue> {
        self.entries
            .iter()
            .find(|x| x.p == p && same(x.omega, omega) && same(x.tau, tau))
    }

    pub fn lookup(&self, p: usize, omega: f64, tau: f64) -> Result<f64> {
        self.get(p, omega, tau)
            .map(|e| e.value)
            .ok_or(Error::MissingCriticalValue { p, omega, tau })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, l)) if l.trim() == TABLE_HEADER => {}
            other => {
                return Err(Error::TableFormat {
                    line: other.map_or(1, |(i, _)| i + 1),
                    message: format!("expected header line `{TABLE_HEADER}`"),
                })
            }
        }
        match lines.next() {
            Some((_, l)) if l.trim() == COLUMNS => {}
            other => {
                return Err(Error::TableFormat {
                    line: other.map_or(2, |(i, _)| i + 1),
                    message: format!("expected column line `{COLUMNS}`"),
                })
            }
        }
        let mut table = Self::default();
        for (i, line) in lines {
            let bad = |m: &str| Error::TableFormat { line: i + 1, message: m.to_string() };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 7 {
                return Err(bad("expected 7 comma-separated fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad number `{s}`")));
            let int = |s: &str| s.parse::<u64>().map_err(|_| bad(&format!("bad integer `{s}`")));
            table.insert(CriticalValue {
                p: int(f[0])? as usize,
                omega: num(f[1])?,
                tau: num(f[2])?,
                value: num(f[3])?,
                n_grid: int(f[4])? as usize,
                n_rep: int(f[5])? as usize,
                seed: int(f[6])?,
            });
        }
        Ok(table)
    }

    /// Text form, sorted by `(p, omega, tau)`.
    pub fn to_text(&self) -> String {
        let mut rows = self.entries.clone();
        rows.sort_by(|a, b| {
            a.p.cmp(&b.p)
                .then(a.omega.total_cmp(&b.omega))
                .then(a.tau.total_cmp(&b.tau))
        });
        let mut out = format!("{TABLE_HEADER}\n{COLUMNS}\n");
        for e in rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                e.p, e.omega, e.tau, e.value, e.n_grid, e.n_rep, e.seed
            );
        }
        out
    }
}
