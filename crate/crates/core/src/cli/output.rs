//! Plot-ready records and deterministic, atomic file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// One bar of a cross-quantilogram figure with its interval and null band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoRecord {
    pub alpha1: f64,
    pub alpha2: f64,
    pub k: usize,
    pub rho_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub band_low: f64,
    pub band_high: f64,
}

/// One point of a portmanteau panel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortmanteauRecord {
    pub alpha1: f64,
    pub alpha2: f64,
    pub p: usize,
    #[serde(rename = "Q")]
    pub q: f64,
    pub critical_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakRecord {
    pub alpha1: f64,
    pub alpha2: f64,
    pub peak_lag: usize,
    pub peak_value: f64,
}

/// Partial and plain values side by side for one lag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialRecord {
    pub alpha1: f64,
    pub alpha2: f64,
    pub k: usize,
    pub partial: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub statistic: f64,
    pub critical_value: f64,
    pub reject: bool,
    pub plain: f64,
}

/// First 16 hex digits of the SHA-256 of the canonical JSON form of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    hex::encode(&Sha256::digest(&json)[..8])
}

/// SHA-256 of a file's bytes, hex encoded.
pub fn file_digest(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn encode<T: Serialize>(records: &[T], format: Format) -> Vec<u8> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in records {
                w.serialize(r).expect("record serializes");
            }
            w.into_inner().expect("in-memory writer")
        }
        Format::Json => {
            let mut v = serde_json::to_vec_pretty(records).expect("records serialize");
            v.push(b'\n');
            v
        }
    }
}

pub fn decode<T: for<'de> Deserialize<'de>>(bytes: &[u8], format: Format) -> Result<Vec<T>, String> {
    match format {
        Format::Csv => csv::Reader::from_reader(bytes)
            .deserialize()
            .collect::<Result<Vec<T>, _>>()
            .map_err(|e| e.to_string()),
        Format::Json => serde_json::from_slice(bytes).map_err(|e| e.to_string()),
    }
}

/// Writes `records` as `<dir>/<stem>.<ext>` and returns the path.
pub fn emit<T: Serialize>(dir: &Path, stem: &str, records: &[T], format: Format) -> std::io::Result<PathBuf> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    write_atomic(&path, &encode(records, format))?;
    Ok(path)
}
