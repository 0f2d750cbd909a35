use serde::{Deserialize, Serialize};

use crate::cqgram::QuantilePair;

/// Inference route behind a test decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "SB")]
    StationaryBootstrap,
    #[serde(rename = "SN")]
    SelfNormalized,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::StationaryBootstrap => "SB",
            Method::SelfNormalized => "SN",
        }
    }
}

/// Interval for one lag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagInterval {
    pub k: usize,
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
}

/// Configuration echo attached to every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub pair: QuantilePair,
    pub t: usize,
    /// Portmanteau order, or the single lag for partial tests.
    pub p: usize,
    pub tau: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
}

/// Outcome of a single test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub method: Method,
    pub statistic: f64,
    pub critical_value: f64,
    pub reject: bool,
    /// Per-lag confidence intervals around the estimates.
    pub intervals: Vec<LagInterval>,
    /// Per-lag acceptance regions under no predictability.
    pub null_bands: Vec<LagInterval>,
    pub config: ReportConfig,
    /// Diagnostics: redrawn replicates, dropped subsample rows and similar.
    pub notes: Vec<String>,
}
