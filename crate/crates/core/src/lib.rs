//! Cross-quantilogram estimation and inference.
//!
//! The crate measures directional dependence between the quantile-hit
//! processes of two stationary series, and tests for it either with the
//! stationary bootstrap or with self-normalized statistics whose critical
//! values are simulated from a Brownian-bridge limit. A partial version
//! controls for the hit processes of additional state variables.
//!
//! Module map:
//! - [`quantile`]: check loss, empirical and recursive quantiles
//! - [`cqgram`]: the sample cross-quantilogram and portmanteau statistics
//! - [`bootstrap`]: stationary-bootstrap resampling, intervals, critical values
//! - [`selfnorm`]: recursive estimates, self-normalized statistic, critical-value tables
//! - [`partial`]: partial cross-quantilogram under control variables
//! - [`mc`]: data-generating processes and size/power experiments
//! - [`cli`]: command-line front end

pub mod bootstrap;
pub mod cli;
pub mod cqgram;
mod error;
pub mod mc;
pub mod partial;
pub mod quantile;
pub mod report;
pub mod rng;
pub mod selfnorm;

pub use cqgram::{CqResult, HitCounts, Portmanteau, QuantileGrid, QuantilePair};
pub use error::{Error, Result};
pub use quantile::{QuantileLevel, TimeSeries};
pub use report::{Method, TestReport};
