//! Parameter sweeps, multi-trial aggregation and CSV output.
//!
//! A sweep range is `start:stop:step` (stop included when the steps land on
//! it), a comma list `a,b,c`, or a single value. The CSV header is
//! `axis,mode,mean,std,trials`; `std` is the sample standard deviation
//! (n - 1 denominator) and is 0 for a single trial.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{least_squares_slope, run_simulation, Metrics, Mode, ProofLatency, SimConfig, SimError};
use crate::topology::Network;
use crate::workload::SenderMode;

pub const CSV_HEADER: &str = "axis,mode,mean,std,trials";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("bad sweep range `{input}`: {reason}")]
    Range { input: String, reason: String },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("axis value {axis}, trial {trial}: {source}")]
    Sim {
        axis: f64,
        trial: usize,
        #[source]
        source: SimError,
    },
    #[error("no rows to write")]
    EmptyRows,
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("series for {0} has fewer than two points")]
    ShortSeries(Mode),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    CapacityFactor,
    Skewness,
    Reachability,
    HashLatency,
    TxCount,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::CapacityFactor => "capacity",
            SweepAxis::Skewness => "skewness",
            SweepAxis::Reachability => "reachability",
            SweepAxis::HashLatency => "hash_latency",
            SweepAxis::TxCount => "tx_count",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "capacity" | "capacity_factor" => Ok(SweepAxis::CapacityFactor),
            "skewness" => Ok(SweepAxis::Skewness),
            "reachability" => Ok(SweepAxis::Reachability),
            "hash_latency" | "hashes" => Ok(SweepAxis::HashLatency),
            "tx_count" | "txs" => Ok(SweepAxis::TxCount),
            other => Err(format!(
                "unknown sweep axis `{other}` (expected capacity, skewness, reachability, hash_latency or tx_count)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    SuccessRate,
    ProofSlope,
    ProofsPerTx,
    MeanPathLength,
}

impl Metric {
    pub fn extract(self, m: &Metrics) -> f64 {
        match self {
            Metric::SuccessRate => m.success_rate,
            Metric::ProofSlope => m.proof_slope,
            Metric::ProofsPerTx => {
                if m.tx_count == 0 {
                    0.0
                } else {
                    m.proofs_generated as f64 / m.tx_count as f64
                }
            }
            Metric::MeanPathLength => m.mean_path_length,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::SuccessRate => "success_rate",
            Metric::ProofSlope => "proof_slope",
            Metric::ProofsPerTx => "proofs_per_tx",
            Metric::MeanPathLength => "mean_path_length",
        })
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "success_rate" | "success" => Ok(Metric::SuccessRate),
            "proof_slope" | "slope" => Ok(Metric::ProofSlope),
            "proofs_per_tx" => Ok(Metric::ProofsPerTx),
            "mean_path_length" | "path_length" => Ok(Metric::MeanPathLength),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

/// Keeps generated steps like `0.1 * 3` printing as `0.3`.
fn tidy(v: f64) -> f64 {
    let r = (v * 1e12).round() / 1e12;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn parse_number(input: &str, part: &str) -> Result<f64, ReportError> {
    let v: f64 = part.trim().parse().map_err(|_| ReportError::Range {
        input: input.to_string(),
        reason: format!("`{}` is not a number", part.trim()),
    })?;
    if !v.is_finite() {
        return Err(ReportError::Range {
            input: input.to_string(),
            reason: "values must be finite".into(),
        });
    }
    Ok(v)
}

/// Expands a sweep range into strictly increasing values.
pub fn parse_sweep_range(input: &str) -> Result<Vec<f64>, ReportError> {
    let err = |reason: &str| ReportError::Range {
        input: input.to_string(),
        reason: reason.to_string(),
    };
    let input_trim = input.trim();
    if input_trim.is_empty() {
        return Err(err("empty range"));
    }
    let values = if input_trim.contains(':') {
        let parts: Vec<&str> = input_trim.split(':').collect();
        let [a, b, c] = parts.as_slice() else {
            return Err(err("expected start:stop:step"));
        };
        let (start, stop, step) = (
            parse_number(input, a)?,
            parse_number(input, b)?,
            parse_number(input, c)?,
        );
        if step <= 0.0 {
            return Err(err("step must be positive"));
        }
        if stop < start {
            return Err(err("stop is below start"));
        }
        let count = ((stop - start) / step + 1e-9).floor();
        if count > 1e6 {
            return Err(err("range expands to more than a million values"));
        }
        (0..=count as u64)
            .map(|i| tidy(start + i as f64 * step))
            .collect::<Vec<_>>()
    } else {
        input_trim
            .split(',')
            .map(|p| parse_number(input, p))
            .collect::<Result<Vec<_>, _>>()?
    };
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(err("values must be strictly increasing"));
    }
    Ok(values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub base: SimConfig,
    pub modes: Vec<Mode>,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub trials: usize,
    pub metric: Metric,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        let base = SimConfig::default();
        ExperimentPlan {
            values: vec![base.capacity_factor as f64],
            base,
            modes: vec![Mode::Zkpcn],
            axis: SweepAxis::CapacityFactor,
            trials: 10,
            metric: Metric::SuccessRate,
        }
    }
}

fn whole(axis: SweepAxis, v: f64, min: f64) -> Result<u64, ReportError> {
    if v.fract() != 0.0 || v < min || v > u64::MAX as f64 {
        return Err(ReportError::InvalidPlan(format!(
            "{axis} values must be integers >= {min}, got {v}"
        )));
    }
    Ok(v as u64)
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), ReportError> {
        if self.values.is_empty() {
            return Err(ReportError::InvalidPlan("no axis values".into()));
        }
        if self.values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ReportError::InvalidPlan(
                "axis values must be strictly increasing".into(),
            ));
        }
        if self.trials == 0 {
            return Err(ReportError::InvalidPlan("trials must be at least 1".into()));
        }
        if self.modes.is_empty() {
            return Err(ReportError::InvalidPlan("at least one mode is required".into()));
        }
        for &v in &self.values {
            let cfg = self.config_for(self.modes[0], v, 0)?;
            cfg.validate().map_err(|source| ReportError::Sim {
                axis: v,
                trial: 0,
                source,
            })?;
        }
        Ok(())
    }

    /// The configuration of one trial at one axis value.
    pub fn config_for(&self, mode: Mode, value: f64, trial: usize) -> Result<SimConfig, ReportError> {
        let mut cfg = self.base.clone();
        cfg.mode = mode;
        match self.axis {
            SweepAxis::CapacityFactor => cfg.capacity_factor = whole(self.axis, value, 1.0)?,
            SweepAxis::Skewness => {
                if value < 0.0 {
                    return Err(ReportError::InvalidPlan("skewness must be >= 0".into()));
                }
                cfg.workload.mode = SenderMode::from_skewness(value);
            }
            SweepAxis::Reachability => cfg.reachability = value,
            SweepAxis::HashLatency => cfg.proof_latency = ProofLatency::FixedHashes(whole(self.axis, value, 1.0)?),
            SweepAxis::TxCount => cfg.workload.tx_count = whole(self.axis, value, 1.0)? as usize,
        }
        cfg.seed = self.base.seed.wrapping_add(trial as u64);
        cfg.workload.seed = self.base.workload.seed.wrapping_add(trial as u64);
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub axis: f64,
    pub mode: Mode,
    pub mean: f64,
    pub std: f64,
    pub trials: usize,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Runs every (axis value, mode, trial) and aggregates per (value, mode).
/// Trials may run in parallel; results are keyed, so the output order is
/// fixed.
pub fn run_plan(plan: &ExperimentPlan, net: &Network) -> Result<Vec<ResultRow>, ReportError> {
    plan.validate()?;
    let mut jobs = Vec::new();
    for &value in &plan.values {
        for &mode in &plan.modes {
            for trial in 0..plan.trials {
                jobs.push((value, mode, trial));
            }
        }
    }
    let results: Vec<Result<f64, ReportError>> = jobs
        .par_iter()
        .map(|&(value, mode, trial)| {
            let cfg = plan.config_for(mode, value, trial)?;
            let m = run_simulation(&cfg, net).map_err(|source| ReportError::Sim {
                axis: value,
                trial,
                source,
            })?;
            Ok(plan.metric.extract(&m))
        })
        .collect();
    let mut rows = Vec::new();
    let mut it = results.into_iter();
    for &value in &plan.values {
        for &mode in &plan.modes {
            let samples = it.by_ref().take(plan.trials).collect::<Result<Vec<f64>, _>>()?;
            let (mean, std) = mean_std(&samples);
            rows.push(ResultRow {
                axis: value,
                mode,
                mean,
                std,
                trials: plan.trials,
            });
        }
    }
    Ok(rows)
}

pub fn render_csv(rows: &[ResultRow]) -> Result<String, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::EmptyRows);
    }
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.axis, r.mode, r.mean, r.std, r.trials));
    }
    Ok(out)
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<(), ReportError> {
    let text = render_csv(rows)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>, ReportError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == CSV_HEADER => {}
        _ => {
            return Err(ReportError::Csv {
                line: 1,
                message: format!("expected header `{CSV_HEADER}`"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let err = |message: String| ReportError::Csv { line, message };
        let fields: Vec<&str> = raw.split(',').collect();
        let [axis, mode, mean, std, trials] = fields.as_slice() else {
            return Err(err(format!("expected 5 fields, found {}", fields.len())));
        };
        let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| err(format!("bad {what} `{s}`")));
        let row = ResultRow {
            axis: num(axis, "axis")?,
            mode: mode.parse().map_err(err)?,
            mean: num(mean, "mean")?,
            std: num(std, "std")?,
            trials: trials.parse().map_err(|_| err(format!("bad trial count `{trials}`")))?,
        };
        if row.std.is_nan() || row.std < 0.0 {
            return Err(err("std must be non-negative".into()));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Least-squares slope of each cumulative proof-count series.
pub fn emit_slope_report(series: &[(Mode, Vec<u64>)]) -> Result<Vec<(Mode, f64)>, ReportError> {
    series
        .iter()
        .map(|(mode, s)| {
            if s.len() < 2 {
                return Err(ReportError::ShortSeries(*mode));
            }
            let ys: Vec<f64> = s.iter().map(|&v| v as f64).collect();
            Ok((*mode, least_squares_slope(&ys)))
        })
        .collect()
}
