//! Discrete-event payment simulation under LN, zk-PCN and zk-IPCN.

mod engine;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::PublicBalancePolicy;
use crate::routing::rpg::RankStrategy;
use crate::routing::FeePolicy;
use crate::topology::{median_capacity, Network, TopologyError};
use crate::workload::{generate_trace, Payment, SenderMode, WorkloadError, WorkloadSpec};
use crate::zk::{LatencyModel, ZkError};
use crate::{Amount, ChannelId};

pub use engine::{broadcast_announcement, decoy_updates, maybe_reset_channel, Engine};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("network must be connected with at least 2 nodes")]
    BadNetwork,
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Zk(#[from] ZkError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Ln,
    Zkpcn,
    Zkipcn,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ln => "ln",
            Mode::Zkpcn => "zkpcn",
            Mode::Zkipcn => "zkipcn",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ln" => Ok(Mode::Ln),
            "zkpcn" | "zk-pcn" => Ok(Mode::Zkpcn),
            "zkipcn" | "zk-ipcn" => Ok(Mode::Zkipcn),
            other => Err(format!("unknown mode `{other}` (expected ln, zkpcn or zkipcn)")),
        }
    }
}

/// Which hash count the prover is charged for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProofLatency {
    /// Proofs are instantaneous.
    Zero,
    /// The current log length of the channel (at least 1).
    LogLength,
    /// A fixed hash count regardless of the log.
    FixedHashes(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProverAlternation {
    Deterministic,
    Seeded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub mode: Mode,
    pub capacity_factor: u64,
    pub workload: WorkloadSpec,
    pub reachability: f64,
    pub latency_model: LatencyModel,
    pub proof_latency: ProofLatency,
    pub per_hop_delay: Duration,
    pub inter_arrival: Duration,
    pub decoy_count: usize,
    /// Decoy channels also lower their public balances a little.
    pub decoy_jitter: bool,
    pub k_hop: u32,
    pub max_routes: usize,
    pub ln_max_retries: usize,
    pub prover_alternation: ProverAlternation,
    pub public_balance_policy: PublicBalancePolicy,
    pub reset_threshold: usize,
    pub fee_policy: FeePolicy,
    pub rank_strategy: RankStrategy,
    /// Probability that a generated proof is corrupted before it is sent.
    pub byzantine_rate: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            mode: Mode::Zkpcn,
            capacity_factor: 1,
            workload: WorkloadSpec::default(),
            reachability: 1.0,
            latency_model: LatencyModel::measured(),
            proof_latency: ProofLatency::LogLength,
            per_hop_delay: Duration::from_millis(10),
            inter_arrival: Duration::from_millis(1),
            decoy_count: 2,
            decoy_jitter: false,
            k_hop: 3,
            max_routes: 3,
            ln_max_retries: 10,
            prover_alternation: ProverAlternation::Deterministic,
            public_balance_policy: PublicBalancePolicy::DeltaFollow,
            reset_threshold: 1000,
            fee_policy: FeePolicy::default(),
            rank_strategy: RankStrategy::Cheapest,
            byzantine_rate: 0.0,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if self.capacity_factor < 1 {
            return bad("capacity factor must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.reachability) {
            return bad("reachability must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.byzantine_rate) {
            return bad("byzantine rate must lie in [0, 1]");
        }
        if self.k_hop < 1 {
            return bad("k-hop horizon must be at least 1");
        }
        if self.max_routes < 1 {
            return bad("max routes must be at least 1");
        }
        if self.ln_max_retries < 1 {
            return bad("LN retries must be at least 1");
        }
        if self.reset_threshold < 1 {
            return bad("reset threshold must be at least 1");
        }
        if let ProofLatency::FixedHashes(0) = self.proof_latency {
            return bad("fixed hash count must be at least 1");
        }
        if !self.public_balance_policy.is_valid() {
            return bad("public balance fraction must lie in [0, 1]");
        }
        self.workload.validate()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureReason {
    NoRoute,
    InsufficientFunds,
    StaleBalance,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentOutcome {
    pub success: bool,
    pub failure: Option<FailureReason>,
    pub path: Option<Vec<ChannelId>>,
    pub hops: usize,
    pub fees: Amount,
    pub proofs_generated: u64,
    pub latency: Duration,
    /// Paths actually tried (LN), or posts sent (zk-IPCN).
    pub attempts: u32,
}

impl PaymentOutcome {
    pub fn failed(reason: FailureReason) -> Self {
        PaymentOutcome {
            success: false,
            failure: Some(reason),
            path: None,
            hops: 0,
            fees: 0,
            proofs_generated: 0,
            latency: Duration::ZERO,
            attempts: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureCounts {
    pub no_route: u64,
    pub insufficient_funds: u64,
    pub stale_balance: u64,
    pub timeout: u64,
}

impl FailureCounts {
    pub fn record(&mut self, reason: FailureReason) {
        match reason {
            FailureReason::NoRoute => self.no_route += 1,
            FailureReason::InsufficientFunds => self.insufficient_funds += 1,
            FailureReason::StaleBalance => self.stale_balance += 1,
            FailureReason::Timeout => self.timeout += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.no_route + self.insufficient_funds + self.stale_balance + self.timeout
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tx_count: u64,
    pub successes: u64,
    pub success_rate: f64,
    pub failures: FailureCounts,
    pub proofs_generated: u64,
    /// Least-squares slope of cumulative proofs against transaction index.
    pub proof_slope: f64,
    /// Mean hop count over successful payments.
    pub mean_path_length: f64,
    pub broadcast_messages: u64,
    pub rejected_announcements: u64,
    pub resets: u64,
    /// Cumulative proofs generated after each transaction.
    pub proof_series: Vec<u64>,
}

/// Ordinary least-squares slope of `ys` against `0, 1, 2, ...`; 0 for fewer
/// than two points.
pub fn least_squares_slope(ys: &[f64]) -> f64 {
    let n = ys.len();
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mean_x = (nf - 1.0) / 2.0;
    let mean_y = ys.iter().sum::<f64>() / nf;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, &y) in ys.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    sxy / sxx
}

pub fn amount_upper(cfg: &SimConfig, base: &Network) -> Result<Amount, SimError> {
    match cfg.workload.amount_upper {
        Some(u) => Ok(u),
        None => Ok(median_capacity(base)?),
    }
}

/// Runs the configured workload on `net` (capacities before scaling).
pub fn run_simulation(cfg: &SimConfig, net: &Network) -> Result<Metrics, SimError> {
    let mut engine = Engine::new(cfg.clone(), net)?;
    let trace = generate_trace(&cfg.workload, net.node_count(), amount_upper(cfg, net)?)?;
    engine.run(&trace);
    Ok(engine.metrics())
}

/// Like [`run_simulation`] but on an explicit trace, returning every outcome.
pub fn run_trace(
    cfg: &SimConfig,
    net: &Network,
    trace: &[Payment],
) -> Result<(Metrics, Vec<PaymentOutcome>), SimError> {
    let mut engine = Engine::new(cfg.clone(), net)?;
    let outcomes = engine.run(trace);
    Ok((engine.metrics(), outcomes))
}

impl SenderMode {
    /// `0` selects uniform senders.
    pub fn from_skewness(skewness: f64) -> SenderMode {
        if skewness == 0.0 {
            SenderMode::Uniform
        } else {
            SenderMode::Skewed { skewness }
        }
    }
}
