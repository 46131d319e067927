//! Command-line front end: flag parsing, topology loading and plan execution.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Parser;
use thiserror::Error;

use zkpcn::report::{parse_sweep_range, render_csv, run_plan, ExperimentPlan, Metric, ReportError, SweepAxis};
use zkpcn::sim::{Mode, ProofLatency, SimConfig};
use zkpcn::topology::{generate_synthetic, load_snapshot, CapacitySampler, TopologyError};
use zkpcn::workload::SenderMode;
use zkpcn::zk::{LatencyModel, ZkError};
use zkpcn::Network;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Clap(#[from] clap::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Latency(#[from] ZkError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl CliError {
    /// 2 for usage errors, 1 for everything that failed at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Clap(e) => e.exit_code(),
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub nodes: usize,
    pub channels: usize,
    pub median: u64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            nodes: 1000,
            channels: 4000,
            median: 100_000,
            sigma: 1.0,
            seed: 1,
        }
    }
}

impl FromStr for SyntheticSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut spec = SyntheticSpec::default();
        for part in s.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got `{part}`"))?;
            let bad = |_| format!("bad value `{v}` for {k}");
            match k.trim() {
                "n" | "nodes" => spec.nodes = v.parse().map_err(bad)?,
                "channels" => spec.channels = v.parse().map_err(bad)?,
                "median" => spec.median = v.parse().map_err(bad)?,
                "sigma" => spec.sigma = v.parse().map_err(|_| format!("bad value `{v}` for sigma"))?,
                "seed" => spec.seed = v.parse().map_err(bad)?,
                other => return Err(format!("unknown synthetic key `{other}`")),
            }
        }
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TopologySource {
    File(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CliPlan {
    pub plan: ExperimentPlan,
    pub topology: TopologySource,
    /// `builtin` or a file path.
    pub latency_table: String,
    pub out: Option<PathBuf>,
}

fn parse_unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn parse_positive(s: &str) -> Result<u64, String> {
    match s.parse::<u64>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("`{s}` is not a positive integer")),
    }
}

fn parse_skewness(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("skewness must be finite and >= 0, got {s}"))
    }
}

fn parse_latency(s: &str) -> Result<ProofLatency, String> {
    match s {
        "zero" => Ok(ProofLatency::Zero),
        "log-length" | "log_length" => Ok(ProofLatency::LogLength),
        _ => match s.strip_prefix("hashes=") {
            Some(n) => parse_positive(n).map(ProofLatency::FixedHashes),
            None => Err(format!("expected zero, log-length or hashes=<n>, got `{s}`")),
        },
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "zkpcn-sim",
    version,
    about = "Payment channel network simulator: LN, zk-PCN and zk-IPCN success rates and proof counts",
    after_help = "Sweep ranges are start:stop:step (stop included when a step lands on it), \
a comma list such as 1,2,4,8, or a single value. Axes: capacity, skewness, reachability, \
hash_latency, tx_count.\n\nResults go to --out (or stdout) as CSV with header \
axis,mode,mean,std,trials; std is the sample standard deviation over trials."
)]
struct Args {
    /// Modes to run, comma separated: ln, zkpcn, zkipcn.
    #[arg(long, value_delimiter = ',', default_value = "zkpcn")]
    mode: Vec<Mode>,
    /// Topology file with `channel <a> <b> <capacity>` records.
    #[arg(long, conflicts_with = "synthetic")]
    topology: Option<PathBuf>,
    /// Synthetic network, e.g. n=1000,channels=4000[,median=..,sigma=..,seed=..].
    #[arg(long)]
    synthetic: Option<SyntheticSpec>,
    #[arg(long, default_value_t = 1, value_parser = parse_positive)]
    capacity_factor: u64,
    /// Sender skewness; 0 selects uniform senders.
    #[arg(long, default_value_t = 0.0, value_parser = parse_skewness)]
    skewness: f64,
    /// Transactions per trial.
    #[arg(long, default_value_t = 5000, value_parser = parse_positive)]
    txs: u64,
    /// Probability that a node receives a broadcast announcement.
    #[arg(long, default_value_t = 1.0, value_parser = parse_unit)]
    reachability: f64,
    /// Prover calibration table file, or `builtin`.
    #[arg(long, default_value = "builtin")]
    latency_table: String,
    /// Hash count charged per proof: zero, log-length or hashes=<n>.
    #[arg(long, default_value = "log-length", value_parser = parse_latency)]
    latency: ProofLatency,
    /// Decoy channels refreshed per committed payment.
    #[arg(long, default_value_t = 2)]
    decoys: usize,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    k_hop: u32,
    #[arg(long, default_value_t = 10, value_parser = parse_positive)]
    ln_retries: u64,
    /// Sweep an axis over a range: --sweep <AXIS> <RANGE>.
    #[arg(long, num_args = 2, value_names = ["AXIS", "RANGE"])]
    sweep: Option<Vec<String>>,
    #[arg(long, default_value_t = 10, value_parser = parse_positive)]
    trials: u64,
    /// Base seed; trial i uses seed + i.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// success_rate, proof_slope, proofs_per_tx or mean_path_length.
    #[arg(long, default_value = "success_rate")]
    metric: Metric,
}

/// Parses command-line arguments (including the program name) into a plan.
pub fn parse_cli<I, T>(args: I) -> Result<CliPlan, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let a = Args::try_parse_from(args)?;
    let mut modes = Vec::new();
    for m in a.mode {
        if !modes.contains(&m) {
            modes.push(m);
        }
    }
    let mut base = SimConfig {
        capacity_factor: a.capacity_factor,
        reachability: a.reachability,
        proof_latency: a.latency,
        decoy_count: a.decoys,
        k_hop: a.k_hop,
        ln_max_retries: a.ln_retries as usize,
        seed: a.seed,
        ..SimConfig::default()
    };
    base.workload.mode = SenderMode::from_skewness(a.skewness);
    base.workload.tx_count = a.txs as usize;
    base.workload.seed = a.seed;

    let (axis, values) = match a.sweep {
        Some(v) => {
            let axis: SweepAxis = v[0].parse().map_err(CliError::Usage)?;
            let values = parse_sweep_range(&v[1]).map_err(|e| CliError::Usage(e.to_string()))?;
            (axis, values)
        }
        None => (SweepAxis::CapacityFactor, vec![a.capacity_factor as f64]),
    };
    let plan = ExperimentPlan {
        base,
        modes,
        axis,
        values,
        trials: a.trials as usize,
        metric: a.metric,
    };
    plan.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let topology = match (a.topology, a.synthetic) {
        (Some(p), _) => TopologySource::File(p),
        (None, Some(s)) => TopologySource::Synthetic(s),
        (None, None) => TopologySource::Synthetic(SyntheticSpec::default()),
    };
    Ok(CliPlan {
        plan,
        topology,
        latency_table: a.latency_table,
        out: a.out,
    })
}

/// Human-readable effective configuration.
pub fn describe(cli: &CliPlan) -> String {
    let p = &cli.plan;
    let b = &p.base;
    let mut s = String::new();
    let modes: Vec<String> = p.modes.iter().map(|m| m.to_string()).collect();
    let _ = writeln!(s, "modes            {}", modes.join(","));
    match &cli.topology {
        TopologySource::File(path) => {
            let _ = writeln!(s, "topology         {}", path.display());
        }
        TopologySource::Synthetic(t) => {
            let _ = writeln!(
                s,
                "topology         synthetic n={} channels={} median={} sigma={} seed={}",
                t.nodes, t.channels, t.median, t.sigma, t.seed
            );
        }
    }
    let values: Vec<String> = p.values.iter().map(|v| v.to_string()).collect();
    let _ = writeln!(s, "sweep            {} = [{}]", p.axis, values.join(", "));
    let _ = writeln!(s, "trials           {}", p.trials);
    let _ = writeln!(s, "metric           {}", p.metric);
    let _ = writeln!(s, "capacity factor  {}", b.capacity_factor);
    let sender = match b.workload.mode {
        SenderMode::Uniform => "uniform".to_string(),
        SenderMode::Skewed { skewness } => format!("skewed({skewness})"),
    };
    let _ = writeln!(s, "senders          {sender}");
    let _ = writeln!(s, "transactions     {}", b.workload.tx_count);
    let _ = writeln!(s, "reachability     {}", b.reachability);
    let _ = writeln!(s, "latency table    {}", cli.latency_table);
    let latency = match b.proof_latency {
        ProofLatency::Zero => "zero".to_string(),
        ProofLatency::LogLength => "log-length".to_string(),
        ProofLatency::FixedHashes(n) => format!("hashes={n}"),
    };
    let _ = writeln!(s, "proof latency    {latency}");
    let _ = writeln!(s, "decoys           {}", b.decoy_count);
    let _ = writeln!(s, "k-hop            {}", b.k_hop);
    let _ = writeln!(s, "ln retries       {}", b.ln_max_retries);
    let _ = writeln!(s, "seed             {}", b.seed);
    let _ = writeln!(
        s,
        "out              {}",
        cli.out.as_ref().map_or("-".to_string(), |p| p.display().to_string())
    );
    s
}

fn read(path: &PathBuf) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::File {
        path: path.clone(),
        source,
    })
}

pub fn load_network(source: &TopologySource) -> Result<Network, CliError> {
    match source {
        TopologySource::File(path) => Ok(load_snapshot(&read(path)?)?),
        TopologySource::Synthetic(t) => Ok(generate_synthetic(
            t.nodes,
            t.channels,
            &CapacitySampler::LogNormal {
                median: t.median,
                sigma: t.sigma,
            },
            t.seed,
        )?),
    }
}

pub fn load_latency(spec: &str) -> Result<LatencyModel, CliError> {
    if spec == "builtin" {
        Ok(LatencyModel::measured())
    } else {
        Ok(LatencyModel::parse(&read(&PathBuf::from(spec))?)?)
    }
}

/// Loads inputs, runs the plan and returns the CSV text.
pub fn execute(cli: &CliPlan) -> Result<String, CliError> {
    let net = load_network(&cli.topology)?;
    let mut plan = cli.plan.clone();
    plan.base.latency_model = load_latency(&cli.latency_table)?;
    let rows = run_plan(&plan, &net)?;
    Ok(render_csv(&rows)?)
}
