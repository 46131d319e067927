//! Channel graph: loading, synthesis, capacity scaling and k-hop views.
//!
//! Topology documents are UTF-8 text with one record per line:
//!
//! ```text
//! # comment
//! channel <node_a> <node_b> <capacity>
//! node <node>
//! ```
//!
//! `node` records are optional and only pin a node's position in the load
//! order (which the skewed workload uses as its sender ranking).

use std::collections::{BTreeSet, HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{Amount, ChannelId, NodeId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: channel {a}-{b} has non-positive capacity {capacity}")]
    NonPositiveCapacity {
        line: usize,
        a: String,
        b: String,
        capacity: String,
    },
    #[error("line {line}: channel {node}-{node} is a self-loop")]
    SelfLoop { line: usize, node: String },
    #[error("network has no channels")]
    NoChannels,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("invalid generator parameters: {0}")]
    InvalidParameters(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub id: ChannelId,
    /// Lexicographically smaller endpoint by node name.
    pub a: NodeId,
    pub b: NodeId,
    pub capacity: Amount,
}

impl ChannelSpec {
    pub fn other(&self, node: NodeId) -> NodeId {
        if node == self.a {
            self.b
        } else {
            self.a
        }
    }

    pub fn touches(&self, node: NodeId) -> bool {
        self.a == node || self.b == node
    }

    /// Initial split: the `a` side gets the floor half, `b` the remainder.
    pub fn initial_split(&self) -> (Amount, Amount) {
        let half = self.capacity / 2;
        (half, self.capacity - half)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    names: Vec<String>,
    channels: Vec<ChannelSpec>,
    adjacency: Vec<Vec<ChannelId>>,
    #[serde(skip)]
    by_name: HashMap<String, NodeId>,
}

impl Network {
    fn empty() -> Self {
        Network {
            names: Vec::new(),
            channels: Vec::new(),
            adjacency: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    fn intern(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.by_name.get(name) {
            return id;
        }
        let id = NodeId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.adjacency.push(Vec::new());
        self.by_name.insert(name.to_string(), id);
        id
    }

    /// Adds a channel; endpoints are reordered so that `a` has the smaller name.
    fn push_channel(&mut self, x: NodeId, y: NodeId, capacity: Amount) -> ChannelId {
        let (a, b) = if self.names[x.index()] <= self.names[y.index()] {
            (x, y)
        } else {
            (y, x)
        };
        let id = ChannelId(self.channels.len() as u32);
        self.channels.push(ChannelSpec { id, a, b, capacity });
        self.adjacency[a.index()].push(id);
        self.adjacency[b.index()].push(id);
        id
    }

    /// Builds a network from named nodes and `(a, b, capacity)` triples.
    pub fn from_edges<S: AsRef<str>>(nodes: &[S], edges: &[(usize, usize, Amount)]) -> Result<Network, TopologyError> {
        let mut net = Network::empty();
        for n in nodes {
            net.intern(n.as_ref());
        }
        for (i, &(x, y, cap)) in edges.iter().enumerate() {
            let line = i + 1;
            let (Some(xn), Some(yn)) = (nodes.get(x), nodes.get(y)) else {
                return Err(TopologyError::Parse {
                    line,
                    message: format!("edge ({x},{y}) references a missing node"),
                });
            };
            if x == y {
                return Err(TopologyError::SelfLoop {
                    line,
                    node: xn.as_ref().to_string(),
                });
            }
            if cap == 0 {
                return Err(TopologyError::NonPositiveCapacity {
                    line,
                    a: xn.as_ref().to_string(),
                    b: yn.as_ref().to_string(),
                    capacity: "0".into(),
                });
            }
            net.push_channel(NodeId(x as u32), NodeId(y as u32), cap);
        }
        Ok(net)
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.names.len() as u32).map(NodeId)
    }

    pub fn channels(&self) -> &[ChannelSpec] {
        &self.channels
    }

    pub fn channel(&self, id: ChannelId) -> &ChannelSpec {
        &self.channels[id.index()]
    }

    pub fn incident(&self, node: NodeId) -> &[ChannelId] {
        &self.adjacency[node.index()]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adjacency[node.index()].len()
    }

    pub fn name(&self, node: NodeId) -> &str {
        &self.names[node.index()]
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.by_name.get(name).copied()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.index() < self.names.len()
    }

    pub fn total_capacity(&self) -> u128 {
        self.channels.iter().map(|c| c.capacity as u128).sum()
    }

    /// Hop distances from `src`; `None` for unreachable nodes.
    pub fn bfs_distances(&self, src: NodeId) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.node_count()];
        let mut queue = VecDeque::new();
        dist[src.index()] = Some(0);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = dist[u.index()].unwrap();
            for &c in self.incident(u) {
                let v = self.channel(c).other(u);
                if dist[v.index()].is_none() {
                    dist[v.index()] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        if self.node_count() == 0 {
            return true;
        }
        self.bfs_distances(NodeId(0)).iter().all(Option::is_some)
    }

    /// Serializes back into the text document format.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        for n in &self.names {
            out.push_str("node ");
            out.push_str(n);
            out.push('\n');
        }
        for c in &self.channels {
            out.push_str(&format!(
                "channel {} {} {}\n",
                self.names[c.a.index()],
                self.names[c.b.index()],
                c.capacity
            ));
        }
        out
    }

    /// Rebuilds the name index after deserialization.
    pub fn reindex(&mut self) {
        self.by_name = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), NodeId(i as u32)))
            .collect();
    }
}

/// Parses a topology document.
pub fn load_snapshot(document: &str) -> Result<Network, TopologyError> {
    let mut net = Network::empty();
    for (i, raw) in document.lines().enumerate() {
        let line = i + 1;
        let text = raw.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        match fields.as_slice() {
            ["node", name] => {
                net.intern(name);
            }
            ["channel", a, b, cap] => {
                if a == b {
                    return Err(TopologyError::SelfLoop {
                        line,
                        node: a.to_string(),
                    });
                }
                let value: i128 = cap.parse().map_err(|_| TopologyError::Parse {
                    line,
                    message: format!("capacity {cap:?} is not an integer"),
                })?;
                if value <= 0 {
                    return Err(TopologyError::NonPositiveCapacity {
                        line,
                        a: a.to_string(),
                        b: b.to_string(),
                        capacity: cap.to_string(),
                    });
                }
                let capacity = Amount::try_from(value).map_err(|_| TopologyError::Parse {
                    line,
                    message: format!("capacity {cap} overflows 64 bits"),
                })?;
                let x = net.intern(a);
                let y = net.intern(b);
                net.push_channel(x, y, capacity);
            }
            [kind, ..] if *kind == "channel" || *kind == "node" => {
                return Err(TopologyError::Parse {
                    line,
                    message: format!("wrong field count for {kind} record"),
                });
            }
            [kind, ..] => {
                return Err(TopologyError::Parse {
                    line,
                    message: format!("unknown record type {kind:?}"),
                });
            }
            [] => unreachable!("blank lines are skipped"),
        }
    }
    Ok(net)
}

/// Distribution of synthetic channel capacities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CapacitySampler {
    Constant(Amount),
    Uniform {
        min: Amount,
        max: Amount,
    },
    /// Log-normal with the given median and log-space standard deviation.
    LogNormal {
        median: Amount,
        sigma: f64,
    },
}

impl Default for CapacitySampler {
    fn default() -> Self {
        CapacitySampler::LogNormal {
            median: 100_000,
            sigma: 1.0,
        }
    }
}

impl CapacitySampler {
    fn validate(&self) -> Result<(), TopologyError> {
        let bad = |m: &str| Err(TopologyError::InvalidParameters(m.to_string()));
        match *self {
            CapacitySampler::Constant(0) => bad("constant capacity must be positive"),
            CapacitySampler::Uniform { min, max } if min == 0 || min > max => {
                bad("uniform capacity needs 0 < min <= max")
            }
            CapacitySampler::LogNormal { median, sigma } if median == 0 || !(sigma.is_finite() && sigma >= 0.0) => {
                bad("log-normal capacity needs median > 0 and finite sigma >= 0")
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Amount {
        match *self {
            CapacitySampler::Constant(c) => c,
            CapacitySampler::Uniform { min, max } => rng.gen_range(min..=max),
            CapacitySampler::LogNormal { median, sigma } => {
                let d = LogNormal::new((median as f64).ln(), sigma).expect("validated");
                let x: f64 = d.sample(rng);
                (x.round() as Amount).max(1)
            }
        }
    }
}

/// Connected preferential-attachment graph: a degree-biased spanning tree
/// followed by extra edges whose endpoints are both drawn degree-biased.
///
/// Node `i` is named `n<i>` zero-padded, so load order, index order and
/// name order coincide and the oldest (best connected) nodes come first.
pub fn generate_synthetic(
    n: usize,
    target_channels: usize,
    capacity: &CapacitySampler,
    seed: u64,
) -> Result<Network, TopologyError> {
    if n < 2 {
        return Err(TopologyError::InvalidParameters("need at least 2 nodes".into()));
    }
    if target_channels < n - 1 {
        return Err(TopologyError::InvalidParameters(format!(
            "{target_channels} channels cannot connect {n} nodes"
        )));
    }
    let max_edges = n as u128 * (n as u128 - 1) / 2;
    if target_channels as u128 > max_edges {
        return Err(TopologyError::InvalidParameters(format!(
            "{target_channels} channels exceed the {max_edges} possible pairs"
        )));
    }
    capacity.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = (n - 1).to_string().len();
    let mut net = Network::empty();
    for i in 0..n {
        net.intern(&format!("n{i:0width$}"));
    }

    // Each node appears once per incident edge plus once as smoothing.
    let mut urn: Vec<u32> = vec![0];
    let mut present: BTreeSet<(u32, u32)> = BTreeSet::new();
    let mut edges: Vec<(u32, u32)> = Vec::with_capacity(target_channels);

    for i in 1..n as u32 {
        let j = urn[rng.gen_range(0..urn.len())];
        edges.push((j, i));
        present.insert((j, i));
        urn.extend([i, j, i]);
    }

    let mut misses = 0usize;
    while edges.len() < target_channels && misses < 64 * target_channels {
        let u = urn[rng.gen_range(0..urn.len())];
        let v = urn[rng.gen_range(0..urn.len())];
        let key = (u.min(v), u.max(v));
        if u == v || present.contains(&key) {
            misses += 1;
            continue;
        }
        present.insert(key);
        edges.push(key);
        urn.extend([u, v]);
    }
    if edges.len() < target_channels {
        // Dense corner: fall back to a shuffled list of the remaining pairs.
        let mut rest: Vec<(u32, u32)> = (0..n as u32)
            .flat_map(|u| (u + 1..n as u32).map(move |v| (u, v)))
            .filter(|p| !present.contains(p))
            .collect();
        rest.shuffle(&mut rng);
        edges.extend(rest.into_iter().take(target_channels - edges.len()));
    }

    for (u, v) in edges {
        let cap = capacity.sample(&mut rng);
        net.push_channel(NodeId(u), NodeId(v), cap);
    }
    Ok(net)
}

pub fn apply_capacity_factor(net: &Network, factor: u64) -> Network {
    assert!(factor >= 1, "capacity factor must be at least 1");
    let mut out = net.clone();
    for c in &mut out.channels {
        c.capacity = c
            .capacity
            .checked_mul(factor)
            .expect("scaled capacity overflows 64 bits");
    }
    out
}

/// Median channel capacity; the lower middle value for even counts.
pub fn median_capacity(net: &Network) -> Result<Amount, TopologyError> {
    if net.channels.is_empty() {
        return Err(TopologyError::NoChannels);
    }
    let mut caps: Vec<Amount> = net.channels.iter().map(|c| c.capacity).collect();
    caps.sort_unstable();
    Ok(caps[(caps.len() - 1) / 2])
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StaticView {
    pub owner: NodeId,
    pub horizon: u32,
    /// Channels with both endpoints within `horizon` hops, by id.
    pub channels: Vec<ChannelSpec>,
    /// Nodes within `horizon` hops.
    pub nodes: BTreeSet<NodeId>,
}

impl StaticView {
    pub fn covers(&self, node: NodeId) -> bool {
        self.nodes.contains(&node)
    }

    pub fn channel_ids(&self) -> BTreeSet<ChannelId> {
        self.channels.iter().map(|c| c.id).collect()
    }
}

pub fn k_hop_view(net: &Network, owner: NodeId, k: u32) -> Result<StaticView, TopologyError> {
    if !net.contains(owner) {
        return Err(TopologyError::UnknownNode(owner));
    }
    if k == 0 {
        return Err(TopologyError::InvalidParameters("k must be at least 1".into()));
    }
    let mut dist: HashMap<NodeId, u32> = HashMap::new();
    let mut queue = VecDeque::new();
    dist.insert(owner, 0);
    queue.push_back(owner);
    while let Some(u) = queue.pop_front() {
        let du = dist[&u];
        if du == k {
            continue;
        }
        for &c in net.incident(u) {
            let v = net.channel(c).other(u);
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(v) {
                e.insert(du + 1);
                queue.push_back(v);
            }
        }
    }
    let nodes: BTreeSet<NodeId> = dist.keys().copied().collect();
    let mut ids: BTreeSet<ChannelId> = BTreeSet::new();
    for &u in &nodes {
        for &c in net.incident(u) {
            if nodes.contains(&net.channel(c).other(u)) {
                ids.insert(c);
            }
        }
    }
    Ok(StaticView {
        owner,
        horizon: k,
        channels: ids.into_iter().map(|c| net.channel(c).clone()).collect(),
        nodes,
    })
}
