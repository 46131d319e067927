//! Reactive proof generation: Collect, Forward, Response and RangeRank.
//!
//! A sender wraps each candidate route in an [`Onion`]. Each forwarding
//! node peels exactly one layer, which tells it only the outgoing channel
//! and next hop, appends its own `(proof, statement)` pair and fee, and
//! passes the post on. The recipient echoes the accumulated pairs back.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FeePolicy, Route};
use crate::topology::Network;
use crate::zk::{self, Proof, PublicParams, Statement};
use crate::{Amount, ChannelId, NodeId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RpgError {
    #[error("onion layer is not addressed to {0}")]
    NotForThisNode(NodeId),
    #[error("{0} cannot serve the amount; post dropped")]
    DropPost(NodeId),
    #[error("{0} is not the final hop")]
    NotDestination(NodeId),
}

#[derive(Clone, PartialEq, Eq)]
struct Layer {
    owner: NodeId,
    forward: Option<(ChannelId, NodeId)>,
}

/// Layered routing envelope. Only the outermost layer can be opened, and
/// only by the node it is addressed to.
#[derive(Clone, PartialEq, Eq)]
pub struct Onion {
    layers: VecDeque<Layer>,
}

impl fmt::Debug for Onion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Onion(sealed)")
    }
}

impl Onion {
    pub fn wrap(route: &Route) -> Onion {
        let mut layers: VecDeque<Layer> = route
            .hops
            .iter()
            .map(|h| Layer {
                owner: h.from,
                forward: Some((h.channel, h.to)),
            })
            .collect();
        if let Some(dst) = route.destination() {
            layers.push_back(Layer {
                owner: dst,
                forward: None,
            });
        }
        Onion { layers }
    }

    /// Opens the outer layer: the outgoing channel and next hop, or `None`
    /// at the destination.
    pub fn peel(mut self, node: NodeId) -> Result<(Option<(ChannelId, NodeId)>, Onion), RpgError> {
        match self.layers.front() {
            Some(l) if l.owner == node => {
                let layer = self.layers.pop_front().expect("front exists");
                Ok((layer.forward, self))
            }
            _ => Err(RpgError::NotForThisNode(node)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoutePost {
    pub route_id: u64,
    pub tran: Amount,
    pub onion: Onion,
    pub accumulated: Vec<(Proof, Statement)>,
    pub fee: Amount,
}

impl RoutePost {
    pub fn new(route_id: u64, route: &Route, tran: Amount) -> RoutePost {
        RoutePost {
            route_id,
            tran,
            onion: Onion::wrap(route),
            accumulated: Vec::new(),
            fee: 0,
        }
    }
}

/// Everything a forwarding node can learn from a post.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HopView {
    pub prev_hop: Option<NodeId>,
    pub next_hop: NodeId,
    pub tran: Amount,
    pub accumulated: Vec<(Proof, Statement)>,
    pub fee: Amount,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteResponse {
    pub route_id: u64,
    pub proofs_and_statements: Vec<(Proof, Statement)>,
    pub fee: Amount,
}

#[derive(Clone, Debug)]
pub struct HopProof {
    pub statement: Statement,
    pub proof: Proof,
    /// Simulated prover time; zero when a cached proof was reused.
    pub cost: Duration,
    pub generated: bool,
}

/// Per-node dynamic state consulted while forwarding.
pub trait HopState {
    /// The node's current proof for `channel`, regenerated if stale.
    fn hop_proof(&mut self, node: NodeId, channel: ChannelId) -> HopProof;
    fn fee_policy(&self, node: NodeId) -> FeePolicy;
}

#[derive(Debug)]
pub struct Forwarded {
    pub post: RoutePost,
    pub next_hop: NodeId,
    pub view: HopView,
    pub cost: Duration,
    pub generated: bool,
}

pub fn rpg_forward<H: HopState + ?Sized>(
    node: NodeId,
    prev_hop: Option<NodeId>,
    post: RoutePost,
    net: &Network,
    state: &mut H,
) -> Result<Forwarded, RpgError> {
    let RoutePost {
        route_id,
        tran,
        onion,
        mut accumulated,
        fee,
    } = post;
    let (forward, onion) = onion.peel(node)?;
    let Some((channel, next_hop)) = forward else {
        return Err(RpgError::NotForThisNode(node));
    };
    let view = HopView {
        prev_hop,
        next_hop,
        tran,
        accumulated: accumulated.clone(),
        fee,
    };
    let hp = state.hop_proof(node, channel);
    let mine = if net.channel(channel).a == node {
        hp.statement.public.0
    } else {
        hp.statement.public.1
    };
    if mine < tran {
        return Err(RpgError::DropPost(node));
    }
    accumulated.push((hp.proof, hp.statement));
    let fee = fee.saturating_add(state.fee_policy(node).fee(tran));
    Ok(Forwarded {
        post: RoutePost {
            route_id,
            tran,
            onion,
            accumulated,
            fee,
        },
        next_hop,
        view,
        cost: hp.cost,
        generated: hp.generated,
    })
}

pub fn rpg_response(recipient: NodeId, post: RoutePost) -> Result<RouteResponse, RpgError> {
    match post.onion.peel(recipient)? {
        (None, _) => Ok(RouteResponse {
            route_id: post.route_id,
            proofs_and_statements: post.accumulated,
            fee: post.fee,
        }),
        (Some(_), _) => Err(RpgError::NotDestination(recipient)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CollectParams {
    pub tran: Amount,
    pub timeout: Duration,
    pub per_hop_delay: Duration,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Collected {
    /// Valid routes, keyed by channel-id sequence, with their total fee.
    pub total_fee: BTreeMap<Vec<ChannelId>, Amount>,
    pub proofs_generated: u64,
    pub posts_sent: u64,
    pub responses_received: u64,
    pub elapsed: Duration,
}

/// Sends one post per candidate route and keeps the routes whose responses
/// arrive before `timeout` and pass verification. `delivered` decides
/// whether a response survives the trip back.
pub fn rpg_collect<H: HopState + ?Sized>(
    net: &Network,
    pp: &PublicParams,
    candidates: &[Route],
    params: CollectParams,
    state: &mut H,
    mut delivered: impl FnMut(&Route) -> bool,
) -> Collected {
    let mut out = Collected::default();
    let mut slowest = Duration::ZERO;
    let mut all_back = true;
    for (i, route) in candidates.iter().enumerate() {
        out.posts_sent += 1;
        let mut post = RoutePost::new(i as u64, route, params.tran);
        let mut prev = None;
        let mut clock = Duration::ZERO;
        let mut alive = true;
        for hop in &route.hops {
            match rpg_forward(hop.from, prev, post, net, state) {
                Ok(f) => {
                    out.proofs_generated += f.generated as u64;
                    clock += params.per_hop_delay + f.cost;
                    post = f.post;
                    prev = Some(hop.from);
                }
                Err(_) => {
                    alive = false;
                    post = RoutePost::new(i as u64, route, params.tran);
                    break;
                }
            }
        }
        if !alive {
            all_back = false;
            continue;
        }
        let dst = route.destination().expect("candidate routes are non-empty");
        let Ok(response) = rpg_response(dst, post) else {
            all_back = false;
            continue;
        };
        clock += params.per_hop_delay * route.len() as u32;
        if !delivered(route) || clock > params.timeout {
            all_back = false;
            continue;
        }
        out.responses_received += 1;
        slowest = slowest.max(clock);
        if response_is_valid(net, pp, route, params.tran, &response) {
            out.total_fee.insert(route.key(), response.fee);
        }
    }
    out.elapsed = if all_back { slowest } else { params.timeout };
    out
}

fn response_is_valid(net: &Network, pp: &PublicParams, route: &Route, tran: Amount, response: &RouteResponse) -> bool {
    response.proofs_and_statements.len() == route.len()
        && route
            .hops
            .iter()
            .zip(&response.proofs_and_statements)
            .all(|(hop, (proof, stmt))| {
                let public = if net.channel(hop.channel).a == hop.from {
                    stmt.public.0
                } else {
                    stmt.public.1
                };
                public >= tran && zk::verify(pp, stmt, proof)
            })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RankStrategy {
    Cheapest,
    /// Highest fee not exceeding the budget.
    Priority {
        budget: Amount,
    },
}

pub fn range_rank(total_fee: &BTreeMap<Vec<ChannelId>, Amount>, strategy: RankStrategy) -> Option<Vec<ChannelId>> {
    match strategy {
        RankStrategy::Cheapest => total_fee
            .iter()
            .min_by(|(ka, fa), (kb, fb)| (fa, ka.len(), ka).cmp(&(fb, kb.len(), kb)))
            .map(|(k, _)| k.clone()),
        RankStrategy::Priority { budget } => total_fee
            .iter()
            .filter(|(_, &f)| f <= budget)
            .min_by(|(ka, fa), (kb, fb)| fb.cmp(fa).then((ka.len(), ka).cmp(&(kb.len(), kb))))
            .map(|(k, _)| k.clone()),
    }
}
