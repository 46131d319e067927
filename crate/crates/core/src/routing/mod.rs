//! Routing tables, path selection and the reactive proof generation (RPG)
//! message flow.

pub mod paths;
pub mod rpg;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::topology::{Network, StaticView};
use crate::zk::{self, Proof, PublicParams, Statement};
use crate::{Amount, ChannelId, NodeId};

pub use paths::{k_shortest_paths, shortest_path, Hop, KShortest, Route, Usable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    pub public: (Amount, Amount),
    pub last_seen_version: u64,
    pub capacity: Amount,
    pub verified: bool,
}

impl TableEntry {
    /// Whether an announcement with `version_hint` and verification result
    /// `verified` should replace this entry.
    pub fn accepts(entry: Option<&TableEntry>, version_hint: u64, verified: bool) -> bool {
        verified && entry.is_none_or(|e| version_hint > e.last_seen_version)
    }

    pub fn from_statement(stmt: &Statement, version_hint: u64) -> TableEntry {
        let capacity = stmt.initial.0.saturating_add(stmt.initial.1);
        TableEntry {
            public: (stmt.public.0.min(capacity), stmt.public.1.min(capacity)),
            last_seen_version: version_hint,
            capacity,
            verified: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Announcement {
    pub channel: ChannelId,
    pub statement: Statement,
    pub proof: Proof,
    /// Per-channel announcement sequence number.
    pub version_hint: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableUpdate {
    Accepted,
    RejectedProof,
    RejectedStale,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejections {
    pub bad_proof: u64,
    pub stale: u64,
}

/// Sparse per-node routing table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingTable {
    pub owner: NodeId,
    pub entries: BTreeMap<ChannelId, TableEntry>,
    pub rejections: Rejections,
}

impl RoutingTable {
    pub fn new(owner: NodeId) -> Self {
        RoutingTable {
            owner,
            entries: BTreeMap::new(),
            rejections: Rejections::default(),
        }
    }
}

pub fn update_routing_table(table: &mut RoutingTable, ann: &Announcement, pp: &PublicParams) -> TableUpdate {
    if !zk::verify(pp, &ann.statement, &ann.proof) {
        table.rejections.bad_proof += 1;
        return TableUpdate::RejectedProof;
    }
    if !TableEntry::accepts(table.entries.get(&ann.channel), ann.version_hint, true) {
        table.rejections.stale += 1;
        return TableUpdate::RejectedStale;
    }
    table.entries.insert(
        ann.channel,
        TableEntry::from_statement(&ann.statement, ann.version_hint),
    );
    TableUpdate::Accepted
}

/// Read access to a node's view of public balances `(p_a, p_b)`.
pub trait PublicBalanceView {
    fn public_balances(&self, channel: ChannelId) -> Option<(Amount, Amount)>;
}

impl PublicBalanceView for RoutingTable {
    fn public_balances(&self, channel: ChannelId) -> Option<(Amount, Amount)> {
        self.entries.get(&channel).filter(|e| e.verified).map(|e| e.public)
    }
}

/// Public balance on the `from` side of `channel`, as seen through `view`.
pub fn directional_public<V: PublicBalanceView + ?Sized>(
    view: &V,
    net: &Network,
    channel: ChannelId,
    from: NodeId,
) -> Option<Amount> {
    let (pa, pb) = view.public_balances(channel)?;
    Some(if net.channel(channel).a == from { pa } else { pb })
}

/// Shortest path over channels whose sender-side public balance covers
/// `amount`.
pub fn zkpcn_select_route<V: PublicBalanceView + ?Sized>(
    view: &V,
    net: &Network,
    src: NodeId,
    dst: NodeId,
    amount: Amount,
) -> Option<Route> {
    let usable = Usable::build(net, |c, from| {
        directional_public(view, net, c, from).is_some_and(|p| p >= amount)
    });
    shortest_path(net, &usable, src, dst, &vec![false; net.node_count()])
}

/// Up to `max_routes` loop-free paths whose channel capacities all cover
/// `amount`. Searches the static view when it contains `dst`, else the full
/// (public) topology.
pub fn find_candidate_routes(
    view: &StaticView,
    net: &Network,
    dst: NodeId,
    amount: Amount,
    max_routes: usize,
) -> Vec<Route> {
    let src = view.owner;
    let usable = if view.covers(dst) {
        let mut in_view = vec![false; net.channel_count()];
        for c in &view.channels {
            in_view[c.id.index()] = true;
        }
        Usable::build(net, |c, _| in_view[c.index()] && net.channel(c).capacity >= amount)
    } else {
        Usable::build(net, |c, _| net.channel(c).capacity >= amount)
    };
    k_shortest_paths(net, usable, src, dst, max_routes)
}

/// Forwarding fee: `base + floor(amount * ppm / 1e6)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeePolicy {
    pub base_fee: Amount,
    pub proportional_ppm: u64,
}

impl Default for FeePolicy {
    fn default() -> Self {
        FeePolicy {
            base_fee: 1,
            proportional_ppm: 1,
        }
    }
}

impl FeePolicy {
    pub fn fee(&self, amount: Amount) -> Amount {
        let prop = (amount as u128 * self.proportional_ppm as u128) / 1_000_000;
        self.base_fee.saturating_add(prop.min(u64::MAX as u128) as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{open_channel, Side};
    use crate::crypto::Keyring;
    use crate::topology::{k_hop_view, load_snapshot};
    use crate::zk::{setup, ProofSystem, TransparentBackend, Witness};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn announcement(version_hint: u64, pay: Amount) -> (Announcement, PublicParams) {
        let pp = setup(100, 128, 0);
        let ring = Keyring::new(0);
        let mut ch = open_channel(ChannelId(2), NodeId(0), NodeId(1), 50, 50).unwrap();
        if pay > 0 {
            ch.pay(Side::A, pay, &mut ChaCha8Rng::seed_from_u64(0), &ring).unwrap();
        }
        let stmt = Statement::from_channel(&ch);
        let proof = TransparentBackend
            .prove(&pp, &stmt, &Witness::from_channel(&ch))
            .unwrap();
        (
            Announcement {
                channel: ch.id,
                statement: stmt,
                proof,
                version_hint,
            },
            pp,
        )
    }

    #[test]
    fn table_update_rules() {
        let mut table = RoutingTable::new(NodeId(7));
        let (ann, pp) = announcement(1, 10);
        assert_eq!(update_routing_table(&mut table, &ann, &pp), TableUpdate::Accepted);
        let e = table.entries[&ChannelId(2)];
        assert!(e.verified);
        assert_eq!(e.public, (40, 60));
        assert_eq!(e.capacity, 100);

        let (mut forged, _) = announcement(2, 0);
        forged.proof.body[0] ^= 1;
        assert_eq!(
            update_routing_table(&mut table, &forged, &pp),
            TableUpdate::RejectedProof
        );

        let (replay, _) = announcement(1, 0);
        assert_eq!(
            update_routing_table(&mut table, &replay, &pp),
            TableUpdate::RejectedStale
        );
        assert_eq!(table.entries[&ChannelId(2)].public, (40, 60));
        assert_eq!(table.rejections, Rejections { bad_proof: 1, stale: 1 });
    }

    fn two_routes() -> Network {
        load_snapshot(
            "channel A B 10\nchannel A C 10\nchannel B E 10\nchannel C D 10\nchannel D E 10\nchannel E F 10\n",
        )
        .unwrap()
    }

    fn full_table(net: &Network, public: impl Fn(ChannelId) -> (Amount, Amount)) -> RoutingTable {
        let mut t = RoutingTable::new(NodeId(0));
        for c in net.channels() {
            t.entries.insert(
                c.id,
                TableEntry {
                    public: public(c.id),
                    last_seen_version: 0,
                    capacity: c.capacity,
                    verified: true,
                },
            );
        }
        t
    }

    fn names(net: &Network, r: &Route) -> String {
        r.nodes().iter().map(|&n| net.name(n)).collect::<Vec<_>>().join("-")
    }

    #[test]
    fn zkpcn_selection_examples() {
        let net = two_routes();
        let id = |n: &str| net.node_by_name(n).unwrap();
        let ample = full_table(&net, |_| (5, 5));
        let r = zkpcn_select_route(&ample, &net, id("A"), id("F"), 3).unwrap();
        assert_eq!(names(&net, &r), "A-B-E-F");

        // B-E is channel 2 with B on the `a` side; starve the B->E direction only.
        let starved = full_table(&net, |c| if c == ChannelId(2) { (1, 5) } else { (5, 5) });
        let r = zkpcn_select_route(&starved, &net, id("A"), id("F"), 3).unwrap();
        assert_eq!(names(&net, &r), "A-C-D-E-F");
        // The reverse direction still works.
        let r = zkpcn_select_route(&starved, &net, id("E"), id("B"), 3).unwrap();
        assert_eq!(names(&net, &r), "E-B");

        assert!(zkpcn_select_route(&ample, &net, id("A"), id("F"), 6).is_none());
    }

    #[test]
    fn candidate_route_examples() {
        let net = two_routes();
        let id = |n: &str| net.node_by_name(n).unwrap();
        let view = k_hop_view(&net, id("A"), 4).unwrap();
        let routes = find_candidate_routes(&view, &net, id("F"), 5, 2);
        let got: Vec<String> = routes.iter().map(|r| names(&net, r)).collect();
        assert_eq!(got, ["A-B-E-F", "A-C-D-E-F"]);
        assert_eq!(find_candidate_routes(&view, &net, id("F"), 5, 1).len(), 1);
        assert!(find_candidate_routes(&view, &net, id("F"), 11, 2).is_empty());

        // F lies outside a 1-hop view: search falls back to the full topology.
        let narrow = k_hop_view(&net, id("A"), 1).unwrap();
        assert_eq!(find_candidate_routes(&narrow, &net, id("F"), 5, 2).len(), 2);
    }

    #[test]
    fn fee_formula() {
        let p = FeePolicy {
            base_fee: 1,
            proportional_ppm: 0,
        };
        assert_eq!(p.fee(1_000_000), 1);
        let p = FeePolicy::default();
        assert_eq!(p.fee(999_999), 1);
        assert_eq!(p.fee(2_000_000), 3);
        let huge = FeePolicy {
            base_fee: u64::MAX,
            proportional_ppm: u64::MAX,
        };
        assert_eq!(huge.fee(u64::MAX), u64::MAX);
    }
}
