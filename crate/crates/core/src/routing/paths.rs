//! Hop-count shortest paths with deterministic tie-breaking, and Yen's
//! k-shortest loop-free paths on top of it.
//!
//! Paths are totally ordered by `(hop count, channel-id sequence)`; every
//! search here returns the minimum under that order.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::topology::Network;
use crate::{ChannelId, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hop {
    pub channel: ChannelId,
    pub from: NodeId,
    pub to: NodeId,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Route {
    pub hops: Vec<Hop>,
}

impl Route {
    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }

    pub fn key(&self) -> Vec<ChannelId> {
        self.hops.iter().map(|h| h.channel).collect()
    }

    pub fn nodes(&self) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self.hops.iter().map(|h| h.from).collect();
        if let Some(last) = self.hops.last() {
            out.push(last.to);
        }
        out
    }

    pub fn source(&self) -> Option<NodeId> {
        self.hops.first().map(|h| h.from)
    }

    pub fn destination(&self) -> Option<NodeId> {
        self.hops.last().map(|h| h.to)
    }
}

/// Per-channel directional usability: bit 0 is `a -> b`, bit 1 is `b -> a`.
#[derive(Clone, Debug)]
pub struct Usable {
    bits: Vec<u8>,
}

impl Usable {
    pub fn build(net: &Network, mut allowed: impl FnMut(ChannelId, NodeId) -> bool) -> Self {
        let bits = net
            .channels()
            .iter()
            .map(|c| (allowed(c.id, c.a) as u8) | ((allowed(c.id, c.b) as u8) << 1))
            .collect();
        Usable { bits }
    }

    fn bit(net: &Network, c: ChannelId, from: NodeId) -> u8 {
        if net.channel(c).a == from {
            1
        } else {
            2
        }
    }

    pub fn allows(&self, net: &Network, c: ChannelId, from: NodeId) -> bool {
        self.bits[c.index()] & Self::bit(net, c, from) != 0
    }

    pub fn block(&mut self, net: &Network, c: ChannelId, from: NodeId) {
        self.bits[c.index()] &= !Self::bit(net, c, from);
    }
}

/// Smallest `(hops, channel ids)` path from `src` to `dst` avoiding `blocked`
/// nodes. `None` when unreachable or `src == dst`.
pub fn shortest_path(net: &Network, usable: &Usable, src: NodeId, dst: NodeId, blocked: &[bool]) -> Option<Route> {
    if src == dst {
        return None;
    }
    // Backward BFS gives every node its distance to `dst`.
    let mut dist = vec![u32::MAX; net.node_count()];
    dist[dst.index()] = 0;
    let mut queue = VecDeque::from([dst]);
    while let Some(v) = queue.pop_front() {
        if v == src {
            break;
        }
        let dv = dist[v.index()];
        for &c in net.incident(v) {
            let u = net.channel(c).other(v);
            if dist[u.index()] == u32::MAX && !blocked[u.index()] && usable.allows(net, c, u) {
                dist[u.index()] = dv + 1;
                queue.push_back(u);
            }
        }
    }
    if dist[src.index()] == u32::MAX {
        return None;
    }
    // Walk forward taking the smallest channel id that stays on a shortest path.
    let mut hops = Vec::with_capacity(dist[src.index()] as usize);
    let mut u = src;
    while u != dst {
        let du = dist[u.index()];
        let (c, v) = net
            .incident(u)
            .iter()
            .map(|&c| (c, net.channel(c).other(u)))
            .filter(|&(c, v)| dist[v.index()] == du - 1 && usable.allows(net, c, u))
            .min_by_key(|&(c, _)| c)
            .expect("bfs distance implies a successor");
        hops.push(Hop {
            channel: c,
            from: u,
            to: v,
        });
        u = v;
    }
    Some(Route { hops })
}

/// Lazily enumerates loop-free paths in `(hops, channel ids)` order.
pub struct KShortest<'a> {
    net: &'a Network,
    usable: Usable,
    src: NodeId,
    dst: NodeId,
    found: Vec<Route>,
    found_keys: BTreeSet<Vec<ChannelId>>,
    candidates: BTreeMap<(usize, Vec<ChannelId>), Route>,
    started: bool,
}

impl<'a> KShortest<'a> {
    pub fn new(net: &'a Network, usable: Usable, src: NodeId, dst: NodeId) -> Self {
        KShortest {
            net,
            usable,
            src,
            dst,
            found: Vec::new(),
            found_keys: BTreeSet::new(),
            candidates: BTreeMap::new(),
            started: false,
        }
    }

    fn spur_candidates(&mut self) {
        let net = self.net;
        let last = self.found.last().expect("called after a path was found").clone();
        let mut blocked = vec![false; net.node_count()];
        for i in 0..last.hops.len() {
            let spur = last.hops[i].from;
            let root = &last.hops[..i];
            let mut usable = self.usable.clone();
            for p in &self.found {
                if p.hops.len() > i && p.hops[..i] == *root {
                    usable.block(net, p.hops[i].channel, p.hops[i].from);
                }
            }
            if let Some(spur_path) = shortest_path(net, &usable, spur, self.dst, &blocked) {
                let mut hops = root.to_vec();
                hops.extend(spur_path.hops);
                let route = Route { hops };
                let key = route.key();
                if !self.found_keys.contains(&key) {
                    self.candidates.entry((route.len(), key)).or_insert(route);
                }
            }
            blocked[spur.index()] = true;
        }
    }
}

impl Iterator for KShortest<'_> {
    type Item = Route;

    fn next(&mut self) -> Option<Route> {
        let next = if !self.started {
            self.started = true;
            let blocked = vec![false; self.net.node_count()];
            shortest_path(self.net, &self.usable, self.src, self.dst, &blocked)?
        } else {
            if self.found.is_empty() {
                return None;
            }
            self.spur_candidates();
            let (_, route) = self.candidates.pop_first()?;
            route
        };
        self.found_keys.insert(next.key());
        self.found.push(next.clone());
        Some(next)
    }
}

pub fn k_shortest_paths(net: &Network, usable: Usable, src: NodeId, dst: NodeId, k: usize) -> Vec<Route> {
    KShortest::new(net, usable, src, dst).take(k).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::load_snapshot;

    fn two_routes() -> Network {
        load_snapshot(
            "channel A B 10\nchannel A C 10\nchannel B E 10\nchannel C D 10\nchannel D E 10\nchannel E F 10\n",
        )
        .unwrap()
    }

    fn names(net: &Network, r: &Route) -> String {
        r.nodes().iter().map(|&n| net.name(n)).collect::<Vec<_>>().join("-")
    }

    #[test]
    fn two_route_paths_in_order() {
        let net = two_routes();
        let a = net.node_by_name("A").unwrap();
        let f = net.node_by_name("F").unwrap();
        let all = Usable::build(&net, |_, _| true);
        let routes = k_shortest_paths(&net, all, a, f, 5);
        let got: Vec<String> = routes.iter().map(|r| names(&net, r)).collect();
        assert_eq!(got, ["A-B-E-F", "A-C-D-E-F"]);
    }

    #[test]
    fn directional_block() {
        let net = two_routes();
        let a = net.node_by_name("A").unwrap();
        let b = net.node_by_name("B").unwrap();
        let f = net.node_by_name("F").unwrap();
        let e = net.node_by_name("E").unwrap();
        let be = net
            .incident(b)
            .iter()
            .copied()
            .find(|&c| net.channel(c).other(b) == e)
            .unwrap();
        let usable = Usable::build(&net, |c, from| !(c == be && from == b));
        let r = shortest_path(&net, &usable, a, f, &[false; 6]).unwrap();
        assert_eq!(names(&net, &r), "A-C-D-E-F");
    }

    #[test]
    fn parallel_channels_prefer_smaller_id() {
        let net = load_snapshot("channel A B 1\nchannel A B 2\n").unwrap();
        let all = Usable::build(&net, |_, _| true);
        let a = net.node_by_name("A").unwrap();
        let b = net.node_by_name("B").unwrap();
        let routes = k_shortest_paths(&net, all, a, b, 3);
        assert_eq!(routes.len(), 2);
        assert_eq!(routes[0].key(), vec![ChannelId(0)]);
        assert_eq!(routes[1].key(), vec![ChannelId(1)]);
    }
}
