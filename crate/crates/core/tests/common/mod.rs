//! Reference executors used as test oracles. They work directly on true
//! balances with plain depth-first path enumeration and share no routing
//! code with the engine.
#![allow(dead_code)]

use zkpcn::topology::Network;
use zkpcn::workload::Payment;
use zkpcn::{Amount, ChannelId, NodeId};

/// Every node-simple path from `src` to `dst` whose hops pass `ok(channel,
/// from)`, sorted by hop count and then channel ids.
pub fn all_paths(
    net: &Network,
    ok: &dyn Fn(ChannelId, NodeId) -> bool,
    src: NodeId,
    dst: NodeId,
) -> Vec<Vec<(ChannelId, NodeId)>> {
    fn dfs(
        net: &Network,
        ok: &dyn Fn(ChannelId, NodeId) -> bool,
        u: NodeId,
        dst: NodeId,
        on: &mut Vec<bool>,
        path: &mut Vec<(ChannelId, NodeId)>,
        out: &mut Vec<Vec<(ChannelId, NodeId)>>,
    ) {
        if u == dst {
            out.push(path.clone());
            return;
        }
        for &c in net.incident(u) {
            let v = net.channel(c).other(u);
            if on[v.index()] || !ok(c, u) {
                continue;
            }
            on[v.index()] = true;
            path.push((c, u));
            dfs(net, ok, v, dst, on, path, out);
            path.pop();
            on[v.index()] = false;
        }
    }
    let mut out = Vec::new();
    if src == dst {
        return out;
    }
    let mut on = vec![false; net.node_count()];
    on[src.index()] = true;
    dfs(net, ok, src, dst, &mut on, &mut Vec::new(), &mut out);
    let key = |p: &Vec<(ChannelId, NodeId)>| (p.len(), p.iter().map(|h| h.0).collect::<Vec<_>>());
    out.sort_by_key(key);
    out
}

/// True balances per channel, `(a side, b side)`, starting from the
/// floor/ceiling half split.
pub struct Reference<'a> {
    pub net: &'a Network,
    pub bal: Vec<(Amount, Amount)>,
}

impl<'a> Reference<'a> {
    pub fn new(net: &'a Network) -> Self {
        Reference {
            net,
            bal: net.channels().iter().map(|c| c.initial_split()).collect(),
        }
    }

    pub fn side(&self, c: ChannelId, from: NodeId) -> Amount {
        let (a, b) = self.bal[c.index()];
        if self.net.channel(c).a == from {
            a
        } else {
            b
        }
    }

    fn shift(&mut self, path: &[(ChannelId, NodeId)], amount: Amount) {
        for &(c, from) in path {
            let is_a = self.net.channel(c).a == from;
            let (a, b) = &mut self.bal[c.index()];
            if is_a {
                *a -= amount;
                *b += amount;
            } else {
                *b -= amount;
                *a += amount;
            }
        }
    }

    /// Balance-aware routing: the smallest `(hops, ids)` path whose every hop
    /// can carry the amount.
    pub fn pay_informed(&mut self, p: &Payment) -> Option<Vec<ChannelId>> {
        let paths = all_paths(
            self.net,
            &|c, from| self.side(c, from) >= p.amount,
            p.sender,
            p.recipient,
        );
        let path = paths.into_iter().next()?;
        self.shift(&path, p.amount);
        Some(path.iter().map(|h| h.0).collect())
    }

    /// Balance-blind routing: try the `retries` smallest capacity-feasible
    /// paths in order and take the first fully funded one.
    pub fn pay_blind(&mut self, p: &Payment, retries: usize) -> Option<Vec<ChannelId>> {
        let net = self.net;
        let paths = all_paths(net, &|c, _| net.channel(c).capacity >= p.amount, p.sender, p.recipient);
        let path = paths
            .into_iter()
            .take(retries)
            .find(|path| path.iter().all(|&(c, from)| self.side(c, from) >= p.amount))?;
        self.shift(&path, p.amount);
        Some(path.iter().map(|h| h.0).collect())
    }
}

/// Every connected simple graph on `2..=max_nodes` labelled nodes with at
/// most `max_edges` channels, as `(node count, edge list)`.
pub fn connected_graphs(max_nodes: usize, max_edges: usize) -> Vec<(usize, Vec<(usize, usize)>)> {
    let mut out = Vec::new();
    for n in 2..=max_nodes {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        for mask in 0u32..(1 << pairs.len()) {
            let m = mask.count_ones() as usize;
            if m < n - 1 || m > max_edges {
                continue;
            }
            let edges: Vec<(usize, usize)> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &e)| e)
                .collect();
            // Union-find connectivity.
            let mut parent: Vec<usize> = (0..n).collect();
            fn find(p: &mut Vec<usize>, x: usize) -> usize {
                if p[x] != x {
                    let r = find(p, p[x]);
                    p[x] = r;
                }
                p[x]
            }
            for &(u, v) in &edges {
                let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
                parent[ru] = rv;
            }
            let root = find(&mut parent, 0);
            if (0..n).all(|x| find(&mut parent, x) == root) {
                out.push((n, edges));
            }
        }
    }
    out
}
