use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::time::Duration;

use rand::seq::index;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    FailureCounts, FailureReason, Metrics, Mode, PaymentOutcome, ProofLatency, ProverAlternation, SimConfig, SimError,
};
use crate::channel::{open_channel, Channel, Side};
use crate::crypto::Keyring;
use crate::routing::rpg::{self, CollectParams, HopProof, HopState};
use crate::routing::{
    find_candidate_routes, zkpcn_select_route, Announcement, FeePolicy, KShortest, PublicBalanceView, Route,
    RoutingTable, TableEntry, Usable,
};
use crate::topology::{apply_capacity_factor, k_hop_view, Network, StaticView};
use crate::workload::Payment;
use crate::zk::{self, LatencyModel, ProofSystem, PublicParams, Statement, TransparentBackend, Witness};
use crate::{Amount, ChannelId, NodeId};

/// Nodes other than the channel's parties that receive an announcement,
/// each independently with probability `reachability`.
pub fn broadcast_announcement<R: Rng + ?Sized>(
    net: &Network,
    channel: ChannelId,
    reachability: f64,
    rng: &mut R,
) -> Vec<NodeId> {
    let spec = net.channel(channel);
    let others = net.nodes().filter(|&u| u != spec.a && u != spec.b);
    if reachability >= 1.0 {
        others.collect()
    } else if reachability <= 0.0 {
        Vec::new()
    } else {
        others.filter(|_| rng.gen_bool(reachability)).collect()
    }
}

/// Up to `d` distinct channels incident to `committed`'s endpoints, drawn
/// without replacement and never from `exclude`.
pub fn decoy_updates<R: Rng + ?Sized>(
    net: &Network,
    committed: ChannelId,
    exclude: &[ChannelId],
    d: usize,
    rng: &mut R,
) -> Vec<ChannelId> {
    if d == 0 {
        return Vec::new();
    }
    let spec = net.channel(committed);
    let mut pool: Vec<ChannelId> = net
        .incident(spec.a)
        .iter()
        .chain(net.incident(spec.b))
        .copied()
        .filter(|c| *c != committed && !exclude.contains(c))
        .collect();
    pool.sort_unstable();
    pool.dedup();
    let take = d.min(pool.len());
    index::sample(rng, pool.len(), take)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

/// Restarts the channel's log from its current balances when it holds at
/// least `threshold` entries.
pub fn maybe_reset_channel(ch: &mut Channel, threshold: usize) -> bool {
    ch.maybe_reset(threshold)
}

struct Scheduled {
    time: u64,
    seq: u64,
    ann: Announcement,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

fn micros(d: Duration) -> u64 {
    d.as_micros().min(u64::MAX as u128) as u64
}

fn side_from(ch: &Channel, from: NodeId) -> Side {
    if ch.parties.0 == from {
        Side::A
    } else {
        Side::B
    }
}

/// Prover time charged for a statement over `n` hashes.
fn prover_cost(policy: ProofLatency, model: &LatencyModel, n: usize) -> Duration {
    let hashes = match policy {
        ProofLatency::Zero => return Duration::ZERO,
        ProofLatency::LogLength => n.max(1) as u64,
        ProofLatency::FixedHashes(h) => h,
    };
    model.prover_latency(hashes).expect("hash count is at least 1")
}

/// Builds a proof for the channel's current state, corrupting it with
/// probability `byzantine_rate`.
fn make_proof(
    ch: &mut Channel,
    pp: &PublicParams,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> (Statement, zk::Proof, Duration) {
    match cfg.prover_alternation {
        ProverAlternation::Deterministic => {
            ch.next_prover();
        }
        ProverAlternation::Seeded => {
            let _: bool = rng.gen();
        }
    }
    let stmt = Statement::from_channel(ch);
    let mut proof = TransparentBackend
        .prove(pp, &stmt, &Witness::from_channel(ch))
        .expect("honest channel state satisfies the relation");
    if cfg.byzantine_rate > 0.0 && rng.gen_bool(cfg.byzantine_rate) {
        proof.body[0] ^= 0x5a;
    }
    let cost = prover_cost(cfg.proof_latency, &cfg.latency_model, stmt.hash_count());
    (stmt, proof, cost)
}

/// Simulation state for one run.
pub struct Engine {
    cfg: SimConfig,
    net: Network,
    channels: Vec<Channel>,
    keyring: Keyring,
    pp: PublicParams,
    rng: ChaCha8Rng,
    now: u64,
    queue: BinaryHeap<Reverse<Scheduled>>,
    next_seq: u64,
    /// Announced public balances per channel, indexed by announcement number.
    history: Vec<Vec<(Amount, Amount)>>,
    /// Latest announcement every node has accepted, per channel.
    seen_all: Vec<u32>,
    /// Per-(channel, node) latest accepted announcement; only used when
    /// reachability is strictly between 0 and 1.
    seen: Vec<u32>,
    cache: Vec<Option<(Statement, zk::Proof)>>,
    views: Vec<Option<StaticView>>,
    metrics: Metrics,
    path_total: u64,
}

impl Engine {
    pub fn new(cfg: SimConfig, base: &Network) -> Result<Engine, SimError> {
        cfg.validate()?;
        if base.node_count() < 2 || !base.is_connected() {
            return Err(SimError::BadNetwork);
        }
        let net = apply_capacity_factor(base, cfg.capacity_factor);
        let channels = net
            .channels()
            .iter()
            .map(|c| {
                let (xa, xb) = c.initial_split();
                open_channel(c.id, c.a, c.b, xa, xb)
                    .map(|ch| ch.with_policy(cfg.public_balance_policy))
                    .expect("validated network")
            })
            .collect::<Vec<_>>();
        let pp = zk::setup(cfg.reset_threshold, 128, cfg.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1 << 63);
        let n = net.node_count();
        let c = net.channel_count();
        let history = channels.iter().map(|ch| vec![ch.public]).collect();
        let seen = if cfg.reachability > 0.0 && cfg.reachability < 1.0 {
            vec![0; n * c]
        } else {
            Vec::new()
        };
        let cache = if cfg.mode == Mode::Zkipcn {
            channels
                .iter()
                .map(|ch| {
                    let stmt = Statement::from_channel(ch);
                    let proof = TransparentBackend
                        .prove(&pp, &stmt, &Witness::from_channel(ch))
                        .expect("opening state satisfies the relation");
                    Some((stmt, proof))
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Engine {
            keyring: Keyring::new(cfg.seed),
            views: vec![None; n],
            cfg,
            net,
            channels,
            pp,
            rng,
            now: 0,
            queue: BinaryHeap::new(),
            next_seq: 0,
            history,
            seen_all: vec![0; c],
            seen,
            cache,
            metrics: Metrics::default(),
            path_total: 0,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn public_params(&self) -> &PublicParams {
        &self.pp
    }

    pub fn now(&self) -> Duration {
        Duration::from_micros(self.now)
    }

    /// Processes `trace` with one payment per inter-arrival tick, then
    /// drains outstanding announcements.
    pub fn run(&mut self, trace: &[Payment]) -> Vec<PaymentOutcome> {
        let step = micros(self.cfg.inter_arrival);
        let start = self.now;
        let mut out = Vec::with_capacity(trace.len());
        for (i, p) in trace.iter().enumerate() {
            self.advance_to(start + step * i as u64);
            out.push(self.pay(*p));
        }
        self.advance_to(u64::MAX);
        out
    }

    /// Delivers every announcement due at or before `t`. Announcements due at
    /// the same instant as a payment are delivered first.
    pub fn advance_to(&mut self, t: u64) {
        while self.queue.peek().is_some_and(|Reverse(s)| s.time <= t) {
            let Reverse(s) = self.queue.pop().expect("peeked");
            self.now = s.time;
            self.deliver(&s.ann);
        }
        if t != u64::MAX {
            self.now = self.now.max(t);
        }
    }

    /// Executes one payment at the current instant.
    pub fn pay(&mut self, p: Payment) -> PaymentOutcome {
        let outcome = self.execute(p);
        let m = &mut self.metrics;
        m.tx_count += 1;
        m.proofs_generated += outcome.proofs_generated;
        m.proof_series.push(m.proofs_generated);
        match outcome.failure {
            None => {
                m.successes += 1;
                self.path_total += outcome.hops as u64;
            }
            Some(r) => m.failures.record(r),
        }
        outcome
    }

    fn execute(&mut self, p: Payment) -> PaymentOutcome {
        if p.sender == p.recipient || p.amount == 0 {
            return PaymentOutcome::failed(FailureReason::NoRoute);
        }
        if !self.sender_can_fund(p.sender, p.amount) {
            return PaymentOutcome::failed(FailureReason::InsufficientFunds);
        }
        match self.cfg.mode {
            Mode::Ln => self.execute_payment_ln(p),
            Mode::Zkpcn => self.execute_payment_zkpcn(p),
            Mode::Zkipcn => self.execute_payment_zkipcn(p),
        }
    }

    fn sender_can_fund(&self, sender: NodeId, amount: Amount) -> bool {
        self.net.incident(sender).iter().any(|&c| {
            let ch = &self.channels[c.index()];
            ch.balance(side_from(ch, sender)) >= amount
        })
    }

    fn route_is_funded(&self, route: &Route, amount: Amount) -> bool {
        route.hops.iter().all(|h| {
            let ch = &self.channels[h.channel.index()];
            ch.balance(side_from(ch, h.from)) >= amount
        })
    }

    /// Moves `amount` along every hop; the caller has checked funding, so
    /// either all hops update or the function panics before any does.
    fn commit(&mut self, route: &Route, amount: Amount) {
        assert!(self.route_is_funded(route, amount), "commit on unfunded route");
        for h in &route.hops {
            let ch = &mut self.channels[h.channel.index()];
            if maybe_reset_channel(ch, self.cfg.reset_threshold) {
                self.metrics.resets += 1;
            }
            let side = side_from(ch, h.from);
            ch.pay(side, amount, &mut self.rng, &self.keyring)
                .expect("funded hop accepts the update");
        }
    }

    fn success(&self, route: &Route, amount: Amount, proofs: u64, latency: Duration, attempts: u32) -> PaymentOutcome {
        PaymentOutcome {
            success: true,
            failure: None,
            path: Some(route.key()),
            hops: route.len(),
            fees: route_fee(&self.cfg.fee_policy, route, amount),
            proofs_generated: proofs,
            latency,
            attempts,
        }
    }

    fn round_trip(&self, hops: usize) -> Duration {
        self.cfg.per_hop_delay * 2 * hops as u32
    }

    fn execute_payment_ln(&mut self, p: Payment) -> PaymentOutcome {
        let usable = Usable::build(&self.net, |c, _| self.net.channel(c).capacity >= p.amount);
        let mut attempts = 0u32;
        let mut latency = Duration::ZERO;
        let mut chosen = None;
        for route in KShortest::new(&self.net, usable, p.sender, p.recipient).take(self.cfg.ln_max_retries) {
            attempts += 1;
            if self.route_is_funded(&route, p.amount) {
                latency += self.round_trip(route.len());
                chosen = Some(route);
                break;
            }
            // The attempt travels to the first short hop and fails back.
            let reached = route
                .hops
                .iter()
                .position(|h| {
                    let ch = &self.channels[h.channel.index()];
                    ch.balance(side_from(ch, h.from)) < p.amount
                })
                .unwrap_or(route.len());
            latency += self.round_trip(reached + 1);
        }
        match chosen {
            Some(route) => {
                self.commit(&route, p.amount);
                self.success(&route, p.amount, 0, latency, attempts)
            }
            None => PaymentOutcome {
                attempts,
                latency,
                ..PaymentOutcome::failed(if attempts == 0 {
                    FailureReason::NoRoute
                } else {
                    FailureReason::InsufficientFunds
                })
            },
        }
    }

    fn execute_payment_zkpcn(&mut self, p: Payment) -> PaymentOutcome {
        let route = {
            let view = TableView {
                engine: self,
                node: p.sender,
            };
            zkpcn_select_route(&view, &self.net, p.sender, p.recipient, p.amount)
        };
        let Some(route) = route else {
            return PaymentOutcome::failed(FailureReason::NoRoute);
        };
        if !self.route_is_funded(&route, p.amount) {
            return PaymentOutcome {
                attempts: 1,
                latency: self.round_trip(route.len()),
                ..PaymentOutcome::failed(FailureReason::StaleBalance)
            };
        }
        self.commit(&route, p.amount);
        let mut proofs = 0;
        for h in &route.hops {
            self.announce(h.channel, false);
            proofs += 1;
        }
        let on_path = route.key();
        let pick = on_path[self.rng.gen_range(0..on_path.len())];
        for c in decoy_updates(&self.net, pick, &on_path, self.cfg.decoy_count, &mut self.rng) {
            self.announce(c, self.cfg.decoy_jitter);
            proofs += 1;
        }
        let latency = self.round_trip(route.len());
        self.success(&route, p.amount, proofs, latency, 1)
    }

    /// Generates a proof for the channel's current state and schedules its
    /// broadcast once the prover finishes.
    fn announce(&mut self, c: ChannelId, jitter: bool) {
        let ch = &mut self.channels[c.index()];
        if jitter {
            let (pa, pb) = ch.public;
            let da = self.rng.gen_range(0..=pa / 10);
            let db = self.rng.gen_range(0..=pb / 10);
            ch.set_public(pa - da, pb - db)
                .expect("lowering public balances keeps them below true balances");
        }
        let (statement, proof, cost) = make_proof(ch, &self.pp, &self.cfg, &mut self.rng);
        let hist = &mut self.history[c.index()];
        let version_hint = hist.len() as u64;
        let capacity = statement.initial.0 + statement.initial.1;
        hist.push((statement.public.0.min(capacity), statement.public.1.min(capacity)));
        let ann = Announcement {
            channel: c,
            statement,
            proof,
            version_hint,
        };
        self.next_seq += 1;
        self.queue.push(Reverse(Scheduled {
            time: self.now.saturating_add(micros(cost)),
            seq: self.next_seq,
            ann,
        }));
    }

    /// Verifies once and updates every receiving node's table; the result
    /// equals running `update_routing_table` at each receiver.
    fn deliver(&mut self, ann: &Announcement) {
        let others = self.net.node_count() as u64 - 2;
        if !zk::verify(&self.pp, &ann.statement, &ann.proof) {
            self.metrics.rejected_announcements += others;
            return;
        }
        let c = ann.channel.index();
        let seq = ann.version_hint as u32;
        let rho = self.cfg.reachability;
        if rho >= 1.0 {
            self.seen_all[c] = self.seen_all[c].max(seq);
            self.metrics.broadcast_messages += others;
        } else if rho > 0.0 {
            let n = self.net.node_count();
            for u in broadcast_announcement(&self.net, ann.channel, rho, &mut self.rng) {
                let slot = &mut self.seen[c * n + u.index()];
                *slot = (*slot).max(seq);
                self.metrics.broadcast_messages += 1;
            }
        }
    }

    fn latest_seen(&self, c: ChannelId, node: NodeId) -> u32 {
        let all = self.seen_all[c.index()];
        if self.seen.is_empty() {
            all
        } else {
            all.max(self.seen[c.index() * self.net.node_count() + node.index()])
        }
    }

    /// The routing table `node` currently holds, materialized.
    pub fn routing_table(&self, node: NodeId) -> RoutingTable {
        let mut t = RoutingTable::new(node);
        for spec in self.net.channels() {
            let entry = if spec.touches(node) {
                let ch = &self.channels[spec.id.index()];
                TableEntry {
                    public: ch.public,
                    last_seen_version: self.history[spec.id.index()].len() as u64 - 1,
                    capacity: spec.capacity,
                    verified: true,
                }
            } else {
                let seq = self.latest_seen(spec.id, node);
                TableEntry {
                    public: self.history[spec.id.index()][seq as usize],
                    last_seen_version: seq as u64,
                    capacity: spec.capacity,
                    verified: true,
                }
            };
            t.entries.insert(spec.id, entry);
        }
        t
    }

    fn view(&mut self, node: NodeId) -> &StaticView {
        if self.views[node.index()].is_none() {
            let v = k_hop_view(&self.net, node, self.cfg.k_hop).expect("node exists and k >= 1");
            self.views[node.index()] = Some(v);
        }
        self.views[node.index()].as_ref().expect("just filled")
    }

    fn execute_payment_zkipcn(&mut self, p: Payment) -> PaymentOutcome {
        let max_routes = self.cfg.max_routes;
        let view = self.view(p.sender).clone();
        let candidates = find_candidate_routes(&view, &self.net, p.recipient, p.amount, max_routes);
        if candidates.is_empty() {
            return PaymentOutcome::failed(FailureReason::NoRoute);
        }
        let longest = candidates.iter().map(Route::len).max().unwrap_or(1);
        let worst_proof = prover_cost(
            self.cfg.proof_latency,
            &self.cfg.latency_model,
            self.cfg.reset_threshold,
        );
        let params = CollectParams {
            tran: p.amount,
            timeout: self.round_trip(longest) + worst_proof * longest as u32,
            per_hop_delay: self.cfg.per_hop_delay,
        };
        let rho = self.cfg.reachability;
        let mut hops = IpcnHops {
            channels: &mut self.channels,
            cache: &mut self.cache,
            pp: &self.pp,
            cfg: &self.cfg,
            rng: &mut self.rng,
            generated: 0,
        };
        let mut drop_rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ self.metrics.tx_count);
        drop_rng.set_stream(2);
        let collected = rpg::rpg_collect(&self.net, &self.pp, &candidates, params, &mut hops, |_| {
            rho >= 1.0 || (rho > 0.0 && drop_rng.gen_bool(rho))
        });
        let proofs = hops.generated;
        let attempts = collected.posts_sent as u32;
        let failed = |reason| PaymentOutcome {
            proofs_generated: proofs,
            latency: collected.elapsed,
            attempts,
            ..PaymentOutcome::failed(reason)
        };
        let Some(key) = rpg::range_rank(&collected.total_fee, self.cfg.rank_strategy) else {
            return failed(FailureReason::Timeout);
        };
        let route = candidates
            .iter()
            .find(|r| r.key() == key)
            .expect("ranked route is a candidate")
            .clone();
        if !self.route_is_funded(&route, p.amount) {
            return failed(FailureReason::StaleBalance);
        }
        self.commit(&route, p.amount);
        for h in &route.hops {
            self.cache[h.channel.index()] = None;
        }
        // Update Channel*: route nodes pass the fresh proofs to their neighbours.
        self.metrics.broadcast_messages += route.nodes().iter().map(|&u| self.net.degree(u) as u64).sum::<u64>();
        let latency = collected.elapsed + self.round_trip(route.len());
        let mut out = self.success(&route, p.amount, proofs, latency, attempts);
        out.fees = collected.total_fee[&key];
        out
    }

    pub fn metrics(&self) -> Metrics {
        let mut m = self.metrics.clone();
        m.success_rate = if m.tx_count == 0 {
            0.0
        } else {
            m.successes as f64 / m.tx_count as f64
        };
        m.mean_path_length = if m.successes == 0 {
            0.0
        } else {
            self.path_total as f64 / m.successes as f64
        };
        let ys: Vec<f64> = m.proof_series.iter().map(|&v| v as f64).collect();
        m.proof_slope = super::least_squares_slope(&ys);
        debug_assert_eq!(m.failures.total() + m.successes, m.tx_count);
        m
    }

    pub fn failure_counts(&self) -> &FailureCounts {
        &self.metrics.failures
    }
}

fn route_fee(policy: &FeePolicy, route: &Route, amount: Amount) -> Amount {
    policy.fee(amount).saturating_mul(route.len() as Amount)
}

/// A node's table as seen through the engine's compact storage. Parties
/// always see their own channel's current public balances.
struct TableView<'a> {
    engine: &'a Engine,
    node: NodeId,
}

impl PublicBalanceView for TableView<'_> {
    fn public_balances(&self, channel: ChannelId) -> Option<(Amount, Amount)> {
        let e = self.engine;
        let ch = &e.channels[channel.index()];
        if ch.parties.0 == self.node || ch.parties.1 == self.node {
            return Some(ch.public);
        }
        let seq = e.latest_seen(channel, self.node);
        Some(e.history[channel.index()][seq as usize])
    }
}

struct IpcnHops<'a> {
    channels: &'a mut [Channel],
    cache: &'a mut [Option<(Statement, zk::Proof)>],
    pp: &'a PublicParams,
    cfg: &'a SimConfig,
    rng: &'a mut ChaCha8Rng,
    generated: u64,
}

impl HopState for IpcnHops<'_> {
    fn hop_proof(&mut self, _node: NodeId, channel: ChannelId) -> HopProof {
        let c = channel.index();
        if let Some((statement, proof)) = &self.cache[c] {
            return HopProof {
                statement: statement.clone(),
                proof: proof.clone(),
                cost: Duration::ZERO,
                generated: false,
            };
        }
        let (statement, proof, cost) = make_proof(&mut self.channels[c], self.pp, self.cfg, self.rng);
        self.cache[c] = Some((statement.clone(), proof.clone()));
        self.generated += 1;
        HopProof {
            statement,
            proof,
            cost,
            generated: true,
        }
    }

    fn fee_policy(&self, _node: NodeId) -> FeePolicy {
        self.cfg.fee_policy
    }
}
