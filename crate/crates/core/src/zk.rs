//! Public-balance relation and a transparent proof backend.
//!
//! The relation holds for a statement `(initial balances, H_1..H_n, public
//! balances)` and witness `(r_i, tran_i, v_i, sig_i, direction_i)` when every
//! `H_i` re-hashes from its opening, folding the transfers over the initial
//! balances never goes negative, and each public balance is at most the
//! resulting true balance.
//!
//! [`TransparentBackend`] checks the relation in the clear and emits a keyed
//! tag as the proof; callers only see [`ProofSystem`], so a real SNARK
//! backend can replace it. Prover time is simulated by [`LatencyModel`].

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{Channel, Direction, TxOpening};
use crate::crypto::{self, Digest};
use crate::Amount;

pub const PROOF_SIZE: usize = 193;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ZkError {
    #[error("statement has {digests} digests but witness has {openings} openings")]
    LengthMismatch { digests: usize, openings: usize },
    #[error("statement has {n} transactions, circuit supports {max}")]
    CircuitTooSmall { n: usize, max: usize },
    #[error("relation does not hold; refusing to prove")]
    ProveRefused,
    #[error("hash count must be at least 1")]
    InvalidHashCount,
    #[error("line {line}: {message}")]
    LatencyTable { line: usize, message: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Statement {
    pub initial: (Amount, Amount),
    pub tx_digests: Vec<Digest>,
    pub public: (Amount, Amount),
}

impl Statement {
    pub fn from_channel(ch: &Channel) -> Statement {
        Statement {
            initial: ch.initial,
            tx_digests: ch.log.iter().map(|t| t.digest).collect(),
            public: ch.public,
        }
    }

    /// `ini_a || ini_b || n || H_1..H_n || pub_a || pub_b`, integers as u64 LE.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 32 * self.tx_digests.len());
        out.extend_from_slice(&self.initial.0.to_le_bytes());
        out.extend_from_slice(&self.initial.1.to_le_bytes());
        out.extend_from_slice(&(self.tx_digests.len() as u64).to_le_bytes());
        for d in &self.tx_digests {
            out.extend_from_slice(d);
        }
        out.extend_from_slice(&self.public.0.to_le_bytes());
        out.extend_from_slice(&self.public.1.to_le_bytes());
        out
    }

    pub fn digest(&self) -> Digest {
        crypto::sha256(&[&self.encode()])
    }

    pub fn hash_count(&self) -> usize {
        self.tx_digests.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub transactions: Vec<TxOpening>,
}

impl Witness {
    pub fn from_channel(ch: &Channel) -> Witness {
        Witness {
            transactions: ch.log.iter().map(|t| t.opening.clone()).collect(),
        }
    }
}

/// True balances implied by the witness, or `None` if a digest fails or a
/// prefix goes negative.
fn replay(stmt: &Statement, wit: &Witness) -> Option<(Amount, Amount)> {
    let (mut a, mut b) = stmt.initial;
    for (opening, digest) in wit.transactions.iter().zip(&stmt.tx_digests) {
        if opening.digest() != *digest {
            return None;
        }
        let amt = opening.amount;
        match opening.direction {
            Direction::AToB => {
                a = a.checked_sub(amt)?;
                b = b.checked_add(amt)?;
            }
            Direction::BToA => {
                b = b.checked_sub(amt)?;
                a = a.checked_add(amt)?;
            }
        }
    }
    Some((a, b))
}

pub fn relation_holds(stmt: &Statement, wit: &Witness) -> Result<bool, ZkError> {
    if stmt.tx_digests.len() != wit.transactions.len() {
        return Err(ZkError::LengthMismatch {
            digests: stmt.tx_digests.len(),
            openings: wit.transactions.len(),
        });
    }
    Ok(match replay(stmt, wit) {
        Some((ta, tb)) => stmt.public.0 <= ta && stmt.public.1 <= tb,
        None => false,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicParams {
    pub circuit_size: usize,
    pub security: u32,
    key: Digest,
}

impl PublicParams {
    pub fn key_fingerprint(&self) -> Digest {
        crypto::sha256(&[b"vk", &self.key])
    }
}

/// Deterministic in `(max_n, security, seed)`.
pub fn setup(max_n: usize, security: u32, seed: u64) -> PublicParams {
    assert!(max_n >= 1, "circuit must support at least one transaction");
    let key = crypto::sha256(&[
        b"zkpcn-setup",
        &(max_n as u64).to_le_bytes(),
        &security.to_le_bytes(),
        &seed.to_le_bytes(),
    ]);
    PublicParams {
        circuit_size: max_n,
        security,
        key,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Proof {
    pub body: Vec<u8>,
    pub statement_digest: Digest,
}

pub trait ProofSystem {
    fn prove(&self, pp: &PublicParams, stmt: &Statement, wit: &Witness) -> Result<Proof, ZkError>;
    fn verify(&self, pp: &PublicParams, stmt: &Statement, proof: &Proof) -> bool;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TransparentBackend;

/// 32-byte keyed tag followed by 161 bytes of deterministic expansion.
fn proof_body(pp: &PublicParams, statement_digest: &Digest) -> Vec<u8> {
    let tag = crypto::keyed_tag(&pp.key, &[statement_digest]);
    let mut body = Vec::with_capacity(PROOF_SIZE);
    body.extend_from_slice(&tag);
    let mut counter = 0u32;
    while body.len() < PROOF_SIZE {
        let block = crypto::sha256(&[&tag, &counter.to_le_bytes()]);
        let take = (PROOF_SIZE - body.len()).min(block.len());
        body.extend_from_slice(&block[..take]);
        counter += 1;
    }
    body
}

impl ProofSystem for TransparentBackend {
    fn prove(&self, pp: &PublicParams, stmt: &Statement, wit: &Witness) -> Result<Proof, ZkError> {
        if stmt.hash_count() > pp.circuit_size {
            return Err(ZkError::CircuitTooSmall {
                n: stmt.hash_count(),
                max: pp.circuit_size,
            });
        }
        if !relation_holds(stmt, wit)? {
            return Err(ZkError::ProveRefused);
        }
        let statement_digest = stmt.digest();
        Ok(Proof {
            body: proof_body(pp, &statement_digest),
            statement_digest,
        })
    }

    fn verify(&self, pp: &PublicParams, stmt: &Statement, proof: &Proof) -> bool {
        if proof.body.len() != PROOF_SIZE || stmt.hash_count() > pp.circuit_size {
            return false;
        }
        let digest = stmt.digest();
        digest == proof.statement_digest && proof.body == proof_body(pp, &digest)
    }
}

/// Proves with the transparent backend and charges the modeled prover time.
pub fn prove(
    pp: &PublicParams,
    stmt: &Statement,
    wit: &Witness,
    latency: &LatencyModel,
) -> Result<(Proof, Duration), ZkError> {
    let proof = TransparentBackend.prove(pp, stmt, wit)?;
    let cost = latency.prover_latency(stmt.hash_count().max(1) as u64)?;
    Ok((proof, cost))
}

pub fn verify(pp: &PublicParams, stmt: &Statement, proof: &Proof) -> bool {
    TransparentBackend.verify(pp, stmt, proof)
}

/// Piecewise-linear prover time over calibration points `(hashes, ms)`,
/// extrapolated with the last segment's slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    points: Vec<(u64, f64)>,
    verifier_ms: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel::measured()
    }
}

impl LatencyModel {
    /// Measured Groth16 prover times for 1, 10, 100 and 1000 hashes.
    pub fn measured() -> Self {
        LatencyModel {
            points: vec![(1, 157.0), (10, 682.0), (100, 6011.0), (1000, 43798.0)],
            verifier_ms: 5.0,
        }
    }

    pub fn new(points: Vec<(u64, f64)>, verifier_ms: f64) -> Result<Self, ZkError> {
        let bad = |message: &str| {
            Err(ZkError::LatencyTable {
                line: 0,
                message: message.into(),
            })
        };
        if points.is_empty() {
            return bad("at least one calibration point is required");
        }
        if !(verifier_ms.is_finite() && verifier_ms >= 0.0) {
            return bad("verifier time must be finite and non-negative");
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return bad("hash counts must be strictly increasing");
            }
            if w[1].1 < w[0].1 {
                return bad("prover times must be non-decreasing");
            }
        }
        if points.iter().any(|&(n, ms)| n == 0 || !(ms.is_finite() && ms >= 0.0)) {
            return bad("points need n >= 1 and finite non-negative times");
        }
        Ok(LatencyModel { points, verifier_ms })
    }

    pub fn points(&self) -> &[(u64, f64)] {
        &self.points
    }

    pub fn prover_ms(&self, n: u64) -> Result<f64, ZkError> {
        if n == 0 {
            return Err(ZkError::InvalidHashCount);
        }
        let pts = &self.points;
        if pts.len() == 1 {
            return Ok(pts[0].1);
        }
        let seg = match pts.iter().position(|&(x, _)| x >= n) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => pts.len() - 2,
        };
        let (x0, y0) = pts[seg];
        let (x1, y1) = pts[seg + 1];
        if n == x1 {
            return Ok(y1);
        }
        let slope = (y1 - y0) / (x1 - x0) as f64;
        let ms = y0 + slope * (n as f64 - x0 as f64);
        // Below the first point the first segment may dip negative.
        Ok(ms.max(0.0))
    }

    pub fn prover_latency(&self, n: u64) -> Result<Duration, ZkError> {
        Ok(ms_to_duration(self.prover_ms(n)?))
    }

    pub fn verifier_latency(&self) -> Duration {
        ms_to_duration(self.verifier_ms)
    }

    /// Parses `<hashes> <prover_ms>` lines and an optional `verifier <ms>`
    /// line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<LatencyModel, ZkError> {
        let mut points = Vec::new();
        let mut verifier = 5.0;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| ZkError::LatencyTable { line, message };
            let fields: Vec<&str> = content.split_whitespace().collect();
            let [key, value] = fields.as_slice() else {
                return Err(err(format!("expected two fields, found {}", fields.len())));
            };
            let ms: f64 = value.parse().map_err(|_| err(format!("{value:?} is not a number")))?;
            if !(ms.is_finite() && ms >= 0.0) {
                return Err(err(format!("{value} is not a finite non-negative time")));
            }
            if *key == "verifier" {
                verifier = ms;
            } else {
                let n: u64 = key.parse().map_err(|_| err(format!("{key:?} is not a hash count")))?;
                points.push((n, ms));
            }
        }
        LatencyModel::new(points, verifier)
    }
}

fn ms_to_duration(ms: f64) -> Duration {
    Duration::from_nanos((ms * 1e6).round() as u64)
}
