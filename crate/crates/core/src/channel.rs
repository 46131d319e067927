//! Two-party channel lifecycle: open, hash-chained updates, close.
//!
//! Every update is committed to by `h_i = H(r_i || tran_i || v_i || sig)`
//! over the canonical little-endian encoding
//! `nonce[16] || amount u64 || version u64 || sig[32]`.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{self, Digest, Keyring, Tag};
use crate::{Amount, ChannelId, NodeId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChannelError {
    #[error("a channel needs two distinct parties")]
    SelfChannel,
    #[error("a channel needs a positive total deposit")]
    EmptyDeposit,
    #[error("amount must be positive")]
    ZeroAmount,
    #[error("insufficient funds: need {needed}, have {available}")]
    InsufficientFunds { needed: Amount, available: Amount },
    #[error("expected version {expected}, got {got}")]
    VersionMismatch { expected: u64, got: u64 },
    #[error("update digest or signature does not verify")]
    TamperDetected,
    #[error("message is for channel {got}, not {expected}")]
    WrongChannel { expected: ChannelId, got: ChannelId },
    #[error("public balance exceeds true balance")]
    PublicExceedsTrue,
    #[error("claimed version {claimed} exceeds the latest version {latest}")]
    FraudulentClaim { claimed: u64, latest: u64 },
    #[error("version {0} predates the last balance reset and cannot be replayed")]
    PrunedVersion(u64),
    #[error("log replay drives a balance negative at entry {0}")]
    InvalidLog(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    AToB,
    BToA,
}

impl Direction {
    pub fn from_sender(side: Side) -> Direction {
        match side {
            Side::A => Direction::AToB,
            Side::B => Direction::BToA,
        }
    }

    pub fn sender(self) -> Side {
        match self {
            Direction::AToB => Side::A,
            Direction::BToA => Side::B,
        }
    }

    fn byte(self) -> u8 {
        match self {
            Direction::AToB => 0,
            Direction::BToA => 1,
        }
    }
}

/// The private opening of one logged transaction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxOpening {
    pub nonce: [u8; 16],
    pub amount: Amount,
    pub version: u64,
    pub sig: Tag,
    pub direction: Direction,
}

impl TxOpening {
    pub fn digest(&self) -> Digest {
        tx_digest(&self.nonce, self.amount, self.version, &self.sig)
    }
}

pub fn tx_digest(nonce: &[u8; 16], amount: Amount, version: u64, sig: &Tag) -> Digest {
    crypto::sha256(&[nonce, &amount.to_le_bytes(), &version.to_le_bytes(), sig])
}

/// Payload covered by the sender's update signature.
pub fn update_sig_payload(channel: ChannelId, version: u64, amount: Amount, direction: Direction) -> [u8; 25] {
    let mut p = [0u8; 25];
    p[..8].copy_from_slice(&(channel.0 as u64).to_le_bytes());
    p[8..16].copy_from_slice(&version.to_le_bytes());
    p[16..24].copy_from_slice(&amount.to_le_bytes());
    p[24] = direction.byte();
    p
}

fn close_sig_payload(channel: ChannelId, version: u64) -> [u8; 21] {
    let mut p = [0u8; 21];
    p[..5].copy_from_slice(b"close");
    p[5..13].copy_from_slice(&(channel.0 as u64).to_le_bytes());
    p[13..].copy_from_slice(&version.to_le_bytes());
    p
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedTx {
    /// 1-based position in the current log.
    pub index: u64,
    pub opening: TxOpening,
    pub digest: Digest,
}

/// `update_channel` message. The nonce travels with it so that either party
/// can later produce the balance proof.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateMsg {
    pub channel: ChannelId,
    pub sig: Tag,
    pub version: u64,
    pub amount: Amount,
    pub digest: Digest,
    pub direction: Direction,
    pub nonce: [u8; 16],
}

impl UpdateMsg {
    fn opening(&self) -> TxOpening {
        TxOpening {
            nonce: self.nonce,
            amount: self.amount,
            version: self.version,
            sig: self.sig,
            direction: self.direction,
        }
    }
}

/// How public balances follow an update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub enum PublicBalancePolicy {
    /// Sender's public drops by the amount (floored at 0); receiver's public
    /// rises by the amount, capped at its new true balance.
    #[default]
    DeltaFollow,
    /// Each public balance is `floor(ratio * true)`.
    Fraction(f64),
}

impl PublicBalancePolicy {
    pub fn is_valid(&self) -> bool {
        match *self {
            PublicBalancePolicy::DeltaFollow => true,
            PublicBalancePolicy::Fraction(r) => (0.0..=1.0).contains(&r),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub id: ChannelId,
    pub parties: (NodeId, NodeId),
    /// Balances the current log replays from (reset moves these forward).
    pub initial: (Amount, Amount),
    pub balances: (Amount, Amount),
    pub public: (Amount, Amount),
    pub version: u64,
    /// Channel version at the last reset; the log covers `log_base+1..=version`.
    pub log_base: u64,
    pub log: Vec<LoggedTx>,
    pub policy: PublicBalancePolicy,
    proofs_taken: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloseClaim {
    pub version: u64,
    pub sig: Tag,
}

impl CloseClaim {
    pub fn sign(keyring: &Keyring, party: NodeId, channel: ChannelId, version: u64) -> Self {
        CloseClaim {
            version,
            sig: keyring.sign(party, &close_sig_payload(channel, version)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Settlement {
    pub channel: ChannelId,
    pub final_balances: (Amount, Amount),
    pub settled_version: u64,
}

pub fn open_channel(id: ChannelId, a: NodeId, b: NodeId, x_a: Amount, x_b: Amount) -> Result<Channel, ChannelError> {
    if a == b {
        return Err(ChannelError::SelfChannel);
    }
    if x_a.checked_add(x_b).unwrap_or(0) == 0 {
        return Err(ChannelError::EmptyDeposit);
    }
    Ok(Channel {
        id,
        parties: (a, b),
        initial: (x_a, x_b),
        balances: (x_a, x_b),
        public: (x_a, x_b),
        version: 0,
        log_base: 0,
        log: Vec::new(),
        policy: PublicBalancePolicy::DeltaFollow,
        proofs_taken: 0,
    })
}

fn side_of(pair: (Amount, Amount), side: Side) -> Amount {
    match side {
        Side::A => pair.0,
        Side::B => pair.1,
    }
}

impl Channel {
    pub fn with_policy(mut self, policy: PublicBalancePolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn capacity(&self) -> Amount {
        self.balances.0 + self.balances.1
    }

    pub fn party(&self, side: Side) -> NodeId {
        match side {
            Side::A => self.parties.0,
            Side::B => self.parties.1,
        }
    }

    pub fn side_of(&self, node: NodeId) -> Option<Side> {
        if node == self.parties.0 {
            Some(Side::A)
        } else if node == self.parties.1 {
            Some(Side::B)
        } else {
            None
        }
    }

    pub fn balance(&self, side: Side) -> Amount {
        side_of(self.balances, side)
    }

    pub fn public_balance(&self, side: Side) -> Amount {
        side_of(self.public, side)
    }

    /// Announces new public balances; each must not exceed the true balance.
    pub fn set_public(&mut self, p_a: Amount, p_b: Amount) -> Result<(), ChannelError> {
        if p_a > self.balances.0 || p_b > self.balances.1 {
            return Err(ChannelError::PublicExceedsTrue);
        }
        self.public = (p_a, p_b);
        Ok(())
    }

    pub fn make_update<R: RngCore>(
        &self,
        sender: Side,
        amount: Amount,
        rng: &mut R,
        keyring: &Keyring,
    ) -> Result<UpdateMsg, ChannelError> {
        if amount == 0 {
            return Err(ChannelError::ZeroAmount);
        }
        let available = self.balance(sender);
        if available < amount {
            return Err(ChannelError::InsufficientFunds {
                needed: amount,
                available,
            });
        }
        let version = self.version + 1;
        let direction = Direction::from_sender(sender);
        let sig = keyring.sign(
            self.party(sender),
            &update_sig_payload(self.id, version, amount, direction),
        );
        let mut nonce = [0u8; 16];
        rng.fill_bytes(&mut nonce);
        Ok(UpdateMsg {
            channel: self.id,
            sig,
            version,
            amount,
            digest: tx_digest(&nonce, amount, version, &sig),
            direction,
            nonce,
        })
    }

    /// Validates `msg` completely, then applies it; on error the channel is
    /// left untouched.
    pub fn apply_update(&mut self, msg: &UpdateMsg, keyring: &Keyring) -> Result<(), ChannelError> {
        if msg.channel != self.id {
            return Err(ChannelError::WrongChannel {
                expected: self.id,
                got: msg.channel,
            });
        }
        if msg.version != self.version + 1 {
            return Err(ChannelError::VersionMismatch {
                expected: self.version + 1,
                got: msg.version,
            });
        }
        let opening = msg.opening();
        let sender = msg.direction.sender();
        let sig_ok = keyring.verify(
            self.party(sender),
            &update_sig_payload(self.id, msg.version, msg.amount, msg.direction),
            &msg.sig,
        );
        if opening.digest() != msg.digest || !sig_ok {
            return Err(ChannelError::TamperDetected);
        }
        if msg.amount == 0 {
            return Err(ChannelError::ZeroAmount);
        }
        let available = self.balance(sender);
        if available < msg.amount {
            return Err(ChannelError::InsufficientFunds {
                needed: msg.amount,
                available,
            });
        }

        let amt = msg.amount;
        let (mut ta, mut tb) = self.balances;
        let (mut pa, mut pb) = self.public;
        match sender {
            Side::A => {
                ta -= amt;
                tb += amt;
            }
            Side::B => {
                tb -= amt;
                ta += amt;
            }
        }
        match self.policy {
            PublicBalancePolicy::DeltaFollow => match sender {
                Side::A => {
                    pa = pa.saturating_sub(amt);
                    pb = (pb + amt).min(tb);
                }
                Side::B => {
                    pb = pb.saturating_sub(amt);
                    pa = (pa + amt).min(ta);
                }
            },
            PublicBalancePolicy::Fraction(r) => {
                pa = ((ta as f64 * r).floor() as Amount).min(ta);
                pb = ((tb as f64 * r).floor() as Amount).min(tb);
            }
        }
        // Clamp keeps the invariant even if an earlier `set_public` was loose.
        self.public = (pa.min(ta), pb.min(tb));
        self.balances = (ta, tb);
        self.version = msg.version;
        self.log.push(LoggedTx {
            index: self.log.len() as u64 + 1,
            opening,
            digest: msg.digest,
        });
        Ok(())
    }

    /// Sends `amount` from `sender` to the counterparty in one step.
    pub fn pay<R: RngCore>(
        &mut self,
        sender: Side,
        amount: Amount,
        rng: &mut R,
        keyring: &Keyring,
    ) -> Result<UpdateMsg, ChannelError> {
        let msg = self.make_update(sender, amount, rng, keyring)?;
        self.apply_update(&msg, keyring)?;
        Ok(msg)
    }

    /// Alternates A, B, A, ... across successive proofs.
    pub fn next_prover(&mut self) -> Side {
        let side = if self.proofs_taken.is_multiple_of(2) { Side::A } else { Side::B };
        self.proofs_taken += 1;
        side
    }

    /// Restarts the log from the current balances once it reaches
    /// `threshold` entries. The version number keeps counting.
    pub fn maybe_reset(&mut self, threshold: usize) -> bool {
        if threshold == 0 || self.log.len() < threshold {
            return false;
        }
        self.initial = self.balances;
        self.log_base = self.version;
        self.log.clear();
        true
    }

    /// Balances after replaying the log up to channel version `version`.
    pub fn balances_at(&self, version: u64) -> Result<(Amount, Amount), ChannelError> {
        if version > self.version {
            return Err(ChannelError::FraudulentClaim {
                claimed: version,
                latest: self.version,
            });
        }
        if version < self.log_base {
            return Err(ChannelError::PrunedVersion(version));
        }
        let upto = (version - self.log_base) as usize;
        replay_log(self.initial, &self.log[..upto])
    }

    /// Structural invariants; used by tests and debug assertions.
    pub fn check_invariants(&self) -> Result<(), String> {
        let cap0 = self.initial.0 as u128 + self.initial.1 as u128;
        let cap = self.balances.0 as u128 + self.balances.1 as u128;
        if cap0 != cap {
            return Err(format!("capacity drifted from {cap0} to {cap}"));
        }
        if self.public.0 > self.balances.0 || self.public.1 > self.balances.1 {
            return Err("public balance above true balance".into());
        }
        if self.version != self.log_base + self.log.len() as u64 {
            return Err("version does not match log length".into());
        }
        match replay_log(self.initial, &self.log) {
            Ok(b) if b == self.balances => Ok(()),
            Ok(b) => Err(format!("replay gives {b:?}, state has {:?}", self.balances)),
            Err(e) => Err(e.to_string()),
        }
    }
}

/// Folds logged transfers over `initial`, checking every digest.
pub fn replay_log(initial: (Amount, Amount), log: &[LoggedTx]) -> Result<(Amount, Amount), ChannelError> {
    let (mut a, mut b) = initial;
    for (i, tx) in log.iter().enumerate() {
        if tx.opening.digest() != tx.digest {
            return Err(ChannelError::TamperDetected);
        }
        let amt = tx.opening.amount;
        match tx.opening.direction {
            Direction::AToB => {
                a = a.checked_sub(amt).ok_or(ChannelError::InvalidLog(i))?;
                b = b.checked_add(amt).ok_or(ChannelError::InvalidLog(i))?;
            }
            Direction::BToA => {
                b = b.checked_sub(amt).ok_or(ChannelError::InvalidLog(i))?;
                a = a.checked_add(amt).ok_or(ChannelError::InvalidLog(i))?;
            }
        }
    }
    Ok((a, b))
}

/// Settles at the highest validly signed version.
pub fn close_channel(
    ch: &Channel,
    claim_a: &CloseClaim,
    claim_b: &CloseClaim,
    keyring: &Keyring,
) -> Result<Settlement, ChannelError> {
    for (claim, party) in [(claim_a, ch.parties.0), (claim_b, ch.parties.1)] {
        if !keyring.verify(party, &close_sig_payload(ch.id, claim.version), &claim.sig) {
            return Err(ChannelError::TamperDetected);
        }
        if claim.version > ch.version {
            return Err(ChannelError::FraudulentClaim {
                claimed: claim.version,
                latest: ch.version,
            });
        }
    }
    let settled_version = claim_a.version.max(claim_b.version);
    Ok(Settlement {
        channel: ch.id,
        final_balances: ch.balances_at(settled_version)?,
        settled_version,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const A: NodeId = NodeId(0);
    const B: NodeId = NodeId(1);

    fn ch79() -> Channel {
        open_channel(ChannelId(0), A, B, 7, 9).unwrap()
    }

    #[test]
    fn open_examples() {
        let ch = ch79();
        assert_eq!(ch.capacity(), 16);
        assert_eq!(ch.version, 0);
        assert_eq!(ch.balances, (7, 9));
        assert_eq!(ch.public, (7, 9));
        assert_eq!(open_channel(ChannelId(0), A, B, 0, 5).unwrap().balances, (0, 5));
        assert_eq!(open_channel(ChannelId(0), A, A, 1, 1), Err(ChannelError::SelfChannel));
        assert_eq!(open_channel(ChannelId(0), A, B, 0, 0), Err(ChannelError::EmptyDeposit));
    }

    #[test]
    fn make_update_examples() {
        let ring = Keyring::new(0);
        let ch = ch79();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let msg = ch.make_update(Side::A, 3, &mut rng, &ring).unwrap();
        assert_eq!(msg.version, 1);
        assert_eq!(msg.amount, 3);
        assert_eq!(msg.digest, tx_digest(&msg.nonce, 3, 1, &msg.sig));
        assert_eq!(
            ch.make_update(Side::A, 8, &mut rng, &ring),
            Err(ChannelError::InsufficientFunds {
                needed: 8,
                available: 7
            })
        );
        let again = ch
            .make_update(Side::A, 3, &mut ChaCha8Rng::seed_from_u64(1), &ring)
            .unwrap();
        assert_eq!(again.digest, msg.digest);
    }

    #[test]
    fn apply_update_delta_follow() {
        let ring = Keyring::new(0);
        let mut ch = ch79();
        ch.set_public(5, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let msg = ch.make_update(Side::A, 3, &mut rng, &ring).unwrap();
        ch.apply_update(&msg, &ring).unwrap();
        assert_eq!(ch.balances, (4, 12));
        assert_eq!(ch.public, (2, 9));
        assert_eq!(ch.version, 1);
        assert_eq!(
            ch.apply_update(&msg, &ring),
            Err(ChannelError::VersionMismatch { expected: 2, got: 1 })
        );
        ch.check_invariants().unwrap();
    }

    #[test]
    fn apply_update_fraction_policy() {
        let ring = Keyring::new(0);
        let mut ch = ch79().with_policy(PublicBalancePolicy::Fraction(0.5));
        ch.pay(Side::B, 4, &mut ChaCha8Rng::seed_from_u64(0), &ring).unwrap();
        assert_eq!(ch.balances, (11, 5));
        assert_eq!(ch.public, (5, 2));
    }

    #[test]
    fn tampering_is_detected() {
        let ring = Keyring::new(0);
        let ch = ch79();
        let msg = ch
            .make_update(Side::A, 3, &mut ChaCha8Rng::seed_from_u64(3), &ring)
            .unwrap();
        let mut bad = msg.clone();
        bad.amount ^= 1;
        assert_eq!(ch.clone().apply_update(&bad, &ring), Err(ChannelError::TamperDetected));
        let mut bad = msg.clone();
        bad.nonce[0] ^= 0x80;
        assert_eq!(ch.clone().apply_update(&bad, &ring), Err(ChannelError::TamperDetected));
        // Re-hashing a forged amount still fails the signature check.
        let mut forged = msg.clone();
        forged.amount = 1;
        forged.digest = tx_digest(&forged.nonce, 1, forged.version, &forged.sig);
        assert_eq!(
            ch.clone().apply_update(&forged, &ring),
            Err(ChannelError::TamperDetected)
        );
        let mut c = ch.clone();
        assert!(c.apply_update(&msg, &ring).is_ok());
    }

    #[test]
    fn replay_examples() {
        let ring = Keyring::new(0);
        let mut ch = ch79();
        assert_eq!(replay_log((7, 9), &[]).unwrap(), (7, 9));
        ch.pay(Side::A, 3, &mut ChaCha8Rng::seed_from_u64(0), &ring).unwrap();
        assert_eq!(replay_log((7, 9), &ch.log).unwrap(), (4, 12));

        // An A->B transfer of 8 out of 7 cannot be replayed.
        let mut big = open_channel(ChannelId(0), A, B, 8, 9).unwrap();
        big.pay(Side::A, 8, &mut ChaCha8Rng::seed_from_u64(0), &ring).unwrap();
        assert_eq!(replay_log((7, 9), &big.log), Err(ChannelError::InvalidLog(0)));

        let mut tampered = ch.log.clone();
        tampered[0].opening.amount = 2;
        assert_eq!(replay_log((7, 9), &tampered), Err(ChannelError::TamperDetected));
    }

    fn with_versions(n: usize) -> (Channel, Keyring) {
        let ring = Keyring::new(5);
        let mut ch = open_channel(ChannelId(3), A, B, 50, 50).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in 0..n {
            let side = if i % 2 == 0 { Side::A } else { Side::B };
            ch.pay(side, 1 + i as u64, &mut rng, &ring).unwrap();
        }
        (ch, ring)
    }

    #[test]
    fn close_examples() {
        let (ch, ring) = with_versions(5);
        let claim = |p, v| CloseClaim::sign(&ring, p, ch.id, v);
        let s = close_channel(&ch, &claim(A, 5), &claim(B, 5), &ring).unwrap();
        assert_eq!(s.settled_version, 5);
        assert_eq!(s.final_balances, ch.balances);

        let s = close_channel(&ch, &claim(A, 3), &claim(B, 5), &ring).unwrap();
        assert_eq!(s.settled_version, 5);

        let s = close_channel(&ch, &claim(A, 3), &claim(B, 2), &ring).unwrap();
        assert_eq!(s.final_balances, replay_log(ch.initial, &ch.log[..3]).unwrap());

        assert_eq!(
            close_channel(&ch, &claim(A, 99), &claim(B, 5), &ring),
            Err(ChannelError::FraudulentClaim { claimed: 99, latest: 5 })
        );
        // A claim signed by the wrong party is rejected.
        assert_eq!(
            close_channel(&ch, &claim(B, 5), &claim(B, 5), &ring),
            Err(ChannelError::TamperDetected)
        );
    }

    #[test]
    fn reset_keeps_version() {
        let (mut ch, _) = with_versions(4);
        assert!(!ch.maybe_reset(5));
        let before = ch.balances;
        assert!(ch.maybe_reset(4));
        assert!(ch.log.is_empty());
        assert_eq!(ch.initial, before);
        assert_eq!(ch.version, 4);
        assert_eq!(ch.log_base, 4);
        ch.check_invariants().unwrap();
        assert_eq!(ch.balances_at(2), Err(ChannelError::PrunedVersion(2)));
        assert_eq!(ch.balances_at(4).unwrap(), before);
    }

    #[test]
    fn prover_alternates() {
        let mut ch = ch79();
        let turns: Vec<Side> = (0..4).map(|_| ch.next_prover()).collect();
        assert_eq!(turns, [Side::A, Side::B, Side::A, Side::B]);
    }
}
