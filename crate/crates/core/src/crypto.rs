//! Hashing and modeled signatures.
//!
//! Signatures are keyed tags (HMAC-SHA256) under a per-node secret derived
//! from a keyring seed. Within the simulation they behave as unforgeable
//! authenticity tokens; no public-key cryptography is involved.

use hmac::{Hmac, Mac};
use sha2::{Digest as _, Sha256};

use crate::NodeId;

pub type Digest = [u8; 32];
pub type Tag = [u8; 32];

type HmacSha256 = Hmac<Sha256>;

pub fn sha256(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

pub fn keyed_tag(key: &[u8], parts: &[&[u8]]) -> Tag {
    let mut mac = HmacSha256::new_from_slice(key).expect("hmac accepts any key length");
    for p in parts {
        mac.update(p);
    }
    mac.finalize().into_bytes().into()
}

/// Constant-time-ish equality is irrelevant in a simulator; plain compare.
pub fn tags_equal(a: &[u8], b: &[u8]) -> bool {
    a == b
}

/// Ideal signature functionality: every node's secret is derived from the
/// seed, and anyone holding the keyring can check a tag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Keyring {
    seed: u64,
}

impl Keyring {
    pub fn new(seed: u64) -> Self {
        Keyring { seed }
    }

    fn secret(&self, node: NodeId) -> Digest {
        sha256(&[b"zkpcn-node-key", &self.seed.to_le_bytes(), &node.0.to_le_bytes()])
    }

    pub fn sign(&self, node: NodeId, payload: &[u8]) -> Tag {
        keyed_tag(&self.secret(node), &[payload])
    }

    pub fn verify(&self, node: NodeId, payload: &[u8], tag: &Tag) -> bool {
        tags_equal(&self.sign(node, payload), tag)
    }
}

pub fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn from_hex(s: &str) -> Option<Vec<u8>> {
    if !s.len().is_multiple_of(2) || !s.is_ascii() {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_empty_matches_known_vector() {
        assert_eq!(
            to_hex(&sha256(&[])),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn signatures_are_node_specific() {
        let ring = Keyring::new(1);
        let tag = ring.sign(NodeId(0), b"hello");
        assert!(ring.verify(NodeId(0), b"hello", &tag));
        assert!(!ring.verify(NodeId(1), b"hello", &tag));
        assert!(!Keyring::new(2).verify(NodeId(0), b"hello", &tag));
    }

    #[test]
    fn hex_round_trip() {
        let bytes = [0u8, 1, 0xab, 0xff];
        assert_eq!(from_hex(&to_hex(&bytes)).unwrap(), bytes);
        assert!(from_hex("abc").is_none());
        assert!(from_hex("zz").is_none());
    }
}
