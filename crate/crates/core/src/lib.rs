//! Deterministic payment-channel-network simulator with zero-knowledge
//! public-balance announcements.
//!
//! The crate is organised bottom-up:
//!
//! * [`topology`] loads or synthesizes the channel graph.
//! * [`channel`] is the two-party channel state machine with a hash-chained log.
//! * [`zk`] defines the public-balance relation and a transparent proof backend.
//! * [`routing`] holds routing tables, path selection and reactive proof
//!   generation (RPG) messages.
//! * [`workload`] samples sender/recipient pairs and amounts.
//! * [`sim`] runs payments under LN, zk-PCN and zk-IPCN modes.
//! * [`report`] drives parameter sweeps and emits CSV.

pub mod channel;
pub mod crypto;
pub mod report;
pub mod routing;
pub mod sim;
pub mod topology;
pub mod workload;
pub mod zk;

use serde::{Deserialize, Serialize};
use std::fmt;

/// Coin amounts are integral base units.
pub type Amount = u64;

/// Dense node index into a [`topology::Network`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

/// Dense channel index into a [`topology::Network`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChannelId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ChannelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node#{}", self.0)
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "chan#{}", self.0)
    }
}

pub use channel::{Channel, Direction};
pub use topology::Network;
