//! NeoBFT clients and replicas.

mod adversary;
mod app;
mod client;
mod log;
mod merge;
mod message;
mod replica;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::crypto::{derive_seed, CryptoSuite, SigningKey, VerifyingKey};

pub use adversary::ByzantineReplica;
pub use app::{App, AppKind, EchoApp, KvApp, NONE_MARKER};
pub use client::{Client, ClientStats};
pub use log::{EntryBody, LogEntry, ReplicaLog};
pub use merge::{merge_logs, MergeError, MergedLog};
pub use message::{
    EpochCertificate, EpochStart, GapCertificate, GapCertified, GapDecision, GapDrop, GapFind,
    GapProof, GapRecv, GapVote, ProtocolMessage, Query, QueryReply, Reply, Request, Sync,
    ViewChange, ViewStart, VotePhase,
};
pub use replica::{Replica, ReplicaStats};

/// `⟨epoch, leader_num⟩`, ordered lexicographically.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct ViewId {
    pub epoch: u32,
    pub leader_num: u32,
}

impl ViewId {
    pub const fn new(epoch: u32, leader_num: u32) -> Self {
        Self { epoch, leader_num }
    }

    pub fn leader(&self, n: usize) -> u32 {
        (self.leader_num as usize % n) as u32
    }

    pub fn next_leader(self) -> Self {
        Self::new(self.epoch, self.leader_num + 1)
    }

    pub fn next_epoch(self) -> Self {
        Self::new(self.epoch + 1, self.leader_num)
    }
}

impl fmt::Display for ViewId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{}>", self.epoch, self.leader_num)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Request,
    NoOp,
}

impl EntryKind {
    pub fn code(self) -> u8 {
        match self {
            EntryKind::Request => 1,
            EntryKind::NoOp => 2,
        }
    }
}

/// Verification keys of every replica and client, by index.
#[derive(Debug, Clone)]
pub struct KeyRing {
    pub replicas: Vec<VerifyingKey>,
    pub clients: Vec<VerifyingKey>,
}

impl KeyRing {
    pub fn replica(&self, i: u32) -> Option<&VerifyingKey> {
        self.replicas.get(i as usize)
    }

    pub fn client(&self, i: u32) -> Option<&VerifyingKey> {
        self.clients.get(i as usize)
    }
}

/// Deterministic identities for one run.
pub struct Identities {
    pub replicas: Vec<SigningKey>,
    pub clients: Vec<SigningKey>,
    pub ring: Arc<KeyRing>,
}

impl Identities {
    pub fn generate(seed: u64, n: usize, clients: usize, crypto: &dyn CryptoSuite) -> Self {
        let replicas: Vec<SigningKey> = (0..n)
            .map(|i| crypto.keypair_from_seed(&derive_seed(seed, "replica", i as u64)))
            .collect();
        let client_keys: Vec<SigningKey> = (0..clients)
            .map(|i| crypto.keypair_from_seed(&derive_seed(seed, "client", i as u64)))
            .collect();
        let ring = Arc::new(KeyRing {
            replicas: replicas.iter().map(SigningKey::verifying_key).collect(),
            clients: client_keys.iter().map(SigningKey::verifying_key).collect(),
        });
        Self {
            replicas,
            clients: client_keys,
            ring,
        }
    }
}

/// Protocol timer settings in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Timeouts {
    pub client_resend: u64,
    pub query_resend: u64,
    pub gap_progress: u64,
    pub view_change: u64,
    pub view_change_resend: u64,
    /// Unicast request not sequenced in time: move to the next epoch.
    pub unicast: u64,
    pub sync_resend: u64,
    pub sync_progress: u64,
    pub reorder: u64,
    pub confirm: u64,
    pub idle_flush: u64,
}

impl Default for Timeouts {
    fn default() -> Self {
        Self {
            client_resend: 50,
            query_resend: 20,
            gap_progress: 40,
            view_change: 100,
            view_change_resend: 50,
            unicast: 100,
            sync_resend: 50,
            sync_progress: 100,
            reorder: 10,
            confirm: 40,
            idle_flush: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicaSettings {
    pub n: usize,
    pub f: usize,
    pub sync_interval: u64,
    pub timeouts: Timeouts,
}

impl ReplicaSettings {
    pub fn quorum(&self) -> usize {
        2 * self.f + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn views_order_by_epoch_first() {
        let a = ViewId::new(0, 5);
        let b = ViewId::new(1, 0);
        assert!(a < b);
        assert!(ViewId::new(1, 0) < ViewId::new(1, 1));
        assert_eq!(a.next_leader(), ViewId::new(0, 6));
        assert_eq!(a.next_epoch(), ViewId::new(1, 5));
    }

    #[test]
    fn leader_rotates_round_robin() {
        assert_eq!(ViewId::new(3, 0).leader(4), 0);
        assert_eq!(ViewId::new(0, 5).leader(4), 1);
        assert_eq!(ViewId::new(0, 13).leader(7), 6);
    }
}
