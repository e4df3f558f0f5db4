use std::any::Any;

use thiserror::Error;

use crate::crypto::{chain_extend, sequencer_sign_payload, ChainHash, MacKey, SharedCrypto, SigningKey};
use crate::sim::{Context, Node, NodeId};
use crate::wire::{AomTimer, Message, Timer};

use super::{AomPacket, AuthMode, Authenticator, GroupConfig, GroupId, MAX_MAC_GROUP};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StampError {
    #[error("group has no members")]
    EmptyGroup,
    #[error("MAC-vector groups hold at most 72 receivers, asked for {0}")]
    GroupTooLarge(usize),
    #[error("packet addressed to unknown group {0:?}")]
    WrongGroup(GroupId),
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct SequencerStats {
    pub stamped: u64,
    pub signatures: u64,
    pub macs: u64,
}

pub struct SequencerCore {
    config: GroupConfig,
    mac_keys: Vec<MacKey>,
    signing: Option<SigningKey>,
    crypto: SharedCrypto,
    counter: u64,
    chain: ChainHash,
    since_signature: u32,
    last: Option<AomPacket>,
    prev_payload: Option<Vec<u8>>,
    /// Hand the upper half of the ranks the previous packet's payload under
    /// each new sequence number.
    pub equivocate: bool,
    pub stats: SequencerStats,
}

impl SequencerCore {
    pub fn new(
        config: GroupConfig,
        mac_keys: Vec<MacKey>,
        signing: Option<SigningKey>,
        crypto: SharedCrypto,
    ) -> Result<Self, StampError> {
        if config.members.is_empty() {
            return Err(StampError::EmptyGroup);
        }
        if config.auth == AuthMode::MacVector && config.size() > MAX_MAC_GROUP {
            return Err(StampError::GroupTooLarge(config.size()));
        }
        Ok(Self {
            config,
            mac_keys,
            signing,
            crypto,
            counter: 0,
            chain: ChainHash::ZERO,
            since_signature: 0,
            last: None,
            prev_payload: None,
            equivocate: false,
            stats: SequencerStats::default(),
        })
    }

    pub fn config(&self) -> &GroupConfig {
        &self.config
    }

    pub fn next_seq(&self) -> u64 {
        self.counter + 1
    }

    fn mac_auth(&mut self, seq: u64, digest: &crate::crypto::Digest) -> Authenticator {
        self.stats.macs += self.mac_keys.len() as u64;
        let v = self
            .crypto
            .mac_vector(&self.mac_keys, self.config.epoch, seq, digest)
            .expect("group checked non-empty");
        Authenticator::Macs(v)
    }

    fn sign(&mut self, seq: u64, digest: &crate::crypto::Digest, chain_prev: ChainHash) -> Authenticator {
        self.stats.signatures += 1;
        let key = self.signing.as_ref().expect("signature mode has a key");
        let payload = sequencer_sign_payload(self.config.epoch, seq, digest, &chain_prev);
        Authenticator::Signed {
            signature: self.crypto.sign(key, &payload),
            chain_prev,
        }
    }

    /// Stamps one packet and returns the copy for each rank.
    pub fn stamp(&mut self, mut pkt: AomPacket) -> Result<Vec<AomPacket>, StampError> {
        if pkt.header.group != self.config.group {
            return Err(StampError::WrongGroup(pkt.header.group));
        }
        self.counter += 1;
        self.stats.stamped += 1;
        let seq = self.counter;
        pkt.header.epoch = self.config.epoch;
        pkt.header.seq = seq;
        let digest = pkt.header.digest;
        pkt.header.auth = match self.config.auth {
            AuthMode::MacVector => self.mac_auth(seq, &digest),
            AuthMode::Signature { ratio } => {
                let chain_prev = self.chain;
                self.chain = chain_extend(&chain_prev, &digest, seq);
                self.since_signature += 1;
                if self.since_signature >= ratio.max(1) {
                    self.since_signature = 0;
                    self.sign(seq, &digest, chain_prev)
                } else {
                    Authenticator::Chained { chain_prev }
                }
            }
        };
        let n = self.config.size();
        let mut copies = vec![pkt.clone(); n];
        if self.equivocate {
            if let Some(prev) = self.prev_payload.clone() {
                let alt_digest = self.crypto.digest(&prev);
                let alt_auth = match self.config.auth {
                    AuthMode::MacVector => self.mac_auth(seq, &alt_digest),
                    AuthMode::Signature { .. } => {
                        let chain_prev = *pkt.header.auth.chain_prev().unwrap();
                        self.sign(seq, &alt_digest, chain_prev)
                    }
                };
                for copy in copies.iter_mut().skip(n - n / 2) {
                    copy.payload = prev.clone();
                    copy.header.digest = alt_digest;
                    copy.header.auth = alt_auth.clone();
                }
            }
        }
        self.prev_payload = Some(pkt.payload.clone());
        self.last = Some(pkt);
        Ok(copies)
    }

    /// Re-issues the last packet with a signature if it went out chained
    /// only, so receivers can close the open chain segment.
    pub fn flush(&mut self) -> Option<AomPacket> {
        let last = self.last.as_ref()?;
        let Authenticator::Chained { chain_prev } = last.header.auth else {
            return None;
        };
        let (seq, digest) = (last.header.seq, last.header.digest);
        let mut pkt = last.clone();
        pkt.header.auth = self.sign(seq, &digest, chain_prev);
        self.since_signature = 0;
        self.last = Some(pkt.clone());
        Some(pkt)
    }
}

pub struct SequencerNode {
    core: SequencerCore,
    idle_flush: u64,
    generation: u64,
}

impl SequencerNode {
    pub fn new(core: SequencerCore, idle_flush: u64) -> Self {
        Self {
            core,
            idle_flush,
            generation: 0,
        }
    }

    pub fn core(&self) -> &SequencerCore {
        &self.core
    }

    fn members(&self) -> Vec<NodeId> {
        self.core.config.members.clone()
    }
}

impl Node<Message, Timer> for SequencerNode {
    fn on_message(&mut self, ctx: &mut Context<'_, Message, Timer>, _from: NodeId, msg: Message) {
        let Message::Submit(pkt) = msg else {
            return;
        };
        let Ok(copies) = self.core.stamp(pkt) else {
            return;
        };
        for (member, copy) in self.members().into_iter().zip(copies) {
            ctx.send(member, Message::Aom(copy));
        }
        if matches!(
            self.core.last.as_ref().map(|p| &p.header.auth),
            Some(Authenticator::Chained { .. })
        ) {
            self.generation += 1;
            ctx.set_timer(
                self.idle_flush,
                Timer::Aom(AomTimer::IdleFlush {
                    generation: self.generation,
                }),
            );
        }
    }

    fn on_timer(&mut self, ctx: &mut Context<'_, Message, Timer>, timer: Timer) {
        let Timer::Aom(AomTimer::IdleFlush { generation }) = timer else {
            return;
        };
        if generation != self.generation {
            return;
        }
        if let Some(pkt) = self.core.flush() {
            ctx.send_all(self.members(), Message::Aom(pkt));
        }
    }

    fn in_network(&self) -> bool {
        true
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
