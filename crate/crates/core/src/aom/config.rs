use std::any::Any;
use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::{derive_seed, MacKey, SharedCrypto, SigningKey, VerifyingKey};
use crate::sim::{Context, Node, NodeId};
use crate::trace::Observation;
use crate::wire::{AomTimer, ControlMessage, Message, Timer};

use super::{AuthMode, GroupId, NetworkModel, SequencerCore, SequencerNode, StampError, MAX_MAC_GROUP};

/// Public view of a group in one epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupConfig {
    pub group: GroupId,
    pub epoch: u32,
    pub f: usize,
    /// Receivers in rank order.
    pub members: Vec<NodeId>,
    pub sequencer: NodeId,
    pub auth: AuthMode,
    pub network: NetworkModel,
    /// Signature mode only.
    pub sequencer_key: Option<VerifyingKey>,
    /// Byzantine-network mode only: keys for checking ORDER-CONFIRMs.
    pub receiver_keys: Vec<VerifyingKey>,
}

impl GroupConfig {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn quorum(&self) -> usize {
        2 * self.f + 1
    }
}

/// What one receiver holds for one epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberConfig {
    pub group: GroupConfig,
    pub rank: u32,
    /// MAC-vector mode only.
    pub mac_key: Option<MacKey>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JoinOutcome {
    Joined(MemberConfig),
    /// Membership changes only at epoch boundaries once the group runs.
    Deferred,
}

pub struct ConfigService {
    group: GroupId,
    f: usize,
    auth: AuthMode,
    network: NetworkModel,
    crypto: SharedCrypto,
    seed: u64,
    members: Vec<NodeId>,
    member_keys: Vec<VerifyingKey>,
    pending: Vec<(NodeId, VerifyingKey)>,
    epoch: u32,
    started: bool,
    transition: Option<u32>,
    votes: BTreeMap<u32, BTreeSet<u32>>,
    idle_flush: u64,
    /// Leave earlier sequencers on the route after a failover, modelling a
    /// transiently faulty switch that keeps stamping.
    pub keep_old_route: bool,
    /// Epochs whose sequencer equivocates.
    pub equivocating_epochs: BTreeSet<u32>,
}

impl ConfigService {
    pub fn new(
        group: GroupId,
        f: usize,
        auth: AuthMode,
        network: NetworkModel,
        crypto: SharedCrypto,
        seed: u64,
    ) -> Self {
        Self {
            group,
            f,
            auth,
            network,
            crypto,
            seed,
            members: Vec::new(),
            member_keys: Vec::new(),
            pending: Vec::new(),
            epoch: 0,
            started: false,
            transition: None,
            votes: BTreeMap::new(),
            idle_flush: 4,
            keep_old_route: false,
            equivocating_epochs: BTreeSet::new(),
        }
    }

    pub fn with_idle_flush(mut self, ticks: u64) -> Self {
        self.idle_flush = ticks;
        self
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn members(&self) -> &[NodeId] {
        &self.members
    }

    pub fn in_transition(&self) -> bool {
        self.transition.is_some()
    }

    fn rank_of(&self, who: NodeId) -> Option<u32> {
        self.members.iter().position(|m| *m == who).map(|r| r as u32)
    }

    pub fn join(&mut self, who: NodeId, key: VerifyingKey) -> Result<JoinOutcome, StampError> {
        if let Some(rank) = self.rank_of(who) {
            return Ok(JoinOutcome::Joined(self.member_config(rank)));
        }
        let projected = self.members.len() + self.pending.len() + 1;
        if self.auth == AuthMode::MacVector && projected > MAX_MAC_GROUP {
            return Err(StampError::GroupTooLarge(projected));
        }
        if self.started || self.transition.is_some() {
            if !self.pending.iter().any(|(p, _)| *p == who) {
                self.pending.push((who, key));
            }
            return Ok(JoinOutcome::Deferred);
        }
        self.members.push(who);
        self.member_keys.push(key);
        Ok(JoinOutcome::Joined(
            self.member_config(self.members.len() as u32 - 1),
        ))
    }

    pub fn mac_key(&self, epoch: u32, rank: u32) -> MacKey {
        MacKey(derive_seed(self.seed, &format!("mac-key/epoch-{epoch}"), rank as u64))
    }

    pub fn sequencer_signing_key(&self, epoch: u32) -> SigningKey {
        self.crypto
            .keypair_from_seed(&derive_seed(self.seed, "sequencer-key", epoch as u64))
    }

    pub fn group_config(&self) -> GroupConfig {
        GroupConfig {
            group: self.group,
            epoch: self.epoch,
            f: self.f,
            members: self.members.clone(),
            sequencer: NodeId::sequencer(self.epoch),
            auth: self.auth,
            network: self.network,
            sequencer_key: match self.auth {
                AuthMode::Signature { .. } => {
                    Some(self.sequencer_signing_key(self.epoch).verifying_key())
                }
                AuthMode::MacVector => None,
            },
            receiver_keys: match self.network {
                NetworkModel::ByzantineFaulty => self.member_keys.clone(),
                NetworkModel::CrashFaulty => Vec::new(),
            },
        }
    }

    pub fn member_config(&self, rank: u32) -> MemberConfig {
        MemberConfig {
            group: self.group_config(),
            rank,
            mac_key: match self.auth {
                AuthMode::MacVector => Some(self.mac_key(self.epoch, rank)),
                AuthMode::Signature { .. } => None,
            },
        }
    }

    /// Sequencer state for the current epoch. Fails on an empty group.
    pub fn sequencer_core(&self) -> Result<SequencerCore, StampError> {
        let cfg = self.group_config();
        let mac_keys = match self.auth {
            AuthMode::MacVector => (0..cfg.size() as u32)
                .map(|r| self.mac_key(self.epoch, r))
                .collect(),
            AuthMode::Signature { .. } => Vec::new(),
        };
        let signing = match self.auth {
            AuthMode::Signature { .. } => Some(self.sequencer_signing_key(self.epoch)),
            AuthMode::MacVector => None,
        };
        let mut core = SequencerCore::new(cfg, mac_keys, signing, self.crypto.clone())?;
        core.equivocate = self.equivocating_epochs.contains(&self.epoch);
        Ok(core)
    }

    /// Closes initial membership; later joins wait for an epoch boundary.
    pub fn seal(&mut self) -> Result<SequencerNode, StampError> {
        self.started = true;
        Ok(SequencerNode::new(self.sequencer_core()?, self.idle_flush))
    }

    /// Records one receiver's request. Returns true when this request is the
    /// one that reaches f+1 distinct requesters for the next epoch.
    pub fn request_failover(&mut self, rank: u32, epoch: u32) -> bool {
        if self.transition.is_some() || epoch != self.epoch + 1 {
            return false;
        }
        let votes = self.votes.entry(epoch).or_default();
        votes.insert(rank);
        if votes.len() > self.f {
            self.transition = Some(epoch);
            return true;
        }
        false
    }

    /// Installs the pending epoch with fresh keys and any deferred members.
    pub fn complete_failover(&mut self) -> Option<u32> {
        let epoch = self.transition.take()?;
        for (who, key) in std::mem::take(&mut self.pending) {
            self.members.push(who);
            self.member_keys.push(key);
        }
        self.epoch = epoch;
        self.votes.retain(|e, _| *e > epoch);
        Some(epoch)
    }
}

impl Node<Message, Timer> for ConfigService {
    fn on_message(&mut self, ctx: &mut Context<'_, Message, Timer>, from: NodeId, msg: Message) {
        let Message::Control(ControlMessage::FailoverRequest { epoch }) = msg else {
            return;
        };
        let Some(rank) = self.rank_of(from) else {
            return;
        };
        if epoch == self.epoch && epoch > 0 && self.transition.is_none() {
            // late requester: it still needs the keys
            ctx.send(
                from,
                Message::Control(ControlMessage::EpochInstalled(self.member_config(rank))),
            );
            return;
        }
        if self.request_failover(rank, epoch) {
            ctx.set_timer(1, Timer::Aom(AomTimer::Install { epoch }));
        }
    }

    fn on_timer(&mut self, ctx: &mut Context<'_, Message, Timer>, timer: Timer) {
        let Timer::Aom(AomTimer::Install { epoch }) = timer else {
            return;
        };
        if self.transition != Some(epoch) {
            return;
        }
        let old = NodeId::sequencer(self.epoch);
        self.complete_failover();
        let sequencer = NodeId::sequencer(self.epoch);
        match self.sequencer_core() {
            Ok(core) => ctx.spawn(sequencer, Box::new(SequencerNode::new(core, self.idle_flush))),
            Err(e) => {
                ctx.observe(Observation::Violation {
                    node: ctx.me(),
                    what: format!("cannot start sequencer: {e}"),
                });
                return;
            }
        }
        let mut route = vec![sequencer];
        if self.keep_old_route {
            route.insert(0, old);
        }
        ctx.install_route(self.group.0, route);
        for rank in 0..self.members.len() as u32 {
            ctx.send(
                self.members[rank as usize],
                Message::Control(ControlMessage::EpochInstalled(self.member_config(rank))),
            );
        }
        ctx.observe(Observation::Failover {
            epoch: self.epoch,
            sequencer,
        });
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
