use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::{chain_extend, sequencer_sign_payload, SharedCrypto, SigningKey};
use crate::wire::AomTimer;

use super::{
    AomPacket, Authenticator, ChainLink, DropNotification, MemberConfig, NetworkModel,
    OrderConfirm, OrderingCertificate,
};

/// Cap on packets held for an epoch the receiver has not entered yet.
const FUTURE_BUFFER: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceiverTimeouts {
    /// How long a gap may stay open before a drop notification.
    pub reorder: u64,
    /// How long an authentic packet may wait for a confirmation quorum
    /// before the sequencer is suspected.
    pub confirm: u64,
}

impl Default for ReceiverTimeouts {
    fn default() -> Self {
        Self {
            reorder: 10,
            confirm: 40,
        }
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ReceiverStats {
    pub rejected: u64,
    pub stale: u64,
    pub duplicates: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReceiverOutput {
    Deliver(OrderingCertificate),
    Drop(DropNotification),
    /// Confirmations to broadcast to the other receivers.
    Confirm(Vec<OrderConfirm>),
    Suspect { epoch: u32, seq: u64 },
    Reject { epoch: u32, seq: u64, reason: String },
    Arm { delay: u64, timer: AomTimer },
}

struct Held {
    packet: AomPacket,
    authentic: bool,
    closure: Vec<ChainLink>,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Wait {
    Reorder,
    Confirm,
}

struct EpochState {
    epoch: u32,
    next: u64,
    held: BTreeMap<u64, Held>,
    armed: BTreeSet<(Wait, u64)>,
    suspected: BTreeSet<u64>,
}

/// Receiver-side library: authenticates, orders and (on a Byzantine
/// network) confirms packets for one group member.
pub struct AomReceiver {
    rank: u32,
    crypto: SharedCrypto,
    signing: Option<SigningKey>,
    timeouts: ReceiverTimeouts,
    configs: BTreeMap<u32, MemberConfig>,
    state: Option<EpochState>,
    target: Option<u32>,
    future: BTreeMap<u32, Vec<AomPacket>>,
    confirms: BTreeMap<(u32, u64), BTreeMap<u32, OrderConfirm>>,
    outbox: Vec<OrderConfirm>,
    flush_armed: bool,
    pub stats: ReceiverStats,
}

impl AomReceiver {
    pub fn new(
        rank: u32,
        crypto: SharedCrypto,
        signing: Option<SigningKey>,
        timeouts: ReceiverTimeouts,
    ) -> Self {
        Self {
            rank,
            crypto,
            signing,
            timeouts,
            configs: BTreeMap::new(),
            state: None,
            target: None,
            future: BTreeMap::new(),
            confirms: BTreeMap::new(),
            outbox: Vec::new(),
            flush_armed: false,
            stats: ReceiverStats::default(),
        }
    }

    pub fn rank(&self) -> u32 {
        self.rank
    }

    pub fn config(&self, epoch: u32) -> Option<&MemberConfig> {
        self.configs.get(&epoch)
    }

    pub fn configs(&self) -> &BTreeMap<u32, MemberConfig> {
        &self.configs
    }

    pub fn active_epoch(&self) -> Option<u32> {
        self.state.as_ref().map(|s| s.epoch)
    }

    /// Next sequence number the receiver will deliver in the active epoch.
    pub fn next_seq(&self) -> Option<u64> {
        self.state.as_ref().map(|s| s.next)
    }

    pub fn install(&mut self, cfg: MemberConfig) -> Vec<ReceiverOutput> {
        let epoch = cfg.group.epoch;
        self.configs.entry(epoch).or_insert(cfg);
        self.try_activate()
    }

    /// Start delivering `epoch` (once its keys are installed) and ignore
    /// every earlier epoch from then on.
    pub fn activate(&mut self, epoch: u32) -> Vec<ReceiverOutput> {
        if self.active_epoch().is_some_and(|a| a >= epoch) {
            return Vec::new();
        }
        if self.target.is_none_or(|t| t < epoch) {
            self.target = Some(epoch);
        }
        self.try_activate()
    }

    fn try_activate(&mut self) -> Vec<ReceiverOutput> {
        let Some(epoch) = self.target else {
            return Vec::new();
        };
        if !self.configs.contains_key(&epoch) || self.active_epoch().is_some_and(|a| a >= epoch) {
            return Vec::new();
        }
        self.state = Some(EpochState {
            epoch,
            next: 1,
            held: BTreeMap::new(),
            armed: BTreeSet::new(),
            suspected: BTreeSet::new(),
        });
        self.future.retain(|e, _| *e >= epoch);
        self.confirms.retain(|(e, _), _| *e >= epoch);
        let buffered = self.future.remove(&epoch).unwrap_or_default();
        let mut out = Vec::new();
        for pkt in buffered {
            out.extend(self.on_packet(pkt));
        }
        out.extend(self.advance());
        out
    }

    pub fn on_packet(&mut self, pkt: AomPacket) -> Vec<ReceiverOutput> {
        let epoch = pkt.header.epoch;
        let seq = pkt.header.seq;
        let active = self.active_epoch();
        if active.is_none_or(|a| epoch > a) {
            let buf = self.future.entry(epoch).or_default();
            if buf.len() < FUTURE_BUFFER {
                buf.push(pkt);
            }
            return Vec::new();
        }
        if active.is_some_and(|a| epoch < a) {
            self.stats.stale += 1;
            return Vec::new();
        }
        let st = self.state.as_ref().unwrap();
        if seq < st.next {
            self.stats.stale += 1;
            return Vec::new();
        }
        if let Some(h) = st.held.get(&seq) {
            let upgrade = !h.authentic
                && h.packet.header.digest == pkt.header.digest
                && matches!(pkt.header.auth, Authenticator::Signed { .. });
            if !upgrade {
                self.stats.duplicates += 1;
                return Vec::new();
            }
        }
        let mut out = Vec::new();
        let cfg = &self.configs[&epoch];
        let reject = |reason: &str| ReceiverOutput::Reject {
            epoch,
            seq,
            reason: reason.to_string(),
        };
        if pkt.header.group != cfg.group.group {
            self.stats.rejected += 1;
            return vec![reject("wrong group")];
        }
        if self.crypto.digest(&pkt.payload) != pkt.header.digest {
            self.stats.rejected += 1;
            return vec![reject("digest mismatch")];
        }
        let h = &pkt.header;
        let authentic = match &h.auth {
            Authenticator::None => {
                self.stats.rejected += 1;
                return vec![reject("unstamped")];
            }
            Authenticator::Macs(v) => {
                let ok = cfg.mac_key.as_ref().is_some_and(|key| {
                    v.len() == cfg.group.size()
                        && v.slot(self.rank as usize).is_some_and(|tag| {
                            self.crypto.verify_tag(key, epoch, seq, &h.digest, tag)
                        })
                });
                if !ok {
                    self.stats.rejected += 1;
                    return vec![reject("bad MAC")];
                }
                true
            }
            Authenticator::Signed {
                signature,
                chain_prev,
            } => {
                let ok = cfg.group.sequencer_key.as_ref().is_some_and(|key| {
                    self.crypto.verify(
                        key,
                        &sequencer_sign_payload(epoch, seq, &h.digest, chain_prev),
                        signature,
                    )
                });
                if !ok {
                    self.stats.rejected += 1;
                    return vec![reject("bad signature")];
                }
                true
            }
            Authenticator::Chained { .. } => false,
        };
        let st = self.state.as_mut().unwrap();
        st.held.insert(
            seq,
            Held {
                packet: pkt,
                authentic,
                closure: Vec::new(),
            },
        );
        if authentic {
            out.extend(self.authenticated(seq));
            out.extend(self.walk_back(seq));
        } else {
            out.extend(self.link_from_above(seq));
        }
        out.extend(self.advance());
        out
    }

    /// A chained packet just arrived; if its successor is already trusted,
    /// check the link.
    fn link_from_above(&mut self, seq: u64) -> Vec<ReceiverOutput> {
        let st = self.state.as_ref().unwrap();
        if st.held.get(&(seq + 1)).is_some_and(|h| h.authentic) {
            self.walk_back(seq + 1)
        } else {
            Vec::new()
        }
    }

    /// Extends trust from the authentic packet at `from` down through
    /// contiguous chained packets.
    fn walk_back(&mut self, from: u64) -> Vec<ReceiverOutput> {
        let mut out = Vec::new();
        let mut k = from;
        loop {
            let st = self.state.as_mut().unwrap();
            if k <= st.next {
                break;
            }
            let below = k - 1;
            let (upper_link, upper_closure) = {
                let upper = &st.held[&k];
                let Some(link) = upper.packet.link() else {
                    break;
                };
                (link, upper.closure.clone())
            };
            let Some(h) = st.held.get_mut(&below) else {
                break;
            };
            if h.authentic {
                break;
            }
            let Some(prev) = h.packet.header.auth.chain_prev().copied() else {
                break;
            };
            if chain_extend(&prev, &h.packet.header.digest, below) != upper_link.chain_prev {
                st.held.remove(&below);
                self.stats.rejected += 1;
                out.push(ReceiverOutput::Reject {
                    epoch: st.epoch,
                    seq: below,
                    reason: "broken chain".to_string(),
                });
                break;
            }
            h.authentic = true;
            h.closure = std::iter::once(upper_link).chain(upper_closure).collect();
            out.extend(self.authenticated(below));
            k = below;
        }
        out
    }

    fn byzantine(&self) -> bool {
        let st = self.state.as_ref().unwrap();
        self.configs[&st.epoch].group.network == NetworkModel::ByzantineFaulty
    }

    fn authenticated(&mut self, seq: u64) -> Vec<ReceiverOutput> {
        if !self.byzantine() {
            return Vec::new();
        }
        let Some(key) = self.signing.clone() else {
            return Vec::new();
        };
        let st = self.state.as_ref().unwrap();
        let epoch = st.epoch;
        let digest = st.held[&seq].packet.header.digest;
        let confirm = OrderConfirm::new(epoch, seq, digest, self.rank, &key, self.crypto.as_ref());
        self.confirms
            .entry((epoch, seq))
            .or_default()
            .entry(self.rank)
            .or_insert_with(|| confirm.clone());
        self.outbox.push(confirm);
        if self.flush_armed {
            return Vec::new();
        }
        self.flush_armed = true;
        vec![ReceiverOutput::Arm {
            delay: 0,
            timer: AomTimer::ConfirmFlush,
        }]
    }

    pub fn on_confirms(&mut self, batch: Vec<OrderConfirm>) -> Vec<ReceiverOutput> {
        let floor = self.active_epoch().unwrap_or(0);
        for c in batch {
            if c.epoch < floor {
                continue;
            }
            let Some(cfg) = self.configs.get(&c.epoch) else {
                continue;
            };
            let Some(key) = cfg.group.receiver_keys.get(c.rank as usize) else {
                continue;
            };
            if !c.verify(key, self.crypto.as_ref()) {
                self.stats.rejected += 1;
                continue;
            }
            self.confirms
                .entry((c.epoch, c.seq))
                .or_default()
                .entry(c.rank)
                .or_insert(c);
        }
        if self.state.is_some() {
            self.advance()
        } else {
            Vec::new()
        }
    }

    fn matching_confirms(&self, epoch: u32, seq: u64, held: &Held) -> Vec<OrderConfirm> {
        self.confirms
            .get(&(epoch, seq))
            .map(|m| {
                m.values()
                    .filter(|c| c.digest == held.packet.header.digest)
                    .cloned()
                    .collect()
            })
            .unwrap_or_default()
    }

    fn ready(&self, seq: u64) -> bool {
        let st = self.state.as_ref().unwrap();
        let Some(h) = st.held.get(&seq) else {
            return false;
        };
        if !h.authentic {
            return false;
        }
        if !self.byzantine() {
            return true;
        }
        let quorum = self.configs[&st.epoch].group.quorum();
        self.matching_confirms(st.epoch, seq, h).len() >= quorum
    }

    fn arm(&mut self, wait: Wait, seq: u64, delay: u64) -> Option<ReceiverOutput> {
        let st = self.state.as_mut().unwrap();
        if !st.armed.insert((wait, seq)) {
            return None;
        }
        let epoch = st.epoch;
        let timer = match wait {
            Wait::Reorder => AomTimer::Reorder { epoch, seq },
            Wait::Confirm => AomTimer::Confirm { epoch, seq },
        };
        Some(ReceiverOutput::Arm { delay, timer })
    }

    fn advance(&mut self) -> Vec<ReceiverOutput> {
        let mut out = Vec::new();
        loop {
            let (epoch, s) = {
                let st = self.state.as_ref().unwrap();
                (st.epoch, st.next)
            };
            if self.ready(s) {
                let st = self.state.as_mut().unwrap();
                let held = st.held.remove(&s).unwrap();
                st.next += 1;
                let confirmations = if self.byzantine() {
                    let c = self.matching_confirms(epoch, s, &held);
                    self.confirms.remove(&(epoch, s));
                    c
                } else {
                    Vec::new()
                };
                out.push(ReceiverOutput::Deliver(OrderingCertificate {
                    packet: held.packet,
                    closure: held.closure,
                    confirmations,
                }));
                continue;
            }
            let st = self.state.as_ref().unwrap();
            let reorder = self.timeouts.reorder;
            let armed = match st.held.get(&s) {
                None => {
                    let evidence = st.held.range(s + 1..).next().is_some()
                        || self.confirms.contains_key(&(epoch, s));
                    if evidence {
                        self.arm(Wait::Reorder, s, reorder)
                    } else {
                        None
                    }
                }
                Some(h) if !h.authentic => self.arm(Wait::Reorder, s, 2 * reorder),
                Some(_) => self.arm(Wait::Confirm, s, self.timeouts.confirm),
            };
            out.extend(armed);
            break;
        }
        out
    }

    pub fn on_timer(&mut self, timer: AomTimer) -> Vec<ReceiverOutput> {
        match timer {
            AomTimer::ConfirmFlush => {
                self.flush_armed = false;
                if self.outbox.is_empty() {
                    Vec::new()
                } else {
                    vec![ReceiverOutput::Confirm(std::mem::take(&mut self.outbox))]
                }
            }
            AomTimer::Reorder { epoch, seq } => {
                let Some(st) = self.state.as_mut() else {
                    return Vec::new();
                };
                if st.epoch != epoch {
                    return Vec::new();
                }
                st.armed.remove(&(Wait::Reorder, seq));
                if st.next != seq || self.ready(seq) {
                    return Vec::new();
                }
                let st = self.state.as_mut().unwrap();
                if st.held.get(&seq).is_some_and(|h| h.authentic) {
                    // waiting on confirmations, not on the packet
                    return Vec::new();
                }
                st.held.remove(&seq);
                st.next += 1;
                let group = self.configs[&epoch].group.group;
                let mut out = vec![ReceiverOutput::Drop(DropNotification { group, epoch, seq })];
                out.extend(self.advance());
                out
            }
            AomTimer::Confirm { epoch, seq } => {
                let Some(st) = self.state.as_mut() else {
                    return Vec::new();
                };
                if st.epoch != epoch {
                    return Vec::new();
                }
                st.armed.remove(&(Wait::Confirm, seq));
                if st.next != seq || self.ready(seq) {
                    return Vec::new();
                }
                let st = self.state.as_mut().unwrap();
                if st.suspected.insert(seq) {
                    vec![ReceiverOutput::Suspect { epoch, seq }]
                } else {
                    Vec::new()
                }
            }
            AomTimer::IdleFlush { .. } | AomTimer::Install { .. } => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aom::{
        verify_ordering_certificate, AuthMode, ConfigService, GroupId, SequencerCore,
    };
    use crate::crypto::{CryptoSuite, TestCrypto, VerifyingKey};
    use crate::sim::NodeId;
    use std::sync::Arc;

    struct Rig {
        seq: SequencerCore,
        receivers: Vec<AomReceiver>,
        cfg: ConfigService,
    }

    fn rig(n: u32, auth: AuthMode, network: NetworkModel) -> Rig {
        let crypto: SharedCrypto = Arc::new(TestCrypto);
        let keys: Vec<SigningKey> = (0..n)
            .map(|i| crypto.keypair_from_seed(&[i as u8 + 1; 32]))
            .collect();
        let mut cfg = ConfigService::new(GroupId(5), (n as usize - 1) / 3, auth, network, crypto.clone(), 11);
        for i in 0..n {
            cfg.join(NodeId::replica(i), keys[i as usize].verifying_key()).unwrap();
        }
        let seq = cfg.seal().unwrap().core().config().clone();
        let _ = seq;
        let core = cfg.sequencer_core().unwrap();
        let receivers = (0..n)
            .map(|i| {
                let mut r = AomReceiver::new(
                    i,
                    crypto.clone(),
                    Some(keys[i as usize].clone()),
                    ReceiverTimeouts::default(),
                );
                r.install(cfg.member_config(i));
                r.activate(0);
                r
            })
            .collect();
        Rig {
            seq: core,
            receivers,
            cfg,
        }
    }

    fn submit(rig: &mut Rig, body: &[u8]) -> Vec<AomPacket> {
        rig.seq
            .stamp(AomPacket::unstamped(GroupId(5), body.to_vec(), &TestCrypto))
            .unwrap()
    }

    fn delivered(out: &[ReceiverOutput]) -> Vec<u64> {
        out.iter()
            .filter_map(|o| match o {
                ReceiverOutput::Deliver(oc) => Some(oc.seq()),
                _ => None,
            })
            .collect()
    }

    fn notified(out: &[ReceiverOutput]) -> Vec<u64> {
        out.iter()
            .filter_map(|o| match o {
                ReceiverOutput::Drop(d) => Some(d.seq),
                _ => None,
            })
            .collect()
    }

    fn timers(out: &[ReceiverOutput]) -> Vec<AomTimer> {
        out.iter()
            .filter_map(|o| match o {
                ReceiverOutput::Arm { timer, .. } => Some(*timer),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn reordered_packets_are_delivered_in_sequence() {
        let mut rig = rig(4, AuthMode::MacVector, NetworkModel::CrashFaulty);
        let p: Vec<AomPacket> = (0..3).map(|i| submit(&mut rig, &[i]).remove(0)).collect();
        let r = &mut rig.receivers[0];
        let mut out = r.on_packet(p[0].clone());
        out.extend(r.on_packet(p[2].clone()));
        out.extend(r.on_packet(p[1].clone()));
        assert_eq!(delivered(&out), vec![1, 2, 3]);
        assert!(notified(&out).is_empty());
    }

    #[test]
    fn lost_packet_yields_notification_before_successor() {
        let mut rig = rig(4, AuthMode::MacVector, NetworkModel::CrashFaulty);
        let p: Vec<AomPacket> = (0..3).map(|i| submit(&mut rig, &[i]).remove(0)).collect();
        let r = &mut rig.receivers[0];
        let mut out = r.on_packet(p[0].clone());
        out.extend(r.on_packet(p[2].clone()));
        assert_eq!(delivered(&out), vec![1]);
        let armed = timers(&out);
        assert_eq!(armed, vec![AomTimer::Reorder { epoch: 0, seq: 2 }]);
        let after = r.on_timer(armed[0]);
        assert_eq!(notified(&after), vec![2]);
        assert_eq!(delivered(&after), vec![3]);
        let pos_drop = after.iter().position(|o| matches!(o, ReceiverOutput::Drop(_)));
        let pos_deliver = after.iter().position(|o| matches!(o, ReceiverOutput::Deliver(_)));
        assert!(pos_drop < pos_deliver);
        assert!(r.on_packet(p[1].clone()).is_empty(), "late copy is stale");
    }

    #[test]
    fn tampered_payload_is_rejected_without_disturbing_the_stream() {
        let mut rig = rig(4, AuthMode::MacVector, NetworkModel::CrashFaulty);
        let mut p = submit(&mut rig, b"real").remove(1);
        p.payload = b"fake".to_vec();
        p.header.digest = TestCrypto.digest(b"fake");
        let r = &mut rig.receivers[1];
        let out = r.on_packet(p);
        assert!(matches!(out[..], [ReceiverOutput::Reject { .. }]));
        assert_eq!(r.next_seq(), Some(1));
        assert_eq!(r.stats.rejected, 1);
    }

    #[test]
    fn another_receivers_copy_fails_this_receivers_slot_check_only_if_tampered() {
        let mut rig = rig(4, AuthMode::MacVector, NetworkModel::CrashFaulty);
        let copies = submit(&mut rig, b"x");
        let out = rig.receivers[2].on_packet(copies[0].clone());
        assert_eq!(delivered(&out), vec![1]);
        let ReceiverOutput::Deliver(oc) = &out[0] else { panic!() };
        for rank in 0..4 {
            assert!(verify_ordering_certificate(oc, &rig.cfg.member_config(rank), &TestCrypto));
        }
    }

    #[test]
    fn signature_mode_waits_for_the_closing_signature() {
        let mut rig = rig(4, AuthMode::Signature { ratio: 4 }, NetworkModel::CrashFaulty);
        let p: Vec<AomPacket> = (0..4).map(|i| submit(&mut rig, &[i]).remove(0)).collect();
        let r = &mut rig.receivers[0];
        let mut out = Vec::new();
        for pkt in &p[..3] {
            out.extend(r.on_packet(pkt.clone()));
        }
        assert!(delivered(&out).is_empty());
        out = r.on_packet(p[3].clone());
        assert_eq!(delivered(&out), vec![1, 2, 3, 4]);
        for o in &out {
            if let ReceiverOutput::Deliver(oc) = o {
                assert_eq!(oc.closure.len() as u64, 4 - oc.seq());
                assert!(verify_ordering_certificate(oc, &rig.cfg.member_config(3), &TestCrypto));
            }
        }
    }

    #[test]
    fn idle_flush_upgrades_the_open_packet() {
        let mut rig = rig(4, AuthMode::Signature { ratio: 8 }, NetworkModel::CrashFaulty);
        let a = submit(&mut rig, b"a").remove(0);
        let b = submit(&mut rig, b"b").remove(0);
        let flushed = rig.seq.flush().unwrap();
        let r = &mut rig.receivers[0];
        let mut out = r.on_packet(a);
        out.extend(r.on_packet(b));
        assert!(delivered(&out).is_empty());
        assert_eq!(delivered(&r.on_packet(flushed)), vec![1, 2]);
    }

    #[test]
    fn byzantine_network_delivers_only_with_quorum() {
        let mut rig = rig(4, AuthMode::MacVector, NetworkModel::ByzantineFaulty);
        let copies = submit(&mut rig, b"x");
        let mut batches = Vec::new();
        for (r, pkt) in rig.receivers.iter_mut().zip(copies) {
            let out = r.on_packet(pkt);
            assert!(delivered(&out).is_empty());
            assert!(timers(&out).contains(&AomTimer::ConfirmFlush));
            for o in r.on_timer(AomTimer::ConfirmFlush) {
                if let ReceiverOutput::Confirm(b) = o {
                    batches.push(b);
                }
            }
        }
        assert_eq!(batches.len(), 4);
        let r = &mut rig.receivers[0];
        assert!(delivered(&r.on_confirms(batches[1].clone())).is_empty());
        let out = r.on_confirms(batches[2].clone());
        assert_eq!(delivered(&out), vec![1]);
        let ReceiverOutput::Deliver(oc) = &out[0] else { panic!() };
        assert_eq!(oc.confirmations.len(), 3);
        assert!(verify_ordering_certificate(oc, &rig.cfg.member_config(2), &TestCrypto));
        let mut short = oc.clone();
        short.confirmations.pop();
        assert!(!verify_ordering_certificate(&short, &rig.cfg.member_config(2), &TestCrypto));
    }

    #[test]
    fn equivocation_never_reaches_quorum_and_raises_suspicion() {
        let mut rig = rig(4, AuthMode::MacVector, NetworkModel::ByzantineFaulty);
        rig.seq.equivocate = true;
        submit(&mut rig, b"first");
        let copies = submit(&mut rig, b"second");
        // pretend seq 1 was delivered everywhere
        let mut batches = Vec::new();
        for r in rig.receivers.iter_mut() {
            r.state.as_mut().unwrap().next = 2;
        }
        for (r, pkt) in rig.receivers.iter_mut().zip(copies) {
            r.on_packet(pkt);
            for o in r.on_timer(AomTimer::ConfirmFlush) {
                if let ReceiverOutput::Confirm(b) = o {
                    batches.push(b);
                }
            }
        }
        for i in 0..4 {
            let mut out = Vec::new();
            for (j, b) in batches.iter().enumerate() {
                if i != j {
                    out.extend(rig.receivers[i].on_confirms(b.clone()));
                }
            }
            assert!(delivered(&out).is_empty());
            let s = rig.receivers[i].on_timer(AomTimer::Confirm { epoch: 0, seq: 2 });
            assert_eq!(s, vec![ReceiverOutput::Suspect { epoch: 0, seq: 2 }]);
        }
    }

    #[test]
    fn one_bogus_confirmation_does_not_block_the_honest_quorum() {
        let mut rig = rig(4, AuthMode::MacVector, NetworkModel::ByzantineFaulty);
        let copies = submit(&mut rig, b"x");
        let liar_key = TestCrypto.keypair_from_seed(&[4; 32]);
        let bogus = OrderConfirm::new(0, 1, TestCrypto.digest(b"y"), 3, &liar_key, &TestCrypto);
        let mut batches = Vec::new();
        for (r, pkt) in rig.receivers.iter_mut().zip(copies).take(3) {
            r.on_packet(pkt);
            for o in r.on_timer(AomTimer::ConfirmFlush) {
                if let ReceiverOutput::Confirm(b) = o {
                    batches.push(b);
                }
            }
        }
        let r = &mut rig.receivers[0];
        let mut out = r.on_confirms(vec![bogus]);
        out.extend(r.on_confirms(batches[1].clone()));
        out.extend(r.on_confirms(batches[2].clone()));
        assert_eq!(delivered(&out), vec![1]);
    }

    #[test]
    fn adopting_a_new_epoch_discards_the_old_sequencer() {
        let mut rig = rig(4, AuthMode::MacVector, NetworkModel::CrashFaulty);
        let old = submit(&mut rig, b"old").remove(0);
        rig.cfg.request_failover(0, 1);
        rig.cfg.request_failover(1, 1);
        rig.cfg.complete_failover();
        let mut next = rig.cfg.sequencer_core().unwrap();
        let fresh = next
            .stamp(AomPacket::unstamped(GroupId(5), b"new".to_vec(), &TestCrypto))
            .unwrap()
            .remove(0);
        let r = &mut rig.receivers[0];
        assert!(r.on_packet(fresh.clone()).is_empty(), "held until adopted");
        r.install(rig.cfg.member_config(0));
        let out = r.activate(1);
        assert_eq!(delivered(&out), vec![1]);
        assert!(r.on_packet(old).is_empty());
        assert_eq!(r.stats.stale, 1);
        let _unused: Option<VerifyingKey> = None;
    }
}
