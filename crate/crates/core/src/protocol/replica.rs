use std::any::Any;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::aom::{
    verify_ordering_certificate, AomReceiver, NetworkModel, OrderingCertificate, ReceiverOutput,
};
use crate::crypto::{SharedCrypto, Signature, SigningKey};
use crate::sim::{Context, Node, NodeId};
use crate::trace::{FinalEntry, Observation};
use crate::wire::{ControlMessage, Message, ReplicaTimer, Timer};

use super::app::App;
use super::log::{validate_log, EntryBody, LogEntry, ReplicaLog};
use super::merge::{merge_logs, MergedLog};
use super::message::*;
use super::{EntryKind, KeyRing, ReplicaSettings, ViewId};

type Ctx<'a, 'b> = &'a mut Context<'b, Message, Timer>;

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ReplicaStats {
    pub executed: u64,
    pub rollbacks: u64,
    pub view_changes: u64,
    pub gap_agreements: u64,
    pub query_replies: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Normal,
    ViewChanging,
    /// Merged log installed; waiting for 2f+1 matching EPOCH-STARTs.
    EpochStarting { view: ViewId, slot: u64 },
}

#[derive(Debug, Clone)]
enum Stored {
    Oc(Box<OrderingCertificate>),
    Dropped,
}

#[derive(Debug, Default)]
struct Agreement {
    find: Option<GapFind>,
    decision: Option<GapDecision>,
    prepares: BTreeMap<u32, GapVote>,
    commits: BTreeMap<u32, GapVote>,
    sent_commit: bool,
    cert: Option<GapCertificate>,
    drops: BTreeMap<u32, GapDrop>,
}

impl Agreement {
    fn recv_oc(&self) -> Option<&OrderingCertificate> {
        match &self.decision.as_ref()?.proof {
            GapProof::Recv(r) => Some(&r.oc),
            GapProof::Drop(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Blocked {
    slot: u64,
    progress: u64,
}

#[derive(Debug, Clone)]
struct ClientRecord {
    request_id: u64,
    slot: u64,
    result: Vec<u8>,
}

struct Snapshot {
    app: Vec<u8>,
    clients: BTreeMap<u32, ClientRecord>,
}

pub struct Replica {
    id: u32,
    settings: ReplicaSettings,
    key: SigningKey,
    ring: Arc<KeyRing>,
    crypto: SharedCrypto,
    app: Box<dyn App>,
    receiver: AomReceiver,
    /// Depth each held packet arrived with, keyed by (epoch, seq).
    arrivals: BTreeMap<(u32, u64), u32>,
    view: ViewId,
    status: Status,
    vc_target: Option<ViewId>,
    log: ReplicaLog,
    store: BTreeMap<u32, BTreeMap<u64, Stored>>,
    clients: BTreeMap<u32, ClientRecord>,
    snapshots: BTreeMap<u64, Snapshot>,
    sync_point: u64,
    /// Log length agreed by the view change that started the current view.
    settled: u64,
    /// Highest slot a client has nudged us about while it was uncommitted.
    watched: u64,
    blocked: Option<Blocked>,
    agreements: BTreeMap<u64, Agreement>,
    sent_drops: BTreeSet<u64>,
    pending_finds: BTreeSet<u64>,
    pending_queries: BTreeMap<u64, BTreeSet<u32>>,
    vcs: BTreeMap<ViewId, BTreeMap<u32, ViewChange>>,
    view_start: Option<ViewStart>,
    pending_merge: Option<ViewId>,
    epoch_starts: BTreeMap<(u32, u64), BTreeMap<u32, EpochStart>>,
    deferred_replies: BTreeSet<u64>,
    unicast: BTreeMap<(u32, u64), Request>,
    syncs: BTreeMap<(ViewId, u64), BTreeMap<u32, Sync>>,
    my_sync: Option<Sync>,
    pub stats: ReplicaStats,
}

fn sig() -> Signature {
    Signature::ZERO
}

impl Replica {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: u32,
        settings: ReplicaSettings,
        key: SigningKey,
        ring: Arc<KeyRing>,
        crypto: SharedCrypto,
        app: Box<dyn App>,
        receiver: AomReceiver,
    ) -> Self {
        let mut snapshots = BTreeMap::new();
        snapshots.insert(
            0,
            Snapshot {
                app: app.snapshot(),
                clients: BTreeMap::new(),
            },
        );
        Self {
            id,
            settings,
            key,
            ring,
            crypto,
            app,
            receiver,
            arrivals: BTreeMap::new(),
            view: ViewId::default(),
            status: Status::Normal,
            vc_target: None,
            log: ReplicaLog::new(),
            store: BTreeMap::new(),
            clients: BTreeMap::new(),
            snapshots,
            sync_point: 0,
            settled: 0,
            watched: 0,
            blocked: None,
            agreements: BTreeMap::new(),
            sent_drops: BTreeSet::new(),
            pending_finds: BTreeSet::new(),
            pending_queries: BTreeMap::new(),
            vcs: BTreeMap::new(),
            view_start: None,
            pending_merge: None,
            epoch_starts: BTreeMap::new(),
            deferred_replies: BTreeSet::new(),
            unicast: BTreeMap::new(),
            syncs: BTreeMap::new(),
            my_sync: None,
            stats: ReplicaStats::default(),
        }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn view(&self) -> ViewId {
        self.view
    }

    pub fn log(&self) -> &ReplicaLog {
        &self.log
    }

    pub fn sync_point(&self) -> u64 {
        self.sync_point
    }

    pub fn receiver(&self) -> &AomReceiver {
        &self.receiver
    }

    pub fn signing_key(&self) -> &SigningKey {
        &self.key
    }

    pub fn crypto(&self) -> &SharedCrypto {
        &self.crypto
    }

    pub fn is_normal(&self) -> bool {
        self.status == Status::Normal
    }

    fn n(&self) -> usize {
        self.settings.n
    }

    fn quorum(&self) -> usize {
        self.settings.quorum()
    }

    fn is_leader(&self) -> bool {
        self.view.leader(self.n()) == self.id
    }

    fn leader(&self) -> NodeId {
        NodeId::replica(self.view.leader(self.n()))
    }

    fn others(&self) -> Vec<NodeId> {
        (0..self.n() as u32)
            .filter(|&r| r != self.id)
            .map(NodeId::replica)
            .collect()
    }

    fn broadcast(&self, ctx: Ctx, msg: ProtocolMessage) {
        ctx.send_all(self.others(), Message::Protocol(msg));
    }

    fn send(&self, ctx: Ctx, to: u32, msg: ProtocolMessage) {
        ctx.send(NodeId::replica(to), Message::Protocol(msg));
    }

    fn arm(&self, ctx: Ctx, delay: u64, t: ReplicaTimer) {
        ctx.set_timer(delay, Timer::Replica(t));
    }

    fn epoch_base(&self) -> Option<u64> {
        self.log.epoch_start(self.view.epoch)
    }

    /// Slot of `(epoch, seq)` if it belongs to the current epoch.
    fn slot_of(&self, epoch: u32, seq: u64) -> Option<u64> {
        (epoch == self.view.epoch).then(|| self.epoch_base().map(|b| b + seq))?
    }

    /// `(epoch, seq)` of a slot in the current epoch.
    fn seq_of(&self, slot: u64) -> Option<u64> {
        let base = self.epoch_base()?;
        (slot > base).then(|| slot - base)
    }

    fn stored(&self, slot: u64) -> Option<&Stored> {
        let seq = self.seq_of(slot)?;
        self.store.get(&self.view.epoch)?.get(&seq)
    }

    /// Checks that `oc` is authentic and sits at `slot` of the current epoch.
    fn valid_oc_for(&self, oc: &OrderingCertificate, slot: u64) -> bool {
        if self.slot_of(oc.epoch(), oc.seq()) != Some(slot) {
            return false;
        }
        self.receiver
            .config(oc.epoch())
            .is_some_and(|cfg| verify_ordering_certificate(oc, cfg, self.crypto.as_ref()))
    }

    // ---- AOM ----

    fn handle_aom(&mut self, ctx: Ctx, outputs: Vec<ReceiverOutput>) {
        for out in outputs {
            match out {
                ReceiverOutput::Deliver(oc) => {
                    let (epoch, seq) = (oc.epoch(), oc.seq());
                    ctx.observe(Observation::AomDeliver {
                        replica: self.id,
                        epoch,
                        seq,
                        digest: *oc.digest(),
                    });
                    let byzantine_net = self
                        .receiver
                        .config(epoch)
                        .is_some_and(|c| c.group.network == NetworkModel::ByzantineFaulty);
                    // replies count hops along this packet's own path; with
                    // confirmations the handler's depth already covers it
                    let arrived = self.arrivals.remove(&(epoch, seq));
                    self.arrivals = self.arrivals.split_off(&(epoch, seq));
                    if let (Some(d), false) = (arrived, byzantine_net) {
                        ctx.set_depth(d);
                    }
                    if byzantine_net {
                        ctx.observe(Observation::OrderCert {
                            replica: self.id,
                            epoch,
                            seq,
                            digest: *oc.digest(),
                            signers: oc.confirmations.iter().map(|c| c.rank).collect(),
                        });
                    }
                    self.store.entry(epoch).or_default().insert(seq, Stored::Oc(Box::new(oc)));
                    self.on_stored(ctx, epoch, seq);
                }
                ReceiverOutput::Drop(dn) => {
                    ctx.observe(Observation::AomDrop {
                        replica: self.id,
                        epoch: dn.epoch,
                        seq: dn.seq,
                    });
                    self.store
                        .entry(dn.epoch)
                        .or_default()
                        .entry(dn.seq)
                        .or_insert(Stored::Dropped);
                    self.on_stored(ctx, dn.epoch, dn.seq);
                }
                ReceiverOutput::Confirm(batch) => {
                    ctx.send_all(self.others(), Message::Confirms(batch));
                }
                ReceiverOutput::Suspect { epoch, seq } => {
                    ctx.observe(Observation::AomSuspect {
                        replica: self.id,
                        epoch,
                        seq,
                    });
                    if epoch == self.view.epoch {
                        let target = self.vc_target.unwrap_or(self.view).max(self.view).next_epoch();
                        self.start_view_change(ctx, target, "sequencer suspected");
                    }
                }
                ReceiverOutput::Reject { epoch, seq, reason } => {
                    ctx.observe(Observation::AomReject {
                        replica: self.id,
                        epoch,
                        seq,
                        reason,
                    });
                }
                ReceiverOutput::Arm { delay, timer } => {
                    ctx.set_timer(delay, Timer::Aom(timer));
                }
            }
        }
    }

    fn on_stored(&mut self, ctx: Ctx, epoch: u32, seq: u64) {
        if let Some(slot) = self.slot_of(epoch, seq) {
            if self.status == Status::Normal {
                if self.pending_finds.remove(&slot) {
                    self.answer_find(ctx, slot);
                }
                if let Some(who) = self.pending_queries.remove(&slot) {
                    for r in who {
                        self.answer_query(ctx, r, slot, true);
                    }
                }
            }
        }
        self.pump(ctx);
    }

    // ---- log and execution ----

    fn pump(&mut self, ctx: Ctx) {
        while self.status == Status::Normal && self.blocked.is_none() {
            let slot = self.log.len() + 1;
            if let Some(a) = self.agreements.get(&slot) {
                if let Some(cert) = a.cert.clone() {
                    if !cert.recv {
                        self.append(ctx, EntryBody::NoOp(cert));
                        continue;
                    }
                    let oc = a.recv_oc().cloned().or_else(|| match self.stored(slot) {
                        Some(Stored::Oc(oc)) => Some((**oc).clone()),
                        _ => None,
                    });
                    if let Some(oc) = oc {
                        self.append(ctx, EntryBody::Request(oc));
                        continue;
                    }
                }
            }
            match self.stored(slot).cloned() {
                Some(Stored::Oc(oc)) => self.append(ctx, EntryBody::Request(*oc)),
                Some(Stored::Dropped) => {
                    self.begin_gap(ctx, slot);
                    return;
                }
                None => return,
            }
        }
    }

    fn append(&mut self, ctx: Ctx, body: EntryBody) {
        let slot = self.log.len() + 1;
        self.log.push(LogEntry {
            slot,
            view: self.view,
            body,
        });
        self.execute(ctx, slot, self.view);
        if self.status == Status::Normal {
            self.after_append(ctx, slot);
        }
    }

    fn after_append(&mut self, ctx: Ctx, slot: u64) {
        let n = self.settings.sync_interval;
        if n > 0 && slot.is_multiple_of(n) {
            self.send_sync(ctx, slot);
        }
        self.check_syncs(ctx);
    }

    fn execute(&mut self, ctx: Ctx, slot: u64, view: ViewId) {
        let entry = self.log.entry(slot).unwrap().clone();
        let mut client = None;
        let mut request_id = None;
        let mut applied = false;
        if let EntryBody::Request(oc) = &entry.body {
            if let Ok(req) = Request::decode(&oc.packet.payload) {
                if req.verify(&self.ring, self.crypto.as_ref()) {
                    client = Some(req.client);
                    request_id = Some(req.request_id);
                    self.unicast.remove(&(req.client, req.request_id));
                    let fresh = self
                        .clients
                        .get(&req.client)
                        .is_none_or(|r| r.request_id < req.request_id);
                    if fresh {
                        let result = self.app.apply(&req.op);
                        self.clients.insert(
                            req.client,
                            ClientRecord {
                                request_id: req.request_id,
                                slot,
                                result,
                            },
                        );
                        applied = true;
                        self.stats.executed += 1;
                    }
                    if self.status == Status::Normal {
                        self.reply_for(ctx, req.client, req.request_id);
                    } else {
                        self.deferred_replies.insert(slot);
                    }
                }
            }
        }
        let n = self.settings.sync_interval.max(1);
        if slot.is_multiple_of(n) {
            self.snapshots.insert(
                slot,
                Snapshot {
                    app: self.app.snapshot(),
                    clients: self.clients.clone(),
                },
            );
        }
        ctx.observe(Observation::Executed {
            replica: self.id,
            view,
            slot,
            entry: entry.kind(),
            content: entry.content(),
            client,
            request_id,
            applied,
            log_hash: self.log.hash_at(slot),
        });
    }

    fn reply_for(&self, ctx: Ctx, client: u32, request_id: u64) {
        let Some(rec) = self.clients.get(&client) else {
            return;
        };
        if rec.request_id != request_id {
            return;
        }
        let reply = Reply {
            view: self.view,
            replica: self.id,
            slot: rec.slot,
            log_hash: self.log.hash_at(rec.slot),
            client,
            request_id,
            result: rec.result.clone(),
            signature: sig(),
        }
        .sign(&self.key, self.crypto.as_ref());
        ctx.send(
            NodeId::client(client),
            Message::Protocol(ProtocolMessage::Reply(reply)),
        );
    }

    /// Restores the application to just before `changed` and re-executes
    /// the rest of the log.
    fn rollback(&mut self, ctx: Ctx, changed: u64, view: ViewId) {
        if changed <= self.sync_point {
            ctx.observe(Observation::Violation {
                node: ctx.me(),
                what: format!(
                    "slot {changed} changed at or below sync point {}",
                    self.sync_point
                ),
            });
        }
        let (&at, snap) = self.snapshots.range(..changed).next_back().unwrap();
        self.app.restore(&snap.app);
        self.clients = snap.clients.clone();
        self.snapshots.retain(|&s, _| s <= at);
        self.stats.rollbacks += 1;
        ctx.observe(Observation::Rollback {
            replica: self.id,
            to_slot: at,
            changed_slot: changed,
        });
        for slot in at + 1..=self.log.len() {
            self.execute(ctx, slot, view);
        }
    }

    fn write_noop(&mut self, ctx: Ctx, cert: GapCertificate) {
        let slot = cert.slot;
        if slot == self.log.len() + 1 && self.status == Status::Normal {
            self.append(ctx, EntryBody::NoOp(cert));
        } else if slot <= self.log.len() {
            if self.log.entry(slot).unwrap().kind() == EntryKind::NoOp {
                return;
            }
            self.log.replace(LogEntry {
                slot,
                view: self.view,
                body: EntryBody::NoOp(cert),
            });
            self.rollback(ctx, slot, self.view);
        }
    }

    // ---- dropped messages and gap agreement ----

    fn begin_gap(&mut self, ctx: Ctx, slot: u64) {
        self.blocked = Some(Blocked { slot, progress: 0 });
        ctx.observe(Observation::DropNoticed {
            replica: self.id,
            view: self.view,
            slot,
        });
        let view = self.view;
        if self.is_leader() {
            self.start_gap_find(ctx, slot);
        } else {
            self.send_query(ctx, slot, false);
            self.arm(ctx, self.settings.timeouts.query_resend, ReplicaTimer::QueryResend { view, slot });
            self.arm(
                ctx,
                self.settings.timeouts.gap_progress,
                ReplicaTimer::GapProgress { view, slot, seen: 0 },
            );
        }
    }

    /// First attempt goes to the leader; resends go to every replica, since
    /// any holder can hand over a self-certifying OC.
    fn send_query(&self, ctx: Ctx, slot: u64, everyone: bool) {
        let q = Query {
            view: self.view,
            replica: self.id,
            slot,
        };
        let msg = Message::Protocol(ProtocolMessage::Query(q));
        if everyone {
            ctx.send_all(self.others(), msg);
        } else {
            ctx.send(self.leader(), msg);
        }
    }

    fn progress(&mut self, slot: u64) {
        if let Some(b) = self.blocked.as_mut() {
            if b.slot == slot {
                b.progress += 1;
            }
        }
    }

    fn start_gap_find(&mut self, ctx: Ctx, slot: u64) {
        if self.agreements.get(&slot).is_some_and(|a| a.find.is_some()) {
            return;
        }
        self.stats.gap_agreements += 1;
        ctx.observe(Observation::GapStart {
            replica: self.id,
            view: self.view,
            slot,
        });
        let find = GapFind {
            view: self.view,
            replica: self.id,
            slot,
            signature: sig(),
        }
        .sign(&self.key, self.crypto.as_ref());
        let own_drop = GapDrop {
            view: self.view,
            replica: self.id,
            slot,
            signature: sig(),
        }
        .sign(&self.key, self.crypto.as_ref());
        self.sent_drops.insert(slot);
        let a = self.agreements.entry(slot).or_default();
        a.find = Some(find.clone());
        a.drops.insert(self.id, own_drop);
        self.broadcast(ctx, ProtocolMessage::GapFind(find));
        let view = self.view;
        self.arm(ctx, self.settings.timeouts.query_resend, ReplicaTimer::GapFindResend { view, slot });
        self.maybe_decide(ctx, slot);
    }

    fn answer_find(&mut self, ctx: Ctx, slot: u64) {
        let leader = self.view.leader(self.n());
        if let Some(entry) = self.log.entry(slot).cloned() {
            match entry.body {
                EntryBody::Request(oc) => self.send_recv(ctx, leader, slot, oc),
                EntryBody::NoOp(cert) => self.send(
                    ctx,
                    leader,
                    ProtocolMessage::GapCertified(Box::new(GapCertified { cert, oc: None })),
                ),
            }
            return;
        }
        match self.stored(slot).cloned() {
            Some(Stored::Oc(oc)) => self.send_recv(ctx, leader, slot, *oc),
            Some(Stored::Dropped) => {
                self.sent_drops.insert(slot);
                let d = GapDrop {
                    view: self.view,
                    replica: self.id,
                    slot,
                    signature: sig(),
                }
                .sign(&self.key, self.crypto.as_ref());
                self.send(ctx, leader, ProtocolMessage::GapDrop(d));
            }
            None => {
                self.pending_finds.insert(slot);
            }
        }
    }

    fn send_recv(&self, ctx: Ctx, to: u32, slot: u64, oc: OrderingCertificate) {
        let r = GapRecv {
            view: self.view,
            replica: self.id,
            slot,
            oc,
        };
        self.send(ctx, to, ProtocolMessage::GapRecv(Box::new(r)));
    }

    /// Only the leader remembers unanswerable queries.
    fn answer_query(&mut self, ctx: Ctx, from: u32, slot: u64, defer: bool) {
        let oc = match self.log.entry(slot) {
            Some(entry) => match &entry.body {
                EntryBody::Request(oc) => Some(oc.clone()),
                EntryBody::NoOp(cert) => {
                    let cert = cert.clone();
                    self.send(
                        ctx,
                        from,
                        ProtocolMessage::GapCertified(Box::new(GapCertified { cert, oc: None })),
                    );
                    return;
                }
            },
            None => match self.stored(slot) {
                Some(Stored::Oc(oc)) => Some((**oc).clone()),
                _ => None,
            },
        };
        if let Some(cert) = self.agreements.get(&slot).and_then(|a| a.cert.clone()) {
            let oc = oc.clone().or_else(|| self.agreements[&slot].recv_oc().cloned());
            self.send(
                ctx,
                from,
                ProtocolMessage::GapCertified(Box::new(GapCertified { cert, oc })),
            );
            return;
        }
        match oc {
            Some(oc) => {
                self.stats.query_replies += 1;
                let reply = QueryReply {
                    view: self.view,
                    replica: self.id,
                    slot,
                    oc,
                };
                self.send(ctx, from, ProtocolMessage::QueryReply(Box::new(reply)));
            }
            None if defer => {
                self.pending_queries.entry(slot).or_default().insert(from);
            }
            None => {}
        }
    }

    fn on_query(&mut self, ctx: Ctx, q: Query) {
        if q.view != self.view || self.status != Status::Normal {
            return;
        }
        let leader = self.is_leader();
        self.answer_query(ctx, q.replica, q.slot, leader);
    }

    fn on_query_reply(&mut self, ctx: Ctx, r: QueryReply) {
        if r.view != self.view || self.status != Status::Normal {
            return;
        }
        let Some(b) = self.blocked else {
            return;
        };
        if b.slot != r.slot {
            return;
        }
        let recv_certified = self
            .agreements
            .get(&r.slot)
            .and_then(|a| a.cert.as_ref())
            .is_some_and(|c| c.recv);
        if self.sent_drops.contains(&r.slot) && !recv_certified {
            // waiting for the agreement outcome instead
            return;
        }
        if !self.valid_oc_for(&r.oc, r.slot) {
            return;
        }
        self.blocked = None;
        ctx.observe(Observation::GapResolved {
            replica: self.id,
            view: self.view,
            slot: r.slot,
            recv: true,
            via: "query-reply".to_string(),
        });
        self.append(ctx, EntryBody::Request(r.oc));
        self.pump(ctx);
    }

    fn on_gap_find(&mut self, ctx: Ctx, g: GapFind) {
        if g.view != self.view
            || self.status != Status::Normal
            || g.replica != self.view.leader(self.n())
            || !g.verify(&self.ring, self.crypto.as_ref())
        {
            return;
        }
        self.progress(g.slot);
        if let Some(cert) = self.agreements.get(&g.slot).and_then(|a| a.cert.clone()) {
            let oc = self.agreements[&g.slot].recv_oc().cloned();
            self.send(
                ctx,
                g.replica,
                ProtocolMessage::GapCertified(Box::new(GapCertified { cert, oc })),
            );
            return;
        }
        if self.agreements.get(&g.slot).is_some_and(|a| a.decision.is_some()) {
            return;
        }
        self.agreements.entry(g.slot).or_default().find = Some(g.clone());
        self.answer_find(ctx, g.slot);
    }

    fn on_gap_recv(&mut self, ctx: Ctx, r: GapRecv) {
        if r.view != self.view || !self.is_leader() || self.status != Status::Normal {
            return;
        }
        let Some(a) = self.agreements.get(&r.slot) else {
            return;
        };
        if a.find.is_none() || a.decision.is_some() {
            return;
        }
        if !self.valid_oc_for(&r.oc, r.slot) {
            return;
        }
        self.decide(ctx, r.slot, GapProof::Recv(Box::new(r)));
    }

    fn on_gap_drop(&mut self, ctx: Ctx, d: GapDrop) {
        if d.view != self.view
            || !self.is_leader()
            || self.status != Status::Normal
            || !d.verify(&self.ring, self.crypto.as_ref())
        {
            return;
        }
        let Some(a) = self.agreements.get_mut(&d.slot) else {
            return;
        };
        if a.find.is_none() || a.decision.is_some() {
            return;
        }
        a.drops.insert(d.replica, d.clone());
        self.maybe_decide(ctx, d.slot);
    }

    fn maybe_decide(&mut self, ctx: Ctx, slot: u64) {
        let quorum = self.quorum();
        let a = &self.agreements[&slot];
        if a.decision.is_none() && a.drops.len() >= quorum {
            let drops = a.drops.values().cloned().collect();
            self.decide(ctx, slot, GapProof::Drop(drops));
        }
    }

    fn decide(&mut self, ctx: Ctx, slot: u64, proof: GapProof) {
        let recv = proof.is_recv();
        let decision = GapDecision {
            view: self.view,
            replica: self.id,
            slot,
            proof,
            signature: sig(),
        }
        .sign(&self.key, self.crypto.as_ref());
        ctx.observe(Observation::GapDecision {
            replica: self.id,
            view: self.view,
            slot,
            recv,
        });
        self.broadcast(ctx, ProtocolMessage::GapDecision(Box::new(decision.clone())));
        self.agreements.get_mut(&slot).unwrap().decision = Some(decision);
        self.check_commit(ctx, slot);
    }

    fn on_gap_decision(&mut self, ctx: Ctx, d: GapDecision) {
        if d.view != self.view
            || self.status != Status::Normal
            || d.replica != self.view.leader(self.n())
            || d.replica == self.id
        {
            return;
        }
        if self.agreements.get(&d.slot).is_some_and(|a| a.decision.is_some()) {
            return;
        }
        if !d.verify(&self.ring, self.quorum(), self.crypto.as_ref()) {
            return;
        }
        if let GapProof::Recv(r) = &d.proof {
            if !self.valid_oc_for(&r.oc, d.slot) {
                return;
            }
        }
        self.progress(d.slot);
        let recv = d.proof.is_recv();
        let slot = d.slot;
        let prepare = GapVote {
            phase: VotePhase::Prepare,
            view: self.view,
            replica: self.id,
            slot,
            recv,
            signature: sig(),
        }
        .sign(&self.key, self.crypto.as_ref());
        let a = self.agreements.entry(slot).or_default();
        a.decision = Some(d);
        a.prepares.insert(self.id, prepare.clone());
        self.broadcast(ctx, ProtocolMessage::GapPrepare(prepare));
        self.check_commit(ctx, slot);
    }

    fn on_gap_vote(&mut self, ctx: Ctx, from: u32, v: GapVote) {
        if v.view != self.view || self.status != Status::Normal || !v.verify(&self.ring, self.crypto.as_ref()) {
            return;
        }
        self.progress(v.slot);
        let slot = v.slot;
        if let Some(cert) = self.agreements.get(&slot).and_then(|a| a.cert.clone()) {
            let lagging = !self.agreements[&slot].commits.contains_key(&from);
            if v.phase == VotePhase::Prepare && lagging {
                let oc = self.agreements[&slot].recv_oc().cloned();
                self.send(
                    ctx,
                    from,
                    ProtocolMessage::GapCertified(Box::new(GapCertified { cert, oc })),
                );
            }
        }
        let a = self.agreements.entry(slot).or_default();
        match v.phase {
            VotePhase::Prepare => {
                a.prepares.insert(v.replica, v);
                self.check_commit(ctx, slot);
            }
            VotePhase::Commit => {
                a.commits.insert(v.replica, v);
                self.check_cert(ctx, slot);
            }
        }
    }

    fn check_commit(&mut self, ctx: Ctx, slot: u64) {
        let need = 2 * self.settings.f;
        let a = self.agreements.get_mut(&slot).unwrap();
        let Some(recv) = a.decision.as_ref().map(|d| d.proof.is_recv()) else {
            return;
        };
        if a.sent_commit {
            return;
        }
        let matching = a.prepares.values().filter(|p| p.recv == recv).count();
        if matching < need {
            return;
        }
        a.sent_commit = true;
        let commit = GapVote {
            phase: VotePhase::Commit,
            view: self.view,
            replica: self.id,
            slot,
            recv,
            signature: sig(),
        }
        .sign(&self.key, self.crypto.as_ref());
        a.commits.insert(self.id, commit.clone());
        self.broadcast(ctx, ProtocolMessage::GapCommit(commit));
        self.check_cert(ctx, slot);
    }

    fn check_cert(&mut self, ctx: Ctx, slot: u64) {
        let quorum = self.quorum();
        let view = self.view;
        let a = self.agreements.get_mut(&slot).unwrap();
        if a.cert.is_some() {
            return;
        }
        for recv in [true, false] {
            let commits: Vec<GapVote> = a.commits.values().filter(|c| c.recv == recv).cloned().collect();
            if commits.len() >= quorum {
                let cert = GapCertificate {
                    view,
                    slot,
                    recv,
                    commits,
                };
                a.cert = Some(cert.clone());
                let oc = a.recv_oc().cloned();
                ctx.observe(Observation::GapCertificate {
                    replica: self.id,
                    view,
                    slot,
                    recv,
                    signers: cert.signers(),
                });
                self.apply_cert(ctx, cert, oc, "gap-agreement");
                return;
            }
        }
    }

    fn apply_cert(&mut self, ctx: Ctx, cert: GapCertificate, oc: Option<OrderingCertificate>, via: &str) {
        let slot = cert.slot;
        let recv = cert.recv;
        let blocked_here = self.blocked.is_some_and(|b| b.slot == slot);
        if recv {
            if slot == self.log.len() + 1 {
                if let Some(oc) = oc {
                    self.blocked = None;
                    ctx.observe(Observation::GapResolved {
                        replica: self.id,
                        view: self.view,
                        slot,
                        recv,
                        via: via.to_string(),
                    });
                    self.append(ctx, EntryBody::Request(oc));
                } else if blocked_here {
                    // certificate without the request: ask around for it
                    self.send_query(ctx, slot, true);
                }
            }
        } else {
            let filled_now = slot == self.log.len() + 1;
            if filled_now {
                self.blocked = None;
            }
            if filled_now || slot <= self.log.len() {
                ctx.observe(Observation::GapResolved {
                    replica: self.id,
                    view: self.view,
                    slot,
                    recv,
                    via: via.to_string(),
                });
            }
            self.write_noop(ctx, cert);
        }
        self.pump(ctx);
    }

    fn on_gap_certified(&mut self, ctx: Ctx, g: GapCertified) {
        if self.status != Status::Normal || g.cert.view > self.view {
            return;
        }
        if !g.cert.verify(&self.ring, self.quorum(), self.crypto.as_ref()) {
            return;
        }
        let slot = g.cert.slot;
        if g.cert.recv {
            let Some(oc) = g.oc.as_ref() else {
                return;
            };
            if !self.valid_oc_for(oc, slot) {
                return;
            }
        }
        let a = self.agreements.entry(slot).or_default();
        if a.cert.is_some() && !(g.cert.recv && a.recv_oc().is_none()) {
            return;
        }
        a.cert = Some(g.cert.clone());
        self.apply_cert(ctx, g.cert, g.oc, "gap-certificate");
    }

    // ---- view change ----

    fn build_view_change(&self, target: ViewId) -> ViewChange {
        ViewChange {
            view: self.view,
            replica: self.id,
            new_view: target,
            epoch_certs: self.log.epoch_certs(),
            log: self.log.entries().to_vec(),
            signature: sig(),
        }
        .sign(&self.key, self.crypto.as_ref())
    }

    fn start_view_change(&mut self, ctx: Ctx, target: ViewId, reason: &str) {
        if target <= self.view || self.vc_target.is_some_and(|t| t >= target) {
            return;
        }
        ctx.observe(Observation::ViewChangeStart {
            replica: self.id,
            from: self.view,
            to: target,
            reason: reason.to_string(),
        });
        self.stats.view_changes += 1;
        self.status = Status::ViewChanging;
        self.pending_merge = None;
        self.vc_target = Some(target);
        self.blocked = None;
        let vc = self.build_view_change(target);
        self.vcs.entry(target).or_default().insert(self.id, vc.clone());
        self.broadcast(ctx, ProtocolMessage::ViewChange(Box::new(vc)));
        self.arm(ctx, self.settings.timeouts.view_change, ReplicaTimer::ViewChange { target });
        self.arm(
            ctx,
            self.settings.timeouts.view_change_resend,
            ReplicaTimer::ViewChangeResend { target },
        );
        self.try_view_start(ctx, target);
    }

    fn log_valid(&self, vc: &ViewChange) -> bool {
        let receiver = &self.receiver;
        validate_log(
            &vc.log,
            &vc.epoch_certs,
            &self.ring,
            self.quorum(),
            self.crypto.as_ref(),
            &|e| receiver.config(e).cloned(),
        )
        .is_ok()
    }

    fn on_view_change(&mut self, ctx: Ctx, vc: ViewChange) {
        if !vc.verify_signature(&self.ring, self.crypto.as_ref()) {
            return;
        }
        let from = vc.replica;
        if vc.new_view <= self.view || self.view_start.as_ref().is_some_and(|vs| vs.view == vc.new_view) {
            // a laggard: help it along
            if let Some(vs) = self.view_start.clone() {
                if vs.view == vc.new_view || vs.view == self.view {
                    self.send(ctx, from, ProtocolMessage::ViewStart(Box::new(vs)));
                }
            }
            if let Status::EpochStarting { view, slot } = self.status {
                if view == vc.new_view {
                    self.resend_epoch_start(ctx, from, view.epoch, slot);
                }
            } else if vc.new_view == self.view {
                if let Some(slot) = self.log.epoch_start(self.view.epoch) {
                    self.resend_epoch_start(ctx, from, self.view.epoch, slot);
                }
            }
            return;
        }
        if vc.view < self.view && self.status == Status::Normal {
            // it missed the view we settled on and is timing out alone
            if let Some(vs) = self.view_start.clone().filter(|vs| vs.view == self.view) {
                self.send(ctx, from, ProtocolMessage::ViewStart(Box::new(vs)));
            }
        }
        if self.vcs.get(&vc.new_view).is_some_and(|m| m.get(&from) == Some(&vc)) {
            return;
        }
        if !self.log_valid(&vc) {
            return;
        }
        let target = vc.new_view;
        self.vcs.entry(target).or_default().insert(from, vc);

        // join once f+1 replicas want something newer than we do
        let floor = self.vc_target.unwrap_or(self.view).max(self.view);
        let mut wanted: BTreeMap<u32, ViewId> = BTreeMap::new();
        for (v, msgs) in self.vcs.range(..) {
            if *v <= floor {
                continue;
            }
            for r in msgs.keys() {
                if *r != self.id {
                    wanted.entry(*r).or_insert(*v);
                }
            }
        }
        if wanted.len() > self.settings.f {
            let smallest = *wanted.values().min().unwrap();
            self.start_view_change(ctx, smallest, "joined view change");
        }
        self.try_view_start(ctx, target);
    }

    fn try_view_start(&mut self, ctx: Ctx, target: ViewId) {
        if target.leader(self.n()) != self.id || target <= self.view {
            return;
        }
        if self.view_start.as_ref().is_some_and(|vs| vs.view >= target) {
            return;
        }
        let others = self.vcs.get(&target).map_or(0, |m| m.keys().filter(|&&r| r != self.id).count());
        if others < 2 * self.settings.f {
            return;
        }
        if self.vc_target != Some(target) {
            if self.vc_target.is_some_and(|t| t > target) {
                return;
            }
            self.start_view_change(ctx, target, "leader of next view");
            if self.view_start.as_ref().is_some_and(|vs| vs.view >= target) {
                return;
            }
        }
        let msgs = &self.vcs[&target];
        let mut changes = vec![msgs[&self.id].clone()];
        changes.extend(
            msgs.iter()
                .filter(|(&r, _)| r != self.id)
                .take(2 * self.settings.f)
                .map(|(_, vc)| vc.clone()),
        );
        let vs = ViewStart {
            view: target,
            replica: self.id,
            changes,
            signature: sig(),
        }
        .sign(&self.key, self.crypto.as_ref());
        self.broadcast(ctx, ProtocolMessage::ViewStart(Box::new(vs.clone())));
        self.install_view_start(ctx, vs);
    }

    fn on_view_start(&mut self, ctx: Ctx, vs: ViewStart) {
        if vs.view <= self.view || vs.view.leader(self.n()) != vs.replica {
            return;
        }
        if let Status::EpochStarting { view, .. } = self.status {
            if view >= vs.view {
                return;
            }
        }
        if !vs.verify_signature(&self.ring, self.crypto.as_ref()) {
            return;
        }
        let signers: BTreeSet<u32> = vs.changes.iter().map(|c| c.replica).collect();
        if signers.len() < self.quorum() || signers.len() != vs.changes.len() {
            return;
        }
        for vc in &vs.changes {
            if vc.new_view != vs.view || !vc.verify_signature(&self.ring, self.crypto.as_ref()) || !self.log_valid(vc) {
                return;
            }
        }
        self.install_view_start(ctx, vs);
    }

    fn install_view_start(&mut self, ctx: Ctx, vs: ViewStart) {
        let target = vs.view;
        let merged = match merge_logs(&vs.changes) {
            Ok(m) => m,
            Err(e) => {
                ctx.observe(Observation::Violation {
                    node: ctx.me(),
                    what: format!("merge failed: {e}"),
                });
                return;
            }
        };
        self.view_start = Some(vs);
        self.vc_target = Some(target);
        self.install_merged(ctx, target, merged);
    }

    fn install_merged(&mut self, ctx: Ctx, target: ViewId, merged: MergedLog) {
        self.blocked = None;
        self.agreements.clear();
        self.sent_drops.clear();
        self.pending_finds.clear();
        self.pending_queries.clear();
        self.status = Status::ViewChanging;

        let own = self.log.entries();
        let common = own
            .iter()
            .zip(&merged.entries)
            .take_while(|(a, b)| a.same_content(b))
            .count() as u64;
        let own_len = self.log.len();
        self.log.set_epochs(merged.epoch_certs.iter().cloned());
        if common < own_len {
            self.log.truncate(common);
            self.rollback(ctx, common + 1, target);
        }
        for entry in &merged.entries[common as usize..] {
            let mut entry = entry.clone();
            entry.view = target;
            let slot = entry.slot;
            self.log.push(entry);
            self.execute(ctx, slot, target);
        }

        if target.epoch > merged.epoch {
            let slot = self.log.len();
            self.status = Status::EpochStarting { view: target, slot };
            self.pending_merge = Some(target);
            let es = EpochStart {
                epoch: target.epoch,
                replica: self.id,
                slot,
                signature: sig(),
            }
            .sign(&self.key, self.crypto.as_ref());
            self.epoch_starts
                .entry((target.epoch, slot))
                .or_default()
                .insert(self.id, es.clone());
            self.broadcast(ctx, ProtocolMessage::EpochStart(es));
            self.check_epoch_start(ctx);
        } else {
            self.enter_view(ctx, target);
        }
    }

    fn resend_epoch_start(&self, ctx: Ctx, to: u32, epoch: u32, slot: u64) {
        if let Some(es) = self.epoch_starts.get(&(epoch, slot)).and_then(|m| m.get(&self.id)) {
            self.send(ctx, to, ProtocolMessage::EpochStart(es.clone()));
        }
    }

    fn on_epoch_start(&mut self, ctx: Ctx, es: EpochStart) {
        if es.epoch < self.view.epoch || !es.verify(&self.ring, self.crypto.as_ref()) {
            return;
        }
        self.epoch_starts
            .entry((es.epoch, es.slot))
            .or_default()
            .insert(es.replica, es);
        self.check_epoch_start(ctx);
    }

    fn check_epoch_start(&mut self, ctx: Ctx) {
        let Status::EpochStarting { view, slot } = self.status else {
            return;
        };
        let Some(starts) = self.epoch_starts.get(&(view.epoch, slot)) else {
            return;
        };
        if starts.len() < self.quorum() {
            return;
        }
        let cert = EpochCertificate {
            epoch: view.epoch,
            slot,
            starts: starts.values().cloned().collect(),
        };
        self.log.add_epoch(cert);
        self.enter_view(ctx, view);
    }

    fn enter_view(&mut self, ctx: Ctx, view: ViewId) {
        let old_epoch = self.view.epoch;
        self.view = view;
        self.status = Status::Normal;
        self.vc_target = None;
        self.pending_merge = None;
        self.settled = self.log.len();
        self.vcs.retain(|v, _| *v > view);
        self.syncs.retain(|(v, _), _| *v >= view);
        self.epoch_starts.retain(|(e, _), _| *e >= view.epoch);
        ctx.observe(Observation::ViewEnter {
            replica: self.id,
            view,
            log_len: self.log.len(),
        });
        let entered_epoch = view.epoch > old_epoch
            || self.receiver.active_epoch().is_none_or(|a| a < view.epoch);
        if entered_epoch {
            let start_slot = self.log.epoch_start(view.epoch).unwrap_or(0);
            ctx.observe(Observation::EpochEnter {
                replica: self.id,
                epoch: view.epoch,
                start_slot,
            });
            ctx.send(
                NodeId::CONFIG,
                Message::Control(ControlMessage::FailoverRequest { epoch: view.epoch }),
            );
            let out = self.receiver.activate(view.epoch);
            self.handle_aom(ctx, out);
            for &(client, request_id) in self.unicast.keys() {
                self.arm(
                    ctx,
                    self.settings.timeouts.unicast,
                    ReplicaTimer::Unicast {
                        client,
                        request_id,
                        epoch: view.epoch,
                    },
                );
            }
        }
        for slot in std::mem::take(&mut self.deferred_replies) {
            if let Some(EntryBody::Request(oc)) = self.log.entry(slot).map(|e| e.body.clone()) {
                if let Ok(req) = Request::decode(&oc.packet.payload) {
                    self.reply_for(ctx, req.client, req.request_id);
                }
            }
        }
        self.check_syncs(ctx);
        self.pump(ctx);
    }

    // ---- client requests sent around the sequencer ----

    fn on_unicast_request(&mut self, ctx: Ctx, req: Request) {
        if !req.verify(&self.ring, self.crypto.as_ref()) {
            return;
        }
        if let Some(rec) = self.clients.get(&req.client) {
            if rec.request_id >= req.request_id {
                if rec.request_id == req.request_id && self.status == Status::Normal {
                    self.reply_for(ctx, req.client, req.request_id);
                    // the client is still waiting, so our reply may be stuck behind
                    // a commit that no sync point will cover if traffic has stopped
                    let slot = rec.slot;
                    if slot > self.sync_point.max(self.settled) && slot > self.watched {
                        self.watched = slot;
                        let view = self.view;
                        self.arm(ctx, self.settings.timeouts.sync_progress, ReplicaTimer::SyncTimeout { view, slot });
                    }
                }
                return;
            }
        }
        let key = (req.client, req.request_id);
        if self.unicast.contains_key(&key) {
            return;
        }
        self.unicast.insert(key, req);
        self.arm(
            ctx,
            self.settings.timeouts.unicast,
            ReplicaTimer::Unicast {
                client: key.0,
                request_id: key.1,
                epoch: self.view.epoch,
            },
        );
    }

    // ---- state synchronization ----

    fn send_sync(&mut self, ctx: Ctx, slot: u64) {
        let view = self.view;
        let drops = self
            .log
            .entries()
            .iter()
            .filter_map(|e| match &e.body {
                EntryBody::NoOp(cert) if cert.view == view => Some(cert.clone()),
                _ => None,
            })
            .collect();
        let s = Sync {
            view,
            replica: self.id,
            slot,
            drops,
            signature: sig(),
        }
        .sign(&self.key, self.crypto.as_ref());
        self.my_sync = Some(s.clone());
        self.broadcast(ctx, ProtocolMessage::Sync(s));
        self.arm(ctx, self.settings.timeouts.sync_resend, ReplicaTimer::SyncResend { view, slot });
        self.arm(ctx, self.settings.timeouts.sync_progress, ReplicaTimer::SyncTimeout { view, slot });
    }

    fn on_sync(&mut self, ctx: Ctx, s: Sync) {
        if s.view != self.view || s.slot <= self.sync_point || !s.verify(&self.ring, self.crypto.as_ref()) {
            return;
        }
        // a no-op we are stuck on may ride along before we can reach the sync slot
        let next = self.log.len() + 1;
        let stuck = s.drops.iter().find(|c| !c.recv && c.slot == next).cloned();
        self.syncs.entry((s.view, s.slot)).or_default().insert(s.replica, s);
        if let Some(cert) = stuck {
            if self.status == Status::Normal && cert.verify(&self.ring, self.quorum(), self.crypto.as_ref()) {
                self.agreements.entry(next).or_default().cert = Some(cert.clone());
                self.apply_cert(ctx, cert, None, "sync");
            }
        }
        self.check_syncs(ctx);
    }

    fn check_syncs(&mut self, ctx: Ctx) {
        if self.status != Status::Normal {
            return;
        }
        let need = 2 * self.settings.f;
        let ready: Option<u64> = self
            .syncs
            .iter()
            .filter(|((v, slot), msgs)| {
                *v == self.view
                    && *slot > self.sync_point
                    && *slot <= self.log.len()
                    && msgs.keys().filter(|&&r| r != self.id).count() >= need
            })
            .map(|((_, slot), _)| *slot)
            .max();
        let Some(slot) = ready else {
            return;
        };
        let certs: Vec<GapCertificate> = self.syncs[&(self.view, slot)]
            .values()
            .flat_map(|s| s.drops.iter().cloned())
            .collect();
        let mut seen = BTreeSet::new();
        for cert in certs {
            if cert.recv || cert.slot > self.log.len() || !seen.insert(cert.slot) {
                continue;
            }
            if self.log.entry(cert.slot).is_some_and(|e| e.kind() == EntryKind::NoOp) {
                continue;
            }
            if cert.verify(&self.ring, self.quorum(), self.crypto.as_ref()) {
                self.write_noop(ctx, cert);
            }
        }
        self.sync_point = slot;
        let keep = self.snapshots.range(..=slot).next_back().map(|(s, _)| *s).unwrap_or(0);
        self.snapshots.retain(|&s, _| s >= keep);
        self.syncs.retain(|(_, s), _| *s > slot);
        ctx.observe(Observation::SyncPoint {
            replica: self.id,
            view: self.view,
            slot,
            log_hash: self.log.hash_at(slot),
        });
    }

    // ---- timers ----

    fn on_replica_timer(&mut self, ctx: Ctx, t: ReplicaTimer) {
        match t {
            ReplicaTimer::QueryResend { view, slot } => {
                if view == self.view && self.blocked.is_some_and(|b| b.slot == slot) && self.status == Status::Normal {
                    self.send_query(ctx, slot, true);
                    self.arm(ctx, self.settings.timeouts.query_resend, t);
                }
            }
            ReplicaTimer::GapProgress { view, slot, seen } => {
                let Some(b) = self.blocked else {
                    return;
                };
                if view != self.view || b.slot != slot || self.status != Status::Normal {
                    return;
                }
                if b.progress > seen {
                    self.arm(
                        ctx,
                        self.settings.timeouts.gap_progress,
                        ReplicaTimer::GapProgress {
                            view,
                            slot,
                            seen: b.progress,
                        },
                    );
                } else {
                    self.start_view_change(ctx, view.next_leader(), "gap agreement stalled");
                }
            }
            ReplicaTimer::GapFindResend { view, slot } => {
                if view != self.view || self.status != Status::Normal {
                    return;
                }
                let Some(a) = self.agreements.get(&slot) else {
                    return;
                };
                if a.cert.is_some() {
                    return;
                }
                if let Some(d) = a.decision.clone() {
                    self.broadcast(ctx, ProtocolMessage::GapDecision(Box::new(d)));
                } else if let Some(f) = a.find.clone() {
                    self.broadcast(ctx, ProtocolMessage::GapFind(f));
                }
                if let Some(c) = a.commits.get(&self.id).cloned() {
                    self.broadcast(ctx, ProtocolMessage::GapCommit(c));
                }
                self.arm(ctx, self.settings.timeouts.query_resend, t);
            }
            ReplicaTimer::ViewChange { target } => {
                if self.vc_target == Some(target) && self.view < target {
                    // step past the newest view anyone asked for, so replicas that
                    // diverged on epoch versus leader converge on the next round
                    let cap = self.view.epoch + 1;
                    let newest = self
                        .vcs
                        .range(target..)
                        .filter(|(v, m)| v.epoch <= cap && m.keys().any(|r| *r != self.id))
                        .map(|(v, _)| *v)
                        .next_back()
                        .map_or(target, |v| v.max(target));
                    let next = ViewId::new(newest.epoch, newest.leader_num + 1);
                    self.start_view_change(ctx, next, "view change timed out");
                }
            }
            ReplicaTimer::ViewChangeResend { target } => {
                if self.vc_target == Some(target) && self.view < target {
                    if let Some(vc) = self.vcs.get(&target).and_then(|m| m.get(&self.id)).cloned() {
                        self.broadcast(ctx, ProtocolMessage::ViewChange(Box::new(vc)));
                    }
                    if let Status::EpochStarting { view, slot } = self.status {
                        for r in self.others() {
                            self.resend_epoch_start(ctx, r.index, view.epoch, slot);
                        }
                    }
                    self.arm(ctx, self.settings.timeouts.view_change_resend, t);
                }
            }
            ReplicaTimer::Unicast {
                client,
                request_id,
                epoch,
            } => {
                if epoch == self.view.epoch && self.unicast.contains_key(&(client, request_id)) {
                    if self.status == Status::Normal {
                        let target = self.view.next_epoch();
                        self.start_view_change(ctx, target, "request not sequenced");
                    } else {
                        // busy changing leader; check again once that settles
                        self.arm(ctx, self.settings.timeouts.unicast, t);
                    }
                }
            }
            ReplicaTimer::SyncResend { view, slot } => {
                if view == self.view && self.sync_point < slot {
                    if let Some(s) = self.my_sync.clone().filter(|s| s.slot == slot) {
                        self.broadcast(ctx, ProtocolMessage::Sync(s));
                        self.arm(ctx, self.settings.timeouts.sync_resend, t);
                    }
                }
            }
            ReplicaTimer::SyncTimeout { view, slot } => {
                if view == self.view && self.status == Status::Normal && self.sync_point.max(self.settled) < slot {
                    self.start_view_change(ctx, view.next_leader(), "sync stalled");
                }
            }
        }
    }

    fn on_protocol(&mut self, ctx: Ctx, from: NodeId, msg: ProtocolMessage) {
        use crate::sim::Role;
        let from_replica = (from.role == Role::Replica).then_some(from.index);
        match msg {
            ProtocolMessage::Request(r) => self.on_unicast_request(ctx, r),
            ProtocolMessage::Reply(_) => {}
            ProtocolMessage::Query(q) if from_replica == Some(q.replica) => self.on_query(ctx, q),
            ProtocolMessage::QueryReply(r) if from_replica == Some(r.replica) => self.on_query_reply(ctx, *r),
            ProtocolMessage::GapFind(g) => self.on_gap_find(ctx, g),
            ProtocolMessage::GapRecv(r) if from_replica == Some(r.replica) => self.on_gap_recv(ctx, *r),
            ProtocolMessage::GapDrop(d) => self.on_gap_drop(ctx, d),
            ProtocolMessage::GapDecision(d) => self.on_gap_decision(ctx, *d),
            ProtocolMessage::GapPrepare(v) | ProtocolMessage::GapCommit(v) => {
                if let Some(r) = from_replica {
                    self.on_gap_vote(ctx, r, v);
                }
            }
            ProtocolMessage::GapCertified(g) => self.on_gap_certified(ctx, *g),
            ProtocolMessage::ViewChange(vc) => self.on_view_change(ctx, *vc),
            ProtocolMessage::ViewStart(vs) => self.on_view_start(ctx, *vs),
            ProtocolMessage::EpochStart(es) => self.on_epoch_start(ctx, es),
            ProtocolMessage::Sync(s) => self.on_sync(ctx, s),
            _ => {}
        }
    }

    pub fn final_log(&self) -> Observation {
        Observation::FinalLog {
            replica: self.id,
            view: self.view,
            sync_point: self.sync_point,
            entries: self
                .log
                .entries()
                .iter()
                .map(|e| FinalEntry {
                    slot: e.slot,
                    kind: e.kind(),
                    content: e.content(),
                    log_hash: self.log.hash_at(e.slot),
                })
                .collect(),
        }
    }
}

impl Node<Message, Timer> for Replica {
    fn on_message(&mut self, ctx: &mut Context<'_, Message, Timer>, from: NodeId, msg: Message) {
        match msg {
            Message::Aom(pkt) => {
                let key = (pkt.header.epoch, pkt.header.seq);
                self.arrivals.entry(key).or_insert(ctx.depth());
                let out = self.receiver.on_packet(pkt);
                self.handle_aom(ctx, out);
            }
            Message::Confirms(batch) => {
                let out = self.receiver.on_confirms(batch);
                self.handle_aom(ctx, out);
            }
            Message::Control(ControlMessage::EpochInstalled(cfg)) if from == NodeId::CONFIG => {
                let out = self.receiver.install(cfg);
                self.handle_aom(ctx, out);
            }
            Message::Protocol(p) => self.on_protocol(ctx, from, p),
            _ => {}
        }
    }

    fn on_timer(&mut self, ctx: &mut Context<'_, Message, Timer>, timer: Timer) {
        match timer {
            Timer::Aom(t) => {
                let out = self.receiver.on_timer(t);
                self.handle_aom(ctx, out);
            }
            Timer::Replica(t) => self.on_replica_timer(ctx, t),
            Timer::Client(_) => {}
        }
    }

    fn on_finish(&mut self, ctx: &mut Context<'_, Message, Timer>) {
        ctx.observe(self.final_log());
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
