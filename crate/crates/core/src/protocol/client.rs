use std::any::Any;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::aom::{AomPacket, GroupId};
use crate::crypto::{Digest, SharedCrypto, SigningKey};
use crate::sim::{Context, Node, NodeId, TimerId};
use crate::trace::Observation;
use crate::wire::{ClientTimer, Message, Timer};

use super::message::{ProtocolMessage, Reply, Request};
use super::{KeyRing, Timeouts, ViewId};

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ClientStats {
    pub completed: u64,
    pub resends: u64,
    pub unicast_rounds: u64,
}

type ReplyKey = (ViewId, u64, Digest, Vec<u8>);

struct Pending {
    request: Request,
    invoked_at: u64,
    invoke_depth: u32,
    view: Option<ViewId>,
    votes: BTreeMap<ReplyKey, BTreeSet<u32>>,
    timer: TimerId,
}

/// Closed-loop client: one outstanding operation at a time.
pub struct Client {
    id: u32,
    key: SigningKey,
    ring: Arc<KeyRing>,
    crypto: SharedCrypto,
    group: GroupId,
    replicas: Vec<NodeId>,
    quorum: usize,
    timeouts: Timeouts,
    ops: Vec<String>,
    next: usize,
    pending: Option<Pending>,
    pub stats: ClientStats,
}

impl Client {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: u32,
        key: SigningKey,
        ring: Arc<KeyRing>,
        crypto: SharedCrypto,
        group: GroupId,
        f: usize,
        timeouts: Timeouts,
        ops: Vec<String>,
    ) -> Self {
        let replicas = (0..ring.replicas.len() as u32).map(NodeId::replica).collect();
        Self {
            id,
            key,
            ring,
            crypto,
            group,
            replicas,
            quorum: 2 * f + 1,
            timeouts,
            ops,
            next: 0,
            pending: None,
            stats: ClientStats::default(),
        }
    }

    fn submit(&self, ctx: &mut Context<'_, Message, Timer>, request: &Request) {
        let pkt = AomPacket::unstamped(self.group, request.encode(), self.crypto.as_ref());
        ctx.multicast(self.group.0, Message::Submit(pkt));
    }

    fn invoke_next(&mut self, ctx: &mut Context<'_, Message, Timer>) {
        let Some(op) = self.ops.get(self.next).cloned() else {
            return;
        };
        let request_id = self.next as u64 + 1;
        let request = Request::new(self.id, request_id, op.clone().into_bytes(), &self.key, self.crypto.as_ref());
        ctx.observe(Observation::ClientInvoke {
            client: self.id,
            request_id,
            op,
        });
        self.submit(ctx, &request);
        let timer = ctx.set_timer(
            self.timeouts.client_resend,
            Timer::Client(ClientTimer::Resend {
                request_id,
                attempt: 1,
            }),
        );
        self.pending = Some(Pending {
            request,
            invoked_at: ctx.now(),
            invoke_depth: ctx.depth(),
            view: None,
            votes: BTreeMap::new(),
            timer,
        });
    }

    fn on_reply(&mut self, ctx: &mut Context<'_, Message, Timer>, reply: Reply) {
        let Some(p) = self.pending.as_mut() else {
            return;
        };
        if reply.client != self.id
            || reply.request_id != p.request.request_id
            || !reply.verify(&self.ring, self.crypto.as_ref())
        {
            return;
        }
        match p.view {
            Some(v) if reply.view < v => return,
            Some(v) if reply.view > v => {
                p.votes.clear();
                p.view = Some(reply.view);
            }
            None => p.view = Some(reply.view),
            _ => {}
        }
        let key = (reply.view, reply.slot, reply.log_hash, reply.result.clone());
        let voters = p.votes.entry(key).or_default();
        voters.insert(reply.replica);
        if voters.len() < self.quorum {
            return;
        }
        let p = self.pending.take().unwrap();
        ctx.cancel_timer(p.timer);
        self.stats.completed += 1;
        ctx.observe(Observation::ClientComplete {
            client: self.id,
            request_id: p.request.request_id,
            result: String::from_utf8_lossy(&reply.result).into_owned(),
            view: reply.view,
            slot: reply.slot,
            hops: ctx.depth().saturating_sub(p.invoke_depth),
            ticks: ctx.now() - p.invoked_at,
        });
        self.next += 1;
        self.invoke_next(ctx);
    }

    pub fn completed(&self) -> u64 {
        self.stats.completed
    }
}

impl Node<Message, Timer> for Client {
    fn on_start(&mut self, ctx: &mut Context<'_, Message, Timer>) {
        self.invoke_next(ctx);
    }

    fn on_message(&mut self, ctx: &mut Context<'_, Message, Timer>, _from: NodeId, msg: Message) {
        if let Message::Protocol(ProtocolMessage::Reply(reply)) = msg {
            self.on_reply(ctx, reply);
        }
    }

    fn on_timer(&mut self, ctx: &mut Context<'_, Message, Timer>, timer: Timer) {
        let Timer::Client(ClientTimer::Resend { request_id, attempt }) = timer else {
            return;
        };
        let Some(p) = self.pending.as_ref() else {
            return;
        };
        if p.request.request_id != request_id {
            return;
        }
        let request = p.request.clone();
        self.stats.resends += 1;
        self.submit(ctx, &request);
        if attempt >= 2 {
            // the sequencer may be faulty: go around it as well
            self.stats.unicast_rounds += 1;
            ctx.send_all(
                self.replicas.clone(),
                Message::Protocol(ProtocolMessage::Request(request)),
            );
        }
        let timer = ctx.set_timer(
            self.timeouts.client_resend,
            Timer::Client(ClientTimer::Resend {
                request_id,
                attempt: attempt + 1,
            }),
        );
        self.pending.as_mut().unwrap().timer = timer;
    }

    fn done(&self) -> bool {
        self.pending.is_none() && self.next >= self.ops.len()
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
