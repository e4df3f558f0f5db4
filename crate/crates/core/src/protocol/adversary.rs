use std::any::Any;

use crate::sim::{Action, Context, Node, NodeId, ScriptId};
use crate::wire::{Message, Timer};

use super::message::{GapDrop, ProtocolMessage};
use super::replica::Replica;

/// A replica running the normal code whose outgoing traffic is rewritten by
/// a fixed script.
pub struct ByzantineReplica {
    inner: Replica,
    script: ScriptId,
}

impl ByzantineReplica {
    pub fn new(inner: Replica, script: ScriptId) -> Self {
        Self { inner, script }
    }

    pub fn inner(&self) -> &Replica {
        &self.inner
    }

    pub fn script(&self) -> ScriptId {
        self.script
    }

    fn rewrite(&self, msg: Message) -> Option<Message> {
        let key = self.inner.signing_key();
        let crypto = self.inner.crypto().as_ref();
        let Message::Protocol(p) = msg else {
            return Some(msg);
        };
        let p = match (self.script, p) {
            (ScriptId::Silent, _) => return None,
            (ScriptId::ConflictingReply, ProtocolMessage::Reply(mut r)) => {
                r.log_hash.0[0] ^= 0xff;
                ProtocolMessage::Reply(r.sign(key, crypto))
            }
            (ScriptId::FalseGapDrop, ProtocolMessage::GapRecv(r)) => ProtocolMessage::GapDrop(
                GapDrop {
                    view: r.view,
                    replica: r.replica,
                    slot: r.slot,
                    signature: crate::crypto::Signature::ZERO,
                }
                .sign(key, crypto),
            ),
            (ScriptId::StaleViewChange, ProtocolMessage::ViewChange(mut vc)) => {
                let start = vc.epoch_start(vc.latest_epoch()).unwrap_or(0);
                vc.log.truncate(start as usize);
                ProtocolMessage::ViewChange(Box::new(vc.sign(key, crypto)))
            }
            (_, p) => p,
        };
        Some(Message::Protocol(p))
    }

    fn filter(&self, ctx: &mut Context<'_, Message, Timer>, mark: usize) {
        for action in ctx.drain_from(mark) {
            match action {
                Action::Send { dst, msg } => {
                    if let Some(msg) = self.rewrite(msg) {
                        ctx.push(Action::Send { dst, msg });
                    }
                }
                Action::Multicast { group, msg } => {
                    if let Some(msg) = self.rewrite(msg) {
                        ctx.push(Action::Multicast { group, msg });
                    }
                }
                other => ctx.push(other),
            }
        }
    }
}

impl Node<Message, Timer> for ByzantineReplica {
    fn on_start(&mut self, ctx: &mut Context<'_, Message, Timer>) {
        let mark = ctx.mark();
        self.inner.on_start(ctx);
        self.filter(ctx, mark);
    }

    fn on_message(&mut self, ctx: &mut Context<'_, Message, Timer>, from: NodeId, msg: Message) {
        let mark = ctx.mark();
        self.inner.on_message(ctx, from, msg);
        self.filter(ctx, mark);
    }

    fn on_timer(&mut self, ctx: &mut Context<'_, Message, Timer>, timer: Timer) {
        let mark = ctx.mark();
        self.inner.on_timer(ctx, timer);
        self.filter(ctx, mark);
    }

    fn on_finish(&mut self, ctx: &mut Context<'_, Message, Timer>) {
        self.inner.on_finish(ctx);
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
