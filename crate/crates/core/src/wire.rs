//! Everything that crosses the simulated network, and every timer kind.

use crate::aom::{AomPacket, MemberConfig, OrderConfirm};
use crate::protocol::{ProtocolMessage, ViewId};
use crate::sim::{Channel, SimMessage};

#[derive(Debug, Clone)]
pub enum ControlMessage {
    /// A replica asks the configuration service to move to `epoch`.
    FailoverRequest { epoch: u32 },
    EpochInstalled(MemberConfig),
}

#[derive(Debug, Clone)]
pub enum Message {
    /// Sender to sequencer.
    Submit(AomPacket),
    /// Sequencer to one receiver.
    Aom(AomPacket),
    Confirms(Vec<OrderConfirm>),
    Control(ControlMessage),
    Protocol(ProtocolMessage),
}

impl SimMessage for Message {
    fn kind(&self) -> &'static str {
        match self {
            Message::Submit(_) => "submit",
            Message::Aom(_) => "aom",
            Message::Confirms(_) => "order-confirm",
            Message::Control(ControlMessage::FailoverRequest { .. }) => "failover-request",
            Message::Control(ControlMessage::EpochInstalled(_)) => "epoch-installed",
            Message::Protocol(p) => p.kind(),
        }
    }

    fn summary(&self) -> String {
        match self {
            Message::Submit(p) => format!("submit {} bytes", p.payload.len()),
            Message::Aom(p) => format!(
                "aom e={} seq={} auth={}",
                p.header.epoch,
                p.header.seq,
                p.header.auth.kind()
            ),
            Message::Confirms(batch) => {
                let seqs: Vec<String> = batch.iter().map(|c| format!("{}/{}", c.epoch, c.seq)).collect();
                format!("order-confirm [{}]", seqs.join(","))
            }
            Message::Control(ControlMessage::FailoverRequest { epoch }) => {
                format!("failover-request epoch={epoch}")
            }
            Message::Control(ControlMessage::EpochInstalled(cfg)) => format!(
                "epoch-installed epoch={} rank={}",
                cfg.group.epoch, cfg.rank
            ),
            Message::Protocol(p) => p.summary(),
        }
    }

    fn channel(&self) -> Channel {
        match self {
            Message::Submit(_) => Channel::Ingress,
            Message::Aom(_) => Channel::Aom,
            Message::Confirms(_) | Message::Protocol(_) => Channel::Unicast,
            Message::Control(_) => Channel::Control,
        }
    }

    fn aom_slot(&self) -> Option<(u32, u64)> {
        match self {
            Message::Aom(p) => Some((p.header.epoch, p.header.seq)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AomTimer {
    Reorder { epoch: u32, seq: u64 },
    ConfirmFlush,
    Confirm { epoch: u32, seq: u64 },
    IdleFlush { generation: u64 },
    Install { epoch: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientTimer {
    Resend { request_id: u64, attempt: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplicaTimer {
    QueryResend { view: ViewId, slot: u64 },
    GapProgress { view: ViewId, slot: u64, seen: u64 },
    GapFindResend { view: ViewId, slot: u64 },
    ViewChange { target: ViewId },
    ViewChangeResend { target: ViewId },
    Unicast { client: u32, request_id: u64, epoch: u32 },
    SyncResend { view: ViewId, slot: u64 },
    SyncTimeout { view: ViewId, slot: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timer {
    Aom(AomTimer),
    Client(ClientTimer),
    Replica(ReplicaTimer),
}
