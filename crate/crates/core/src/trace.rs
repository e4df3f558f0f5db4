//! Line-delimited run traces.
//!
//! One JSON object per line with fields `time`, `kind`, `src`, `dst` and
//! `summary`. Network records also carry `msg` (message kind) and `depth`
//! (causal hop count); node-level events carry a structured `obs`.

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::crypto::Digest;
use crate::protocol::{EntryKind, ViewId};
use crate::sim::{NodeId, RunOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Setup,
    Send,
    Deliver,
    Drop,
    Timer,
    Crash,
    Event,
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: u64,
    pub kind: RecordKind,
    pub src: Option<NodeId>,
    pub dst: Option<NodeId>,
    pub summary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msg: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obs: Option<Observation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalEntry {
    pub slot: u64,
    pub kind: EntryKind,
    pub content: Digest,
    pub log_hash: Digest,
}

/// Node-level protocol events. The auditors work from these alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Observation {
    Setup {
        n: usize,
        f: usize,
        network: String,
        auth: String,
        crypto: String,
        app: String,
        sync_interval: u64,
        /// Replicas that may deviate: Byzantine or scheduled to crash.
        faulty: Vec<u32>,
        byzantine: Vec<u32>,
    },
    AomDeliver {
        replica: u32,
        epoch: u32,
        seq: u64,
        digest: Digest,
    },
    AomDrop {
        replica: u32,
        epoch: u32,
        seq: u64,
    },
    AomReject {
        replica: u32,
        epoch: u32,
        seq: u64,
        reason: String,
    },
    AomSuspect {
        replica: u32,
        epoch: u32,
        seq: u64,
    },
    OrderCert {
        replica: u32,
        epoch: u32,
        seq: u64,
        digest: Digest,
        signers: Vec<u32>,
    },
    Executed {
        replica: u32,
        view: ViewId,
        slot: u64,
        entry: EntryKind,
        content: Digest,
        client: Option<u32>,
        request_id: Option<u64>,
        applied: bool,
        log_hash: Digest,
    },
    /// Application state was restored to just after `to_slot`.
    Rollback {
        replica: u32,
        to_slot: u64,
        changed_slot: u64,
    },
    DropNoticed {
        replica: u32,
        view: ViewId,
        slot: u64,
    },
    GapStart {
        replica: u32,
        view: ViewId,
        slot: u64,
    },
    GapDecision {
        replica: u32,
        view: ViewId,
        slot: u64,
        recv: bool,
    },
    GapResolved {
        replica: u32,
        view: ViewId,
        slot: u64,
        recv: bool,
        via: String,
    },
    GapCertificate {
        replica: u32,
        view: ViewId,
        slot: u64,
        recv: bool,
        signers: Vec<u32>,
    },
    ViewChangeStart {
        replica: u32,
        from: ViewId,
        to: ViewId,
        reason: String,
    },
    ViewEnter {
        replica: u32,
        view: ViewId,
        log_len: u64,
    },
    EpochEnter {
        replica: u32,
        epoch: u32,
        start_slot: u64,
    },
    SyncPoint {
        replica: u32,
        view: ViewId,
        slot: u64,
        log_hash: Digest,
    },
    ClientInvoke {
        client: u32,
        request_id: u64,
        op: String,
    },
    ClientComplete {
        client: u32,
        request_id: u64,
        result: String,
        view: ViewId,
        slot: u64,
        hops: u32,
        ticks: u64,
    },
    Failover {
        epoch: u32,
        sequencer: NodeId,
    },
    Violation {
        node: NodeId,
        what: String,
    },
    FinalLog {
        replica: u32,
        view: ViewId,
        sync_point: u64,
        entries: Vec<FinalEntry>,
    },
}

impl Observation {
    pub fn summary(&self) -> String {
        use Observation::*;
        match self {
            Setup { n, f, network, auth, .. } => {
                format!("setup n={n} f={f} network={network} auth={auth}")
            }
            AomDeliver { replica, epoch, seq, .. } => {
                format!("replica {replica} aom-deliver e={epoch} seq={seq}")
            }
            AomDrop { replica, epoch, seq } => {
                format!("replica {replica} drop-notification e={epoch} seq={seq}")
            }
            AomReject { replica, epoch, seq, reason } => {
                format!("replica {replica} rejected e={epoch} seq={seq}: {reason}")
            }
            AomSuspect { replica, epoch, seq } => {
                format!("replica {replica} suspects sequencer e={epoch} seq={seq}")
            }
            OrderCert { replica, epoch, seq, signers, .. } => format!(
                "replica {replica} ordering certificate e={epoch} seq={seq} signers={signers:?}"
            ),
            Executed { replica, view, slot, entry, applied, .. } => format!(
                "replica {replica} executed slot={slot} {entry:?} view={view} applied={applied}"
            ),
            Rollback { replica, to_slot, changed_slot } => {
                format!("replica {replica} rollback to slot={to_slot} (changed {changed_slot})")
            }
            DropNoticed { replica, view, slot } => {
                format!("replica {replica} blocked on dropped slot={slot} view={view}")
            }
            GapStart { replica, view, slot } => {
                format!("replica {replica} gap-find slot={slot} view={view}")
            }
            GapDecision { replica, view, slot, recv } => format!(
                "replica {replica} gap-decision slot={slot} view={view} {}",
                if *recv { "recv" } else { "drop" }
            ),
            GapResolved { replica, slot, recv, via, .. } => format!(
                "replica {replica} filled slot={slot} with {} via {via}",
                if *recv { "request" } else { "no-op" }
            ),
            GapCertificate { replica, view, slot, recv, .. } => format!(
                "replica {replica} gap certificate slot={slot} view={view} {}",
                if *recv { "recv" } else { "drop" }
            ),
            ViewChangeStart { replica, from, to, reason } => {
                format!("replica {replica} view-change {from} -> {to} ({reason})")
            }
            ViewEnter { replica, view, log_len } => {
                format!("replica {replica} entered view {view} log_len={log_len}")
            }
            EpochEnter { replica, epoch, start_slot } => {
                format!("replica {replica} entered epoch {epoch} at slot {start_slot}")
            }
            SyncPoint { replica, slot, .. } => format!("replica {replica} sync-point {slot}"),
            ClientInvoke { client, request_id, op } => {
                format!("client {client} invoke #{request_id} {op}")
            }
            ClientComplete { client, request_id, result, hops, .. } => {
                format!("client {client} complete #{request_id} -> {result} hops={hops}")
            }
            Failover { epoch, sequencer } => format!("failover to epoch {epoch} on {sequencer}"),
            Violation { node, what } => format!("VIOLATION at {node}: {what}"),
            FinalLog { replica, entries, sync_point, .. } => format!(
                "replica {replica} final log len={} sync_point={sync_point}",
                entries.len()
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub outcome: RunOutcome,
}

impl RunTrace {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let mut records = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            records.push(serde_json::from_str::<TraceRecord>(line)?);
        }
        let outcome = match records.last() {
            Some(r) if r.kind == RecordKind::End && r.summary == "completed" => {
                RunOutcome::Completed
            }
            _ => RunOutcome::TimedOut,
        };
        Ok(Self { records, outcome })
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }

    pub fn observations(&self) -> impl Iterator<Item = (usize, &TraceRecord, &Observation)> {
        self.records
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.obs.as_ref().map(|o| (i, r, o)))
    }
}
