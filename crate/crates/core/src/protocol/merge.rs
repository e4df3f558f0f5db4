use thiserror::Error;

use super::log::{EntryBody, LogEntry};
use super::message::{EpochCertificate, ViewChange};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MergeError {
    #[error("no view-change messages to merge")]
    Empty,
    #[error("no log in the quorum started epoch {0}")]
    EpochNotStarted(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergedLog {
    /// Latest epoch backed by a certificate in the quorum.
    pub epoch: u32,
    pub entries: Vec<LogEntry>,
    pub epoch_certs: Vec<EpochCertificate>,
}

/// Combines the logs of a view-change quorum. Inputs are assumed already
/// validated. Ties are broken towards the lowest replica id so every replica
/// merging the same quorum gets the same log.
pub fn merge_logs(changes: &[ViewChange]) -> Result<MergedLog, MergeError> {
    if changes.is_empty() {
        return Err(MergeError::Empty);
    }
    let mut by_id: Vec<&ViewChange> = changes.iter().collect();
    by_id.sort_by_key(|vc| vc.replica);

    // 1. latest epoch with a certificate
    let epoch = by_id.iter().map(|vc| vc.latest_epoch()).max().unwrap();
    let started: Vec<&ViewChange> = by_id
        .iter()
        .copied()
        .filter(|vc| vc.epoch_start(epoch).is_some())
        .collect();
    let Some(first) = started.first() else {
        return Err(MergeError::EpochNotStarted(epoch));
    };

    // 2. everything before the epoch from a log that started it
    let start = first.epoch_start(epoch).unwrap();
    let mut entries: Vec<LogEntry> = first.log[..start as usize].to_vec();

    // 3. requests of the epoch from the log reaching furthest into it
    let in_epoch = |vc: &ViewChange| {
        let s = vc.epoch_start(epoch).unwrap();
        vc.log.len().saturating_sub(s as usize)
    };
    let longest = started
        .iter()
        .copied()
        .max_by(|a, b| in_epoch(a).cmp(&in_epoch(b)).then(b.replica.cmp(&a.replica)))
        .unwrap();
    let longest_start = longest.epoch_start(epoch).unwrap() as usize;
    entries.extend(longest.log[longest_start..].iter().cloned());

    // 4. no-ops of the epoch from any log, overwriting requests
    for vc in &started {
        let s = vc.epoch_start(epoch).unwrap() as usize;
        for entry in &vc.log[s..] {
            if let EntryBody::NoOp(_) = entry.body {
                let i = entry.slot as usize - 1;
                if i < entries.len() && !matches!(entries[i].body, EntryBody::NoOp(_)) {
                    entries[i] = entry.clone();
                }
            }
        }
    }

    let epoch_certs = first
        .epoch_certs
        .iter()
        .filter(|c| c.epoch <= epoch)
        .cloned()
        .collect();
    Ok(MergedLog {
        epoch,
        entries,
        epoch_certs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aom::{AomHeader, AomPacket, Authenticator, GroupId, OrderingCertificate};
    use crate::crypto::{CryptoSuite, Signature, TestCrypto};
    use crate::protocol::message::GapCertificate;
    use crate::protocol::ViewId;

    fn req(slot: u64, body: &str) -> LogEntry {
        LogEntry {
            slot,
            view: ViewId::default(),
            body: EntryBody::Request(OrderingCertificate {
                packet: AomPacket {
                    header: AomHeader {
                        group: GroupId(1),
                        epoch: 0,
                        seq: slot,
                        digest: TestCrypto.digest(body.as_bytes()),
                        auth: Authenticator::None,
                    },
                    payload: body.as_bytes().to_vec(),
                },
                closure: Vec::new(),
                confirmations: Vec::new(),
            }),
        }
    }

    fn noop(slot: u64) -> LogEntry {
        LogEntry {
            slot,
            view: ViewId::default(),
            body: EntryBody::NoOp(GapCertificate {
                view: ViewId::default(),
                slot,
                recv: false,
                commits: Vec::new(),
            }),
        }
    }

    fn vc(replica: u32, log: Vec<LogEntry>) -> ViewChange {
        ViewChange {
            view: ViewId::default(),
            replica,
            new_view: ViewId::new(0, 1),
            epoch_certs: vec![EpochCertificate::genesis()],
            log,
            signature: Signature::ZERO,
        }
    }

    #[test]
    fn identical_logs_merge_to_themselves() {
        let log = vec![req(1, "a"), noop(2), req(3, "c")];
        let m = merge_logs(&[vc(0, log.clone()), vc(1, log.clone()), vc(2, log.clone())]).unwrap();
        assert_eq!(m.entries, log);
    }

    #[test]
    fn longer_tail_wins_and_noops_overwrite() {
        let m = merge_logs(&[
            vc(0, vec![req(1, "a")]),
            vc(1, vec![req(1, "a"), req(2, "b"), req(3, "c")]),
            vc(2, vec![req(1, "a"), noop(2)]),
        ])
        .unwrap();
        let kinds: Vec<_> = m.entries.iter().map(|e| e.kind()).collect();
        use crate::protocol::EntryKind::*;
        assert_eq!(kinds, vec![Request, NoOp, Request]);
    }

    #[test]
    fn empty_quorum_is_an_error() {
        assert_eq!(merge_logs(&[]), Err(MergeError::Empty));
    }
}
