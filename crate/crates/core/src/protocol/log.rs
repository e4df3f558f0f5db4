use std::collections::BTreeMap;

use sha2::{Digest as _, Sha256};

use crate::aom::{verify_ordering_certificate, MemberConfig, OrderingCertificate};
use crate::codec::Encoder;
use crate::crypto::{CryptoSuite, Digest};

use super::message::{EpochCertificate, GapCertificate};
use super::{EntryKind, KeyRing, ViewId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntryBody {
    Request(OrderingCertificate),
    /// Always backed by a drop certificate.
    NoOp(GapCertificate),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub slot: u64,
    /// View in which the entry was written.
    pub view: ViewId,
    pub body: EntryBody,
}

impl LogEntry {
    pub fn kind(&self) -> EntryKind {
        match self.body {
            EntryBody::Request(_) => EntryKind::Request,
            EntryBody::NoOp(_) => EntryKind::NoOp,
        }
    }

    pub fn content(&self) -> Digest {
        match &self.body {
            EntryBody::Request(oc) => *oc.digest(),
            EntryBody::NoOp(_) => Digest::ZERO,
        }
    }

    pub fn oc(&self) -> Option<&OrderingCertificate> {
        match &self.body {
            EntryBody::Request(oc) => Some(oc),
            EntryBody::NoOp(_) => None,
        }
    }

    /// Same slot outcome, ignoring proofs and insertion view.
    pub fn same_content(&self, other: &LogEntry) -> bool {
        self.slot == other.slot && self.kind() == other.kind() && self.content() == other.content()
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.slot)
            .u32(self.view.epoch)
            .u32(self.view.leader_num);
        match &self.body {
            EntryBody::Request(oc) => {
                enc.u8(EntryKind::Request.code());
                oc.encode(enc);
            }
            EntryBody::NoOp(cert) => {
                enc.u8(EntryKind::NoOp.code());
                cert.encode(enc);
            }
        }
    }
}

/// `H(prev || slot || kind || content)`.
pub fn chain_log_hash(prev: &Digest, slot: u64, kind: EntryKind, content: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update(prev.0);
    h.update(slot.to_be_bytes());
    h.update([kind.code()]);
    h.update(content.0);
    Digest(h.finalize().into())
}

/// Dense log from slot 1 with its hash chain and epoch boundaries.
#[derive(Debug, Clone)]
pub struct ReplicaLog {
    entries: Vec<LogEntry>,
    hashes: Vec<Digest>,
    epochs: BTreeMap<u32, EpochCertificate>,
}

impl Default for ReplicaLog {
    fn default() -> Self {
        Self::new()
    }
}

impl ReplicaLog {
    pub fn new() -> Self {
        let mut epochs = BTreeMap::new();
        epochs.insert(0, EpochCertificate::genesis());
        Self {
            entries: Vec::new(),
            hashes: Vec::new(),
            epochs,
        }
    }

    pub fn len(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn entry(&self, slot: u64) -> Option<&LogEntry> {
        slot.checked_sub(1).and_then(|i| self.entries.get(i as usize))
    }

    pub fn hash_at(&self, slot: u64) -> Digest {
        match slot {
            0 => Digest::ZERO,
            s => self.hashes.get(s as usize - 1).copied().unwrap_or(Digest::ZERO),
        }
    }

    pub fn last_hash(&self) -> Digest {
        self.hash_at(self.len())
    }

    pub fn push(&mut self, entry: LogEntry) -> Digest {
        assert_eq!(entry.slot, self.len() + 1, "log must stay dense");
        let h = chain_log_hash(&self.last_hash(), entry.slot, entry.kind(), &entry.content());
        self.entries.push(entry);
        self.hashes.push(h);
        h
    }

    pub fn truncate(&mut self, len: u64) {
        self.entries.truncate(len as usize);
        self.hashes.truncate(len as usize);
    }

    /// Overwrites an existing slot and rehashes everything after it.
    pub fn replace(&mut self, entry: LogEntry) -> LogEntry {
        let i = entry.slot as usize - 1;
        let old = std::mem::replace(&mut self.entries[i], entry);
        let mut prev = self.hash_at(i as u64);
        for j in i..self.entries.len() {
            let e = &self.entries[j];
            prev = chain_log_hash(&prev, e.slot, e.kind(), &e.content());
            self.hashes[j] = prev;
        }
        old
    }

    pub fn epoch_start(&self, epoch: u32) -> Option<u64> {
        self.epochs.get(&epoch).map(|c| c.slot)
    }

    pub fn latest_epoch(&self) -> u32 {
        *self.epochs.keys().next_back().unwrap()
    }

    pub fn epoch_of_slot(&self, slot: u64) -> u32 {
        self.epochs
            .values()
            .filter(|c| c.slot < slot)
            .map(|c| c.epoch)
            .max()
            .unwrap_or(0)
    }

    pub fn add_epoch(&mut self, cert: EpochCertificate) {
        self.epochs.insert(cert.epoch, cert);
    }

    pub fn epoch_certs(&self) -> Vec<EpochCertificate> {
        self.epochs.values().cloned().collect()
    }

    pub fn set_epochs(&mut self, certs: impl IntoIterator<Item = EpochCertificate>) {
        self.epochs.clear();
        self.epochs.insert(0, EpochCertificate::genesis());
        for c in certs {
            self.epochs.insert(c.epoch, c);
        }
    }
}

/// Checks a log carried in a VIEW-CHANGE: every slot filled in order by a
/// verifying ordering certificate at the right position, or by a no-op with
/// a drop certificate; every epoch certificate valid.
pub fn validate_log(
    entries: &[LogEntry],
    epoch_certs: &[EpochCertificate],
    ring: &KeyRing,
    quorum: usize,
    crypto: &dyn CryptoSuite,
    config: &dyn Fn(u32) -> Option<MemberConfig>,
) -> Result<(), String> {
    let mut starts = BTreeMap::new();
    starts.insert(0u32, 0u64);
    for cert in epoch_certs {
        if !cert.verify(ring, quorum, crypto) {
            return Err(format!("invalid epoch certificate for epoch {}", cert.epoch));
        }
        starts.insert(cert.epoch, cert.slot);
    }
    let mut last = 0;
    for (&e, &s) in &starts {
        if s < last {
            return Err(format!("epoch {e} starts before its predecessor"));
        }
        last = s;
    }
    if last > entries.len() as u64 {
        return Err("epoch starts beyond the end of the log".to_string());
    }
    let mut configs: BTreeMap<u32, Option<MemberConfig>> = BTreeMap::new();
    for (i, entry) in entries.iter().enumerate() {
        let slot = i as u64 + 1;
        if entry.slot != slot {
            return Err(format!("hole or misnumbered entry at slot {slot}"));
        }
        match &entry.body {
            EntryBody::Request(oc) => {
                let (&epoch, &start) = starts.range(..).rev().find(|(_, &s)| s < slot).unwrap();
                if oc.epoch() != epoch || start + oc.seq() != slot {
                    return Err(format!("certificate at slot {slot} belongs elsewhere"));
                }
                let cfg = configs.entry(epoch).or_insert_with(|| config(epoch));
                let Some(cfg) = cfg else {
                    return Err(format!("no keys for epoch {epoch}"));
                };
                if !verify_ordering_certificate(oc, cfg, crypto) {
                    return Err(format!("ordering certificate at slot {slot} does not verify"));
                }
            }
            EntryBody::NoOp(cert) => {
                if cert.slot != slot || cert.recv || !cert.verify(ring, quorum, crypto) {
                    return Err(format!("no-op at slot {slot} lacks a drop certificate"));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aom::{AomHeader, AomPacket, Authenticator, GroupId};
    use crate::crypto::TestCrypto;

    pub(crate) fn request(slot: u64, epoch: u32, seq: u64, body: &[u8]) -> LogEntry {
        LogEntry {
            slot,
            view: ViewId::new(epoch, 0),
            body: EntryBody::Request(OrderingCertificate {
                packet: AomPacket {
                    header: AomHeader {
                        group: GroupId(1),
                        epoch,
                        seq,
                        digest: TestCrypto.digest(body),
                        auth: Authenticator::None,
                    },
                    payload: body.to_vec(),
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

    fn reference_hashes(entries: &[LogEntry]) -> Vec<Digest> {
        // recomputed from scratch with an explicit byte layout
        let mut prev = [0u8; 32];
        let mut out = Vec::new();
        for e in entries {
            let mut buf = Vec::new();
            buf.extend_from_slice(&prev);
            buf.extend_from_slice(&e.slot.to_be_bytes());
            buf.push(if e.kind() == EntryKind::Request { 1 } else { 2 });
            buf.extend_from_slice(&e.content().0);
            prev = Sha256::digest(&buf).into();
            out.push(Digest(prev));
        }
        out
    }

    #[test]
    fn identical_streams_give_identical_hashes() {
        let mut a = ReplicaLog::new();
        let mut b = ReplicaLog::new();
        let entries: Vec<LogEntry> = (1..=5).map(|s| request(s, 0, s, &[s as u8])).collect();
        for e in &entries {
            assert_eq!(a.push(e.clone()), b.push(e.clone()));
        }
        let want = reference_hashes(&entries);
        for s in 1..=5 {
            assert_eq!(a.hash_at(s), want[s as usize - 1]);
        }
    }

    #[test]
    fn replacing_a_slot_rehashes_the_suffix_only() {
        let mut log = ReplicaLog::new();
        for s in 1..=4 {
            log.push(request(s, 0, s, &[s as u8]));
        }
        let before: Vec<Digest> = (1..=4).map(|s| log.hash_at(s)).collect();
        log.replace(noop(2));
        assert_eq!(log.hash_at(1), before[0]);
        for s in 2..=4 {
            assert_ne!(log.hash_at(s), before[s as usize - 1]);
        }
        assert_eq!(log.hash_at(4), reference_hashes(log.entries())[3]);
    }

    #[test]
    fn epoch_boundaries_map_slots() {
        let mut log = ReplicaLog::new();
        log.add_epoch(EpochCertificate {
            epoch: 1,
            slot: 6,
            starts: Vec::new(),
        });
        assert_eq!(log.epoch_of_slot(6), 0);
        assert_eq!(log.epoch_of_slot(7), 1);
        assert_eq!(log.latest_epoch(), 1);
        assert_eq!(log.epoch_start(1), Some(6));
    }

    #[test]
    #[should_panic(expected = "dense")]
    fn holes_are_refused() {
        let mut log = ReplicaLog::new();
        log.push(request(2, 0, 2, b"x"));
    }
}
