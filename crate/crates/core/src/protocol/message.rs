//! Protocol messages and their canonical encodings.
//!
//! Each signed message signs `bytes(tag) || fields`, with fields written in
//! declaration order by [`Encoder`]: integers big-endian, byte strings and
//! lists length-prefixed, digests and signatures raw. QUERY and QUERY-REPLY
//! are unsigned; GAP-RECV is authenticated by the ordering certificate it
//! carries.

use std::collections::BTreeSet;

use crate::aom::OrderingCertificate;
use crate::codec::{DecodeError, Decoder, Encoder};
use crate::crypto::{CryptoSuite, Digest, Signature, SigningKey, SIGNATURE_LEN};

use super::log::LogEntry;
use super::{KeyRing, ViewId};

fn view(enc: &mut Encoder, v: ViewId) {
    enc.u32(v.epoch).u32(v.leader_num);
}

fn sign_with(key: &SigningKey, crypto: &dyn CryptoSuite, bytes: Vec<u8>) -> Signature {
    crypto.sign(key, &bytes)
}

fn check(ring: &KeyRing, replica: u32, crypto: &dyn CryptoSuite, bytes: &[u8], sig: &Signature) -> bool {
    ring.replica(replica)
        .is_some_and(|key| crypto.verify(key, bytes, sig))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub client: u32,
    pub request_id: u64,
    pub op: Vec<u8>,
    pub signature: Signature,
}

impl Request {
    pub fn signing_bytes(client: u32, request_id: u64, op: &[u8]) -> Vec<u8> {
        let mut enc = Encoder::with_tag(b"request");
        enc.u32(client).u64(request_id).bytes(op);
        enc.finish()
    }

    pub fn new(client: u32, request_id: u64, op: Vec<u8>, key: &SigningKey, crypto: &dyn CryptoSuite) -> Self {
        let signature = sign_with(key, crypto, Self::signing_bytes(client, request_id, &op));
        Self {
            client,
            request_id,
            op,
            signature,
        }
    }

    pub fn verify(&self, ring: &KeyRing, crypto: &dyn CryptoSuite) -> bool {
        ring.client(self.client).is_some_and(|key| {
            crypto.verify(
                key,
                &Self::signing_bytes(self.client, self.request_id, &self.op),
                &self.signature,
            )
        })
    }

    /// The AOM payload form.
    pub fn encode(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.u32(self.client)
            .u64(self.request_id)
            .bytes(&self.op)
            .raw(self.signature.as_bytes());
        enc.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        let client = dec.u32()?;
        let request_id = dec.u64()?;
        let op = dec.bytes()?;
        let signature = Signature(dec.array::<SIGNATURE_LEN>()?);
        dec.finish()?;
        Ok(Self {
            client,
            request_id,
            op,
            signature,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub view: ViewId,
    pub replica: u32,
    pub slot: u64,
    pub log_hash: Digest,
    pub client: u32,
    pub request_id: u64,
    pub result: Vec<u8>,
    pub signature: Signature,
}

impl Reply {
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::with_tag(b"reply");
        view(&mut enc, self.view);
        enc.u32(self.replica)
            .u64(self.slot)
            .raw(self.log_hash.as_bytes())
            .u32(self.client)
            .u64(self.request_id)
            .bytes(&self.result);
        enc.finish()
    }

    pub fn sign(mut self, key: &SigningKey, crypto: &dyn CryptoSuite) -> Self {
        self.signature = sign_with(key, crypto, self.signing_bytes());
        self
    }

    pub fn verify(&self, ring: &KeyRing, crypto: &dyn CryptoSuite) -> bool {
        check(ring, self.replica, crypto, &self.signing_bytes(), &self.signature)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub view: ViewId,
    pub replica: u32,
    pub slot: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryReply {
    pub view: ViewId,
    pub replica: u32,
    pub slot: u64,
    pub oc: OrderingCertificate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapFind {
    pub view: ViewId,
    pub replica: u32,
    pub slot: u64,
    pub signature: Signature,
}

impl GapFind {
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::with_tag(b"gap-find");
        view(&mut enc, self.view);
        enc.u32(self.replica).u64(self.slot);
        enc.finish()
    }

    pub fn sign(mut self, key: &SigningKey, crypto: &dyn CryptoSuite) -> Self {
        self.signature = sign_with(key, crypto, self.signing_bytes());
        self
    }

    pub fn verify(&self, ring: &KeyRing, crypto: &dyn CryptoSuite) -> bool {
        check(ring, self.replica, crypto, &self.signing_bytes(), &self.signature)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapRecv {
    pub view: ViewId,
    pub replica: u32,
    pub slot: u64,
    pub oc: OrderingCertificate,
}

impl GapRecv {
    fn encode(&self, enc: &mut Encoder) {
        view(enc, self.view);
        enc.u32(self.replica).u64(self.slot);
        self.oc.encode(enc);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapDrop {
    pub view: ViewId,
    pub replica: u32,
    pub slot: u64,
    pub signature: Signature,
}

impl GapDrop {
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::with_tag(b"gap-drop");
        view(&mut enc, self.view);
        enc.u32(self.replica).u64(self.slot);
        enc.finish()
    }

    pub fn sign(mut self, key: &SigningKey, crypto: &dyn CryptoSuite) -> Self {
        self.signature = sign_with(key, crypto, self.signing_bytes());
        self
    }

    pub fn verify(&self, ring: &KeyRing, crypto: &dyn CryptoSuite) -> bool {
        check(ring, self.replica, crypto, &self.signing_bytes(), &self.signature)
    }

    fn encode(&self, enc: &mut Encoder) {
        view(enc, self.view);
        enc.u32(self.replica).u64(self.slot).raw(self.signature.as_bytes());
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GapProof {
    Recv(Box<GapRecv>),
    Drop(Vec<GapDrop>),
}

impl GapProof {
    pub fn is_recv(&self) -> bool {
        matches!(self, GapProof::Recv(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapDecision {
    pub view: ViewId,
    pub replica: u32,
    pub slot: u64,
    pub proof: GapProof,
    pub signature: Signature,
}

impl GapDecision {
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::with_tag(b"gap-decision");
        view(&mut enc, self.view);
        enc.u32(self.replica).u64(self.slot);
        match &self.proof {
            GapProof::Recv(r) => {
                enc.u8(1);
                r.encode(&mut enc);
            }
            GapProof::Drop(drops) => {
                enc.u8(0);
                enc.seq(drops, |e, d| d.encode(e));
            }
        }
        enc.finish()
    }

    pub fn sign(mut self, key: &SigningKey, crypto: &dyn CryptoSuite) -> Self {
        self.signature = sign_with(key, crypto, self.signing_bytes());
        self
    }

    /// Signature and, for a drop decision, `quorum` distinct valid drop
    /// attestations for this view and slot. The OC of a recv decision is
    /// checked by the caller, which holds the group keys.
    pub fn verify(&self, ring: &KeyRing, quorum: usize, crypto: &dyn CryptoSuite) -> bool {
        if !check(ring, self.replica, crypto, &self.signing_bytes(), &self.signature) {
            return false;
        }
        match &self.proof {
            GapProof::Recv(r) => r.view == self.view && r.slot == self.slot,
            GapProof::Drop(drops) => {
                let mut signers = BTreeSet::new();
                for d in drops {
                    if d.view == self.view && d.slot == self.slot && d.verify(ring, crypto) {
                        signers.insert(d.replica);
                    }
                }
                signers.len() >= quorum
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum VotePhase {
    Prepare,
    Commit,
}

/// GAP-PREPARE or GAP-COMMIT.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapVote {
    pub phase: VotePhase,
    pub view: ViewId,
    pub replica: u32,
    pub slot: u64,
    pub recv: bool,
    pub signature: Signature,
}

impl GapVote {
    pub fn signing_bytes(&self) -> Vec<u8> {
        let tag: &[u8] = match self.phase {
            VotePhase::Prepare => b"gap-prepare",
            VotePhase::Commit => b"gap-commit",
        };
        let mut enc = Encoder::with_tag(tag);
        view(&mut enc, self.view);
        enc.u32(self.replica).u64(self.slot).bool(self.recv);
        enc.finish()
    }

    pub fn sign(mut self, key: &SigningKey, crypto: &dyn CryptoSuite) -> Self {
        self.signature = sign_with(key, crypto, self.signing_bytes());
        self
    }

    pub fn verify(&self, ring: &KeyRing, crypto: &dyn CryptoSuite) -> bool {
        check(ring, self.replica, crypto, &self.signing_bytes(), &self.signature)
    }

    fn encode(&self, enc: &mut Encoder) {
        enc.u8(match self.phase {
            VotePhase::Prepare => 0,
            VotePhase::Commit => 1,
        });
        view(enc, self.view);
        enc.u32(self.replica)
            .u64(self.slot)
            .bool(self.recv)
            .raw(self.signature.as_bytes());
    }
}

/// 2f+1 matching GAP-COMMITs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapCertificate {
    pub view: ViewId,
    pub slot: u64,
    pub recv: bool,
    pub commits: Vec<GapVote>,
}

impl GapCertificate {
    pub fn signers(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.commits.iter().map(|c| c.replica).collect();
        set.into_iter().collect()
    }

    pub fn verify(&self, ring: &KeyRing, quorum: usize, crypto: &dyn CryptoSuite) -> bool {
        let mut signers = BTreeSet::new();
        for c in &self.commits {
            if c.phase == VotePhase::Commit
                && c.view == self.view
                && c.slot == self.slot
                && c.recv == self.recv
                && c.verify(ring, crypto)
            {
                signers.insert(c.replica);
            }
        }
        signers.len() >= quorum
    }

    pub fn encode(&self, enc: &mut Encoder) {
        view(enc, self.view);
        enc.u64(self.slot).bool(self.recv);
        enc.seq(&self.commits, |e, c| c.encode(e));
    }
}

/// A completed gap agreement forwarded to a replica that fell behind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapCertified {
    pub cert: GapCertificate,
    /// The recovered request when the decision was recv.
    pub oc: Option<OrderingCertificate>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochStart {
    pub epoch: u32,
    pub replica: u32,
    pub slot: u64,
    pub signature: Signature,
}

impl EpochStart {
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::with_tag(b"epoch-start");
        enc.u32(self.epoch).u32(self.replica).u64(self.slot);
        enc.finish()
    }

    pub fn sign(mut self, key: &SigningKey, crypto: &dyn CryptoSuite) -> Self {
        self.signature = sign_with(key, crypto, self.signing_bytes());
        self
    }

    pub fn verify(&self, ring: &KeyRing, crypto: &dyn CryptoSuite) -> bool {
        check(ring, self.replica, crypto, &self.signing_bytes(), &self.signature)
    }

    fn encode(&self, enc: &mut Encoder) {
        enc.u32(self.epoch)
            .u32(self.replica)
            .u64(self.slot)
            .raw(self.signature.as_bytes());
    }
}

/// 2f+1 matching EPOCH-STARTs. Epoch 0 starts at slot 0 by configuration and
/// needs none.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochCertificate {
    pub epoch: u32,
    pub slot: u64,
    pub starts: Vec<EpochStart>,
}

impl EpochCertificate {
    pub fn genesis() -> Self {
        Self {
            epoch: 0,
            slot: 0,
            starts: Vec::new(),
        }
    }

    pub fn verify(&self, ring: &KeyRing, quorum: usize, crypto: &dyn CryptoSuite) -> bool {
        if self.epoch == 0 {
            return self.slot == 0;
        }
        let mut signers = BTreeSet::new();
        for s in &self.starts {
            if s.epoch == self.epoch && s.slot == self.slot && s.verify(ring, crypto) {
                signers.insert(s.replica);
            }
        }
        signers.len() >= quorum
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.u32(self.epoch).u64(self.slot);
        enc.seq(&self.starts, |e, s| s.encode(e));
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewChange {
    /// The sender's current view.
    pub view: ViewId,
    pub replica: u32,
    pub new_view: ViewId,
    pub epoch_certs: Vec<EpochCertificate>,
    pub log: Vec<LogEntry>,
    pub signature: Signature,
}

impl ViewChange {
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::with_tag(b"view-change");
        view(&mut enc, self.view);
        enc.u32(self.replica);
        view(&mut enc, self.new_view);
        enc.seq(&self.epoch_certs, |e, c| c.encode(e));
        enc.seq(&self.log, |e, entry| entry.encode(e));
        enc.finish()
    }

    pub fn sign(mut self, key: &SigningKey, crypto: &dyn CryptoSuite) -> Self {
        self.signature = sign_with(key, crypto, self.signing_bytes());
        self
    }

    pub fn verify_signature(&self, ring: &KeyRing, crypto: &dyn CryptoSuite) -> bool {
        check(ring, self.replica, crypto, &self.signing_bytes(), &self.signature)
    }

    pub fn latest_epoch(&self) -> u32 {
        self.epoch_certs.iter().map(|c| c.epoch).max().unwrap_or(0)
    }

    pub fn epoch_start(&self, epoch: u32) -> Option<u64> {
        if epoch == 0 {
            return Some(0);
        }
        self.epoch_certs
            .iter()
            .find(|c| c.epoch == epoch)
            .map(|c| c.slot)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewStart {
    pub view: ViewId,
    pub replica: u32,
    pub changes: Vec<ViewChange>,
    pub signature: Signature,
}

impl ViewStart {
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::with_tag(b"view-start");
        view(&mut enc, self.view);
        enc.u32(self.replica);
        enc.seq(&self.changes, |e, vc| {
            e.bytes(&vc.signing_bytes()).raw(vc.signature.as_bytes());
        });
        enc.finish()
    }

    pub fn sign(mut self, key: &SigningKey, crypto: &dyn CryptoSuite) -> Self {
        self.signature = sign_with(key, crypto, self.signing_bytes());
        self
    }

    pub fn verify_signature(&self, ring: &KeyRing, crypto: &dyn CryptoSuite) -> bool {
        check(ring, self.replica, crypto, &self.signing_bytes(), &self.signature)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sync {
    pub view: ViewId,
    pub replica: u32,
    pub slot: u64,
    pub drops: Vec<GapCertificate>,
    pub signature: Signature,
}

impl Sync {
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::with_tag(b"sync");
        view(&mut enc, self.view);
        enc.u32(self.replica).u64(self.slot);
        enc.seq(&self.drops, |e, c| c.encode(e));
        enc.finish()
    }

    pub fn sign(mut self, key: &SigningKey, crypto: &dyn CryptoSuite) -> Self {
        self.signature = sign_with(key, crypto, self.signing_bytes());
        self
    }

    pub fn verify(&self, ring: &KeyRing, crypto: &dyn CryptoSuite) -> bool {
        check(ring, self.replica, crypto, &self.signing_bytes(), &self.signature)
    }
}

#[derive(Debug, Clone)]
pub enum ProtocolMessage {
    Request(Request),
    Reply(Reply),
    Query(Query),
    QueryReply(Box<QueryReply>),
    GapFind(GapFind),
    GapRecv(Box<GapRecv>),
    GapDrop(GapDrop),
    GapDecision(Box<GapDecision>),
    GapPrepare(GapVote),
    GapCommit(GapVote),
    GapCertified(Box<GapCertified>),
    ViewChange(Box<ViewChange>),
    ViewStart(Box<ViewStart>),
    EpochStart(EpochStart),
    Sync(Sync),
}

impl ProtocolMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ProtocolMessage::Request(_) => "request",
            ProtocolMessage::Reply(_) => "reply",
            ProtocolMessage::Query(_) => "query",
            ProtocolMessage::QueryReply(_) => "query-reply",
            ProtocolMessage::GapFind(_) => "gap-find",
            ProtocolMessage::GapRecv(_) => "gap-recv",
            ProtocolMessage::GapDrop(_) => "gap-drop",
            ProtocolMessage::GapDecision(_) => "gap-decision",
            ProtocolMessage::GapPrepare(_) => "gap-prepare",
            ProtocolMessage::GapCommit(_) => "gap-commit",
            ProtocolMessage::GapCertified(_) => "gap-certified",
            ProtocolMessage::ViewChange(_) => "view-change",
            ProtocolMessage::ViewStart(_) => "view-start",
            ProtocolMessage::EpochStart(_) => "epoch-start",
            ProtocolMessage::Sync(_) => "sync",
        }
    }

    pub fn summary(&self) -> String {
        match self {
            ProtocolMessage::Request(r) => {
                format!("request client={} id={}", r.client, r.request_id)
            }
            ProtocolMessage::Reply(r) => format!(
                "reply view={} replica={} slot={} id={}",
                r.view, r.replica, r.slot, r.request_id
            ),
            ProtocolMessage::Query(q) => format!("query view={} slot={}", q.view, q.slot),
            ProtocolMessage::QueryReply(q) => {
                format!("query-reply view={} slot={}", q.view, q.slot)
            }
            ProtocolMessage::GapFind(g) => format!("gap-find view={} slot={}", g.view, g.slot),
            ProtocolMessage::GapRecv(g) => format!(
                "gap-recv view={} replica={} slot={}",
                g.view, g.replica, g.slot
            ),
            ProtocolMessage::GapDrop(g) => format!(
                "gap-drop view={} replica={} slot={}",
                g.view, g.replica, g.slot
            ),
            ProtocolMessage::GapDecision(g) => format!(
                "gap-decision view={} slot={} {}",
                g.view,
                g.slot,
                if g.proof.is_recv() { "recv" } else { "drop" }
            ),
            ProtocolMessage::GapPrepare(v) | ProtocolMessage::GapCommit(v) => format!(
                "{} view={} replica={} slot={} {}",
                if v.phase == VotePhase::Prepare { "gap-prepare" } else { "gap-commit" },
                v.view,
                v.replica,
                v.slot,
                if v.recv { "recv" } else { "drop" }
            ),
            ProtocolMessage::GapCertified(g) => format!(
                "gap-certified view={} slot={} {}",
                g.cert.view,
                g.cert.slot,
                if g.cert.recv { "recv" } else { "drop" }
            ),
            ProtocolMessage::ViewChange(v) => format!(
                "view-change replica={} {} -> {} log_len={}",
                v.replica,
                v.view,
                v.new_view,
                v.log.len()
            ),
            ProtocolMessage::ViewStart(v) => {
                format!("view-start view={} from={}", v.view, v.replica)
            }
            ProtocolMessage::EpochStart(e) => format!(
                "epoch-start epoch={} replica={} slot={}",
                e.epoch, e.replica, e.slot
            ),
            ProtocolMessage::Sync(s) => format!(
                "sync view={} replica={} slot={} drops={}",
                s.view,
                s.replica,
                s.slot,
                s.drops.len()
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::TestCrypto;
    use crate::protocol::Identities;

    fn ids() -> Identities {
        Identities::generate(3, 4, 2, &TestCrypto)
    }

    #[test]
    fn request_round_trips_and_binds_the_client() {
        let ids = ids();
        let r = Request::new(1, 7, b"PUT a 1".to_vec(), &ids.clients[1], &TestCrypto);
        assert!(r.verify(&ids.ring, &TestCrypto));
        let back = Request::decode(&r.encode()).unwrap();
        assert_eq!(back, r);
        let mut other = r.clone();
        other.client = 0;
        assert!(!other.verify(&ids.ring, &TestCrypto));
        assert!(Request::decode(&r.encode()[..10]).is_err());
    }

    #[test]
    fn vote_phases_are_not_interchangeable() {
        let ids = ids();
        let prepare = GapVote {
            phase: VotePhase::Prepare,
            view: ViewId::new(0, 0),
            replica: 2,
            slot: 5,
            recv: false,
            signature: Signature::ZERO,
        }
        .sign(&ids.replicas[2], &TestCrypto);
        assert!(prepare.verify(&ids.ring, &TestCrypto));
        let mut as_commit = prepare.clone();
        as_commit.phase = VotePhase::Commit;
        assert!(!as_commit.verify(&ids.ring, &TestCrypto));
    }

    fn commit(ids: &Identities, replica: u32, slot: u64, recv: bool) -> GapVote {
        GapVote {
            phase: VotePhase::Commit,
            view: ViewId::new(0, 0),
            replica,
            slot,
            recv,
            signature: Signature::ZERO,
        }
        .sign(&ids.replicas[replica as usize], &TestCrypto)
    }

    #[test]
    fn gap_certificate_needs_distinct_matching_signers() {
        let ids = ids();
        let mut cert = GapCertificate {
            view: ViewId::new(0, 0),
            slot: 4,
            recv: false,
            commits: vec![commit(&ids, 0, 4, false), commit(&ids, 1, 4, false)],
        };
        assert!(!cert.verify(&ids.ring, 3, &TestCrypto));
        cert.commits.push(commit(&ids, 1, 4, false));
        assert!(!cert.verify(&ids.ring, 3, &TestCrypto), "duplicate signer");
        cert.commits.push(commit(&ids, 2, 5, false));
        assert!(!cert.verify(&ids.ring, 3, &TestCrypto), "wrong slot");
        cert.commits.push(commit(&ids, 3, 4, true));
        assert!(!cert.verify(&ids.ring, 3, &TestCrypto), "wrong decision");
        cert.commits.push(commit(&ids, 2, 4, false));
        assert!(cert.verify(&ids.ring, 3, &TestCrypto));
        assert_eq!(cert.signers(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn epoch_certificate_checks_slot_agreement() {
        let ids = ids();
        let start = |r: u32, slot: u64| {
            EpochStart {
                epoch: 1,
                replica: r,
                slot,
                signature: Signature::ZERO,
            }
            .sign(&ids.replicas[r as usize], &TestCrypto)
        };
        let good = EpochCertificate {
            epoch: 1,
            slot: 9,
            starts: vec![start(0, 9), start(1, 9), start(3, 9)],
        };
        assert!(good.verify(&ids.ring, 3, &TestCrypto));
        let split = EpochCertificate {
            epoch: 1,
            slot: 9,
            starts: vec![start(0, 9), start(1, 9), start(3, 8)],
        };
        assert!(!split.verify(&ids.ring, 3, &TestCrypto));
        assert!(EpochCertificate::genesis().verify(&ids.ring, 3, &TestCrypto));
    }
}
