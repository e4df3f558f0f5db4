//! Software emulation of authenticated ordered multicast (AOM).
//!
//! A sender fills in the group and digest; the sequencer stamps epoch and
//! sequence number and attaches an authenticator; receivers authenticate,
//! reorder and deliver ordering certificates or drop notifications.

mod config;
mod receiver;
mod sequencer;
mod verify;

use serde::{Deserialize, Serialize};

use crate::codec::{DecodeError, Decoder, Encoder};
use crate::crypto::{ChainHash, Digest, MacTag, MacVector, Signature, SigningKey, VerifyingKey};
use crate::crypto::{CryptoSuite, SIGNATURE_LEN, TAG_LEN};

pub use config::{ConfigService, GroupConfig, JoinOutcome, MemberConfig};
pub use receiver::{AomReceiver, ReceiverOutput, ReceiverStats, ReceiverTimeouts};
pub use sequencer::{SequencerCore, SequencerNode, StampError};
pub use verify::{verify_ordering_certificate, verify_stream, OcError};

/// Hardware limit on MAC-vector groups.
pub const MAX_MAC_GROUP: usize = 72;

pub const HEADER_FIXED_LEN: usize = 4 + 4 + 8 + 32 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuthMode {
    MacVector,
    /// Public-key mode: one signature every `ratio` packets, chain hashes on
    /// the rest.
    Signature { ratio: u32 },
}

impl AuthMode {
    pub fn name(self) -> &'static str {
        match self {
            AuthMode::MacVector => "mac-vector",
            AuthMode::Signature { .. } => "signature",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkModel {
    CrashFaulty,
    ByzantineFaulty,
}

impl NetworkModel {
    pub fn name(self) -> &'static str {
        match self {
            NetworkModel::CrashFaulty => "crash",
            NetworkModel::ByzantineFaulty => "byzantine",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Authenticator {
    /// Not yet stamped.
    None,
    Macs(MacVector),
    Signed {
        signature: Signature,
        chain_prev: ChainHash,
    },
    Chained {
        chain_prev: ChainHash,
    },
}

impl Authenticator {
    pub fn kind(&self) -> u8 {
        match self {
            Authenticator::None => 0,
            Authenticator::Macs(_) => 1,
            Authenticator::Signed { .. } => 2,
            Authenticator::Chained { .. } => 3,
        }
    }

    pub fn chain_prev(&self) -> Option<&ChainHash> {
        match self {
            Authenticator::Signed { chain_prev, .. } | Authenticator::Chained { chain_prev } => {
                Some(chain_prev)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AomHeader {
    pub group: GroupId,
    pub epoch: u32,
    pub seq: u64,
    pub digest: Digest,
    pub auth: Authenticator,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AomPacket {
    pub header: AomHeader,
    pub payload: Vec<u8>,
}

impl AomPacket {
    /// What a sender hands to the network: group and digest filled, the rest
    /// left for the sequencer.
    pub fn unstamped(group: GroupId, payload: Vec<u8>, crypto: &dyn CryptoSuite) -> Self {
        Self {
            header: AomHeader {
                group,
                epoch: 0,
                seq: 0,
                digest: crypto.digest(&payload),
                auth: Authenticator::None,
            },
            payload,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let h = &self.header;
        let mut enc = Encoder::new();
        enc.u32(h.group.0)
            .u32(h.epoch)
            .u64(h.seq)
            .raw(h.digest.as_bytes())
            .u8(h.auth.kind());
        match &h.auth {
            Authenticator::None => {}
            Authenticator::Macs(v) => {
                for tag in &v.0 {
                    enc.raw(tag.as_bytes());
                }
            }
            Authenticator::Signed {
                signature,
                chain_prev,
            } => {
                enc.raw(signature.as_bytes()).raw(chain_prev.as_bytes());
            }
            Authenticator::Chained { chain_prev } => {
                enc.raw(chain_prev.as_bytes());
            }
        }
        enc.raw(&self.payload);
        enc.finish()
    }

    /// `group_size` is needed to find the end of a MAC vector.
    pub fn decode(bytes: &[u8], group_size: usize) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        let group = GroupId(dec.u32()?);
        let epoch = dec.u32()?;
        let seq = dec.u64()?;
        let digest = Digest(dec.array()?);
        let auth = match dec.u8()? {
            0 => Authenticator::None,
            1 => {
                let mut tags = Vec::with_capacity(group_size);
                for _ in 0..group_size {
                    tags.push(MacTag(dec.array::<TAG_LEN>()?));
                }
                Authenticator::Macs(MacVector(tags))
            }
            2 => Authenticator::Signed {
                signature: Signature(dec.array::<SIGNATURE_LEN>()?),
                chain_prev: ChainHash(dec.array()?),
            },
            3 => Authenticator::Chained {
                chain_prev: ChainHash(dec.array()?),
            },
            tag => {
                return Err(DecodeError::UnknownTag {
                    what: "authenticator",
                    tag,
                })
            }
        };
        let payload = dec.remaining().to_vec();
        Ok(Self {
            header: AomHeader {
                group,
                epoch,
                seq,
                digest,
                auth,
            },
            payload,
        })
    }

    pub fn link(&self) -> Option<ChainLink> {
        let h = &self.header;
        Some(ChainLink {
            seq: h.seq,
            digest: h.digest,
            chain_prev: *h.auth.chain_prev()?,
            signature: match &h.auth {
                Authenticator::Signed { signature, .. } => Some(*signature),
                _ => None,
            },
        })
    }
}

/// Header fields of a later packet in the same chain segment. The last link
/// of a closure carries the sequencer signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainLink {
    pub seq: u64,
    pub digest: Digest,
    pub chain_prev: ChainHash,
    pub signature: Option<Signature>,
}

impl ChainLink {
    pub fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.seq)
            .raw(self.digest.as_bytes())
            .raw(self.chain_prev.as_bytes());
        match &self.signature {
            Some(sig) => enc.u8(1).raw(sig.as_bytes()),
            None => enc.u8(0),
        };
    }
}

/// Signed receipt broadcast by receivers in Byzantine-network mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderConfirm {
    pub epoch: u32,
    pub seq: u64,
    pub digest: Digest,
    pub rank: u32,
    pub signature: Signature,
}

impl OrderConfirm {
    pub fn signing_bytes(epoch: u32, seq: u64, digest: &Digest, rank: u32) -> Vec<u8> {
        let mut enc = Encoder::with_tag(b"order-confirm");
        enc.u32(epoch).u64(seq).raw(digest.as_bytes()).u32(rank);
        enc.finish()
    }

    pub fn new(
        epoch: u32,
        seq: u64,
        digest: Digest,
        rank: u32,
        key: &SigningKey,
        crypto: &dyn CryptoSuite,
    ) -> Self {
        let signature = crypto.sign(key, &Self::signing_bytes(epoch, seq, &digest, rank));
        Self {
            epoch,
            seq,
            digest,
            rank,
            signature,
        }
    }

    pub fn verify(&self, key: &VerifyingKey, crypto: &dyn CryptoSuite) -> bool {
        crypto.verify(
            key,
            &Self::signing_bytes(self.epoch, self.seq, &self.digest, self.rank),
            &self.signature,
        )
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.u32(self.epoch)
            .u64(self.seq)
            .raw(self.digest.as_bytes())
            .u32(self.rank)
            .raw(self.signature.as_bytes());
    }
}

/// Transferable proof that `packet` was sequenced at its `(epoch, seq)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderingCertificate {
    pub packet: AomPacket,
    /// Signature mode only: links from `seq + 1` up to the next signed packet.
    pub closure: Vec<ChainLink>,
    /// Byzantine-network mode only.
    pub confirmations: Vec<OrderConfirm>,
}

impl OrderingCertificate {
    pub fn epoch(&self) -> u32 {
        self.packet.header.epoch
    }

    pub fn seq(&self) -> u64 {
        self.packet.header.seq
    }

    pub fn digest(&self) -> &Digest {
        &self.packet.header.digest
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.bytes(&self.packet.encode());
        enc.seq(&self.closure, |e, l| l.encode(e));
        enc.seq(&self.confirmations, |e, c| c.encode(e));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropNotification {
    pub group: GroupId,
    pub epoch: u32,
    pub seq: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{RealCrypto, TestCrypto};

    fn stamped(auth: Authenticator) -> AomPacket {
        AomPacket {
            header: AomHeader {
                group: GroupId(0x0a0b0c0d),
                epoch: 2,
                seq: 0x0102,
                digest: RealCrypto.digest(b"op"),
                auth,
            },
            payload: b"op".to_vec(),
        }
    }

    #[test]
    fn layout_is_bit_exact() {
        let pkt = stamped(Authenticator::Chained {
            chain_prev: ChainHash([7; 32]),
        });
        let bytes = pkt.encode();
        assert_eq!(&bytes[0..4], &[0x0a, 0x0b, 0x0c, 0x0d]);
        assert_eq!(&bytes[4..8], &[0, 0, 0, 2]);
        assert_eq!(&bytes[8..16], &[0, 0, 0, 0, 0, 0, 1, 2]);
        assert_eq!(&bytes[16..48], RealCrypto.digest(b"op").as_bytes());
        assert_eq!(bytes[48], 3);
        assert_eq!(&bytes[49..81], &[7; 32]);
        assert_eq!(&bytes[81..], b"op");
    }

    #[test]
    fn authenticator_sizes_follow_mode() {
        let macs = stamped(Authenticator::Macs(MacVector(vec![MacTag([1; 16]); 5])));
        assert_eq!(macs.encode().len(), HEADER_FIXED_LEN + 16 * 5 + 2);
        let signed = stamped(Authenticator::Signed {
            signature: Signature([2; 64]),
            chain_prev: ChainHash([3; 32]),
        });
        assert_eq!(signed.encode().len(), HEADER_FIXED_LEN + 64 + 32 + 2);
        let bare = stamped(Authenticator::None);
        assert_eq!(bare.encode().len(), HEADER_FIXED_LEN + 2);
    }

    #[test]
    fn every_form_round_trips() {
        for auth in [
            Authenticator::None,
            Authenticator::Macs(MacVector(vec![MacTag([9; 16]); 4])),
            Authenticator::Signed {
                signature: Signature([4; 64]),
                chain_prev: ChainHash([5; 32]),
            },
            Authenticator::Chained {
                chain_prev: ChainHash([6; 32]),
            },
        ] {
            let pkt = stamped(auth);
            assert_eq!(AomPacket::decode(&pkt.encode(), 4), Ok(pkt));
        }
    }

    #[test]
    fn unknown_authenticator_kind_is_rejected() {
        let mut bytes = stamped(Authenticator::None).encode();
        bytes[48] = 9;
        assert!(matches!(
            AomPacket::decode(&bytes, 4),
            Err(DecodeError::UnknownTag { tag: 9, .. })
        ));
        assert!(AomPacket::decode(&bytes[..20], 4).is_err());
    }

    #[test]
    fn order_confirm_binds_every_field() {
        let suite = TestCrypto;
        let key = suite.keypair_from_seed(&[1; 32]);
        let c = OrderConfirm::new(1, 5, suite.digest(b"x"), 2, &key, &suite);
        assert!(c.verify(&key.verifying_key(), &suite));
        let mut forged = c.clone();
        forged.rank = 3;
        assert!(!forged.verify(&key.verifying_key(), &suite));
        forged = c.clone();
        forged.seq = 6;
        assert!(!forged.verify(&key.verifying_key(), &suite));
    }
}
