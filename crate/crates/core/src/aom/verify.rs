use std::collections::BTreeSet;

use thiserror::Error;

use crate::crypto::{chain_extend, sequencer_sign_payload, CryptoSuite, VerifyingKey};

use super::{AomPacket, Authenticator, MemberConfig, NetworkModel, OrderingCertificate};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OcError {
    #[error("payload does not hash to the header digest")]
    DigestMismatch,
    #[error("certificate belongs to another group")]
    WrongGroup,
    #[error("certificate is for epoch {got}, keys are for epoch {want}")]
    WrongEpoch { got: u32, want: u32 },
    #[error("packet carries no usable authenticator")]
    MissingAuthenticator,
    #[error("MAC slot does not verify")]
    BadMac,
    #[error("sequencer signature does not verify")]
    BadSignature,
    #[error("chain closure does not link back to the packet")]
    BrokenChain,
    #[error("{have} matching confirmations, {need} required")]
    NotConfirmed { have: usize, need: usize },
}

/// Checks the packet's authenticator for the receiver described by `cfg`
/// and, on a Byzantine network, the confirmation quorum.
pub fn check_ordering_certificate(
    oc: &OrderingCertificate,
    cfg: &MemberConfig,
    crypto: &dyn CryptoSuite,
) -> Result<(), OcError> {
    let h = &oc.packet.header;
    let group = &cfg.group;
    if h.group != group.group {
        return Err(OcError::WrongGroup);
    }
    if h.epoch != group.epoch {
        return Err(OcError::WrongEpoch {
            got: h.epoch,
            want: group.epoch,
        });
    }
    if crypto.digest(&oc.packet.payload) != h.digest {
        return Err(OcError::DigestMismatch);
    }
    match &h.auth {
        Authenticator::None => return Err(OcError::MissingAuthenticator),
        Authenticator::Macs(v) => {
            let key = cfg.mac_key.as_ref().ok_or(OcError::MissingAuthenticator)?;
            if v.len() != group.size() {
                return Err(OcError::BadMac);
            }
            let tag = v.slot(cfg.rank as usize).ok_or(OcError::BadMac)?;
            if !crypto.verify_tag(key, h.epoch, h.seq, &h.digest, tag) {
                return Err(OcError::BadMac);
            }
        }
        Authenticator::Signed {
            signature,
            chain_prev,
        } => {
            let key = group.sequencer_key.as_ref().ok_or(OcError::MissingAuthenticator)?;
            let payload = sequencer_sign_payload(h.epoch, h.seq, &h.digest, chain_prev);
            if !crypto.verify(key, &payload, signature) {
                return Err(OcError::BadSignature);
            }
        }
        Authenticator::Chained { chain_prev } => {
            let key = group.sequencer_key.as_ref().ok_or(OcError::MissingAuthenticator)?;
            let last = oc.closure.last().ok_or(OcError::BrokenChain)?;
            let signature = last.signature.as_ref().ok_or(OcError::BrokenChain)?;
            for (i, link) in oc.closure.iter().enumerate() {
                if link.seq != h.seq + 1 + i as u64 {
                    return Err(OcError::BrokenChain);
                }
            }
            let payload = sequencer_sign_payload(h.epoch, last.seq, &last.digest, &last.chain_prev);
            if !crypto.verify(key, &payload, signature) {
                return Err(OcError::BadSignature);
            }
            let mut expected = last.chain_prev;
            for link in oc.closure.iter().rev().skip(1) {
                if chain_extend(&link.chain_prev, &link.digest, link.seq) != expected {
                    return Err(OcError::BrokenChain);
                }
                expected = link.chain_prev;
            }
            if chain_extend(chain_prev, &h.digest, h.seq) != expected {
                return Err(OcError::BrokenChain);
            }
        }
    }
    if group.network == NetworkModel::ByzantineFaulty {
        let mut signers = BTreeSet::new();
        for c in &oc.confirmations {
            let Some(key) = group.receiver_keys.get(c.rank as usize) else {
                continue;
            };
            if c.epoch == h.epoch
                && c.seq == h.seq
                && c.digest == h.digest
                && c.verify(key, crypto)
            {
                signers.insert(c.rank);
            }
        }
        if signers.len() < group.quorum() {
            return Err(OcError::NotConfirmed {
                have: signers.len(),
                need: group.quorum(),
            });
        }
    }
    Ok(())
}

pub fn verify_ordering_certificate(
    oc: &OrderingCertificate,
    cfg: &MemberConfig,
    crypto: &dyn CryptoSuite,
) -> bool {
    check_ordering_certificate(oc, cfg, crypto).is_ok()
}

/// Reverse batch verification of a contiguous run of signature-mode
/// packets. Walks back from each signed packet; a chained packet is
/// accepted only if an unbroken run of links connects it to a later
/// verified signature.
pub fn verify_stream(
    packets: &[AomPacket],
    key: &VerifyingKey,
    crypto: &dyn CryptoSuite,
) -> Vec<bool> {
    let mut ok = vec![false; packets.len()];
    let mut trusted = None;
    for i in (0..packets.len()).rev() {
        let h = &packets[i].header;
        let contiguous = packets
            .get(i + 1)
            .is_some_and(|next| next.header.seq == h.seq + 1);
        let header_ok = match &h.auth {
            Authenticator::Signed {
                signature,
                chain_prev,
            } => crypto.verify(
                key,
                &sequencer_sign_payload(h.epoch, h.seq, &h.digest, chain_prev),
                signature,
            ),
            Authenticator::Chained { chain_prev } => {
                contiguous
                    && trusted.is_some_and(|t| chain_extend(chain_prev, &h.digest, h.seq) == t)
            }
            _ => false,
        };
        trusted = if header_ok {
            h.auth.chain_prev().copied()
        } else {
            None
        };
        ok[i] = header_ok && crypto.digest(&packets[i].payload) == h.digest;
    }
    ok
}
