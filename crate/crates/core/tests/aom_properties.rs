use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;

use neobft::aom::{
    verify_ordering_certificate, AomPacket, AomReceiver, AuthMode, ConfigService, GroupId,
    NetworkModel, ReceiverOutput, ReceiverTimeouts, SequencerCore, HEADER_FIXED_LEN,
};
use neobft::crypto::{CryptoSuite, Digest, SharedCrypto, SigningKey, TestCrypto};
use neobft::sim::NodeId;

const GROUP: GroupId = GroupId(9);

struct Rig {
    seq: SequencerCore,
    receivers: Vec<AomReceiver>,
    cfg: ConfigService,
}

fn rig(n: u32, auth: AuthMode) -> Rig {
    let crypto: SharedCrypto = Arc::new(TestCrypto);
    let keys: Vec<SigningKey> = (0..n).map(|i| crypto.keypair_from_seed(&[i as u8 + 7; 32])).collect();
    let f = (n as usize - 1) / 3;
    let mut cfg = ConfigService::new(GROUP, f, auth, NetworkModel::CrashFaulty, crypto.clone(), 3);
    for i in 0..n {
        cfg.join(NodeId::replica(i), keys[i as usize].verifying_key()).unwrap();
    }
    cfg.seal().unwrap();
    let seq = cfg.sequencer_core().unwrap();
    let receivers = (0..n)
        .map(|i| {
            let mut r = AomReceiver::new(i, crypto.clone(), None, ReceiverTimeouts::default());
            r.install(cfg.member_config(i));
            r.activate(0);
            r
        })
        .collect();
    Rig { seq, receivers, cfg }
}

#[derive(Default)]
struct Seen {
    order: Vec<u64>,
    delivered: BTreeMap<u64, Digest>,
    notified: Vec<u64>,
}

/// Feeds outputs back until no timer is left pending.
fn settle(r: &mut AomReceiver, mut out: Vec<ReceiverOutput>, seen: &mut Seen) {
    let mut rounds = 0;
    while !out.is_empty() {
        rounds += 1;
        assert!(rounds < 10_000, "receiver never went quiet");
        let mut next = Vec::new();
        for o in out {
            match o {
                ReceiverOutput::Deliver(oc) => {
                    seen.order.push(oc.seq());
                    seen.delivered.insert(oc.seq(), *oc.digest());
                }
                ReceiverOutput::Drop(d) => {
                    seen.order.push(d.seq);
                    seen.notified.push(d.seq);
                }
                ReceiverOutput::Arm { timer, .. } => next.extend(r.on_timer(timer)),
                _ => {}
            }
        }
        out = next;
    }
}

fn modes() -> impl Strategy<Value = AuthMode> {
    prop_oneof![
        Just(AuthMode::MacVector),
        (1u32..=8).prop_map(|ratio| AuthMode::Signature { ratio }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    /// Each receiver ends up with every sequence number up to the highest it
    /// saw exactly once, in order, as a delivery or a drop notification;
    /// receivers that deliver the same number agree on what it carried.
    #[test]
    fn gap_free_ordered_delivery(
        n in prop_oneof![Just(4u32), Just(7u32)],
        auth in modes(),
        count in 1usize..40,
        drops in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 40), 7),
        swaps in proptest::collection::vec((0usize..40, 0usize..40), 0..30),
    ) {
        let mut rig = rig(n, auth);
        let mut stamped: Vec<Vec<AomPacket>> = Vec::new();
        for i in 0..count {
            stamped.push(rig.seq.stamp(AomPacket::unstamped(GROUP, vec![i as u8, 0xA5], &TestCrypto)).unwrap());
        }
        // a last packet that always arrives, so trailing losses are detectable
        let last = rig.seq.stamp(AomPacket::unstamped(GROUP, vec![0xFF], &TestCrypto)).unwrap();
        let tail = rig.seq.flush();
        let mut all = Vec::new();
        for (r, recv) in rig.receivers.iter_mut().enumerate() {
            let mut arrival: Vec<AomPacket> = stamped
                .iter()
                .enumerate()
                .filter(|(i, _)| !(drops[r][*i] && r % 2 == *i % 2))
                .map(|(_, copies)| copies[r].clone())
                .collect();
            for &(a, b) in &swaps {
                if a < arrival.len() && b < arrival.len() {
                    arrival.swap(a, b);
                }
            }
            arrival.push(last[r].clone());
            arrival.extend(tail.clone());
            let mut seen = Seen::default();
            for p in arrival {
                let out = recv.on_packet(p);
                settle(recv, out, &mut seen);
            }
            all.push(seen);
        }
        for seen in &all {
            let expected: Vec<u64> = (1..=count as u64 + 1).collect();
            prop_assert_eq!(&seen.order, &expected);
        }
        for a in &all {
            for b in &all {
                for (s, d) in &a.delivered {
                    if let Some(e) = b.delivered.get(s) {
                        prop_assert_eq!(d, e);
                    }
                }
            }
        }
    }

    /// Fixed header offsets survive a round trip for any payload.
    #[test]
    fn packet_layout_round_trip(
        n in 4u32..=10,
        auth in modes(),
        payload in proptest::collection::vec(any::<u8>(), 0..200),
        skip in 0usize..6,
    ) {
        let mut rig = rig(n, auth);
        for i in 0..skip {
            rig.seq.stamp(AomPacket::unstamped(GROUP, vec![i as u8], &TestCrypto)).unwrap();
        }
        let pkt = rig.seq.stamp(AomPacket::unstamped(GROUP, payload.clone(), &TestCrypto)).unwrap().remove(0);
        let bytes = pkt.encode();
        prop_assert_eq!(&bytes[0..4], &GROUP.0.to_be_bytes());
        prop_assert_eq!(&bytes[4..8], &0u32.to_be_bytes());
        prop_assert_eq!(&bytes[8..16], &(skip as u64 + 1).to_be_bytes());
        prop_assert_eq!(&bytes[16..48], &TestCrypto.digest(&payload).0[..]);
        prop_assert_eq!(bytes[48], pkt.header.auth.kind());
        prop_assert!(bytes.ends_with(&payload));
        let auth_len = bytes.len() - HEADER_FIXED_LEN - payload.len();
        match auth {
            AuthMode::MacVector => prop_assert_eq!(auth_len, 16 * n as usize),
            AuthMode::Signature { .. } if bytes[48] == 2 => prop_assert_eq!(auth_len, 64 + 32),
            AuthMode::Signature { .. } => prop_assert_eq!(auth_len, 32),
        }
        prop_assert_eq!(AomPacket::decode(&bytes, n as usize).unwrap(), pkt);
    }

    /// An ordering certificate verifies the same way for every holder.
    #[test]
    fn certificates_are_transferable(n in prop_oneof![Just(4u32), Just(7u32)], count in 1usize..12) {
        let mut rig = rig(n, AuthMode::MacVector);
        let group = rig.cfg.group_config();
        for i in 0..count {
            let copies = rig.seq.stamp(AomPacket::unstamped(GROUP, vec![i as u8], &TestCrypto)).unwrap();
            let mut certs = Vec::new();
            for (r, recv) in rig.receivers.iter_mut().enumerate() {
                for o in recv.on_packet(copies[r].clone()) {
                    if let ReceiverOutput::Deliver(oc) = o {
                        certs.push((r, oc));
                    }
                }
            }
            prop_assert_eq!(certs.len(), n as usize);
            for (_, oc) in &certs {
                for holder in 0..n {
                    let cfg = rig.cfg.member_config(holder);
                    prop_assert!(verify_ordering_certificate(oc, &cfg, &TestCrypto));
                }
                prop_assert_eq!(oc.epoch(), group.epoch);
            }
        }
    }
}
