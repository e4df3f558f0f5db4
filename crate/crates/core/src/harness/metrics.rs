use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::crypto::{CryptoSuite, MacKey, MacTag, SharedCrypto, Signature, SigningKey, VerifyingKey};
use crate::sim::{NodeId, Role};
use crate::trace::{Observation, RecordKind, RunTrace};

/// Counts authenticator operations passing through a suite.
#[derive(Debug)]
pub struct CountingCrypto {
    inner: SharedCrypto,
    signs: AtomicU64,
    verifies: AtomicU64,
    macs: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CryptoCounts {
    pub signs: u64,
    pub verifies: u64,
    pub macs: u64,
}

impl CryptoCounts {
    pub fn total(&self) -> u64 {
        self.signs + self.verifies + self.macs
    }
}

impl CountingCrypto {
    pub fn new(inner: SharedCrypto) -> Arc<Self> {
        Arc::new(Self {
            inner,
            signs: AtomicU64::new(0),
            verifies: AtomicU64::new(0),
            macs: AtomicU64::new(0),
        })
    }

    pub fn counts(&self) -> CryptoCounts {
        CryptoCounts {
            signs: self.signs.load(Ordering::Relaxed),
            verifies: self.verifies.load(Ordering::Relaxed),
            macs: self.macs.load(Ordering::Relaxed),
        }
    }
}

impl CryptoSuite for CountingCrypto {
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn digest(&self, message: &[u8]) -> crate::crypto::Digest {
        self.inner.digest(message)
    }

    fn mac_raw(&self, key: &MacKey, data: &[u8]) -> MacTag {
        self.macs.fetch_add(1, Ordering::Relaxed);
        self.inner.mac_raw(key, data)
    }

    fn keypair_from_seed(&self, seed: &[u8; 32]) -> SigningKey {
        self.inner.keypair_from_seed(seed)
    }

    fn sign(&self, key: &SigningKey, payload: &[u8]) -> Signature {
        self.signs.fetch_add(1, Ordering::Relaxed);
        self.inner.sign(key, payload)
    }

    fn verify(&self, key: &VerifyingKey, payload: &[u8], sig: &Signature) -> bool {
        self.verifies.fetch_add(1, Ordering::Relaxed);
        self.inner.verify(key, payload, sig)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplicaTraffic {
    pub replica: u32,
    pub sent: u64,
    pub received: u64,
    /// `(sent + received) / completed`, SYNC traffic excluded.
    pub per_request: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    pub seed: u64,
    pub outcome: String,
    pub invocations: u64,
    pub completed: u64,
    pub hops_min: u32,
    pub hops_max: u32,
    pub hops_mean: f64,
    /// Completions taking exactly two message delays.
    pub fast_path: u64,
    pub latency_p50: u64,
    pub latency_p99: u64,
    pub latencies: Vec<u64>,
    pub replicas: Vec<ReplicaTraffic>,
    /// Highest per-request load over correct replicas.
    pub bottleneck_per_request: f64,
    pub crypto: CryptoCounts,
    pub crypto_per_request: f64,
    pub views_entered: u64,
    pub view_change_starts: u64,
    pub epoch_changes: u64,
    pub drops_noticed: u64,
    pub gap_agreements: u64,
    pub resolved_by_query: u64,
    pub resolved_by_agreement: u64,
    pub order_confirms: u64,
    /// Ticks from a sequencer crash to the first completion in the new epoch.
    pub failover_recovery: Option<u64>,
    pub end_time: u64,
    pub trace_hash: String,
}

fn percentile(sorted: &[u64], p: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let i = ((sorted.len() as f64 - 1.0) * p).round() as usize;
    sorted[i]
}

pub fn compute(
    scenario: &str,
    seed: u64,
    trace: &RunTrace,
    crypto: CryptoCounts,
    faulty: &[u32],
    sequencer_crash: Option<u64>,
) -> Metrics {
    let mut m = Metrics {
        scenario: scenario.to_string(),
        seed,
        outcome: format!("{:?}", trace.outcome).to_lowercase(),
        crypto,
        trace_hash: trace.hash(),
        hops_min: u32::MAX,
        ..Metrics::default()
    };
    let mut traffic: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
    let mut views = std::collections::BTreeSet::new();
    let mut failover_at = None;
    let mut hops_sum = 0u64;
    for r in &trace.records {
        m.end_time = m.end_time.max(r.time);
        let is_sync = r.msg.as_deref() == Some("sync");
        match r.kind {
            RecordKind::Send => {
                if r.msg.as_deref() == Some("order-confirm") {
                    m.order_confirms += 1;
                }
                if let Some(NodeId { role: Role::Replica, index }) = r.src {
                    if !is_sync {
                        traffic.entry(index).or_default().0 += 1;
                    }
                }
            }
            RecordKind::Deliver => {
                if let Some(NodeId { role: Role::Replica, index }) = r.dst {
                    if !is_sync {
                        traffic.entry(index).or_default().1 += 1;
                    }
                }
            }
            _ => {}
        }
        let Some(o) = &r.obs else {
            continue;
        };
        match o {
            Observation::ClientInvoke { .. } => m.invocations += 1,
            Observation::ClientComplete { hops, ticks, .. } => {
                m.completed += 1;
                m.hops_min = m.hops_min.min(*hops);
                m.hops_max = m.hops_max.max(*hops);
                hops_sum += *hops as u64;
                if *hops == 2 {
                    m.fast_path += 1;
                }
                m.latencies.push(*ticks);
                if let (Some(crash), Some(_), None) = (sequencer_crash, failover_at, m.failover_recovery) {
                    m.failover_recovery = Some(r.time.saturating_sub(crash));
                }
            }
            Observation::ViewEnter { view, .. } => {
                views.insert(*view);
            }
            Observation::ViewChangeStart { .. } => m.view_change_starts += 1,
            Observation::Failover { .. } => {
                m.epoch_changes += 1;
                failover_at = Some(r.time);
            }
            Observation::DropNoticed { .. } => m.drops_noticed += 1,
            Observation::GapStart { .. } => m.gap_agreements += 1,
            Observation::GapResolved { via, .. } => {
                if via == "query-reply" {
                    m.resolved_by_query += 1;
                } else {
                    m.resolved_by_agreement += 1;
                }
            }
            _ => {}
        }
    }
    if m.completed == 0 {
        m.hops_min = 0;
    } else {
        m.hops_mean = hops_sum as f64 / m.completed as f64;
    }
    m.views_entered = views.len() as u64;
    let mut sorted = m.latencies.clone();
    sorted.sort_unstable();
    m.latency_p50 = percentile(&sorted, 0.5);
    m.latency_p99 = percentile(&sorted, 0.99);
    let per = |x: u64| if m.completed == 0 { 0.0 } else { x as f64 / m.completed as f64 };
    m.replicas = traffic
        .iter()
        .map(|(&replica, &(sent, received))| ReplicaTraffic {
            replica,
            sent,
            received,
            per_request: per(sent + received),
        })
        .collect();
    m.bottleneck_per_request = m
        .replicas
        .iter()
        .filter(|t| !faulty.contains(&t.replica))
        .map(|t| t.per_request)
        .fold(0.0, f64::max);
    m.crypto_per_request = per(crypto.total());
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::TestCrypto;

    #[test]
    fn counting_wrapper_counts_and_delegates() {
        let c = CountingCrypto::new(Arc::new(TestCrypto));
        let k = c.keypair_from_seed(&[1; 32]);
        let s = c.sign(&k, b"x");
        assert!(c.verify(&k.verifying_key(), b"x", &s));
        c.mac_raw(&MacKey([0; 32]), b"y");
        assert_eq!(c.counts(), CryptoCounts { signs: 1, verifies: 1, macs: 1 });
        assert_eq!(s, TestCrypto.sign(&k, b"x"));
    }

    #[test]
    fn percentiles_pick_ranks() {
        let v: Vec<u64> = (1..=100).collect();
        assert_eq!(percentile(&v, 0.5), 51);
        assert_eq!(percentile(&v, 0.99), 99);
        assert_eq!(percentile(&[], 0.5), 0);
    }
}
