//! Trace auditors. Each check reads observations only and reports a
//! verdict with a witness record index when it fails.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::Digest;
use crate::protocol::{EntryKind, ViewId};
use crate::sim::Role;
use crate::trace::{FinalEntry, Observation, RecordKind, RunTrace};

use super::history::history;
use super::linearizability::{check_echo, check_kv, CheckResult, DEFAULT_BUDGET};
use super::Verdict;

struct SetupInfo {
    f: usize,
    app: String,
    faulty: BTreeSet<u32>,
}

fn setup_of(trace: &RunTrace) -> Option<SetupInfo> {
    trace.observations().find_map(|(_, _, o)| match o {
        Observation::Setup { f, app, faulty, .. } => Some(SetupInfo {
            f: *f,
            app: app.clone(),
            faulty: faulty.iter().copied().collect(),
        }),
        _ => None,
    })
}

/// Runs every check.
pub fn audit_trace(trace: &RunTrace) -> Vec<Verdict> {
    let Some(setup) = setup_of(trace) else {
        return vec![Verdict::fail("setup", "trace has no setup record", None)];
    };
    vec![
        aom_ordering(trace, &setup),
        drop_completeness(trace, &setup),
        ordering_certificates(trace, &setup),
        committed_prefix(trace, &setup),
        conflicting_commits(trace, &setup),
        epoch_alignment(trace, &setup),
        at_most_once(trace, &setup),
        sync_point_immutability(trace, &setup),
        no_violations(trace),
        linearizability(trace, &setup),
        message_counts(trace),
    ]
}

fn correct(setup: &SetupInfo, replica: u32) -> bool {
    !setup.faulty.contains(&replica)
}

fn aom_ordering(trace: &RunTrace, setup: &SetupInfo) -> Verdict {
    let name = "aom-ordering";
    let mut first: BTreeMap<(u32, u64), (Digest, u32)> = BTreeMap::new();
    let mut last_seq: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for (i, _, o) in trace.observations() {
        let Observation::AomDeliver { replica, epoch, seq, digest } = o else {
            continue;
        };
        if !correct(setup, *replica) {
            continue;
        }
        if let Some((d, other)) = first.get(&(*epoch, *seq)) {
            if d != digest {
                return Verdict::fail(
                    name,
                    format!("replicas {other} and {replica} delivered different messages at e={epoch} seq={seq}"),
                    Some(i),
                );
            }
        } else {
            first.insert((*epoch, *seq), (*digest, *replica));
        }
        let prev = last_seq.entry((*replica, *epoch)).or_insert(0);
        if *seq <= *prev {
            return Verdict::fail(
                name,
                format!("replica {replica} delivered e={epoch} seq={seq} after seq={prev}"),
                Some(i),
            );
        }
        *prev = *seq;
    }
    Verdict::pass(name, format!("{} sequence numbers delivered consistently", first.len()))
}

fn drop_completeness(trace: &RunTrace, setup: &SetupInfo) -> Verdict {
    let name = "drop-completeness";
    let mut seen: BTreeMap<(u32, u32), BTreeSet<u64>> = BTreeMap::new();
    let mut drops = 0;
    for (_, _, o) in trace.observations() {
        match o {
            Observation::AomDeliver { replica, epoch, seq, .. } if correct(setup, *replica) => {
                seen.entry((*replica, *epoch)).or_default().insert(*seq);
            }
            Observation::AomDrop { replica, epoch, seq } if correct(setup, *replica) => {
                drops += 1;
                seen.entry((*replica, *epoch)).or_default().insert(*seq);
            }
            _ => {}
        }
    }
    for ((replica, epoch), seqs) in &seen {
        let max = *seqs.iter().next_back().unwrap();
        if let Some(missing) = (1..=max).find(|s| !seqs.contains(s)) {
            return Verdict::fail(
                name,
                format!("replica {replica} skipped e={epoch} seq={missing} without a drop notification"),
                None,
            );
        }
    }
    Verdict::pass(name, format!("{drops} drop notifications, no silent gaps"))
}

fn ordering_certificates(trace: &RunTrace, setup: &SetupInfo) -> Verdict {
    let name = "non-equivocation";
    let quorum = 2 * setup.f + 1;
    let mut certs = 0;
    let mut digests: BTreeMap<(u32, u64), Digest> = BTreeMap::new();
    for (i, _, o) in trace.observations() {
        let Observation::OrderCert { replica, epoch, seq, digest, signers } = o else {
            continue;
        };
        if !correct(setup, *replica) {
            continue;
        }
        certs += 1;
        let distinct: BTreeSet<_> = signers.iter().collect();
        if distinct.len() < quorum {
            return Verdict::fail(
                name,
                format!("replica {replica} accepted e={epoch} seq={seq} with {} signers", distinct.len()),
                Some(i),
            );
        }
        if let Some(d) = digests.insert((*epoch, *seq), *digest) {
            if d != *digest {
                return Verdict::fail(name, format!("two certificates for e={epoch} seq={seq}"), Some(i));
            }
        }
    }
    Verdict::pass(name, format!("{certs} ordering certificates checked"))
}

fn final_logs<'a>(trace: &'a RunTrace, setup: &SetupInfo) -> BTreeMap<u32, (u64, &'a [FinalEntry])> {
    let mut out = BTreeMap::new();
    for (_, _, o) in trace.observations() {
        if let Observation::FinalLog { replica, sync_point, entries, .. } = o {
            if correct(setup, *replica) {
                out.insert(*replica, (*sync_point, entries.as_slice()));
            }
        }
    }
    out
}

/// View, entry kind, content and first witness record of a committed slot.
type Commit = (ViewId, EntryKind, Digest, usize);

/// `(slot, log_hash)` pairs executed in one view by a quorum.
fn committed(trace: &RunTrace, setup: &SetupInfo) -> BTreeMap<(u64, Digest), Commit> {
    let quorum = 2 * setup.f + 1;
    type Votes = (EntryKind, Digest, BTreeSet<u32>, usize);
    let mut votes: BTreeMap<(u64, ViewId, Digest), Votes> = BTreeMap::new();
    for (i, _, o) in trace.observations() {
        if let Observation::Executed { replica, view, slot, entry, content, log_hash, .. } = o {
            votes
                .entry((*slot, *view, *log_hash))
                .or_insert_with(|| (*entry, *content, BTreeSet::new(), i))
                .2
                .insert(*replica);
        }
    }
    let mut out = BTreeMap::new();
    for ((slot, view, hash), (kind, content, who, at)) in votes {
        if who.len() >= quorum {
            out.entry((slot, hash)).or_insert((view, kind, content, at));
        }
    }
    out
}

fn committed_prefix(trace: &RunTrace, setup: &SetupInfo) -> Verdict {
    let name = "committed-prefix";
    let logs = final_logs(trace, setup);
    let commits = committed(trace, setup);
    for ((slot, hash), (view, _, _, at)) in &commits {
        for (replica, (_, entries)) in &logs {
            if let Some(e) = entries.get(*slot as usize - 1) {
                if e.log_hash != *hash {
                    return Verdict::fail(
                        name,
                        format!("slot {slot} committed in view {view} but replica {replica} ended with a different prefix"),
                        Some(*at),
                    );
                }
            }
        }
    }
    // below every sync point the final logs must coincide
    let floor = logs.values().map(|(s, _)| *s).min().unwrap_or(0);
    if floor > 0 {
        let mut hashes = logs.iter().map(|(r, (_, e))| (r, e[floor as usize - 1].log_hash));
        let (r0, h0) = hashes.next().unwrap();
        for (r, h) in hashes {
            if h != h0 {
                return Verdict::fail(
                    name,
                    format!("replicas {r0} and {r} disagree below common sync point {floor}"),
                    None,
                );
            }
        }
    }
    Verdict::pass(
        name,
        format!("{} committed slots, {} final logs agree", commits.len(), logs.len()),
    )
}

fn conflicting_commits(trace: &RunTrace, setup: &SetupInfo) -> Verdict {
    let name = "no-conflicting-commits";
    let mut outcome: BTreeMap<(ViewId, u64), bool> = BTreeMap::new();
    let mut drop_certs: BTreeMap<u64, usize> = BTreeMap::new();
    for (i, _, o) in trace.observations() {
        if let Observation::GapCertificate { replica, view, slot, recv, .. } = o {
            if !correct(setup, *replica) {
                continue;
            }
            if let Some(prev) = outcome.insert((*view, *slot), *recv) {
                if prev != *recv {
                    return Verdict::fail(
                        name,
                        format!("slot {slot} certified both received and dropped in view {view}"),
                        Some(i),
                    );
                }
            }
            if !recv {
                drop_certs.entry(*slot).or_insert(i);
            }
        }
    }
    for ((slot, _), (view, kind, _, _)) in committed(trace, setup) {
        if kind == EntryKind::Request {
            if let Some(at) = drop_certs.get(&slot) {
                return Verdict::fail(
                    name,
                    format!("slot {slot} was committed as a request in view {view} and later certified dropped"),
                    Some(*at),
                );
            }
        }
    }
    Verdict::pass(name, format!("{} gap certificates consistent", outcome.len()))
}

fn epoch_alignment(trace: &RunTrace, setup: &SetupInfo) -> Verdict {
    let name = "epoch-alignment";
    let mut starts: BTreeMap<u32, (u64, u32)> = BTreeMap::new();
    for (i, _, o) in trace.observations() {
        if let Observation::EpochEnter { replica, epoch, start_slot } = o {
            if !correct(setup, *replica) {
                continue;
            }
            match starts.get(epoch) {
                Some((s, other)) if s != start_slot => {
                    return Verdict::fail(
                        name,
                        format!("epoch {epoch} starts after slot {s} at replica {other} but {start_slot} at replica {replica}"),
                        Some(i),
                    );
                }
                Some(_) => {}
                None => {
                    starts.insert(*epoch, (*start_slot, *replica));
                }
            }
        }
    }
    Verdict::pass(name, format!("{} epoch transitions aligned", starts.len()))
}

fn at_most_once(trace: &RunTrace, setup: &SetupInfo) -> Verdict {
    let name = "at-most-once";
    let mut applied: BTreeMap<u32, BTreeMap<(u32, u64), u64>> = BTreeMap::new();
    let mut total = 0;
    for (i, _, o) in trace.observations() {
        match o {
            Observation::Rollback { replica, to_slot, .. } => {
                if let Some(m) = applied.get_mut(replica) {
                    m.retain(|_, slot| *slot <= *to_slot);
                }
            }
            Observation::Executed {
                replica,
                slot,
                client: Some(c),
                request_id: Some(r),
                applied: true,
                ..
            } if correct(setup, *replica) => {
                total += 1;
                if let Some(prev) = applied.entry(*replica).or_default().insert((*c, *r), *slot) {
                    return Verdict::fail(
                        name,
                        format!("replica {replica} applied client {c} request {r} at slots {prev} and {slot}"),
                        Some(i),
                    );
                }
            }
            _ => {}
        }
    }
    Verdict::pass(name, format!("{total} applications, none repeated"))
}

fn sync_point_immutability(trace: &RunTrace, setup: &SetupInfo) -> Verdict {
    let name = "sync-point-immutability";
    let mut point: BTreeMap<u32, u64> = BTreeMap::new();
    let mut hashes: BTreeMap<u64, Digest> = BTreeMap::new();
    for (i, _, o) in trace.observations() {
        match o {
            Observation::SyncPoint { replica, slot, log_hash, .. } if correct(setup, *replica) => {
                if let Some(h) = hashes.insert(*slot, *log_hash) {
                    if h != *log_hash {
                        return Verdict::fail(name, format!("sync points at slot {slot} disagree"), Some(i));
                    }
                }
                point.insert(*replica, *slot);
            }
            Observation::Rollback { replica, changed_slot, .. } if correct(setup, *replica) => {
                let p = point.get(replica).copied().unwrap_or(0);
                if *changed_slot <= p {
                    return Verdict::fail(
                        name,
                        format!("replica {replica} changed slot {changed_slot} below its sync point {p}"),
                        Some(i),
                    );
                }
            }
            _ => {}
        }
    }
    Verdict::pass(name, format!("{} sync points", hashes.len()))
}

fn no_violations(trace: &RunTrace) -> Verdict {
    let name = "no-violations";
    for (i, _, o) in trace.observations() {
        if let Observation::Violation { node, what } = o {
            return Verdict::fail(name, format!("{node}: {what}"), Some(i));
        }
    }
    Verdict::pass(name, "none reported")
}

fn linearizability(trace: &RunTrace, setup: &SetupInfo) -> Verdict {
    let name = "linearizability";
    let ops = history(trace);
    let result = if setup.app == "kv" {
        check_kv(&ops, DEFAULT_BUDGET)
    } else {
        check_echo(&ops, DEFAULT_BUDGET)
    };
    match result {
        CheckResult::Linearizable => Verdict::pass(name, format!("{} operations", ops.len())),
        CheckResult::NotLinearizable(w) => Verdict::fail(name, w, None),
        CheckResult::Inconclusive => Verdict::fail(name, "search budget exhausted", None),
    }
}

/// Informational only.
fn message_counts(trace: &RunTrace) -> Verdict {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for r in &trace.records {
        if r.kind == RecordKind::Send {
            if let Some(m) = &r.msg {
                *counts.entry(m.as_str()).or_default() += 1;
            }
        }
    }
    let replica_sends = trace
        .records
        .iter()
        .filter(|r| r.kind == RecordKind::Send && r.src.is_some_and(|s| s.role == Role::Replica))
        .count();
    let detail = counts
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ");
    Verdict::pass("message-counts", format!("replica sends={replica_sends} {detail}"))
}
