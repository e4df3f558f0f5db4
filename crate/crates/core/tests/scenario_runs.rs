use std::collections::{BTreeMap, BTreeSet};

use neobft::harness::{run_seed, RunOutput, Scenario};
use neobft::sim::{DropRule, NodeId, Role};
use neobft::trace::{FinalEntry, Observation, RecordKind};

fn quick(name: &str, extra: &[&str]) -> Scenario {
    let mut overrides = vec!["crypto=\"test\"".to_string()];
    overrides.extend(extra.iter().map(|s| s.to_string()));
    Scenario::resolve(name, &overrides).unwrap()
}

fn block(kind: &'static str, src: Option<NodeId>, dst: Option<NodeId>, from: u64, until: u64) -> DropRule {
    DropRule {
        kind,
        src,
        dst,
        from_time: from,
        until_time: until,
    }
}

fn final_logs(run: &RunOutput) -> BTreeMap<u32, Vec<FinalEntry>> {
    run.trace
        .observations()
        .filter_map(|(_, _, o)| match o {
            Observation::FinalLog { replica, entries, .. } => Some((*replica, entries.clone())),
            _ => None,
        })
        .collect()
}

fn all_done(sc: &Scenario, run: &RunOutput) -> bool {
    run.metrics.completed == (sc.workload.clients * sc.workload.ops_per_client) as u64
}

#[test]
fn missed_gap_commit_is_learned_from_sync() {
    let mut sc = quick("fastpath-n4", &["sync_interval=4"]);
    for r in 0..4 {
        sc.faults.targeted_aom_drops.insert((0, 5, r));
    }
    // replica 3 never hears the outcome of the agreement directly
    for kind in ["gap-commit", "query-reply", "gap-certified"] {
        sc.faults.drop_rules.push(block(kind, None, Some(NodeId::replica(3)), 0, u64::MAX));
    }
    let run = run_seed(&sc, 1);
    assert!(run.passed(), "{:?}", run.verdicts);
    let via: Vec<(u32, String)> = run
        .trace
        .observations()
        .filter_map(|(_, _, o)| match o {
            Observation::GapResolved { replica, slot: 5, recv: false, via, .. } => Some((*replica, via.clone())),
            _ => None,
        })
        .collect();
    assert!(via.contains(&(3, "sync".to_string())), "{via:?}");
    assert!(!run
        .trace
        .observations()
        .any(|(_, _, o)| matches!(o, Observation::ViewChangeStart { .. })));
    let logs = final_logs(&run);
    assert_eq!(logs.len(), 4);
    assert!(logs.values().all(|l| l == &logs[&0]));
    assert!(all_done(&sc, &run));
}

#[test]
fn replaced_sequencer_is_ignored() {
    let mut sc = quick("fastpath-n4", &["faults.stale_sequencer=true"]);
    // cut the first sequencer off long enough for replicas to give up on it
    sc.faults
        .drop_rules
        .push(block("aom", Some(NodeId::sequencer(0)), None, 60, 300));
    let run = run_seed(&sc, 2);
    assert!(run.passed(), "{:?}", run.verdicts);
    assert!(all_done(&sc, &run));
    let mut entered: BTreeMap<u32, usize> = BTreeMap::new();
    let mut late = 0;
    for (i, _, o) in run.trace.observations() {
        match o {
            Observation::EpochEnter { replica, epoch: 1, .. } => {
                entered.entry(*replica).or_insert(i);
            }
            Observation::AomDeliver { replica, epoch: 0, .. } if entered.get(replica).is_some_and(|&e| e < i) => {
                late += 1;
            }
            _ => {}
        }
    }
    let stale_sent = run
        .trace
        .records
        .iter()
        .filter(|r| r.kind == RecordKind::Deliver && r.src == Some(NodeId::sequencer(0)) && r.time > 300)
        .count();
    assert_eq!(entered.len(), 4, "every replica moves to epoch 1");
    assert!(stale_sent > 0, "stale packets still reached the replicas");
    assert_eq!(late, 0);
}

#[test]
fn silent_leader_with_losses_and_sequencer_crash_recovers() {
    // replicas once split between an epoch change and a leader change here
    let sc = quick(
        "drop-plus-byzantine",
        &[
            "faults.aom_drop=0.15",
            "faults.reorder_prob=0.4",
            "faults.unicast_drop=0.02",
            "faults.byzantine=[{replica=0,script=\"silent\"}]",
            "faults.crashes=[{node=\"sequencer:0\",at=100}]",
        ],
    );
    for seed in 1..=8 {
        let run = run_seed(&sc, seed);
        assert!(run.passed(), "seed {seed}: {:?}", run.verdicts);
        assert!(all_done(&sc, &run), "seed {seed}: {}/{}", run.metrics.completed, run.metrics.invocations);
    }
}

#[test]
fn crashed_replicas_within_budget_are_tolerated() {
    let sc = quick("crash-f", &[]);
    let crashed: BTreeSet<u32> = sc
        .faults
        .crashes
        .iter()
        .filter(|c| c.node.role == Role::Replica)
        .map(|c| c.node.index)
        .collect();
    assert!(!crashed.is_empty() && crashed.len() <= sc.f);
    for &seed in &sc.seeds {
        let run = run_seed(&sc, seed);
        assert!(run.passed(), "{:?}", run.verdicts);
        assert!(all_done(&sc, &run));
    }
}

#[test]
fn replica_that_misses_a_view_start_catches_up() {
    // seeds where one replica was left behind by a view change, or where
    // request timers expired while a leader change was still running
    for (silent, seed) in [(1, 10), (2, 6)] {
        let byz = format!("faults.byzantine=[{{replica={silent},script=\"silent\"}}]");
        let sc = quick(
            "drop-plus-byzantine",
            &[
                "faults.aom_drop=0.12",
                "faults.reorder_prob=0.3",
                "faults.unicast_drop=0.03",
                &byz,
                "faults.crashes=[{node=\"sequencer:0\",at=150}]",
            ],
        );
        let run = run_seed(&sc, seed);
        assert!(run.passed(), "seed {seed}: {:?}", run.verdicts);
        assert!(all_done(&sc, &run), "seed {seed}: {}/{}", run.metrics.completed, run.metrics.invocations);
    }
}
