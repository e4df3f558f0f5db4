use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aom::{AomReceiver, ConfigService, GroupId, JoinOutcome, NetworkModel, ReceiverTimeouts};
use crate::crypto::{suite_by_name, SharedCrypto};
use crate::protocol::{AppKind, ByzantineReplica, Client, Identities, Replica, ReplicaSettings};
use crate::sim::{Node, NodeId, Role, Simulation};
use crate::trace::{Observation, RunTrace};
use crate::verify::{audit_trace, Verdict};
use crate::wire::{Message, Timer};

use super::metrics::{compute, CountingCrypto, Metrics};
use super::scenario::Scenario;

pub const GROUP: GroupId = GroupId(1);

/// Ticks allowed after the workload ends for in-flight messages to land.
pub const DRAIN_TICKS: u64 = 30;

pub struct RunOutput {
    pub trace: RunTrace,
    pub metrics: Metrics,
    pub verdicts: Vec<Verdict>,
}

impl RunOutput {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// Deterministic operation list for one client.
pub fn workload_ops(sc: &Scenario, seed: u64, client: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(client as u64 + 1)));
    (0..sc.workload.ops_per_client)
        .map(|i| match sc.app {
            AppKind::Echo => format!("op-{client}-{i}"),
            AppKind::Kv => {
                let key = rng.random_range(0..sc.workload.keys);
                if rng.random_bool(sc.workload.read_ratio) {
                    format!("GET k{key}")
                } else {
                    format!("PUT k{key} c{client}-{i}")
                }
            }
        })
        .collect()
}

/// Builds the simulation for one seed without running it.
pub fn build(sc: &Scenario, seed: u64, crypto: SharedCrypto) -> Simulation<Message, Timer> {
    let n = sc.n;
    let ids = Identities::generate(seed, n, sc.workload.clients, crypto.as_ref());
    let mut config = ConfigService::new(GROUP, sc.f, sc.auth_mode(), sc.network_model(), crypto.clone(), seed)
        .with_idle_flush(sc.timers.idle_flush);
    if sc.faults.equivocating_sequencer {
        config.equivocating_epochs.insert(0);
    }
    config.keep_old_route = sc.faults.stale_sequencer;
    for (i, key) in ids.replicas.iter().enumerate() {
        match config.join(NodeId::replica(i as u32), key.verifying_key()) {
            Ok(JoinOutcome::Joined(_)) => {}
            other => panic!("replica {i} failed to join: {other:?}"),
        }
    }
    let sequencer = config.seal().expect("validated scenario has a group");
    // configs handed out during joining describe a smaller group
    let members: Vec<_> = (0..n as u32).map(|r| config.member_config(r)).collect();

    let mut sim = Simulation::new(seed, sc.faults.clone());
    let faulty: Vec<u32> = sc.faults.faulty_replicas().into_iter().collect();
    let byzantine: Vec<u32> = sc.faults.byzantine.iter().map(|b| b.replica).collect();
    sim.record_setup(
        format!("scenario {} seed {seed}", sc.name),
        Some(Observation::Setup {
            n,
            f: sc.f,
            network: sc.network_model().name().to_string(),
            auth: sc.auth_mode().name().to_string(),
            crypto: sc.crypto.clone(),
            app: sc.app.name().to_string(),
            sync_interval: sc.sync_interval,
            faulty,
            byzantine,
        }),
    );
    sim.add_node(NodeId::CONFIG, Box::new(config));
    sim.add_node(NodeId::sequencer(0), Box::new(sequencer));
    sim.set_route(GROUP.0, vec![NodeId::sequencer(0)]);

    let settings = ReplicaSettings {
        n,
        f: sc.f,
        sync_interval: sc.sync_interval,
        timeouts: sc.timers,
    };
    let receiver_timeouts = ReceiverTimeouts {
        reorder: sc.timers.reorder,
        confirm: sc.timers.confirm,
    };
    for (i, member) in members.into_iter().enumerate() {
        let key = ids.replicas[i].clone();
        let confirm_key = (sc.network_model() == NetworkModel::ByzantineFaulty).then(|| key.clone());
        let mut receiver = AomReceiver::new(i as u32, crypto.clone(), confirm_key, receiver_timeouts);
        receiver.install(member);
        receiver.activate(0);
        let replica = Replica::new(
            i as u32,
            settings,
            key,
            ids.ring.clone(),
            crypto.clone(),
            sc.app.build(),
            receiver,
        );
        let node: Box<dyn Node<Message, Timer>> = match sc.faults.byzantine_script(i as u32) {
            Some(script) => Box::new(ByzantineReplica::new(replica, script)),
            None => Box::new(replica),
        };
        sim.add_node(NodeId::replica(i as u32), node);
    }
    for c in 0..sc.workload.clients {
        let client = Client::new(
            c as u32,
            ids.clients[c].clone(),
            ids.ring.clone(),
            crypto.clone(),
            GROUP,
            sc.f,
            sc.timers,
            workload_ops(sc, seed, c),
        );
        sim.add_node(NodeId::client(c as u32), Box::new(client));
    }
    sim
}

pub fn run_seed(sc: &Scenario, seed: u64) -> RunOutput {
    let counting = CountingCrypto::new(suite_by_name(&sc.crypto).expect("validated suite"));
    let mut sim = build(sc, seed, counting.clone());
    let outcome = sim.run(sc.time_limit);
    sim.drain(DRAIN_TICKS);
    let trace = sim.finish(outcome);
    let faulty: Vec<u32> = sc.faults.faulty_replicas().into_iter().collect();
    let sequencer_crash = sc
        .faults
        .crashes
        .iter()
        .filter(|c| c.node.role == Role::Sequencer)
        .map(|c| c.at)
        .min();
    let metrics = compute(&sc.name, seed, &trace, counting.counts(), &faulty, sequencer_crash);
    let verdicts = audit_trace(&trace);
    RunOutput {
        trace,
        metrics,
        verdicts,
    }
}

/// Runs every seed, spreading seeds over worker threads.
pub fn run_seeds(sc: &Scenario, seeds: &[u64]) -> Vec<(u64, RunOutput)> {
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(seeds.len().max(1));
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(seeds.len()));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = seeds.get(i) else {
                    break;
                };
                let out = run_seed(sc, seed);
                results.lock().unwrap().push((seed, out));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(seed, _)| *seed);
    results
}

pub fn seed_dir(out: &Path, scenario: &str, seed: u64) -> PathBuf {
    out.join(scenario).join(format!("seed-{seed}"))
}

pub fn write_output(out: &Path, scenario: &str, seed: u64, run: &RunOutput) -> std::io::Result<PathBuf> {
    let dir = seed_dir(out, scenario, seed);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("trace.jsonl"), run.trace.to_jsonl())?;
    std::fs::write(
        dir.join("metrics.json"),
        serde_json::to_string_pretty(&run.metrics).expect("metrics serialize"),
    )?;
    std::fs::write(
        dir.join("verdicts.json"),
        serde_json::to_string_pretty(&run.verdicts).expect("verdicts serialize"),
    )?;
    Ok(dir)
}
