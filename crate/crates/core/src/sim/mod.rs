//! Seeded discrete-event simulator.
//!
//! Every source of nondeterminism (loss, jitter, reordering) is drawn from a
//! single ChaCha stream in event order, so a run is a pure function of the
//! seed and the installed nodes.

use std::any::Any;
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::trace::{Observation, RecordKind, RunTrace, TraceRecord};

mod fault;

pub use fault::{ByzantineAssignment, CrashAt, DropRule, FaultError, FaultSpec, ScriptId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Client,
    Replica,
    Sequencer,
    Config,
}

impl Role {
    fn name(self) -> &'static str {
        match self {
            Role::Client => "client",
            Role::Replica => "replica",
            Role::Sequencer => "sequencer",
            Role::Config => "config",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub role: Role,
    pub index: u32,
}

impl NodeId {
    pub const CONFIG: NodeId = NodeId::new(Role::Config, 0);

    pub const fn new(role: Role, index: u32) -> Self {
        Self { role, index }
    }

    pub const fn replica(index: u32) -> Self {
        Self::new(Role::Replica, index)
    }

    pub const fn client(index: u32) -> Self {
        Self::new(Role::Client, index)
    }

    pub const fn sequencer(index: u32) -> Self {
        Self::new(Role::Sequencer, index)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.role.name(), self.index)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for NodeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (role, index) = s
            .split_once(':')
            .ok_or_else(|| format!("node id `{s}` is not of the form role:index"))?;
        let role = match role {
            "client" => Role::Client,
            "replica" => Role::Replica,
            "sequencer" => Role::Sequencer,
            "config" => Role::Config,
            other => return Err(format!("unknown role `{other}`")),
        };
        let index = index
            .parse()
            .map_err(|_| format!("bad index in node id `{s}`"))?;
        Ok(Self { role, index })
    }
}

impl Serialize for NodeId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How the fault layer treats a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// Sender to in-network sequencer. Zero delay, never lost.
    Ingress,
    /// Sequencer to receiver copies; subject to `aom_drop`.
    Aom,
    /// Point-to-point protocol traffic; subject to `unicast_drop`.
    Unicast,
    /// Configuration-service traffic over authenticated reliable channels.
    Control,
}

pub trait SimMessage: Clone + fmt::Debug {
    fn kind(&self) -> &'static str;
    fn summary(&self) -> String;
    fn channel(&self) -> Channel;
    /// `(epoch, seq)` for stamped multicast copies, used by targeted drops.
    fn aom_slot(&self) -> Option<(u32, u64)> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimerId(u64);

pub enum Action<M, T> {
    Send { dst: NodeId, msg: M },
    Multicast { group: u32, msg: M },
    SetTimer { id: TimerId, delay: u64, timer: T },
    CancelTimer(TimerId),
    Observe(Observation),
    Route { group: u32, targets: Vec<NodeId> },
    Spawn { id: NodeId, node: Box<dyn Node<M, T>> },
    /// Causal depth for the actions that follow in the same handler.
    Depth(u32),
}

pub struct Context<'a, M, T> {
    now: u64,
    me: NodeId,
    depth: u32,
    hop: u32,
    actions: &'a mut Vec<Action<M, T>>,
    next_timer: &'a mut u64,
}

impl<M, T> Context<'_, M, T> {
    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn me(&self) -> NodeId {
        self.me
    }

    /// Causal depth of the event being handled: the number of network hops
    /// on the longest message chain leading to it.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Re-attributes the rest of this handler's output to a message that
    /// arrived earlier at `depth`, e.g. one that was held for reordering.
    pub fn set_depth(&mut self, depth: u32) {
        self.depth = depth;
        self.actions.push(Action::Depth(depth));
    }

    /// Depth that messages sent from this handler will arrive with.
    pub fn send_depth(&self) -> u32 {
        self.depth + self.hop
    }

    pub fn send(&mut self, dst: NodeId, msg: M) {
        self.actions.push(Action::Send { dst, msg });
    }

    pub fn send_all(&mut self, dsts: impl IntoIterator<Item = NodeId>, msg: M)
    where
        M: Clone,
    {
        for dst in dsts {
            self.send(dst, msg.clone());
        }
    }

    pub fn multicast(&mut self, group: u32, msg: M) {
        self.actions.push(Action::Multicast { group, msg });
    }

    pub fn set_timer(&mut self, delay: u64, timer: T) -> TimerId {
        let id = TimerId(*self.next_timer);
        *self.next_timer += 1;
        self.actions.push(Action::SetTimer { id, delay, timer });
        id
    }

    pub fn cancel_timer(&mut self, id: TimerId) {
        self.actions.push(Action::CancelTimer(id));
    }

    pub fn observe(&mut self, obs: Observation) {
        self.actions.push(Action::Observe(obs));
    }

    pub fn install_route(&mut self, group: u32, targets: Vec<NodeId>) {
        self.actions.push(Action::Route { group, targets });
    }

    pub fn spawn(&mut self, id: NodeId, node: Box<dyn Node<M, T>>) {
        self.actions.push(Action::Spawn { id, node });
    }

    /// Position in the action buffer; with [`Context::drain_from`] this lets
    /// a wrapper rewrite what an inner handler emitted.
    pub fn mark(&self) -> usize {
        self.actions.len()
    }

    pub fn drain_from(&mut self, mark: usize) -> Vec<Action<M, T>> {
        self.actions.drain(mark..).collect()
    }

    pub fn push(&mut self, action: Action<M, T>) {
        self.actions.push(action);
    }
}

pub trait Node<M, T>: Any {
    fn on_start(&mut self, _ctx: &mut Context<'_, M, T>) {}
    fn on_message(&mut self, ctx: &mut Context<'_, M, T>, from: NodeId, msg: M);
    fn on_timer(&mut self, ctx: &mut Context<'_, M, T>, timer: T);
    /// Called once for every live node when the run ends.
    fn on_finish(&mut self, _ctx: &mut Context<'_, M, T>) {}
    /// In-network devices forward without adding a hop.
    fn in_network(&self) -> bool {
        false
    }
    /// Whether this node has finished its workload.
    fn done(&self) -> bool {
        true
    }
    fn as_any(&self) -> &dyn Any;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunOutcome {
    Completed,
    TimedOut,
}

enum Payload<M, T> {
    Start,
    Deliver { from: NodeId, msg: M },
    Timer { id: TimerId, timer: T },
    Crash,
}

struct Scheduled<M, T> {
    time: u64,
    order: u64,
    target: NodeId,
    depth: u32,
    payload: Payload<M, T>,
}

impl<M, T> PartialEq for Scheduled<M, T> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.order) == (other.time, other.order)
    }
}

impl<M, T> Eq for Scheduled<M, T> {}

impl<M, T> PartialOrd for Scheduled<M, T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<M, T> Ord for Scheduled<M, T> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.order).cmp(&(self.time, self.order))
    }
}

pub struct Simulation<M, T> {
    nodes: BTreeMap<NodeId, Box<dyn Node<M, T>>>,
    crashed: BTreeSet<NodeId>,
    routes: BTreeMap<u32, Vec<NodeId>>,
    queue: BinaryHeap<Scheduled<M, T>>,
    live_timers: BTreeSet<TimerId>,
    next_order: u64,
    next_timer: u64,
    now: u64,
    rng: ChaCha8Rng,
    faults: FaultSpec,
    records: Vec<TraceRecord>,
    actions: Vec<Action<M, T>>,
    started: bool,
    steps: u64,
}

impl<M: SimMessage + 'static, T: fmt::Debug + 'static> Simulation<M, T> {
    pub fn new(seed: u64, faults: FaultSpec) -> Self {
        let mut sim = Self {
            nodes: BTreeMap::new(),
            crashed: BTreeSet::new(),
            routes: BTreeMap::new(),
            queue: BinaryHeap::new(),
            live_timers: BTreeSet::new(),
            next_order: 0,
            next_timer: 0,
            now: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            faults,
            records: Vec::new(),
            actions: Vec::new(),
            started: false,
            steps: 0,
        };
        for crash in sim.faults.crashes.clone() {
            sim.push(crash.at, crash.node, 0, Payload::Crash);
        }
        sim
    }

    pub fn add_node(&mut self, id: NodeId, node: Box<dyn Node<M, T>>) {
        self.nodes.insert(id, node);
    }

    pub fn set_route(&mut self, group: u32, targets: Vec<NodeId>) {
        self.routes.insert(group, targets);
    }

    pub fn route(&self, group: u32) -> &[NodeId] {
        self.routes.get(&group).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn is_crashed(&self, id: NodeId) -> bool {
        self.crashed.contains(&id)
    }

    pub fn node<N: 'static>(&self, id: NodeId) -> Option<&N> {
        self.nodes.get(&id)?.as_any().downcast_ref()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    /// Writes a setup record; used before the run starts.
    pub fn record_setup(&mut self, summary: String, obs: Option<Observation>) {
        self.records.push(TraceRecord {
            time: self.now,
            kind: RecordKind::Setup,
            src: None,
            dst: None,
            summary,
            msg: None,
            depth: None,
            obs,
        });
    }

    pub fn all_done(&self) -> bool {
        self.nodes
            .iter()
            .all(|(id, node)| self.crashed.contains(id) || node.done())
    }

    fn push(&mut self, time: u64, target: NodeId, depth: u32, payload: Payload<M, T>) {
        let order = self.next_order;
        self.next_order += 1;
        self.queue.push(Scheduled {
            time,
            order,
            target,
            depth,
            payload,
        });
    }

    fn start(&mut self) {
        if self.started {
            return;
        }
        self.started = true;
        let ids: Vec<NodeId> = self.nodes.keys().copied().collect();
        for id in ids {
            self.push(0, id, 0, Payload::Start);
        }
    }

    /// Processes events until `stop` holds, the queue empties, or the next
    /// event lies beyond `limit`.
    pub fn run_until(&mut self, limit: u64, mut stop: impl FnMut(&Self) -> bool) -> RunOutcome {
        self.start();
        loop {
            if stop(self) {
                return RunOutcome::Completed;
            }
            match self.queue.peek() {
                Some(ev) if ev.time <= limit => {
                    let ev = self.queue.pop().unwrap();
                    self.process(ev);
                }
                _ => {
                    self.now = self.now.max(limit);
                    return RunOutcome::TimedOut;
                }
            }
        }
    }

    pub fn run(&mut self, limit: u64) -> RunOutcome {
        self.run_until(limit, |sim| sim.all_done())
    }

    /// Keeps processing for up to `extra` ticks so that in-flight messages
    /// land; stops early once the queue is empty.
    pub fn drain(&mut self, extra: u64) {
        let until = self.now + extra;
        while let Some(ev) = self.queue.peek() {
            if ev.time > until {
                break;
            }
            let ev = self.queue.pop().unwrap();
            self.process(ev);
        }
    }

    /// Runs every live node's finish hook and returns the trace.
    pub fn finish(mut self, outcome: RunOutcome) -> RunTrace {
        let ids: Vec<NodeId> = self.nodes.keys().copied().collect();
        for id in ids {
            if self.crashed.contains(&id) {
                continue;
            }
            let mut node = self.nodes.remove(&id).unwrap();
            let mut ctx = Context {
                now: self.now,
                me: id,
                depth: 0,
                hop: 0,
                actions: &mut self.actions,
                next_timer: &mut self.next_timer,
            };
            node.on_finish(&mut ctx);
            self.nodes.insert(id, node);
            let actions = std::mem::take(&mut self.actions);
            for action in actions {
                if let Action::Observe(obs) = action {
                    self.record_observation(id, obs);
                }
            }
        }
        let summary = match outcome {
            RunOutcome::Completed => "completed",
            RunOutcome::TimedOut => "timed out",
        };
        self.records.push(TraceRecord {
            time: self.now,
            kind: RecordKind::End,
            src: None,
            dst: None,
            summary: summary.to_string(),
            msg: None,
            depth: None,
            obs: None,
        });
        RunTrace {
            records: self.records,
            outcome,
        }
    }

    fn record_observation(&mut self, node: NodeId, obs: Observation) {
        self.records.push(TraceRecord {
            time: self.now,
            kind: RecordKind::Event,
            src: Some(node),
            dst: None,
            summary: obs.summary(),
            msg: None,
            depth: None,
            obs: Some(obs),
        });
    }

    fn process(&mut self, ev: Scheduled<M, T>) {
        debug_assert!(ev.time >= self.now, "event scheduled in the past");
        self.now = ev.time;
        self.steps += 1;
        let target = ev.target;
        match ev.payload {
            Payload::Crash => {
                if self.crashed.insert(target) {
                    self.records.push(TraceRecord {
                        time: self.now,
                        kind: RecordKind::Crash,
                        src: Some(target),
                        dst: None,
                        summary: format!("{target} crashed"),
                        msg: None,
                        depth: None,
                        obs: None,
                    });
                }
            }
            Payload::Start => {
                if !self.crashed.contains(&target) {
                    self.dispatch(target, ev.depth, |node, ctx| node.on_start(ctx));
                }
            }
            Payload::Deliver { from, msg } => {
                if self.crashed.contains(&target) || !self.nodes.contains_key(&target) {
                    self.records.push(TraceRecord {
                        time: self.now,
                        kind: RecordKind::Drop,
                        src: Some(from),
                        dst: Some(target),
                        summary: format!("{} (receiver down)", msg.summary()),
                        msg: Some(msg.kind().to_string()),
                        depth: Some(ev.depth),
                        obs: None,
                    });
                    return;
                }
                self.records.push(TraceRecord {
                    time: self.now,
                    kind: RecordKind::Deliver,
                    src: Some(from),
                    dst: Some(target),
                    summary: msg.summary(),
                    msg: Some(msg.kind().to_string()),
                    depth: Some(ev.depth),
                    obs: None,
                });
                self.dispatch(target, ev.depth, move |node, ctx| {
                    node.on_message(ctx, from, msg)
                });
            }
            Payload::Timer { id, timer } => {
                if !self.live_timers.remove(&id) || self.crashed.contains(&target) {
                    return;
                }
                self.records.push(TraceRecord {
                    time: self.now,
                    kind: RecordKind::Timer,
                    src: Some(target),
                    dst: None,
                    summary: format!("{timer:?}"),
                    msg: None,
                    depth: Some(ev.depth),
                    obs: None,
                });
                self.dispatch(target, ev.depth, move |node, ctx| node.on_timer(ctx, timer));
            }
        }
    }

    fn dispatch(
        &mut self,
        target: NodeId,
        depth: u32,
        call: impl FnOnce(&mut dyn Node<M, T>, &mut Context<'_, M, T>),
    ) {
        let Some(node) = self.nodes.get_mut(&target) else {
            return;
        };
        let hop = if node.in_network() { 0 } else { 1 };
        let mut ctx = Context {
            now: self.now,
            me: target,
            depth,
            hop,
            actions: &mut self.actions,
            next_timer: &mut self.next_timer,
        };
        call(node.as_mut(), &mut ctx);
        let actions = std::mem::take(&mut self.actions);
        let mut depth = depth;
        for action in actions {
            if let Action::Depth(d) = action {
                depth = d;
                continue;
            }
            self.apply(target, depth, depth + hop, action);
        }
    }

    fn apply(&mut self, src: NodeId, depth: u32, send_depth: u32, action: Action<M, T>) {
        match action {
            Action::Send { dst, msg } => self.schedule_send(src, dst, msg, send_depth),
            Action::Multicast { group, msg } => {
                let targets = self.routes.get(&group).cloned().unwrap_or_default();
                for dst in targets {
                    self.schedule_send(src, dst, msg.clone(), send_depth);
                }
            }
            Action::SetTimer { id, delay, timer } => {
                self.live_timers.insert(id);
                self.push(self.now + delay, src, depth, Payload::Timer { id, timer });
            }
            Action::CancelTimer(id) => {
                self.live_timers.remove(&id);
            }
            Action::Observe(obs) => self.record_observation(src, obs),
            Action::Route { group, targets } => {
                self.routes.insert(group, targets);
            }
            Action::Spawn { id, node } => {
                self.nodes.insert(id, node);
                self.push(self.now, id, depth, Payload::Start);
            }
            Action::Depth(_) => {}
        }
    }

    fn roll(&mut self, probability: f64) -> bool {
        probability > 0.0 && self.rng.random::<f64>() < probability
    }

    fn schedule_send(&mut self, src: NodeId, dst: NodeId, msg: M, depth: u32) {
        let channel = msg.channel();
        let kind = msg.kind();
        self.records.push(TraceRecord {
            time: self.now,
            kind: RecordKind::Send,
            src: Some(src),
            dst: Some(dst),
            summary: msg.summary(),
            msg: Some(kind.to_string()),
            depth: Some(depth),
            obs: None,
        });
        let ruled = self.faults.drop_rules.iter().any(|r| {
            r.kind == kind
                && r.src.is_none_or(|s| s == src)
                && r.dst.is_none_or(|d| d == dst)
                && (r.from_time..r.until_time).contains(&self.now)
        });
        let lost = ruled
            || match channel {
                Channel::Ingress | Channel::Control => false,
                Channel::Aom => {
                    let targeted = msg.aom_slot().is_some_and(|(epoch, seq)| {
                        self.faults
                            .targeted_aom_drops
                            .contains(&(epoch, seq, dst.index))
                    });
                    let p = self.faults.aom_drop;
                    targeted || self.roll(p)
                }
                Channel::Unicast => {
                    let p = self.faults.unicast_drop;
                    self.roll(p)
                }
            };
        if lost {
            self.records.push(TraceRecord {
                time: self.now,
                kind: RecordKind::Drop,
                src: Some(src),
                dst: Some(dst),
                summary: format!("{} (lost)", msg.summary()),
                msg: Some(kind.to_string()),
                depth: Some(depth),
                obs: None,
            });
            return;
        }
        let delay = match channel {
            Channel::Ingress => 0,
            Channel::Control => self.faults.base_delay,
            Channel::Aom | Channel::Unicast => {
                let jitter = self.faults.jitter;
                let mut delay = self.faults.base_delay + self.rng.random_range(0..=jitter);
                let p = self.faults.reorder_prob;
                if self.roll(p) {
                    delay += self.rng.random_range(1..=self.faults.reorder_window.max(1));
                }
                delay
            }
        };
        self.push(self.now + delay, dst, depth, Payload::Deliver { from: src, msg });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone)]
    struct Ping(u32, Channel);

    impl SimMessage for Ping {
        fn kind(&self) -> &'static str {
            "ping"
        }
        fn summary(&self) -> String {
            format!("ping {}", self.0)
        }
        fn channel(&self) -> Channel {
            self.1
        }
    }

    #[derive(Default)]
    struct Counter {
        got: Vec<(u64, u32, u32)>,
        fired: Vec<u64>,
        to_send: u32,
        peer: Option<NodeId>,
        channel: Option<Channel>,
        cancel_second: bool,
    }

    impl Node<Ping, u64> for Counter {
        fn on_start(&mut self, ctx: &mut Context<'_, Ping, u64>) {
            if let Some(peer) = self.peer {
                for i in 0..self.to_send {
                    ctx.send(peer, Ping(i, self.channel.unwrap()));
                }
            }
            let first = ctx.set_timer(5, 1);
            let second = ctx.set_timer(7, 2);
            let _ = first;
            if self.cancel_second {
                ctx.cancel_timer(second);
            }
        }
        fn on_message(&mut self, ctx: &mut Context<'_, Ping, u64>, _from: NodeId, msg: Ping) {
            self.got.push((ctx.now(), msg.0, ctx.depth()));
        }
        fn on_timer(&mut self, ctx: &mut Context<'_, Ping, u64>, timer: u64) {
            assert_eq!(ctx.now(), if timer == 1 { 5 } else { 7 });
            self.fired.push(timer);
        }
        fn done(&self) -> bool {
            false
        }
        fn as_any(&self) -> &dyn Any {
            self
        }
    }

    fn pair(seed: u64, faults: FaultSpec, sends: u32, channel: Channel) -> Simulation<Ping, u64> {
        let mut sim = Simulation::new(seed, faults);
        sim.add_node(
            NodeId::client(0),
            Box::new(Counter {
                to_send: sends,
                peer: Some(NodeId::replica(0)),
                channel: Some(channel),
                cancel_second: true,
                ..Counter::default()
            }),
        );
        sim.add_node(NodeId::replica(0), Box::new(Counter::default()));
        sim
    }

    fn received(sim: &Simulation<Ping, u64>) -> usize {
        sim.node::<Counter>(NodeId::replica(0)).unwrap().got.len()
    }

    #[test]
    fn drop_probability_extremes() {
        let mut sim = pair(1, FaultSpec::default(), 500, Channel::Unicast);
        sim.run(1_000);
        assert_eq!(received(&sim), 500);

        let faults = FaultSpec {
            unicast_drop: 1.0,
            ..FaultSpec::default()
        };
        let mut sim = pair(1, faults, 500, Channel::Unicast);
        sim.run(1_000);
        assert_eq!(received(&sim), 0);
    }

    #[test]
    fn one_percent_loss_stays_within_binomial_bounds() {
        let faults = FaultSpec {
            unicast_drop: 0.01,
            ..FaultSpec::default()
        };
        let mut delivered = 0usize;
        for seed in 0..5 {
            let mut sim = pair(seed, faults.clone(), 100_000, Channel::Unicast);
            sim.run(1_000);
            delivered += received(&sim);
        }
        let fraction = delivered as f64 / 500_000.0;
        assert!((0.987..=0.993).contains(&fraction), "{fraction}");
    }

    #[test]
    fn hop_latency_is_one_tick_plus_bounded_jitter() {
        let mut sim = pair(9, FaultSpec::default(), 200, Channel::Unicast);
        sim.run(1_000);
        let got = &sim.node::<Counter>(NodeId::replica(0)).unwrap().got;
        assert!(got.iter().all(|(t, _, depth)| (1..=4).contains(t) && *depth == 1));
        let distinct: BTreeSet<u64> = got.iter().map(|g| g.0).collect();
        assert_eq!(distinct.len(), 4);
    }

    #[test]
    fn ingress_is_instant_and_control_is_reliable() {
        let faults = FaultSpec {
            unicast_drop: 1.0,
            aom_drop: 1.0,
            ..FaultSpec::default()
        };
        let mut sim = pair(3, faults.clone(), 10, Channel::Ingress);
        sim.run(100);
        let got = &sim.node::<Counter>(NodeId::replica(0)).unwrap().got;
        assert!(got.iter().all(|g| g.0 == 0));
        assert_eq!(got.len(), 10);

        let mut sim = pair(3, faults, 10, Channel::Control);
        sim.run(100);
        assert_eq!(received(&sim), 10);
    }

    #[test]
    fn cancelled_timers_never_fire() {
        let mut sim = pair(1, FaultSpec::default(), 0, Channel::Unicast);
        sim.run(100);
        assert_eq!(sim.node::<Counter>(NodeId::client(0)).unwrap().fired, vec![1]);
        assert_eq!(sim.node::<Counter>(NodeId::replica(0)).unwrap().fired, vec![1, 2]);
    }

    #[test]
    fn crashed_nodes_stop_receiving() {
        let mut faults = FaultSpec::default();
        faults.crashes.push(CrashAt {
            node: NodeId::replica(0),
            at: 0,
        });
        let mut sim = pair(1, faults, 20, Channel::Unicast);
        sim.run(100);
        assert_eq!(received(&sim), 0);
        let trace = sim.finish(RunOutcome::Completed);
        assert_eq!(
            trace
                .records
                .iter()
                .filter(|r| r.kind == RecordKind::Drop)
                .count(),
            20
        );
    }

    #[test]
    fn same_seed_same_trace() {
        let faults = FaultSpec {
            unicast_drop: 0.2,
            reorder_prob: 0.3,
            reorder_window: 6,
            ..FaultSpec::default()
        };
        let hash = |seed| {
            let mut sim = pair(seed, faults.clone(), 300, Channel::Unicast);
            let outcome = sim.run(1_000);
            sim.finish(outcome).hash()
        };
        assert_eq!(hash(4), hash(4));
        assert_ne!(hash(4), hash(5));
    }

    #[test]
    fn node_ids_round_trip_through_text() {
        for id in [NodeId::client(3), NodeId::replica(0), NodeId::sequencer(2), NodeId::CONFIG] {
            assert_eq!(id.to_string().parse::<NodeId>(), Ok(id));
        }
        assert!("switch:1".parse::<NodeId>().is_err());
    }
}
