use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::NodeId;

/// Built-in adversary behaviours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScriptId {
    /// Processes input but never emits anything.
    Silent,
    /// Replies to clients with a corrupted log hash.
    ConflictingReply,
    /// Answers GAP-FIND with a drop claim even when it holds the certificate.
    FalseGapDrop,
    /// Sends VIEW-CHANGE messages with a truncated log.
    StaleViewChange,
    /// Sequencer-only: hands different payloads to different receivers for
    /// one sequence number.
    EquivocatingSequencer,
}

impl ScriptId {
    pub const REPLICA_SCRIPTS: [ScriptId; 4] = [
        ScriptId::Silent,
        ScriptId::ConflictingReply,
        ScriptId::FalseGapDrop,
        ScriptId::StaleViewChange,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScriptId::Silent => "silent",
            ScriptId::ConflictingReply => "conflicting-reply",
            ScriptId::FalseGapDrop => "false-gap-drop",
            ScriptId::StaleViewChange => "stale-view-change",
            ScriptId::EquivocatingSequencer => "equivocating-sequencer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrashAt {
    pub node: NodeId,
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByzantineAssignment {
    pub replica: u32,
    pub script: ScriptId,
}

/// Drops every message of one kind on matching links. Used by targeted
/// loss experiments; not reachable from scenario files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropRule {
    pub kind: &'static str,
    pub src: Option<NodeId>,
    pub dst: Option<NodeId>,
    pub from_time: u64,
    pub until_time: u64,
}

fn default_jitter() -> u64 {
    3
}

fn default_base_delay() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    /// Loss probability for each sequencer-to-receiver copy.
    #[serde(default)]
    pub aom_drop: f64,
    /// Loss probability for point-to-point protocol messages.
    #[serde(default)]
    pub unicast_drop: f64,
    #[serde(default)]
    pub reorder_prob: f64,
    #[serde(default)]
    pub reorder_window: u64,
    #[serde(default = "default_base_delay")]
    pub base_delay: u64,
    #[serde(default = "default_jitter")]
    pub jitter: u64,
    #[serde(default)]
    pub crashes: Vec<CrashAt>,
    #[serde(default)]
    pub byzantine: Vec<ByzantineAssignment>,
    #[serde(default)]
    pub equivocating_sequencer: bool,
    /// A replaced sequencer stays on the multicast route and keeps stamping
    /// with its old epoch.
    #[serde(default)]
    pub stale_sequencer: bool,
    /// `(epoch, seq, receiver)` triples whose copies are always lost.
    #[serde(skip)]
    pub targeted_aom_drops: BTreeSet<(u32, u64, u32)>,
    #[serde(skip)]
    pub drop_rules: Vec<DropRule>,
}

impl Default for FaultSpec {
    fn default() -> Self {
        Self {
            aom_drop: 0.0,
            unicast_drop: 0.0,
            reorder_prob: 0.0,
            reorder_window: 0,
            base_delay: default_base_delay(),
            jitter: default_jitter(),
            crashes: Vec::new(),
            byzantine: Vec::new(),
            equivocating_sequencer: false,
            stale_sequencer: false,
            targeted_aom_drops: BTreeSet::new(),
            drop_rules: Vec::new(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FaultError {
    #[error("faults.{field} must lie in [0, 1], got {value}")]
    Probability { field: &'static str, value: String },
    #[error("{faulty} replicas are faulty but f = {f}; label the scenario beyond-f to allow this")]
    OverBudget { faulty: usize, f: usize },
    #[error("faults.byzantine names replica {0}, which does not exist")]
    UnknownReplica(u32),
    #[error("script {script} cannot run on {role}")]
    ScriptRole { script: &'static str, role: &'static str },
    #[error("faults.base_delay must be at least 1")]
    ZeroDelay,
}

impl FaultSpec {
    pub fn faulty_replicas(&self) -> BTreeSet<u32> {
        let mut out: BTreeSet<u32> = self.byzantine.iter().map(|b| b.replica).collect();
        for c in &self.crashes {
            if c.node.role == super::Role::Replica {
                out.insert(c.node.index);
            }
        }
        out
    }

    pub fn byzantine_script(&self, replica: u32) -> Option<ScriptId> {
        self.byzantine
            .iter()
            .find(|b| b.replica == replica)
            .map(|b| b.script)
    }

    pub fn validate(&self, n: usize, f: usize, beyond_f: bool) -> Result<(), FaultError> {
        for (field, value) in [
            ("aom_drop", self.aom_drop),
            ("unicast_drop", self.unicast_drop),
            ("reorder_prob", self.reorder_prob),
        ] {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(FaultError::Probability {
                    field,
                    value: value.to_string(),
                });
            }
        }
        if self.base_delay == 0 {
            return Err(FaultError::ZeroDelay);
        }
        for b in &self.byzantine {
            if b.replica as usize >= n {
                return Err(FaultError::UnknownReplica(b.replica));
            }
            if b.script == ScriptId::EquivocatingSequencer {
                return Err(FaultError::ScriptRole {
                    script: b.script.name(),
                    role: "replica",
                });
            }
        }
        let faulty = self.faulty_replicas().len();
        if faulty > f && !beyond_f {
            return Err(FaultError::OverBudget { faulty, f });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Role;

    #[test]
    fn budget_guard_counts_crashes_and_scripts_once_per_replica() {
        let mut spec = FaultSpec::default();
        spec.byzantine.push(ByzantineAssignment {
            replica: 1,
            script: ScriptId::Silent,
        });
        spec.crashes.push(CrashAt {
            node: NodeId::new(Role::Replica, 1),
            at: 5,
        });
        assert_eq!(spec.validate(4, 1, false), Ok(()));
        spec.crashes.push(CrashAt {
            node: NodeId::new(Role::Replica, 2),
            at: 5,
        });
        assert_eq!(
            spec.validate(4, 1, false),
            Err(FaultError::OverBudget { faulty: 2, f: 1 })
        );
        assert_eq!(spec.validate(4, 1, true), Ok(()));
    }

    #[test]
    fn probabilities_outside_unit_interval_are_rejected() {
        let spec = FaultSpec {
            aom_drop: 1.5,
            ..FaultSpec::default()
        };
        assert!(matches!(
            spec.validate(4, 1, false),
            Err(FaultError::Probability { field: "aom_drop", .. })
        ));
    }

    #[test]
    fn sequencer_script_on_replica_is_a_configuration_error() {
        let mut spec = FaultSpec::default();
        spec.byzantine.push(ByzantineAssignment {
            replica: 0,
            script: ScriptId::EquivocatingSequencer,
        });
        assert!(matches!(
            spec.validate(4, 1, false),
            Err(FaultError::ScriptRole { .. })
        ));
    }
}
