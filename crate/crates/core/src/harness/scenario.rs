//! Declarative scenario files (TOML, unknown keys rejected).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aom::{AuthMode, NetworkModel};
use crate::protocol::{AppKind, Timeouts};
use crate::sim::{FaultError, FaultSpec, Role};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Faults(#[from] FaultError),
    #[error("bad override {0:?}: expected key=value")]
    Override(String),
    #[error("unknown scenario {0:?}; see list-scenarios")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuthName {
    MacVector,
    Signature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkName {
    Crash,
    Byzantine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Workload {
    pub clients: usize,
    pub ops_per_client: usize,
    /// Key-value only: number of distinct keys.
    pub keys: usize,
    /// Key-value only: fraction of GETs.
    pub read_ratio: f64,
}

impl Default for Workload {
    fn default() -> Self {
        Self {
            clients: 2,
            ops_per_client: 20,
            keys: 4,
            read_ratio: 0.5,
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub n: usize,
    pub f: usize,
    /// Allows more than `f` faulty replicas.
    #[serde(default)]
    pub beyond_f: bool,
    #[serde(default = "Scenario::default_network")]
    pub network: NetworkName,
    #[serde(default = "Scenario::default_auth")]
    pub auth: AuthName,
    /// Signature mode: one signed packet every `signing_ratio`.
    #[serde(default = "Scenario::default_ratio")]
    pub signing_ratio: u32,
    #[serde(default = "Scenario::default_crypto")]
    pub crypto: String,
    #[serde(default = "Scenario::default_app")]
    pub app: AppKind,
    #[serde(default = "Scenario::default_sync")]
    pub sync_interval: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Simulated ticks before the run is cut off.
    #[serde(default = "Scenario::default_limit")]
    pub time_limit: u64,
    #[serde(default)]
    pub workload: Workload,
    #[serde(default)]
    pub faults: FaultSpec,
    #[serde(default)]
    pub timers: Timeouts,
}

impl Scenario {
    fn default_network() -> NetworkName {
        NetworkName::Crash
    }
    fn default_auth() -> AuthName {
        AuthName::MacVector
    }
    fn default_ratio() -> u32 {
        8
    }
    fn default_crypto() -> String {
        "real".to_string()
    }
    fn default_app() -> AppKind {
        AppKind::Kv
    }
    fn default_sync() -> u64 {
        16
    }
    fn default_limit() -> u64 {
        20_000
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, ScenarioError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let sc: Scenario = table
            .try_into()
            .map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, overrides)
    }

    /// A bundled scenario by name, or a file path.
    pub fn resolve(name_or_path: &str, overrides: &[String]) -> Result<Self, ScenarioError> {
        if let Some((_, text)) = BUNDLED.iter().find(|(n, _)| *n == name_or_path) {
            return Self::parse(text, overrides);
        }
        let path = Path::new(name_or_path);
        if path.exists() {
            return Self::load(path, overrides);
        }
        Err(ScenarioError::Unknown(name_or_path.to_string()))
    }

    pub fn auth_mode(&self) -> AuthMode {
        match self.auth {
            AuthName::MacVector => AuthMode::MacVector,
            AuthName::Signature => AuthMode::Signature {
                ratio: self.signing_ratio,
            },
        }
    }

    pub fn network_model(&self) -> NetworkModel {
        match self.network {
            NetworkName::Crash => NetworkModel::CrashFaulty,
            NetworkName::Byzantine => NetworkModel::ByzantineFaulty,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.name.is_empty() {
            return bad("name: must not be empty".into());
        }
        if self.n == 0 || (self.n < 3 * self.f + 1 && !self.beyond_f) {
            return bad(format!("n: {} replicas cannot tolerate f = {}; need n >= 3f+1 or beyond_f", self.n, self.f));
        }
        if self.auth == AuthName::Signature && self.signing_ratio == 0 {
            return bad("signing_ratio: must be at least 1".into());
        }
        if crate::crypto::suite_by_name(&self.crypto).is_none() {
            return bad(format!("crypto: unknown suite {:?} (real or test)", self.crypto));
        }
        if self.seeds.is_empty() {
            return bad("seeds: at least one seed required".into());
        }
        if self.workload.clients == 0 {
            return bad("workload.clients: at least one client required".into());
        }
        if !(0.0..=1.0).contains(&self.workload.read_ratio) {
            return bad("workload.read_ratio: must lie in [0, 1]".into());
        }
        if self.app == AppKind::Kv && self.workload.keys == 0 {
            return bad("workload.keys: at least one key required".into());
        }
        if self.faults.equivocating_sequencer && self.network != NetworkName::Byzantine {
            return bad("faults.equivocating_sequencer: requires network = \"byzantine\"".into());
        }
        for c in &self.faults.crashes {
            let ok = match c.node.role {
                Role::Replica => (c.node.index as usize) < self.n,
                Role::Client => (c.node.index as usize) < self.workload.clients,
                Role::Sequencer => true,
                Role::Config => false,
            };
            if !ok {
                return bad(format!("faults.crashes: no such node {}", c.node));
            }
        }
        self.faults.validate(self.n, self.f, self.beyond_f)?;
        Ok(())
    }
}

fn apply_override(table: &mut toml::Table, o: &str) -> Result<(), ScenarioError> {
    let (key, raw) = o.split_once('=').ok_or_else(|| ScenarioError::Override(o.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ScenarioError::Override(o.to_string()));
    }
    let raw = raw.trim();
    // a bare word that is not valid TOML is taken as a string
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().unwrap();
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ScenarioError::Override(o.to_string()))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Scenario files shipped with the crate.
pub const BUNDLED: &[(&str, &str)] = &[
    ("fastpath-n4", include_str!("../../scenarios/fastpath-n4.toml")),
    ("scale-n7", include_str!("../../scenarios/scale-n7.toml")),
    ("scale-n10", include_str!("../../scenarios/scale-n10.toml")),
    ("scale-n13", include_str!("../../scenarios/scale-n13.toml")),
    ("crash-f", include_str!("../../scenarios/crash-f.toml")),
    ("byz-silent", include_str!("../../scenarios/byz-silent.toml")),
    ("byz-conflicting-reply", include_str!("../../scenarios/byz-conflicting-reply.toml")),
    ("byz-false-gap-drop", include_str!("../../scenarios/byz-false-gap-drop.toml")),
    ("byz-stale-view-change", include_str!("../../scenarios/byz-stale-view-change.toml")),
    ("drop-0.1pct", include_str!("../../scenarios/drop-0.1pct.toml")),
    ("drop-1pct", include_str!("../../scenarios/drop-1pct.toml")),
    ("drop-5pct", include_str!("../../scenarios/drop-5pct.toml")),
    ("reorder-heavy", include_str!("../../scenarios/reorder-heavy.toml")),
    ("sequencer-failover", include_str!("../../scenarios/sequencer-failover.toml")),
    ("equivocating-sequencer", include_str!("../../scenarios/equivocating-sequencer.toml")),
    ("signature-k1", include_str!("../../scenarios/signature-k1.toml")),
    ("signature-k8", include_str!("../../scenarios/signature-k8.toml")),
    ("sync-heavy", include_str!("../../scenarios/sync-heavy.toml")),
    ("drop-plus-byzantine", include_str!("../../scenarios/drop-plus-byzantine.toml")),
];

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "name = \"t\"\nn = 4\nf = 1\n";

    #[test]
    fn every_bundled_scenario_parses() {
        for (name, text) in BUNDLED {
            let sc = Scenario::parse(text, &[]).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(sc.name, *name);
        }
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = Scenario::parse(&format!("{MINIMAL}colour = 3\n"), &[]).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        let err = Scenario::parse(&format!("{MINIMAL}[faults]\naom_dorp = 0.1\n"), &[]).unwrap_err();
        assert!(err.to_string().contains("aom_dorp"), "{err}");
    }

    #[test]
    fn overrides_reach_nested_tables() {
        let sc = Scenario::parse(
            MINIMAL,
            &[
                "faults.aom_drop=0.05".into(),
                "workload.clients=3".into(),
                "auth=signature".into(),
                "timers.reorder=7".into(),
            ],
        )
        .unwrap();
        assert_eq!(sc.faults.aom_drop, 0.05);
        assert_eq!(sc.workload.clients, 3);
        assert_eq!(sc.auth, AuthName::Signature);
        assert_eq!(sc.timers.reorder, 7);
        assert!(Scenario::parse(MINIMAL, &["nonsense".into()]).is_err());
    }

    #[test]
    fn invalid_combinations_are_rejected() {
        assert!(Scenario::parse("name = \"t\"\nn = 3\nf = 1\n", &[]).is_err());
        assert!(Scenario::parse("name = \"t\"\nn = 3\nf = 1\nbeyond_f = true\n", &[]).is_ok());
        let err = Scenario::parse(&format!("{MINIMAL}[faults]\nequivocating_sequencer = true\n"), &[]).unwrap_err();
        assert!(err.to_string().contains("byzantine"));
        let two_byz = format!(
            "{MINIMAL}[[faults.byzantine]]\nreplica = 1\nscript = \"silent\"\n[[faults.byzantine]]\nreplica = 2\nscript = \"silent\"\n"
        );
        assert!(Scenario::parse(&two_byz, &[]).is_err());
    }
}
