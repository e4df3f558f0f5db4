use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Result of a GET on a missing key.
pub const NONE_MARKER: &str = "<none>";

/// Replicated application. Execution must be deterministic.
pub trait App: Send {
    fn apply(&mut self, op: &[u8]) -> Vec<u8>;
    fn snapshot(&self) -> Vec<u8>;
    fn restore(&mut self, blob: &[u8]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AppKind {
    Echo,
    Kv,
}

impl AppKind {
    pub fn name(self) -> &'static str {
        match self {
            AppKind::Echo => "echo",
            AppKind::Kv => "kv",
        }
    }

    pub fn build(self) -> Box<dyn App> {
        match self {
            AppKind::Echo => Box::new(EchoApp::default()),
            AppKind::Kv => Box::new(KvApp::default()),
        }
    }
}

/// Returns each operation unchanged.
#[derive(Debug, Default)]
pub struct EchoApp {
    applied: u64,
}

impl App for EchoApp {
    fn apply(&mut self, op: &[u8]) -> Vec<u8> {
        self.applied += 1;
        op.to_vec()
    }

    fn snapshot(&self) -> Vec<u8> {
        self.applied.to_be_bytes().to_vec()
    }

    fn restore(&mut self, blob: &[u8]) {
        self.applied = u64::from_be_bytes(blob.try_into().expect("echo snapshot is 8 bytes"));
    }
}

/// `GET k` returns the value or [`NONE_MARKER`]; `PUT k v` returns `OK`.
#[derive(Debug, Default)]
pub struct KvApp {
    map: BTreeMap<String, String>,
}

impl KvApp {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }
}

impl App for KvApp {
    fn apply(&mut self, op: &[u8]) -> Vec<u8> {
        let text = String::from_utf8_lossy(op);
        let mut parts = text.splitn(3, ' ');
        match (parts.next(), parts.next(), parts.next()) {
            (Some("GET"), Some(k), None) => self
                .map
                .get(k)
                .cloned()
                .unwrap_or_else(|| NONE_MARKER.to_string())
                .into_bytes(),
            (Some("PUT"), Some(k), Some(v)) => {
                self.map.insert(k.to_string(), v.to_string());
                b"OK".to_vec()
            }
            _ => b"ERR".to_vec(),
        }
    }

    fn snapshot(&self) -> Vec<u8> {
        serde_json::to_vec(&self.map).expect("map serializes")
    }

    fn restore(&mut self, blob: &[u8]) {
        self.map = serde_json::from_slice(blob).expect("kv snapshot is valid");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_reads_its_writes() {
        let mut kv = KvApp::default();
        assert_eq!(kv.apply(b"GET a"), NONE_MARKER.as_bytes());
        assert_eq!(kv.apply(b"PUT a hello world"), b"OK");
        assert_eq!(kv.apply(b"GET a"), b"hello world");
        assert_eq!(kv.apply(b"DEL a"), b"ERR");
    }

    #[test]
    fn snapshot_restore_rewinds_state() {
        let mut kv = KvApp::default();
        kv.apply(b"PUT a 1");
        let snap = kv.snapshot();
        kv.apply(b"PUT a 2");
        kv.restore(&snap);
        assert_eq!(kv.get("a"), Some("1"));

        let mut echo = EchoApp::default();
        echo.apply(b"x");
        let snap = echo.snapshot();
        echo.apply(b"y");
        echo.restore(&snap);
        assert_eq!(echo.applied, 1);
    }
}
