//! Offline checks over run traces.

mod audit;
mod history;
pub mod fixtures;
pub mod linearizability;

use serde::{Deserialize, Serialize};

pub use audit::audit_trace;
pub use history::history;
pub use linearizability::{check_echo, check_kv, CheckResult, Operation};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub pass: bool,
    pub detail: String,
    /// Index of the trace record that shows the failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<usize>,
}

impl Verdict {
    pub fn pass(check: &str, detail: impl Into<String>) -> Self {
        Self {
            check: check.to_string(),
            pass: true,
            detail: detail.into(),
            witness: None,
        }
    }

    pub fn fail(check: &str, detail: impl Into<String>, witness: Option<usize>) -> Self {
        Self {
            check: check.to_string(),
            pass: false,
            detail: detail.into(),
            witness,
        }
    }
}

pub fn all_pass(verdicts: &[Verdict]) -> bool {
    verdicts.iter().all(|v| v.pass)
}
