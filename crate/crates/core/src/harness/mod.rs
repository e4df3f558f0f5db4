//! Scenario loading, seeded runs, metrics and reports.

pub mod metrics;
pub mod report;
pub mod runner;
pub mod scenario;

pub use metrics::{CountingCrypto, CryptoCounts, Metrics};
pub use report::{build_report, Report, ScenarioSummary};
pub use runner::{build, run_seed, run_seeds, workload_ops, write_output, RunOutput, GROUP};
pub use scenario::{Scenario, ScenarioError, BUNDLED};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "NEOBFT_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "neobft-out";
