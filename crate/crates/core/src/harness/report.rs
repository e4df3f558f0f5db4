use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::verify::Verdict;

use super::metrics::Metrics;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub seeds: usize,
    pub seeds_passed: usize,
    pub invocations: u64,
    pub completed: u64,
    pub latency_p50: u64,
    pub latency_p99: u64,
    pub hops_mean: f64,
    /// Mean over seeds of the busiest correct replica's load.
    pub messages_per_request_per_replica: f64,
    pub crypto_per_request: f64,
    pub view_changes: u64,
    pub epoch_changes: u64,
    pub gap_agreements: u64,
    /// Check name to number of seeds failing it.
    pub failed_checks: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenarios: Vec<ScenarioSummary>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.scenarios.iter().all(|s| s.seeds_passed == s.seeds)
    }

    pub fn to_text(&self) -> String {
        if self.scenarios.is_empty() {
            return "no runs found\n".to_string();
        }
        let mut out = String::new();
        writeln!(
            out,
            "{:<24} {:>7} {:>9} {:>5} {:>5} {:>6} {:>9} {:>9} {:>4} {:>4} {:>5}",
            "scenario", "pass", "done", "p50", "p99", "hops", "msg/req", "auth/req", "vc", "ep", "gaps"
        )
        .unwrap();
        for s in &self.scenarios {
            writeln!(
                out,
                "{:<24} {:>3}/{:<3} {:>4}/{:<4} {:>5} {:>5} {:>6.2} {:>9.2} {:>9.2} {:>4} {:>4} {:>5}",
                s.scenario,
                s.seeds_passed,
                s.seeds,
                s.completed,
                s.invocations,
                s.latency_p50,
                s.latency_p99,
                s.hops_mean,
                s.messages_per_request_per_replica,
                s.crypto_per_request,
                s.view_changes,
                s.epoch_changes,
                s.gap_agreements
            )
            .unwrap();
            for (check, n) in &s.failed_checks {
                writeln!(out, "    FAILED {check} on {n} seed(s)").unwrap();
            }
        }
        out
    }
}

fn percentile(sorted: &[u64], p: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    sorted[((sorted.len() as f64 - 1.0) * p).round() as usize]
}

fn summarize(scenario: &str, runs: &[(Metrics, Vec<Verdict>)]) -> ScenarioSummary {
    let mut s = ScenarioSummary {
        scenario: scenario.to_string(),
        seeds: runs.len(),
        ..ScenarioSummary::default()
    };
    let mut lat = Vec::new();
    let mut hops = 0.0;
    for (m, verdicts) in runs {
        if verdicts.iter().all(|v| v.pass) {
            s.seeds_passed += 1;
        }
        for v in verdicts.iter().filter(|v| !v.pass) {
            *s.failed_checks.entry(v.check.clone()).or_default() += 1;
        }
        s.invocations += m.invocations;
        s.completed += m.completed;
        lat.extend(&m.latencies);
        hops += m.hops_mean * m.completed as f64;
        s.messages_per_request_per_replica += m.bottleneck_per_request;
        s.crypto_per_request += m.crypto_per_request;
        s.view_changes += m.views_entered;
        s.epoch_changes += m.epoch_changes;
        s.gap_agreements += m.gap_agreements;
    }
    lat.sort_unstable();
    s.latency_p50 = percentile(&lat, 0.5);
    s.latency_p99 = percentile(&lat, 0.99);
    if s.completed > 0 {
        s.hops_mean = hops / s.completed as f64;
    }
    if !runs.is_empty() {
        s.messages_per_request_per_replica /= runs.len() as f64;
        s.crypto_per_request /= runs.len() as f64;
    }
    s
}

/// Aggregates `DIR/<scenario>/seed-*/{metrics,verdicts}.json`. A missing or
/// empty directory yields an empty report.
pub fn build_report(dir: &Path) -> std::io::Result<Report> {
    let mut by_scenario: BTreeMap<String, Vec<(Metrics, Vec<Verdict>)>> = BTreeMap::new();
    let Ok(entries) = std::fs::read_dir(dir) else {
        return Ok(Report::default());
    };
    let mut scenario_dirs: Vec<_> = entries.filter_map(Result::ok).map(|e| e.path()).filter(|p| p.is_dir()).collect();
    scenario_dirs.sort();
    for sdir in scenario_dirs {
        let mut seeds: Vec<_> = std::fs::read_dir(&sdir)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.join("metrics.json").exists())
            .collect();
        seeds.sort();
        for seed in seeds {
            let metrics: Metrics = serde_json::from_str(&std::fs::read_to_string(seed.join("metrics.json"))?)
                .map_err(std::io::Error::other)?;
            let verdicts: Vec<Verdict> = match std::fs::read_to_string(seed.join("verdicts.json")) {
                Ok(text) => serde_json::from_str(&text).map_err(std::io::Error::other)?,
                Err(_) => Vec::new(),
            };
            by_scenario.entry(metrics.scenario.clone()).or_default().push((metrics, verdicts));
        }
    }
    Ok(Report {
        scenarios: by_scenario.iter().map(|(name, runs)| summarize(name, runs)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_directory_gives_empty_report() {
        let r = build_report(Path::new("/nonexistent/neobft-report-test")).unwrap();
        assert!(r.scenarios.is_empty());
        assert!(r.all_passed());
        assert_eq!(r.to_text(), "no runs found\n");
    }

    #[test]
    fn summary_pools_latencies_and_counts_failures() {
        let m = |lat: Vec<u64>| Metrics {
            scenario: "s".into(),
            completed: lat.len() as u64,
            invocations: lat.len() as u64,
            latencies: lat,
            hops_mean: 2.0,
            bottleneck_per_request: 2.0,
            views_entered: 1,
            ..Metrics::default()
        };
        let runs = vec![
            (m(vec![1, 2, 3]), vec![Verdict::pass("a", "")]),
            (m(vec![4, 5]), vec![Verdict::fail("a", "x", Some(1))]),
        ];
        let s = summarize("s", &runs);
        assert_eq!((s.seeds, s.seeds_passed), (2, 1));
        assert_eq!(s.latency_p50, 3);
        assert_eq!(s.failed_checks.get("a"), Some(&1));
        assert_eq!(s.messages_per_request_per_replica, 2.0);
        assert_eq!(s.view_changes, 2);
    }
}
