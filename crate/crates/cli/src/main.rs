use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Parser, Subcommand};

use neobft::harness::{build_report, run_seeds, write_output, Scenario, BUNDLED, DEFAULT_OUT_DIR, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "neobft", version, about = "Run and check NeoBFT simulation scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a bundled scenario (by name) or a scenario file.
    Run {
        scenario: String,
        /// Run a single seed.
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        /// Inclusive seed range, e.g. 1..20.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, env = OUT_DIR_ENV, default_value = DEFAULT_OUT_DIR)]
        out: PathBuf,
        /// Dotted-path edit applied before validation, e.g. faults.aom_drop=0.05.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Summarize every run under a directory.
    Report { dir: PathBuf },
    /// List bundled scenarios.
    ListScenarios,
    /// Check crypto golden vectors and the checker fixtures.
    Selftest,
}

fn parse_range(s: &str) -> Result<Vec<u64>> {
    let (a, b) = s
        .split_once("..")
        .with_context(|| format!("--seeds expects A..B, got {s:?}"))?;
    let a: u64 = a.trim().parse().with_context(|| format!("bad range start {a:?}"))?;
    let b: u64 = b.trim().trim_start_matches('=').parse().with_context(|| format!("bad range end {b:?}"))?;
    if b < a {
        bail!("empty seed range {s:?}");
    }
    Ok((a..=b).collect())
}

fn run(scenario: &str, seed: Option<u64>, seeds: Option<String>, out: PathBuf, overrides: Vec<String>) -> Result<bool> {
    let sc = Scenario::resolve(scenario, &overrides)?;
    let seeds = match (seed, seeds) {
        (Some(s), _) => vec![s],
        (None, Some(r)) => parse_range(&r)?,
        (None, None) => sc.seeds.clone(),
    };
    let mut ok = true;
    for (seed, run) in run_seeds(&sc, &seeds) {
        let dir = write_output(&out, &sc.name, seed, &run).with_context(|| format!("writing under {}", out.display()))?;
        let m = &run.metrics;
        let failed: Vec<&str> = run.verdicts.iter().filter(|v| !v.pass).map(|v| v.check.as_str()).collect();
        println!(
            "{} seed {seed}: {} {}/{} completed, p50 {} ticks, {} view change(s), {} epoch change(s) -> {}",
            sc.name,
            if failed.is_empty() { "PASS" } else { "FAIL" },
            m.completed,
            m.invocations,
            m.latency_p50,
            m.views_entered,
            m.epoch_changes,
            dir.display()
        );
        for v in run.verdicts.iter().filter(|v| !v.pass) {
            println!("  {}: {}{}", v.check, v.detail, v.witness.map(|w| format!(" (record {w})")).unwrap_or_default());
        }
        ok &= failed.is_empty();
    }
    Ok(ok)
}

fn selftest() -> Result<bool> {
    let mut ok = true;
    let vectors = neobft::crypto::golden::check_all();
    let failed: Vec<String> = vectors
        .iter()
        .filter(|v| !v.pass)
        .map(|v| format!("{}:{}", v.family, v.line))
        .collect();
    if failed.is_empty() {
        println!("crypto golden vectors: {} PASS", vectors.len());
    } else {
        println!("crypto golden vectors: FAIL {failed:?}");
        ok = false;
    }
    let fixtures = neobft::verify::fixtures::all();
    let bad: Vec<_> = fixtures.iter().filter(|f| !f.holds()).map(|f| f.name).collect();
    if bad.is_empty() {
        println!("linearizability fixtures: {} PASS", fixtures.len());
    } else {
        println!("linearizability fixtures: FAIL {bad:?}");
        ok = false;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            seed,
            seeds,
            out,
            overrides,
        } => run(&scenario, seed, seeds, out, overrides),
        Command::Report { dir } => build_report(&dir).map_err(Into::into).and_then(|r| {
            print!("{}", r.to_text());
            if !r.scenarios.is_empty() {
                std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&r)?)?;
            }
            Ok(r.all_passed())
        }),
        Command::ListScenarios => {
            for (name, text) in BUNDLED {
                let sc = Scenario::parse(text, &[]).expect("bundled scenarios parse");
                println!("{name:<24} {}", sc.description);
            }
            Ok(true)
        }
        Command::Selftest => selftest(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
