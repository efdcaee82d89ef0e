//! Runs a verification suite and prints a per-check summary.
//!
//! Usage: `cargo run --example verify_suite [suite] [seed] [scale]`
//! with suite one of `r-matrix`, `rtt`, `section5`, `identities`,
//! `cross-validate`, `all` (default `all`), seed an integer (default 1),
//! and scale `small` or `full` (default `small`).

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use bethe_vectors::verify::{has_failures, run_suite, Scale, Suite, Verdict};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let suite = match Suite::parse(args.get(1).map(String::as_str).unwrap_or("all")) {
        Some(suite) => suite,
        None => {
            eprintln!("unknown suite; expected one of {:?}", Suite::TOKENS);
            return ExitCode::from(2);
        }
    };
    let seed: u64 = args
        .get(2)
        .map(|raw| raw.parse().expect("seed must be an integer"))
        .unwrap_or(1);
    let scale = match Scale::parse(args.get(3).map(String::as_str).unwrap_or("small")) {
        Some(scale) => scale,
        None => {
            eprintln!("unknown scale; expected small or full");
            return ExitCode::from(2);
        }
    };

    let started = Instant::now();
    let entries = run_suite(suite, seed, scale);
    let elapsed = started.elapsed();

    let mut by_check: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for entry in &entries {
        let slot = by_check.entry(entry.check.as_str()).or_default();
        match entry.verdict {
            Verdict::Pass => slot.0 += 1,
            Verdict::Fail => slot.1 += 1,
            Verdict::Skipped => slot.2 += 1,
        }
    }
    for (check, (pass, fail, skipped)) in &by_check {
        println!("{check}: {pass} pass, {fail} fail, {skipped} skipped");
    }
    println!(
        "suite {} at scale {}: {} entries in {:.2?}",
        suite.token(),
        scale.token(),
        entries.len(),
        elapsed
    );
    for entry in &entries {
        if entry.verdict == Verdict::Fail {
            println!(
                "FAIL {} at {} (seed {}): left={:?} right={:?} difference={:?}",
                entry.check, entry.point, entry.seed, entry.left, entry.right, entry.difference
            );
        }
    }
    if has_failures(&entries) {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
