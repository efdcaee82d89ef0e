//! Runs the combinatorial identity lab at desk scale: weighted permutation
//! sums, the two symmetrization kernels (with their rejected printed
//! variants), and the three-way ladder identity.
//!
//! Usage: `cargo run --example identity_checks`

use std::process::ExitCode;

use bethe_vectors::verify::{
    check_factorial_sums, check_kernel_aligned, check_kernel_aligned_variants_rejected,
    check_kernel_expansion, check_ladder_three_way, has_failures, ReportEntry, Verdict,
};
use bethe_vectors::Scalar;

fn s(n: i64, d: i64) -> Scalar {
    Scalar::new(n, d).unwrap()
}

fn report(entries: &[ReportEntry]) {
    for entry in entries {
        let verdict = match entry.verdict {
            Verdict::Pass => "pass",
            Verdict::Fail => "FAIL",
            Verdict::Skipped => "skipped",
        };
        println!("  {} at {}: {verdict}", entry.check, entry.point);
    }
}

fn main() -> ExitCode {
    let q = s(2, 3);
    let seed = 11;
    let mut entries = Vec::new();

    println!("weighted permutation sums up to k = 4:");
    let batch = check_factorial_sums(None, 4, seed);
    report(&batch);
    entries.extend(batch);
    let batch = check_factorial_sums(Some(&q), 4, seed);
    report(&batch);
    entries.extend(batch);

    println!("symmetrization kernels at p = 2, r = 3:");
    for qq in [None, Some(&q)] {
        let batch = check_kernel_expansion(qq, 2, 3, 2, seed);
        report(&batch);
        entries.extend(batch);
        let batch = check_kernel_aligned(qq, 2, 3, 2, seed);
        report(&batch);
        entries.extend(batch);
    }

    println!("printed variants that must fail:");
    let batch = check_kernel_aligned_variants_rejected(&q, seed);
    report(&batch);
    entries.extend(batch);

    println!("three-way ladder identity:");
    for eta in [vec![2, 1], vec![3, 2]] {
        let batch = check_ladder_three_way(&eta, seed);
        report(&batch);
        entries.extend(batch);
    }

    if has_failures(&entries) {
        ExitCode::from(1)
    } else {
        println!("all identity checks passed");
        ExitCode::SUCCESS
    }
}
