//! Prints the rational and trigonometric R-matrices at sample arguments
//! and confirms the Yang–Baxter, inversion, and degeneration identities.
//!
//! Usage: `cargo run --example yang_baxter`

use std::process::ExitCode;

use bethe_vectors::tensor::{r_matrix, RCase};
use bethe_vectors::verify::{check_r_properties, has_failures, Verdict};
use bethe_vectors::Scalar;

fn s(n: i64, d: i64) -> Scalar {
    Scalar::new(n, d).unwrap()
}

fn print_matrix(title: &str, op: &bethe_vectors::LinearOperator, dim: usize) {
    println!("{title}");
    for row in 0..dim {
        let cells: Vec<String> = (0..dim).map(|col| op.entry(row, col).to_string()).collect();
        println!("  [{}]", cells.join(", "));
    }
}

fn main() -> ExitCode {
    let u = s(1, 2);
    let rational = r_matrix(RCase::Rational, 2, &u, None).unwrap();
    print_matrix("R(1/2) for n = 2 (rational):", &rational, 4);

    let q = s(2, 3);
    let trig = r_matrix(RCase::Trigonometric, 2, &s(3, 2), Some(&q)).unwrap();
    print_matrix("R_q(3/2) for n = 2, q = 2/3 (trigonometric):", &trig, 4);

    let mut entries = Vec::new();
    for n in 2..=3 {
        entries.extend(check_r_properties(
            bethe_vectors::Case::Rational,
            n,
            None,
            4,
            7,
        ));
        entries.extend(check_r_properties(
            bethe_vectors::Case::Trigonometric,
            n,
            Some(&q),
            4,
            7,
        ));
    }
    let passed = entries
        .iter()
        .filter(|e| e.verdict == Verdict::Pass)
        .count();
    println!(
        "identity checks: {passed}/{} passed (Yang-Baxter, inversion, equal-argument degeneration)",
        entries.len()
    );
    if has_failures(&entries) {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
