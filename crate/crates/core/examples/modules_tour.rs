//! Builds one module of every supported realization and prints its carrier
//! basis, weights, singular vector, and diagonal eigenvalue series.
//!
//! Usage: `cargo run --example modules_tour`

use bethe_vectors::{Assembly, Case, ModuleSpec, Realization, Scalar};

fn s(n: i64, d: i64) -> Scalar {
    Scalar::new(n, d).unwrap()
}

fn tour(case: Case, q: Option<&Scalar>, spec: ModuleSpec, title: &str) {
    let asm = Assembly::build(case, q, std::slice::from_ref(&spec)).unwrap();
    println!("{title}");
    println!("  dimension {}", asm.dim());
    let labels = asm.basis_labels();
    let weights = asm.basis_weights();
    for (label, weight) in labels.iter().zip(&weights) {
        println!("  basis vector {label} with gl-content {weight:?}");
    }
    let singular = asm.joint_singular();
    let written: Vec<String> = singular
        .iter()
        .zip(&labels)
        .filter(|(c, _)| !c.is_zero())
        .map(|(c, label)| format!("{c}*{label}"))
        .collect();
    println!("  singular vector: {}", written.join(" + "));
    let u = s(9, 2);
    for a in 1..=2 {
        println!(
            "  diagonal eigenvalue a={a} at u=9/2: {}",
            asm.diagonal_eigenvalue(0, a, &u).unwrap()
        );
    }
    println!();
}

fn main() {
    tour(
        Case::Rational,
        None,
        ModuleSpec {
            n: 2,
            realization: Realization::Vector,
            x: s(1, 3),
            weight: None,
        },
        "vector representation of gl(2) at x = 1/3:",
    );
    tour(
        Case::Rational,
        None,
        ModuleSpec {
            n: 3,
            realization: Realization::WedgePower { k: 2 },
            x: s(-1, 2),
            weight: None,
        },
        "second wedge power of gl(3) at x = -1/2:",
    );
    tour(
        Case::Rational,
        None,
        ModuleSpec {
            n: 2,
            realization: Realization::SymmetricPower { k: 2 },
            x: s(0, 1),
            weight: None,
        },
        "symmetric square of gl(2) at x = 0:",
    );
    tour(
        Case::Rational,
        None,
        ModuleSpec {
            n: 2,
            realization: Realization::CyclicSpan {
                word: vec![1, 1, 2],
            },
            x: s(1, 5),
            weight: Some(vec![2, 1]),
        },
        "cyclic span of the word (1,1,2) in gl(2) at x = 1/5:",
    );
    let q = s(2, 1);
    tour(
        Case::Trigonometric,
        Some(&q),
        ModuleSpec {
            n: 2,
            realization: Realization::SymmetricPower { k: 2 },
            x: s(1, 3),
            weight: None,
        },
        "symmetric square of U_q(gl(2)) at x = 1/3, q = 2:",
    );
}
