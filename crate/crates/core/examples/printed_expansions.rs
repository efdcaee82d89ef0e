//! Prints the operator expansion of small weight functions in monodromy
//! monomials, in both the rational and the trigonometric case.
//!
//! Usage: `cargo run --example printed_expansions`

use bethe_vectors::trace::expansion;
use bethe_vectors::{Case, Composition, Scalar, VarCollection};

fn s(n: i64, d: i64) -> Scalar {
    Scalar::new(n, d).unwrap()
}

fn show(case: Case, q: Option<&Scalar>, n: usize, xi: Vec<usize>, t: Vec<Vec<Scalar>>) {
    let head = match case {
        Case::Rational => "T",
        Case::Trigonometric => "L^-",
    };
    let label = match q {
        None => format!("rational, n = {n}, profile {xi:?}"),
        Some(q) => format!("trigonometric, n = {n}, profile {xi:?}, q = {q}"),
    };
    println!("{label}");
    let xi = Composition::new(xi);
    let t = VarCollection::new(t);
    for term in expansion(case, q, n, &xi, &t).unwrap() {
        let monomial: String = term
            .factors
            .iter()
            .map(|f| format!("{head}_{{{}{}}}(t^{}_{})", f.row, f.col, f.block, f.index))
            .collect();
        println!("  {} * {monomial}", term.coefficient);
    }
    println!();
}

fn main() {
    show(
        Case::Rational,
        None,
        2,
        vec![2],
        vec![vec![s(2, 7), s(9, 5)]],
    );
    show(
        Case::Rational,
        None,
        3,
        vec![1, 1],
        vec![vec![s(2, 7)], vec![s(9, 5)]],
    );
    show(
        Case::Rational,
        None,
        4,
        vec![1, 1, 1],
        vec![vec![s(1, 2)], vec![s(8, 3)], vec![s(-7, 4)]],
    );
    let q = s(2, 1);
    show(
        Case::Trigonometric,
        Some(&q),
        3,
        vec![1, 1],
        vec![vec![s(3, 5)], vec![s(7, 2)]],
    );
    show(
        Case::Trigonometric,
        Some(&q),
        4,
        vec![1, 1, 1],
        vec![vec![s(1, 2)], vec![s(8, 3)], vec![s(-7, 4)]],
    );
}
