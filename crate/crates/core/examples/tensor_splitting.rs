//! Distributes a weight function over a three-factor tensor product and
//! compares the iterated-binary and direct-chain splittings against the
//! auxiliary-trace oracle.
//!
//! Usage: `cargo run --example tensor_splitting`

use std::process::ExitCode;

use bethe_vectors::trace::weight_trace_apply;
use bethe_vectors::{
    tensor_split, Assembly, Case, Composition, ModuleSpec, Realization, Scalar, SplitArity,
    VarCollection,
};

fn s(n: i64, d: i64) -> Scalar {
    Scalar::new(n, d).unwrap()
}

fn main() -> ExitCode {
    let xs = [s(1, 2), s(-3, 5), s(7, 4)];
    let specs: Vec<ModuleSpec> = xs
        .iter()
        .map(|x| ModuleSpec {
            n: 3,
            realization: Realization::Vector,
            x: x.clone(),
            weight: None,
        })
        .collect();
    let asm = Assembly::build(Case::Rational, None, &specs).unwrap();
    let xi = Composition::new(vec![1, 1]);
    let t = VarCollection::new(vec![vec![s(5, 3)], vec![s(-7, 6)]]);

    println!("three vector factors of gl(3) at x = (1/2, -3/5, 7/4), profile (1,1)");
    let oracle = weight_trace_apply(
        asm.case,
        asm.q.as_ref(),
        &asm.node(),
        &xi,
        &t,
        &[asm.joint_singular()],
    )
    .unwrap()
    .pop()
    .unwrap();

    let binary = tensor_split(&asm, &xi, &t, SplitArity::Binary).unwrap();
    let chain = tensor_split(&asm, &xi, &t, SplitArity::Chain).unwrap();

    let labels = asm.basis_labels();
    println!("nonzero coordinates (oracle | iterated binary | chain):");
    let mut agree = true;
    for (index, label) in labels.iter().enumerate() {
        let (o, b, c) = (&oracle[index], &binary[index], &chain[index]);
        if !o.is_zero() || !b.is_zero() || !c.is_zero() {
            println!("  {label}: {o} | {b} | {c}");
        }
        agree &= o == b && b == c;
    }
    if agree {
        println!("all three evaluations agree");
        ExitCode::SUCCESS
    } else {
        println!("MISMATCH");
        ExitCode::from(1)
    }
}
