//! Applies the auxiliary-trace weight operator to the joint singular vector
//! of a two-factor assembly and prints the resulting coordinates.
//!
//! Usage: `cargo run --example trace_formula`

use bethe_vectors::trace::{confirm_weight, weight_trace_apply};
use bethe_vectors::{Assembly, Case, Composition, ModuleSpec, Realization, Scalar, VarCollection};

fn s(n: i64, d: i64) -> Scalar {
    Scalar::new(n, d).unwrap()
}

fn main() {
    let specs = [
        ModuleSpec {
            n: 3,
            realization: Realization::Vector,
            x: s(1, 2),
            weight: None,
        },
        ModuleSpec {
            n: 3,
            realization: Realization::Vector,
            x: s(-2, 3),
            weight: None,
        },
    ];
    let asm = Assembly::build(Case::Rational, None, &specs).unwrap();
    let xi = Composition::new(vec![1, 1]);
    let t = VarCollection::new(vec![vec![s(5, 4)], vec![s(-7, 6)]]);

    println!(
        "two vector factors of gl(3) at x = 1/2 and x = -2/3, profile (1,1), t = (5/4, -7/6)"
    );
    let value = weight_trace_apply(
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

    let labels = asm.basis_labels();
    for (coordinate, label) in value.iter().zip(&labels) {
        if !coordinate.is_zero() {
            println!("  {label}: {coordinate}");
        }
    }
    let weight = confirm_weight(&asm, &xi, &value).unwrap();
    println!("confirmed gl-content of the image: {weight:?}");
}
