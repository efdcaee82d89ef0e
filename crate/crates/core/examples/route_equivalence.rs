//! Evaluates one weight function by every single-factor route and shows
//! that the auxiliary-trace oracle, the two rank recursions, and the two
//! unrolled closed forms give the same coordinates.
//!
//! Usage: `cargo run --example route_equivalence`

use std::process::ExitCode;

use bethe_vectors::trace::{weight_trace_apply, Direction};
use bethe_vectors::{
    closed_form, rank_recursion, Assembly, Case, Composition, ModuleSpec, Realization, Scalar,
    VarCollection,
};

fn s(n: i64, d: i64) -> Scalar {
    Scalar::new(n, d).unwrap()
}

fn main() -> ExitCode {
    let spec = ModuleSpec {
        n: 3,
        realization: Realization::SymmetricPower { k: 2 },
        x: s(1, 3),
        weight: None,
    };
    let q = s(2, 3);
    let asm = Assembly::build(Case::Trigonometric, Some(&q), &[spec]).unwrap();
    let xi = Composition::new(vec![2, 1]);
    let t = VarCollection::new(vec![vec![s(5, 2), s(-3, 2)], vec![s(7, 3)]]);

    println!("symmetric square of U_q(gl(3)), q = 2/3, profile (2,1), t = (5/2, -3/2; 7/3)");
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
    println!("  trace oracle:        {}", fmt(&oracle));

    let mut all_equal = true;
    for (name, value) in [
        (
            "recursion (first)",
            rank_recursion(&asm, &xi, &t, Direction::First).unwrap(),
        ),
        (
            "recursion (last)",
            rank_recursion(&asm, &xi, &t, Direction::Last).unwrap(),
        ),
        (
            "closed form (first)",
            closed_form(&asm, &xi, &t, Direction::First).unwrap(),
        ),
        (
            "closed form (last)",
            closed_form(&asm, &xi, &t, Direction::Last).unwrap(),
        ),
    ] {
        let marker = if value == oracle { "=" } else { "DIFFERS" };
        println!("  {name:<20} {} {marker}", fmt(&value));
        all_equal &= value == oracle;
    }
    if all_equal {
        println!("all routes agree");
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn fmt(value: &[Scalar]) -> String {
    let parts: Vec<String> = value.iter().map(Scalar::to_string).collect();
    format!("({})", parts.join(", "))
}
