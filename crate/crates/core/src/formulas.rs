//! Combinatorial presentations of the weight-function image.
//!
//! The auxiliary-space construction in [`crate::trace`] is the reference
//! route; this module provides the algebraic routes that reach the same
//! vector through symmetrized sums of rational functions:
//!
//! * **block recursions** ([`rank_recursion`]) peel one boundary block of the
//!   variable profile per step, pushing the remainder through a corner view
//!   of the carrier until no blocks are left;
//! * **closed forms** ([`closed_form`]) unroll the recursion completely into
//!   a sum over triangular matrices of nonnegative integers ([`MMatrix`]),
//!   with an ordered word of lowering generators per matrix;
//! * **tensor splittings** ([`tensor_split`]) factor the image over a tensor
//!   product of carriers, either by repeated two-factor splits or by one
//!   sum over chains of subprofiles.
//!
//! All routes share the same primitive layer: per-block symmetrization with
//! pairwise weights ([`sym_bar`]), the triangular ladder factors
//! ([`x_factor`], [`y_factor`], [`z_factor`]), and counting factors that are
//! plain factorials in the rational case and q-factorials in the
//! trigonometric case.  Evaluation is pointwise over exact rationals; every
//! vanishing denominator is reported as a named [`FormulasError::Pole`]
//! before a division can occur.
//!
//! Conventions match the rest of the crate: blocks and entries are 1-based,
//! variable collections are block-flattened, and equality of results means
//! exact equality of every coordinate.

use std::sync::Arc;

use thiserror::Error;

use crate::reps::{Assembly, Case, RepModule, RepsError};
use crate::scalar::{Scalar, ScalarError};
use crate::trace::{Composition, Direction, VarCollection};

#[derive(Debug, Error)]
pub enum FormulasError {
    /// A profile, carrier, or variable collection has the wrong shape.
    #[error("shape error: {reason}")]
    Shape { reason: String },
    /// A denominator factor vanishes at the requested point.
    #[error("pole: the factor {factor} vanishes at the requested point")]
    Pole { factor: String },
    /// An error raised while evaluating one symmetrization term.
    #[error("while evaluating the permutation {permutation}: {inner}")]
    AtPermutation {
        permutation: String,
        inner: Box<FormulasError>,
    },
    #[error(transparent)]
    Reps(#[from] RepsError),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

impl From<crate::tensor::TensorError> for FormulasError {
    fn from(err: crate::tensor::TensorError) -> Self {
        FormulasError::Reps(RepsError::Tensor(err))
    }
}

// ---------------------------------------------------------------------------
// Counting factors and q-numbers.
// ---------------------------------------------------------------------------

/// The q-integer `[k]_q = (q^k - q^{-k}) / (q - q^{-1})`.
pub fn q_number(k: i64, q: &Scalar) -> Result<Scalar, FormulasError> {
    let num = q.pow(k)? - q.pow(-k)?;
    let den = q.pow(1)? - q.pow(-1)?;
    if den.is_zero() {
        return Err(FormulasError::Pole {
            factor: "q - q^{-1}".into(),
        });
    }
    Ok(num.div(&den)?)
}

/// The q-factorial `[k]_q! = [1]_q [2]_q ... [k]_q`.
pub fn q_factorial(k: usize, q: &Scalar) -> Result<Scalar, FormulasError> {
    let mut out = Scalar::one();
    for r in 1..=k {
        out = &out * &q_number(r as i64, q)?;
    }
    Ok(out)
}

/// `k!` in the rational case, `[k]_q!` in the trigonometric case.
fn count_factor(case: Case, q: Option<&Scalar>, k: usize) -> Result<Scalar, FormulasError> {
    match case {
        Case::Rational => Ok(Scalar::factorial(k)),
        Case::Trigonometric => q_factorial(k, expect_q(q)?),
    }
}

fn expect_q(q: Option<&Scalar>) -> Result<&Scalar, FormulasError> {
    q.ok_or_else(|| FormulasError::Shape {
        reason: "the trigonometric case needs a deformation parameter".into(),
    })
}

// ---------------------------------------------------------------------------
// Pairwise sites shared by every factor.
// ---------------------------------------------------------------------------

/// `(hi - lo + 1) / (hi - lo)` in the rational case,
/// `(q hi - q^{-1} lo) / (hi - lo)` in the trigonometric case.
fn shifted_site(
    case: Case,
    q: Option<&Scalar>,
    hi: &Scalar,
    lo: &Scalar,
    name: impl FnOnce() -> String,
) -> Result<Scalar, FormulasError> {
    let den = hi - lo;
    if den.is_zero() {
        return Err(FormulasError::Pole { factor: name() });
    }
    let num = match case {
        Case::Rational => &den + &Scalar::one(),
        Case::Trigonometric => {
            let q = expect_q(q)?;
            &(q * hi) - &(&q.inv()? * lo)
        }
    };
    Ok(num.div(&den)?)
}

/// `1 / (hi - lo)` with a named pole.
fn gap_site(
    hi: &Scalar,
    lo: &Scalar,
    name: impl FnOnce() -> String,
) -> Result<Scalar, FormulasError> {
    let den = hi - lo;
    if den.is_zero() {
        return Err(FormulasError::Pole { factor: name() });
    }
    Ok(den.inv()?)
}

/// Per-block symmetrization weight: `prod_{i<j} (t_i - t_j - 1)/(t_i - t_j)`
/// in the rational case and `prod_{i<j} (q^{-1} t_i - q t_j)/(t_i - t_j)` in
/// the trigonometric case.
pub fn w_factor(
    case: Case,
    q: Option<&Scalar>,
    block: usize,
    vars: &[Scalar],
) -> Result<Scalar, FormulasError> {
    let mut out = Scalar::one();
    for i in 0..vars.len() {
        for j in (i + 1)..vars.len() {
            let den = &vars[i] - &vars[j];
            if den.is_zero() {
                return Err(FormulasError::Pole {
                    factor: format!("t^{{{block}}}_{{{}}} - t^{{{block}}}_{{{}}}", i + 1, j + 1),
                });
            }
            let num = match case {
                Case::Rational => &den - &Scalar::one(),
                Case::Trigonometric => {
                    let q = expect_q(q)?;
                    &(&q.inv()? * &vars[i]) - &(q * &vars[j])
                }
            };
            out = &out * &num.div(&den)?;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Block symmetrization.
// ---------------------------------------------------------------------------

/// Values that can be accumulated by the symmetrization sums: exact scalars
/// and coordinate vectors.
pub trait BlockSum: Clone {
    fn zero_like(&self) -> Self;
    fn scaled(&self, c: &Scalar) -> Self;
    fn add_in(&mut self, other: &Self);
}

impl BlockSum for Scalar {
    fn zero_like(&self) -> Self {
        Scalar::zero()
    }
    fn scaled(&self, c: &Scalar) -> Self {
        self * c
    }
    fn add_in(&mut self, other: &Self) {
        *self += other;
    }
}

impl BlockSum for Vec<Scalar> {
    fn zero_like(&self) -> Self {
        vec![Scalar::zero(); self.len()]
    }
    fn scaled(&self, c: &Scalar) -> Self {
        self.iter().map(|v| v * c).collect()
    }
    fn add_in(&mut self, other: &Self) {
        for (lhs, rhs) in self.iter_mut().zip(other) {
            *lhs += rhs;
        }
    }
}

fn permutations_of(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    let mut used = vec![false; k];
    fn fill(k: usize, current: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in 0..k {
            if !used[i] {
                used[i] = true;
                current.push(i);
                fill(k, current, used, out);
                current.pop();
                used[i] = false;
            }
        }
    }
    fill(k, &mut current, &mut used, &mut out);
    out
}

fn permutation_label(assignment: &[&Vec<usize>]) -> String {
    let mut parts = Vec::new();
    for block in assignment {
        let inner = block
            .iter()
            .map(|i| (i + 1).to_string())
            .collect::<Vec<_>>()
            .join(" ");
        parts.push(format!("({inner})"));
    }
    parts.join("")
}

fn permuted(t: &VarCollection, assignment: &[&Vec<usize>]) -> VarCollection {
    let blocks = t
        .blocks()
        .iter()
        .zip(assignment)
        .map(|(block, order)| order.iter().map(|&i| block[i].clone()).collect())
        .collect();
    VarCollection::new(blocks)
}

fn for_each_assignment(
    t: &VarCollection,
    mut body: impl FnMut(&VarCollection, &str) -> Result<(), FormulasError>,
) -> Result<(), FormulasError> {
    let per_block: Vec<Vec<Vec<usize>>> = t
        .blocks()
        .iter()
        .map(|block| permutations_of(block.len()))
        .collect();
    let mut choice: Vec<usize> = vec![0; per_block.len()];
    loop {
        let assignment: Vec<&Vec<usize>> = choice
            .iter()
            .zip(&per_block)
            .map(|(&c, opts)| &opts[c])
            .collect();
        let label = permutation_label(&assignment);
        body(&permuted(t, &assignment), &label)?;
        // Advance the mixed-radix counter over per-block permutations.
        let mut pos = per_block.len();
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            choice[pos] += 1;
            if choice[pos] < per_block[pos].len() {
                break;
            }
            choice[pos] = 0;
        }
    }
}

/// Symmetrizes `f` over all per-block permutations of `t`.
pub fn sym<T: BlockSum>(
    t: &VarCollection,
    f: &mut dyn FnMut(&VarCollection) -> Result<T, FormulasError>,
) -> Result<T, FormulasError> {
    let mut total: Option<T> = None;
    for_each_assignment(t, |sigma_t, label| {
        let term = f(sigma_t).map_err(|inner| FormulasError::AtPermutation {
            permutation: label.to_string(),
            inner: Box::new(inner),
        })?;
        match &mut total {
            None => total = Some(term),
            Some(acc) => acc.add_in(&term),
        }
        Ok(())
    })?;
    total.ok_or_else(|| FormulasError::Shape {
        reason: "symmetrization over an empty permutation set".into(),
    })
}

/// Weighted symmetrization: the sum of `f(sigma t) * prod_a W(sigma t^a)`
/// over all per-block permutations, where `W` is [`w_factor`].
pub fn sym_bar<T: BlockSum>(
    case: Case,
    q: Option<&Scalar>,
    t: &VarCollection,
    f: &mut dyn FnMut(&VarCollection) -> Result<T, FormulasError>,
) -> Result<T, FormulasError> {
    let mut total: Option<T> = None;
    for_each_assignment(t, |sigma_t, label| {
        let annotate = |inner: FormulasError| FormulasError::AtPermutation {
            permutation: label.to_string(),
            inner: Box::new(inner),
        };
        let mut weight = Scalar::one();
        for (a, block) in sigma_t.blocks().iter().enumerate() {
            weight = &weight * &w_factor(case, q, a + 1, block).map_err(annotate)?;
        }
        let term = f(sigma_t).map_err(annotate)?;
        match &mut total {
            None => total = Some(term.scaled(&weight)),
            Some(acc) => acc.add_in(&term.scaled(&weight)),
        }
        Ok(())
    })?;
    total.ok_or_else(|| FormulasError::Shape {
        reason: "symmetrization over an empty permutation set".into(),
    })
}

// ---------------------------------------------------------------------------
// Triangular ladder factors.
// ---------------------------------------------------------------------------

fn check_profile_shape(t: &VarCollection, eta: &[usize], what: &str) -> Result<(), FormulasError> {
    let shape = t.shape();
    if shape.parts() != eta {
        return Err(FormulasError::Shape {
            reason: format!(
                "{what} expects variables of shape {:?}, got {:?}",
                eta,
                shape.parts()
            ),
        });
    }
    Ok(())
}

/// Ladder factor for a nondecreasing profile `eta`, pairing each block with
/// the next one from the low end.  Entries of the final block past
/// `eta^{L-1}` are never read.
pub fn x_factor(
    case: Case,
    q: Option<&Scalar>,
    eta: &[usize],
    t: &VarCollection,
) -> Result<Scalar, FormulasError> {
    check_profile_shape(t, eta, "the nondecreasing ladder factor")?;
    if eta.windows(2).any(|w| w[0] > w[1]) {
        return Err(FormulasError::Shape {
            reason: format!("the ladder profile {eta:?} must be nondecreasing"),
        });
    }
    let blocks = eta.len();
    let mut out = Scalar::one();
    for a in 1..blocks {
        for j in 1..=eta[a - 1] {
            out = &out
                * &gap_site(t.get(a + 1, j), t.get(a, j), || {
                    format!("t^{{{}}}_{{{j}}} - t^{{{a}}}_{{{j}}}", a + 1)
                })?;
            for i in 1..j {
                out = &out
                    * &shifted_site(case, q, t.get(a + 1, i), t.get(a, j), || {
                        format!("t^{{{}}}_{{{i}}} - t^{{{a}}}_{{{j}}}", a + 1)
                    })?;
            }
        }
    }
    Ok(out)
}

/// Ladder factor for a nonincreasing profile `eta`, pairing each block with
/// the previous one from the high end.  The first `eta^1 - eta^2` entries of
/// the first block are never read.
pub fn y_factor(
    case: Case,
    q: Option<&Scalar>,
    eta: &[usize],
    t: &VarCollection,
) -> Result<Scalar, FormulasError> {
    check_profile_shape(t, eta, "the nonincreasing ladder factor")?;
    if eta.windows(2).any(|w| w[0] < w[1]) {
        return Err(FormulasError::Shape {
            reason: format!("the ladder profile {eta:?} must be nonincreasing"),
        });
    }
    let blocks = eta.len();
    let mut out = Scalar::one();
    for a in 2..=blocks {
        let shift = eta[a - 2] - eta[a - 1];
        for j in 1..=eta[a - 1] {
            out = &out
                * &gap_site(t.get(a, j), t.get(a - 1, j + shift), || {
                    format!("t^{{{a}}}_{{{j}}} - t^{{{}}}_{{{}}}", a - 1, j + shift)
                })?;
            for i in 1..j {
                out = &out
                    * &shifted_site(case, q, t.get(a, i), t.get(a - 1, j + shift), || {
                        format!("t^{{{a}}}_{{{i}}} - t^{{{}}}_{{{}}}", a - 1, j + shift)
                    })?;
            }
        }
    }
    Ok(out)
}

/// Cross factor between two collections with the same number of blocks:
/// every entry of block `a+1` of `t` against every entry of block `a` of
/// `s`.  The first block of `t` and the last block of `s` are never read.
pub fn z_factor(
    case: Case,
    q: Option<&Scalar>,
    t: &VarCollection,
    s: &VarCollection,
) -> Result<Scalar, FormulasError> {
    if t.blocks().len() != s.blocks().len() {
        return Err(FormulasError::Shape {
            reason: format!(
                "the cross factor needs matching block counts, got {} and {}",
                t.blocks().len(),
                s.blocks().len()
            ),
        });
    }
    let blocks = t.blocks().len();
    let mut out = Scalar::one();
    for a in 1..blocks {
        for i in 1..=t.block(a + 1).len() {
            for j in 1..=s.block(a).len() {
                out = &out
                    * &shifted_site(case, q, t.get(a + 1, i), s.get(a, j), || {
                        format!("t^{{{}}}_{{{i}}} - s^{{{a}}}_{{{j}}}", a + 1)
                    })?;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Profile enumeration for the block recursions.
// ---------------------------------------------------------------------------

/// All nondecreasing profiles `eta` with `eta^a <= xi^a` and the last entry
/// pinned to `xi`'s last entry.
fn profiles_last(xi: &[usize]) -> Vec<Vec<usize>> {
    let blocks = xi.len();
    let mut out = Vec::new();
    let mut eta = vec![0usize; blocks];
    eta[blocks - 1] = xi[blocks - 1];
    fn fill(a: usize, xi: &[usize], eta: &mut [usize], out: &mut Vec<Vec<usize>>) {
        if a == 0 {
            out.push(eta.to_vec());
            return;
        }
        let cap = xi[a - 1].min(eta[a]);
        for v in 0..=cap {
            eta[a - 1] = v;
            fill(a - 1, xi, eta, out);
        }
    }
    if blocks == 1 {
        out.push(eta);
    } else {
        fill(blocks - 1, xi, &mut eta, &mut out);
    }
    out
}

/// All nonincreasing profiles `eta` with `eta^a <= xi^a` and the first entry
/// pinned to `xi`'s first entry.
fn profiles_first(xi: &[usize]) -> Vec<Vec<usize>> {
    let blocks = xi.len();
    let mut out = Vec::new();
    let mut eta = vec![0usize; blocks];
    eta[0] = xi[0];
    fn fill(a: usize, blocks: usize, xi: &[usize], eta: &mut [usize], out: &mut Vec<Vec<usize>>) {
        if a == blocks {
            out.push(eta.to_vec());
            return;
        }
        let cap = xi[a].min(eta[a - 1]);
        for v in 0..=cap {
            eta[a] = v;
            fill(a + 1, blocks, xi, eta, out);
        }
    }
    if blocks == 1 {
        out.push(eta);
    } else {
        fill(1, blocks, xi, &mut eta, &mut out);
    }
    out
}

// ---------------------------------------------------------------------------
// Lowering words on the carrier.
// ---------------------------------------------------------------------------

fn lowering_power(
    case: Case,
    module: &RepModule,
    row: usize,
    col: usize,
    power: usize,
    vec: &[Scalar],
) -> Result<Vec<Scalar>, FormulasError> {
    let mut out = vec.to_vec();
    for _ in 0..power {
        out = match case {
            Case::Rational => module.e(row, col)?.apply(&out)?,
            Case::Trigonometric => module.echeck(row, col)?.apply(&out)?,
        };
    }
    Ok(out)
}

/// Returns true when the generator labelled `x = (row, col)` stands to the
/// left of `y` in the expanded operator word for the given direction.
///
/// Peeling the last block orders by larger row first, then larger column;
/// peeling the first block orders by smaller column first, then smaller row.
pub fn letter_precedes(direction: Direction, x: (usize, usize), y: (usize, usize)) -> bool {
    match direction {
        Direction::Last => x.0 > y.0 || (x.0 == y.0 && x.1 > y.1),
        Direction::First => x.1 < y.1 || (x.1 == y.1 && x.0 < y.0),
    }
}

/// Applies an ordered word of lowering generators to `vec`.  `letters` lists
/// `(row, col, power)` leftmost first; the rightmost factor acts first.
fn apply_word(
    case: Case,
    module: &RepModule,
    letters: &[(usize, usize, usize)],
    vec: &[Scalar],
) -> Result<Vec<Scalar>, FormulasError> {
    let mut out = vec.to_vec();
    for &(row, col, power) in letters.iter().rev() {
        out = lowering_power(case, module, row, col, power, &out)?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Block recursions.
// ---------------------------------------------------------------------------

fn single_factor(asm: &Assembly) -> Result<&Arc<RepModule>, FormulasError> {
    if asm.factors.len() != 1 {
        return Err(FormulasError::Shape {
            reason: format!(
                "the block recursions and closed forms act on a single-factor carrier, got {} factors",
                asm.factors.len()
            ),
        });
    }
    Ok(&asm.factors[0])
}

fn check_variables(xi: &Composition, t: &VarCollection) -> Result<(), FormulasError> {
    if t.shape().parts() != xi.parts() {
        return Err(FormulasError::Shape {
            reason: format!(
                "variable collection of shape {:?} does not match the profile {:?}",
                t.shape().parts(),
                xi.parts()
            ),
        });
    }
    Ok(())
}

/// Evaluates the weight-function image on a single-factor carrier by peeling
/// blocks of the profile one at a time, in the requested direction.
pub fn rank_recursion(
    asm: &Assembly,
    xi: &Composition,
    t: &VarCollection,
    direction: Direction,
) -> Result<Vec<Scalar>, FormulasError> {
    let module = single_factor(asm)?;
    if xi.len() + 1 != module.n {
        return Err(FormulasError::Shape {
            reason: format!(
                "profile with {} blocks does not fit rank {}",
                xi.len(),
                module.n
            ),
        });
    }
    check_variables(xi, t)?;
    recurse(
        asm.case,
        asm.q.as_ref(),
        module,
        0,
        &module.weight,
        &module.x,
        xi.parts(),
        t,
        &module.singular,
        direction,
    )
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    case: Case,
    q: Option<&Scalar>,
    module: &RepModule,
    offset: usize,
    weight: &[i64],
    x: &Scalar,
    xi: &[usize],
    t: &VarCollection,
    v: &[Scalar],
    direction: Direction,
) -> Result<Vec<Scalar>, FormulasError> {
    if xi.is_empty() {
        return Ok(v.to_vec());
    }
    match direction {
        Direction::Last => recurse_last(case, q, module, offset, weight, x, xi, t, v),
        Direction::First => recurse_first(case, q, module, offset, weight, x, xi, t, v),
    }
}

/// Factor `(t - x + L) / (t - x)` (rational) or `(q^L t - q^{-L} x)`
/// (trigonometric), the site attached to a peeled variable with carrier
/// weight entry `L`.
fn peel_site(
    case: Case,
    q: Option<&Scalar>,
    t: &Scalar,
    x: &Scalar,
    lam: i64,
    name: impl FnOnce() -> String,
) -> Result<Scalar, FormulasError> {
    match case {
        Case::Rational => {
            let den = t - x;
            if den.is_zero() {
                return Err(FormulasError::Pole { factor: name() });
            }
            let num = &den + &Scalar::from_int(lam);
            Ok(num.div(&den)?)
        }
        Case::Trigonometric => {
            let q = expect_q(q)?;
            Ok(&(&q.pow(lam)? * t) - &(&q.pow(-lam)? * x))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn recurse_last(
    case: Case,
    q: Option<&Scalar>,
    module: &RepModule,
    offset: usize,
    weight: &[i64],
    x: &Scalar,
    xi: &[usize],
    t: &VarCollection,
    v: &[Scalar],
) -> Result<Vec<Scalar>, FormulasError> {
    let rank = xi.len() + 1;
    // Prefactor over the peeled (final) block, rational case only.
    let mut prefactor = Scalar::one();
    if case == Case::Rational {
        for (i, point) in t.block(rank - 1).iter().enumerate() {
            prefactor = &prefactor
                * &gap_site(point, x, || {
                    format!("t^{{{}}}_{{{}}} - x", rank - 1, i + 1)
                })?;
        }
    }
    let mut total = vec![Scalar::zero(); v.len()];
    for eta in profiles_last(xi) {
        // Counting prefactor of the profile.
        let mut coef = count_factor(case, q, eta[0])?.inv()?;
        for a in 1..rank - 1 {
            let down = count_factor(case, q, xi[a - 1] - eta[a - 1])?;
            let up = count_factor(case, q, eta[a] - eta[a - 1])?;
            coef = coef.div(&(&down * &up))?;
        }
        if case == Case::Trigonometric {
            let q = expect_q(q)?;
            let size: usize = eta.iter().sum();
            let spread = &q.pow(1)? - &q.pow(-1)?;
            coef = &coef * &spread.pow(size as i64)?;
            for a in 1..rank - 1 {
                let exp = (eta[a - 1] * (eta[a - 1])) as i64 - (eta[a - 1] * eta[a]) as i64;
                coef = &coef * &q.pow(exp)?;
            }
        }
        let remainder: Vec<usize> = xi.iter().zip(&eta).map(|(&f, &h)| f - h).collect();
        let inner_xi: Vec<usize> = remainder[..rank - 2].to_vec();
        let value = sym_bar::<Vec<Scalar>>(case, q, t, &mut |sigma_t| {
            let low = sigma_t.head(&remainder);
            let high = sigma_t.tail(&remainder);
            let mut scal = x_factor(case, q, &eta, &high)?;
            scal = &scal * &z_factor(case, q, &low, &high)?;
            for a in 1..rank - 1 {
                for i in 0..eta[a - 1] {
                    scal = &scal
                        * &peel_site(
                            case,
                            q,
                            sigma_t.get(a, xi[a - 1] - i),
                            x,
                            weight[a],
                            || format!("t^{{{a}}}_{{{}}} - x", xi[a - 1] - i),
                        )?;
                }
            }
            let inner_t = low.drop_last();
            let inner = recurse(
                case,
                q,
                module,
                offset,
                &weight[..rank - 1],
                x,
                &inner_xi,
                &inner_t,
                v,
                Direction::Last,
            )?;
            let mut letters = Vec::new();
            for b in (1..rank).rev() {
                let below = if b >= 2 { eta[b - 2] } else { 0 };
                letters.push((rank + offset, b + offset, eta[b - 1] - below));
            }
            let dressed = apply_word(case, module, &letters, &inner)?;
            Ok(dressed.scaled(&scal))
        })?;
        for (acc, term) in total.iter_mut().zip(&value.scaled(&coef)) {
            *acc += term;
        }
    }
    Ok(total.scaled(&prefactor))
}

#[allow(clippy::too_many_arguments)]
fn recurse_first(
    case: Case,
    q: Option<&Scalar>,
    module: &RepModule,
    offset: usize,
    weight: &[i64],
    x: &Scalar,
    xi: &[usize],
    t: &VarCollection,
    v: &[Scalar],
) -> Result<Vec<Scalar>, FormulasError> {
    let rank = xi.len() + 1;
    let mut prefactor = Scalar::one();
    if case == Case::Rational {
        for (i, point) in t.block(1).iter().enumerate() {
            prefactor =
                &prefactor * &gap_site(point, x, || format!("t^{{1}}_{{{}}} - x", i + 1))?;
        }
    }
    let mut total = vec![Scalar::zero(); v.len()];
    for eta in profiles_first(xi) {
        let mut coef = count_factor(case, q, eta[rank - 2])?.inv()?;
        for a in 2..rank {
            let down = count_factor(case, q, xi[a - 1] - eta[a - 1])?;
            let up = count_factor(case, q, eta[a - 2] - eta[a - 1])?;
            coef = coef.div(&(&down * &up))?;
        }
        if case == Case::Trigonometric {
            let q = expect_q(q)?;
            let size: usize = eta.iter().sum();
            let spread = &q.pow(1)? - &q.pow(-1)?;
            coef = &coef * &spread.pow(size as i64)?;
            for a in 2..rank {
                let exp = (eta[a - 1] * eta[a - 2]) as i64 - (eta[a - 1] * eta[a - 1]) as i64;
                coef = &coef * &q.pow(exp)?;
            }
        }
        let remainder: Vec<usize> = xi.iter().zip(&eta).map(|(&f, &h)| f - h).collect();
        let inner_xi: Vec<usize> = remainder[1..].to_vec();
        let value = sym_bar::<Vec<Scalar>>(case, q, t, &mut |sigma_t| {
            let head = sigma_t.head(&eta);
            let rest = sigma_t.tail(&eta);
            let mut scal = y_factor(case, q, &eta, &head)?;
            scal = &scal * &z_factor(case, q, &head, &rest)?;
            for a in 2..rank {
                for i in 1..=eta[a - 1] {
                    scal = &scal
                        * &peel_site(case, q, sigma_t.get(a, i), x, weight[a - 1], || {
                            format!("t^{{{a}}}_{{{i}}} - x")
                        })?;
                }
            }
            let inner_t = rest.drop_first();
            let inner = recurse(
                case,
                q,
                module,
                offset + 1,
                &weight[1..],
                x,
                &inner_xi,
                &inner_t,
                v,
                Direction::First,
            )?;
            let mut letters = Vec::new();
            for b in 2..=rank {
                let above = if b <= rank - 1 { eta[b - 1] } else { 0 };
                letters.push((b + offset, 1 + offset, eta[b - 2] - above));
            }
            let dressed = apply_word(case, module, &letters, &inner)?;
            Ok(dressed.scaled(&scal))
        })?;
        for (acc, term) in total.iter_mut().zip(&value.scaled(&coef)) {
            *acc += term;
        }
    }
    Ok(total.scaled(&prefactor))
}

// ---------------------------------------------------------------------------
// Triangular matrices and closed forms.
// ---------------------------------------------------------------------------

/// A triangular matrix of nonnegative integers `m^{ab}` with
/// `1 <= b < a <= n`, the summation datum of the closed forms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MMatrix {
    n: usize,
    /// `rows[a - 2][b - 1] = m^{ab}` for `2 <= a <= n`, `1 <= b < a`.
    rows: Vec<Vec<usize>>,
}

impl MMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    /// `m^{ab}`, honouring the conventions `m^{a0} = 0` and `m^{n+1,b} = 0`.
    pub fn get(&self, a: usize, b: usize) -> usize {
        if b == 0 || a > self.n {
            return 0;
        }
        self.rows[a - 2][b - 1]
    }

    /// Partial column sum `m^{b+1,b} + ... + m^{a-1,b}`.
    pub fn tilde(&self, a: usize, b: usize) -> usize {
        (b + 1..a).map(|c| self.get(c, b)).sum()
    }

    /// Partial row sum `m^{a1} + ... + m^{ab}`.
    pub fn hat(&self, a: usize, b: usize) -> usize {
        (1..=b).map(|c| self.get(a, c)).sum()
    }

    /// Enumerates matrices with nondecreasing rows
    /// (`m^{a1} <= ... <= m^{a,a-1}`) and fixed column sums
    /// (`m^{b+1,b} + ... + m^{nb} = xi^b`).
    pub fn enumerate_last(n: usize, xi: &Composition) -> Vec<MMatrix> {
        assert_eq!(xi.len(), n - 1, "profile must have n - 1 blocks");
        let mut out = Vec::new();
        let rows = vec![vec![0usize; 0]; 0];
        let mut m = MMatrix {
            n,
            rows: (2..=n).map(|a| vec![0usize; a - 1]).collect(),
        };
        drop(rows);
        // Fill columns left to right; inside a column, rows top to bottom.
        fn fill_column(
            n: usize,
            xi: &Composition,
            b: usize,
            a: usize,
            left: usize,
            m: &mut MMatrix,
            out: &mut Vec<MMatrix>,
        ) {
            if a > n {
                if left != 0 {
                    return;
                }
                if b + 1 < n {
                    fill_column(n, xi, b + 1, b + 2, xi.parts()[b], m, out);
                } else {
                    out.push(m.clone());
                }
                return;
            }
            // Row monotonicity against the previous column: m^{ab} >= m^{a,b-1}.
            let lo = if b >= 2 { m.get(a, b - 1) } else { 0 };
            for v in lo..=left {
                m.rows[a - 2][b - 1] = v;
                fill_column(n, xi, b, a + 1, left - v, m, out);
            }
            m.rows[a - 2][b - 1] = 0;
        }
        fill_column(n, xi, 1, 2, xi.parts()[0], &mut m, &mut out);
        out
    }

    /// Enumerates matrices with nonincreasing columns
    /// (`m^{a+1,b} >= m^{a+2,b} >= ...`) and fixed row sums
    /// (`m^{a+1,1} + ... + m^{a+1,a} = xi^a`).
    pub fn enumerate_first(n: usize, xi: &Composition) -> Vec<MMatrix> {
        assert_eq!(xi.len(), n - 1, "profile must have n - 1 blocks");
        let mut out = Vec::new();
        let mut m = MMatrix {
            n,
            rows: (2..=n).map(|a| vec![0usize; a - 1]).collect(),
        };
        // Fill rows top to bottom; inside a row, columns left to right.
        fn fill_row(
            n: usize,
            xi: &Composition,
            a: usize,
            b: usize,
            left: usize,
            m: &mut MMatrix,
            out: &mut Vec<MMatrix>,
        ) {
            if b == a {
                if left != 0 {
                    return;
                }
                if a < n {
                    fill_row(n, xi, a + 1, 1, xi.parts()[a - 1], m, out);
                } else {
                    out.push(m.clone());
                }
                return;
            }
            // Column monotonicity against the previous row: m^{ab} <= m^{a-1,b}.
            // The top entry of each column (b = a - 1) is unconstrained.
            let hi = if b + 1 < a { m.get(a - 1, b).min(left) } else { left };
            for v in 0..=hi {
                m.rows[a - 2][b - 1] = v;
                fill_row(n, xi, a, b + 1, left - v, m, out);
            }
            m.rows[a - 2][b - 1] = 0;
        }
        fill_row(n, xi, 2, 1, xi.parts()[0], &mut m, &mut out);
        out
    }
}

/// Ordered list of `(row, col, exponent)` letters for one matrix, leftmost
/// first, together with the counting coefficient of the word.
fn closed_word(
    case: Case,
    q: Option<&Scalar>,
    direction: Direction,
    m: &MMatrix,
) -> Result<(Vec<(usize, usize, usize)>, Scalar), FormulasError> {
    let n = m.n();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for a in 2..=n {
        for b in 1..a {
            pairs.push((a, b));
        }
    }
    pairs.sort_by(|x, y| {
        if letter_precedes(direction, *x, *y) {
            std::cmp::Ordering::Less
        } else {
            std::cmp::Ordering::Greater
        }
    });
    let mut letters = Vec::new();
    let mut coef = Scalar::one();
    for (a, b) in pairs {
        let (exp, anchor) = match direction {
            Direction::Last => {
                let prev = m.get(a, b - 1);
                (m.get(a, b) - prev, prev)
            }
            Direction::First => {
                let next = m.get(a + 1, b);
                (m.get(a, b) - next, next)
            }
        };
        coef = coef.div(&count_factor(case, q, exp)?)?;
        if case == Case::Trigonometric {
            let q = expect_q(q)?;
            // The deformation powers carry opposite signs in the two
            // directions: peeling last uses anchor*(anchor - m), peeling
            // first uses anchor*(m - anchor).
            let spread = m.get(a, b) as i64 - anchor as i64;
            let power = match direction {
                Direction::Last => -(anchor as i64) * spread,
                Direction::First => (anchor as i64) * spread,
            };
            coef = &coef * &q.pow(power)?;
        }
        letters.push((a, b, exp));
    }
    Ok((letters, coef))
}

/// Evaluates the weight-function image on a single-factor carrier as a sum
/// over triangular matrices, fully unrolled.
pub fn closed_form(
    asm: &Assembly,
    xi: &Composition,
    t: &VarCollection,
    direction: Direction,
) -> Result<Vec<Scalar>, FormulasError> {
    let module = single_factor(asm)?;
    let n = module.n;
    if xi.len() + 1 != n {
        return Err(FormulasError::Shape {
            reason: format!("profile with {} blocks does not fit rank {}", xi.len(), n),
        });
    }
    check_variables(xi, t)?;
    let case = asm.case;
    let q = asm.q.as_ref();
    let weight = &module.weight;
    let x = &module.x;

    // Global prefactor.
    let mut prefactor = Scalar::one();
    match case {
        Case::Rational => {
            for (a, block) in t.blocks().iter().enumerate() {
                for (i, point) in block.iter().enumerate() {
                    prefactor = &prefactor
                        * &gap_site(point, x, || {
                            format!("t^{{{}}}_{{{}}} - x", a + 1, i + 1)
                        })?;
                }
            }
        }
        Case::Trigonometric => {
            let q = expect_q(q)?;
            let spread = &q.pow(1)? - &q.pow(-1)?;
            prefactor = spread.pow(xi.size() as i64)?;
        }
    }

    let matrices = match direction {
        Direction::Last => MMatrix::enumerate_last(n, xi),
        Direction::First => MMatrix::enumerate_first(n, xi),
    };
    let mut total = vec![Scalar::zero(); module.dim];
    for m in &matrices {
        let (letters, coef) = closed_word(case, q, direction, m)?;
        let carrier = apply_word(case, module, &letters, &module.singular)?;
        if carrier.iter().all(Scalar::is_zero) {
            continue;
        }
        let scal = sym_bar::<Scalar>(case, q, t, &mut |sigma_t| {
            closed_scalar(case, q, direction, m, weight, x, xi, sigma_t)
        })?;
        let factor = &coef * &scal;
        for (acc, term) in total.iter_mut().zip(&carrier.scaled(&factor)) {
            *acc += term;
        }
    }
    Ok(total.scaled(&prefactor))
}

/// The triangular scalar attached to one matrix at one (permuted) point.
#[allow(clippy::too_many_arguments)]
fn closed_scalar(
    case: Case,
    q: Option<&Scalar>,
    direction: Direction,
    m: &MMatrix,
    weight: &[i64],
    x: &Scalar,
    xi: &Composition,
    t: &VarCollection,
) -> Result<Scalar, FormulasError> {
    let n = m.n();
    let mut out = Scalar::one();
    match direction {
        Direction::Last => {
            for a in 3..=n {
                for b in 1..=a - 2 {
                    for i in 1..=m.get(a, b) {
                        let lo = t.get(b, i + m.tilde(a, b));
                        let hi = t.get(b + 1, i + m.tilde(a, b + 1));
                        let num = peel_numerator(case, q, lo, x, weight[b])?;
                        let den = hi - lo;
                        if den.is_zero() {
                            return Err(FormulasError::Pole {
                                factor: format!(
                                    "t^{{{}}}_{{{}}} - t^{{{b}}}_{{{}}}",
                                    b + 1,
                                    i + m.tilde(a, b + 1),
                                    i + m.tilde(a, b)
                                ),
                            });
                        }
                        out = &out * &num.div(&den)?;
                        for j in 1..i + m.tilde(a, b + 1) {
                            out = &out
                                * &shifted_site(case, q, t.get(b + 1, j), lo, || {
                                    format!(
                                        "t^{{{}}}_{{{j}}} - t^{{{b}}}_{{{}}}",
                                        b + 1,
                                        i + m.tilde(a, b)
                                    )
                                })?;
                        }
                    }
                }
            }
        }
        Direction::First => {
            for a in 2..n {
                for b in 1..a {
                    for i in 0..m.get(a + 1, b) {
                        let hi = t.get(a, m.hat(a + 1, b) - i);
                        let lo = t.get(a - 1, m.hat(a, b) - i);
                        let num = peel_numerator(case, q, hi, x, weight[a - 1])?;
                        let den = hi - lo;
                        if den.is_zero() {
                            return Err(FormulasError::Pole {
                                factor: format!(
                                    "t^{{{a}}}_{{{}}} - t^{{{}}}_{{{}}}",
                                    m.hat(a + 1, b) - i,
                                    a - 1,
                                    m.hat(a, b) - i
                                ),
                            });
                        }
                        out = &out * &num.div(&den)?;
                        for j in (m.hat(a, b) - i + 1)..=xi.parts()[a - 2] {
                            out = &out
                                * &shifted_site(case, q, hi, t.get(a - 1, j), || {
                                    format!(
                                        "t^{{{a}}}_{{{}}} - t^{{{}}}_{{{j}}}",
                                        m.hat(a + 1, b) - i,
                                        a - 1
                                    )
                                })?;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Numerator `(t - x + L)` (rational) or `(q^L t - q^{-L} x)`
/// (trigonometric) of a peeled site whose denominator is supplied by the
/// caller.
fn peel_numerator(
    case: Case,
    q: Option<&Scalar>,
    t: &Scalar,
    x: &Scalar,
    lam: i64,
) -> Result<Scalar, FormulasError> {
    match case {
        Case::Rational => Ok(&(t - x) + &Scalar::from_int(lam)),
        Case::Trigonometric => {
            let q = expect_q(q)?;
            Ok(&(&q.pow(lam)? * t) - &(&q.pow(-lam)? * x))
        }
    }
}

// ---------------------------------------------------------------------------
// Tensor splitting.
// ---------------------------------------------------------------------------

/// How to factor the image over a tensor product of carriers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitArity {
    /// Split the first factor off and recurse on the remaining ones.
    Binary,
    /// One sum over chains of subprofiles, one slice per factor.
    Chain,
}

/// Evaluates the weight-function image on a multi-factor carrier by
/// distributing the variable profile over the factors.  Single factors are
/// evaluated by the fully unrolled closed form, keeping this route
/// independent of the auxiliary-space construction.
pub fn tensor_split(
    asm: &Assembly,
    xi: &Composition,
    t: &VarCollection,
    arity: SplitArity,
) -> Result<Vec<Scalar>, FormulasError> {
    if xi.len() + 1 != asm.n() {
        return Err(FormulasError::Shape {
            reason: format!(
                "profile with {} blocks does not fit rank {}",
                xi.len(),
                asm.n()
            ),
        });
    }
    check_variables(xi, t)?;
    match arity {
        SplitArity::Binary => split_binary(asm, xi, t),
        SplitArity::Chain => split_chain(asm, xi, t),
    }
}

fn sub_assembly(asm: &Assembly, range: std::ops::Range<usize>) -> Assembly {
    Assembly {
        case: asm.case,
        q: asm.q.clone(),
        factors: asm.factors[range].iter().map(Arc::clone).collect(),
    }
}

/// All componentwise splittings `0 <= eta <= xi`.
fn profiles_below(xi: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &cap in xi {
        let mut next = Vec::new();
        for prefix in &out {
            for v in 0..=cap {
                let mut item = prefix.clone();
                item.push(v);
                next.push(item);
            }
        }
        out = next;
    }
    out
}

fn kron_coordinates(left: &[Scalar], right: &[Scalar]) -> Vec<Scalar> {
    let mut out = Vec::with_capacity(left.len() * right.len());
    for l in left {
        for r in right {
            out.push(l * r);
        }
    }
    out
}

fn split_binary(
    asm: &Assembly,
    xi: &Composition,
    t: &VarCollection,
) -> Result<Vec<Scalar>, FormulasError> {
    if asm.factors.len() == 1 {
        return closed_form(asm, xi, t, Direction::Last);
    }
    let case = asm.case;
    let q = asm.q.as_ref();
    let n = asm.n();
    let head_asm = sub_assembly(asm, 0..1);
    let tail_asm = sub_assembly(asm, 1..asm.factors.len());
    let mut total = vec![Scalar::zero(); asm.dim()];
    for eta in profiles_below(xi.parts()) {
        let mut coef = Scalar::one();
        for (a, (&full, &h)) in xi.parts().iter().zip(&eta).enumerate() {
            let _ = a;
            coef = coef.div(&count_factor(case, q, full - h)?)?;
            coef = coef.div(&count_factor(case, q, h)?)?;
        }
        let remainder: Vec<usize> = xi.parts().iter().zip(&eta).map(|(&f, &h)| f - h).collect();
        let value = sym_bar::<Vec<Scalar>>(case, q, t, &mut |sigma_t| {
            // Cross factor between consecutive blocks of the two slices.
            let mut scal = Scalar::one();
            for a in 1..n - 1 {
                for i in 1..=eta[a] {
                    for j in eta[a - 1] + 1..=xi.parts()[a - 1] {
                        scal = &scal
                            * &shifted_site(case, q, sigma_t.get(a + 1, i), sigma_t.get(a, j), || {
                                format!("t^{{{}}}_{{{i}}} - t^{{{a}}}_{{{j}}}", a + 1)
                            })?;
                    }
                }
            }
            // Diagonal eigenvalues: head entries against the remaining
            // factors, tail entries against the first factor.
            for a in 1..n {
                for i in 1..=eta[a - 1] {
                    for r in 1..asm.factors.len() {
                        scal = &scal * &asm.diagonal_eigenvalue(r, a, sigma_t.get(a, i))?;
                    }
                }
                for j in eta[a - 1] + 1..=xi.parts()[a - 1] {
                    scal = &scal * &asm.diagonal_eigenvalue(0, a + 1, sigma_t.get(a, j))?;
                }
            }
            let left = closed_form(
                &head_asm,
                &Composition::new(eta.clone()),
                &sigma_t.head(&eta),
                Direction::Last,
            )?;
            let right = split_binary(
                &tail_asm,
                &Composition::new(remainder.clone()),
                &sigma_t.tail(&eta),
            )?;
            Ok(kron_coordinates(&left, &right).scaled(&scal))
        })?;
        for (acc, term) in total.iter_mut().zip(&value.scaled(&coef)) {
            *acc += term;
        }
    }
    Ok(total)
}

/// All chains `0 = eta_0 <= eta_1 <= ... <= eta_k = xi` (componentwise),
/// returned as the list of intermediate profiles plus the endpoints.
fn profile_chains(xi: &[usize], links: usize) -> Vec<Vec<Vec<usize>>> {
    let mut chains = vec![vec![vec![0usize; xi.len()]]];
    for step in 1..=links {
        let mut next = Vec::new();
        for chain in &chains {
            let prev = chain.last().expect("chain is nonempty");
            let tops: Vec<Vec<usize>> = if step == links {
                vec![xi.to_vec()]
            } else {
                // All profiles between prev and xi.
                let mut opts = vec![Vec::new()];
                for (a, (&lo, &hi)) in prev.iter().zip(xi).enumerate() {
                    let _ = a;
                    let mut grown = Vec::new();
                    for prefix in &opts {
                        for v in lo..=hi {
                            let mut item = prefix.clone();
                            item.push(v);
                            grown.push(item);
                        }
                    }
                    opts = grown;
                }
                opts
            };
            for top in tops {
                if top.iter().zip(prev).all(|(&t, &p)| t >= p) {
                    let mut longer = chain.clone();
                    longer.push(top);
                    next.push(longer);
                }
            }
        }
        chains = next;
    }
    chains
}

fn split_chain(
    asm: &Assembly,
    xi: &Composition,
    t: &VarCollection,
) -> Result<Vec<Scalar>, FormulasError> {
    let case = asm.case;
    let q = asm.q.as_ref();
    let n = asm.n();
    let factors = asm.factors.len();
    let mut total = vec![Scalar::zero(); asm.dim()];
    for chain in profile_chains(xi.parts(), factors) {
        let mut coef = Scalar::one();
        for r in 1..=factors {
            for a in 0..xi.len() {
                coef = coef.div(&count_factor(case, q, chain[r][a] - chain[r - 1][a])?)?;
            }
        }
        let value = sym_bar::<Vec<Scalar>>(case, q, t, &mut |sigma_t| {
            let mut scal = Scalar::one();
            // Cross factors between consecutive slices.
            for a in 1..n - 1 {
                for r in 1..factors {
                    for i in chain[r - 1][a] + 1..=chain[r][a] {
                        for j in chain[r][a - 1] + 1..=xi.parts()[a - 1] {
                            scal = &scal
                                * &shifted_site(
                                    case,
                                    q,
                                    sigma_t.get(a + 1, i),
                                    sigma_t.get(a, j),
                                    || format!("t^{{{}}}_{{{i}}} - t^{{{a}}}_{{{j}}}", a + 1),
                                )?;
                        }
                    }
                }
            }
            // Diagonal eigenvalues per factor.
            for a in 1..n {
                for (r, _) in asm.factors.iter().enumerate() {
                    for i in 1..=chain[r][a - 1] {
                        scal = &scal * &asm.diagonal_eigenvalue(r, a, sigma_t.get(a, i))?;
                    }
                    for j in chain[r + 1][a - 1] + 1..=xi.parts()[a - 1] {
                        scal = &scal * &asm.diagonal_eigenvalue(r, a + 1, sigma_t.get(a, j))?;
                    }
                }
            }
            // One slice of the profile per factor.
            let mut coords = vec![Scalar::one()];
            for (r, _) in asm.factors.iter().enumerate() {
                let slice_shape: Vec<usize> = chain[r + 1]
                    .iter()
                    .zip(&chain[r])
                    .map(|(&hi, &lo)| hi - lo)
                    .collect();
                let slice_vars = sigma_t.head(&chain[r + 1]).tail(&chain[r]);
                let part = closed_form(
                    &sub_assembly(asm, r..r + 1),
                    &Composition::new(slice_shape),
                    &slice_vars,
                    Direction::Last,
                )?;
                coords = kron_coordinates(&coords, &part);
            }
            Ok(coords.scaled(&scal))
        })?;
        for (acc, term) in total.iter_mut().zip(&value.scaled(&coef)) {
            *acc += term;
        }
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Auxiliary ladder kernels used by the identity suite.
// ---------------------------------------------------------------------------

/// Distributed ladder factor attached to strictly increasing index picks
/// `l^a_1 < ... < l^a_{eta^{a+1}}` inside each block.
pub fn aux_f(s: &VarCollection, picks: &[Vec<usize>]) -> Result<Scalar, FormulasError> {
    let blocks = s.blocks().len();
    if picks.len() + 1 != blocks {
        return Err(FormulasError::Shape {
            reason: format!(
                "expected {} pick rows for {} blocks, got {}",
                blocks - 1,
                blocks,
                picks.len()
            ),
        });
    }
    let mut out = Scalar::one();
    for a in 1..blocks {
        let row = &picks[a - 1];
        if row.len() != s.block(a + 1).len() {
            return Err(FormulasError::Shape {
                reason: format!(
                    "pick row {a} must have one index per entry of block {}",
                    a + 1
                ),
            });
        }
        if row.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FormulasError::Shape {
                reason: format!("pick row {a} must be strictly increasing"),
            });
        }
        for (i, &l) in row.iter().enumerate() {
            if l == 0 || l > s.block(a).len() {
                return Err(FormulasError::Shape {
                    reason: format!("pick {l} in row {a} is out of range"),
                });
            }
            let hi = s.get(a + 1, i + 1);
            out = &out
                * &gap_site(hi, s.get(a, l), || {
                    format!("s^{{{}}}_{{{}}} - s^{{{a}}}_{{{l}}}", a + 1, i + 1)
                })?;
            for j in l + 1..=s.block(a).len() {
                out = &out
                    * &shifted_site(Case::Rational, None, hi, s.get(a, j), || {
                        format!("s^{{{}}}_{{{}}} - s^{{{a}}}_{{{j}}}", a + 1, i + 1)
                    })?;
            }
        }
    }
    Ok(out)
}

/// Pairwise ladder kernel: the weighted symmetrization over `z` of the
/// aligned product of gaps and shifted sites, divided by `(r - p)!`.
pub fn aux_g(y: &[Scalar], z: &[Scalar]) -> Result<Scalar, FormulasError> {
    let p = y.len();
    let r = z.len();
    if p > r {
        return Err(FormulasError::Shape {
            reason: format!("the ladder kernel needs p <= r, got p = {p}, r = {r}"),
        });
    }
    let t = VarCollection::new(vec![z.to_vec()]);
    let sum = sym_bar::<Scalar>(Case::Rational, None, &t, &mut |sigma| {
        let mut out = Scalar::one();
        for i in 1..=p {
            out = &out
                * &gap_site(&y[i - 1], sigma.get(1, i + r - p), || {
                    format!("y_{{{i}}} - z_{{{}}}", i + r - p)
                })?;
            for j in i + 1..=p {
                out = &out
                    * &shifted_site(Case::Rational, None, &y[i - 1], sigma.get(1, j + r - p), || {
                        format!("y_{{{i}}} - z_{{{}}}", j + r - p)
                    })?;
            }
        }
        Ok(out)
    })?;
    Ok(sum.div(&Scalar::factorial(r - p))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reps::ModuleSpec;
    use crate::reps::Realization;
    use crate::trace::weight_trace_apply;

    fn sc(n: i64, d: i64) -> Scalar {
        Scalar::new(n, d).expect("nonzero denominator")
    }

    fn vector_assembly(case: Case, n: usize, x: Scalar, q: Option<Scalar>) -> Assembly {
        Assembly::build(
            case,
            q.as_ref(),
            &[ModuleSpec {
                n,
                realization: Realization::Vector,
                x,
                weight: None,
            }],
        )
        .expect("assembly builds")
    }

    fn collect(xi: &[usize], values: &[Scalar]) -> VarCollection {
        let mut blocks = Vec::new();
        let mut it = values.iter().cloned();
        for &k in xi {
            blocks.push((&mut it).take(k).collect());
        }
        VarCollection::new(blocks)
    }

    fn oracle(asm: &Assembly, xi: &Composition, t: &VarCollection) -> Vec<Scalar> {
        let node = asm.node();
        let columns = vec![asm.joint_singular()];
        let mut images =
            weight_trace_apply(asm.case, asm.q.as_ref(), &node, xi, t, &columns)
                .expect("trace route evaluates");
        images.pop().expect("one column in, one column out")
    }

    fn assert_all_routes(asm: &Assembly, xi: &Composition, t: &VarCollection) {
        let reference = oracle(asm, xi, t);
        let last = rank_recursion(asm, xi, t, Direction::Last).expect("peel-last evaluates");
        assert_eq!(last, reference, "peel-last disagrees with the trace route");
        let first = rank_recursion(asm, xi, t, Direction::First).expect("peel-first evaluates");
        assert_eq!(first, reference, "peel-first disagrees with the trace route");
        let closed_last = closed_form(asm, xi, t, Direction::Last).expect("closed-last evaluates");
        assert_eq!(
            closed_last, reference,
            "closed-last disagrees with the trace route"
        );
        let closed_first =
            closed_form(asm, xi, t, Direction::First).expect("closed-first evaluates");
        assert_eq!(
            closed_first, reference,
            "closed-first disagrees with the trace route"
        );
    }

    #[test]
    fn letter_order_matches_the_expected_words() {
        let mut pairs = vec![(2, 1), (3, 1), (3, 2)];
        pairs.sort_by(|x, y| {
            if letter_precedes(Direction::Last, *x, *y) {
                std::cmp::Ordering::Less
            } else {
                std::cmp::Ordering::Greater
            }
        });
        assert_eq!(pairs, vec![(3, 2), (3, 1), (2, 1)]);
        let mut pairs = vec![(2, 1), (3, 1), (3, 2)];
        pairs.sort_by(|x, y| {
            if letter_precedes(Direction::First, *x, *y) {
                std::cmp::Ordering::Less
            } else {
                std::cmp::Ordering::Greater
            }
        });
        assert_eq!(pairs, vec![(2, 1), (3, 1), (3, 2)]);
    }

    #[test]
    fn q_numbers_and_factorials() {
        let q = sc(2, 1);
        assert_eq!(q_number(2, &q).unwrap(), sc(5, 2));
        assert_eq!(q_factorial(3, &q).unwrap(), sc(105, 8));
        // [k]_q is invariant under q -> 1/q.
        let qinv = sc(1, 2);
        assert_eq!(q_number(3, &q).unwrap(), q_number(3, &qinv).unwrap());
    }

    #[test]
    fn symmetrized_weights_count_permutations() {
        // Sym-bar of the constant 1 over a single block of size k gives k!
        // (rational) and [k]_q! (trigonometric).
        let t = VarCollection::new(vec![vec![sc(2, 1), sc(7, 2), sc(5, 1)]]);
        let rational =
            sym_bar::<Scalar>(Case::Rational, None, &t, &mut |_| Ok(Scalar::one())).unwrap();
        assert_eq!(rational, Scalar::factorial(3));
        let q = sc(2, 1);
        let trig =
            sym_bar::<Scalar>(Case::Trigonometric, Some(&q), &t, &mut |_| Ok(Scalar::one()))
                .unwrap();
        assert_eq!(trig, q_factorial(3, &q).unwrap());
    }

    #[test]
    fn matrix_enumeration_respects_both_constraint_sets() {
        let xi = Composition::new(vec![1, 1]);
        let last = MMatrix::enumerate_last(3, &xi);
        assert_eq!(last.len(), 2);
        for m in &last {
            assert_eq!(m.get(2, 1) + m.get(3, 1), 1);
            assert_eq!(m.get(3, 2), 1);
            assert!(m.get(3, 1) <= m.get(3, 2));
        }
        let first = MMatrix::enumerate_first(3, &xi);
        assert_eq!(first.len(), 2);
        for m in &first {
            assert_eq!(m.get(2, 1), 1);
            assert_eq!(m.get(3, 1) + m.get(3, 2), 1);
            assert!(m.get(2, 1) >= m.get(3, 1));
        }
        // Against a brute-force filter on a bigger profile.
        let xi = Composition::new(vec![2, 1, 1]);
        let fast = MMatrix::enumerate_last(4, &xi);
        let mut brute = 0usize;
        let cap = 2usize;
        for m21 in 0..=cap {
            for m31 in 0..=cap {
                for m32 in 0..=cap {
                    for m41 in 0..=cap {
                        for m42 in 0..=cap {
                            for m43 in 0..=cap {
                                let rows_ok = m21 <= cap
                                    && m31 <= m32
                                    && m41 <= m42
                                    && m42 <= m43;
                                let cols_ok = m21 + m31 + m41 == 2
                                    && m32 + m42 == 1
                                    && m43 == 1;
                                if rows_ok && cols_ok {
                                    brute += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(fast.len(), brute);
    }

    #[test]
    fn rational_routes_agree_at_rank_two() {
        let asm = vector_assembly(Case::Rational, 2, sc(1, 3), None);
        let xi = Composition::new(vec![1]);
        let t = collect(&[1], &[sc(5, 2)]);
        assert_all_routes(&asm, &xi, &t);
        let xi = Composition::new(vec![2]);
        let t = collect(&[2], &[sc(5, 2), sc(-3, 2)]);
        assert_all_routes(&asm, &xi, &t);
    }

    #[test]
    fn rational_routes_agree_at_rank_three() {
        let asm = vector_assembly(Case::Rational, 3, sc(1, 3), None);
        for (shape, points) in [
            (vec![1usize, 1], vec![sc(5, 2), sc(-3, 2)]),
            (vec![2, 1], vec![sc(5, 2), sc(-3, 2), sc(7, 3)]),
            (vec![1, 2], vec![sc(5, 2), sc(-3, 2), sc(7, 3)]),
        ] {
            let xi = Composition::new(shape.clone());
            let t = collect(&shape, &points);
            assert_all_routes(&asm, &xi, &t);
        }
    }

    #[test]
    fn rational_routes_agree_on_other_realizations() {
        for realization in [Realization::WedgePower { k: 2 }, Realization::SymmetricPower { k: 2 }]
        {
            let asm = Assembly::build(
                Case::Rational,
                None,
                &[ModuleSpec {
                    n: 3,
                    realization,
                    x: sc(1, 3),
                    weight: None,
                }],
            )
            .unwrap();
            let shape = vec![1usize, 1];
            let xi = Composition::new(shape.clone());
            let t = collect(&shape, &[sc(5, 2), sc(-3, 2)]);
            assert_all_routes(&asm, &xi, &t);
        }
    }

    #[test]
    fn trigonometric_routes_agree() {
        let q = sc(2, 1);
        let asm = vector_assembly(Case::Trigonometric, 2, sc(1, 3), Some(q.clone()));
        let xi = Composition::new(vec![2]);
        let t = collect(&[2], &[sc(5, 2), sc(-3, 2)]);
        assert_all_routes(&asm, &xi, &t);

        let asm = vector_assembly(Case::Trigonometric, 3, sc(1, 3), Some(q.clone()));
        for (shape, points) in [
            (vec![1usize, 1], vec![sc(5, 2), sc(-3, 2)]),
            (vec![2, 1], vec![sc(5, 2), sc(-3, 2), sc(7, 3)]),
        ] {
            let xi = Composition::new(shape.clone());
            let t = collect(&shape, &points);
            assert_all_routes(&asm, &xi, &t);
        }

        let asm = Assembly::build(
            Case::Trigonometric,
            Some(&q),
            &[ModuleSpec {
                n: 3,
                realization: Realization::WedgePower { k: 2 },
                x: sc(1, 3),
                weight: None,
            }],
        )
        .unwrap();
        let shape = vec![1usize, 1];
        let xi = Composition::new(shape.clone());
        let t = collect(&shape, &[sc(5, 2), sc(-3, 2)]);
        assert_all_routes(&asm, &xi, &t);
    }

    // On symmetric squares the unrolled words keep terms whose carriers
    // vanish on the vector representation, so the direction-dependent
    // deformation powers of the word coefficients are only visible here.
    #[test]
    fn trigonometric_symmetric_square_closed_forms_agree() {
        for q in [sc(2, 1), sc(2, 3)] {
            let asm = Assembly::build(
                Case::Trigonometric,
                Some(&q),
                &[ModuleSpec {
                    n: 3,
                    realization: Realization::SymmetricPower { k: 2 },
                    x: sc(1, 3),
                    weight: None,
                }],
            )
            .unwrap();
            let shape = vec![2usize, 1];
            let xi = Composition::new(shape.clone());
            let t = collect(&shape, &[sc(5, 2), sc(-3, 2), sc(7, 3)]);
            assert_all_routes(&asm, &xi, &t);
        }
    }

    #[test]
    fn binary_splitting_matches_the_trace_route() {
        let spec = |x: Scalar| ModuleSpec {
            n: 3,
            realization: Realization::Vector,
            x,
            weight: None,
        };
        let asm = Assembly::build(Case::Rational, None, &[spec(sc(1, 3)), spec(sc(-2, 5))])
            .unwrap();
        let shape = vec![1usize, 1];
        let xi = Composition::new(shape.clone());
        let t = collect(&shape, &[sc(5, 2), sc(-3, 2)]);
        let reference = oracle(&asm, &xi, &t);
        let split = tensor_split(&asm, &xi, &t, SplitArity::Binary).unwrap();
        assert_eq!(split, reference);
        let chain = tensor_split(&asm, &xi, &t, SplitArity::Chain).unwrap();
        assert_eq!(chain, reference);
    }

    #[test]
    fn chain_splitting_matches_iterated_binary_on_three_factors() {
        let spec = |x: Scalar| ModuleSpec {
            n: 2,
            realization: Realization::Vector,
            x,
            weight: None,
        };
        let asm = Assembly::build(
            Case::Rational,
            None,
            &[spec(sc(1, 3)), spec(sc(-2, 5)), spec(sc(4, 7))],
        )
        .unwrap();
        let shape = vec![2usize];
        let xi = Composition::new(shape.clone());
        let t = collect(&shape, &[sc(5, 2), sc(-3, 2)]);
        let reference = oracle(&asm, &xi, &t);
        let binary = tensor_split(&asm, &xi, &t, SplitArity::Binary).unwrap();
        let chain = tensor_split(&asm, &xi, &t, SplitArity::Chain).unwrap();
        assert_eq!(binary, reference);
        assert_eq!(chain, reference);
    }

    #[test]
    fn trigonometric_splitting_matches_the_trace_route() {
        let q = sc(2, 1);
        let spec = |x: Scalar| ModuleSpec {
            n: 3,
            realization: Realization::Vector,
            x,
            weight: None,
        };
        let asm = Assembly::build(
            Case::Trigonometric,
            Some(&q),
            &[spec(sc(1, 3)), spec(sc(-2, 5))],
        )
        .unwrap();
        let shape = vec![1usize, 1];
        let xi = Composition::new(shape.clone());
        let t = collect(&shape, &[sc(5, 2), sc(-3, 2)]);
        let reference = oracle(&asm, &xi, &t);
        let split = tensor_split(&asm, &xi, &t, SplitArity::Binary).unwrap();
        assert_eq!(split, reference);
        let chain = tensor_split(&asm, &xi, &t, SplitArity::Chain).unwrap();
        assert_eq!(chain, reference);
    }

    #[test]
    fn ladder_factors_never_read_dead_entries() {
        // Nondecreasing ladder: the tail of the last block is dead.
        let eta = vec![1usize, 2];
        let t = collect(&eta, &[sc(5, 2), sc(-3, 2), sc(7, 3)]);
        let base = x_factor(Case::Rational, None, &eta, &t).unwrap();
        let mut junk = t.blocks().to_vec();
        junk[1][1] = sc(999, 1);
        let t_junk = VarCollection::new(junk);
        assert_eq!(base, x_factor(Case::Rational, None, &eta, &t_junk).unwrap());

        // Nonincreasing ladder: the head of the first block is dead.
        let eta = vec![2usize, 1];
        let t = collect(&eta, &[sc(5, 2), sc(-3, 2), sc(7, 3)]);
        let base = y_factor(Case::Rational, None, &eta, &t).unwrap();
        let mut junk = t.blocks().to_vec();
        junk[0][0] = sc(999, 1);
        let t_junk = VarCollection::new(junk);
        assert_eq!(base, y_factor(Case::Rational, None, &eta, &t_junk).unwrap());

        // Cross factor: first block of `t`, last block of `s` are dead.
        let t = collect(&[1, 1], &[sc(5, 2), sc(-3, 2)]);
        let s = collect(&[1, 1], &[sc(7, 3), sc(11, 5)]);
        let base = z_factor(Case::Rational, None, &t, &s).unwrap();
        let mut t_junk = t.blocks().to_vec();
        t_junk[0][0] = sc(999, 1);
        let mut s_junk = s.blocks().to_vec();
        s_junk[1][0] = sc(-999, 1);
        assert_eq!(
            base,
            z_factor(
                Case::Rational,
                None,
                &VarCollection::new(t_junk),
                &VarCollection::new(s_junk)
            )
            .unwrap()
        );
    }

    #[test]
    fn symmetrization_errors_name_the_permutation() {
        let t = VarCollection::new(vec![vec![sc(1, 1), sc(2, 1)]]);
        let err = sym_bar::<Scalar>(Case::Rational, None, &t, &mut |sigma| {
            // Fails exactly when the block is presented in swapped order.
            if sigma.get(1, 1) == &sc(2, 1) {
                Err(FormulasError::Pole {
                    factor: "synthetic".into(),
                })
            } else {
                Ok(Scalar::one())
            }
        })
        .unwrap_err();
        match err {
            FormulasError::AtPermutation { permutation, inner } => {
                assert_eq!(permutation, "(2 1)");
                assert!(matches!(*inner, FormulasError::Pole { .. }));
            }
            other => panic!("expected an annotated error, got {other}"),
        }
    }

    #[test]
    fn ladder_kernel_is_symmetric_in_the_upper_points() {
        let y = [sc(5, 2), sc(-3, 2)];
        let z = [sc(7, 3), sc(11, 5), sc(-1, 4)];
        let direct = aux_g(&y, &z).unwrap();
        let swapped = aux_g(&[y[1].clone(), y[0].clone()], &z).unwrap();
        assert_eq!(direct, swapped);
    }

    #[test]
    fn distributed_ladder_sums_recover_the_kernel_product() {
        // Sum of weighted symmetrizations of the distributed factor over all
        // picks equals the product of pairwise kernels (three blocks).
        let eta = vec![2usize, 1, 1];
        let s = collect(&eta, &[sc(5, 2), sc(-3, 2), sc(7, 3), sc(11, 5)]);
        let mut total = Scalar::zero();
        for l1 in 1..=2usize {
            let picks = vec![vec![l1], vec![1usize]];
            // Symmetrize over the blocks 2.. of `s` only.
            let inner = s.drop_first();
            let first_block = s.block(1).to_vec();
            let value = sym_bar::<Scalar>(Case::Rational, None, &inner, &mut |sigma| {
                let mut blocks = vec![first_block.clone()];
                blocks.extend(sigma.blocks().iter().cloned());
                aux_f(&VarCollection::new(blocks), &picks)
            })
            .unwrap();
            total += &value;
        }
        let expected = &aux_g(
            &[s.get(2, 1).clone()],
            &[s.get(1, 1).clone(), s.get(1, 2).clone()],
        )
        .unwrap()
            * &aux_g(&[s.get(3, 1).clone()], &[s.get(2, 1).clone()]).unwrap();
        assert_eq!(total, expected);
    }
}
