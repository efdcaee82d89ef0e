//! Executable verification of every identity the library relies on.
//!
//! The harness turns each algebraic fact into a randomized exact check:
//! R-matrix properties (Yang-Baxter, inversion), the defining exchange
//! relations of monodromy entries on module assemblies, the submatrix
//! exchange relations used by the recursion proofs, the rational-function
//! identity lemmas, and the full cross-route equivalence grid.  Every check
//! evaluates both sides by independent code paths at random exact points
//! and compares them entry by entry; there are no tolerances.
//!
//! Results are [`ReportEntry`] values with verdict `pass`, `fail`, or
//! `skipped`.  Random points that hit a listed pole are resampled up to a
//! bound and then recorded as skipped with the vanishing factor named —
//! never silently dropped.  Failures carry the two exact values, their
//! difference, and the seed needed to reproduce them.
//!
//! Checks are independent jobs.  [`run_suite`] executes them on a small
//! worker pool (capped by the `BETHE_VECTORS_WORKERS` environment variable)
//! and merges the reports in a fixed order, so identical inputs always
//! produce identical reports regardless of scheduling.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulas::{
    self, aux_f, aux_g, q_factorial, rank_recursion, tensor_split, y_factor, FormulasError,
    SplitArity,
};
use crate::reps::{Assembly, Case, LSign, ModuleSpec, Realization, RepsError};
use crate::scalar::{Scalar, ScalarError};
use crate::tensor::{flip, r_matrix, LinearOperator, RCase, Space, TensorError};
use crate::trace::{
    confirm_weight, weight_trace_apply, Composition, Direction, TraceError, VarCollection,
};

#[derive(Debug, Error)]
pub enum VerifyError {
    /// A denominator of the check itself vanishes at the sampled point.
    #[error("pole: the factor {factor} vanishes at the requested point")]
    Pole { factor: String },
    /// A check was asked to run on data of the wrong shape.
    #[error("shape error: {reason}")]
    Shape { reason: String },
    #[error(transparent)]
    Formulas(#[from] FormulasError),
    #[error(transparent)]
    Reps(#[from] RepsError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

// ---------------------------------------------------------------------------
// Reports.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

/// One verdict of one check at one grid point.  Failures always carry both
/// exact values, their difference, and the seed that reproduces them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub check: String,
    pub point: String,
    pub verdict: Verdict,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl ReportEntry {
    pub fn pass(check: impl Into<String>, point: impl Into<String>, seed: u64) -> Self {
        ReportEntry {
            check: check.into(),
            point: point.into(),
            verdict: Verdict::Pass,
            seed,
            left: None,
            right: None,
            difference: None,
            reason: None,
        }
    }

    pub fn fail(
        check: impl Into<String>,
        point: impl Into<String>,
        seed: u64,
        left: String,
        right: String,
        difference: String,
    ) -> Self {
        ReportEntry {
            check: check.into(),
            point: point.into(),
            verdict: Verdict::Fail,
            seed,
            left: Some(left),
            right: Some(right),
            difference: Some(difference),
            reason: None,
        }
    }

    pub fn skipped(
        check: impl Into<String>,
        point: impl Into<String>,
        seed: u64,
        reason: String,
    ) -> Self {
        ReportEntry {
            check: check.into(),
            point: point.into(),
            verdict: Verdict::Skipped,
            seed,
            left: None,
            right: None,
            difference: None,
            reason: Some(reason),
        }
    }
}

/// Description of one check's parameter grid, for report headers and
/// reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSpec {
    pub id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n_values: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub xi_set: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modules: Vec<ModuleSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub q_values: Vec<Scalar>,
    pub points: usize,
    pub seed: u64,
}

pub fn has_failures(entries: &[ReportEntry]) -> bool {
    entries.iter().any(|e| e.verdict == Verdict::Fail)
}

// ---------------------------------------------------------------------------
// Random exact points and pole-aware resampling.
// ---------------------------------------------------------------------------

const RESAMPLE_BOUND: usize = 60;

fn random_scalar(rng: &mut ChaCha8Rng) -> Scalar {
    let num = rng.gen_range(-13i64..=13);
    let den = rng.gen_range(1i64..=13);
    Scalar::new(num, den).expect("denominator is positive")
}

fn random_nonzero(rng: &mut ChaCha8Rng) -> Scalar {
    loop {
        let s = random_scalar(rng);
        if !s.is_zero() {
            return s;
        }
    }
}

/// Descends the error chain looking for a vanishing denominator.
pub(crate) fn pole_reason(err: &VerifyError) -> Option<String> {
    fn from_scalar(err: &ScalarError) -> Option<String> {
        match err {
            ScalarError::DivisionByZero { .. } => Some("division by zero".into()),
            _ => None,
        }
    }
    fn from_tensor(err: &TensorError) -> Option<String> {
        match err {
            TensorError::NormalisationPole { factor } => Some(factor.clone()),
            TensorError::Scalar(inner) => from_scalar(inner),
            _ => None,
        }
    }
    fn from_reps(err: &RepsError) -> Option<String> {
        match err {
            RepsError::Pole { factor } => Some(factor.clone()),
            RepsError::Tensor(inner) => from_tensor(inner),
            RepsError::Scalar(inner) => from_scalar(inner),
            _ => None,
        }
    }
    fn from_trace(err: &TraceError) -> Option<String> {
        match err {
            TraceError::Pole { factor } => Some(factor.clone()),
            TraceError::Reps(inner) => from_reps(inner),
            TraceError::Tensor(inner) => from_tensor(inner),
            TraceError::Scalar(inner) => from_scalar(inner),
            _ => None,
        }
    }
    fn from_formulas(err: &FormulasError) -> Option<String> {
        match err {
            FormulasError::Pole { factor } => Some(factor.clone()),
            FormulasError::AtPermutation { inner, .. } => from_formulas(inner),
            FormulasError::Reps(inner) => from_reps(inner),
            FormulasError::Scalar(inner) => from_scalar(inner),
            _ => None,
        }
    }
    match err {
        VerifyError::Pole { factor } => Some(factor.clone()),
        VerifyError::Shape { .. } => None,
        VerifyError::Formulas(inner) => from_formulas(inner),
        VerifyError::Reps(inner) => from_reps(inner),
        VerifyError::Tensor(inner) => from_tensor(inner),
        VerifyError::Trace(inner) => from_trace(inner),
        VerifyError::Scalar(inner) => from_scalar(inner),
    }
}

/// Runs `body` on freshly sampled data, resampling on poles up to a bound.
/// `Ok(Err(reason))` means the bound was exhausted: record a skip.
fn with_resample<T>(
    rng: &mut ChaCha8Rng,
    mut body: impl FnMut(&mut ChaCha8Rng) -> Result<T, VerifyError>,
) -> Result<Result<T, String>, VerifyError> {
    let mut last_reason = String::new();
    for _ in 0..RESAMPLE_BOUND {
        match body(rng) {
            Ok(value) => return Ok(Ok(value)),
            Err(err) => match pole_reason(&err) {
                Some(reason) => last_reason = reason,
                None => return Err(err),
            },
        }
    }
    Ok(Err(format!(
        "resample bound exhausted; last vanishing factor: {last_reason}"
    )))
}

fn fmt_scalars(values: &[Scalar]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn fmt_vars(t: &VarCollection) -> String {
    t.blocks()
        .iter()
        .map(|b| fmt_scalars(b))
        .collect::<Vec<_>>()
        .join(";")
}

fn inv_gap(hi: &Scalar, lo: &Scalar, name: impl FnOnce() -> String) -> Result<Scalar, VerifyError> {
    let den = hi - lo;
    if den.is_zero() {
        return Err(VerifyError::Pole { factor: name() });
    }
    Ok(den.inv()?)
}

// ---------------------------------------------------------------------------
// Operator helpers.
// ---------------------------------------------------------------------------

fn compose_chain(ops: &[LinearOperator]) -> Result<LinearOperator, VerifyError> {
    let mut iter = ops.iter();
    let mut acc = iter
        .next()
        .ok_or_else(|| VerifyError::Shape {
            reason: "empty operator chain".into(),
        })?
        .clone();
    for op in iter {
        acc = acc.compose(op)?;
    }
    Ok(acc)
}

fn first_operator_difference(
    left: &LinearOperator,
    right: &LinearOperator,
) -> Option<(String, Scalar, Scalar)> {
    for row in 0..left.codomain_dim() {
        for col in 0..left.domain_dim() {
            if left.entry(row, col) != right.entry(row, col) {
                return Some((
                    format!("entry ({},{})", row + 1, col + 1),
                    left.entry(row, col).clone(),
                    right.entry(row, col).clone(),
                ));
            }
        }
    }
    None
}

fn first_vector_difference(left: &[Scalar], right: &[Scalar]) -> Option<(String, Scalar, Scalar)> {
    for (idx, (l, r)) in left.iter().zip(right).enumerate() {
        if l != r {
            return Some((format!("coordinate {}", idx + 1), l.clone(), r.clone()));
        }
    }
    if left.len() != right.len() {
        return Some((
            "length".into(),
            Scalar::from_int(left.len() as i64),
            Scalar::from_int(right.len() as i64),
        ));
    }
    None
}

/// Builds a pass/fail entry from an optional first difference.
fn verdict_entry(
    check: &str,
    point: &str,
    seed: u64,
    diff: Option<(String, Scalar, Scalar)>,
) -> ReportEntry {
    match diff {
        None => ReportEntry::pass(check, point, seed),
        Some((label, l, r)) => {
            let d = &l - &r;
            ReportEntry::fail(
                check,
                point,
                seed,
                format!("{label}: {l}"),
                format!("{label}: {r}"),
                d.to_string(),
            )
        }
    }
}

// ---------------------------------------------------------------------------
// Arrays over auxiliary multi-indices with operator entries.
// ---------------------------------------------------------------------------

/// A dense array of module operators indexed by auxiliary multi-indices:
/// `out_rank` output slots and `in_rank` input slots, each running over a
/// `w`-dimensional auxiliary space.  Products of creation-row entries,
/// submatrix blocks, and their exchange partners all live here.
#[derive(Debug, Clone)]
struct AuxArray {
    w: usize,
    out_rank: usize,
    in_rank: usize,
    entries: Vec<LinearOperator>,
}

fn multi_indices(w: usize, rank: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..rank {
        let mut next = Vec::with_capacity(out.len() * w);
        for prefix in &out {
            for v in 0..w {
                let mut item = prefix.clone();
                item.push(v);
                next.push(item);
            }
        }
        out = next;
    }
    out
}

fn flat_index(idx: &[usize], w: usize) -> usize {
    idx.iter().fold(0, |acc, &v| acc * w + v)
}

impl AuxArray {
    fn build(
        w: usize,
        out_rank: usize,
        in_rank: usize,
        mut f: impl FnMut(&[usize], &[usize]) -> Result<LinearOperator, VerifyError>,
    ) -> Result<AuxArray, VerifyError> {
        let mut entries = Vec::with_capacity(w.pow((out_rank + in_rank) as u32));
        for out_idx in multi_indices(w, out_rank) {
            for in_idx in multi_indices(w, in_rank) {
                entries.push(f(&out_idx, &in_idx)?);
            }
        }
        Ok(AuxArray {
            w,
            out_rank,
            in_rank,
            entries,
        })
    }

    fn slot(&self, out_idx: &[usize], in_idx: &[usize]) -> usize {
        flat_index(out_idx, self.w) * self.w.pow(self.in_rank as u32) + flat_index(in_idx, self.w)
    }

    fn get(&self, out_idx: &[usize], in_idx: &[usize]) -> &LinearOperator {
        &self.entries[self.slot(out_idx, in_idx)]
    }

    fn scaled(&self, c: &Scalar) -> AuxArray {
        AuxArray {
            w: self.w,
            out_rank: self.out_rank,
            in_rank: self.in_rank,
            entries: self.entries.iter().map(|op| op.scale(c)).collect(),
        }
    }

    fn add(&self, other: &AuxArray) -> Result<AuxArray, VerifyError> {
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.add(b))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(AuxArray {
            w: self.w,
            out_rank: self.out_rank,
            in_rank: self.in_rank,
            entries,
        })
    }

    /// Contracts the input slots `sa`, `sb` against an operator on the
    /// auxiliary double space, acting from the right:
    /// `new[out; in] = sum_{ab} old[out; in with (sa,sb)=(a,b)] * op[(ab),(in_sa,in_sb)]`.
    fn right_contract(
        &self,
        op: &LinearOperator,
        sa: usize,
        sb: usize,
    ) -> Result<AuxArray, VerifyError> {
        let mut out = self.clone();
        for out_idx in multi_indices(self.w, self.out_rank) {
            for in_idx in multi_indices(self.w, self.in_rank) {
                let col = in_idx[sa] * self.w + in_idx[sb];
                let mut acc: Option<LinearOperator> = None;
                for a in 0..self.w {
                    for b in 0..self.w {
                        let weight = op.entry(a * self.w + b, col);
                        if weight.is_zero() {
                            continue;
                        }
                        let mut source = in_idx.clone();
                        source[sa] = a;
                        source[sb] = b;
                        let term = self.get(&out_idx, &source).scale(weight);
                        acc = Some(match acc {
                            None => term,
                            Some(prev) => prev.add(&term)?,
                        });
                    }
                }
                let slot = self.slot(&out_idx, &in_idx);
                // A fully vanishing column of `op` (a degenerate R-matrix
                // point) contracts to the zero operator.
                out.entries[slot] = match acc {
                    Some(acc) => acc,
                    None => self.get(&out_idx, &in_idx).scale(&Scalar::zero()),
                };
            }
        }
        Ok(out)
    }

    /// Contracts the output slots `sa`, `sb` against an operator acting
    /// from the left:
    /// `new[out; in] = sum_{ab} op[(out_sa,out_sb),(ab)] * old[out with (sa,sb)=(a,b); in]`.
    fn left_contract(
        &self,
        op: &LinearOperator,
        sa: usize,
        sb: usize,
    ) -> Result<AuxArray, VerifyError> {
        let mut out = self.clone();
        for out_idx in multi_indices(self.w, self.out_rank) {
            let row = out_idx[sa] * self.w + out_idx[sb];
            for in_idx in multi_indices(self.w, self.in_rank) {
                let mut acc: Option<LinearOperator> = None;
                for a in 0..self.w {
                    for b in 0..self.w {
                        let weight = op.entry(row, a * self.w + b);
                        if weight.is_zero() {
                            continue;
                        }
                        let mut source = out_idx.clone();
                        source[sa] = a;
                        source[sb] = b;
                        let term = self.get(&source, &in_idx).scale(weight);
                        acc = Some(match acc {
                            None => term,
                            Some(prev) => prev.add(&term)?,
                        });
                    }
                }
                let slot = self.slot(&out_idx, &in_idx);
                out.entries[slot] = match acc {
                    Some(acc) => acc,
                    None => self.get(&out_idx, &in_idx).scale(&Scalar::zero()),
                };
            }
        }
        Ok(out)
    }

    fn first_difference(&self, other: &AuxArray) -> Option<(String, Scalar, Scalar)> {
        for out_idx in multi_indices(self.w, self.out_rank) {
            for in_idx in multi_indices(self.w, self.in_rank) {
                let left = self.get(&out_idx, &in_idx);
                let right = other.get(&out_idx, &in_idx);
                if let Some((label, l, r)) = first_operator_difference(left, right) {
                    let ones: Vec<usize> = out_idx.iter().map(|v| v + 1).collect();
                    let ines: Vec<usize> = in_idx.iter().map(|v| v + 1).collect();
                    return Some((format!("aux out {ones:?} in {ines:?} {label}"), l, r));
                }
            }
        }
        None
    }
}

// ---------------------------------------------------------------------------
// The symmetrized exchange action.
// ---------------------------------------------------------------------------

fn permutations(k: usize) -> Vec<Vec<usize>> {
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

/// A reduced word of adjacent transpositions for the given permutation,
/// recorded as the bubble-sort swap positions (0-based).
fn bubble_word(perm: &[usize]) -> Vec<usize> {
    let mut p = perm.to_vec();
    let mut word = Vec::new();
    loop {
        let mut swapped = false;
        for i in 0..p.len().saturating_sub(1) {
            if p[i] > p[i + 1] {
                p.swap(i, i + 1);
                word.push(i);
                swapped = true;
            }
        }
        if !swapped {
            break;
        }
    }
    word
}

/// Evaluates one twisted term: the outermost letter swaps the arguments at
/// positions `(i, i+1)` and multiplies by the normalized braided R-matrix at
/// the difference of the untouched arguments, acting on the corresponding
/// input slots.
fn eval_twisted(
    w: usize,
    copy_slot: &[usize],
    word: &[usize],
    args: &[Scalar],
    f: &mut dyn FnMut(&[Scalar]) -> Result<AuxArray, VerifyError>,
) -> Result<AuxArray, VerifyError> {
    if word.is_empty() {
        return f(args);
    }
    let i = word[0];
    let diff = &args[i] - &args[i + 1];
    let mut swapped = args.to_vec();
    swapped.swap(i, i + 1);
    let inner = eval_twisted(w, copy_slot, &word[1..], &swapped, f)?;
    let rc = crate::tensor::r_check(RCase::Rational, w, &diff, None, true)?;
    inner.right_contract(&rc, copy_slot[i], copy_slot[i + 1])
}

/// Sum of the twisted action of every permutation of the `k` arguments.
fn r_symmetrize(
    w: usize,
    k: usize,
    copy_slot: &[usize],
    args: &[Scalar],
    f: &mut dyn FnMut(&[Scalar]) -> Result<AuxArray, VerifyError>,
) -> Result<AuxArray, VerifyError> {
    let mut total: Option<AuxArray> = None;
    for perm in permutations(k) {
        let word = bubble_word(&perm);
        let value = eval_twisted(w, copy_slot, &word, args, f)?;
        total = Some(match total {
            None => value,
            Some(acc) => acc.add(&value)?,
        });
    }
    total.ok_or_else(|| VerifyError::Shape {
        reason: "symmetrization over an empty argument list".into(),
    })
}

// ---------------------------------------------------------------------------
// Monodromy submatrices on an assembly.
// ---------------------------------------------------------------------------

/// The corner decomposition of the monodromy on a rational assembly: the
/// scalar corner entry, the creation row, and the lower-right submatrix,
/// together with the reduced-rank R-matrices that exchange them.
struct CornerOps<'a> {
    asm: &'a Assembly,
    w: usize,
}

impl<'a> CornerOps<'a> {
    fn new(asm: &'a Assembly) -> Result<Self, VerifyError> {
        if asm.case != Case::Rational {
            return Err(VerifyError::Shape {
                reason: "the exchange-relation checks run in the rational case".into(),
            });
        }
        if asm.n() < 2 {
            return Err(VerifyError::Shape {
                reason: "the corner decomposition needs rank at least 2".into(),
            });
        }
        Ok(CornerOps { asm, w: asm.n() - 1 })
    }

    fn corner(&self, u: &Scalar) -> Result<LinearOperator, VerifyError> {
        Ok(self.asm.yangian_t(1, 1, u)?)
    }

    /// Creation-row entry with 0-based auxiliary index.
    fn row(&self, alpha: usize, u: &Scalar) -> Result<LinearOperator, VerifyError> {
        Ok(self.asm.yangian_t(1, alpha + 2, u)?)
    }

    /// Submatrix entry with 0-based auxiliary indices.
    fn block(&self, i: usize, j: usize, u: &Scalar) -> Result<LinearOperator, VerifyError> {
        Ok(self.asm.yangian_t(i + 2, j + 2, u)?)
    }

    /// The reduced-rank R-matrix divided by its argument.
    fn scaled_r(&self, u: &Scalar) -> Result<LinearOperator, VerifyError> {
        if u.is_zero() {
            return Err(VerifyError::Pole {
                factor: "u - v".into(),
            });
        }
        Ok(r_matrix(RCase::Rational, self.w, u, None)?.scale(&u.inv()?))
    }
}

/// The exchange relations among the corner entry `A`, the creation row `B`,
/// and the submatrix `D` of the monodromy, including their multi-point
/// forms and the coproduct expansion of a creation-row product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// Corner entries at different arguments commute.
    AWithA,
    /// Row-row exchange through the reduced R-matrix.
    BWithB,
    /// Corner-row exchange with the two-term rational kernel.
    AWithB,
    /// Submatrix-row exchange: straight term plus exchange term.
    DWithB,
    /// Submatrix-submatrix exchange through the reduced R-matrix.
    DWithD,
    /// Corner against a product of `k` creation rows.
    AWithBChain,
    /// Submatrix against a product of `k` creation rows.
    DWithBChain,
    /// Coproduct of a `k`-fold creation-row product on a two-factor
    /// assembly.
    CoproductOfBChain,
}

impl Relation {
    pub fn label(self) -> &'static str {
        match self {
            Relation::AWithA => "a-a",
            Relation::BWithB => "b-b",
            Relation::AWithB => "a-b",
            Relation::DWithB => "d-b",
            Relation::DWithD => "d-d",
            Relation::AWithBChain => "a-b-chain",
            Relation::DWithBChain => "d-b-chain",
            Relation::CoproductOfBChain => "coproduct-b-chain",
        }
    }

    fn argument_count(self, k: usize) -> usize {
        match self {
            Relation::AWithA
            | Relation::BWithB
            | Relation::AWithB
            | Relation::DWithB
            | Relation::DWithD => 2,
            Relation::AWithBChain | Relation::DWithBChain => k + 1,
            Relation::CoproductOfBChain => k,
        }
    }
}

fn relation_sides(
    relation: Relation,
    asm: &Assembly,
    k: usize,
    args: &[Scalar],
) -> Result<(AuxArray, AuxArray), VerifyError> {
    let ops = CornerOps::new(asm)?;
    let w = ops.w;
    match relation {
        Relation::AWithA => {
            let (u, v) = (&args[0], &args[1]);
            let lhs = AuxArray::build(w, 0, 0, |_, _| {
                Ok(ops.corner(u)?.compose(&ops.corner(v)?)?)
            })?;
            let rhs = AuxArray::build(w, 0, 0, |_, _| {
                Ok(ops.corner(v)?.compose(&ops.corner(u)?)?)
            })?;
            Ok((lhs, rhs))
        }
        Relation::BWithB => {
            let (u, v) = (&args[0], &args[1]);
            let diff = u - v;
            let shifted = &diff + &Scalar::one();
            if shifted.is_zero() {
                return Err(VerifyError::Pole {
                    factor: "u - v + 1".into(),
                });
            }
            let lhs = AuxArray::build(w, 0, 2, |_, idx| {
                Ok(ops.row(idx[0], u)?.compose(&ops.row(idx[1], v)?)?)
            })?;
            let crossed = AuxArray::build(w, 0, 2, |_, idx| {
                Ok(ops.row(idx[1], v)?.compose(&ops.row(idx[0], u)?)?)
            })?;
            let rhs = crossed
                .right_contract(&ops.scaled_r(&diff)?, 0, 1)?
                .scaled(&diff.div(&shifted)?);
            Ok((lhs, rhs))
        }
        Relation::AWithB => {
            let (u, v) = (&args[0], &args[1]);
            let gap = inv_gap(u, v, || "u - v".into())?;
            let lhs = AuxArray::build(w, 0, 1, |_, idx| {
                Ok(ops.corner(u)?.compose(&ops.row(idx[0], v)?)?)
            })?;
            let straight = AuxArray::build(w, 0, 1, |_, idx| {
                Ok(ops.row(idx[0], v)?.compose(&ops.corner(u)?)?)
            })?;
            let exchanged = AuxArray::build(w, 0, 1, |_, idx| {
                Ok(ops.row(idx[0], u)?.compose(&ops.corner(v)?)?)
            })?;
            let coef = &Scalar::one() - &gap;
            let rhs = straight.scaled(&coef).add(&exchanged.scaled(&gap))?;
            Ok((lhs, rhs))
        }
        Relation::DWithB | Relation::DWithD => relation_sides_submatrix(relation, &ops, args),
        Relation::AWithBChain => relation_sides_corner_chain(&ops, k, args),
        Relation::DWithBChain => relation_sides_submatrix_chain(&ops, k, args),
        Relation::CoproductOfBChain => relation_sides_coproduct(asm, &ops, k, args),
    }
}

fn relation_sides_submatrix(
    relation: Relation,
    ops: &CornerOps,
    args: &[Scalar],
) -> Result<(AuxArray, AuxArray), VerifyError> {
    let w = ops.w;
    let (u, v) = (&args[0], &args[1]);
    let diff = u - v;
    match relation {
        Relation::DWithB => {
            let gap = inv_gap(u, v, || "u - v".into())?;
            let lhs = AuxArray::build(w, 1, 2, |out, idx| {
                Ok(ops.block(out[0], idx[0], u)?.compose(&ops.row(idx[1], v)?)?)
            })?;
            let straight = AuxArray::build(w, 1, 2, |out, idx| {
                Ok(ops.row(idx[1], v)?.compose(&ops.block(out[0], idx[0], u)?)?)
            })?
            .right_contract(&ops.scaled_r(&diff)?, 0, 1)?;
            let exchanged = AuxArray::build(w, 1, 2, |out, idx| {
                Ok(ops.row(idx[0], u)?.compose(&ops.block(out[0], idx[1], v)?)?)
            })?;
            let rhs = straight.add(&exchanged.scaled(&-&gap))?;
            Ok((lhs, rhs))
        }
        Relation::DWithD => {
            let r = ops.scaled_r(&diff)?;
            let lhs = AuxArray::build(w, 2, 2, |out, idx| {
                Ok(ops
                    .block(out[0], idx[0], u)?
                    .compose(&ops.block(out[1], idx[1], v)?)?)
            })?
            .left_contract(&r, 0, 1)?;
            let rhs = AuxArray::build(w, 2, 2, |out, idx| {
                Ok(ops
                    .block(out[1], idx[1], v)?
                    .compose(&ops.block(out[0], idx[0], u)?)?)
            })?
            .right_contract(&r, 0, 1)?;
            Ok((lhs, rhs))
        }
        _ => unreachable!("submatrix dispatcher only handles two relations"),
    }
}

/// The submatrix-row exchange with the spurious prefactor on the straight
/// term; kept as a regression target that must disagree with the left side.
fn relation_d_with_b_prefactored(
    asm: &Assembly,
    args: &[Scalar],
) -> Result<(AuxArray, AuxArray), VerifyError> {
    let ops = CornerOps::new(asm)?;
    let w = ops.w;
    let (u, v) = (&args[0], &args[1]);
    let diff = u - v;
    let gap = inv_gap(u, v, || "u - v".into())?;
    let lhs = AuxArray::build(w, 1, 2, |out, idx| {
        Ok(ops.block(out[0], idx[0], u)?.compose(&ops.row(idx[1], v)?)?)
    })?;
    let straight = AuxArray::build(w, 1, 2, |out, idx| {
        Ok(ops.row(idx[1], v)?.compose(&ops.block(out[0], idx[0], u)?)?)
    })?
    .right_contract(&ops.scaled_r(&diff)?, 0, 1)?;
    let prefactor = &Scalar::one() + &gap;
    let exchanged = AuxArray::build(w, 1, 2, |out, idx| {
        Ok(ops.row(idx[0], u)?.compose(&ops.block(out[0], idx[1], v)?)?)
    })?;
    let rhs = straight
        .scaled(&prefactor)
        .add(&exchanged.scaled(&-&gap))?;
    Ok((lhs, rhs))
}

fn relation_sides_corner_chain(
    ops: &CornerOps,
    k: usize,
    args: &[Scalar],
) -> Result<(AuxArray, AuxArray), VerifyError> {
    let w = ops.w;
    let u = &args[0];
    let points = &args[1..];
    let lhs = AuxArray::build(w, 0, k, |_, idx| {
        let mut chain = vec![ops.corner(u)?];
        for (slot, &gamma) in idx.iter().enumerate() {
            chain.push(ops.row(gamma, &points[slot])?);
        }
        compose_chain(&chain)
    })?;
    let mut straight_coef = Scalar::one();
    for (i, point) in points.iter().enumerate() {
        let gap = inv_gap(u, point, || format!("u - u_{}", i + 1))?;
        straight_coef = &straight_coef * &(&Scalar::one() - &gap);
    }
    let straight = AuxArray::build(w, 0, k, |_, idx| {
        let mut chain = Vec::with_capacity(k + 1);
        for (slot, &gamma) in idx.iter().enumerate() {
            chain.push(ops.row(gamma, &points[slot])?);
        }
        chain.push(ops.corner(u)?);
        compose_chain(&chain)
    })?
    .scaled(&straight_coef);
    let copy_slot: Vec<usize> = (0..k).collect();
    let symmetrized = r_symmetrize(w, k, &copy_slot, points, &mut |perm_args| {
        let lead = &perm_args[0];
        let mut coef = inv_gap(u, lead, || "u - u_1".into())?;
        for later in &perm_args[1..] {
            let gap = inv_gap(lead, later, || "u_1 - u_i".into())?;
            coef = &coef * &(&Scalar::one() - &gap);
        }
        let array = AuxArray::build(w, 0, k, |_, idx| {
            let mut chain = vec![ops.row(idx[0], u)?];
            for slot in 1..k {
                chain.push(ops.row(idx[slot], &perm_args[slot])?);
            }
            chain.push(ops.corner(lead)?);
            compose_chain(&chain)
        })?;
        Ok(array.scaled(&coef))
    })?;
    let inverse_count = Scalar::factorial(k - 1).inv()?;
    let rhs = straight.add(&symmetrized.scaled(&inverse_count))?;
    Ok((lhs, rhs))
}

fn relation_sides_submatrix_chain(
    ops: &CornerOps,
    k: usize,
    args: &[Scalar],
) -> Result<(AuxArray, AuxArray), VerifyError> {
    let w = ops.w;
    let u = &args[0];
    let points = &args[1..];
    // Input slots: 0 is the submatrix column, 1..=k are the row copies.
    let lhs = AuxArray::build(w, 1, k + 1, |out, idx| {
        let mut chain = vec![ops.block(out[0], idx[0], u)?];
        for slot in 1..=k {
            chain.push(ops.row(idx[slot], &points[slot - 1])?);
        }
        compose_chain(&chain)
    })?;
    let mut straight = AuxArray::build(w, 1, k + 1, |out, idx| {
        let mut chain = Vec::with_capacity(k + 1);
        for slot in 1..=k {
            chain.push(ops.row(idx[slot], &points[slot - 1])?);
        }
        chain.push(ops.block(out[0], idx[0], u)?);
        compose_chain(&chain)
    })?;
    for j in (1..=k).rev() {
        let diff = u - &points[j - 1];
        straight = straight.right_contract(&ops.scaled_r(&diff)?, 0, j)?;
    }
    let copy_slot: Vec<usize> = (0..k).collect();
    let symmetrized = r_symmetrize(w, k, &copy_slot, points, &mut |perm_args| {
        let lead = &perm_args[0];
        let coef = inv_gap(u, lead, || "u - u_1".into())?;
        let mut array = AuxArray::build(w, 1, k, |out, idx| {
            let mut chain = Vec::with_capacity(k);
            for slot in 1..k {
                chain.push(ops.row(idx[slot], &perm_args[slot])?);
            }
            chain.push(ops.block(out[0], idx[0], lead)?);
            compose_chain(&chain)
        })?;
        for j in (2..=k).rev() {
            let diff = lead - &perm_args[j - 1];
            array = array.right_contract(&ops.scaled_r(&diff)?, 0, j - 1)?;
        }
        Ok(array.scaled(&coef))
    })?;
    // Reattach the row at the spectator argument on the extra slot.
    let inverse_count = Scalar::factorial(k - 1).inv()?;
    let exchanged = AuxArray::build(w, 1, k + 1, |out, idx| {
        let inner = symmetrized.get(&[out[0]], &idx[1..]);
        Ok(ops.row(idx[0], u)?.compose(inner)?)
    })?;
    let rhs = straight.add(&exchanged.scaled(&-&inverse_count))?;
    Ok((lhs, rhs))
}

fn embed_factor_op(
    asm: &Assembly,
    factor: usize,
    op: &LinearOperator,
) -> Result<LinearOperator, VerifyError> {
    let mut parts: Vec<LinearOperator> = Vec::with_capacity(asm.factors.len());
    for (r, module) in asm.factors.iter().enumerate() {
        if r == factor {
            parts.push(op.clone());
        } else {
            parts.push(LinearOperator::identity(vec![module.space()]));
        }
    }
    let refs: Vec<&LinearOperator> = parts.iter().collect();
    Ok(LinearOperator::kron(&refs))
}

fn relation_sides_coproduct(
    asm: &Assembly,
    ops: &CornerOps,
    k: usize,
    args: &[Scalar],
) -> Result<(AuxArray, AuxArray), VerifyError> {
    if asm.factors.len() != 2 {
        return Err(VerifyError::Shape {
            reason: "the coproduct expansion check needs a two-factor assembly".into(),
        });
    }
    let w = ops.w;
    let lhs = AuxArray::build(w, 0, k, |_, idx| {
        let mut chain = Vec::with_capacity(k);
        for (slot, &gamma) in idx.iter().enumerate() {
            chain.push(ops.row(gamma, &args[slot])?);
        }
        compose_chain(&chain)
    })?;
    // Single-factor monodromy entries embedded into the joint carrier.
    let single = |factor: usize, a: usize, b: usize, u: &Scalar| -> Result<LinearOperator, VerifyError> {
        let alone = Assembly {
            case: asm.case,
            q: asm.q.clone(),
            factors: vec![asm.factors[factor].clone()],
        };
        embed_factor_op(asm, factor, &alone.yangian_t(a, b, u)?)
    };
    let copy_slot: Vec<usize> = (0..k).collect();
    let mut rhs: Option<AuxArray> = None;
    for l in 0..=k {
        let term = r_symmetrize(w, k, &copy_slot, args, &mut |perm_args| {
            let mut kernel = Scalar::one();
            for i in 0..k {
                for j in (i + 1)..k {
                    let gap = inv_gap(&perm_args[i], &perm_args[j], || {
                        format!("u_{} - u_{}", i + 1, j + 1)
                    })?;
                    kernel = &kernel * &(&Scalar::one() - &gap);
                }
            }
            let array = AuxArray::build(w, 0, k, |_, idx| {
                let mut total: Option<LinearOperator> = None;
                for beta in multi_indices(w, k - l) {
                    let mut chain = Vec::new();
                    for r in 0..l {
                        chain.push(single(0, 1, idx[r] + 2, &perm_args[r])?);
                    }
                    for r in l..k {
                        chain.push(single(1, 1, beta[r - l] + 2, &perm_args[r])?);
                    }
                    for r in 0..l {
                        chain.push(single(1, 1, 1, &perm_args[r])?);
                    }
                    for r in l..k {
                        chain.push(single(0, beta[r - l] + 2, idx[r] + 2, &perm_args[r])?);
                    }
                    let product = compose_chain(&chain)?;
                    total = Some(match total {
                        None => product,
                        Some(acc) => acc.add(&product)?,
                    });
                }
                Ok(total.expect("the hidden-index sum is nonempty"))
            })?;
            Ok(array.scaled(&kernel))
        })?;
        let coef = (&Scalar::factorial(l) * &Scalar::factorial(k - l)).inv()?;
        let scaled = term.scaled(&coef);
        rhs = Some(match rhs {
            None => scaled,
            Some(acc) => acc.add(&scaled)?,
        });
    }
    Ok((lhs, rhs.expect("at least one splitting term")))
}

/// Verifies one exchange relation on the given assembly at `trials` random
/// argument tuples.
pub fn check_relation(
    relation: Relation,
    asm: &Assembly,
    k: usize,
    trials: usize,
    seed: u64,
) -> Vec<ReportEntry> {
    let check = format!("exchange/{}", relation.label());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    let describe = |args: &[Scalar]| {
        format!(
            "n={} factors={} k={k} args={}",
            asm.n(),
            asm.factors.len(),
            fmt_scalars(args)
        )
    };
    for _ in 0..trials {
        let outcome = with_resample(&mut rng, |rng| {
            let count = relation.argument_count(k);
            let args: Vec<Scalar> = (0..count).map(|_| random_scalar(rng)).collect();
            let sides = relation_sides(relation, asm, k, &args)?;
            Ok((args, sides))
        });
        match outcome {
            Err(err) => {
                entries.push(ReportEntry::fail(
                    &check,
                    format!("n={} k={k}", asm.n()),
                    seed,
                    format!("error: {err}"),
                    "error-free evaluation".into(),
                    "n/a".into(),
                ));
            }
            Ok(Err(reason)) => {
                entries.push(ReportEntry::skipped(
                    &check,
                    format!("n={} k={k}", asm.n()),
                    seed,
                    reason,
                ));
            }
            Ok(Ok((args, (lhs, rhs)))) => {
                entries.push(verdict_entry(
                    &check,
                    &describe(&args),
                    seed,
                    lhs.first_difference(&rhs),
                ));
            }
        }
    }
    entries
}

/// Regression guard: the submatrix-row exchange written with an extra
/// rational prefactor on the straight term must disagree with the direct
/// product; this check passes exactly when a difference is found.
pub fn check_relation_prefactor_rejected(asm: &Assembly, seed: u64) -> Vec<ReportEntry> {
    let check = "exchange/d-b-prefactor-variant-rejected";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outcome = with_resample(&mut rng, |rng| {
        let args: Vec<Scalar> = (0..2).map(|_| random_scalar(rng)).collect();
        let sides = relation_d_with_b_prefactored(asm, &args)?;
        Ok((args, sides))
    });
    match outcome {
        Err(err) => vec![ReportEntry::fail(
            check,
            format!("n={}", asm.n()),
            seed,
            format!("error: {err}"),
            "error-free evaluation".into(),
            "n/a".into(),
        )],
        Ok(Err(reason)) => vec![ReportEntry::skipped(
            check,
            format!("n={}", asm.n()),
            seed,
            reason,
        )],
        Ok(Ok((args, (lhs, rhs)))) => {
            let point = format!("n={} args={}", asm.n(), fmt_scalars(&args));
            match lhs.first_difference(&rhs) {
                Some(_) => vec![ReportEntry::pass(check, point, seed)],
                None => vec![ReportEntry::fail(
                    check,
                    point,
                    seed,
                    "prefactored variant".into(),
                    "direct product".into(),
                    "the variant with the extra prefactor unexpectedly agrees".into(),
                )],
            }
        }
    }
}

// ---------------------------------------------------------------------------
// R-matrix properties.
// ---------------------------------------------------------------------------

fn embed_pair(
    op: &LinearOperator,
    first: usize,
    second: usize,
    n: usize,
) -> Result<LinearOperator, VerifyError> {
    let ambient = vec![Space::aux(n), Space::aux(n), Space::aux(n)];
    Ok(LinearOperator::embed_leg(op, &[first, second], &ambient)?)
}

fn yang_baxter_sides(
    case: RCase,
    n: usize,
    q: Option<&Scalar>,
    u: &Scalar,
    v: &Scalar,
    w: &Scalar,
) -> Result<(LinearOperator, LinearOperator), VerifyError> {
    let (a12, a13, a23) = match case {
        RCase::Rational => (u - v, u - w, v - w),
        RCase::Trigonometric => {
            let ratio = |hi: &Scalar, lo: &Scalar, name: &str| -> Result<Scalar, VerifyError> {
                if lo.is_zero() {
                    return Err(VerifyError::Pole {
                        factor: name.to_string(),
                    });
                }
                hi.div(lo).map_err(VerifyError::from)
            };
            (ratio(u, v, "v")?, ratio(u, w, "w")?, ratio(v, w, "w")?)
        }
    };
    let r12 = embed_pair(&r_matrix(case, n, &a12, q)?, 1, 2, n)?;
    let r13 = embed_pair(&r_matrix(case, n, &a13, q)?, 1, 3, n)?;
    let r23 = embed_pair(&r_matrix(case, n, &a23, q)?, 2, 3, n)?;
    let lhs = r12.compose(&r13)?.compose(&r23)?;
    let rhs = r23.compose(&r13)?.compose(&r12)?;
    Ok((lhs, rhs))
}

fn inversion_sides(
    case: RCase,
    n: usize,
    q: Option<&Scalar>,
    u: &Scalar,
) -> Result<(LinearOperator, LinearOperator), VerifyError> {
    let p = flip(n);
    match case {
        RCase::Rational => {
            let r = r_matrix(case, n, u, None)?;
            let mirrored = p
                .compose(&r_matrix(case, n, &-u, None)?)?
                .compose(&p)?;
            let lhs = r.compose(&mirrored)?;
            let scalar = &Scalar::one() - &(u * u);
            let rhs =
                LinearOperator::identity(vec![Space::aux(n), Space::aux(n)]).scale(&scalar);
            Ok((lhs, rhs))
        }
        RCase::Trigonometric => {
            if u.is_zero() {
                return Err(VerifyError::Pole { factor: "u".into() });
            }
            let q_val = q.ok_or_else(|| VerifyError::Shape {
                reason: "the trigonometric case needs a deformation parameter".into(),
            })?;
            let r = r_matrix(case, n, u, Some(q_val))?;
            let u_inv = u.inv()?;
            let mirrored = p
                .compose(&r_matrix(case, n, &u_inv, Some(q_val))?)?
                .compose(&p)?;
            let lhs = r.compose(&mirrored)?;
            let q_inv = q_val.inv()?;
            let scalar = (&(u * q_val) - &q_inv) * (&(&u_inv * q_val) - &q_inv);
            let rhs =
                LinearOperator::identity(vec![Space::aux(n), Space::aux(n)]).scale(&scalar);
            Ok((lhs, rhs))
        }
    }
}

/// Yang-Baxter and inversion for the R-matrix on the double and triple
/// auxiliary space, at random exact points.
pub fn check_r_properties(
    case: Case,
    n: usize,
    q: Option<&Scalar>,
    trials: usize,
    seed: u64,
) -> Vec<ReportEntry> {
    let rcase = match case {
        Case::Rational => RCase::Rational,
        Case::Trigonometric => RCase::Trigonometric,
    };
    let tag = match case {
        Case::Rational => "rational".to_string(),
        Case::Trigonometric => format!("trig q={}", q.map(|s| s.to_string()).unwrap_or_default()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for _ in 0..trials {
        let outcome = with_resample(&mut rng, |rng| {
            let (u, v, w) = (
                random_nonzero(rng),
                random_nonzero(rng),
                random_nonzero(rng),
            );
            let sides = yang_baxter_sides(rcase, n, q, &u, &v, &w)?;
            Ok((u, v, w, sides))
        });
        let check = "r-matrix/yang-baxter";
        entries.push(match outcome {
            Err(err) => ReportEntry::fail(
                check,
                format!("{tag} n={n}"),
                seed,
                format!("error: {err}"),
                "error-free evaluation".into(),
                "n/a".into(),
            ),
            Ok(Err(reason)) => ReportEntry::skipped(check, format!("{tag} n={n}"), seed, reason),
            Ok(Ok((u, v, w, (lhs, rhs)))) => verdict_entry(
                check,
                &format!("{tag} n={n} u={u} v={v} w={w}"),
                seed,
                first_operator_difference(&lhs, &rhs),
            ),
        });

        let outcome = with_resample(&mut rng, |rng| {
            let u = random_nonzero(rng);
            let sides = inversion_sides(rcase, n, q, &u)?;
            Ok((u, sides))
        });
        let check = "r-matrix/inversion";
        entries.push(match outcome {
            Err(err) => ReportEntry::fail(
                check,
                format!("{tag} n={n}"),
                seed,
                format!("error: {err}"),
                "error-free evaluation".into(),
                "n/a".into(),
            ),
            Ok(Err(reason)) => ReportEntry::skipped(check, format!("{tag} n={n}"), seed, reason),
            Ok(Ok((u, (lhs, rhs)))) => verdict_entry(
                check,
                &format!("{tag} n={n} u={u}"),
                seed,
                first_operator_difference(&lhs, &rhs),
            ),
        });
    }
    // Degenerate probe: equal first and second arguments are fine.
    let check = "r-matrix/degenerate-equal-arguments";
    let outcome = with_resample(&mut rng, |rng| {
        let u = random_nonzero(rng);
        let w = random_nonzero(rng);
        let sides = yang_baxter_sides(rcase, n, q, &u, &u, &w)?;
        Ok((u, w, sides))
    });
    entries.push(match outcome {
        Err(err) => ReportEntry::fail(
            check,
            format!("{tag} n={n}"),
            seed,
            format!("error: {err}"),
            "error-free evaluation".into(),
            "n/a".into(),
        ),
        Ok(Err(reason)) => ReportEntry::skipped(check, format!("{tag} n={n}"), seed, reason),
        Ok(Ok((u, w, (lhs, rhs)))) => verdict_entry(
            check,
            &format!("{tag} n={n} u=v={u} w={w}"),
            seed,
            first_operator_difference(&lhs, &rhs),
        ),
    });
    entries
}

// ---------------------------------------------------------------------------
// Monodromy exchange on assemblies.
// ---------------------------------------------------------------------------

fn rational_exchange_difference(
    asm: &Assembly,
    u: &Scalar,
    v: &Scalar,
) -> Result<Option<(String, Scalar, Scalar)>, VerifyError> {
    let n = asm.n();
    let x = u - v;
    // At u - v = -1 the diagonal rows of x*Id + P vanish and the exchange
    // relation degenerates to 0 = 0 on those components; redraw instead.
    if (&x + &Scalar::one()).is_zero() {
        return Err(VerifyError::Pole {
            factor: "u - v + 1".into(),
        });
    }
    let r = r_matrix(RCase::Rational, n, &x, None)?;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut lhs: Option<LinearOperator> = None;
                    let mut rhs: Option<LinearOperator> = None;
                    for p in 0..n {
                        for s in 0..n {
                            let rw = r.entry(i * n + j, p * n + s);
                            if !rw.is_zero() {
                                let prod = asm
                                    .yangian_t(p + 1, k + 1, u)?
                                    .compose(&asm.yangian_t(s + 1, l + 1, v)?)?
                                    .scale(rw);
                                lhs = Some(match lhs {
                                    None => prod,
                                    Some(acc) => acc.add(&prod)?,
                                });
                            }
                            let rw = r.entry(p * n + s, k * n + l);
                            if !rw.is_zero() {
                                let prod = asm
                                    .yangian_t(j + 1, s + 1, v)?
                                    .compose(&asm.yangian_t(i + 1, p + 1, u)?)?
                                    .scale(rw);
                                rhs = Some(match rhs {
                                    None => prod,
                                    Some(acc) => acc.add(&prod)?,
                                });
                            }
                        }
                    }
                    let lhs = lhs.expect("R-matrix row is nonzero");
                    let rhs = rhs.expect("R-matrix column is nonzero");
                    if let Some((label, a, b)) = first_operator_difference(&lhs, &rhs) {
                        return Ok(Some((
                            format!("component ({},{}|{},{}) {label}", i + 1, j + 1, k + 1, l + 1),
                            a,
                            b,
                        )));
                    }
                }
            }
        }
    }
    Ok(None)
}

fn trigonometric_exchange_difference(
    asm: &Assembly,
    signs: (LSign, LSign),
    u: &Scalar,
    v: &Scalar,
) -> Result<Option<(String, Scalar, Scalar)>, VerifyError> {
    let n = asm.n();
    if v.is_zero() {
        return Err(VerifyError::Pole { factor: "v".into() });
    }
    let q = asm.q.clone().ok_or_else(|| VerifyError::Shape {
        reason: "trigonometric assembly carries no deformation parameter".into(),
    })?;
    let x = u.div(v)?;
    // At u/v = q^{-2} the diagonal rows of the trigonometric R-matrix
    // vanish; redraw rather than compare empty sums.
    if (&(&x * &q) - &q.inv()?).is_zero() {
        return Err(VerifyError::Pole {
            factor: "q u - q^{-1} v".into(),
        });
    }
    let r = r_matrix(RCase::Trigonometric, n, &x, Some(&q))?;
    let (s1, s2) = signs;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut lhs: Option<LinearOperator> = None;
                    let mut rhs: Option<LinearOperator> = None;
                    for p in 0..n {
                        for s in 0..n {
                            let rw = r.entry(i * n + j, p * n + s);
                            if !rw.is_zero() {
                                let prod = asm
                                    .loop_l(s1, p + 1, k + 1, u)?
                                    .compose(&asm.loop_l(s2, s + 1, l + 1, v)?)?
                                    .scale(rw);
                                lhs = Some(match lhs {
                                    None => prod,
                                    Some(acc) => acc.add(&prod)?,
                                });
                            }
                            let rw = r.entry(p * n + s, k * n + l);
                            if !rw.is_zero() {
                                let prod = asm
                                    .loop_l(s2, j + 1, s + 1, v)?
                                    .compose(&asm.loop_l(s1, i + 1, p + 1, u)?)?
                                    .scale(rw);
                                rhs = Some(match rhs {
                                    None => prod,
                                    Some(acc) => acc.add(&prod)?,
                                });
                            }
                        }
                    }
                    let lhs = lhs.expect("R-matrix row is nonzero");
                    let rhs = rhs.expect("R-matrix column is nonzero");
                    if let Some((label, a, b)) = first_operator_difference(&lhs, &rhs) {
                        return Ok(Some((
                            format!("component ({},{}|{},{}) {label}", i + 1, j + 1, k + 1, l + 1),
                            a,
                            b,
                        )));
                    }
                }
            }
        }
    }
    Ok(None)
}

fn invariance_difference(
    asm: &Assembly,
    u: &Scalar,
) -> Result<Option<(String, Scalar, Scalar)>, VerifyError> {
    let n = asm.n();
    let node = asm.node();
    let dim = asm.dim();
    let id_mod = LinearOperator::identity(asm.spaces());
    let _ = dim;
    // Full monodromy on the auxiliary (x) carrier space.
    let mut t_full: Option<LinearOperator> = None;
    for c in 1..=n {
        for d in 1..=n {
            let unit = LinearOperator::matrix_unit(n, c, d)?;
            let part = LinearOperator::kron(&[&unit, &asm.yangian_t(c, d, u)?]);
            t_full = Some(match t_full {
                None => part,
                Some(acc) => acc.add(&part)?,
            });
        }
    }
    let t_full = t_full.expect("rank is at least 2");
    for a in 1..=n {
        for b in 1..=n {
            let unit = LinearOperator::matrix_unit(n, a, b)?;
            let id_aux = LinearOperator::identity(vec![Space::aux(n)]);
            let action = LinearOperator::kron(&[&unit, &id_mod])
                .add(&LinearOperator::kron(&[&id_aux, &node.gl_sum(a, b)?]))?;
            let lhs = action.compose(&t_full)?;
            let rhs = t_full.compose(&action)?;
            if let Some((label, l, r)) = first_operator_difference(&lhs, &rhs) {
                return Ok(Some((format!("generator ({a},{b}) {label}"), l, r)));
            }
        }
    }
    Ok(None)
}

/// The defining exchange relation of the monodromy (rational RTT or the
/// three sign pairs of the trigonometric RLL) plus, in the rational case,
/// commutation with the diagonal-preserving classical action.
pub fn check_monodromy_exchange(asm: &Assembly, trials: usize, seed: u64) -> Vec<ReportEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    let tag = format!(
        "{} n={} factors={}",
        match asm.case {
            Case::Rational => "rational".to_string(),
            Case::Trigonometric => format!(
                "trig q={}",
                asm.q.as_ref().map(|s| s.to_string()).unwrap_or_default()
            ),
        },
        asm.n(),
        asm.factors.len()
    );
    for _ in 0..trials {
        match asm.case {
            Case::Rational => {
                let check = "rtt/exchange";
                let outcome = with_resample(&mut rng, |rng| {
                    let u = random_scalar(rng);
                    let v = random_scalar(rng);
                    let diff = rational_exchange_difference(asm, &u, &v)?;
                    Ok((u, v, diff))
                });
                entries.push(match outcome {
                    Err(err) => ReportEntry::fail(
                        check,
                        tag.clone(),
                        seed,
                        format!("error: {err}"),
                        "error-free evaluation".into(),
                        "n/a".into(),
                    ),
                    Ok(Err(reason)) => ReportEntry::skipped(check, tag.clone(), seed, reason),
                    Ok(Ok((u, v, diff))) => {
                        verdict_entry(check, &format!("{tag} u={u} v={v}"), seed, diff)
                    }
                });
                let check = "rtt/classical-invariance";
                let outcome = with_resample(&mut rng, |rng| {
                    let u = random_scalar(rng);
                    let diff = invariance_difference(asm, &u)?;
                    Ok((u, diff))
                });
                entries.push(match outcome {
                    Err(err) => ReportEntry::fail(
                        check,
                        tag.clone(),
                        seed,
                        format!("error: {err}"),
                        "error-free evaluation".into(),
                        "n/a".into(),
                    ),
                    Ok(Err(reason)) => ReportEntry::skipped(check, tag.clone(), seed, reason),
                    Ok(Ok((u, diff))) => {
                        verdict_entry(check, &format!("{tag} u={u}"), seed, diff)
                    }
                });
            }
            Case::Trigonometric => {
                for (label, signs) in [
                    ("plus-plus", (LSign::Plus, LSign::Plus)),
                    ("plus-minus", (LSign::Plus, LSign::Minus)),
                    ("minus-minus", (LSign::Minus, LSign::Minus)),
                ] {
                    let check = format!("rtt/loop-exchange-{label}");
                    let outcome = with_resample(&mut rng, |rng| {
                        let u = random_nonzero(rng);
                        let v = random_nonzero(rng);
                        let diff = trigonometric_exchange_difference(asm, signs, &u, &v)?;
                        Ok((u, v, diff))
                    });
                    entries.push(match outcome {
                        Err(err) => ReportEntry::fail(
                            &check,
                            tag.clone(),
                            seed,
                            format!("error: {err}"),
                            "error-free evaluation".into(),
                            "n/a".into(),
                        ),
                        Ok(Err(reason)) => {
                            ReportEntry::skipped(&check, tag.clone(), seed, reason)
                        }
                        Ok(Ok((u, v, diff))) => {
                            verdict_entry(&check, &format!("{tag} u={u} v={v}"), seed, diff)
                        }
                    });
                }
            }
        }
    }
    entries
}

// ---------------------------------------------------------------------------
// Rational-function identities: both sides by independent code paths.
// ---------------------------------------------------------------------------

/// `1 / (hi - lo)` with a named vanishing factor.
fn site_inv(hi: &Scalar, lo: &Scalar, name: impl FnOnce() -> String) -> Result<Scalar, FormulasError> {
    let den = hi - lo;
    if den.is_zero() {
        return Err(FormulasError::Pole { factor: name() });
    }
    Ok(den.inv().map_err(FormulasError::from)?)
}

/// Shifted site `(hi - lo + shift)/(hi - lo)` (rational) or
/// `(qa*hi - qb*lo)/(hi - lo)` (trigonometric), with a named pole.
fn site_ratio(
    num: Scalar,
    hi: &Scalar,
    lo: &Scalar,
    name: impl FnOnce() -> String,
) -> Result<Scalar, FormulasError> {
    let den = hi - lo;
    if den.is_zero() {
        return Err(FormulasError::Pole { factor: name() });
    }
    Ok(num.div(&den).map_err(FormulasError::from)?)
}

fn rational_shift(hi: &Scalar, lo: &Scalar, shift: i64) -> Scalar {
    &(hi - lo) + &Scalar::from_int(shift)
}

fn trig_shift(qa: &Scalar, hi: &Scalar, qb: &Scalar, lo: &Scalar) -> Scalar {
    &(qa * hi) - &(qb * lo)
}

fn single_block(values: &[Scalar]) -> VarCollection {
    VarCollection::new(vec![values.to_vec()])
}

/// Increasing index tuples `1 <= d_1 < ... < d_p <= r`.
fn increasing_tuples(p: usize, r: usize) -> Vec<Vec<usize>> {
    use itertools::Itertools;
    (1..=r).combinations(p).collect()
}

/// The weighted permutation sum of the constant one over a single block
/// equals the (q-)factorial computed by plain multiplication.
pub fn check_factorial_sums(
    q: Option<&Scalar>,
    max_k: usize,
    seed: u64,
) -> Vec<ReportEntry> {
    let case = if q.is_some() {
        Case::Trigonometric
    } else {
        Case::Rational
    };
    let tag = match q {
        None => "rational".to_string(),
        Some(value) => format!("trig q={value}"),
    };
    let check = match q {
        None => "identities/permutation-factorial",
        Some(_) => "identities/permutation-factorial-q",
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for k in 1..=max_k {
        let outcome = with_resample(&mut rng, |rng| {
            let values: Vec<Scalar> = (0..k).map(|_| random_scalar(rng)).collect();
            let t = single_block(&values);
            let left = formulas::sym_bar::<Scalar>(case, q, &t, &mut |_| Ok(Scalar::one()))?;
            let right = match q {
                None => Scalar::factorial(k),
                Some(value) => q_factorial(k, value)?,
            };
            Ok((values, left, right))
        });
        entries.push(match outcome {
            Err(err) => ReportEntry::fail(
                check,
                format!("{tag} k={k}"),
                seed,
                format!("error: {err}"),
                "error-free evaluation".into(),
                "n/a".into(),
            ),
            Ok(Err(reason)) => ReportEntry::skipped(check, format!("{tag} k={k}"), seed, reason),
            Ok(Ok((values, left, right))) => {
                let point = format!("{tag} k={k} s={}", fmt_scalars(&values));
                if left == right {
                    ReportEntry::pass(check, point, seed)
                } else {
                    let diff = &left - &right;
                    ReportEntry::fail(
                        check,
                        point,
                        seed,
                        left.to_string(),
                        right.to_string(),
                        diff.to_string(),
                    )
                }
            }
        });
    }
    entries
}

/// Shared scaffolding for the scalar two-sided identity checks.
fn scalar_identity_entry(
    check: &str,
    point: String,
    seed: u64,
    left: Scalar,
    right: Scalar,
) -> ReportEntry {
    if left == right {
        ReportEntry::pass(check, point, seed)
    } else {
        let diff = &left - &right;
        ReportEntry::fail(
            check,
            point,
            seed,
            left.to_string(),
            right.to_string(),
            diff.to_string(),
        )
    }
}

/// Left side of the staggered-pairing kernel: the weighted symmetrization
/// over the lower points.
fn kernel_staggered_lhs(
    q: Option<&Scalar>,
    y: &[Scalar],
    z: &[Scalar],
) -> Result<Scalar, FormulasError> {
    let p = y.len();
    let r = z.len();
    match q {
        None => Ok(aux_g(y, z)?),
        Some(q) => {
            let case = Case::Trigonometric;
            let qinv = q.inv().map_err(FormulasError::from)?;
            let t = single_block(z);
            formulas::sym_bar::<Scalar>(case, Some(q), &t, &mut |sigma| {
                let mut out = Scalar::one();
                for i in 1..=p {
                    out = &out
                        * &site_inv(&y[i - 1], sigma.get(1, i + r - p), || {
                            format!("y_{i} - z_{}", i + r - p)
                        })?;
                    for j in i + 1..=p {
                        let lo = sigma.get(1, j + r - p);
                        out = &out
                            * &site_ratio(trig_shift(q, &y[i - 1], &qinv, lo), &y[i - 1], lo, || {
                                format!("y_{i} - z_{}", j + r - p)
                            })?;
                    }
                }
                Ok(out)
            })
        }
    }
}

/// Right side of the staggered-pairing kernel: explicit enumeration of
/// increasing index tuples, symmetrized over the upper points.
fn kernel_staggered_rhs(
    q: Option<&Scalar>,
    y: &[Scalar],
    z: &[Scalar],
) -> Result<Scalar, FormulasError> {
    let p = y.len();
    let r = z.len();
    let case = if q.is_some() {
        Case::Trigonometric
    } else {
        Case::Rational
    };
    let qinv = match q {
        Some(q) => Some(q.inv().map_err(FormulasError::from)?),
        None => None,
    };
    let mut total = Scalar::zero();
    for d in increasing_tuples(p, r) {
        let t = single_block(y);
        let term = formulas::sym_bar::<Scalar>(case, q, &t, &mut |sigma| {
            let mut out = Scalar::one();
            for i in 1..=p {
                let yi = sigma.get(1, i);
                let di = d[i - 1];
                let gap = site_inv(yi, &z[di - 1], || format!("y_{i} - z_{di}"))?;
                out = &out * &gap;
                if let Some(q) = q {
                    out = &out * &q.pow(i as i64 - di as i64).map_err(FormulasError::from)?;
                }
                for j in di + 1..=r {
                    let num = match q {
                        None => rational_shift(yi, &z[j - 1], 1),
                        Some(q) => trig_shift(q, yi, qinv.as_ref().expect("set with q"), &z[j - 1]),
                    };
                    out = &out * &site_ratio(num, yi, &z[j - 1], || format!("y_{i} - z_{j}"))?;
                }
            }
            Ok(out)
        })?;
        total += &term;
    }
    if let Some(q) = q {
        total = &total * &q_factorial(r - p, q)?;
    }
    Ok(total)
}

/// Left side of the aligned-pairing kernel.  The rational shifted sites
/// carry `-1` in the numerator; `nonstrict_probe` switches the
/// trigonometric pair bound to `j <= i`, which must break the identity.
fn kernel_aligned_lhs(
    q: Option<&Scalar>,
    y: &[Scalar],
    z: &[Scalar],
    shift: i64,
    nonstrict_probe: bool,
) -> Result<Scalar, FormulasError> {
    let p = y.len();
    let r = z.len();
    let case = if q.is_some() {
        Case::Trigonometric
    } else {
        Case::Rational
    };
    let qinv = match q {
        Some(q) => Some(q.inv().map_err(FormulasError::from)?),
        None => None,
    };
    let t = single_block(z);
    let sum = formulas::sym_bar::<Scalar>(case, q, &t, &mut |sigma| {
        let mut out = Scalar::one();
        for i in 1..=p {
            let zi = sigma.get(1, i);
            out = &out * &site_inv(&y[i - 1], zi, || format!("y_{i} - z_{i}"))?;
            if let Some(q) = q {
                out = &out * &q.pow(p as i64 - r as i64).map_err(FormulasError::from)?;
            }
            let upper = if nonstrict_probe { i } else { i - 1 };
            for j in 1..=upper {
                let zj = sigma.get(1, j);
                let num = match q {
                    None => rational_shift(&y[i - 1], zj, shift),
                    Some(q) => trig_shift(qinv.as_ref().expect("set with q"), &y[i - 1], q, zj),
                };
                out = &out * &site_ratio(num, &y[i - 1], zj, || format!("y_{i} - z_{j}"))?;
            }
        }
        Ok(out)
    })?;
    match q {
        None => Ok(sum.div(&Scalar::factorial(r - p))?),
        Some(_) => Ok(sum),
    }
}

/// Right side of the aligned-pairing kernel via index-tuple enumeration.
fn kernel_aligned_rhs(
    q: Option<&Scalar>,
    y: &[Scalar],
    z: &[Scalar],
    shift: i64,
) -> Result<Scalar, FormulasError> {
    let p = y.len();
    let r = z.len();
    let case = if q.is_some() {
        Case::Trigonometric
    } else {
        Case::Rational
    };
    let qinv = match q {
        Some(q) => Some(q.inv().map_err(FormulasError::from)?),
        None => None,
    };
    let mut total = Scalar::zero();
    for d in increasing_tuples(p, r) {
        let t = single_block(y);
        let term = formulas::sym_bar::<Scalar>(case, q, &t, &mut |sigma| {
            let mut out = Scalar::one();
            for i in 1..=p {
                let yi = sigma.get(1, i);
                let di = d[i - 1];
                out = &out * &site_inv(yi, &z[di - 1], || format!("y_{i} - z_{di}"))?;
                if let Some(q) = q {
                    out = &out * &q.pow(i as i64 - di as i64).map_err(FormulasError::from)?;
                }
                for j in 1..di {
                    let num = match q {
                        None => rational_shift(yi, &z[j - 1], shift),
                        Some(q) => trig_shift(qinv.as_ref().expect("set with q"), yi, q, &z[j - 1]),
                    };
                    out = &out * &site_ratio(num, yi, &z[j - 1], || format!("y_{i} - z_{j}"))?;
                }
            }
            Ok(out)
        })?;
        total += &term;
    }
    if let Some(q) = q {
        total = &total * &q_factorial(r - p, q)?;
    }
    Ok(total)
}

fn identity_tag(q: Option<&Scalar>) -> String {
    match q {
        None => "rational".to_string(),
        Some(value) => format!("trig q={value}"),
    }
}

/// Staggered-pairing kernel identity: lower-point symmetrization equals
/// the index-tuple expansion over upper-point symmetrizations.
pub fn check_kernel_expansion(
    q: Option<&Scalar>,
    p: usize,
    r: usize,
    trials: usize,
    seed: u64,
) -> Vec<ReportEntry> {
    let check = match q {
        None => "identities/kernel-expansion",
        Some(_) => "identities/kernel-expansion-q",
    };
    let tag = identity_tag(q);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for _ in 0..trials {
        let outcome = with_resample(&mut rng, |rng| {
            let y: Vec<Scalar> = (0..p).map(|_| random_scalar(rng)).collect();
            let z: Vec<Scalar> = (0..r).map(|_| random_scalar(rng)).collect();
            let left = kernel_staggered_lhs(q, &y, &z)?;
            let right = kernel_staggered_rhs(q, &y, &z)?;
            Ok((y, z, left, right))
        });
        entries.push(match outcome {
            Err(err) => ReportEntry::fail(
                check,
                format!("{tag} p={p} r={r}"),
                seed,
                format!("error: {err}"),
                "error-free evaluation".into(),
                "n/a".into(),
            ),
            Ok(Err(reason)) => {
                ReportEntry::skipped(check, format!("{tag} p={p} r={r}"), seed, reason)
            }
            Ok(Ok((y, z, left, right))) => scalar_identity_entry(
                check,
                format!("{tag} p={p} r={r} y={} z={}", fmt_scalars(&y), fmt_scalars(&z)),
                seed,
                left,
                right,
            ),
        });
    }
    entries
}

/// Aligned-pairing kernel identity with the corrected `-1` shifted sites
/// (rational) and strict pair bound (trigonometric).
pub fn check_kernel_aligned(
    q: Option<&Scalar>,
    p: usize,
    r: usize,
    trials: usize,
    seed: u64,
) -> Vec<ReportEntry> {
    let check = match q {
        None => "identities/kernel-aligned",
        Some(_) => "identities/kernel-aligned-q",
    };
    let tag = identity_tag(q);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for _ in 0..trials {
        let outcome = with_resample(&mut rng, |rng| {
            let y: Vec<Scalar> = (0..p).map(|_| random_scalar(rng)).collect();
            let z: Vec<Scalar> = (0..r).map(|_| random_scalar(rng)).collect();
            let left = kernel_aligned_lhs(q, &y, &z, -1, false)?;
            let right = kernel_aligned_rhs(q, &y, &z, -1)?;
            Ok((y, z, left, right))
        });
        entries.push(match outcome {
            Err(err) => ReportEntry::fail(
                check,
                format!("{tag} p={p} r={r}"),
                seed,
                format!("error: {err}"),
                "error-free evaluation".into(),
                "n/a".into(),
            ),
            Ok(Err(reason)) => {
                ReportEntry::skipped(check, format!("{tag} p={p} r={r}"), seed, reason)
            }
            Ok(Ok((y, z, left, right))) => scalar_identity_entry(
                check,
                format!("{tag} p={p} r={r} y={} z={}", fmt_scalars(&y), fmt_scalars(&z)),
                seed,
                left,
                right,
            ),
        });
    }
    entries
}

/// Regression guards for the aligned kernel: the variant with `+1` shifted
/// sites (rational) and the variant with the non-strict pair bound
/// (trigonometric) must both break the identity.
pub fn check_kernel_aligned_variants_rejected(q_probe: &Scalar, seed: u64) -> Vec<ReportEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    let check = "identities/kernel-aligned-shift-variant-rejected";
    let outcome = with_resample(&mut rng, |rng| {
        let y: Vec<Scalar> = (0..2).map(|_| random_scalar(rng)).collect();
        let z: Vec<Scalar> = (0..3).map(|_| random_scalar(rng)).collect();
        let left = kernel_aligned_lhs(None, &y, &z, 1, false)?;
        let right = kernel_aligned_rhs(None, &y, &z, 1)?;
        Ok((y, z, left, right))
    });
    entries.push(match outcome {
        Err(err) => ReportEntry::fail(
            check,
            "rational p=2 r=3".to_string(),
            seed,
            format!("error: {err}"),
            "error-free evaluation".into(),
            "n/a".into(),
        ),
        Ok(Err(reason)) => ReportEntry::skipped(check, "rational p=2 r=3".to_string(), seed, reason),
        Ok(Ok((y, z, left, right))) => {
            let point = format!("rational p=2 r=3 y={} z={}", fmt_scalars(&y), fmt_scalars(&z));
            if left == right {
                ReportEntry::fail(
                    check,
                    point,
                    seed,
                    left.to_string(),
                    right.to_string(),
                    "the flipped-shift variant unexpectedly agrees".into(),
                )
            } else {
                ReportEntry::pass(check, point, seed)
            }
        }
    });
    let check = "identities/kernel-aligned-q-nonstrict-rejected";
    let outcome = with_resample(&mut rng, |rng| {
        let y: Vec<Scalar> = (0..2).map(|_| random_scalar(rng)).collect();
        let z: Vec<Scalar> = (0..3).map(|_| random_scalar(rng)).collect();
        let left = kernel_aligned_lhs(Some(q_probe), &y, &z, -1, true)?;
        let right = kernel_aligned_rhs(Some(q_probe), &y, &z, -1)?;
        Ok((y, z, left, right))
    });
    entries.push(match outcome {
        Err(err) => ReportEntry::fail(
            check,
            format!("trig q={q_probe} p=2 r=3"),
            seed,
            format!("error: {err}"),
            "error-free evaluation".into(),
            "n/a".into(),
        ),
        Ok(Err(reason)) => {
            ReportEntry::skipped(check, format!("trig q={q_probe} p=2 r=3"), seed, reason)
        }
        Ok(Ok((y, z, left, right))) => {
            let point = format!(
                "trig q={q_probe} p=2 r=3 y={} z={}",
                fmt_scalars(&y),
                fmt_scalars(&z)
            );
            if left == right {
                ReportEntry::fail(
                    check,
                    point,
                    seed,
                    left.to_string(),
                    right.to_string(),
                    "the non-strict-bound variant unexpectedly agrees".into(),
                )
            } else {
                ReportEntry::pass(check, point, seed)
            }
        }
    });
    entries
}

/// Three independent evaluations of the nonincreasing ladder factor's
/// symmetrization: the direct weighted sum, the distributed pick-sum, and
/// the product of pairwise kernels.
pub fn check_ladder_three_way(eta: &[usize], seed: u64) -> Vec<ReportEntry> {
    use itertools::Itertools;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = eta.len();
    let tag = format!("eta={eta:?}");
    let outcome = with_resample(&mut rng, |rng| {
        let s = VarCollection::new(
            eta.iter()
                .map(|&k| (0..k).map(|_| random_scalar(rng)).collect())
                .collect(),
        );
        // Product of pairwise kernels between consecutive blocks.
        let mut product = Scalar::one();
        for a in 1..blocks {
            product = &product * &aux_g(s.block(a + 1), s.block(a))?;
        }
        // Direct weighted symmetrization of the ladder factor.
        let direct = formulas::sym_bar::<Scalar>(Case::Rational, None, &s, &mut |sigma| {
            y_factor(Case::Rational, None, eta, sigma)
        })?;
        let mut coefficient = Scalar::factorial(eta[blocks - 1]);
        for a in 1..blocks {
            coefficient = &coefficient * &Scalar::factorial(eta[a - 1] - eta[a]);
        }
        // Distributed pick-sum with the first block held fixed.
        let mut pick_rows: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
        for a in 1..blocks {
            let options: Vec<Vec<usize>> = (1..=eta[a - 1]).combinations(eta[a]).collect();
            let mut grown = Vec::new();
            for prefix in &pick_rows {
                for option in &options {
                    let mut item = prefix.clone();
                    item.push(option.clone());
                    grown.push(item);
                }
            }
            pick_rows = grown;
        }
        let first_block = s.block(1).to_vec();
        let inner = s.drop_first();
        let mut distributed = Scalar::zero();
        for picks in &pick_rows {
            let value = formulas::sym_bar::<Scalar>(Case::Rational, None, &inner, &mut |sigma| {
                let mut rebuilt = vec![first_block.clone()];
                rebuilt.extend(sigma.blocks().iter().cloned());
                aux_f(&VarCollection::new(rebuilt), picks)
            })?;
            distributed += &value;
        }
        Ok((s, product, direct, coefficient, distributed))
    });
    match outcome {
        Err(err) => vec![ReportEntry::fail(
            "identities/ladder-three-way",
            tag,
            seed,
            format!("error: {err}"),
            "error-free evaluation".into(),
            "n/a".into(),
        )],
        Ok(Err(reason)) => vec![ReportEntry::skipped(
            "identities/ladder-three-way",
            tag,
            seed,
            reason,
        )],
        Ok(Ok((s, product, direct, coefficient, distributed))) => {
            let point = format!("{tag} s={}", fmt_vars(&s));
            vec![
                scalar_identity_entry(
                    "identities/ladder-direct-vs-kernels",
                    point.clone(),
                    seed,
                    direct,
                    &coefficient * &product,
                ),
                scalar_identity_entry(
                    "identities/ladder-picks-vs-kernels",
                    point,
                    seed,
                    distributed,
                    product,
                ),
            ]
        }
    }
}

// ---------------------------------------------------------------------------
// Cross-route validation grid.
// ---------------------------------------------------------------------------

/// The evaluation routes compared on the grid; tokens match the job-file
/// method names.
const SINGLE_ROUTES: [&str; 4] = [
    "recursion-last",
    "recursion-first",
    "closed-last",
    "closed-first",
];
const SPLIT_ROUTES: [&str; 2] = ["split-binary", "split-chain"];

fn oracle_value(
    asm: &Assembly,
    xi: &Composition,
    t: &VarCollection,
) -> Result<Vec<Scalar>, VerifyError> {
    let node = asm.node();
    let columns = vec![asm.joint_singular()];
    let mut images = weight_trace_apply(asm.case, asm.q.as_ref(), &node, xi, t, &columns)?;
    Ok(images.pop().expect("one column in, one column out"))
}

fn route_value(
    asm: &Assembly,
    xi: &Composition,
    t: &VarCollection,
    route: &str,
) -> Result<Vec<Scalar>, VerifyError> {
    let value = match route {
        "trace" => oracle_value(asm, xi, t)?,
        "recursion-last" => rank_recursion(asm, xi, t, Direction::Last)?,
        "recursion-first" => rank_recursion(asm, xi, t, Direction::First)?,
        "closed-last" => closed_form_route(asm, xi, t, Direction::Last)?,
        "closed-first" => closed_form_route(asm, xi, t, Direction::First)?,
        "split-binary" => tensor_split(asm, xi, t, SplitArity::Binary)?,
        "split-chain" => tensor_split(asm, xi, t, SplitArity::Chain)?,
        other => {
            return Err(VerifyError::Shape {
                reason: format!("unknown route {other}"),
            })
        }
    };
    Ok(value)
}

fn closed_form_route(
    asm: &Assembly,
    xi: &Composition,
    t: &VarCollection,
    direction: Direction,
) -> Result<Vec<Scalar>, VerifyError> {
    Ok(formulas::closed_form(asm, xi, t, direction)?)
}

/// One cell of the cross-validation grid.
#[derive(Debug, Clone)]
pub struct RouteCell {
    pub case: Case,
    pub q: Option<Scalar>,
    pub n: usize,
    pub realization: Realization,
    pub factors: usize,
    pub xi: Vec<usize>,
}

impl RouteCell {
    /// Human-readable cell identifier used as the prefix of every report
    /// entry the cell produces.
    pub fn label(&self) -> String {
        let case = match self.case {
            Case::Rational => "rational".to_string(),
            Case::Trigonometric => format!(
                "trig q={}",
                self.q.as_ref().map(|s| s.to_string()).unwrap_or_default()
            ),
        };
        let real = match &self.realization {
            Realization::Vector => "vector".to_string(),
            Realization::WedgePower { k } => format!("wedge({k})"),
            Realization::SymmetricPower { k } => format!("sym({k})"),
            Realization::CyclicSpan { .. } => "cyclic".to_string(),
        };
        format!(
            "{case} n={} {real} factors={} xi={:?}",
            self.n, self.factors, self.xi
        )
    }

    fn routes(&self) -> &'static [&'static str] {
        if self.factors == 1 {
            &SINGLE_ROUTES
        } else {
            &SPLIT_ROUTES
        }
    }

    fn sample_assembly(&self, rng: &mut ChaCha8Rng) -> Result<Assembly, VerifyError> {
        let specs: Vec<ModuleSpec> = (0..self.factors)
            .map(|_| ModuleSpec {
                n: self.n,
                realization: self.realization.clone(),
                x: random_nonzero(rng),
                weight: None,
            })
            .collect();
        Ok(Assembly::build(self.case, self.q.as_ref(), &specs)?)
    }

    fn sample_points(&self, rng: &mut ChaCha8Rng) -> VarCollection {
        VarCollection::new(
            self.xi
                .iter()
                .map(|&k| {
                    (0..k)
                        .map(|_| match self.case {
                            Case::Rational => random_scalar(rng),
                            Case::Trigonometric => random_nonzero(rng),
                        })
                        .collect()
                })
                .collect(),
        )
    }
}

/// Compares every route of the cell against the trace oracle at `points`
/// random evaluation points, confirms the weight of each result, and
/// checks invariance under adjacent block transpositions once per cell.
pub fn check_route_cell(cell: &RouteCell, points: usize, seed: u64) -> Vec<ReportEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    let label = cell.label();
    let xi = Composition::new(cell.xi.clone());
    let mut symmetry_done = false;
    for index in 0..points {
        let want_symmetry = !symmetry_done;
        let outcome = with_resample(&mut rng, |rng| {
            let asm = cell.sample_assembly(rng)?;
            let t = cell.sample_points(rng);
            let reference = oracle_value(&asm, &xi, &t)?;
            let mut route_values = Vec::new();
            for route in cell.routes() {
                route_values.push((route, route_value(&asm, &xi, &t, route)?));
            }
            // Evaluate every adjacent in-block transposition inside the
            // resample loop: the invariance identity only holds away from
            // poles, so a pole after a swap means redrawing the point, not
            // a counterexample.
            let mut swapped = Vec::new();
            if want_symmetry {
                for (block_index, block) in t.blocks().iter().enumerate() {
                    for pos in 0..block.len().saturating_sub(1) {
                        let mut vars = t.blocks().to_vec();
                        vars[block_index].swap(pos, pos + 1);
                        let permuted = VarCollection::new(vars);
                        let value = oracle_value(&asm, &xi, &permuted)?;
                        swapped.push((
                            format!("block {} swap ({},{})", block_index + 1, pos + 1, pos + 2),
                            value,
                        ));
                    }
                }
            }
            Ok((asm, t, reference, route_values, swapped))
        });
        let (asm, t, reference, route_values, swapped) = match outcome {
            Err(err) => {
                entries.push(ReportEntry::fail(
                    "routes/oracle",
                    format!("{label} point {index}"),
                    seed,
                    format!("error: {err}"),
                    "error-free evaluation".into(),
                    "n/a".into(),
                ));
                continue;
            }
            Ok(Err(reason)) => {
                entries.push(ReportEntry::skipped(
                    "routes/oracle",
                    format!("{label} point {index}"),
                    seed,
                    reason,
                ));
                continue;
            }
            Ok(Ok(data)) => data,
        };
        let point = format!("{label} t={}", fmt_vars(&t));
        for (route, value) in &route_values {
            entries.push(verdict_entry(
                &format!("routes/{route}"),
                &point,
                seed,
                first_vector_difference(value, &reference),
            ));
        }
        // Weight-space confirmation of the oracle result.
        match confirm_weight(&asm, &xi, &reference) {
            Ok(_) => entries.push(ReportEntry::pass("routes/weight", point.clone(), seed)),
            Err(TraceError::WeightViolation { context }) => entries.push(ReportEntry::fail(
                "routes/weight",
                point.clone(),
                seed,
                context,
                "coordinates inside the expected weight space".into(),
                "n/a".into(),
            )),
            Err(other) => entries.push(ReportEntry::fail(
                "routes/weight",
                point.clone(),
                seed,
                format!("error: {other}"),
                "error-free weight confirmation".into(),
                "n/a".into(),
            )),
        }
        // Invariance under adjacent transpositions inside each block.
        if want_symmetry {
            symmetry_done = true;
            let mut symmetry_diff = None;
            for (swap_label, value) in &swapped {
                if let Some(diff) = first_vector_difference(value, &reference) {
                    symmetry_diff = Some((format!("{swap_label} {}", diff.0), diff.1, diff.2));
                    break;
                }
            }
            if !swapped.is_empty() {
                entries.push(verdict_entry(
                    "routes/block-symmetry",
                    &point,
                    seed,
                    symmetry_diff,
                ));
            }
        }
    }
    entries
}

// ---------------------------------------------------------------------------
// Coset restriction of the weighted symmetrization.
// ---------------------------------------------------------------------------

/// A sampled summand family for the coset check: one slice chain of one
/// splitting term on one assembly.
#[derive(Debug, Clone)]
pub struct CosetFamily {
    pub case: Case,
    pub q: Option<Scalar>,
    pub n: usize,
    pub factors: usize,
    pub xi: Vec<usize>,
    pub chain: Vec<Vec<usize>>,
}

impl CosetFamily {
    fn label(&self) -> String {
        let case = match self.case {
            Case::Rational => "rational".to_string(),
            Case::Trigonometric => format!(
                "trig q={}",
                self.q.as_ref().map(|s| s.to_string()).unwrap_or_default()
            ),
        };
        format!(
            "{case} n={} factors={} xi={:?} chain={:?}",
            self.n, self.factors, self.xi, self.chain
        )
    }
}

/// The integrand of one chain term of the splitting formula, rebuilt from
/// public interfaces: cross factors between consecutive slices, diagonal
/// eigenvalues, and the product of per-factor slice values.
fn chain_summand(
    asm: &Assembly,
    chain: &[Vec<usize>],
    xi: &Composition,
    sigma_t: &VarCollection,
) -> Result<Vec<Scalar>, FormulasError> {
    let case = asm.case;
    let q = asm.q.as_ref();
    let qinv = match q {
        Some(q) => Some(q.inv().map_err(FormulasError::from)?),
        None => None,
    };
    let n = asm.n();
    let factors = asm.factors.len();
    let mut scal = Scalar::one();
    for a in 1..n - 1 {
        for r in 1..factors {
            for i in chain[r - 1][a] + 1..=chain[r][a] {
                for j in chain[r][a - 1] + 1..=xi.parts()[a - 1] {
                    let hi = sigma_t.get(a + 1, i);
                    let lo = sigma_t.get(a, j);
                    let num = match case {
                        Case::Rational => rational_shift(hi, lo, 1),
                        Case::Trigonometric => trig_shift(
                            q.expect("trigonometric assembly carries q"),
                            hi,
                            qinv.as_ref().expect("set with q"),
                            lo,
                        ),
                    };
                    scal = &scal
                        * &site_ratio(num, hi, lo, || {
                            format!("t^{{{}}}_{{{i}}} - t^{{{a}}}_{{{j}}}", a + 1)
                        })?;
                }
            }
        }
    }
    for a in 1..n {
        for r in 0..factors {
            for i in 1..=chain[r][a - 1] {
                scal = &scal * &asm.diagonal_eigenvalue(r, a, sigma_t.get(a, i))?;
            }
            for j in chain[r + 1][a - 1] + 1..=xi.parts()[a - 1] {
                scal = &scal * &asm.diagonal_eigenvalue(r, a + 1, sigma_t.get(a, j))?;
            }
        }
    }
    let mut coords = vec![Scalar::one()];
    for r in 0..factors {
        let slice_shape: Vec<usize> = chain[r + 1]
            .iter()
            .zip(&chain[r])
            .map(|(&hi, &lo)| hi - lo)
            .collect();
        let sub = Assembly {
            case: asm.case,
            q: asm.q.clone(),
            factors: vec![asm.factors[r].clone()],
        };
        let part = formulas::closed_form(
            &sub,
            &Composition::new(slice_shape),
            &sigma_t.head(&chain[r + 1]).tail(&chain[r]),
            Direction::Last,
        )?;
        let mut grown = Vec::with_capacity(coords.len() * part.len());
        for l in &coords {
            for x in &part {
                grown.push(l * x);
            }
        }
        coords = grown;
    }
    for c in coords.iter_mut() {
        *c = &*c * &scal;
    }
    Ok(coords)
}

/// All ways to distribute the indices `0..total` over ordered slices of
/// the given sizes, each slice listed in increasing order.
fn ordered_partitions(total: usize, sizes: &[usize]) -> Vec<Vec<Vec<usize>>> {
    use itertools::Itertools;
    fn recurse(
        remaining: &[usize],
        sizes: &[usize],
        acc: &mut Vec<Vec<usize>>,
        out: &mut Vec<Vec<Vec<usize>>>,
    ) {
        match sizes.split_first() {
            None => out.push(acc.clone()),
            Some((&first, rest)) => {
                for combo in remaining.iter().cloned().combinations(first) {
                    let left: Vec<usize> = remaining
                        .iter()
                        .cloned()
                        .filter(|x| !combo.contains(x))
                        .collect();
                    acc.push(combo);
                    recurse(&left, rest, acc, out);
                    acc.pop();
                }
            }
        }
    }
    let indices: Vec<usize> = (0..total).collect();
    let mut out = Vec::new();
    recurse(&indices, sizes, &mut Vec::new(), &mut out);
    out
}

/// Weight factor restricted to pairs of positions in different slices of
/// each block; the cumulative slice boundaries are given per block.
fn cross_slice_weight(
    case: Case,
    q: Option<&Scalar>,
    boundaries: &[Vec<usize>],
    t: &VarCollection,
) -> Result<Scalar, FormulasError> {
    let qinv = match q {
        Some(q) => Some(q.inv().map_err(FormulasError::from)?),
        None => None,
    };
    let slice_of = |cuts: &[usize], pos: usize| cuts.iter().filter(|&&c| c <= pos).count();
    let mut out = Scalar::one();
    for (block_index, block) in t.blocks().iter().enumerate() {
        let cuts = &boundaries[block_index];
        for i in 0..block.len() {
            for j in (i + 1)..block.len() {
                if slice_of(cuts, i) == slice_of(cuts, j) {
                    continue;
                }
                let num = match case {
                    Case::Rational => rational_shift(&block[i], &block[j], -1),
                    Case::Trigonometric => trig_shift(
                        qinv.as_ref().expect("set with q"),
                        &block[i],
                        q.expect("trigonometric weight carries q"),
                        &block[j],
                    ),
                };
                out = &out
                    * &site_ratio(num, &block[i], &block[j], || {
                        format!(
                            "t^{{{}}}_{{{}}} - t^{{{}}}_{{{}}}",
                            block_index + 1,
                            i + 1,
                            block_index + 1,
                            j + 1
                        )
                    })?;
            }
        }
    }
    Ok(out)
}

fn count_factorial(case: Case, q: Option<&Scalar>, k: usize) -> Result<Scalar, FormulasError> {
    match case {
        Case::Rational => Ok(Scalar::factorial(k)),
        Case::Trigonometric => q_factorial(k, q.ok_or(FormulasError::Shape {
            reason: "trigonometric count needs a deformation parameter".into(),
        })?),
    }
}

/// Verifies that the full weighted symmetrization of one chain summand,
/// divided by the stationary slice factorials, equals the restricted sum
/// over distinct slice assignments — and that the summand is genuinely
/// stationary under permutations inside a slice.
pub fn check_coset_family(family: &CosetFamily, seed: u64) -> Vec<ReportEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let label = family.label();
    let xi = Composition::new(family.xi.clone());
    let outcome = with_resample(&mut rng, |rng| {
        let specs: Vec<ModuleSpec> = (0..family.factors)
            .map(|_| ModuleSpec {
                n: family.n,
                realization: Realization::Vector,
                x: random_nonzero(rng),
                weight: None,
            })
            .collect();
        let asm = Assembly::build(family.case, family.q.as_ref(), &specs)?;
        let t = VarCollection::new(
            family
                .xi
                .iter()
                .map(|&k| {
                    (0..k)
                        .map(|_| match family.case {
                            Case::Rational => random_scalar(rng),
                            Case::Trigonometric => random_nonzero(rng),
                        })
                        .collect()
                })
                .collect(),
        );

        // Route A: full weighted symmetrization, then divide by the
        // stationary factorials.
        let full = formulas::sym_bar::<Vec<Scalar>>(family.case, family.q.as_ref(), &t, &mut |s| {
            chain_summand(&asm, &family.chain, &xi, s)
        })?;
        let mut stationary = Scalar::one();
        for r in 1..family.chain.len() {
            for a in 0..family.xi.len() {
                let size = family.chain[r][a] - family.chain[r - 1][a];
                stationary = &stationary * &count_factorial(family.case, family.q.as_ref(), size)?;
            }
        }
        let route_a: Vec<Scalar> = full
            .iter()
            .map(|c| c.div(&stationary))
            .collect::<Result<_, _>>()?;

        // Route B: sum over distinct slice assignments only, weighting by
        // the cross-slice part of the kernel.
        let links = family.chain.len() - 1;
        let mut per_block: Vec<Vec<Vec<Vec<usize>>>> = Vec::new();
        let mut boundaries: Vec<Vec<usize>> = Vec::new();
        for a in 0..family.xi.len() {
            let sizes: Vec<usize> = (1..=links)
                .map(|r| family.chain[r][a] - family.chain[r - 1][a])
                .collect();
            let mut cuts = Vec::new();
            let mut acc = 0usize;
            for &s in &sizes {
                acc += s;
                cuts.push(acc);
            }
            cuts.pop();
            boundaries.push(cuts);
            per_block.push(ordered_partitions(family.xi[a], &sizes));
        }
        let mut keys: Vec<Vec<usize>> = vec![Vec::new()];
        for options in &per_block {
            let mut grown = Vec::new();
            for prefix in &keys {
                for (choice, _) in options.iter().enumerate() {
                    let mut item = prefix.clone();
                    item.push(choice);
                    grown.push(item);
                }
            }
            keys = grown;
        }
        let mut route_b = vec![Scalar::zero(); asm.dim()];
        for key in &keys {
            let mut blocks = Vec::new();
            for (a, &choice) in key.iter().enumerate() {
                let assignment = &per_block[a][choice];
                let source = t.block(a + 1);
                let mut block = Vec::with_capacity(source.len());
                for part in assignment {
                    for &idx in part {
                        block.push(source[idx].clone());
                    }
                }
                blocks.push(block);
            }
            let permuted = VarCollection::new(blocks);
            let weight = cross_slice_weight(family.case, family.q.as_ref(), &boundaries, &permuted)?;
            let summand = chain_summand(&asm, &family.chain, &xi, &permuted)?;
            for (acc, value) in route_b.iter_mut().zip(&summand) {
                *acc += &(value * &weight);
            }
        }

        // Stationarity probe: swapping two entries inside one slice leaves
        // the summand unchanged.
        let mut stationary_diff = None;
        let mut probed = false;
        'probe: for a in 0..family.xi.len() {
            for r in 1..family.chain.len() {
                let lo = family.chain[r - 1][a];
                let hi = family.chain[r][a];
                if hi - lo >= 2 {
                    probed = true;
                    let base = chain_summand(&asm, &family.chain, &xi, &t)?;
                    let mut swapped = t.blocks().to_vec();
                    swapped[a].swap(lo, lo + 1);
                    let moved = chain_summand(
                        &asm,
                        &family.chain,
                        &xi,
                        &VarCollection::new(swapped),
                    )?;
                    stationary_diff = first_vector_difference(&moved, &base);
                    break 'probe;
                }
            }
        }
        Ok((t, route_a, route_b, probed, stationary_diff))
    });
    match outcome {
        Err(err) => vec![ReportEntry::fail(
            "coset/restricted-sum",
            label,
            seed,
            format!("error: {err}"),
            "error-free evaluation".into(),
            "n/a".into(),
        )],
        Ok(Err(reason)) => vec![ReportEntry::skipped(
            "coset/restricted-sum",
            label,
            seed,
            reason,
        )],
        Ok(Ok((t, route_a, route_b, probed, stationary_diff))) => {
            let point = format!("{label} t={}", fmt_vars(&t));
            let mut entries = vec![verdict_entry(
                "coset/restricted-sum",
                &point,
                seed,
                first_vector_difference(&route_a, &route_b),
            )];
            if probed {
                entries.push(verdict_entry(
                    "coset/stationary-summand",
                    &point,
                    seed,
                    stationary_diff,
                ));
            } else {
                entries.push(ReportEntry::skipped(
                    "coset/stationary-summand",
                    point,
                    seed,
                    "all slices are singletons".into(),
                ));
            }
            entries
        }
    }
}

// ---------------------------------------------------------------------------
// Suites and the worker pool.
// ---------------------------------------------------------------------------

/// The named check suites exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    /// Yang-Baxter, inversion, and degeneration of both R-matrices.
    RMatrix,
    /// Defining exchange relations and classical invariance of the
    /// monodromy on module assemblies.
    MonodromyExchange,
    /// Corner and submatrix exchange relations, their multi-row forms, and
    /// the coproduct expansion.
    ExchangeRelations,
    /// The rational-function identity lemmas.
    Identities,
    /// Route-equivalence grid, weight confirmation, block symmetry, and
    /// the coset restriction.
    CrossValidate,
    /// Everything above.
    All,
}

impl Suite {
    pub fn parse(token: &str) -> Option<Suite> {
        match token {
            "r-matrix" => Some(Suite::RMatrix),
            "rtt" => Some(Suite::MonodromyExchange),
            "section5" => Some(Suite::ExchangeRelations),
            "identities" => Some(Suite::Identities),
            "cross-validate" => Some(Suite::CrossValidate),
            "all" => Some(Suite::All),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Suite::RMatrix => "r-matrix",
            Suite::MonodromyExchange => "rtt",
            Suite::ExchangeRelations => "section5",
            Suite::Identities => "identities",
            Suite::CrossValidate => "cross-validate",
            Suite::All => "all",
        }
    }

    pub const TOKENS: [&'static str; 6] = [
        "r-matrix",
        "rtt",
        "section5",
        "identities",
        "cross-validate",
        "all",
    ];
}

/// Grid size selector: `Small` runs a quick subset of every suite, `Full`
/// runs the complete grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Small,
    Full,
}

impl Scale {
    pub fn parse(token: &str) -> Option<Scale> {
        match token {
            "small" => Some(Scale::Small),
            "full" => Some(Scale::Full),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Scale::Small => "small",
            Scale::Full => "full",
        }
    }
}

/// Number of worker threads: the `BETHE_VECTORS_WORKERS` environment
/// variable when set to a positive integer, otherwise the machine's
/// available parallelism.
pub fn worker_count() -> usize {
    if let Ok(raw) = std::env::var("BETHE_VECTORS_WORKERS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n >= 1 {
                return n;
            }
        }
    }
    std::thread::available_parallelism()
        .map(|p| p.get())
        .unwrap_or(1)
}

struct Job {
    run: Box<dyn FnOnce() -> Vec<ReportEntry> + Send>,
}

fn derive_seed(base: u64, order: u64) -> u64 {
    base ^ (order + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn push_job(
    jobs: &mut Vec<Job>,
    base_seed: u64,
    body: impl FnOnce(u64) -> Vec<ReportEntry> + Send + 'static,
) {
    let job_seed = derive_seed(base_seed, jobs.len() as u64);
    jobs.push(Job {
        run: Box::new(move || body(job_seed)),
    });
}

/// Executes the jobs on the worker pool and concatenates their reports in
/// job order, so the output is independent of scheduling.
fn run_jobs(jobs: Vec<Job>) -> Vec<ReportEntry> {
    let total = jobs.len();
    if total == 0 {
        return Vec::new();
    }
    let workers = worker_count().min(total).max(1);
    let slots: Vec<Mutex<Option<Box<dyn FnOnce() -> Vec<ReportEntry> + Send>>>> =
        jobs.into_iter().map(|j| Mutex::new(Some(j.run))).collect();
    let results: Vec<Mutex<Vec<ReportEntry>>> = (0..total).map(|_| Mutex::new(Vec::new())).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= total {
                    break;
                }
                let body = slots[index].lock().expect("unpoisoned slot").take();
                if let Some(body) = body {
                    let entries = body();
                    *results[index].lock().expect("unpoisoned result") = entries;
                }
            });
        }
    });
    results
        .into_iter()
        .flat_map(|m| m.into_inner().expect("unpoisoned result"))
        .collect()
}

fn scalar_q(n: i64, d: i64) -> Scalar {
    Scalar::new(n, d).expect("nonzero denominator")
}

/// Builds an assembly inside a job, converting construction errors into a
/// failing report entry instead of a panic.
fn build_or_fail(
    check: &str,
    label: &str,
    seed: u64,
    case: Case,
    q: Option<&Scalar>,
    specs: &[ModuleSpec],
) -> Result<Assembly, Vec<ReportEntry>> {
    Assembly::build(case, q, specs).map_err(|err| {
        vec![ReportEntry::fail(
            check,
            label.to_string(),
            seed,
            format!("error: {err}"),
            "well-formed assembly".into(),
            "n/a".into(),
        )]
    })
}

fn vector_specs(n: usize, xs: &[Scalar]) -> Vec<ModuleSpec> {
    xs.iter()
        .map(|x| ModuleSpec {
            n,
            realization: Realization::Vector,
            x: x.clone(),
            weight: None,
        })
        .collect()
}

fn sampled_xs(seed: u64, count: usize) -> Vec<Scalar> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A_F0F0_0F0F);
    (0..count).map(|_| random_nonzero(&mut rng)).collect()
}

fn r_matrix_jobs(jobs: &mut Vec<Job>, seed: u64, scale: Scale) {
    let trials = match scale {
        Scale::Full => 20,
        Scale::Small => 3,
    };
    let q_values: Vec<Option<Scalar>> = match scale {
        Scale::Full => vec![
            None,
            Some(scalar_q(2, 1)),
            Some(scalar_q(2, 3)),
            Some(scalar_q(-3, 5)),
        ],
        Scale::Small => vec![None, Some(scalar_q(2, 1))],
    };
    let n_range: Vec<usize> = match scale {
        Scale::Full => vec![2, 3, 4],
        Scale::Small => vec![2, 3],
    };
    for q in q_values {
        for &n in &n_range {
            let case = if q.is_some() {
                Case::Trigonometric
            } else {
                Case::Rational
            };
            let q = q.clone();
            push_job(jobs, seed, move |s| {
                check_r_properties(case, n, q.as_ref(), trials, s)
            });
        }
    }
}

fn monodromy_jobs(jobs: &mut Vec<Job>, seed: u64, scale: Scale) {
    let trials = match scale {
        Scale::Full => 10,
        Scale::Small => 2,
    };
    // (case, q, n, factor realizations)
    let mut cells: Vec<(Case, Option<Scalar>, usize, Vec<Realization>)> = vec![
        (Case::Rational, None, 2, vec![Realization::Vector]),
        (Case::Rational, None, 3, vec![Realization::Vector]),
        (
            Case::Rational,
            None,
            2,
            vec![Realization::SymmetricPower { k: 2 }],
        ),
        (
            Case::Rational,
            None,
            3,
            vec![Realization::WedgePower { k: 2 }],
        ),
        (
            Case::Rational,
            None,
            2,
            vec![Realization::Vector, Realization::Vector],
        ),
        (
            Case::Rational,
            None,
            3,
            vec![Realization::Vector, Realization::Vector],
        ),
        (
            Case::Trigonometric,
            Some(scalar_q(2, 1)),
            2,
            vec![Realization::Vector],
        ),
        (
            Case::Trigonometric,
            Some(scalar_q(2, 1)),
            3,
            vec![Realization::Vector],
        ),
        (
            Case::Trigonometric,
            Some(scalar_q(2, 1)),
            2,
            vec![Realization::Vector, Realization::Vector],
        ),
    ];
    if scale == Scale::Small {
        cells.truncate(2);
        cells.push((
            Case::Trigonometric,
            Some(scalar_q(2, 1)),
            2,
            vec![Realization::Vector],
        ));
    }
    for (case, q, n, realizations) in cells {
        push_job(jobs, seed, move |s| {
            let xs = sampled_xs(s, realizations.len());
            let specs: Vec<ModuleSpec> = realizations
                .iter()
                .zip(&xs)
                .map(|(realization, x)| ModuleSpec {
                    n,
                    realization: realization.clone(),
                    x: x.clone(),
                    weight: None,
                })
                .collect();
            match build_or_fail("rtt/assembly", &format!("n={n}"), s, case, q.as_ref(), &specs) {
                Ok(asm) => check_monodromy_exchange(&asm, trials, s),
                Err(entries) => entries,
            }
        });
    }
}

fn exchange_relation_jobs(jobs: &mut Vec<Job>, seed: u64, scale: Scale) {
    let trials = match scale {
        Scale::Full => 3,
        Scale::Small => 1,
    };
    let pairwise = [
        Relation::AWithA,
        Relation::BWithB,
        Relation::AWithB,
        Relation::DWithB,
        Relation::DWithD,
    ];
    let n_range: Vec<usize> = match scale {
        Scale::Full => vec![2, 3],
        Scale::Small => vec![2],
    };
    for &n in &n_range {
        for relation in pairwise {
            push_job(jobs, seed, move |s| {
                let xs = sampled_xs(s, 1);
                match build_or_fail(
                    "exchange/assembly",
                    &format!("n={n}"),
                    s,
                    Case::Rational,
                    None,
                    &vector_specs(n, &xs),
                ) {
                    Ok(asm) => check_relation(relation, &asm, 2, trials, s),
                    Err(entries) => entries,
                }
            });
        }
    }
    let chain_cells: Vec<(usize, usize)> = match scale {
        Scale::Full => vec![(2, 2), (3, 1), (3, 2), (3, 3)],
        Scale::Small => vec![(2, 2)],
    };
    for &(n, k) in &chain_cells {
        for relation in [Relation::AWithBChain, Relation::DWithBChain] {
            let chain_trials = if k >= 3 { 2.min(trials) } else { trials };
            push_job(jobs, seed, move |s| {
                let xs = sampled_xs(s, 1);
                match build_or_fail(
                    "exchange/assembly",
                    &format!("n={n}"),
                    s,
                    Case::Rational,
                    None,
                    &vector_specs(n, &xs),
                ) {
                    Ok(asm) => check_relation(relation, &asm, k, chain_trials, s),
                    Err(entries) => entries,
                }
            });
        }
    }
    let coproduct_cells: Vec<(usize, usize)> = match scale {
        Scale::Full => vec![(2, 1), (2, 2), (3, 1), (3, 2), (3, 3)],
        Scale::Small => vec![(2, 1)],
    };
    for &(n, k) in &coproduct_cells {
        let chain_trials = if k >= 3 { 1 } else { trials };
        push_job(jobs, seed, move |s| {
            let xs = sampled_xs(s, 2);
            match build_or_fail(
                "exchange/assembly",
                &format!("n={n}"),
                s,
                Case::Rational,
                None,
                &vector_specs(n, &xs),
            ) {
                Ok(asm) => check_relation(Relation::CoproductOfBChain, &asm, k, chain_trials, s),
                Err(entries) => entries,
            }
        });
    }
    push_job(jobs, seed, move |s| {
        let xs = sampled_xs(s, 1);
        match build_or_fail(
            "exchange/assembly",
            "n=3",
            s,
            Case::Rational,
            None,
            &vector_specs(3, &xs),
        ) {
            Ok(asm) => check_relation_prefactor_rejected(&asm, s),
            Err(entries) => entries,
        }
    });
}

fn identity_jobs(jobs: &mut Vec<Job>, seed: u64, scale: Scale) {
    let factorial_k = match scale {
        Scale::Full => 6,
        Scale::Small => 4,
    };
    let q_values: Vec<Scalar> = match scale {
        Scale::Full => vec![scalar_q(2, 1), scalar_q(2, 3), scalar_q(-3, 5)],
        Scale::Small => vec![scalar_q(2, 1)],
    };
    push_job(jobs, seed, move |s| {
        check_factorial_sums(None, factorial_k, s)
    });
    for q in q_values.clone() {
        push_job(jobs, seed, move |s| {
            check_factorial_sums(Some(&q), factorial_k, s)
        });
    }
    let kernel_pairs: Vec<(usize, usize)> = match scale {
        Scale::Full => {
            let mut pairs = Vec::new();
            for p in 1..=3usize {
                for r in p..=5usize {
                    pairs.push((p, r));
                }
            }
            pairs
        }
        Scale::Small => vec![(1, 2), (2, 3)],
    };
    let trials = match scale {
        Scale::Full => 2,
        Scale::Small => 1,
    };
    let kernel_qs: Vec<Scalar> = match scale {
        Scale::Full => vec![scalar_q(2, 1), scalar_q(2, 3)],
        Scale::Small => vec![scalar_q(2, 1)],
    };
    for &(p, r) in &kernel_pairs {
        push_job(jobs, seed, move |s| {
            check_kernel_expansion(None, p, r, trials, s)
        });
        push_job(jobs, seed, move |s| {
            check_kernel_aligned(None, p, r, trials, s)
        });
        for q in kernel_qs.clone() {
            push_job(jobs, seed, move |s| {
                check_kernel_expansion(Some(&q), p, r, trials, s)
            });
        }
        for q in kernel_qs.clone() {
            push_job(jobs, seed, move |s| {
                check_kernel_aligned(Some(&q), p, r, trials, s)
            });
        }
    }
    push_job(jobs, seed, move |s| {
        check_kernel_aligned_variants_rejected(&scalar_q(2, 1), s)
    });
    let ladders: Vec<Vec<usize>> = match scale {
        Scale::Full => vec![
            vec![1, 1],
            vec![2, 1],
            vec![2, 2],
            vec![3, 1],
            vec![3, 2],
            vec![2, 1, 1],
            vec![3, 2, 1],
        ],
        Scale::Small => vec![vec![2, 1]],
    };
    for eta in ladders {
        push_job(jobs, seed, move |s| check_ladder_three_way(&eta, s));
    }
}

/// All compositions of `total` into exactly `parts` nonnegative parts, in
/// lexicographic order.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return if total == 0 {
            vec![Vec::new()]
        } else {
            Vec::new()
        };
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            let mut item = Vec::with_capacity(parts);
            item.push(first);
            item.append(&mut rest);
            out.push(item);
        }
    }
    out
}

fn cross_validate_jobs(jobs: &mut Vec<Job>, seed: u64, scale: Scale) {
    let case_qs: Vec<(Case, Option<Scalar>)> = match scale {
        Scale::Full => vec![
            (Case::Rational, None),
            (Case::Trigonometric, Some(scalar_q(2, 1))),
            (Case::Trigonometric, Some(scalar_q(2, 3))),
        ],
        Scale::Small => vec![
            (Case::Rational, None),
            (Case::Trigonometric, Some(scalar_q(2, 1))),
        ],
    };
    match scale {
        Scale::Full => {
            let realizations = [
                Realization::Vector,
                Realization::WedgePower { k: 2 },
                Realization::SymmetricPower { k: 2 },
            ];
            for (case, q) in &case_qs {
                for n in 2..=4usize {
                    for realization in &realizations {
                        for total in 1..=3usize {
                            for xi in compositions(total, n - 1) {
                                let cell = RouteCell {
                                    case: *case,
                                    q: q.clone(),
                                    n,
                                    realization: realization.clone(),
                                    factors: 1,
                                    xi,
                                };
                                push_job(jobs, seed, move |s| check_route_cell(&cell, 20, s));
                            }
                        }
                    }
                }
                // Empty profiles evaluate to the singular vector on every route.
                for n in 2..=3usize {
                    let cell = RouteCell {
                        case: *case,
                        q: q.clone(),
                        n,
                        realization: Realization::Vector,
                        factors: 1,
                        xi: vec![0; n - 1],
                    };
                    push_job(jobs, seed, move |s| check_route_cell(&cell, 3, s));
                }
                for factors in 2..=3usize {
                    for n in 2..=3usize {
                        for total in 1..=2usize {
                            for xi in compositions(total, n - 1) {
                                let cell = RouteCell {
                                    case: *case,
                                    q: q.clone(),
                                    n,
                                    realization: Realization::Vector,
                                    factors,
                                    xi,
                                };
                                push_job(jobs, seed, move |s| check_route_cell(&cell, 5, s));
                            }
                        }
                    }
                }
            }
        }
        Scale::Small => {
            let small_cells: Vec<(Case, Option<Scalar>, usize, Realization, usize, Vec<usize>, usize)> = vec![
                (Case::Rational, None, 2, Realization::Vector, 1, vec![2], 3),
                (Case::Rational, None, 3, Realization::Vector, 1, vec![1, 1], 3),
                (
                    Case::Rational,
                    None,
                    3,
                    Realization::WedgePower { k: 2 },
                    1,
                    vec![1, 1],
                    2,
                ),
                (
                    Case::Trigonometric,
                    Some(scalar_q(2, 1)),
                    2,
                    Realization::Vector,
                    1,
                    vec![2],
                    2,
                ),
                (
                    Case::Trigonometric,
                    Some(scalar_q(2, 1)),
                    3,
                    Realization::Vector,
                    1,
                    vec![1, 1],
                    2,
                ),
                (Case::Rational, None, 2, Realization::Vector, 2, vec![2], 2),
                (Case::Rational, None, 2, Realization::Vector, 3, vec![2], 2),
                (
                    Case::Trigonometric,
                    Some(scalar_q(2, 1)),
                    3,
                    Realization::Vector,
                    2,
                    vec![1, 1],
                    2,
                ),
            ];
            for (case, q, n, realization, factors, xi, points) in small_cells {
                let cell = RouteCell {
                    case,
                    q,
                    n,
                    realization,
                    factors,
                    xi,
                };
                push_job(jobs, seed, move |s| check_route_cell(&cell, points, s));
            }
        }
    }
    let families = coset_families();
    let picked: Vec<CosetFamily> = match scale {
        Scale::Full => families,
        Scale::Small => vec![
            families[0].clone(),
            families[1].clone(),
            families[8].clone(),
        ],
    };
    for family in picked {
        push_job(jobs, seed, move |s| check_coset_family(&family, s));
    }
}

/// The sampled summand families for the coset restriction check.
pub fn coset_families() -> Vec<CosetFamily> {
    vec![
        CosetFamily {
            case: Case::Rational,
            q: None,
            n: 2,
            factors: 2,
            xi: vec![2],
            chain: vec![vec![0], vec![1], vec![2]],
        },
        CosetFamily {
            case: Case::Rational,
            q: None,
            n: 2,
            factors: 2,
            xi: vec![2],
            chain: vec![vec![0], vec![2], vec![2]],
        },
        CosetFamily {
            case: Case::Rational,
            q: None,
            n: 2,
            factors: 2,
            xi: vec![3],
            chain: vec![vec![0], vec![2], vec![3]],
        },
        CosetFamily {
            case: Case::Rational,
            q: None,
            n: 3,
            factors: 2,
            xi: vec![1, 1],
            chain: vec![vec![0, 0], vec![1, 0], vec![1, 1]],
        },
        CosetFamily {
            case: Case::Rational,
            q: None,
            n: 3,
            factors: 2,
            xi: vec![2, 1],
            chain: vec![vec![0, 0], vec![2, 1], vec![2, 1]],
        },
        CosetFamily {
            case: Case::Rational,
            q: None,
            n: 3,
            factors: 3,
            xi: vec![1, 1],
            chain: vec![vec![0, 0], vec![1, 0], vec![1, 1], vec![1, 1]],
        },
        CosetFamily {
            case: Case::Rational,
            q: None,
            n: 2,
            factors: 3,
            xi: vec![2],
            chain: vec![vec![0], vec![1], vec![1], vec![2]],
        },
        CosetFamily {
            case: Case::Rational,
            q: None,
            n: 3,
            factors: 2,
            xi: vec![2, 2],
            chain: vec![vec![0, 0], vec![1, 2], vec![2, 2]],
        },
        CosetFamily {
            case: Case::Trigonometric,
            q: Some(scalar_q(2, 1)),
            n: 2,
            factors: 2,
            xi: vec![2],
            chain: vec![vec![0], vec![2], vec![2]],
        },
        CosetFamily {
            case: Case::Trigonometric,
            q: Some(scalar_q(2, 3)),
            n: 3,
            factors: 2,
            xi: vec![1, 1],
            chain: vec![vec![0, 0], vec![0, 1], vec![1, 1]],
        },
    ]
}

/// Runs the named suite at the given scale and returns the merged report.
/// Identical arguments always produce identical reports.
pub fn run_suite(suite: Suite, seed: u64, scale: Scale) -> Vec<ReportEntry> {
    let mut jobs = Vec::new();
    match suite {
        Suite::RMatrix => r_matrix_jobs(&mut jobs, seed, scale),
        Suite::MonodromyExchange => monodromy_jobs(&mut jobs, seed, scale),
        Suite::ExchangeRelations => exchange_relation_jobs(&mut jobs, seed, scale),
        Suite::Identities => identity_jobs(&mut jobs, seed, scale),
        Suite::CrossValidate => cross_validate_jobs(&mut jobs, seed, scale),
        Suite::All => {
            r_matrix_jobs(&mut jobs, seed, scale);
            monodromy_jobs(&mut jobs, seed, scale);
            exchange_relation_jobs(&mut jobs, seed, scale);
            identity_jobs(&mut jobs, seed, scale);
            cross_validate_jobs(&mut jobs, seed, scale);
        }
    }
    run_jobs(jobs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc(n: i64, d: i64) -> Scalar {
        Scalar::new(n, d).expect("nonzero denominator")
    }

    fn vector_assembly(case: Case, q: Option<&Scalar>, n: usize, xs: &[Scalar]) -> Assembly {
        Assembly::build(case, q, &vector_specs(n, xs)).expect("valid assembly")
    }

    fn inversions(perm: &[usize]) -> usize {
        let mut count = 0;
        for i in 0..perm.len() {
            for j in i + 1..perm.len() {
                if perm[i] > perm[j] {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn bubble_words_are_reduced_and_distinct() {
        for k in 1..=4 {
            let perms = permutations(k);
            let mut words = Vec::new();
            for perm in &perms {
                let word = bubble_word(perm);
                assert_eq!(word.len(), inversions(perm), "word not reduced for {perm:?}");
                // Applying the adjacent swaps recovers the permutation, so
                // distinct permutations have distinct words.
                words.push(word);
            }
            words.sort();
            words.dedup();
            assert_eq!(words.len(), perms.len());
        }
    }

    #[test]
    fn ordered_partitions_count_multinomials() {
        let parts = ordered_partitions(4, &[2, 1, 1]);
        assert_eq!(parts.len(), 12);
        for assignment in &parts {
            let mut seen: Vec<usize> = assignment.iter().flatten().cloned().collect();
            seen.sort();
            assert_eq!(seen, vec![0, 1, 2, 3]);
            for part in assignment {
                assert!(part.windows(2).all(|w| w[0] < w[1]));
            }
        }
        assert_eq!(ordered_partitions(3, &[3]).len(), 1);
        assert_eq!(ordered_partitions(3, &[0, 3]).len(), 1);
    }

    #[test]
    fn factorial_sums_agree_with_products() {
        let entries = check_factorial_sums(None, 5, 7);
        assert!(!entries.is_empty());
        assert!(!has_failures(&entries), "{entries:?}");
        let q = sc(2, 1);
        let entries = check_factorial_sums(Some(&q), 4, 9);
        assert!(!has_failures(&entries), "{entries:?}");
    }

    #[test]
    fn kernel_identities_hold_on_small_grid() {
        for (p, r) in [(1, 2), (2, 2), (2, 3)] {
            let entries = check_kernel_expansion(None, p, r, 1, 21);
            assert!(!has_failures(&entries), "expansion p={p} r={r}: {entries:?}");
            let entries = check_kernel_aligned(None, p, r, 1, 22);
            assert!(!has_failures(&entries), "aligned p={p} r={r}: {entries:?}");
        }
        let q = sc(2, 1);
        let entries = check_kernel_expansion(Some(&q), 2, 3, 1, 23);
        assert!(!has_failures(&entries), "{entries:?}");
        let entries = check_kernel_aligned(Some(&q), 2, 3, 1, 24);
        assert!(!has_failures(&entries), "{entries:?}");
    }

    #[test]
    fn aligned_kernel_variants_are_rejected() {
        let entries = check_kernel_aligned_variants_rejected(&sc(2, 1), 3);
        assert_eq!(entries.len(), 2);
        assert!(!has_failures(&entries), "{entries:?}");
    }

    #[test]
    fn ladder_three_way_agrees() {
        for eta in [vec![2usize, 1], vec![2, 2]] {
            let entries = check_ladder_three_way(&eta, 5);
            assert!(!has_failures(&entries), "eta={eta:?}: {entries:?}");
            assert!(entries.iter().any(|e| e.verdict == Verdict::Pass));
        }
    }

    #[test]
    fn r_matrix_properties_hold() {
        let entries = check_r_properties(Case::Rational, 2, None, 2, 11);
        assert!(!has_failures(&entries), "{entries:?}");
        let q = sc(2, 1);
        let entries = check_r_properties(Case::Trigonometric, 2, Some(&q), 2, 12);
        assert!(!has_failures(&entries), "{entries:?}");
    }

    #[test]
    fn monodromy_relations_hold_quickly() {
        let asm = vector_assembly(Case::Rational, None, 2, &[sc(1, 3)]);
        let entries = check_monodromy_exchange(&asm, 2, 13);
        assert!(!has_failures(&entries), "{entries:?}");
        let q = sc(2, 1);
        let asm = vector_assembly(Case::Trigonometric, Some(&q), 2, &[sc(1, 3)]);
        let entries = check_monodromy_exchange(&asm, 2, 14);
        assert!(!has_failures(&entries), "{entries:?}");
    }

    #[test]
    fn exchange_relations_hold_quickly() {
        let asm = vector_assembly(Case::Rational, None, 2, &[sc(2, 5)]);
        for relation in [Relation::AWithA, Relation::AWithB, Relation::DWithB] {
            let entries = check_relation(relation, &asm, 2, 1, 15);
            assert!(!has_failures(&entries), "{relation:?}: {entries:?}");
        }
        let entries = check_relation(Relation::AWithBChain, &asm, 2, 1, 16);
        assert!(!has_failures(&entries), "{entries:?}");
    }

    #[test]
    fn prefactored_variant_is_rejected() {
        let asm = vector_assembly(Case::Rational, None, 3, &[sc(1, 2)]);
        let entries = check_relation_prefactor_rejected(&asm, 17);
        assert!(!has_failures(&entries), "{entries:?}");
    }

    #[test]
    fn route_cells_agree_with_the_oracle() {
        let cell = RouteCell {
            case: Case::Rational,
            q: None,
            n: 2,
            realization: Realization::Vector,
            factors: 1,
            xi: vec![1],
        };
        let entries = check_route_cell(&cell, 2, 18);
        assert!(!has_failures(&entries), "{entries:?}");
        assert!(entries.iter().any(|e| e.check == "routes/weight"));
        let cell = RouteCell {
            case: Case::Rational,
            q: None,
            n: 2,
            realization: Realization::Vector,
            factors: 2,
            xi: vec![1],
        };
        let entries = check_route_cell(&cell, 1, 19);
        assert!(!has_failures(&entries), "{entries:?}");
        assert!(entries.iter().any(|e| e.check == "routes/split-binary"));
    }

    #[test]
    fn coset_restriction_holds_for_a_probe_family() {
        let family = coset_families()[1].clone();
        let entries = check_coset_family(&family, 20);
        assert!(!has_failures(&entries), "{entries:?}");
        assert!(entries
            .iter()
            .any(|e| e.check == "coset/stationary-summand" && e.verdict == Verdict::Pass));
    }

    #[test]
    fn suite_and_scale_tokens_round_trip() {
        for token in Suite::TOKENS {
            assert_eq!(Suite::parse(token).expect("known token").token(), token);
        }
        assert_eq!(Suite::parse("nonsense"), None);
        for token in ["small", "full"] {
            assert_eq!(Scale::parse(token).expect("known token").token(), token);
        }
    }

    #[test]
    fn suites_are_deterministic_across_runs() {
        let first = run_suite(Suite::RMatrix, 42, Scale::Small);
        let second = run_suite(Suite::RMatrix, 42, Scale::Small);
        assert!(!first.is_empty());
        assert_eq!(first, second);
        assert!(!has_failures(&first), "{first:?}");
    }
}
