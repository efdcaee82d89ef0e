//! The auxiliary-trace construction of vector-valued weight functions.
//!
//! For a composition `xi = (xi^1, ..., xi^{N-1})` the unnormalized weight
//! operator on a rank-`N` carrier is a trace over `|xi|` auxiliary copies of
//! `C^N`:
//!
//! ```text
//! Bhat_xi(t) = tr_aux( T^(1)(t^1_1) ... T^(K)(t^{N-1}_{xi^{N-1}})
//!                      prod_{(a,i)<(b,j)} R^{(leg(b,j), leg(a,i))}(t^b_j - t^a_i)
//!                      E_21^{(x) xi^1} (x) ... (x) E_{N,N-1}^{(x) xi^{N-1}} (x) 1 )
//! ```
//!
//! with the legs ordered block by block (`t^1` first) and the arrow product
//! over all leg pairs in lexicographic order.  In the trigonometric case the
//! `T`-factors are `L^-` operators and the `R`-arguments are ratios
//! `t^b_j / t^a_i`.  Because each auxiliary leg carries a single matrix unit,
//! the trace collapses to a sum over one letter word: with
//! `c = (1^{xi^1} 2^{xi^2} ...)` and the start word `i0 = c + 1`,
//!
//! ```text
//! Bhat_xi(t) = sum_{j} [ T_{c_1 j_1}(u_1) ... T_{c_K j_K}(u_K) ] w_j ,
//!              w = (R-product) |i0>,
//! ```
//!
//! which this module evaluates by applying the sparse `R`-factors to a dense
//! auxiliary word vector and chaining module operators.
//!
//! The normalized function divides by
//! `prod_a prod_{i<j} (t^a_j - t^a_i + 1)` and
//! `prod_{a<b} prod_{i,j} (t^b_j - t^a_i)` (rational), respectively by
//! `prod_a prod_{i<j} (q t^a_j - 1/q t^a_i) / t^a_i` and
//! `prod_{a<b} prod_{i,j} (t^b_j - t^a_i) / t^a_i` (trigonometric); all
//! denominator factors are enumerated before evaluation and a vanishing one
//! is reported by name.  The normalized function is symmetric in each
//! variable block, and applying it to the joint singular vector lands in the
//! weight space of content `Lambda^a - xi^a + xi^{a-1}`.
//!
//! The module also hosts the two component recursions that peel off the
//! first (or last) variable block by re-reading the remaining weight function
//! of rank `N - 1` on a dressed carrier with one auxiliary `C^{N-1}`
//! evaluation leg per peeled variable.

use crate::reps::{aux_map_carrier, Assembly, Case, LSign, Pullback, RepNode, RepsError};
use crate::scalar::{Scalar, ScalarError};
use crate::tensor::{LinearOperator, TensorError};
use serde::{Deserialize, Serialize};

/// Errors from weight-function evaluation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TraceError {
    #[error("shape mismatch: {reason}")]
    Shape { reason: String },
    #[error("pole: {factor} vanishes")]
    Pole { factor: String },
    #[error("size cap exceeded: {context}")]
    CapExceeded { context: String },
    #[error("weight-space violation: {context}")]
    WeightViolation { context: String },
    #[error(transparent)]
    Reps(#[from] RepsError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

/// A composition `(xi^1, ..., xi^{N-1})` of variable-block sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Composition {
    parts: Vec<usize>,
}

impl Composition {
    pub fn new(parts: Vec<usize>) -> Self {
        Composition { parts }
    }

    pub fn parts(&self) -> &[usize] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Total number of variables `|xi|`.
    pub fn size(&self) -> usize {
        self.parts.iter().sum()
    }

    /// `xi^{<a} = xi^1 + ... + xi^{a-1}` (1-based `a`).
    pub fn prefix(&self, a: usize) -> usize {
        self.parts[..a - 1].iter().sum()
    }

    /// Flattened 1-based leg index of `t^a_i`.
    pub fn leg(&self, a: usize, i: usize) -> usize {
        self.prefix(a) + i
    }

    /// Block and in-block position of a 1-based leg index.
    pub fn block_of(&self, leg: usize) -> (usize, usize) {
        let mut rest = leg;
        for (a, &p) in self.parts.iter().enumerate() {
            if rest <= p {
                return (a + 1, rest);
            }
            rest -= p;
        }
        panic!("leg {leg} out of range for {:?}", self.parts);
    }
}

/// Variables grouped into blocks matching a composition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarCollection {
    blocks: Vec<Vec<Scalar>>,
}

impl VarCollection {
    pub fn new(blocks: Vec<Vec<Scalar>>) -> Self {
        VarCollection { blocks }
    }

    pub fn shape(&self) -> Composition {
        Composition::new(self.blocks.iter().map(Vec::len).collect())
    }

    pub fn blocks(&self) -> &[Vec<Scalar>] {
        &self.blocks
    }

    /// Block `a` (1-based).
    pub fn block(&self, a: usize) -> &[Scalar] {
        &self.blocks[a - 1]
    }

    /// `t^a_i` (both indices 1-based).
    pub fn get(&self, a: usize, i: usize) -> &Scalar {
        &self.blocks[a - 1][i - 1]
    }

    /// All variables in block order.
    pub fn flat(&self) -> Vec<Scalar> {
        self.blocks.iter().flatten().cloned().collect()
    }

    /// The first `eta^a` variables of each block.
    pub fn head(&self, eta: &[usize]) -> VarCollection {
        VarCollection {
            blocks: self
                .blocks
                .iter()
                .zip(eta)
                .map(|(b, &h)| b[..h].to_vec())
                .collect(),
        }
    }

    /// The variables `eta^a + 1 ..` of each block.
    pub fn tail(&self, eta: &[usize]) -> VarCollection {
        VarCollection {
            blocks: self
                .blocks
                .iter()
                .zip(eta)
                .map(|(b, &h)| b[h..].to_vec())
                .collect(),
        }
    }

    /// Drops the last block.
    pub fn drop_last(&self) -> VarCollection {
        VarCollection {
            blocks: self.blocks[..self.blocks.len() - 1].to_vec(),
        }
    }

    /// Drops the first block.
    pub fn drop_first(&self) -> VarCollection {
        VarCollection {
            blocks: self.blocks[1..].to_vec(),
        }
    }
}

/// Which end of the block list a recursion peels off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    First,
    Last,
}

/// Coordinates of a weight-function value on the joint carrier basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightResult {
    pub coordinates: Vec<Scalar>,
    /// `gl`-content of the target weight space.
    pub weight: Vec<i64>,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
}

/// A monomial of the operator expansion, e.g. factor `T_{row,col}(t^block_index)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionFactor {
    pub row: usize,
    pub col: usize,
    pub block: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionTerm {
    pub factors: Vec<ExpansionFactor>,
    pub coefficient: Scalar,
}

// ---------------------------------------------------------------------------
// Auxiliary word vector.
// ---------------------------------------------------------------------------

fn aux_letters(mut idx: usize, n: usize, legs: usize) -> Vec<usize> {
    let mut out = vec![0; legs];
    for slot in (0..legs).rev() {
        out[slot] = idx % n + 1;
        idx /= n;
    }
    out
}

fn aux_index(letters: &[usize], n: usize) -> usize {
    letters.iter().fold(0, |acc, &l| acc * n + (l - 1))
}

/// Applies one `R`-factor with first slot on `leg_hi` and second slot on
/// `leg_lo` (0-based legs) to a dense auxiliary word vector.
fn apply_r_factor(
    case: Case,
    q: Option<&Scalar>,
    u: &Scalar,
    n: usize,
    legs: usize,
    leg_hi: usize,
    leg_lo: usize,
    w: &[Scalar],
) -> Result<Vec<Scalar>, TraceError> {
    let mut out = vec![Scalar::zero(); w.len()];
    match case {
        Case::Rational => {
            for (idx, c) in w.iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                let mut letters = aux_letters(idx, n, legs);
                out[idx] += &(u * c);
                letters.swap(leg_hi, leg_lo);
                out[aux_index(&letters, n)] += c;
            }
        }
        Case::Trigonometric => {
            let q = q.expect("trigonometric evaluation carries q");
            let q_inv = q.inv().map_err(TraceError::from)?;
            let diag_same = &(u * q) - &q_inv;
            let diag_diff = u - &Scalar::one();
            let hop_hi = &(q - &q_inv) * u;
            let hop_lo = q - &q_inv;
            for (idx, c) in w.iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                let mut letters = aux_letters(idx, n, legs);
                let alpha = letters[leg_hi];
                let beta = letters[leg_lo];
                if alpha == beta {
                    out[idx] += &(&diag_same * c);
                } else {
                    out[idx] += &(&diag_diff * c);
                    let hop = if alpha > beta { &hop_hi } else { &hop_lo };
                    letters.swap(leg_hi, leg_lo);
                    out[aux_index(&letters, n)] += &(hop * c);
                }
            }
        }
    }
    Ok(out)
}

/// Leg metadata: `(block, in-block index, variable)` in printed order.
fn leg_list(xi: &Composition, t: &VarCollection) -> Vec<(usize, usize, Scalar)> {
    let mut out = Vec::with_capacity(xi.size());
    for (a0, &p) in xi.parts().iter().enumerate() {
        for i in 1..=p {
            out.push((a0 + 1, i, t.get(a0 + 1, i).clone()));
        }
    }
    out
}

/// All lexicographic leg pairs `(lo, hi)` with `lo < hi` (0-based legs).
fn leg_pairs(legs: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for lo in 0..legs {
        for hi in lo + 1..legs {
            out.push((lo, hi));
        }
    }
    out
}

/// The auxiliary word vector `w = (R-product) |i0>` of dimension `n^K`.
///
/// `reversed` applies the product factors in the opposite order; the result
/// must not depend on it (checked by tests), because neighbouring factors
/// may be exchanged by the braid relation.
fn aux_word(
    case: Case,
    q: Option<&Scalar>,
    n: usize,
    xi: &Composition,
    t: &VarCollection,
    reversed: bool,
) -> Result<Vec<Scalar>, TraceError> {
    let legs = xi.size();
    let dim = n
        .checked_pow(legs as u32)
        .filter(|&d| d <= 256)
        .ok_or_else(|| TraceError::CapExceeded {
            context: format!("auxiliary word dimension {n}^{legs} exceeds the cap 256"),
        })?;
    let vars = leg_list(xi, t);
    let start: Vec<usize> = vars.iter().map(|(a, _, _)| a + 1).collect();
    let mut w = vec![Scalar::zero(); dim];
    w[aux_index(&start, n)] = Scalar::one();
    // Leftmost factor acts last, so walk the pair list from the right.
    let mut pairs = leg_pairs(legs);
    if reversed {
        pairs.reverse();
    }
    for &(lo, hi) in pairs.iter().rev() {
        let u = match case {
            Case::Rational => &vars[hi].2 - &vars[lo].2,
            Case::Trigonometric => {
                if vars[lo].2.is_zero() {
                    return Err(TraceError::Pole {
                        factor: format!("t^{}_{} = 0", vars[lo].0, vars[lo].1),
                    });
                }
                vars[hi].2.div(&vars[lo].2)?
            }
        };
        w = apply_r_factor(case, q, &u, n, legs, hi, lo, &w)?;
    }
    Ok(w)
}

// ---------------------------------------------------------------------------
// The unnormalized and normalized weight operators.
// ---------------------------------------------------------------------------

fn check_shape(node: &RepNode, xi: &Composition, t: &VarCollection) -> Result<(), TraceError> {
    let rank = node.rank();
    if xi.len() + 1 != rank {
        return Err(TraceError::Shape {
            reason: format!(
                "composition has {} blocks, expected rank - 1 = {}",
                xi.len(),
                rank - 1
            ),
        });
    }
    if t.shape() != *xi {
        return Err(TraceError::Shape {
            reason: format!(
                "variable blocks {:?} do not match the composition {:?}",
                t.shape().parts(),
                xi.parts()
            ),
        });
    }
    Ok(())
}

/// One monodromy grid per leg, in printed order.
fn leg_grids(
    case: Case,
    node: &RepNode,
    xi: &Composition,
    t: &VarCollection,
) -> Result<Vec<Vec<Vec<LinearOperator>>>, TraceError> {
    leg_list(xi, t)
        .iter()
        .map(|(_, _, u)| match case {
            Case::Rational => node.t_grid(u).map_err(TraceError::from),
            Case::Trigonometric => node.l_grid(LSign::Minus, u).map_err(TraceError::from),
        })
        .collect()
}

/// Applies the unnormalized weight operator to the given columns.
pub fn hat_apply(
    case: Case,
    q: Option<&Scalar>,
    node: &RepNode,
    xi: &Composition,
    t: &VarCollection,
    columns: &[Vec<Scalar>],
) -> Result<Vec<Vec<Scalar>>, TraceError> {
    check_shape(node, xi, t)?;
    let n = node.rank();
    let legs = xi.size();
    let w = aux_word(case, q, n, xi, t, false)?;
    let grids = leg_grids(case, node, xi, t)?;
    let vars = leg_list(xi, t);
    let dim = node.dim();
    let mut out = vec![vec![Scalar::zero(); dim]; columns.len()];
    for (idx, coeff) in w.iter().enumerate() {
        if coeff.is_zero() {
            continue;
        }
        let letters = aux_letters(idx, n, legs);
        for (col, acc) in columns.iter().zip(out.iter_mut()) {
            let mut v = col.clone();
            for k in (0..legs).rev() {
                let row = vars[k].0; // c_k = block label
                let col_letter = letters[k];
                v = grids[k][row - 1][col_letter - 1].apply(&v)?;
            }
            for (slot, value) in acc.iter_mut().zip(&v) {
                *slot += &(coeff * value);
            }
        }
    }
    Ok(out)
}

/// The unnormalized weight operator on the node's carrier.
pub fn hat_weight_trace(
    case: Case,
    q: Option<&Scalar>,
    node: &RepNode,
    xi: &Composition,
    t: &VarCollection,
) -> Result<LinearOperator, TraceError> {
    check_shape(node, xi, t)?;
    let n = node.rank();
    let legs = xi.size();
    let w = aux_word(case, q, n, xi, t, false)?;
    let grids = leg_grids(case, node, xi, t)?;
    let vars = leg_list(xi, t);
    let spaces = node.spaces();
    let mut total = LinearOperator::zero(spaces.clone(), spaces.clone());
    for (idx, coeff) in w.iter().enumerate() {
        if coeff.is_zero() {
            continue;
        }
        let letters = aux_letters(idx, n, legs);
        let mut acc = LinearOperator::identity(spaces.clone());
        for k in (0..legs).rev() {
            let row = vars[k].0;
            let col_letter = letters[k];
            acc = grids[k][row - 1][col_letter - 1].compose(&acc)?;
        }
        total = total.add(&acc.scale(coeff))?;
    }
    Ok(total)
}

/// Internal variant used by the reorder-invariance test.
#[cfg(test)]
fn hat_weight_trace_reversed(
    case: Case,
    q: Option<&Scalar>,
    node: &RepNode,
    xi: &Composition,
    t: &VarCollection,
) -> Result<LinearOperator, TraceError> {
    let n = node.rank();
    let legs = xi.size();
    let w = aux_word(case, q, n, xi, t, true)?;
    let grids = leg_grids(case, node, xi, t)?;
    let vars = leg_list(xi, t);
    let spaces = node.spaces();
    let mut total = LinearOperator::zero(spaces.clone(), spaces.clone());
    for (idx, coeff) in w.iter().enumerate() {
        if coeff.is_zero() {
            continue;
        }
        let letters = aux_letters(idx, n, legs);
        let mut acc = LinearOperator::identity(spaces.clone());
        for k in (0..legs).rev() {
            acc = grids[k][vars[k].0 - 1][letters[k] - 1].compose(&acc)?;
        }
        total = total.add(&acc.scale(coeff))?;
    }
    Ok(total)
}

/// The normalization scalar, with every denominator factor checked by name
/// before any division.  `eval_points` are the evaluation points of the
/// carrier's factors (rational case only: the variables must avoid them).
pub fn normalization(
    case: Case,
    q: Option<&Scalar>,
    xi: &Composition,
    t: &VarCollection,
    eval_points: &[Scalar],
) -> Result<Scalar, TraceError> {
    let blocks = xi.len();
    let mut norm = Scalar::one();
    match case {
        Case::Rational => {
            for a in 1..=blocks {
                let b = t.block(a);
                for i in 0..b.len() {
                    for j in i + 1..b.len() {
                        let f = &(&b[j] - &b[i]) + &Scalar::one();
                        if f.is_zero() {
                            return Err(TraceError::Pole {
                                factor: format!("t^{a}_{} - t^{a}_{} + 1", j + 1, i + 1),
                            });
                        }
                        norm = norm.div(&f)?;
                    }
                }
            }
            for a in 1..=blocks {
                for b in a + 1..=blocks {
                    for (i, ti) in t.block(a).iter().enumerate() {
                        for (j, tj) in t.block(b).iter().enumerate() {
                            let f = tj - ti;
                            if f.is_zero() {
                                return Err(TraceError::Pole {
                                    factor: format!("t^{b}_{} - t^{a}_{}", j + 1, i + 1),
                                });
                            }
                            norm = norm.div(&f)?;
                        }
                    }
                }
            }
            for a in 1..=blocks {
                for (i, ti) in t.block(a).iter().enumerate() {
                    for x in eval_points {
                        if ti == x {
                            return Err(TraceError::Pole {
                                factor: format!("t^{a}_{} - x = {ti} - {x}", i + 1),
                            });
                        }
                    }
                }
            }
        }
        Case::Trigonometric => {
            let q = q.expect("trigonometric evaluation carries q");
            let q_inv = q.inv()?;
            for a in 1..=blocks {
                for (i, ti) in t.block(a).iter().enumerate() {
                    if ti.is_zero() {
                        return Err(TraceError::Pole {
                            factor: format!("t^{a}_{} = 0", i + 1),
                        });
                    }
                }
            }
            for a in 1..=blocks {
                let b = t.block(a);
                for i in 0..b.len() {
                    for j in i + 1..b.len() {
                        let f = &(q * &b[j]) - &(&q_inv * &b[i]);
                        if f.is_zero() {
                            return Err(TraceError::Pole {
                                factor: format!("q t^{a}_{} - (1/q) t^{a}_{}", j + 1, i + 1),
                            });
                        }
                        norm = norm.div(&f)?;
                        norm = &norm * &b[i];
                    }
                }
            }
            for a in 1..=blocks {
                for b in a + 1..=blocks {
                    for (i, ti) in t.block(a).iter().enumerate() {
                        for (j, tj) in t.block(b).iter().enumerate() {
                            let f = tj - ti;
                            if f.is_zero() {
                                return Err(TraceError::Pole {
                                    factor: format!("t^{b}_{} - t^{a}_{}", j + 1, i + 1),
                                });
                            }
                            norm = norm.div(&f)?;
                            norm = &norm * ti;
                        }
                    }
                }
            }
        }
    }
    Ok(norm)
}

/// Evaluation points of every module and auxiliary leg under a node.
pub fn eval_points(node: &RepNode) -> Vec<Scalar> {
    match node {
        RepNode::Module(m) => vec![m.x.clone()],
        RepNode::VectorEval { x, .. } | RepNode::DualEval { x, .. } => vec![x.clone()],
        RepNode::Shift { base, .. } | RepNode::Truncate { base, .. } => eval_points(base),
        RepNode::Tensor(fs) => fs.iter().flat_map(eval_points).collect(),
    }
}

/// The normalized weight operator.
pub fn weight_trace(
    case: Case,
    q: Option<&Scalar>,
    node: &RepNode,
    xi: &Composition,
    t: &VarCollection,
) -> Result<LinearOperator, TraceError> {
    let points = match case {
        Case::Rational => eval_points(node),
        Case::Trigonometric => Vec::new(),
    };
    let norm = normalization(case, q, xi, t, &points)?;
    Ok(hat_weight_trace(case, q, node, xi, t)?.scale(&norm))
}

/// Applies the normalized weight operator to the given columns.
pub fn weight_trace_apply(
    case: Case,
    q: Option<&Scalar>,
    node: &RepNode,
    xi: &Composition,
    t: &VarCollection,
    columns: &[Vec<Scalar>],
) -> Result<Vec<Vec<Scalar>>, TraceError> {
    let points = match case {
        Case::Rational => eval_points(node),
        Case::Trigonometric => Vec::new(),
    };
    let norm = normalization(case, q, xi, t, &points)?;
    let raw = hat_apply(case, q, node, xi, t, columns)?;
    Ok(raw
        .into_iter()
        .map(|col| col.iter().map(|c| c * &norm).collect())
        .collect())
}

/// The target content of `B_xi` applied to the joint singular vector:
/// `Lambda^a - xi^a + xi^{a-1}`.
pub fn expected_weight(total: &[i64], xi: &Composition) -> Vec<i64> {
    let n = total.len();
    let parts = xi.parts();
    (0..n)
        .map(|a| {
            let mut w = total[a];
            if a < parts.len() {
                w -= parts[a] as i64;
            }
            if a >= 1 && a - 1 < parts.len() {
                w += parts[a - 1] as i64;
            }
            w
        })
        .collect()
}

/// Applies the normalized weight operator to the joint singular vector and
/// checks that the result lies in the expected weight space.
pub fn apply_to_singular(
    asm: &Assembly,
    xi: &Composition,
    t: &VarCollection,
    method: &str,
) -> Result<WeightResult, TraceError> {
    let node = asm.node();
    let coords = weight_trace_apply(
        asm.case,
        asm.q.as_ref(),
        &node,
        xi,
        t,
        &[asm.joint_singular()],
    )?
    .pop()
    .expect("one column in, one out");
    let weight = confirm_weight(asm, xi, &coords)?;
    Ok(WeightResult {
        coordinates: coords,
        weight,
        method: method.to_string(),
        fingerprint: None,
    })
}

/// Checks `coords` against the expected weight space of `B_xi` on the joint
/// singular vector; returns the expected content.
pub fn confirm_weight(
    asm: &Assembly,
    xi: &Composition,
    coords: &[Scalar],
) -> Result<Vec<i64>, TraceError> {
    let expect = expected_weight(&asm.total_weight(), xi);
    for (idx, (c, w)) in coords.iter().zip(asm.basis_weights()).enumerate() {
        if !c.is_zero() && w != expect {
            return Err(TraceError::WeightViolation {
                context: format!(
                    "coordinate {idx} has content {w:?}, expected {expect:?}"
                ),
            });
        }
    }
    Ok(expect)
}

/// The operator expansion of the normalized weight function in monomials of
/// monodromy entries, sorted by column word.  Depends only on the rank, the
/// composition, and the variables — not on any module.
pub fn expansion(
    case: Case,
    q: Option<&Scalar>,
    n: usize,
    xi: &Composition,
    t: &VarCollection,
) -> Result<Vec<ExpansionTerm>, TraceError> {
    if xi.len() + 1 != n {
        return Err(TraceError::Shape {
            reason: format!(
                "composition has {} blocks, expected rank - 1 = {}",
                xi.len(),
                n - 1
            ),
        });
    }
    if t.shape() != *xi {
        return Err(TraceError::Shape {
            reason: "variable blocks do not match the composition".into(),
        });
    }
    let legs = xi.size();
    let norm = normalization(case, q, xi, t, &[])?;
    let w = aux_word(case, q, n, xi, t, false)?;
    let vars = leg_list(xi, t);
    let mut terms = Vec::new();
    for (idx, coeff) in w.iter().enumerate() {
        if coeff.is_zero() {
            continue;
        }
        let letters = aux_letters(idx, n, legs);
        let factors = (0..legs)
            .map(|k| ExpansionFactor {
                row: vars[k].0,
                col: letters[k],
                block: vars[k].0,
                index: vars[k].1,
            })
            .collect();
        terms.push(ExpansionTerm {
            factors,
            coefficient: coeff * &norm,
        });
    }
    Ok(terms)
}

// ---------------------------------------------------------------------------
// Component recursions.
// ---------------------------------------------------------------------------

/// Evaluates `B_xi` on the joint singular vector by peeling the first or the
/// last variable block: the remaining rank-`(N-1)` weight function is read on
/// a dressed carrier with one auxiliary `C^{N-1}` leg per peeled variable,
/// and its components are glued with a chain of monodromy entries in the
/// peeled variables.  Rational case only.
pub fn component_recursion(
    asm: &Assembly,
    xi: &Composition,
    t: &VarCollection,
    direction: Direction,
) -> Result<Vec<Scalar>, TraceError> {
    if asm.case != Case::Rational {
        return Err(TraceError::Reps(RepsError::CaseMismatch {
            expected: "rational".into(),
            got: "trigonometric".into(),
        }));
    }
    let node = asm.node();
    check_shape(&node, xi, t)?;
    let n = asm.n();
    let v = asm.joint_singular();
    match direction {
        Direction::First => {
            let points = t.block(1).to_vec();
            component_first(asm, xi, t, &points, &v)
        }
        Direction::Last => {
            let points = t.block(n - 1).to_vec();
            component_last(asm, xi, t, &points, &v)
        }
    }
}

fn component_first(
    asm: &Assembly,
    xi: &Composition,
    t: &VarCollection,
    points: &[Scalar],
    v: &[Scalar],
) -> Result<Vec<Scalar>, TraceError> {
    let n = asm.n();
    let k = points.len();
    let small = n - 1;
    let composite = aux_map_carrier(Pullback::ShiftUp, points, asm.node());
    let small_xi = Composition::new(xi.parts()[1..].to_vec());
    let small_t = t.drop_first();
    let dim_mod = asm.dim();
    let aux_dim = small.pow(k as u32);
    // Column |1,...,1> (x) v.
    let mut col = vec![Scalar::zero(); aux_dim * dim_mod];
    col[..dim_mod].clone_from_slice(v);
    let img = weight_trace_apply(
        Case::Rational,
        None,
        &composite,
        &small_xi,
        &small_t,
        &[col],
    )?
    .pop()
    .expect("one column");
    // Glue: result = sum_a T_{1,a_1+1}(t^1_1) ... T_{1,a_k+1}(t^1_k) g^a v.
    let grids: Vec<_> = points
        .iter()
        .map(|u| asm.node().t_grid(u))
        .collect::<Result<_, _>>()?;
    let mut out = vec![Scalar::zero(); dim_mod];
    for aux in 0..aux_dim {
        let seg = &img[aux * dim_mod..(aux + 1) * dim_mod];
        if seg.iter().all(Scalar::is_zero) {
            continue;
        }
        let letters = aux_letters(aux, small, k);
        let mut vcur = seg.to_vec();
        for leg in (0..k).rev() {
            vcur = grids[leg][0][letters[leg]].apply(&vcur)?; // T_{1, a+1}
        }
        for (slot, value) in out.iter_mut().zip(&vcur) {
            *slot += value;
        }
    }
    Ok(out)
}

fn component_last(
    asm: &Assembly,
    xi: &Composition,
    t: &VarCollection,
    points: &[Scalar],
    v: &[Scalar],
) -> Result<Vec<Scalar>, TraceError> {
    let n = asm.n();
    let k = points.len();
    let small = n - 1;
    let composite = aux_map_carrier(Pullback::KeepLow, points, asm.node());
    let small_xi = Composition::new(xi.parts()[..xi.len() - 1].to_vec());
    let small_t = t.drop_last();
    let dim_mod = asm.dim();
    let aux_dim = small.pow(k as u32);
    // Column v (x) |N-1, ..., N-1>.
    let mut col = vec![Scalar::zero(); dim_mod * aux_dim];
    for (m, value) in v.iter().enumerate() {
        col[m * aux_dim + (aux_dim - 1)] = value.clone();
    }
    let img = weight_trace_apply(
        Case::Rational,
        None,
        &composite,
        &small_xi,
        &small_t,
        &[col],
    )?
    .pop()
    .expect("one column");
    // Glue: result = sum_a T_{a_k,N}(s_k) ... T_{a_1,N}(s_1) g^a v; the
    // low-corner view keeps row indices, and the peeled block's dominant
    // column is N.
    let grids: Vec<_> = points
        .iter()
        .map(|u| asm.node().t_grid(u))
        .collect::<Result<_, _>>()?;
    let mut out = vec![Scalar::zero(); dim_mod];
    for aux in 0..aux_dim {
        let seg: Vec<Scalar> = (0..dim_mod)
            .map(|m| img[m * aux_dim + aux].clone())
            .collect();
        if seg.iter().all(Scalar::is_zero) {
            continue;
        }
        let letters = aux_letters(aux, small, k);
        let mut vcur = seg;
        for (leg, letter) in letters.iter().enumerate() {
            vcur = grids[leg][*letter - 1][n - 1].apply(&vcur)?; // T_{a, N}
        }
        for (slot, value) in out.iter_mut().zip(&vcur) {
            *slot += value;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reps::{build_module, Assembly, ModuleSpec, Realization};
    use std::sync::Arc;

    fn s(n: i64, d: i64) -> Scalar {
        Scalar::new(n, d).unwrap()
    }

    fn vector_asm(n: usize, xs: &[Scalar]) -> Assembly {
        let specs: Vec<ModuleSpec> = xs
            .iter()
            .map(|x| ModuleSpec {
                n,
                realization: Realization::Vector,
                x: x.clone(),
                weight: None,
            })
            .collect();
        Assembly::build(Case::Rational, None, &specs).unwrap()
    }

    fn trig_vector_asm(n: usize, xs: &[Scalar], q: &Scalar) -> Assembly {
        let specs: Vec<ModuleSpec> = xs
            .iter()
            .map(|x| ModuleSpec {
                n,
                realization: Realization::Vector,
                x: x.clone(),
                weight: None,
            })
            .collect();
        Assembly::build(Case::Trigonometric, Some(q), &specs).unwrap()
    }

    #[test]
    fn rank_two_normalized_function_is_a_plain_product() {
        let asm = vector_asm(2, &[s(1, 3)]);
        let xi = Composition::new(vec![2]);
        let t = VarCollection::new(vec![vec![s(3, 1), s(5, 2)]]);
        let got = weight_trace(Case::Rational, None, &asm.node(), &xi, &t).unwrap();
        let g1 = asm.node().t_grid(&s(3, 1)).unwrap();
        let g2 = asm.node().t_grid(&s(5, 2)).unwrap();
        let expect = g1[0][1].compose(&g2[0][1]).unwrap();
        assert_eq!(got.entries, expect.entries);
    }

    #[test]
    fn rank_three_expansion_matches_the_closed_coefficients() {
        let t1 = s(2, 7);
        let t2 = s(9, 5);
        let xi = Composition::new(vec![1, 1]);
        let t = VarCollection::new(vec![vec![t1.clone()], vec![t2.clone()]]);
        let terms = expansion(Case::Rational, None, 3, &xi, &t).unwrap();
        assert_eq!(terms.len(), 2);
        // T_12(t^1) T_23(t^2) with coefficient 1.
        assert_eq!(terms[0].factors[0].row, 1);
        assert_eq!(terms[0].factors[0].col, 2);
        assert_eq!(terms[0].factors[1].row, 2);
        assert_eq!(terms[0].factors[1].col, 3);
        assert_eq!(terms[0].coefficient, Scalar::one());
        // T_13(t^1) T_22(t^2) with coefficient 1/(t^2 - t^1).
        assert_eq!(terms[1].factors[0].col, 3);
        assert_eq!(terms[1].factors[1].col, 2);
        assert_eq!(
            terms[1].coefficient,
            (&t2 - &t1).inv().unwrap()
        );
    }

    #[test]
    fn rank_four_expansion_matches_the_closed_coefficients() {
        let t1 = s(1, 2);
        let t2 = s(8, 3);
        let t3 = s(-7, 4);
        let xi = Composition::new(vec![1, 1, 1]);
        let t = VarCollection::new(vec![
            vec![t1.clone()],
            vec![t2.clone()],
            vec![t3.clone()],
        ]);
        let terms = expansion(Case::Rational, None, 4, &xi, &t).unwrap();
        let d21 = &t2 - &t1;
        let d32 = &t3 - &t2;
        let d31 = &t3 - &t1;
        let mut seen = std::collections::BTreeMap::new();
        for term in &terms {
            let key: Vec<(usize, usize)> =
                term.factors.iter().map(|f| (f.row, f.col)).collect();
            seen.insert(key, term.coefficient.clone());
        }
        let one = Scalar::one();
        let expect = vec![
            (vec![(1, 2), (2, 3), (3, 4)], one.clone()),
            (vec![(1, 3), (2, 2), (3, 4)], d21.inv().unwrap()),
            (vec![(1, 2), (2, 4), (3, 3)], d32.inv().unwrap()),
            (
                vec![(1, 4), (2, 2), (3, 3)],
                (&d21 * &d32).inv().unwrap(),
            ),
            (
                vec![(1, 3), (2, 4), (3, 2)],
                (&d21 * &d32).inv().unwrap(),
            ),
            (
                vec![(1, 4), (2, 3), (3, 2)],
                (&(&d21 * &d32) + &one)
                    .div(&(&(&d21 * &d31) * &d32))
                    .unwrap(),
            ),
        ];
        assert_eq!(seen.len(), expect.len());
        for (key, coeff) in expect {
            assert_eq!(seen.get(&key), Some(&coeff), "monomial {key:?}");
        }
    }

    #[test]
    fn trigonometric_rank_three_expansion_matches() {
        let q = s(2, 1);
        let t1 = s(3, 5);
        let t2 = s(7, 2);
        let xi = Composition::new(vec![1, 1]);
        let t = VarCollection::new(vec![vec![t1.clone()], vec![t2.clone()]]);
        let terms = expansion(Case::Trigonometric, Some(&q), 3, &xi, &t).unwrap();
        assert_eq!(terms.len(), 2);
        assert_eq!(terms[0].coefficient, Scalar::one());
        // (q - 1/q) t^2 / (t^2 - t^1) on L_13 L_22.
        let expect = (&q - &q.inv().unwrap()) * &t2.div(&(&t2 - &t1)).unwrap();
        assert_eq!(terms[1].coefficient, expect);
    }

    #[test]
    fn trigonometric_rank_four_expansion_matches() {
        let q = s(2, 1);
        let g = &q - &q.inv().unwrap();
        let t1 = s(1, 2);
        let t2 = s(8, 3);
        let t3 = s(-7, 4);
        let xi = Composition::new(vec![1, 1, 1]);
        let t = VarCollection::new(vec![
            vec![t1.clone()],
            vec![t2.clone()],
            vec![t3.clone()],
        ]);
        let terms = expansion(Case::Trigonometric, Some(&q), 4, &xi, &t).unwrap();
        let d21 = &t2 - &t1;
        let d32 = &t3 - &t2;
        let d31 = &t3 - &t1;
        let mut seen = std::collections::BTreeMap::new();
        for term in &terms {
            let key: Vec<(usize, usize)> =
                term.factors.iter().map(|f| (f.row, f.col)).collect();
            seen.insert(key, term.coefficient.clone());
        }
        let pair = &(&g * &g) * &(&t2 * &t3);
        let expect = vec![
            (vec![(1, 2), (2, 3), (3, 4)], Scalar::one()),
            (
                vec![(1, 3), (2, 2), (3, 4)],
                &g * &t2.div(&d21).unwrap(),
            ),
            (
                vec![(1, 2), (2, 4), (3, 3)],
                &g * &t3.div(&d32).unwrap(),
            ),
            (
                vec![(1, 4), (2, 2), (3, 3)],
                pair.div(&(&d21 * &d32)).unwrap(),
            ),
            (
                vec![(1, 3), (2, 4), (3, 2)],
                pair.div(&(&d21 * &d32)).unwrap(),
            ),
            (
                vec![(1, 4), (2, 3), (3, 2)],
                (&(&g * &t3) * &(&(&d21 * &d32) + &pair))
                    .div(&(&(&d21 * &d31) * &d32))
                    .unwrap(),
            ),
        ];
        assert_eq!(seen.len(), expect.len());
        for (key, coeff) in expect {
            assert_eq!(seen.get(&key), Some(&coeff), "monomial {key:?}");
        }
    }

    #[test]
    fn r_product_order_is_immaterial() {
        let q = s(2, 3);
        for (case, qq) in [
            (Case::Rational, None),
            (Case::Trigonometric, Some(&q)),
        ] {
            for (n, parts, blocks) in [
                (
                    4usize,
                    vec![1usize, 1, 1],
                    vec![vec![s(1, 2)], vec![s(8, 3)], vec![s(-7, 4)]],
                ),
                (
                    3,
                    vec![2, 1],
                    vec![vec![s(1, 5), s(4, 3)], vec![s(9, 7)]],
                ),
            ] {
                let xi = Composition::new(parts);
                let t = VarCollection::new(blocks);
                let lex = aux_word(case, qq, n, &xi, &t, false).unwrap();
                let rev = aux_word(case, qq, n, &xi, &t, true).unwrap();
                assert_eq!(lex, rev, "{case} aux word");
                let specs: Vec<ModuleSpec> = vec![ModuleSpec {
                    n,
                    realization: Realization::Vector,
                    x: s(1, 9),
                    weight: None,
                }];
                let asm = Assembly::build(case, qq, &specs).unwrap();
                let a = hat_weight_trace(case, qq, &asm.node(), &xi, &t).unwrap();
                let b = hat_weight_trace_reversed(case, qq, &asm.node(), &xi, &t).unwrap();
                assert_eq!(a.entries, b.entries, "{case} operator");
            }
        }
    }

    #[test]
    fn monodromy_chain_flips_across_the_r_product() {
        // T1(u1) T2(u2) Rprod = Rprod T2(u2) T1(u1) on aux (x) aux (x) carrier,
        // and its three-leg analogue.
        use crate::tensor::{r_matrix, Space};
        let q = s(3, 2);
        for (case, qq) in [
            (Case::Rational, None),
            (Case::Trigonometric, Some(&q)),
        ] {
            let n = 2usize;
            let asm = match case {
                Case::Rational => vector_asm(n, &[s(1, 3)]),
                Case::Trigonometric => trig_vector_asm(n, &[s(1, 3)], &q),
            };
            for us in [
                vec![s(5, 4), s(-2, 7)],
                vec![s(5, 4), s(-2, 7), s(11, 6)],
            ] {
                let legs_aux = us.len();
                let aux = Space::aux(n);
                let mut spaces = vec![aux.clone(); legs_aux];
                spaces.extend(asm.spaces());
                let carrier_legs: Vec<usize> =
                    (legs_aux + 1..=legs_aux + asm.factors.len()).collect();
                // Embedded T-factors.
                let mut ts = Vec::new();
                for (leg, u) in us.iter().enumerate() {
                    let grid = match case {
                        Case::Rational => asm.node().t_grid(u).unwrap(),
                        Case::Trigonometric => asm.node().l_grid(LSign::Minus, u).unwrap(),
                    };
                    let mut op = LinearOperator::zero(spaces.clone(), spaces.clone());
                    for a in 1..=n {
                        for b in 1..=n {
                            let unit = LinearOperator::matrix_unit(n, a, b).unwrap();
                            let ue =
                                LinearOperator::embed_leg(&unit, &[leg + 1], &spaces).unwrap();
                            let te = LinearOperator::embed_leg(
                                &grid[a - 1][b - 1],
                                &carrier_legs,
                                &spaces,
                            )
                            .unwrap();
                            op = op.add(&ue.compose(&te).unwrap()).unwrap();
                        }
                    }
                    ts.push(op);
                }
                // The lexicographic R-product on the auxiliary legs.
                let mut rprod = LinearOperator::identity(spaces.clone());
                for lo in 0..legs_aux {
                    for hi in lo + 1..legs_aux {
                        let arg = match case {
                            Case::Rational => &us[hi] - &us[lo],
                            Case::Trigonometric => us[hi].div(&us[lo]).unwrap(),
                        };
                        let r = r_matrix(case, n, &arg, qq).unwrap();
                        let re =
                            LinearOperator::embed_leg(&r, &[hi + 1, lo + 1], &spaces).unwrap();
                        rprod = rprod.compose(&re).unwrap();
                    }
                }
                let mut lhs = ts[0].clone();
                for op in &ts[1..] {
                    lhs = lhs.compose(op).unwrap();
                }
                lhs = lhs.compose(&rprod).unwrap();
                let mut rhs = rprod;
                for op in ts.iter().rev() {
                    rhs = rhs.compose(op).unwrap();
                }
                assert_eq!(lhs.entries, rhs.entries, "{case} chain of {legs_aux}");
            }
        }
    }

    #[test]
    fn normalized_function_is_block_symmetric() {
        let asm = vector_asm(3, &[s(1, 6)]);
        let xi = Composition::new(vec![2, 1]);
        let t = VarCollection::new(vec![vec![s(2, 1), s(7, 3)], vec![s(-4, 5)]]);
        let swapped = VarCollection::new(vec![vec![s(7, 3), s(2, 1)], vec![s(-4, 5)]]);
        let v = asm.joint_singular();
        let a = weight_trace_apply(Case::Rational, None, &asm.node(), &xi, &t, &[v.clone()])
            .unwrap();
        let b = weight_trace_apply(Case::Rational, None, &asm.node(), &xi, &swapped, &[v])
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn singular_image_lands_in_the_expected_weight_space() {
        let spec = ModuleSpec {
            n: 3,
            realization: Realization::WedgePower { k: 2 },
            x: s(1, 4),
            weight: None,
        };
        let asm = Assembly::build(Case::Rational, None, &[spec]).unwrap();
        let xi = Composition::new(vec![1, 1]);
        let t = VarCollection::new(vec![vec![s(5, 1)], vec![s(8, 3)]]);
        let res = apply_to_singular(&asm, &xi, &t, "trace").unwrap();
        assert_eq!(res.weight, vec![0, 1, 1]);
        assert!(res.coordinates.iter().any(|c| !c.is_zero()));
    }

    #[test]
    fn pole_preflight_names_the_failing_factor() {
        let asm = vector_asm(3, &[s(1, 3)]);
        let xi = Composition::new(vec![1, 1]);
        // Cross-block collision t^2_1 = t^1_1.
        let t = VarCollection::new(vec![vec![s(2, 1)], vec![s(2, 1)]]);
        let err = weight_trace(Case::Rational, None, &asm.node(), &xi, &t).unwrap_err();
        match err {
            TraceError::Pole { factor } => assert_eq!(factor, "t^2_1 - t^1_1"),
            other => panic!("unexpected error {other:?}"),
        }
        // Variable hitting the evaluation point.
        let t = VarCollection::new(vec![vec![s(1, 3)], vec![s(2, 1)]]);
        let err = weight_trace(Case::Rational, None, &asm.node(), &xi, &t).unwrap_err();
        assert!(matches!(err, TraceError::Pole { .. }));
    }

    #[test]
    fn component_recursions_match_the_trace() {
        // Rank 2, one and two variables.
        let asm2 = vector_asm(2, &[s(1, 3)]);
        for parts in [vec![1usize], vec![2]] {
            let xi = Composition::new(parts.clone());
            let blocks: Vec<Vec<Scalar>> = vec![(0..parts[0])
                .map(|i| s(3 + 2 * i as i64, 2))
                .collect()];
            let t = VarCollection::new(blocks);
            let oracle = weight_trace_apply(
                Case::Rational,
                None,
                &asm2.node(),
                &xi,
                &t,
                &[asm2.joint_singular()],
            )
            .unwrap()
            .pop()
            .unwrap();
            for dir in [Direction::First, Direction::Last] {
                let got = component_recursion(&asm2, &xi, &t, dir).unwrap();
                assert_eq!(got, oracle, "{parts:?} {dir:?}");
            }
        }
        // Rank 3 on a two-factor assembly, all small shapes.
        let asm3 = vector_asm(3, &[s(1, 3), s(-2, 5)]);
        for parts in [vec![1usize, 1], vec![2, 1], vec![1, 2]] {
            let xi = Composition::new(parts.clone());
            let mut counter = 0i64;
            let blocks: Vec<Vec<Scalar>> = parts
                .iter()
                .map(|&p| {
                    (0..p)
                        .map(|_| {
                            counter += 1;
                            s(2 * counter + 1, 3)
                        })
                        .collect()
                })
                .collect();
            let t = VarCollection::new(blocks);
            let oracle = weight_trace_apply(
                Case::Rational,
                None,
                &asm3.node(),
                &xi,
                &t,
                &[asm3.joint_singular()],
            )
            .unwrap()
            .pop()
            .unwrap();
            for dir in [Direction::First, Direction::Last] {
                let got = component_recursion(&asm3, &xi, &t, dir).unwrap();
                assert_eq!(got, oracle, "{parts:?} {dir:?}");
            }
        }
    }

    #[test]
    fn last_component_points_come_from_the_last_block() {
        // Peeling the last block reproduces the trace; peeling the first
        // block instead makes the dressed evaluation points collide with the
        // remaining variables, so that reading is never even well-posed.
        let asm = vector_asm(3, &[s(1, 3)]);
        let xi = Composition::new(vec![1, 1]);
        let t = VarCollection::new(vec![vec![s(4, 1)], vec![s(9, 2)]]);
        let v = asm.joint_singular();
        let oracle = weight_trace_apply(Case::Rational, None, &asm.node(), &xi, &t, &[v.clone()])
            .unwrap()
            .pop()
            .unwrap();
        let with_last = component_last(&asm, &xi, &t, &[s(9, 2)], &v).unwrap();
        assert_eq!(with_last, oracle);
        let with_first = component_last(&asm, &xi, &t, &[s(4, 1)], &v);
        assert!(matches!(with_first, Err(TraceError::Pole { .. })));
    }

    #[test]
    fn trigonometric_singular_image_matches_rank_two_by_hand() {
        // For xi = (1) on the rank-2 vector module, B v1 = (q - 1/q) (x/t) ... :
        // L^-_12(t) v1 with the normalization (empty products) applied.
        let q = s(2, 1);
        let asm = trig_vector_asm(2, &[s(1, 2)], &q);
        let xi = Composition::new(vec![1]);
        let tvar = s(5, 3);
        let t = VarCollection::new(vec![vec![tvar.clone()]]);
        let res = apply_to_singular(&asm, &xi, &t, "trace").unwrap();
        // L^-_12(u) v1 = (q - 1/q) khat_1 ehat_21 v1 = (q - 1/q) v2.
        let expect = &q - &q.inv().unwrap();
        assert_eq!(res.coordinates, vec![Scalar::zero(), expect]);
    }

    #[test]
    fn module_views_reuse_the_base_module() {
        let m = build_module(
            &ModuleSpec {
                n: 3,
                realization: Realization::Vector,
                x: s(1, 2),
                weight: None,
            },
            Case::Rational,
            None,
        )
        .unwrap();
        let node = RepNode::Module(Arc::new(m));
        assert_eq!(eval_points(&node), vec![s(1, 2)]);
        let dressed = aux_map_carrier(Pullback::ShiftUp, &[s(2, 1), s(3, 1)], node);
        assert_eq!(dressed.rank(), 2);
        assert_eq!(dressed.dim(), 2 * 2 * 3);
        assert_eq!(eval_points(&dressed), vec![s(2, 1), s(3, 1), s(1, 2)]);
    }
}
