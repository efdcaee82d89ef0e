//! Dense exact multilinear algebra on ordered tensor legs.
//!
//! A [`LinearOperator`] is a map between tensor products of finite-dimensional
//! spaces, stored as a dense row-major grid of [`Scalar`]s.  Domain and
//! codomain are explicit ordered lists of [`Space`]s ("legs"); all leg
//! positions in the API are 1-based, matching the conventions used in the
//! formulas and in the JSON formats.
//!
//! Besides the generic operations (composition, addition, Kronecker products,
//! embedding an operator into chosen legs of a larger product, partial
//! traces), this module provides the two R-matrices the whole crate is built
//! on, acting on `C^n (x) C^n`:
//!
//! * rational: `R(u) = u * Id + P`, with `P` the flip; it satisfies the
//!   Yang-Baxter equation with additive arguments and the inversion relation
//!   `R(u) R^(21)(-u) = (1 - u^2) Id`;
//! * trigonometric: `R_q(u)` with entries `(u q - q^-1)` on the diagonal
//!   pairs, `(u - 1)` on mixed diagonal pairs and `(q - q^-1)`-weighted
//!   off-diagonal hops; it satisfies the Yang-Baxter equation with ratio
//!   arguments and `R_q(u) R_q^(21)(1/u) = (u q - q^-1)(q/u - q^-1) Id`.
//!
//! The checked variants `Rv(u) = P R(u)` (braided form) and their normalised
//! versions, used by the symmetrization machinery, are also built here.

use crate::scalar::{Scalar, ScalarError};
use serde::{Deserialize, Serialize};

/// Errors from shape-checked tensor operations.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TensorError {
    #[error("space dimension must be at least 1")]
    EmptySpace,
    #[error("index ({row}, {col}) out of range for a {n} x {n} matrix unit")]
    UnitOutOfRange { n: usize, row: usize, col: usize },
    #[error("shape mismatch: cannot compose codomain {lhs:?} with domain {rhs:?}")]
    ComposeMismatch { lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },
    #[error("leg position {position} out of range 1..={arity}")]
    LegOutOfRange { position: usize, arity: usize },
    #[error("leg position {position} used twice in an embedding")]
    RepeatedLeg { position: usize },
    #[error("traced leg {position} is not square (codomain {codomain}, domain {domain})")]
    NonSquareTrace {
        position: usize,
        codomain: usize,
        domain: usize,
    },
    #[error("the {case} R-matrix requires q, but none was supplied")]
    MissingQ { case: String },
    #[error("degenerate deformation parameter q = {q}: q must avoid 0, 1, -1")]
    DegenerateQ { q: String },
    #[error("normalisation pole: {factor} vanishes")]
    NormalisationPole { factor: String },
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

/// Which R-matrix family an operation refers to.
///
/// This enum is re-exported as [`crate::Case`] and used crate-wide: the
/// rational case underlies the Yangian, the trigonometric case the quantum
/// loop algebra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RCase {
    Rational,
    Trigonometric,
}

impl std::fmt::Display for RCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RCase::Rational => write!(f, "rational"),
            RCase::Trigonometric => write!(f, "trigonometric"),
        }
    }
}

/// A tensor leg: a finite-dimensional space with a cosmetic label.
///
/// Labels (such as `"aux:C^3"` or `"module:V1"`) travel through operations for
/// readable diagnostics; shape checks compare dimensions only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Space {
    pub dimension: usize,
    pub label: String,
}

impl Space {
    pub fn new(dimension: usize, label: impl Into<String>) -> Result<Self, TensorError> {
        if dimension == 0 {
            return Err(TensorError::EmptySpace);
        }
        Ok(Space {
            dimension,
            label: label.into(),
        })
    }

    /// The auxiliary space `C^n`.
    pub fn aux(n: usize) -> Self {
        Space {
            dimension: n,
            label: format!("aux:C^{n}"),
        }
    }
}

fn product_dim(spaces: &[Space]) -> usize {
    spaces.iter().map(|s| s.dimension).product()
}

fn dims(spaces: &[Space]) -> Vec<usize> {
    spaces.iter().map(|s| s.dimension).collect()
}

/// Splits a flat row-major index into per-leg indices (0-based).
fn unflatten(mut index: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for (slot, &d) in dims.iter().enumerate().rev() {
        out[slot] = index % d;
        index /= d;
    }
    out
}

/// Flattens per-leg indices (0-based) into a row-major index.
fn flatten(indices: &[usize], dims: &[usize]) -> usize {
    let mut out = 0;
    for (&i, &d) in indices.iter().zip(dims) {
        out = out * d + i;
    }
    out
}

/// A dense exact linear map between ordered tensor products.
///
/// Entries are stored row-major: `entries[row * dim(domain) + col]`, where
/// `row` enumerates the codomain product basis and `col` the domain product
/// basis, both in row-major leg order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearOperator {
    pub domain: Vec<Space>,
    pub codomain: Vec<Space>,
    pub entries: Vec<Scalar>,
}

impl LinearOperator {
    /// The zero map with the given leg structure.
    pub fn zero(codomain: Vec<Space>, domain: Vec<Space>) -> Self {
        let entries = vec![Scalar::zero(); product_dim(&codomain) * product_dim(&domain)];
        LinearOperator {
            domain,
            codomain,
            entries,
        }
    }

    /// The identity map on the given legs.
    pub fn identity(spaces: Vec<Space>) -> Self {
        let mut op = LinearOperator::zero(spaces.clone(), spaces);
        let n = product_dim(&op.domain);
        for i in 0..n {
            op.entries[i * n + i] = Scalar::one();
        }
        op
    }

    /// The `n x n` matrix unit `E_{ab}` (1-based): `E_{ab} v_c = delta_{bc} v_a`.
    pub fn matrix_unit(n: usize, a: usize, b: usize) -> Result<Self, TensorError> {
        if a == 0 || b == 0 || a > n || b > n {
            return Err(TensorError::UnitOutOfRange { n, row: a, col: b });
        }
        let space = Space::aux(n);
        let mut op = LinearOperator::zero(vec![space.clone()], vec![space]);
        op.entries[(a - 1) * n + (b - 1)] = Scalar::one();
        Ok(op)
    }

    pub fn domain_dim(&self) -> usize {
        product_dim(&self.domain)
    }

    pub fn codomain_dim(&self) -> usize {
        product_dim(&self.codomain)
    }

    pub fn is_square(&self) -> bool {
        dims(&self.domain) == dims(&self.codomain)
    }

    pub fn entry(&self, row: usize, col: usize) -> &Scalar {
        &self.entries[row * self.domain_dim() + col]
    }

    pub fn entry_mut(&mut self, row: usize, col: usize) -> &mut Scalar {
        let cols = self.domain_dim();
        &mut self.entries[row * cols + col]
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Scalar::is_zero)
    }

    /// Composition `self . rhs` (apply `rhs` first).  Defined only when the
    /// inner shapes match leg by leg.
    pub fn compose(&self, rhs: &LinearOperator) -> Result<LinearOperator, TensorError> {
        if dims(&self.domain) != dims(&rhs.codomain) {
            return Err(TensorError::ComposeMismatch {
                lhs: dims(&self.domain),
                rhs: dims(&rhs.codomain),
            });
        }
        let rows = self.codomain_dim();
        let inner = self.domain_dim();
        let cols = rhs.domain_dim();
        let mut out = LinearOperator::zero(self.codomain.clone(), rhs.domain.clone());
        for i in 0..rows {
            for k in 0..inner {
                let a = self.entry(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..cols {
                    let b = rhs.entry(k, j);
                    if b.is_zero() {
                        continue;
                    }
                    *out.entry_mut(i, j) += &(a * b);
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, rhs: &LinearOperator) -> Result<LinearOperator, TensorError> {
        if dims(&self.domain) != dims(&rhs.domain) || dims(&self.codomain) != dims(&rhs.codomain) {
            return Err(TensorError::ShapeMismatch {
                context: format!(
                    "add: ({:?} -> {:?}) vs ({:?} -> {:?})",
                    dims(&self.domain),
                    dims(&self.codomain),
                    dims(&rhs.domain),
                    dims(&rhs.codomain)
                ),
            });
        }
        let mut out = self.clone();
        for (e, r) in out.entries.iter_mut().zip(&rhs.entries) {
            *e += r;
        }
        Ok(out)
    }

    pub fn sub(&self, rhs: &LinearOperator) -> Result<LinearOperator, TensorError> {
        self.add(&rhs.scale(&-Scalar::one()))
    }

    pub fn scale(&self, factor: &Scalar) -> LinearOperator {
        let mut out = self.clone();
        for e in out.entries.iter_mut() {
            *e *= factor;
        }
        out
    }

    /// Applies the operator to a coordinate vector of the domain.
    pub fn apply(&self, vector: &[Scalar]) -> Result<Vec<Scalar>, TensorError> {
        if vector.len() != self.domain_dim() {
            return Err(TensorError::ShapeMismatch {
                context: format!(
                    "apply: vector length {} vs domain dimension {}",
                    vector.len(),
                    self.domain_dim()
                ),
            });
        }
        let rows = self.codomain_dim();
        let cols = self.domain_dim();
        let mut out = vec![Scalar::zero(); rows];
        for i in 0..rows {
            let mut acc = Scalar::zero();
            for (j, v) in vector.iter().enumerate() {
                if v.is_zero() {
                    continue;
                }
                let e = &self.entries[i * cols + j];
                if !e.is_zero() {
                    acc += &(e * v);
                }
            }
            out[i] = acc;
        }
        Ok(out)
    }

    /// Kronecker product; the leg lists concatenate in the given order.
    pub fn kron(ops: &[&LinearOperator]) -> LinearOperator {
        let mut codomain = Vec::new();
        let mut domain = Vec::new();
        for op in ops {
            codomain.extend(op.codomain.iter().cloned());
            domain.extend(op.domain.iter().cloned());
        }
        let rows = product_dim(&codomain);
        let cols = product_dim(&domain);
        let mut out = LinearOperator::zero(codomain, domain);
        for row in 0..rows {
            // Decompose row/col into per-factor indices.
            for col in 0..cols {
                let mut r = row;
                let mut c = col;
                let mut value = Scalar::one();
                // Walk factors from the right (least significant digits).
                for op in ops.iter().rev() {
                    let rd = op.codomain_dim();
                    let cd = op.domain_dim();
                    let ri = r % rd;
                    let ci = c % cd;
                    r /= rd;
                    c /= cd;
                    value *= op.entry(ri, ci);
                    if value.is_zero() {
                        break;
                    }
                }
                if !value.is_zero() {
                    *out.entry_mut(row, col) = value;
                }
            }
        }
        out
    }

    /// Embeds `op` into chosen legs of a larger tensor product, acting as the
    /// identity elsewhere.
    ///
    /// `positions[k]` (1-based) is the ambient leg on which the k-th leg of
    /// `op` acts; `ambient` lists all legs of the larger product.  Positions
    /// may be given in any order, so `embed_leg(a (x) b, &[2, 1], ..)` realises
    /// the transposed placement `(a (x) b)^(21) = b (x) a`.  Repeated or
    /// out-of-range positions are errors.
    pub fn embed_leg(
        op: &LinearOperator,
        positions: &[usize],
        ambient: &[Space],
    ) -> Result<LinearOperator, TensorError> {
        let arity = ambient.len();
        if positions.len() != op.domain.len() || positions.len() != op.codomain.len() {
            return Err(TensorError::ShapeMismatch {
                context: format!(
                    "embed_leg: {} positions for an operator with {} domain / {} codomain legs",
                    positions.len(),
                    op.domain.len(),
                    op.codomain.len()
                ),
            });
        }
        let mut seen = vec![false; arity];
        for (k, &p) in positions.iter().enumerate() {
            if p == 0 || p > arity {
                return Err(TensorError::LegOutOfRange { position: p, arity });
            }
            if seen[p - 1] {
                return Err(TensorError::RepeatedLeg { position: p });
            }
            seen[p - 1] = true;
            if ambient[p - 1].dimension != op.domain[k].dimension
                || ambient[p - 1].dimension != op.codomain[k].dimension
            {
                return Err(TensorError::ShapeMismatch {
                    context: format!(
                        "embed_leg: operator leg {} ({}-dim) does not fit ambient leg {} ({}-dim)",
                        k + 1,
                        op.domain[k].dimension,
                        p,
                        ambient[p - 1].dimension
                    ),
                });
            }
        }
        let ambient_dims = dims(ambient);
        let op_dims = dims(&op.domain);
        let total = product_dim(ambient);
        let mut out = LinearOperator::zero(ambient.to_vec(), ambient.to_vec());
        // For each operator entry, scatter it over the identity on the free legs.
        let free: Vec<usize> = (0..arity).filter(|i| !seen[*i]).collect();
        let free_dims: Vec<usize> = free.iter().map(|&i| ambient_dims[i]).collect();
        let free_total: usize = free_dims.iter().product::<usize>().max(1);
        let op_rows = op.codomain_dim();
        let op_cols = op.domain_dim();
        for orow in 0..op_rows {
            let oris = unflatten(orow, &dims(&op.codomain));
            for ocol in 0..op_cols {
                let value = op.entry(orow, ocol);
                if value.is_zero() {
                    continue;
                }
                let ocis = unflatten(ocol, &op_dims);
                for f in 0..free_total {
                    let fis = unflatten(f, &free_dims);
                    let mut row_idx = vec![0usize; arity];
                    let mut col_idx = vec![0usize; arity];
                    for (k, &p) in positions.iter().enumerate() {
                        row_idx[p - 1] = oris[k];
                        col_idx[p - 1] = ocis[k];
                    }
                    for (slot, &leg) in free.iter().enumerate() {
                        row_idx[leg] = fis[slot];
                        col_idx[leg] = fis[slot];
                    }
                    let r = flatten(&row_idx, &ambient_dims);
                    let c = flatten(&col_idx, &ambient_dims);
                    out.entries[r * total + c] = value.clone();
                }
            }
        }
        Ok(out)
    }

    /// Partial trace over the given legs (1-based).  Requires the same number
    /// of domain and codomain legs; every traced leg must be square.
    pub fn partial_trace(&self, traced: &[usize]) -> Result<LinearOperator, TensorError> {
        if self.domain.len() != self.codomain.len() {
            return Err(TensorError::ShapeMismatch {
                context: format!(
                    "partial_trace: {} codomain legs vs {} domain legs",
                    self.codomain.len(),
                    self.domain.len()
                ),
            });
        }
        let arity = self.domain.len();
        let mut is_traced = vec![false; arity];
        for &p in traced {
            if p == 0 || p > arity {
                return Err(TensorError::LegOutOfRange { position: p, arity });
            }
            if is_traced[p - 1] {
                return Err(TensorError::RepeatedLeg { position: p });
            }
            if self.domain[p - 1].dimension != self.codomain[p - 1].dimension {
                return Err(TensorError::NonSquareTrace {
                    position: p,
                    codomain: self.codomain[p - 1].dimension,
                    domain: self.domain[p - 1].dimension,
                });
            }
            is_traced[p - 1] = true;
        }
        let kept: Vec<usize> = (0..arity).filter(|i| !is_traced[*i]).collect();
        let kept_cod: Vec<Space> = kept.iter().map(|&i| self.codomain[i].clone()).collect();
        let kept_dom: Vec<Space> = kept.iter().map(|&i| self.domain[i].clone()).collect();
        let cod_dims = dims(&self.codomain);
        let dom_dims = dims(&self.domain);
        let traced_legs: Vec<usize> = (0..arity).filter(|i| is_traced[*i]).collect();
        let traced_dims: Vec<usize> = traced_legs.iter().map(|&i| cod_dims[i]).collect();
        let traced_total: usize = traced_dims.iter().product::<usize>().max(1);
        let mut out = LinearOperator::zero(kept_cod, kept_dom);
        let out_rows = out.codomain_dim();
        let out_cols = out.domain_dim();
        let kept_cod_dims: Vec<usize> = kept.iter().map(|&i| cod_dims[i]).collect();
        let kept_dom_dims: Vec<usize> = kept.iter().map(|&i| dom_dims[i]).collect();
        for orow in 0..out_rows {
            let kris = unflatten(orow, &kept_cod_dims);
            for ocol in 0..out_cols {
                let kcis = unflatten(ocol, &kept_dom_dims);
                let mut acc = Scalar::zero();
                for tr in 0..traced_total {
                    let tis = unflatten(tr, &traced_dims);
                    let mut row_idx = vec![0usize; arity];
                    let mut col_idx = vec![0usize; arity];
                    for (slot, &leg) in kept.iter().enumerate() {
                        row_idx[leg] = kris[slot];
                        col_idx[leg] = kcis[slot];
                    }
                    for (slot, &leg) in traced_legs.iter().enumerate() {
                        row_idx[leg] = tis[slot];
                        col_idx[leg] = tis[slot];
                    }
                    let r = flatten(&row_idx, &cod_dims);
                    let c = flatten(&col_idx, &dom_dims);
                    acc += self.entry(r, c);
                }
                *out.entry_mut(orow, ocol) = acc;
            }
        }
        Ok(out)
    }
}

/// Rejects the degenerate deformation parameters `q = 0, 1, -1`.
pub fn check_q(q: &Scalar) -> Result<(), TensorError> {
    if q.is_zero() || q == &Scalar::one() || q == &(-Scalar::one()) {
        return Err(TensorError::DegenerateQ { q: q.to_string() });
    }
    Ok(())
}

/// The flip `P(v (x) w) = w (x) v` on `C^n (x) C^n`.
pub fn flip(n: usize) -> LinearOperator {
    let aux = Space::aux(n);
    let legs = vec![aux.clone(), aux];
    let mut op = LinearOperator::zero(legs.clone(), legs);
    for a in 0..n {
        for b in 0..n {
            *op.entry_mut(b * n + a, a * n + b) = Scalar::one();
        }
    }
    op
}

/// The R-matrix on `C^n (x) C^n` for the chosen case.
///
/// Rational: `R(u) = u * Id + P`.  For `n = 2`, `R(0) = P` and on the span of
/// `v_1 (x) v_2, v_2 (x) v_1` it acts as the block `[[u, 1], [1, u]]`, with
/// `u + 1` on the symmetric diagonal states.
///
/// Trigonometric (requires `q` outside `{0, 1, -1}`):
/// `R_q(u) = (u q - 1/q) Sum_a E_aa (x) E_aa
///          + (u - 1) Sum_{a<b} (E_aa (x) E_bb + E_bb (x) E_aa)
///          + (q - 1/q) Sum_{a<b} (u E_ab (x) E_ba + E_ba (x) E_ab)`.
pub fn r_matrix(
    case: RCase,
    n: usize,
    u: &Scalar,
    q: Option<&Scalar>,
) -> Result<LinearOperator, TensorError> {
    match case {
        RCase::Rational => {
            let aux = Space::aux(n);
            let legs = vec![aux.clone(), aux];
            let mut op = LinearOperator::identity(legs).scale(u);
            let p = flip(n);
            for (e, pe) in op.entries.iter_mut().zip(&p.entries) {
                *e += pe;
            }
            Ok(op)
        }
        RCase::Trigonometric => {
            let q = q.ok_or_else(|| TensorError::MissingQ {
                case: "trigonometric".into(),
            })?;
            check_q(q)?;
            let q_inv = q.inv()?;
            let aux = Space::aux(n);
            let legs = vec![aux.clone(), aux];
            let mut op = LinearOperator::zero(legs.clone(), legs);
            let uq_m_qinv = &(u * q) - &q_inv;
            let u_m_1 = u - &Scalar::one();
            let q_m_qinv = &(q - &q_inv);
            for a in 0..n {
                for b in 0..n {
                    let row_diag = (a * n + b) * (n * n) + (a * n + b);
                    if a == b {
                        op.entries[row_diag] = uq_m_qinv.clone();
                    } else {
                        op.entries[row_diag] = u_m_1.clone();
                        // Hop (b, a) -> (a, b) in leg states: see below.
                    }
                }
            }
            for a in 0..n {
                for b in 0..n {
                    if a < b {
                        // u (q - 1/q) E_ab (x) E_ba : state (b, a) -> (a, b).
                        let row = a * n + b;
                        let col = b * n + a;
                        op.entries[row * n * n + col] = u * q_m_qinv;
                        // (q - 1/q) E_ba (x) E_ab : state (a, b) -> (b, a).
                        op.entries[col * n * n + row] = q_m_qinv.clone();
                    }
                }
            }
            Ok(op)
        }
    }
}

/// The braided R-matrix `Rv(u) = P R(u)` and, when `normalised` is set, its
/// unitary form.
///
/// Rational normalised: `Rv(u) / (u + 1)`, with `Rv(u) Rv(-u) = Id`; the
/// point `u = -1` is a pole and is rejected.  Trigonometric normalised:
/// `P R_q(u) / (u q - 1/q)`, with `Rv(u) Rv(1/u) = Id`; `u = q^{-2}` is
/// rejected.
pub fn r_check(
    case: RCase,
    n: usize,
    u: &Scalar,
    q: Option<&Scalar>,
    normalised: bool,
) -> Result<LinearOperator, TensorError> {
    let r = r_matrix(case, n, u, q)?;
    let braided = flip(n).compose(&r)?;
    if !normalised {
        return Ok(braided);
    }
    let denom = match case {
        RCase::Rational => u + &Scalar::one(),
        RCase::Trigonometric => {
            let q = q.expect("r_matrix already required q");
            &(u * q) - &q.inv()?
        }
    };
    if denom.is_zero() {
        let factor = match case {
            RCase::Rational => format!("u + 1 at u = {u}"),
            RCase::Trigonometric => format!("u q - 1/q at u = {u}"),
        };
        return Err(TensorError::NormalisationPole { factor });
    }
    Ok(braided.scale(&denom.inv()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Scalar;

    fn s(n: i64, d: i64) -> Scalar {
        Scalar::new(n, d).unwrap()
    }

    fn e(n: usize, a: usize, b: usize) -> LinearOperator {
        LinearOperator::matrix_unit(n, a, b).unwrap()
    }

    #[test]
    fn matrix_units_multiply_like_e_ab() {
        // E_ab E_cd = delta_bc E_ad.
        let n = 3;
        for a in 1..=n {
            for b in 1..=n {
                for c in 1..=n {
                    for d in 1..=n {
                        let prod = e(n, a, b).compose(&e(n, c, d)).unwrap();
                        let expect = if b == c {
                            e(n, a, d)
                        } else {
                            LinearOperator::zero(
                                vec![Space::aux(n)],
                                vec![Space::aux(n)],
                            )
                        };
                        assert_eq!(prod.entries, expect.entries, "E_{a}{b} E_{c}{d}");
                    }
                }
            }
        }
    }

    #[test]
    fn matrix_unit_index_errors() {
        assert!(LinearOperator::matrix_unit(2, 0, 1).is_err());
        assert!(LinearOperator::matrix_unit(2, 3, 1).is_err());
    }

    #[test]
    fn kron_concatenates_legs_and_multiplies_entries() {
        let a = e(2, 1, 2);
        let b = e(3, 3, 1);
        let k = LinearOperator::kron(&[&a, &b]);
        assert_eq!(k.domain.len(), 2);
        assert_eq!(k.codomain_dim(), 6);
        // (v_2 (x) v_1) must map to (v_1 (x) v_3).
        let mut v = vec![Scalar::zero(); 6];
        v[1 * 3 + 0] = Scalar::one();
        let out = k.apply(&v).unwrap();
        for (i, c) in out.iter().enumerate() {
            let expect = if i == 0 * 3 + 2 { Scalar::one() } else { Scalar::zero() };
            assert_eq!(c, &expect, "slot {i}");
        }
    }

    #[test]
    fn embed_leg_places_factors_and_transposes() {
        let n = 2;
        let ab = LinearOperator::kron(&[&e(n, 1, 2), &e(n, 2, 1)]);
        let ambient = vec![Space::aux(n), Space::aux(n)];
        let direct = LinearOperator::embed_leg(&ab, &[1, 2], &ambient).unwrap();
        let swapped = LinearOperator::embed_leg(&ab, &[2, 1], &ambient).unwrap();
        let ba = LinearOperator::kron(&[&e(n, 2, 1), &e(n, 1, 2)]);
        assert_eq!(direct.entries, ab.entries);
        assert_eq!(swapped.entries, ba.entries);
    }

    #[test]
    fn embed_leg_rejects_bad_positions() {
        let n = 2;
        let ab = LinearOperator::kron(&[&e(n, 1, 2), &e(n, 2, 1)]);
        let ambient = vec![Space::aux(n), Space::aux(n), Space::aux(n)];
        assert!(matches!(
            LinearOperator::embed_leg(&ab, &[1, 4], &ambient),
            Err(TensorError::LegOutOfRange { .. })
        ));
        assert!(matches!(
            LinearOperator::embed_leg(&ab, &[2, 2], &ambient),
            Err(TensorError::RepeatedLeg { .. })
        ));
    }

    #[test]
    fn partial_trace_of_a_kron_factors_through() {
        // tr_1 (A (x) B) = tr(A) B.
        let a = e(2, 1, 1);
        let b = e(3, 2, 3);
        let k = LinearOperator::kron(&[&a, &b]);
        let t = k.partial_trace(&[1]).unwrap();
        assert_eq!(t.entries, b.entries);
        // Full trace of the flip on C^n (x) C^n is n.
        let p = flip(3);
        let full = p.partial_trace(&[1, 2]).unwrap();
        assert_eq!(full.entries, vec![Scalar::from_int(3)]);
    }

    #[test]
    fn partial_trace_rejects_non_square_legs() {
        let rect = LinearOperator::zero(vec![Space::aux(2)], vec![Space::aux(3)]);
        assert!(rect.partial_trace(&[1]).is_err());
    }

    #[test]
    fn rational_r_at_zero_is_the_flip_and_block_acts_as_stated() {
        let r0 = r_matrix(RCase::Rational, 2, &Scalar::zero(), None).unwrap();
        assert_eq!(r0.entries, flip(2).entries);
        let u = s(5, 3);
        let r = r_matrix(RCase::Rational, 2, &u, None).unwrap();
        //

        // Basis order: (1,1), (1,2), (2,1), (2,2).
        assert_eq!(r.entry(0, 0), &(&u + &Scalar::one()));
        assert_eq!(r.entry(3, 3), &(&u + &Scalar::one()));
        assert_eq!(r.entry(1, 1), &u);
        assert_eq!(r.entry(1, 2), &Scalar::one());
        assert_eq!(r.entry(2, 1), &Scalar::one());
        assert_eq!(r.entry(2, 2), &u);
    }

    #[test]
    fn rational_inversion_relation() {
        // R(u) R^(21)(-u) = (1 - u^2) Id.
        for n in 2..=4usize {
            let u = s(3, 7);
            let r = r_matrix(RCase::Rational, n, &u, None).unwrap();
            let r21 = {
                let m = r_matrix(RCase::Rational, n, &(-&u), None).unwrap();
                let p = flip(n);
                p.compose(&m).unwrap().compose(&p).unwrap()
            };
            let prod = r.compose(&r21).unwrap();
            let scalar = &Scalar::one() - &(&u * &u);
            let expect =
                LinearOperator::identity(vec![Space::aux(n), Space::aux(n)]).scale(&scalar);
            assert_eq!(prod.entries, expect.entries, "n = {n}");
        }
    }

    #[test]
    fn trigonometric_inversion_relation() {
        // R_q(u) R_q^(21)(1/u) = (u q - 1/q)(q/u - 1/q) Id.
        let q = s(2, 3);
        for n in 2..=3usize {
            let u = s(5, 2);
            let r = r_matrix(RCase::Trigonometric, n, &u, Some(&q)).unwrap();
            let u_inv = u.inv().unwrap();
            let r21 = {
                let m = r_matrix(RCase::Trigonometric, n, &u_inv, Some(&q)).unwrap();
                let p = flip(n);
                p.compose(&m).unwrap().compose(&p).unwrap()
            };
            let prod = r.compose(&r21).unwrap();
            let q_inv = q.inv().unwrap();
            let scalar = (&(&u * &q) - &q_inv) * (&(&u_inv * &q) - &q_inv);
            let expect =
                LinearOperator::identity(vec![Space::aux(n), Space::aux(n)]).scale(&scalar);
            assert_eq!(prod.entries, expect.entries, "n = {n}");
        }
    }

    #[test]
    fn trigonometric_r_requires_a_valid_q() {
        assert!(matches!(
            r_matrix(RCase::Trigonometric, 2, &s(1, 2), None),
            Err(TensorError::MissingQ { .. })
        ));
        for bad in [Scalar::zero(), Scalar::one(), -Scalar::one()] {
            assert!(matches!(
                r_matrix(RCase::Trigonometric, 2, &s(1, 2), Some(&bad)),
                Err(TensorError::DegenerateQ { .. })
            ));
        }
    }

    #[test]
    fn braided_r_eigenvalue_on_the_lowering_pair() {
        // Rv(u) (E_{a+1,a} (x) E_{a+1,a}) = (u + 1) (E_{a+1,a} (x) E_{a+1,a}).
        let n = 3;
        let u = s(4, 5);
        for a in 1..n {
            let word = LinearOperator::kron(&[&e(n, a + 1, a), &e(n, a + 1, a)]);
            let rv = r_check(RCase::Rational, n, &u, None, false).unwrap();
            let lhs = rv.compose(&word).unwrap();
            let rhs = word.scale(&(&u + &Scalar::one()));
            assert_eq!(lhs.entries, rhs.entries, "a = {a}");
        }
    }

    #[test]
    fn normalised_braided_r_is_unitary_and_rejects_its_pole() {
        let n = 3;
        let u = s(2, 9);
        let rv = r_check(RCase::Rational, n, &u, None, true).unwrap();
        let rv_back = r_check(RCase::Rational, n, &(-&u), None, true).unwrap();
        let prod = rv.compose(&rv_back).unwrap();
        let id = LinearOperator::identity(vec![Space::aux(n), Space::aux(n)]);
        assert_eq!(prod.entries, id.entries);
        assert!(matches!(
            r_check(RCase::Rational, n, &s(-1, 1), None, true),
            Err(TensorError::NormalisationPole { .. })
        ));

        let q = s(3, 2);
        let u = s(7, 4);
        let rv = r_check(RCase::Trigonometric, n, &u, Some(&q), true).unwrap();
        let rv_back =
            r_check(RCase::Trigonometric, n, &u.inv().unwrap(), Some(&q), true).unwrap();
        let prod = rv.compose(&rv_back).unwrap();
        assert_eq!(prod.entries, id.entries);
        let pole = q.inv().unwrap().pow(2).unwrap();
        assert!(matches!(
            r_check(RCase::Trigonometric, n, &pole, Some(&q), true),
            Err(TensorError::NormalisationPole { .. })
        ));
    }

    #[test]
    fn r_preserves_two_letter_spans() {
        // R(u) maps span{v_a (x) v_b, v_b (x) v_a} into itself (both cases).
        let n = 4;
        let u = s(3, 5);
        let q = s(2, 1);
        for (case, qq) in [
            (RCase::Rational, None),
            (RCase::Trigonometric, Some(&q)),
        ] {
            let r = r_matrix(case, n, &u, qq).unwrap();
            for a in 0..n {
                for b in 0..n {
                    if a == b {
                        continue;
                    }
                    let mut v = vec![Scalar::zero(); n * n];
                    v[a * n + b] = Scalar::one();
                    let out = r.apply(&v).unwrap();
                    for (idx, c) in out.iter().enumerate() {
                        if idx != a * n + b && idx != b * n + a {
                            assert!(c.is_zero(), "{case} leak at {idx}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn rank_restriction_compatibility() {
        // Embedding w_a -> v_{a+1} of C^(n-1) into C^n intertwines the two
        // R-matrices: entries of R^(n) on the shifted letters equal R^(n-1).
        let u = s(5, 7);
        let q = s(2, 3);
        for (case, qq) in [
            (RCase::Rational, None),
            (RCase::Trigonometric, Some(&q)),
        ] {
            for n in 3..=4usize {
                let big = r_matrix(case, n, &u, qq).unwrap();
                let small = r_matrix(case, n - 1, &u, qq).unwrap();
                let m = n - 1;
                for a in 0..m {
                    for b in 0..m {
                        for c in 0..m {
                            for d in 0..m {
                                let big_entry =
                                    big.entry((a + 1) * n + (b + 1), (c + 1) * n + (d + 1));
                                let small_entry = small.entry(a * m + b, c * m + d);
                                assert_eq!(big_entry, small_entry, "{case} n = {n}");
                            }
                        }
                    }
                }
            }
        }
    }
}
