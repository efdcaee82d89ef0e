//! Highest-weight evaluation modules and monodromy operators.
//!
//! A [`RepModule`] is a finite-dimensional highest-weight module over `gl(n)`
//! (rational case) or over the quantized enveloping algebra of `gl(n)`
//! (trigonometric case), together with an evaluation point `x`.  Built-in
//! realizations — the vector representation, its wedge and symmetric powers,
//! and cyclic spans of tensor words — are constructed inside tensor powers of
//! the vector representation: the singular (highest-weight) vector is found
//! by exact row reduction, and the carrier is the span of lowering words
//! applied to it.
//!
//! Monodromy operators act through the evaluation homomorphisms:
//!
//! * rational: `T_ab(u) = delta_ab + e_ba / (u - x)`;
//! * trigonometric: `L^-_aa(u) = khat_a - (x/u) khat_a^{-1}`,
//!   `L^-_ab(u) = (q - 1/q) khat_a ehat_ba` for `a < b`, and
//!   `L^-_ab(u) = (x/u)(q - 1/q) ehat_ba khat_b^{-1}` for `a > b`
//!   (with the analogous `L^+` family),
//!
//! extended to tensor products by the coproduct
//! `T_ab(u) -> sum_c T_cb(u) (x) T_ac(u)` applied left to right.
//!
//! A [`RepNode`] composes modules into assemblies and supports the two
//! rank-reduction pullbacks used by the recursion formulas: the *low-corner*
//! view keeps generator indices `1..rank-1` unchanged, the *high-corner* view
//! shifts them up by one.  Two auxiliary one-column modules are provided for
//! the component recursions: the vector evaluation module on `C^n`
//! (`T_ab(u) = delta_ab + E_ba/(u - x)`) and its dual twist
//! (`T_ab(u) = delta_ab - E_ab/(u - x)`).

use crate::scalar::{Scalar, ScalarError};
use crate::tensor::{check_q, LinearOperator, Space, TensorError};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub use crate::tensor::RCase as Case;

/// Errors from module construction and operator evaluation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RepsError {
    #[error("invalid module: {reason}")]
    InvalidModule { reason: String },
    #[error("pole: {factor} vanishes")]
    Pole { factor: String },
    #[error("case mismatch: operation for the {expected} case applied to a {got} assembly")]
    CaseMismatch { expected: String, got: String },
    #[error("size cap exceeded: {context}")]
    CapExceeded { context: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

/// How a module is realized inside tensor powers of the vector representation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Realization {
    /// `C^n` itself, highest weight `(1, 0, ..., 0)`.
    Vector,
    /// k-th wedge power, highest weight `(1^k, 0, ...)`; requires `k <= n`.
    WedgePower { k: usize },
    /// k-th symmetric power, highest weight `(k, 0, ...)`.
    SymmetricPower { k: usize },
    /// Submodule generated by a tensor word `v_{w_1} (x) ... (x) v_{w_k}`;
    /// the highest weight must be declared in [`ModuleSpec::weight`].
    CyclicSpan { word: Vec<usize> },
}

impl Realization {
    fn describe(&self) -> String {
        match self {
            Realization::Vector => "vector".into(),
            Realization::WedgePower { k } => format!("wedge{k}"),
            Realization::SymmetricPower { k } => format!("sym{k}"),
            Realization::CyclicSpan { word } => format!("cyclic{word:?}"),
        }
    }
}

/// A module request: rank, realization, evaluation point, and (for cyclic
/// spans) the declared highest weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleSpec {
    pub n: usize,
    pub realization: Realization,
    pub x: Scalar,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<Vec<i64>>,
}

/// The `gl(n)` generator grids carried by a built module.
#[derive(Debug, Clone)]
pub enum ActionGrids {
    /// `e[a-1][b-1]` is the generator `e_ab` on the carrier.
    Rational { e: Vec<Vec<LinearOperator>> },
    /// `khat[a-1]`, its inverse, and `ehat[a-1][b-1]` (defined for `a != b`).
    Trigonometric {
        khat: Vec<LinearOperator>,
        khat_inv: Vec<LinearOperator>,
        ehat: Vec<Vec<Option<LinearOperator>>>,
    },
}

/// A built highest-weight evaluation module.
#[derive(Debug, Clone)]
pub struct RepModule {
    pub case: Case,
    pub q: Option<Scalar>,
    pub n: usize,
    pub x: Scalar,
    /// Declared highest weight `Lambda` (length `n`).
    pub weight: Vec<i64>,
    pub dim: usize,
    /// `gl(n)`-content of each carrier basis vector (length `n` each).
    pub weights_by_basis: Vec<Vec<i64>>,
    /// Coordinates of the singular vector in the carrier basis.
    pub singular: Vec<Scalar>,
    pub grids: ActionGrids,
    pub label: String,
}

impl RepModule {
    pub fn space(&self) -> Space {
        Space {
            dimension: self.dim,
            label: format!("module:{}", self.label),
        }
    }

    /// The generator `e_ab` (rational modules only; 1-based).
    pub fn e(&self, a: usize, b: usize) -> Result<&LinearOperator, RepsError> {
        match &self.grids {
            ActionGrids::Rational { e } => {
                check_index(self.n, a)?;
                check_index(self.n, b)?;
                Ok(&e[a - 1][b - 1])
            }
            ActionGrids::Trigonometric { .. } => Err(RepsError::CaseMismatch {
                expected: "rational".into(),
                got: "trigonometric".into(),
            }),
        }
    }

    pub fn khat(&self, a: usize, inverse: bool) -> Result<&LinearOperator, RepsError> {
        match &self.grids {
            ActionGrids::Trigonometric { khat, khat_inv, .. } => {
                check_index(self.n, a)?;
                Ok(if inverse { &khat_inv[a - 1] } else { &khat[a - 1] })
            }
            ActionGrids::Rational { .. } => Err(RepsError::CaseMismatch {
                expected: "trigonometric".into(),
                got: "rational".into(),
            }),
        }
    }

    pub fn ehat(&self, a: usize, b: usize) -> Result<&LinearOperator, RepsError> {
        match &self.grids {
            ActionGrids::Trigonometric { ehat, .. } => {
                check_index(self.n, a)?;
                check_index(self.n, b)?;
                ehat[a - 1][b - 1].as_ref().ok_or(RepsError::InvalidModule {
                    reason: format!("ehat_{a}{b} is not defined on the diagonal"),
                })
            }
            ActionGrids::Rational { .. } => Err(RepsError::CaseMismatch {
                expected: "trigonometric".into(),
                got: "rational".into(),
            }),
        }
    }

    /// The lowering generator `ev_ba = khat_a ehat_ba` (`a < b`) used by the
    /// trigonometric closed forms and recursions.
    pub fn echeck(&self, b: usize, a: usize) -> Result<LinearOperator, RepsError> {
        if a >= b {
            return Err(RepsError::InvalidModule {
                reason: format!("ev_{b}{a} requires row {b} > column {a}"),
            });
        }
        Ok(self.khat(a, false)?.compose(self.ehat(b, a)?)?)
    }
}

fn check_index(n: usize, a: usize) -> Result<(), RepsError> {
    if a == 0 || a > n {
        return Err(RepsError::InvalidModule {
            reason: format!("generator index {a} out of range 1..={n}"),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Big-space scaffolding: tensor powers of the vector representation.
// ---------------------------------------------------------------------------

/// Dense vectors in `(C^n)^(x k)`, with letters 1..=n per leg.
struct BigSpace {
    n: usize,
    k: usize,
    dim: usize,
}

impl BigSpace {
    fn new(n: usize, k: usize) -> Result<Self, RepsError> {
        let mut dim = 1usize;
        for _ in 0..k {
            dim = dim.checked_mul(n).filter(|&d| d <= 4096).ok_or_else(|| {
                RepsError::CapExceeded {
                    context: format!("tensor power {n}^{k} exceeds the construction cap 4096"),
                }
            })?;
        }
        Ok(BigSpace { n, k, dim })
    }

    fn letters(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.k];
        for slot in (0..self.k).rev() {
            out[slot] = index % self.n + 1;
            index /= self.n;
        }
        out
    }

    fn index(&self, letters: &[usize]) -> usize {
        letters.iter().fold(0, |acc, &l| acc * self.n + (l - 1))
    }

    fn content(&self, index: usize) -> Vec<i64> {
        let mut c = vec![0i64; self.n];
        for l in self.letters(index) {
            c[l - 1] += 1;
        }
        c
    }

    /// Classical `e_ab` via the symmetric coproduct (sum over legs).
    fn apply_e(&self, a: usize, b: usize, v: &[Scalar]) -> Vec<Scalar> {
        let mut out = vec![Scalar::zero(); self.dim];
        for (i, c) in v.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let letters = self.letters(i);
            for leg in 0..self.k {
                if letters[leg] == b {
                    if a == b {
                        out[i] += c;
                    } else {
                        let mut moved = letters.clone();
                        moved[leg] = a;
                        out[self.index(&moved)] += c;
                    }
                }
            }
        }
        out
    }

    /// `khat_a^{+-1}` via `Delta(khat) = khat (x) khat`.
    fn apply_khat(&self, a: usize, inverse: bool, q: &Scalar, v: &[Scalar]) -> Vec<Scalar> {
        let mut out = vec![Scalar::zero(); self.dim];
        for (i, c) in v.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let count = self.content(i)[a - 1];
            let exp = if inverse { -count } else { count };
            out[i] = c * &q.pow(exp).expect("q is nonzero");
        }
        out
    }

    /// Simple raising `ehat_{a,a+1}` via
    /// `Delta(x) = 1 (x) x + x (x) khat_a khat_{a+1}^{-1}` iterated.
    fn apply_simple_raise(&self, a: usize, q: &Scalar, v: &[Scalar]) -> Vec<Scalar> {
        let mut out = vec![Scalar::zero(); self.dim];
        for (i, c) in v.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let letters = self.letters(i);
            for leg in 0..self.k {
                if letters[leg] == a + 1 {
                    let mut exp = 0i64;
                    for &l in &letters[leg + 1..] {
                        if l == a {
                            exp += 1;
                        } else if l == a + 1 {
                            exp -= 1;
                        }
                    }
                    let mut moved = letters.clone();
                    moved[leg] = a;
                    out[self.index(&moved)] += &(c * &q.pow(exp).expect("q is nonzero"));
                }
            }
        }
        out
    }

    /// Simple lowering `ehat_{a+1,a}` via
    /// `Delta(y) = y (x) 1 + khat_{a+1} khat_a^{-1} (x) y` iterated.
    fn apply_simple_lower(&self, a: usize, q: &Scalar, v: &[Scalar]) -> Vec<Scalar> {
        let mut out = vec![Scalar::zero(); self.dim];
        for (i, c) in v.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let letters = self.letters(i);
            for leg in 0..self.k {
                if letters[leg] == a {
                    let mut exp = 0i64;
                    for &l in &letters[..leg] {
                        if l == a + 1 {
                            exp += 1;
                        } else if l == a {
                            exp -= 1;
                        }
                    }
                    let mut moved = letters.clone();
                    moved[leg] = a + 1;
                    out[self.index(&moved)] += &(c * &q.pow(exp).expect("q is nonzero"));
                }
            }
        }
        out
    }
}

/// A reduced-row-echelon set of big-space vectors, ordered by pivot index.
struct Echelon {
    vectors: Vec<Vec<Scalar>>,
    pivots: Vec<usize>,
}

impl Echelon {
    fn new() -> Self {
        Echelon {
            vectors: Vec::new(),
            pivots: Vec::new(),
        }
    }

    fn reduce(&self, v: &mut [Scalar]) {
        for (row, &p) in self.vectors.iter().zip(&self.pivots) {
            let c = v[p].clone();
            if c.is_zero() {
                continue;
            }
            for (slot, r) in v.iter_mut().zip(row) {
                if !r.is_zero() {
                    *slot -= &(&c * r);
                }
            }
        }
    }

    /// Inserts a vector if independent; returns whether the rank grew.
    fn insert(&mut self, mut v: Vec<Scalar>) -> bool {
        self.reduce(&mut v);
        let Some(pivot) = v.iter().position(|c| !c.is_zero()) else {
            return false;
        };
        let lead = v[pivot].clone();
        let lead_inv = lead.inv().expect("pivot entry is nonzero");
        for c in v.iter_mut() {
            *c *= &lead_inv;
        }
        // Back-substitute so every other row is zero at the new pivot.
        for row in self.vectors.iter_mut() {
            let c = row[pivot].clone();
            if c.is_zero() {
                continue;
            }
            for (slot, n) in row.iter_mut().zip(&v) {
                if !n.is_zero() {
                    *slot -= &(&c * n);
                }
            }
        }
        let at = self.pivots.partition_point(|&p| p < pivot);
        self.pivots.insert(at, pivot);
        self.vectors.insert(at, v);
        true
    }

    /// Coordinates of `v` in the echelon basis; `None` if outside the span.
    fn express(&self, v: &[Scalar]) -> Option<Vec<Scalar>> {
        let coords: Vec<Scalar> = self.pivots.iter().map(|&p| v[p].clone()).collect();
        let mut residual = v.to_vec();
        for (c, row) in coords.iter().zip(&self.vectors) {
            if c.is_zero() {
                continue;
            }
            for (slot, r) in residual.iter_mut().zip(row) {
                if !r.is_zero() {
                    *slot -= &(c * r);
                }
            }
        }
        residual.iter().all(Scalar::is_zero).then_some(coords)
    }
}

/// Closes `seeds` under the given sparse generators, in a fixed order.
fn span_closure(
    seeds: Vec<Vec<Scalar>>,
    apply: &[&dyn Fn(&[Scalar]) -> Vec<Scalar>],
) -> Echelon {
    let mut ech = Echelon::new();
    let mut frontier: Vec<Vec<Scalar>> = Vec::new();
    for s in seeds {
        if ech.insert(s.clone()) {
            frontier.push(s);
        }
    }
    while let Some(v) = frontier.pop() {
        for f in apply {
            let image = f(&v);
            if ech.insert(image.clone()) {
                frontier.push(image);
            }
        }
    }
    ech
}

/// Builds a module from its spec.  See the module docs for the realization
/// semantics; errors cover invalid shapes, missing or degenerate `q`, zero
/// trigonometric evaluation points, undeclared or unattainable cyclic-span
/// weights, and the construction size cap.
pub fn build_module(
    spec: &ModuleSpec,
    case: Case,
    q: Option<&Scalar>,
) -> Result<RepModule, RepsError> {
    let n = spec.n;
    if n < 2 {
        return Err(RepsError::InvalidModule {
            reason: format!("rank n = {n} must be at least 2"),
        });
    }
    let q = match case {
        Case::Rational => None,
        Case::Trigonometric => {
            let q = q.ok_or(TensorError::MissingQ {
                case: "trigonometric".into(),
            })?;
            check_q(q)?;
            if spec.x.is_zero() {
                return Err(RepsError::InvalidModule {
                    reason: "trigonometric evaluation point x must be nonzero".into(),
                });
            }
            Some(q.clone())
        }
    };

    let (word, lambda): (Vec<usize>, Vec<i64>) = match &spec.realization {
        Realization::Vector => {
            let mut l = vec![0i64; n];
            l[0] = 1;
            (vec![1], l)
        }
        Realization::WedgePower { k } => {
            if *k == 0 || *k > n {
                return Err(RepsError::InvalidModule {
                    reason: format!("wedge power k = {k} must satisfy 1 <= k <= n = {n}"),
                });
            }
            let mut l = vec![0i64; n];
            for slot in 0..*k {
                l[slot] = 1;
            }
            ((1..=*k).collect(), l)
        }
        Realization::SymmetricPower { k } => {
            if *k == 0 {
                return Err(RepsError::InvalidModule {
                    reason: "symmetric power k must be at least 1".into(),
                });
            }
            let mut l = vec![0i64; n];
            l[0] = *k as i64;
            (vec![1; *k], l)
        }
        Realization::CyclicSpan { word } => {
            if word.is_empty() {
                return Err(RepsError::InvalidModule {
                    reason: "cyclic span word must be nonempty".into(),
                });
            }
            if let Some(&bad) = word.iter().find(|&&l| l == 0 || l > n) {
                return Err(RepsError::InvalidModule {
                    reason: format!("cyclic span letter {bad} out of range 1..={n}"),
                });
            }
            let lambda = spec.weight.clone().ok_or_else(|| RepsError::InvalidModule {
                reason: "cyclic span modules require a declared highest weight".into(),
            })?;
            if lambda.len() != n {
                return Err(RepsError::InvalidModule {
                    reason: format!(
                        "declared weight has {} entries, expected n = {n}",
                        lambda.len()
                    ),
                });
            }
            if lambda.iter().any(|&l| l < 0)
                || lambda.iter().sum::<i64>() != word.len() as i64
            {
                return Err(RepsError::InvalidModule {
                    reason: format!(
                        "declared weight {lambda:?} is not a content of a {}-letter word",
                        word.len()
                    ),
                });
            }
            (word.clone(), lambda)
        }
    };
    if let Some(declared) = &spec.weight {
        if !matches!(spec.realization, Realization::CyclicSpan { .. }) && *declared != lambda {
            return Err(RepsError::InvalidModule {
                reason: format!(
                    "declared weight {declared:?} conflicts with the realization weight {lambda:?}"
                ),
            });
        }
    }

    let big = BigSpace::new(n, word.len())?;
    let big_ref = &big;
    let qq = q.clone();
    let raise: Vec<Box<dyn Fn(&[Scalar]) -> Vec<Scalar> + '_>> = (1..n)
        .map(|a| -> Box<dyn Fn(&[Scalar]) -> Vec<Scalar> + '_> {
            match &qq {
                None => Box::new(move |v: &[Scalar]| big_ref.apply_e(a, a + 1, v)),
                Some(q) => {
                    let q = q.clone();
                    Box::new(move |v: &[Scalar]| big_ref.apply_simple_raise(a, &q, v))
                }
            }
        })
        .collect();
    let lower: Vec<Box<dyn Fn(&[Scalar]) -> Vec<Scalar> + '_>> = (1..n)
        .map(|a| -> Box<dyn Fn(&[Scalar]) -> Vec<Scalar> + '_> {
            match &qq {
                None => Box::new(move |v: &[Scalar]| big_ref.apply_e(a + 1, a, v)),
                Some(q) => {
                    let q = q.clone();
                    Box::new(move |v: &[Scalar]| big_ref.apply_simple_lower(a, &q, v))
                }
            }
        })
        .collect();

    // The subspace to search for the singular vector: the full tensor power
    // for built-ins, the word's closure under raisings and lowerings for
    // cyclic spans.
    let search: Option<Echelon> = match &spec.realization {
        Realization::CyclicSpan { .. } => {
            let mut seed = vec![Scalar::zero(); big.dim];
            seed[big.index(&word)] = Scalar::one();
            let all: Vec<&dyn Fn(&[Scalar]) -> Vec<Scalar>> = raise
                .iter()
                .map(|f| f.as_ref() as &dyn Fn(&[Scalar]) -> Vec<Scalar>)
                .chain(
                    lower
                        .iter()
                        .map(|f| f.as_ref() as &dyn Fn(&[Scalar]) -> Vec<Scalar>),
                )
                .collect();
            Some(span_closure(vec![seed], &all))
        }
        _ => None,
    };

    // Weight-subspace basis: big indices of content `lambda` (or the closure
    // vectors of that content).
    let weight_basis: Vec<Vec<Scalar>> = match &search {
        None => (0..big.dim)
            .filter(|&i| big.content(i) == lambda)
            .map(|i| {
                let mut v = vec![Scalar::zero(); big.dim];
                v[i] = Scalar::one();
                v
            })
            .collect(),
        Some(ech) => ech
            .vectors
            .iter()
            .zip(&ech.pivots)
            .filter(|(_, &p)| big.content(p) == lambda)
            .map(|(v, _)| v.clone())
            .collect(),
    };
    if weight_basis.is_empty() {
        return Err(RepsError::InvalidModule {
            reason: format!("no vectors of weight {lambda:?} in the {} span", spec.realization.describe()),
        });
    }

    // Kernel of the stacked simple raisings on the weight subspace.
    let m = weight_basis.len();
    let mut columns: Vec<Vec<Scalar>> = Vec::with_capacity(m);
    for v in &weight_basis {
        let mut stacked = Vec::new();
        for f in &raise {
            stacked.extend(f(v));
        }
        columns.push(stacked);
    }
    let kernel = nullspace(&columns);
    if kernel.is_empty() {
        return Err(RepsError::InvalidModule {
            reason: format!(
                "the {} span contains no singular vector of weight {lambda:?}",
                spec.realization.describe()
            ),
        });
    }
    // Deterministic choice: the first nullspace vector, scaled so that its
    // first nonzero big-space coordinate is 1.
    let mut singular_big = vec![Scalar::zero(); big.dim];
    for (c, v) in kernel[0].iter().zip(&weight_basis) {
        if c.is_zero() {
            continue;
        }
        for (slot, e) in singular_big.iter_mut().zip(v) {
            *slot += &(c * e);
        }
    }
    let lead = singular_big
        .iter()
        .find(|c| !c.is_zero())
        .expect("kernel vector is nonzero")
        .clone();
    let lead_inv = lead.inv()?;
    for c in singular_big.iter_mut() {
        *c *= &lead_inv;
    }

    // Carrier: the span of lowering words applied to the singular vector.
    let lower_refs: Vec<&dyn Fn(&[Scalar]) -> Vec<Scalar>> = lower
        .iter()
        .map(|f| f.as_ref() as &dyn Fn(&[Scalar]) -> Vec<Scalar>)
        .collect();
    let carrier = span_closure(vec![singular_big.clone()], &lower_refs);
    let dim = carrier.vectors.len();
    if dim > 81 {
        return Err(RepsError::CapExceeded {
            context: format!("module dimension {dim} exceeds the cap 81"),
        });
    }

    let weights_by_basis: Vec<Vec<i64>> = carrier
        .pivots
        .iter()
        .map(|&p| big.content(p))
        .collect();
    let singular = carrier
        .express(&singular_big)
        .expect("the singular vector lies in its own lowering span");

    let restrict = |image: Vec<Scalar>| -> Result<Vec<Scalar>, RepsError> {
        carrier.express(&image).ok_or_else(|| RepsError::InvalidModule {
            reason: "generator image escapes the carrier span (internal invariant)".into(),
        })
    };
    let to_op = |columns: Vec<Vec<Scalar>>, label: &Space| -> LinearOperator {
        let mut op = LinearOperator::zero(vec![label.clone()], vec![label.clone()]);
        for (col, coords) in columns.iter().enumerate() {
            for (row, c) in coords.iter().enumerate() {
                if !c.is_zero() {
                    *op.entry_mut(row, col) = c.clone();
                }
            }
        }
        op
    };

    let label = format!("{}(n={n})[x={}]", spec.realization.describe(), spec.x);
    let space = Space {
        dimension: dim,
        label: format!("module:{label}"),
    };

    let grids = match &q {
        None => {
            let mut e_grid: Vec<Vec<LinearOperator>> = Vec::with_capacity(n);
            for a in 1..=n {
                let mut row = Vec::with_capacity(n);
                for b in 1..=n {
                    let mut cols = Vec::with_capacity(dim);
                    for v in &carrier.vectors {
                        cols.push(restrict(big.apply_e(a, b, v))?);
                    }
                    row.push(to_op(cols, &space));
                }
                e_grid.push(row);
            }
            ActionGrids::Rational { e: e_grid }
        }
        Some(q) => {
            let mut khat = Vec::with_capacity(n);
            let mut khat_inv = Vec::with_capacity(n);
            for a in 1..=n {
                for inverse in [false, true] {
                    let mut cols = Vec::with_capacity(dim);
                    for v in &carrier.vectors {
                        cols.push(restrict(big.apply_khat(a, inverse, q, v))?);
                    }
                    let op = to_op(cols, &space);
                    if inverse {
                        khat_inv.push(op);
                    } else {
                        khat.push(op);
                    }
                }
            }
            // Simple ehat first, then the q-bracket recursions on the carrier:
            //   ehat_ab = ehat_{a,a+1} ehat_{a+1,b} - q ehat_{a+1,b} ehat_{a,a+1}   (a + 1 < b)
            //   ehat_ba = ehat_{b,a+1} ehat_{a+1,a} - (1/q) ehat_{a+1,a} ehat_{b,a+1} (a + 1 < b)
            let mut ehat: Vec<Vec<Option<LinearOperator>>> = vec![vec![None; n]; n];
            for a in 1..n {
                let mut raise_cols = Vec::with_capacity(dim);
                let mut lower_cols = Vec::with_capacity(dim);
                for v in &carrier.vectors {
                    raise_cols.push(restrict(big.apply_simple_raise(a, q, v))?);
                    lower_cols.push(restrict(big.apply_simple_lower(a, q, v))?);
                }
                ehat[a - 1][a] = Some(to_op(raise_cols, &space));
                ehat[a][a - 1] = Some(to_op(lower_cols, &space));
            }
            let q_inv = q.inv()?;
            for width in 2..n {
                for a in 1..=n - width {
                    let b = a + width;
                    let first = ehat[a - 1][a].clone().unwrap();
                    let rest = ehat[a][b - 1].clone().unwrap();
                    let up = first
                        .compose(&rest)?
                        .sub(&rest.compose(&first)?.scale(q))?;
                    ehat[a - 1][b - 1] = Some(up);
                    let head = ehat[b - 1][a].clone().unwrap();
                    let step = ehat[a][a - 1].clone().unwrap();
                    let down = head
                        .compose(&step)?
                        .sub(&step.compose(&head)?.scale(&q_inv))?;
                    ehat[b - 1][a - 1] = Some(down);
                }
            }
            ActionGrids::Trigonometric {
                khat,
                khat_inv,
                ehat,
            }
        }
    };

    Ok(RepModule {
        case,
        q,
        n,
        x: spec.x.clone(),
        weight: lambda,
        dim,
        weights_by_basis,
        singular,
        grids,
        label,
    })
}

/// Nullspace basis of the linear map sending coefficient vectors `c` to
/// `sum_j c_j columns[j]`, by exact row reduction.
fn nullspace(columns: &[Vec<Scalar>]) -> Vec<Vec<Scalar>> {
    let m = columns.len();
    if m == 0 {
        return Vec::new();
    }
    let rows = columns[0].len();
    // Row-reduce the (rows x m) matrix.
    let mut mat: Vec<Vec<Scalar>> = (0..rows)
        .map(|r| columns.iter().map(|c| c[r].clone()).collect())
        .collect();
    let mut pivot_of_col: Vec<Option<usize>> = vec![None; m];
    let mut rank = 0usize;
    for col in 0..m {
        let Some(pr) = (rank..mat.len()).find(|&r| !mat[r][col].is_zero()) else {
            continue;
        };
        mat.swap(rank, pr);
        let inv = mat[rank][col].inv().expect("pivot nonzero");
        for c in mat[rank].iter_mut() {
            *c *= &inv;
        }
        for r in 0..mat.len() {
            if r == rank || mat[r][col].is_zero() {
                continue;
            }
            let f = mat[r][col].clone();
            for cc in col..m {
                let sub = &f * &mat[rank][cc];
                mat[r][cc] -= &sub;
            }
        }
        pivot_of_col[col] = Some(rank);
        rank += 1;
    }
    let mut basis = Vec::new();
    for free in 0..m {
        if pivot_of_col[free].is_some() {
            continue;
        }
        let mut v = vec![Scalar::zero(); m];
        v[free] = Scalar::one();
        for col in 0..m {
            if let Some(pr) = pivot_of_col[col] {
                v[col] = -mat[pr][free].clone();
            }
        }
        basis.push(v);
    }
    basis
}

// ---------------------------------------------------------------------------
// Assemblies and rank-reduction views.
// ---------------------------------------------------------------------------

/// The two rank-reduction pullbacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pullback {
    /// Keep generator indices `1..rank-1` unchanged (drop the last row).
    KeepLow,
    /// Send index `a` to `a + 1` (drop the first row).
    ShiftUp,
}

/// A tensor expression of representation carriers on which monodromy
/// operators can be evaluated: modules, the two auxiliary one-column
/// evaluation modules, rank-reduction views, and tensor products (coproduct
/// applied left to right).
#[derive(Clone)]
pub enum RepNode {
    Module(Arc<RepModule>),
    /// `C^n` with `T_ab(u) = delta_ab + E_ba / (u - x)`.
    VectorEval { n: usize, x: Scalar },
    /// `C^n` with `T_ab(u) = delta_ab - E_ab / (u - x)`.
    DualEval { n: usize, x: Scalar },
    Shift { base: Box<RepNode>, by: usize },
    Truncate { base: Box<RepNode>, by: usize },
    Tensor(Vec<RepNode>),
}

impl RepNode {
    pub fn pullback(self, which: Pullback) -> RepNode {
        match which {
            Pullback::KeepLow => RepNode::Truncate {
                base: Box::new(self),
                by: 1,
            },
            Pullback::ShiftUp => RepNode::Shift {
                base: Box::new(self),
                by: 1,
            },
        }
    }

    /// The rank of the algebra whose operators this node accepts.
    pub fn rank(&self) -> usize {
        match self {
            RepNode::Module(m) => m.n,
            RepNode::VectorEval { n, .. } | RepNode::DualEval { n, .. } => *n,
            RepNode::Shift { base, by } | RepNode::Truncate { base, by } => base.rank() - by,
            RepNode::Tensor(fs) => fs.first().map_or(0, |f| f.rank()),
        }
    }

    pub fn spaces(&self) -> Vec<Space> {
        match self {
            RepNode::Module(m) => vec![m.space()],
            RepNode::VectorEval { n, x } => vec![Space {
                dimension: *n,
                label: format!("eval:C^{n}[x={x}]"),
            }],
            RepNode::DualEval { n, x } => vec![Space {
                dimension: *n,
                label: format!("dual:C^{n}[x={x}]"),
            }],
            RepNode::Shift { base, .. } | RepNode::Truncate { base, .. } => base.spaces(),
            RepNode::Tensor(fs) => fs.iter().flat_map(|f| f.spaces()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.spaces().iter().map(|s| s.dimension).product()
    }

    /// The tensor product of the factors' singular vectors, where defined.
    pub fn singular(&self) -> Option<Vec<Scalar>> {
        match self {
            RepNode::Module(m) => Some(m.singular.clone()),
            RepNode::VectorEval { n, .. } => {
                let mut v = vec![Scalar::zero(); *n];
                v[0] = Scalar::one();
                Some(v)
            }
            RepNode::DualEval { n, .. } => {
                let mut v = vec![Scalar::zero(); *n];
                v[n - 1] = Scalar::one();
                Some(v)
            }
            RepNode::Shift { base, .. } | RepNode::Truncate { base, .. } => base.singular(),
            RepNode::Tensor(fs) => {
                let mut out = vec![Scalar::one()];
                for f in fs {
                    let s = f.singular()?;
                    let mut next = Vec::with_capacity(out.len() * s.len());
                    for a in &out {
                        for b in &s {
                            next.push(a * b);
                        }
                    }
                    out = next;
                }
                Some(out)
            }
        }
    }

    /// The full grid `[T_ab(u)]` (rational case), rows `a`, columns `b`,
    /// 1-based on the outside, as operators on this node's carrier.
    pub fn t_grid(&self, u: &Scalar) -> Result<Vec<Vec<LinearOperator>>, RepsError> {
        let rank = self.rank();
        match self {
            RepNode::Module(m) => {
                if m.case != Case::Rational {
                    return Err(RepsError::CaseMismatch {
                        expected: "rational".into(),
                        got: "trigonometric".into(),
                    });
                }
                let denom = u - &m.x;
                if denom.is_zero() {
                    return Err(RepsError::Pole {
                        factor: format!("u - x = {u} - {} on {}", m.x, m.label),
                    });
                }
                let inv = denom.inv()?;
                let id = LinearOperator::identity(vec![m.space()]);
                let mut grid = Vec::with_capacity(rank);
                for a in 1..=rank {
                    let mut row = Vec::with_capacity(rank);
                    for b in 1..=rank {
                        let mut op = m.e(b, a)?.scale(&inv);
                        if a == b {
                            op = op.add(&id)?;
                        }
                        row.push(op);
                    }
                    grid.push(row);
                }
                Ok(grid)
            }
            RepNode::VectorEval { n, x } => {
                eval_grid(*n, x, u, false)
            }
            RepNode::DualEval { n, x } => {
                eval_grid(*n, x, u, true)
            }
            RepNode::Shift { base, by } => {
                let grid = base.t_grid(u)?;
                Ok(subgrid(grid, *by))
            }
            RepNode::Truncate { base, by } => {
                let grid = base.t_grid(u)?;
                Ok(truncated(grid, *by))
            }
            RepNode::Tensor(fs) => tensor_grid(fs, &|f| f.t_grid(u)),
        }
    }

    /// The full grid `[L^{sign}_ab(u)]` (trigonometric case).
    pub fn l_grid(
        &self,
        sign: LSign,
        u: &Scalar,
    ) -> Result<Vec<Vec<LinearOperator>>, RepsError> {
        let rank = self.rank();
        match self {
            RepNode::Module(m) => {
                if m.case != Case::Trigonometric {
                    return Err(RepsError::CaseMismatch {
                        expected: "trigonometric".into(),
                        got: "rational".into(),
                    });
                }
                let q = m.q.as_ref().expect("trigonometric module carries q");
                let q_inv = q.inv()?;
                let q_m_qinv = q - &q_inv;
                let ratio = match sign {
                    LSign::Minus => {
                        if u.is_zero() {
                            return Err(RepsError::Pole {
                                factor: format!("u = 0 in L^-(u) on {}", m.label),
                            });
                        }
                        m.x.div(u)? // x / u
                    }
                    LSign::Plus => u.div(&m.x)?, // u / x (x nonzero by construction)
                };
                let mut grid = Vec::with_capacity(rank);
                for a in 1..=rank {
                    let mut row = Vec::with_capacity(rank);
                    for b in 1..=rank {
                        let op = match (sign, a.cmp(&b)) {
                            (LSign::Minus, std::cmp::Ordering::Equal) => m
                                .khat(a, false)?
                                .add(&m.khat(a, true)?.scale(&-&ratio))?,
                            (LSign::Plus, std::cmp::Ordering::Equal) => m
                                .khat(a, true)?
                                .add(&m.khat(a, false)?.scale(&-&ratio))?,
                            (LSign::Minus, std::cmp::Ordering::Less) => m
                                .khat(a, false)?
                                .compose(m.ehat(b, a)?)?
                                .scale(&q_m_qinv),
                            (LSign::Plus, std::cmp::Ordering::Less) => m
                                .khat(a, false)?
                                .compose(m.ehat(b, a)?)?
                                .scale(&-&(&ratio * &q_m_qinv)),
                            (LSign::Minus, std::cmp::Ordering::Greater) => m
                                .ehat(b, a)?
                                .compose(m.khat(b, true)?)?
                                .scale(&(&ratio * &q_m_qinv)),
                            (LSign::Plus, std::cmp::Ordering::Greater) => m
                                .ehat(b, a)?
                                .compose(m.khat(b, true)?)?
                                .scale(&-&q_m_qinv),
                        };
                        row.push(op);
                    }
                    grid.push(row);
                }
                Ok(grid)
            }
            RepNode::VectorEval { .. } | RepNode::DualEval { .. } => Err(RepsError::CaseMismatch {
                expected: "rational".into(),
                got: "trigonometric".into(),
            }),
            RepNode::Shift { base, by } => Ok(subgrid(base.l_grid(sign, u)?, *by)),
            RepNode::Truncate { base, by } => Ok(truncated(base.l_grid(sign, u)?, *by)),
            RepNode::Tensor(fs) => tensor_grid(fs, &|f| f.l_grid(sign, u)),
        }
    }

    /// Classical `gl`-generator `e_ab` acting on a tensor of rational modules
    /// (sum over the factors).
    pub fn gl_sum(&self, a: usize, b: usize) -> Result<LinearOperator, RepsError> {
        match self {
            RepNode::Module(m) => Ok(m.e(a, b)?.clone()),
            RepNode::Tensor(fs) => {
                let spaces = self.spaces();
                let mut total = LinearOperator::zero(spaces.clone(), spaces.clone());
                for (i, f) in fs.iter().enumerate() {
                    let local = f.gl_sum(a, b)?;
                    let legs: Vec<usize> = (0..f.spaces().len())
                        .map(|k| {
                            fs[..i].iter().map(|g| g.spaces().len()).sum::<usize>() + k + 1
                        })
                        .collect();
                    total = total.add(&LinearOperator::embed_leg(&local, &legs, &spaces)?)?;
                }
                Ok(total)
            }
            _ => Err(RepsError::InvalidModule {
                reason: "gl action is defined on modules and their tensor products".into(),
            }),
        }
    }
}

/// `+` / `-` halves of the trigonometric monodromy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LSign {
    Plus,
    Minus,
}

fn eval_grid(
    n: usize,
    x: &Scalar,
    u: &Scalar,
    dual: bool,
) -> Result<Vec<Vec<LinearOperator>>, RepsError> {
    let denom = u - x;
    if denom.is_zero() {
        return Err(RepsError::Pole {
            factor: format!("u - x = {u} - {x} on an auxiliary evaluation leg"),
        });
    }
    let inv = denom.inv()?;
    let space = if dual {
        Space {
            dimension: n,
            label: format!("dual:C^{n}[x={x}]"),
        }
    } else {
        Space {
            dimension: n,
            label: format!("eval:C^{n}[x={x}]"),
        }
    };
    let id = LinearOperator::identity(vec![space.clone()]);
    let mut grid = Vec::with_capacity(n);
    for a in 1..=n {
        let mut row = Vec::with_capacity(n);
        for b in 1..=n {
            let unit = if dual {
                LinearOperator::matrix_unit(n, a, b)? // E_ab, subtracted below
            } else {
                LinearOperator::matrix_unit(n, b, a)? // E_ba
            };
            let mut unit = LinearOperator {
                domain: vec![space.clone()],
                codomain: vec![space.clone()],
                entries: unit.entries,
            };
            unit = unit.scale(&inv);
            if dual {
                unit = unit.scale(&-Scalar::one());
            }
            let mut op = unit;
            if a == b {
                op = op.add(&id)?;
            }
            row.push(op);
        }
        grid.push(row);
    }
    Ok(grid)
}

fn subgrid(grid: Vec<Vec<LinearOperator>>, by: usize) -> Vec<Vec<LinearOperator>> {
    let rank = grid.len() - by;
    (0..rank)
        .map(|a| (0..rank).map(|b| grid[a + by][b + by].clone()).collect())
        .collect()
}

fn truncated(grid: Vec<Vec<LinearOperator>>, by: usize) -> Vec<Vec<LinearOperator>> {
    let rank = grid.len() - by;
    (0..rank)
        .map(|a| (0..rank).map(|b| grid[a][b].clone()).collect())
        .collect()
}

/// Assembles the coproduct grid over tensor factors, left to right:
/// `T_ab = sum_c T^{(first)}_cb (x) T^{(rest)}_ac`.
fn tensor_grid(
    factors: &[RepNode],
    grid_of: &dyn Fn(&RepNode) -> Result<Vec<Vec<LinearOperator>>, RepsError>,
) -> Result<Vec<Vec<LinearOperator>>, RepsError> {
    let rank = factors
        .first()
        .map(|f| f.rank())
        .ok_or(RepsError::InvalidModule {
            reason: "empty tensor assembly".into(),
        })?;
    if factors.iter().any(|f| f.rank() != rank) {
        return Err(RepsError::InvalidModule {
            reason: "tensor factors have different ranks".into(),
        });
    }
    let mut acc = grid_of(&factors[0])?;
    let mut acc_spaces = factors[0].spaces();
    for f in &factors[1..] {
        let fg = grid_of(f)?;
        let f_spaces = f.spaces();
        let mut joined_spaces = acc_spaces.clone();
        joined_spaces.extend(f_spaces.iter().cloned());
        let acc_legs: Vec<usize> = (1..=acc_spaces.len()).collect();
        let f_legs: Vec<usize> =
            (acc_spaces.len() + 1..=acc_spaces.len() + f_spaces.len()).collect();
        let mut next = Vec::with_capacity(rank);
        for a in 1..=rank {
            let mut row = Vec::with_capacity(rank);
            for b in 1..=rank {
                let mut entry = LinearOperator::zero(joined_spaces.clone(), joined_spaces.clone());
                for c in 1..=rank {
                    let left =
                        LinearOperator::embed_leg(&acc[c - 1][b - 1], &acc_legs, &joined_spaces)?;
                    let right =
                        LinearOperator::embed_leg(&fg[a - 1][c - 1], &f_legs, &joined_spaces)?;
                    entry = entry.add(&left.compose(&right)?)?;
                }
                row.push(entry);
            }
            next.push(row);
        }
        acc = next;
        acc_spaces = joined_spaces;
    }
    Ok(acc)
}

/// A tensor product of built modules sharing one case (and `q`).
#[derive(Clone)]
pub struct Assembly {
    pub case: Case,
    pub q: Option<Scalar>,
    pub factors: Vec<Arc<RepModule>>,
}

impl Assembly {
    /// Builds every factor and checks the shared parameters.
    pub fn build(
        case: Case,
        q: Option<&Scalar>,
        specs: &[ModuleSpec],
    ) -> Result<Self, RepsError> {
        if specs.is_empty() {
            return Err(RepsError::InvalidModule {
                reason: "an assembly needs at least one factor".into(),
            });
        }
        let n = specs[0].n;
        if specs.iter().any(|s| s.n != n) {
            return Err(RepsError::InvalidModule {
                reason: "all factors of an assembly must share the same rank n".into(),
            });
        }
        let factors = specs
            .iter()
            .map(|s| build_module(s, case, q).map(Arc::new))
            .collect::<Result<Vec<_>, _>>()?;
        let dim: usize = factors.iter().map(|f| f.dim).product();
        if dim > 81 {
            return Err(RepsError::CapExceeded {
                context: format!("assembly dimension {dim} exceeds the cap 81"),
            });
        }
        Ok(Assembly {
            case,
            q: q.cloned(),
            factors,
        })
    }

    pub fn n(&self) -> usize {
        self.factors[0].n
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim).product()
    }

    pub fn node(&self) -> RepNode {
        RepNode::Tensor(
            self.factors
                .iter()
                .map(|f| RepNode::Module(Arc::clone(f)))
                .collect(),
        )
    }

    pub fn spaces(&self) -> Vec<Space> {
        self.factors.iter().map(|f| f.space()).collect()
    }

    /// Joint singular vector (tensor product of the factors').
    pub fn joint_singular(&self) -> Vec<Scalar> {
        self.node().singular().expect("modules carry singular vectors")
    }

    /// Sum of the factor highest weights.
    pub fn total_weight(&self) -> Vec<i64> {
        let n = self.n();
        let mut w = vec![0i64; n];
        for f in &self.factors {
            for (slot, l) in w.iter_mut().zip(&f.weight) {
                *slot += l;
            }
        }
        w
    }

    /// `gl`-content of each joint basis vector.
    pub fn basis_weights(&self) -> Vec<Vec<i64>> {
        let n = self.n();
        let mut out: Vec<Vec<i64>> = vec![vec![0; n]];
        for f in &self.factors {
            let mut next = Vec::with_capacity(out.len() * f.dim);
            for prefix in &out {
                for w in &f.weights_by_basis {
                    let mut joined = prefix.clone();
                    for (slot, l) in joined.iter_mut().zip(w) {
                        *slot += l;
                    }
                    next.push(joined);
                }
            }
            out = next;
        }
        out
    }

    /// Human-readable labels of the joint basis.
    pub fn basis_labels(&self) -> Vec<String> {
        let mut out: Vec<String> = vec![String::new()];
        for f in &self.factors {
            let mut next = Vec::with_capacity(out.len() * f.dim);
            for prefix in &out {
                for i in 1..=f.dim {
                    if prefix.is_empty() {
                        next.push(format!("w{i}"));
                    } else {
                        next.push(format!("{prefix}(x)w{i}"));
                    }
                }
            }
            out = next;
        }
        out
    }

    /// The monodromy entry `T_ab(u)` on the whole assembly (rational case).
    pub fn yangian_t(&self, a: usize, b: usize, u: &Scalar) -> Result<LinearOperator, RepsError> {
        if self.case != Case::Rational {
            return Err(RepsError::CaseMismatch {
                expected: "rational".into(),
                got: "trigonometric".into(),
            });
        }
        check_index(self.n(), a)?;
        check_index(self.n(), b)?;
        let grid = self.node().t_grid(u)?;
        Ok(grid[a - 1][b - 1].clone())
    }

    /// The monodromy entry `L^{sign}_ab(u)` on the whole assembly
    /// (trigonometric case).
    pub fn loop_l(
        &self,
        sign: LSign,
        a: usize,
        b: usize,
        u: &Scalar,
    ) -> Result<LinearOperator, RepsError> {
        if self.case != Case::Trigonometric {
            return Err(RepsError::CaseMismatch {
                expected: "trigonometric".into(),
                got: "rational".into(),
            });
        }
        check_index(self.n(), a)?;
        check_index(self.n(), b)?;
        let grid = self.node().l_grid(sign, u)?;
        Ok(grid[a - 1][b - 1].clone())
    }

    /// Eigenvalue of the diagonal entry (`T_aa` or `L^-_aa`) on the singular
    /// vector of factor `r` (0-based).
    pub fn diagonal_eigenvalue(
        &self,
        r: usize,
        a: usize,
        u: &Scalar,
    ) -> Result<Scalar, RepsError> {
        let f = &self.factors[r];
        let node = RepNode::Module(Arc::clone(f));
        let grid = match self.case {
            Case::Rational => node.t_grid(u)?,
            Case::Trigonometric => node.l_grid(LSign::Minus, u)?,
        };
        let image = grid[a - 1][a - 1].apply(&f.singular)?;
        let lead = f
            .singular
            .iter()
            .position(|c| !c.is_zero())
            .expect("singular vector is nonzero");
        let value = image[lead].div(&f.singular[lead])?;
        // The singular vector must be an exact eigenvector.
        let check = grid[a - 1][a - 1]
            .apply(&f.singular)?
            .iter()
            .zip(&f.singular)
            .all(|(im, s)| im == &(&value * s));
        if !check {
            return Err(RepsError::InvalidModule {
                reason: format!("diagonal entry {a} is not scalar on the singular vector of factor {r}"),
            });
        }
        Ok(value)
    }
}

/// Builds the dressed carrier for the component recursions.
///
/// For the high-corner map with points `x_1 .. x_k` the carrier is
/// `C^{n-1}(x_1) (x) ... (x) C^{n-1}(x_k) (x) (high-corner view of the
/// ambient node)`; for the low-corner map it is `(low-corner view) (x)
/// dual C^{n-1}(x_1) (x) ... (x) dual C^{n-1}(x_k)`.  Rank drops by one.
pub fn aux_map_carrier(which: Pullback, points: &[Scalar], ambient: RepNode) -> RepNode {
    let small = ambient.rank() - 1;
    match which {
        Pullback::ShiftUp => {
            let mut fs: Vec<RepNode> = points
                .iter()
                .map(|x| RepNode::VectorEval {
                    n: small,
                    x: x.clone(),
                })
                .collect();
            fs.push(ambient.pullback(Pullback::ShiftUp));
            RepNode::Tensor(fs)
        }
        Pullback::KeepLow => {
            let mut fs = vec![ambient.pullback(Pullback::KeepLow)];
            fs.extend(points.iter().map(|x| RepNode::DualEval {
                n: small,
                x: x.clone(),
            }));
            RepNode::Tensor(fs)
        }
    }
}
