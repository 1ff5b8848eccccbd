//! Liouville operators of the jump dynamics and their semigroups.
//!
//! For an ordered tuple `(i_1, ..., i_m)` of distinct entity slots,
//!
//! ```text
//! (Λ^[m](i_1..i_m) b)(x) = a^[m](x_{i_1}..x_{i_m})
//!     * ( Σ_v A^[m](v; x_{i_1}..x_{i_m}) b(x | slot i_1 <- v) - b(x) )
//! ```
//!
//! and `Λ_n = Σ_m ε^(m-1) Σ_(i_1 != .. != i_m) Λ^[m](i_1..i_m)`, summed over
//! ordered tuples. The adjoint `Λ*` is assembled from its own defining sum,
//! not by transposition, so the transpose identity is a genuine check.

use nalgebra::{DMatrix, DVector};

use crate::combinatorics::ordered_tuples;
use crate::error::{Error, Result};
use crate::model::InteractionModel;
use crate::state_space::{MultiIndex, StateSpace, SymTensor};

/// Largest dense operator dimension `S^n` (e.g. `S = 6, n = 4`).
pub const MAX_OPERATOR_DIM: usize = 1296;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Generator,
    AdjointGenerator,
    Semigroup,
    AdjointSemigroup,
    Cumulant,
    Other,
}

/// Dense linear operator on functions of `arity` entities.
#[derive(Debug, Clone, PartialEq)]
pub struct LinOp {
    arity: usize,
    space: StateSpace,
    matrix: DMatrix<f64>,
    kind: OpKind,
}

/// Ordered tuple of distinct entity slots `(i_1, ..., i_m)`, 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InteractionTuple(Vec<usize>);

impl InteractionTuple {
    pub fn new(slots: Vec<usize>) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::InvalidArgument("empty interaction tuple".into()));
        }
        for (i, s) in slots.iter().enumerate() {
            if slots[..i].contains(s) {
                return Err(Error::InvalidArgument(format!(
                    "interaction tuple {slots:?} repeats slot {s}"
                )));
            }
        }
        Ok(Self(slots))
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn slots(&self) -> &[usize] {
        &self.0
    }

    fn check(&self, model: &InteractionModel, n: usize) -> Result<()> {
        if self.order() > model.max_order() {
            return Err(Error::OutOfRange(format!(
                "interaction order {} exceeds m_max={}",
                self.order(),
                model.max_order()
            )));
        }
        if let Some(&bad) = self.0.iter().find(|&&s| s >= n) {
            return Err(Error::OutOfRange(format!("slot {bad} in arity {n}")));
        }
        Ok(())
    }
}

/// All ordered interaction tuples of order `m` among slots `0..n`.
pub fn interaction_tuples(n: usize, m: usize) -> Vec<InteractionTuple> {
    let slots: Vec<usize> = (0..n).collect();
    ordered_tuples(&slots, m)
        .into_iter()
        .map(InteractionTuple)
        .collect()
}

fn operator_dim(space: &StateSpace, n: usize) -> Result<usize> {
    let dim = space.tensor_len(n)?;
    if dim > MAX_OPERATOR_DIM {
        return Err(Error::SizeCap {
            what: "dense operator",
            needed: dim,
            limit: MAX_OPERATOR_DIM,
        });
    }
    Ok(dim)
}

/// Calls `emit(row, col, weight)` for every matrix entry contributed by
/// `Λ^[m](tuple)` on arity `n`, with `scale` applied.
fn visit_forward(
    model: &InteractionModel,
    n: usize,
    tuple: &InteractionTuple,
    scale: f64,
    mut emit: impl FnMut(usize, usize, f64),
) {
    let space = model.space();
    let m = tuple.order();
    let jumper = tuple.slots()[0];
    let stride = space.stride(n, jumper);
    let mut states = vec![0; m];
    let mut it = MultiIndex::new(space, n);
    let mut row = 0;
    while let Some(x) = it.next() {
        for (k, &slot) in tuple.slots().iter().enumerate() {
            states[k] = x[slot];
        }
        let ti = model.tuple_index(&states);
        let rate = model.rate_at(m, ti);
        if rate != 0.0 {
            let base = row - x[jumper] * stride;
            for (v, &p) in model.kernel_row_at(m, ti).iter().enumerate() {
                if p != 0.0 {
                    emit(row, base + v * stride, scale * rate * p);
                }
            }
            emit(row, row, -scale * rate);
        }
        row += 1;
    }
}

/// As [`visit_forward`] for the adjoint `Λ*^[m](tuple)`:
/// `(Λ* f)(x) = Σ_v A(x_{i_1}; v, x_{i_2}..) a(v, x_{i_2}..) f(x | i_1 <- v) - a(x_T) f(x)`.
fn visit_adjoint(
    model: &InteractionModel,
    n: usize,
    tuple: &InteractionTuple,
    scale: f64,
    mut emit: impl FnMut(usize, usize, f64),
) {
    let space = model.space();
    let s = space.size();
    let m = tuple.order();
    let jumper = tuple.slots()[0];
    let stride = space.stride(n, jumper);
    let lead_weight = s.pow((m - 1) as u32);
    let mut states = vec![0; m];
    let mut it = MultiIndex::new(space, n);
    let mut row = 0;
    while let Some(x) = it.next() {
        for (k, &slot) in tuple.slots().iter().enumerate() {
            states[k] = x[slot];
        }
        let ti = model.tuple_index(&states);
        let target = x[jumper];
        let rest = ti - target * lead_weight;
        let base = row - target * stride;
        for v in 0..s {
            let source = rest + v * lead_weight;
            let w = model.kernel_row_at(m, source)[target] * model.rate_at(m, source);
            if w != 0.0 {
                emit(row, base + v * stride, scale * w);
            }
        }
        let out = model.rate_at(m, ti);
        if out != 0.0 {
            emit(row, row, -scale * out);
        }
        row += 1;
    }
}

fn assemble(
    model: &InteractionModel,
    n: usize,
    kind: OpKind,
    terms: &[(InteractionTuple, f64)],
    adjoint: bool,
) -> Result<LinOp> {
    let dim = operator_dim(model.space(), n)?;
    let mut matrix = DMatrix::zeros(dim, dim);
    for (tuple, scale) in terms {
        tuple.check(model, n)?;
        let emit = |r, c, w| matrix[(r, c)] += w;
        if adjoint {
            visit_adjoint(model, n, tuple, *scale, emit);
        } else {
            visit_forward(model, n, tuple, *scale, emit);
        }
    }
    Ok(LinOp {
        arity: n,
        space: *model.space(),
        matrix,
        kind,
    })
}

fn full_terms(model: &InteractionModel, n: usize) -> Result<Vec<(InteractionTuple, f64)>> {
    if n == 0 {
        return Err(Error::InvalidArgument("generator needs n >= 1".into()));
    }
    let eps = model.epsilon();
    Ok((1..=model.max_order().min(n))
        .flat_map(|m| {
            let w = eps.powi(m as i32 - 1);
            interaction_tuples(n, m).into_iter().map(move |t| (t, w))
        })
        .collect())
}

/// `Λ^[m](i_1..i_m)` on `n` entities, without the `ε^(m-1)` weight.
pub fn lambda_m(model: &InteractionModel, n: usize, tuple: &InteractionTuple) -> Result<LinOp> {
    assemble(model, n, OpKind::Generator, &[(tuple.clone(), 1.0)], false)
}

/// `Λ*^[m](i_1..i_m)` on `n` entities, without the `ε^(m-1)` weight.
pub fn lambda_star_m(
    model: &InteractionModel,
    n: usize,
    tuple: &InteractionTuple,
) -> Result<LinOp> {
    assemble(model, n, OpKind::AdjointGenerator, &[(tuple.clone(), 1.0)], true)
}

/// The Liouville operator `Λ_n`.
pub fn lambda_n(model: &InteractionModel, n: usize) -> Result<LinOp> {
    assemble(model, n, OpKind::Generator, &full_terms(model, n)?, false)
}

/// The adjoint Liouville operator `Λ*_n`.
pub fn lambda_star_n(model: &InteractionModel, n: usize) -> Result<LinOp> {
    assemble(model, n, OpKind::AdjointGenerator, &full_terms(model, n)?, true)
}

/// Free flow `Σ_i Λ^[1](i)` on `n` entities.
pub fn free_flow(model: &InteractionModel, n: usize) -> Result<LinOp> {
    let terms: Vec<_> = interaction_tuples(n, 1).into_iter().map(|t| (t, 1.0)).collect();
    assemble(model, n, OpKind::Generator, &terms, false)
}

/// Matrix-free `Λ^[m](tuple) b`, no `ε` weight.
pub fn apply_lambda_m(
    model: &InteractionModel,
    tuple: &InteractionTuple,
    b: &SymTensor,
) -> Result<SymTensor> {
    let mut out = SymTensor::zeros(*b.space(), b.arity())?;
    add_lambda_m(model, tuple, 1.0, b, &mut out)?;
    Ok(out)
}

/// `out += scale * Λ^[m](tuple) b`.
pub fn add_lambda_m(
    model: &InteractionModel,
    tuple: &InteractionTuple,
    scale: f64,
    b: &SymTensor,
    out: &mut SymTensor,
) -> Result<()> {
    check_operand(model, tuple, b, out)?;
    let input = b.as_slice();
    let dst = out.as_mut_slice();
    visit_forward(model, b.arity(), tuple, scale, |r, c, w| dst[r] += w * input[c]);
    Ok(())
}

/// Matrix-free `Λ*^[m](tuple) f`, no `ε` weight.
pub fn apply_lambda_star_m(
    model: &InteractionModel,
    tuple: &InteractionTuple,
    f: &SymTensor,
) -> Result<SymTensor> {
    let mut out = SymTensor::zeros(*f.space(), f.arity())?;
    add_lambda_star_m(model, tuple, 1.0, f, &mut out)?;
    Ok(out)
}

/// `out += scale * Λ*^[m](tuple) f`.
pub fn add_lambda_star_m(
    model: &InteractionModel,
    tuple: &InteractionTuple,
    scale: f64,
    f: &SymTensor,
    out: &mut SymTensor,
) -> Result<()> {
    check_operand(model, tuple, f, out)?;
    let input = f.as_slice();
    let dst = out.as_mut_slice();
    visit_adjoint(model, f.arity(), tuple, scale, |r, c, w| dst[r] += w * input[c]);
    Ok(())
}

fn check_operand(
    model: &InteractionModel,
    tuple: &InteractionTuple,
    input: &SymTensor,
    out: &SymTensor,
) -> Result<()> {
    if input.space() != model.space() || out.space() != model.space() {
        return Err(Error::SpaceMismatch);
    }
    if input.arity() != out.arity() {
        return Err(Error::ArityMismatch {
            expected: input.arity(),
            found: out.arity(),
        });
    }
    tuple.check(model, input.arity())
}

/// `Λ_n b` without forming the matrix.
pub fn apply_lambda_n(model: &InteractionModel, b: &SymTensor) -> Result<SymTensor> {
    let mut out = SymTensor::zeros(*b.space(), b.arity())?;
    for (tuple, w) in full_terms(model, b.arity())? {
        add_lambda_m(model, &tuple, w, b, &mut out)?;
    }
    Ok(out)
}

/// `Λ*_n f` without forming the matrix.
pub fn apply_lambda_star_n(model: &InteractionModel, f: &SymTensor) -> Result<SymTensor> {
    let mut out = SymTensor::zeros(*f.space(), f.arity())?;
    for (tuple, w) in full_terms(model, f.arity())? {
        add_lambda_star_m(model, &tuple, w, f, &mut out)?;
    }
    Ok(out)
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(t A)` by scaling and squaring of a truncated Taylor series.
///
/// The scaled matrix has 1-norm at most 1/2, and the series is cut once a
/// term drops below `1e-17` relative to the partial sum.
pub fn expm(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let x = a * t;
    let norm = one_norm(&x);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let x = x / 2f64.powi(squarings);
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=40 {
        term = (&term * &x) / k as f64;
        result += &term;
        if one_norm(&term) <= 1e-17 * one_norm(&result) {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Stochasticity tolerance asserted on semigroups of (adjoint) generators.
pub const STOCHASTIC_TOL: f64 = 1e-10;

/// `e^{t op}`. For generators and `t >= 0` the result is checked to be
/// stochastic (rows for `Λ`, columns for `Λ*`).
pub fn semigroup(op: &LinOp, t: f64) -> Result<LinOp> {
    if !t.is_finite() {
        return Err(Error::NonFinite(format!("semigroup time {t}")));
    }
    let matrix = expm(&op.matrix, t);
    let kind = match op.kind {
        OpKind::Generator => OpKind::Semigroup,
        OpKind::AdjointGenerator => OpKind::AdjointSemigroup,
        _ => OpKind::Other,
    };
    let result = LinOp {
        arity: op.arity,
        space: op.space,
        matrix,
        kind,
    };
    if t >= 0.0 {
        match kind {
            OpKind::Semigroup => check_stochastic(&result.matrix.transpose())?,
            OpKind::AdjointSemigroup => check_stochastic(&result.matrix)?,
            _ => {}
        }
    }
    Ok(result)
}

/// Nonnegative entries and unit column sums, to [`STOCHASTIC_TOL`].
fn check_stochastic(m: &DMatrix<f64>) -> Result<()> {
    for (j, col) in m.column_iter().enumerate() {
        let sum: f64 = col.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::Invariant(format!(
                "semigroup column {j} sums to {sum}"
            )));
        }
        if let Some(v) = col.iter().find(|&&v| v < -STOCHASTIC_TOL) {
            return Err(Error::Invariant(format!(
                "semigroup column {j} has negative entry {v}"
            )));
        }
    }
    Ok(())
}

impl LinOp {
    pub fn from_matrix(space: StateSpace, arity: usize, matrix: DMatrix<f64>, kind: OpKind) -> Result<Self> {
        let dim = space.tensor_len(arity)?;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::InvalidArgument(format!(
                "operator on arity {arity} needs a {dim}x{dim} matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self {
            arity,
            space,
            matrix,
            kind,
        })
    }

    pub fn identity(space: StateSpace, arity: usize) -> Result<Self> {
        let dim = operator_dim(&space, arity)?;
        Ok(Self {
            arity,
            space,
            matrix: DMatrix::identity(dim, dim),
            kind: OpKind::Other,
        })
    }

    pub fn zeros(space: StateSpace, arity: usize, kind: OpKind) -> Result<Self> {
        let dim = operator_dim(&space, arity)?;
        Ok(Self {
            arity,
            space,
            matrix: DMatrix::zeros(dim, dim),
            kind,
        })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn kind(&self) -> OpKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn with_kind(mut self, kind: OpKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn transpose(&self) -> LinOp {
        LinOp {
            arity: self.arity,
            space: self.space,
            matrix: self.matrix.transpose(),
            kind: OpKind::Other,
        }
    }

    /// Operator product `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &LinOp) -> Result<LinOp> {
        self.check_same(other)?;
        Ok(LinOp {
            arity: self.arity,
            space: self.space,
            matrix: &self.matrix * &other.matrix,
            kind: OpKind::Other,
        })
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &LinOp) -> Result<()> {
        self.check_same(other)?;
        self.matrix += &other.matrix * alpha;
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &LinOp) -> Result<f64> {
        self.check_same(other)?;
        Ok((&self.matrix - &other.matrix).amax())
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.amax()
    }

    fn check_same(&self, other: &LinOp) -> Result<()> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch);
        }
        if self.arity != other.arity {
            return Err(Error::ArityMismatch {
                expected: self.arity,
                found: other.arity,
            });
        }
        Ok(())
    }

    pub fn apply(&self, t: &SymTensor) -> Result<SymTensor> {
        if t.space() != &self.space {
            return Err(Error::SpaceMismatch);
        }
        if t.arity() != self.arity {
            return Err(Error::ArityMismatch {
                expected: self.arity,
                found: t.arity(),
            });
        }
        let v = DVector::from_column_slice(t.as_slice());
        let out = &self.matrix * v;
        SymTensor::from_vec(self.space, self.arity, out.as_slice().to_vec())
    }

    /// Apply this `k`-entity operator to slots `slots` of an arity-`s`
    /// tensor; slot `i` of the operator acts on slot `slots[i]`.
    pub fn apply_on_slots(&self, slots: &[usize], t: &SymTensor) -> Result<SymTensor> {
        let offsets = self.slot_offsets(slots, t.arity())?;
        let space = self.space;
        let s = t.arity();
        let input = t.as_slice();
        let mut out = vec![0.0; input.len()];
        let mut it = MultiIndex::new(&space, s);
        let mut local = vec![0; self.arity];
        let mut idx = 0;
        while let Some(x) = it.next() {
            for (i, &slot) in slots.iter().enumerate() {
                local[i] = x[slot];
            }
            let row = space.index_of(&local);
            let base = idx - offsets[row];
            out[idx] = self
                .matrix
                .row(row)
                .iter()
                .zip(&offsets)
                .map(|(w, off)| w * input[base + off])
                .sum();
            idx += 1;
        }
        SymTensor::from_vec(space, s, out)
    }

    /// Dense matrix of this operator acting on `slots` of arity `s`,
    /// identity elsewhere.
    pub fn lift(&self, slots: &[usize], s: usize) -> Result<LinOp> {
        let offsets = self.slot_offsets(slots, s)?;
        let dim = operator_dim(&self.space, s)?;
        let mut matrix = DMatrix::zeros(dim, dim);
        let mut it = MultiIndex::new(&self.space, s);
        let mut local = vec![0; self.arity];
        let mut idx = 0;
        while let Some(x) = it.next() {
            for (i, &slot) in slots.iter().enumerate() {
                local[i] = x[slot];
            }
            let row = self.space.index_of(&local);
            let base = idx - offsets[row];
            for (c, off) in offsets.iter().enumerate() {
                matrix[(idx, base + off)] = self.matrix[(row, c)];
            }
            idx += 1;
        }
        Ok(LinOp {
            arity: s,
            space: self.space,
            matrix,
            kind: self.kind,
        })
    }

    /// Offset in an arity-`s` tensor of every local multi-index on `slots`.
    fn slot_offsets(&self, slots: &[usize], s: usize) -> Result<Vec<usize>> {
        if slots.len() != self.arity {
            return Err(Error::ArityMismatch {
                expected: self.arity,
                found: slots.len(),
            });
        }
        if slots.iter().any(|&p| p >= s) {
            return Err(Error::OutOfRange(format!("slots {slots:?} in arity {s}")));
        }
        let strides: Vec<usize> = slots.iter().map(|&p| self.space.stride(s, p)).collect();
        let dim = self.matrix.nrows();
        let mut local = vec![0; self.arity];
        Ok((0..dim)
            .map(|c| {
                self.space.decode_into(c, &mut local);
                local.iter().zip(&strides).map(|(d, st)| d * st).sum()
            })
            .collect())
    }
}
