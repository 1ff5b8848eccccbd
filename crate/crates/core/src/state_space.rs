//! Discretized single-entity state space and the dense tensor algebra on its
//! products.
//!
//! An entity state is a pair (subpopulation, micro-state). The continuum of
//! micro-states is replaced by `K` abstract states, so the single-entity
//! space has `S = M * K` points and every integral over it is a plain sum.
//! Functions of `n` entities are stored densely as arrays of length `S^n`,
//! row-major with slot 0 the most significant digit.

use serde::{Deserialize, Serialize};

use crate::combinatorics::{factorial, permutations};
use crate::error::{Error, Result};

/// Hard cap on dense tensor storage (`S^n`), e.g. `S = 12, n = 4`.
pub const MAX_TENSOR_LEN: usize = 20_736;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateSpace {
    subpopulations: usize,
    micro_states: usize,
}

/// One entity state with 1-based indices, as `(j, u)` with `j` in `1..=M`
/// and `u` in `1..=K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EntityState {
    pub subpopulation: usize,
    pub micro_state: usize,
}

impl StateSpace {
    pub fn new(subpopulations: usize, micro_states: usize) -> Result<Self> {
        if subpopulations == 0 || micro_states == 0 {
            return Err(Error::InvalidArgument(format!(
                "state space needs M >= 1 and K >= 1, got M={subpopulations}, K={micro_states}"
            )));
        }
        Ok(Self {
            subpopulations,
            micro_states,
        })
    }

    /// Number of subpopulations `M`.
    pub fn subpopulations(&self) -> usize {
        self.subpopulations
    }

    /// Number of micro-states `K` per subpopulation.
    pub fn micro_states(&self) -> usize {
        self.micro_states
    }

    /// Size `S = M * K` of the single-entity space.
    pub fn size(&self) -> usize {
        self.subpopulations * self.micro_states
    }

    pub fn flatten(&self, e: EntityState) -> Result<usize> {
        if !(1..=self.subpopulations).contains(&e.subpopulation)
            || !(1..=self.micro_states).contains(&e.micro_state)
        {
            return Err(Error::OutOfRange(format!(
                "entity state ({}, {}) outside M={}, K={}",
                e.subpopulation, e.micro_state, self.subpopulations, self.micro_states
            )));
        }
        Ok((e.subpopulation - 1) * self.micro_states + (e.micro_state - 1))
    }

    pub fn unflatten(&self, index: usize) -> Result<EntityState> {
        if index >= self.size() {
            return Err(Error::OutOfRange(format!(
                "flat index {index} outside [0, {})",
                self.size()
            )));
        }
        Ok(EntityState {
            subpopulation: index / self.micro_states + 1,
            micro_state: index % self.micro_states + 1,
        })
    }

    /// 1-based subpopulation of a flat single-entity index.
    pub fn subpopulation_of(&self, index: usize) -> usize {
        index / self.micro_states + 1
    }

    /// `S^n`, checked against [`MAX_TENSOR_LEN`].
    pub fn tensor_len(&self, arity: usize) -> Result<usize> {
        let mut len: usize = 1;
        for _ in 0..arity {
            len = len
                .checked_mul(self.size())
                .filter(|&l| l <= MAX_TENSOR_LEN)
                .ok_or(Error::SizeCap {
                    what: "tensor",
                    needed: self.size().saturating_pow(arity as u32),
                    limit: MAX_TENSOR_LEN,
                })?;
        }
        Ok(len)
    }

    /// Stride of `slot` in a tensor of the given arity.
    pub fn stride(&self, arity: usize, slot: usize) -> usize {
        self.size().pow((arity - 1 - slot) as u32)
    }

    /// Flat index of a multi-index.
    pub fn index_of(&self, states: &[usize]) -> usize {
        states.iter().fold(0, |acc, &x| acc * self.size() + x)
    }

    /// Decode a flat tensor index into `out` (whose length is the arity).
    pub fn decode_into(&self, mut index: usize, out: &mut [usize]) {
        let s = self.size();
        for slot in out.iter_mut().rev() {
            *slot = index % s;
            index /= s;
        }
    }
}

/// Odometer over all multi-indices of `S^n` in storage order.
pub(crate) struct MultiIndex {
    size: usize,
    digits: Vec<usize>,
    started: bool,
    done: bool,
}

impl MultiIndex {
    pub(crate) fn new(space: &StateSpace, arity: usize) -> Self {
        Self {
            size: space.size(),
            digits: vec![0; arity],
            started: false,
            done: false,
        }
    }

    /// Advance and return the next multi-index, or `None` when exhausted.
    pub(crate) fn next(&mut self) -> Option<&[usize]> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.digits);
        }
        for d in self.digits.iter_mut().rev() {
            *d += 1;
            if *d < self.size {
                return Some(&self.digits);
            }
            *d = 0;
        }
        self.done = true;
        None
    }
}

/// A real function on the `n`-fold product space.
///
/// Houses observables, marginal observables and (marginal) distribution
/// functions. Permutation symmetry is the intended invariant for all of
/// those; it is established by [`SymTensor::symmetrize`] and preserved by
/// the symmetric operators in this crate, but intermediate values such as
/// [`SymTensor::embed`] results need not be symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensor {
    space: StateSpace,
    arity: usize,
    data: Vec<f64>,
}

impl SymTensor {
    pub fn zeros(space: StateSpace, arity: usize) -> Result<Self> {
        let len = space.tensor_len(arity)?;
        Ok(Self {
            space,
            arity,
            data: vec![0.0; len],
        })
    }

    pub fn constant(space: StateSpace, arity: usize, value: f64) -> Result<Self> {
        let mut t = Self::zeros(space, arity)?;
        t.data.fill(value);
        Ok(t)
    }

    /// Arity-0 tensor holding a scalar.
    pub fn scalar(space: StateSpace, value: f64) -> Self {
        Self {
            space,
            arity: 0,
            data: vec![value],
        }
    }

    pub fn from_vec(space: StateSpace, arity: usize, data: Vec<f64>) -> Result<Self> {
        let len = space.tensor_len(arity)?;
        if data.len() != len {
            return Err(Error::InvalidArgument(format!(
                "tensor of arity {arity} over S={} needs {len} entries, got {}",
                space.size(),
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor entry {bad}")));
        }
        Ok(Self { space, arity, data })
    }

    pub fn from_fn(
        space: StateSpace,
        arity: usize,
        mut f: impl FnMut(&[usize]) -> f64,
    ) -> Result<Self> {
        let len = space.tensor_len(arity)?;
        let mut data = Vec::with_capacity(len);
        let mut it = MultiIndex::new(&space, arity);
        while let Some(x) = it.next() {
            data.push(f(x));
        }
        Self::from_vec(space, arity, data)
    }

    /// Point mass at one single-entity state.
    pub fn delta(space: StateSpace, at: usize) -> Result<Self> {
        if at >= space.size() {
            return Err(Error::OutOfRange(format!("state {at}")));
        }
        let mut t = Self::zeros(space, 1)?;
        t.data[at] = 1.0;
        Ok(t)
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, states: &[usize]) -> f64 {
        debug_assert_eq!(states.len(), self.arity);
        self.data[self.space.index_of(states)]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.scale(factor);
        self
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &SymTensor) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    /// Max-norm of `self - other`.
    pub fn max_abs_diff(&self, other: &SymTensor) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    fn check_compatible(&self, other: &SymTensor) -> Result<()> {
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

    /// Average over all `n!` permutations of the argument slots.
    pub fn symmetrize(&self) -> SymTensor {
        if self.arity <= 1 {
            return self.clone();
        }
        let perms = permutations(self.arity);
        let norm = 1.0 / factorial(self.arity);
        let mut out = vec![0.0; self.data.len()];
        let mut permuted = vec![0; self.arity];
        let mut it = MultiIndex::new(&self.space, self.arity);
        let mut idx = 0;
        while let Some(x) = it.next() {
            let mut acc = 0.0;
            for p in &perms {
                for (slot, &src) in p.iter().enumerate() {
                    permuted[slot] = x[src];
                }
                acc += self.data[self.space.index_of(&permuted)];
            }
            out[idx] = acc * norm;
            idx += 1;
        }
        SymTensor {
            space: self.space,
            arity: self.arity,
            data: out,
        }
    }

    /// Largest deviation from permutation symmetry.
    pub fn symmetry_defect(&self) -> f64 {
        self.max_abs_diff(&self.symmetrize()).unwrap_or(f64::INFINITY)
    }

    /// Extend to arity `n`: slot `i` of `self` becomes slot `keep[i]` of the
    /// result, which is constant in the remaining slots.
    pub fn embed(&self, keep: &[usize], n: usize) -> Result<SymTensor> {
        if keep.len() != self.arity {
            return Err(Error::ArityMismatch {
                expected: self.arity,
                found: keep.len(),
            });
        }
        if keep.iter().any(|&k| k >= n) {
            return Err(Error::OutOfRange(format!("embed slots {keep:?} into arity {n}")));
        }
        for (i, k) in keep.iter().enumerate() {
            if keep[..i].contains(k) {
                return Err(Error::InvalidArgument(format!("repeated slot {k} in {keep:?}")));
            }
        }
        let len = self.space.tensor_len(n)?;
        let mut data = Vec::with_capacity(len);
        let mut sub = vec![0; self.arity];
        let mut it = MultiIndex::new(&self.space, n);
        while let Some(x) = it.next() {
            for (i, &k) in keep.iter().enumerate() {
                sub[i] = x[k];
            }
            data.push(self.data[self.space.index_of(&sub)]);
        }
        Ok(SymTensor {
            space: self.space,
            arity: n,
            data,
        })
    }

    /// The `n`-entity bracket `sum_x self(x) * other(x)` (counting measure).
    pub fn pair(&self, other: &SymTensor) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// Sum out the last `k` slots.
    pub fn marginalize_trailing(&self, k: usize) -> Result<SymTensor> {
        if k > self.arity {
            return Err(Error::ArityMismatch {
                expected: self.arity,
                found: k,
            });
        }
        let block = self.space.size().pow(k as u32);
        let data = self.data.chunks(block).map(|c| c.iter().sum()).collect();
        Ok(SymTensor {
            space: self.space,
            arity: self.arity - k,
            data,
        })
    }

    /// Tensor product `(self ⊗ other)(x, y) = self(x) other(y)`.
    pub fn outer(&self, other: &SymTensor) -> Result<SymTensor> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch);
        }
        let arity = self.arity + other.arity;
        let len = self.space.tensor_len(arity)?;
        let mut data = Vec::with_capacity(len);
        for a in &self.data {
            data.extend(other.data.iter().map(|b| a * b));
        }
        Ok(SymTensor {
            space: self.space,
            arity,
            data,
        })
    }

    /// `k`-fold tensor power of a one-entity function; arity 0 gives `1`.
    pub fn tensor_power(&self, k: usize) -> Result<SymTensor> {
        let mut out = SymTensor::scalar(self.space, 1.0);
        for _ in 0..k {
            out = out.outer(self)?;
        }
        Ok(out)
    }
}

/// Whether a graded sequence describes observables or states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SequenceKind {
    Observable,
    State,
}

/// A truncated family `(T_0, T_1, ..., T_nmax)` with `T_n` of arity `n`.
///
/// `T_0` is stored as an arity-0 tensor holding the scalar component.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedSequence {
    kind: SequenceKind,
    components: Vec<SymTensor>,
}

pub type MarginalObservables = GradedSequence;
pub type MarginalStates = GradedSequence;
pub type LimitMarginals = GradedSequence;
pub type FullObservables = GradedSequence;
pub type FullStates = GradedSequence;

impl GradedSequence {
    pub fn new(kind: SequenceKind, components: Vec<SymTensor>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::InvalidArgument("empty graded sequence".into()));
        };
        let space = first.space;
        for (n, c) in components.iter().enumerate() {
            if c.arity != n {
                return Err(Error::ArityMismatch {
                    expected: n,
                    found: c.arity,
                });
            }
            if c.space != space {
                return Err(Error::SpaceMismatch);
            }
        }
        Ok(Self { kind, components })
    }

    /// Build from a scalar and components of arity `1..=n_max`.
    pub fn from_parts(kind: SequenceKind, scalar: f64, rest: Vec<SymTensor>) -> Result<Self> {
        let space = rest
            .first()
            .map(|t| t.space)
            .ok_or_else(|| Error::InvalidArgument("graded sequence needs n_max >= 1".into()))?;
        let mut components = vec![SymTensor::scalar(space, scalar)];
        components.extend(rest);
        Self::new(kind, components)
    }

    pub fn zeros(space: StateSpace, kind: SequenceKind, max_arity: usize) -> Result<Self> {
        let components = (0..=max_arity)
            .map(|n| SymTensor::zeros(space, n))
            .collect::<Result<_>>()?;
        Ok(Self { kind, components })
    }

    pub fn kind(&self) -> SequenceKind {
        self.kind
    }

    pub fn space(&self) -> &StateSpace {
        &self.components[0].space
    }

    pub fn max_arity(&self) -> usize {
        self.components.len() - 1
    }

    pub fn scalar(&self) -> f64 {
        self.components[0].data[0]
    }

    pub fn component(&self, n: usize) -> Option<&SymTensor> {
        self.components.get(n)
    }

    /// Component `n`, or an out-of-range error naming the truncation.
    pub fn require(&self, n: usize) -> Result<&SymTensor> {
        self.components.get(n).ok_or_else(|| {
            Error::OutOfRange(format!(
                "component {n} of a sequence truncated at {}",
                self.max_arity()
            ))
        })
    }

    pub fn component_mut(&mut self, n: usize) -> Option<&mut SymTensor> {
        self.components.get_mut(n)
    }

    pub fn components(&self) -> &[SymTensor] {
        &self.components
    }

    /// Same sequence with components above `max_arity` dropped.
    pub fn truncated(&self, max_arity: usize) -> Self {
        Self {
            kind: self.kind,
            components: self.components[..=max_arity.min(self.max_arity())].to_vec(),
        }
    }

    pub fn axpy(&mut self, alpha: f64, other: &GradedSequence) -> Result<()> {
        if other.max_arity() != self.max_arity() {
            return Err(Error::ArityMismatch {
                expected: self.max_arity(),
                found: other.max_arity(),
            });
        }
        for (a, b) in self.components.iter_mut().zip(&other.components) {
            a.axpy(alpha, b)?;
        }
        Ok(())
    }

    /// `max_n max_x |self_n(x) - other_n(x)|`.
    pub fn max_abs_diff(&self, other: &GradedSequence) -> Result<f64> {
        if other.max_arity() != self.max_arity() {
            return Err(Error::ArityMismatch {
                expected: self.max_arity(),
                found: other.max_arity(),
            });
        }
        self.components
            .iter()
            .zip(&other.components)
            .try_fold(0.0f64, |m, (a, b)| Ok(m.max(a.max_abs_diff(b)?)))
    }

    /// The grand-canonical bracket `sum_n (1/n!) pair(self_n, other_n)` over
    /// the common truncation.
    pub fn bracket(&self, other: &GradedSequence) -> Result<f64> {
        let top = self.max_arity().min(other.max_arity());
        (0..=top).try_fold(0.0, |acc, n| {
            Ok(acc + self.components[n].pair(&other.components[n])? / factorial(n))
        })
    }
}
