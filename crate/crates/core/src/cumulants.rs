//! Cumulants of semigroups over set partitions of cluster arguments.
//!
//! For `Y = (0..s)` and an ordered `Z = (j_1..j_n) ⊆ Y`, the cluster
//! argument has `1 + n` elements: the block `{Y \ Z}` followed by the
//! singletons of `Z`. The cumulant is
//!
//! ```text
//! A_{1+n}(t, {Y\Z}, Z) = Σ_P (-1)^(|P|-1) (|P|-1)! Π_{X ∈ P} e^{t Λ_{|θ(X)|}}
//! ```
//!
//! where `θ` declusterizes a block of elements into entity slots and each
//! factor acts on the slots `θ(X)` only. An empty `Y \ Z` contributes no
//! slots, so its factor is the identity.

use std::sync::OnceLock;

use crate::combinatorics::complement;
use crate::error::{Error, Result};
use crate::generators::{lambda_n, semigroup, LinOp, OpKind};
use crate::model::InteractionModel;
use crate::state_space::SymTensor;

/// Largest cluster size `1 + n` supported.
pub const MAX_CLUSTER: usize = 6;

/// A set partition of `0..k`; blocks sorted by their least element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// `(-1)^(|P|-1) (|P|-1)!`
    pub fn weight(&self) -> f64 {
        let p = self.blocks.len();
        let mag: f64 = (1..p).map(|k| k as f64).product();
        if p % 2 == 1 {
            mag
        } else {
            -mag
        }
    }
}

/// Bell numbers `B(0..=MAX_CLUSTER)` by the Bell triangle.
pub fn bell(k: usize) -> Result<usize> {
    if k > MAX_CLUSTER {
        return Err(Error::OutOfRange(format!("Bell({k}) beyond cluster cap {MAX_CLUSTER}")));
    }
    let mut row = vec![1usize];
    for _ in 0..k {
        let mut next = vec![*row.last().unwrap()];
        for &v in &row {
            let last = *next.last().unwrap();
            next.push(last + v);
        }
        row = next;
    }
    Ok(row[0])
}

fn enumerate(k: usize) -> Vec<Partition> {
    // Restricted-growth strings: rgs[0] = 0, rgs[i] <= 1 + max(rgs[..i]).
    let mut out = Vec::new();
    let mut rgs = vec![0usize; k];
    loop {
        let nblocks = rgs.iter().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); nblocks];
        for (i, &b) in rgs.iter().enumerate() {
            blocks[b].push(i);
        }
        out.push(Partition { blocks });

        let mut i = k;
        loop {
            if i <= 1 {
                return out;
            }
            i -= 1;
            let max_prefix = rgs[..i].iter().copied().max().unwrap_or(0);
            if rgs[i] <= max_prefix {
                rgs[i] += 1;
                for r in &mut rgs[i + 1..] {
                    *r = 0;
                }
                break;
            }
        }
    }
}

/// All set partitions of `k` labelled elements, `1 <= k <= MAX_CLUSTER`.
pub fn partitions(k: usize) -> Result<&'static [Partition]> {
    static CACHE: OnceLock<Vec<Vec<Partition>>> = OnceLock::new();
    if k == 0 || k > MAX_CLUSTER {
        return Err(Error::OutOfRange(format!(
            "partitions of {k} elements; supported range is 1..={MAX_CLUSTER}"
        )));
    }
    let cache = CACHE.get_or_init(|| (0..=MAX_CLUSTER).map(enumerate).collect());
    Ok(&cache[k])
}

/// The cluster argument `({Y \ Z}, j_1, ..., j_n)` over entity slots `0..s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterArgument {
    arity: usize,
    rest: Vec<usize>,
    singles: Vec<usize>,
}

impl ClusterArgument {
    pub fn new(s: usize, z: &[usize]) -> Result<Self> {
        for (i, &j) in z.iter().enumerate() {
            if j >= s {
                return Err(Error::OutOfRange(format!("slot {j} in arity {s}")));
            }
            if z[..i].contains(&j) {
                return Err(Error::InvalidArgument(format!("repeated slot {j} in {z:?}")));
            }
        }
        if z.len() + 1 > MAX_CLUSTER {
            return Err(Error::OutOfRange(format!(
                "cluster of {} elements exceeds {MAX_CLUSTER}",
                z.len() + 1
            )));
        }
        let all: Vec<usize> = (0..s).collect();
        Ok(Self {
            arity: s,
            rest: complement(&all, z),
            singles: z.to_vec(),
        })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Number of cluster elements, `1 + |Z|`.
    pub fn len(&self) -> usize {
        1 + self.singles.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Entity slots of element `e`: `Y \ Z` for `e = 0`, `{j_e}` otherwise.
    pub fn element(&self, e: usize) -> &[usize] {
        if e == 0 {
            &self.rest
        } else {
            std::slice::from_ref(&self.singles[e - 1])
        }
    }

    /// `θ`: the sorted union of entity slots of the given elements.
    pub fn declusterize(&self, elements: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = elements
            .iter()
            .flat_map(|&e| self.element(e).iter().copied())
            .collect();
        out.sort_unstable();
        out
    }
}

/// Semigroups `e^{tΛ_k}` for `k = 1..=max_arity` at one time `t`.
#[derive(Debug, Clone)]
pub struct SemigroupFamily {
    t: f64,
    ops: Vec<LinOp>,
}

impl SemigroupFamily {
    pub fn new(model: &InteractionModel, t: f64, max_arity: usize) -> Result<Self> {
        let ops = (1..=max_arity)
            .map(|k| semigroup(&lambda_n(model, k)?, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { t, ops })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn max_arity(&self) -> usize {
        self.ops.len()
    }

    /// `e^{tΛ_k}`.
    pub fn get(&self, k: usize) -> Result<&LinOp> {
        k.checked_sub(1)
            .and_then(|i| self.ops.get(i))
            .ok_or_else(|| Error::OutOfRange(format!("semigroup of arity {k} not prepared")))
    }

    /// `A_{1+n}(t, {Y\Z}, Z) b` without forming the cumulant matrix.
    pub fn apply_cumulant(&self, arg: &ClusterArgument, b: &SymTensor) -> Result<SymTensor> {
        if b.arity() != arg.arity() {
            return Err(Error::ArityMismatch {
                expected: arg.arity(),
                found: b.arity(),
            });
        }
        let mut out = SymTensor::zeros(*b.space(), b.arity())?;
        for p in partitions(arg.len())? {
            let mut term = b.clone();
            for block in p.blocks() {
                let slots = arg.declusterize(block);
                if !slots.is_empty() {
                    term = self.get(slots.len())?.apply_on_slots(&slots, &term)?;
                }
            }
            out.axpy(p.weight(), &term)?;
        }
        Ok(out)
    }

    /// The cumulant as a dense operator on `arg.arity()` entities.
    pub fn cumulant(&self, arg: &ClusterArgument) -> Result<LinOp> {
        let s = arg.arity();
        let space = *self.get(1)?.space();
        let mut out = LinOp::zeros(space, s, OpKind::Cumulant)?;
        for p in partitions(arg.len())? {
            let mut term = LinOp::identity(space, s)?;
            for block in p.blocks() {
                let slots = arg.declusterize(block);
                if !slots.is_empty() {
                    let factor = self.get(slots.len())?.lift(&slots, s)?;
                    term = factor.compose(&term)?;
                }
            }
            out.axpy(p.weight(), &term)?;
        }
        Ok(out)
    }
}

/// `A_{1+n}(t, {Y\Z}, Z)` on `s` entities, with `Z` given as 0-based slots.
pub fn cumulant(model: &InteractionModel, t: f64, s: usize, z: &[usize]) -> Result<LinOp> {
    let arg = ClusterArgument::new(s, z)?;
    SemigroupFamily::new(model, t, s)?.cumulant(&arg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{interaction_tuples, lambda_m};
    use crate::state_space::StateSpace;
    use std::collections::HashSet;

    fn model(name: &str, eps: f64) -> InteractionModel {
        InteractionModel::builtin(name, StateSpace::new(2, 2).unwrap(), eps).unwrap()
    }

    #[test]
    fn partition_counts_are_bell_numbers() {
        let expected = [1, 1, 2, 5, 15, 52, 203];
        for (k, &b) in expected.iter().enumerate() {
            assert_eq!(bell(k).unwrap(), b);
            if k >= 1 {
                assert_eq!(partitions(k).unwrap().len(), b);
            }
        }
        assert!(partitions(0).is_err());
        assert!(partitions(7).is_err());
    }

    #[test]
    fn partitions_are_distinct_covers() {
        for k in 1..=MAX_CLUSTER {
            let mut seen = HashSet::new();
            for p in partitions(k).unwrap() {
                let mut all: Vec<usize> = p.blocks().concat();
                all.sort_unstable();
                assert_eq!(all, (0..k).collect::<Vec<_>>());
                assert!(p.blocks().iter().all(|b| !b.is_empty()));
                assert!(seen.insert(p.blocks().to_vec()));
            }
        }
    }

    // Brute force: every map 0..k -> labels, canonicalized.
    #[test]
    fn four_element_partitions_match_brute_force() {
        let k: usize = 4;
        let mut canon = HashSet::new();
        for code in 0..k.pow(k as u32) {
            let labels: Vec<usize> = (0..k).map(|i| (code / k.pow(i as u32)) % k).collect();
            let mut blocks: Vec<Vec<usize>> = Vec::new();
            for l in 0..k {
                let b: Vec<usize> = (0..k).filter(|&i| labels[i] == l).collect();
                if !b.is_empty() {
                    blocks.push(b);
                }
            }
            blocks.sort();
            canon.insert(blocks);
        }
        assert_eq!(canon.len(), 15);
        let ours: HashSet<Vec<Vec<usize>>> = partitions(4)
            .unwrap()
            .iter()
            .map(|p| p.blocks().to_vec())
            .collect();
        assert_eq!(ours, canon);
    }

    #[test]
    fn alternating_weights_cancel() {
        for k in 2..=MAX_CLUSTER {
            let total: f64 = partitions(k).unwrap().iter().map(Partition::weight).sum();
            assert_eq!(total, 0.0);
        }
        let single: f64 = partitions(1).unwrap().iter().map(Partition::weight).sum();
        assert_eq!(single, 1.0);
    }

    #[test]
    fn declusterization() {
        let arg = ClusterArgument::new(3, &[2]).unwrap();
        assert_eq!(arg.declusterize(&[0, 1]), vec![0, 1, 2]);
        assert_eq!(arg.declusterize(&[1]), vec![2]);
        assert_eq!(arg.declusterize(&[0]), vec![0, 1]);
        let full = ClusterArgument::new(2, &[0, 1]).unwrap();
        assert!(full.element(0).is_empty());
        assert!(ClusterArgument::new(2, &[2]).is_err());
        assert!(ClusterArgument::new(3, &[1, 1]).is_err());
    }

    #[test]
    fn first_cumulant_is_the_semigroup() {
        let m = model("imitation", 0.3);
        for s in 1..=3 {
            let a1 = cumulant(&m, 0.7, s, &[]).unwrap();
            let g = semigroup(&lambda_n(&m, s).unwrap(), 0.7).unwrap();
            assert!(a1.max_abs_diff(&g).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn second_cumulant_two_term_form() {
        let m = model("mixed", 0.4);
        let t = 0.6;
        let a2 = cumulant(&m, t, 2, &[1]).unwrap();
        let mut want = semigroup(&lambda_n(&m, 2).unwrap(), t).unwrap();
        let first = |slot| {
            let tuple = &interaction_tuples(2, 1)[slot];
            semigroup(&lambda_m(&m, 2, tuple).unwrap(), t).unwrap()
        };
        let product = first(0).compose(&first(1)).unwrap();
        want.axpy(-1.0, &product).unwrap();
        assert!(a2.max_abs_diff(&want).unwrap() <= 1e-10);
    }

    #[test]
    fn higher_cumulants_vanish_at_time_zero() {
        let m = model("mixed", 0.4);
        for n in 1..=3 {
            let z: Vec<usize> = (0..n).collect();
            let a = cumulant(&m, 0.0, 3, &z).unwrap();
            assert!(a.max_abs() <= 1e-12);
        }
        let a1 = cumulant(&m, 0.0, 2, &[]).unwrap();
        let id = LinOp::identity(*m.space(), 2).unwrap();
        assert_eq!(a1.max_abs_diff(&id).unwrap(), 0.0);
    }

    #[test]
    fn second_cumulant_is_first_order_in_epsilon() {
        let norm = |eps| cumulant(&model("imitation", eps), 1.0, 2, &[1]).unwrap().max_abs();
        let ratio = norm(0.1) / norm(0.05);
        assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn matrix_free_cumulant_matches_dense() {
        let m = model("mixed", 0.3);
        let fam = SemigroupFamily::new(&m, 0.5, 3).unwrap();
        let b = SymTensor::from_fn(*m.space(), 3, |x| (x[0] + 2 * x[1] + 3 * x[2]) as f64 * 0.1)
            .unwrap();
        for z in [vec![], vec![2], vec![0, 2], vec![2, 0, 1]] {
            let arg = ClusterArgument::new(3, &z).unwrap();
            let dense = fam.cumulant(&arg).unwrap().apply(&b).unwrap();
            let free = fam.apply_cumulant(&arg, &b).unwrap();
            assert!(dense.max_abs_diff(&free).unwrap() < 1e-13);
        }
    }
}
