//! Grand-canonical mean values and the transforms between full and
//! marginal sequences.

use crate::combinatorics::{complement, factorial, subsets};
use crate::error::{Error, Result};
use crate::generators::{lambda_n, lambda_star_n, semigroup};
use crate::model::InteractionModel;
use crate::state_space::{
    FullObservables, FullStates, GradedSequence, MarginalObservables, MarginalStates,
    SequenceKind, SymTensor,
};

/// Default truncation of grand-canonical sums.
pub const DEFAULT_NMAX: usize = 4;

/// `(I, D) = Σ_n (1/n!) Σ_x D_n(x)`.
pub fn normalization(d: &FullStates) -> f64 {
    d.components()
        .iter()
        .enumerate()
        .map(|(n, c)| c.sum() / factorial(n))
        .sum()
}

fn checked_normalization(d: &FullStates) -> Result<f64> {
    let z = normalization(d);
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::InvalidArgument(format!("state normalization is {z}")));
    }
    Ok(z)
}

/// `<O> = (I, D)^{-1} Σ_n (1/n!) (O_n, D_n)` over the common truncation.
pub fn mean_value(o: &FullObservables, d: &FullStates) -> Result<f64> {
    if o.space() != d.space() {
        return Err(Error::SpaceMismatch);
    }
    Ok(o.bracket(d)? / checked_normalization(d)?)
}

/// `F_s = (I, D)^{-1} Σ_{n=0}^{n_max-s} (1/n!) Σ_{u_{s+1}..u_{s+n}} D_{s+n}`.
pub fn marginals_from_full(d: &FullStates, s_max: usize) -> Result<MarginalStates> {
    if s_max > d.max_arity() {
        return Err(Error::OutOfRange(format!(
            "s_max={s_max} above the state truncation {}",
            d.max_arity()
        )));
    }
    let z = checked_normalization(d)?;
    let mut comps = Vec::with_capacity(s_max + 1);
    for s in 0..=s_max {
        let mut f = SymTensor::zeros(*d.space(), s)?;
        for n in 0..=d.max_arity() - s {
            f.axpy(1.0 / factorial(n), &d.require(s + n)?.marginalize_trailing(n)?)?;
        }
        f.scale(1.0 / z);
        comps.push(f);
    }
    GradedSequence::new(SequenceKind::State, comps)
}

/// `B_s = Σ_{Z ⊆ Y} (-1)^{|Z|} O_{s-|Z|}(Y \ Z)`, the subset form of the
/// ordered alternating sum with `1/n!`.
pub fn marginal_obs_from_obs(o: &FullObservables, s_max: usize) -> Result<MarginalObservables> {
    o.require(s_max)?;
    let mut comps = Vec::with_capacity(s_max + 1);
    for s in 0..=s_max {
        let all: Vec<usize> = (0..s).collect();
        let mut b = SymTensor::zeros(*o.space(), s)?;
        for z in subsets(&all) {
            let keep = complement(&all, &z);
            let sign = if z.len() % 2 == 0 { 1.0 } else { -1.0 };
            b.axpy(sign, &o.require(keep.len())?.embed(&keep, s)?)?;
        }
        comps.push(b);
    }
    GradedSequence::new(SequenceKind::Observable, comps)
}

/// Componentwise `O_n(t) = e^{tΛ_n} O_n`.
pub fn evolve_observables(
    model: &InteractionModel,
    o: &FullObservables,
    t: f64,
) -> Result<FullObservables> {
    let mut comps = vec![o.require(0)?.clone()];
    for n in 1..=o.max_arity() {
        comps.push(semigroup(&lambda_n(model, n)?, t)?.apply(o.require(n)?)?);
    }
    GradedSequence::new(o.kind(), comps)
}

/// Componentwise `D_n(t) = e^{tΛ*_n} D_n`.
pub fn evolve_states(model: &InteractionModel, d: &FullStates, t: f64) -> Result<FullStates> {
    let mut comps = vec![d.require(0)?.clone()];
    for n in 1..=d.max_arity() {
        comps.push(semigroup(&lambda_star_n(model, n)?, t)?.apply(d.require(n)?)?);
    }
    GradedSequence::new(d.kind(), comps)
}

/// `|<O(t)>_{D(0)} - <O(0)>_{D(t)}|` with independently built exponentials
/// of `Λ_n` and `Λ*_n`.
pub fn duality_full(
    model: &InteractionModel,
    o0: &FullObservables,
    d0: &FullStates,
    t: f64,
) -> Result<f64> {
    let ot = evolve_observables(model, o0, t)?;
    let dt = evolve_states(model, d0, t)?;
    Ok((mean_value(&ot, d0)? - mean_value(o0, &dt)?).abs())
}

/// `|Σ_{s<=s_max} (1/s!) (B_s, F_s) - <O>_D|` with `B` from `O` and `F`
/// from `D`. The mean value uses the full truncations of `O` and `D`, so
/// the residual is the tail dropped by cutting the marginals at `s_max`.
pub fn consistency_residual(o: &FullObservables, d: &FullStates, s_max: usize) -> Result<f64> {
    let b = marginal_obs_from_obs(o, s_max)?;
    let f = marginals_from_full(d, s_max)?;
    Ok((b.bracket(&f)? - mean_value(o, d)?).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BUILTIN_NAMES;
    use crate::state_space::StateSpace;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space() -> StateSpace {
        StateSpace::new(2, 2).unwrap()
    }

    fn random_seq(kind: SequenceKind, nmax: usize, lo: f64, seed: u64) -> GradedSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rest = (1..=nmax)
            .map(|n| {
                SymTensor::from_fn(space(), n, |_| rng.random_range(lo..1.0))
                    .unwrap()
                    .symmetrize()
            })
            .collect();
        GradedSequence::from_parts(kind, 1.0, rest).unwrap()
    }

    fn constant_obs(nmax: usize, c: f64) -> FullObservables {
        GradedSequence::from_parts(
            SequenceKind::Observable,
            c,
            (1..=nmax).map(|n| SymTensor::constant(space(), n, c).unwrap()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn mean_of_unit_observable_is_one() {
        let d = random_seq(SequenceKind::State, 3, 0.0, 1);
        assert!((mean_value(&constant_obs(3, 1.0), &d).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn vacuum_state_reads_the_scalar() {
        let o = random_seq(SequenceKind::Observable, 3, -1.0, 2);
        let mut d = GradedSequence::zeros(space(), SequenceKind::State, 3).unwrap();
        d.component_mut(0).unwrap().as_mut_slice()[0] = 1.0;
        assert_eq!(mean_value(&o, &d).unwrap(), o.scalar());
        let empty = GradedSequence::zeros(space(), SequenceKind::State, 3).unwrap();
        assert!(mean_value(&o, &empty).is_err());
    }

    #[test]
    fn mean_value_by_direct_sums() {
        let o = random_seq(SequenceKind::Observable, 3, -1.0, 3);
        let d = random_seq(SequenceKind::State, 3, 0.0, 4);
        let s = 4;
        let (mut num, mut den) = (o.scalar() * d.scalar(), d.scalar());
        for x in 0..s {
            num += o.require(1).unwrap().get(&[x]) * d.require(1).unwrap().get(&[x]);
            den += d.require(1).unwrap().get(&[x]);
            for y in 0..s {
                num += o.require(2).unwrap().get(&[x, y]) * d.require(2).unwrap().get(&[x, y]) / 2.0;
                den += d.require(2).unwrap().get(&[x, y]) / 2.0;
                for z in 0..s {
                    let (ov, dv) = (o.require(3).unwrap().get(&[x, y, z]), d.require(3).unwrap().get(&[x, y, z]));
                    num += ov * dv / 6.0;
                    den += dv / 6.0;
                }
            }
        }
        assert!((mean_value(&o, &d).unwrap() - num / den).abs() < 1e-13);
    }

    #[test]
    fn marginals_of_one_entity_state() {
        let dvec = vec![0.1, 0.2, 0.3, 0.15];
        let d = GradedSequence::from_parts(
            SequenceKind::State,
            1.0,
            vec![
                SymTensor::from_vec(space(), 1, dvec.clone()).unwrap(),
                SymTensor::zeros(space(), 2).unwrap(),
            ],
        )
        .unwrap();
        let f = marginals_from_full(&d, 2).unwrap();
        let total: f64 = 1.0 + dvec.iter().sum::<f64>();
        for x in 0..4 {
            assert!((f.require(1).unwrap().get(&[x]) - dvec[x] / total).abs() < 1e-16);
        }
        assert_eq!(f.require(2).unwrap().max_abs(), 0.0);
        assert!((f.scalar() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn marginals_are_equivariant_and_linear() {
        let d = random_seq(SequenceKind::State, 3, 0.0, 5);
        let perm = [2usize, 0, 3, 1];
        let relabel = |seq: &GradedSequence| {
            let comps = seq
                .components()
                .iter()
                .map(|c| {
                    SymTensor::from_fn(space(), c.arity(), |x| {
                        let y: Vec<usize> = x.iter().map(|&v| perm[v]).collect();
                        c.get(&y)
                    })
                    .unwrap()
                })
                .collect();
            GradedSequence::new(seq.kind(), comps).unwrap()
        };
        let a = marginals_from_full(&relabel(&d), 2).unwrap();
        let b = relabel(&marginals_from_full(&d, 2).unwrap());
        assert!(a.max_abs_diff(&b).unwrap() < 1e-15);

        let o1 = random_seq(SequenceKind::Observable, 3, -1.0, 6);
        let o2 = random_seq(SequenceKind::Observable, 3, -1.0, 7);
        let mut sum = o1.clone();
        sum.axpy(2.5, &o2).unwrap();
        let mut want = marginal_obs_from_obs(&o1, 3).unwrap();
        want.axpy(2.5, &marginal_obs_from_obs(&o2, 3).unwrap()).unwrap();
        assert!(marginal_obs_from_obs(&sum, 3).unwrap().max_abs_diff(&want).unwrap() < 1e-14);
    }

    #[test]
    fn first_marginal_observable() {
        let o = random_seq(SequenceKind::Observable, 2, -1.0, 8);
        let b = marginal_obs_from_obs(&o, 2).unwrap();
        for x in 0..4 {
            let want = o.require(1).unwrap().get(&[x]) - o.scalar();
            assert!((b.require(1).unwrap().get(&[x]) - want).abs() < 1e-16);
        }
        let zero = GradedSequence::zeros(space(), SequenceKind::Observable, 3).unwrap();
        assert_eq!(marginal_obs_from_obs(&zero, 3).unwrap().max_abs_diff(&zero).unwrap(), 0.0);
    }

    #[test]
    fn additive_observable_has_only_first_marginal() {
        let o1 = SymTensor::from_vec(space(), 1, vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let comps = (0..=3)
            .map(|n| {
                SymTensor::from_fn(space(), n, |x| x.iter().map(|&v| o1.get(&[v])).sum()).unwrap()
            })
            .collect();
        let o = GradedSequence::new(SequenceKind::Observable, comps).unwrap();
        let b = marginal_obs_from_obs(&o, 3).unwrap();
        assert!(b.require(1).unwrap().max_abs_diff(&o1).unwrap() < 1e-15);
        assert!(b.require(2).unwrap().max_abs() < 1e-15);
        assert!(b.require(3).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn duality_of_componentwise_evolution() {
        for name in BUILTIN_NAMES {
            let m = InteractionModel::builtin(name, space(), 0.3).unwrap();
            let o = random_seq(SequenceKind::Observable, 3, -1.0, 9);
            let d = random_seq(SequenceKind::State, 3, 0.0, 10);
            assert_eq!(duality_full(&m, &o, &d, 0.0).unwrap(), 0.0);
            assert!(duality_full(&m, &o, &d, 0.7).unwrap() <= 1e-10);
            let c = constant_obs(3, 1.7);
            let dt = evolve_states(&m, &d, 1.3).unwrap();
            assert!((mean_value(&c, &dt).unwrap() - 1.7).abs() < 1e-12);
            assert!((normalization(&dt) - normalization(&d)).abs() < 1e-10);
        }
    }

    #[test]
    fn transforms_compose_with_mean_value() {
        let o = random_seq(SequenceKind::Observable, 4, -1.0, 11);
        let p = SymTensor::from_vec(space(), 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let state = |lambda: f64| {
            let comps = (1..=4)
                .map(|n| p.tensor_power(n).unwrap().scaled(lambda.powi(n as i32)))
                .collect();
            GradedSequence::from_parts(SequenceKind::State, 1.0, comps).unwrap()
        };
        // Untruncated marginals reproduce the mean value exactly.
        assert!(consistency_residual(&o, &state(0.5), 4).unwrap() < 1e-14);
        assert!(consistency_residual(&o, &state(0.01), 2).unwrap() <= 1e-6);
    }
}
