//! The dual BBGKY hierarchy for marginal observables, its cumulant
//! expansion solution, and the BBGKY hierarchy for marginal states.
//!
//! The observable hierarchy is evaluated in the form
//!
//! ```text
//! d/dt B_s = Σ_T Σ_R ε^(|T|-1) Λ^[|T|](T) B_{s-|R|}(Y \ R)
//! ```
//!
//! with `T` an ordered tuple of distinct slots of `Y = (0..s)` and `R` any
//! subset of `T` not containing its first (jumping) slot. `R = ∅` gives
//! `Λ_s B_s`. Each ordered tuple and each subset carries weight one, which
//! is the expansion's own derivative; for interaction orders up to two it
//! coincides term by term with the factorial-weighted form.

use crate::combinatorics::{complement, factorial, ordered_tuples, subsets};
use crate::cumulants::{ClusterArgument, SemigroupFamily};
use crate::error::{Error, Result};
use crate::generators::{
    add_lambda_m, add_lambda_star_m, apply_lambda_star_n, interaction_tuples, InteractionTuple,
};
use crate::model::InteractionModel;
use crate::ode::rk4;
use crate::state_space::{
    GradedSequence, MarginalObservables, MarginalStates, SequenceKind, SymTensor,
};

/// Largest arity handled by [`solve_expansion`].
pub const MAX_EXPANSION_ARITY: usize = 4;

/// Lower bound accepted on entries of truncated marginal states.
pub const STATE_NEGATIVITY_TOL: f64 = 1e-8;

fn check_kind(seq: &GradedSequence, kind: SequenceKind) -> Result<()> {
    if seq.kind() != kind {
        return Err(Error::InvalidArgument(format!(
            "expected a {kind:?} sequence, got {:?}",
            seq.kind()
        )));
    }
    Ok(())
}

fn check_space(model: &InteractionModel, seq: &GradedSequence) -> Result<()> {
    if seq.space() != model.space() {
        return Err(Error::SpaceMismatch);
    }
    Ok(())
}

/// Right-hand side of the dual BBGKY hierarchy for component `s >= 1`.
pub fn dual_bbgky_rhs(
    model: &InteractionModel,
    b: &MarginalObservables,
    s: usize,
) -> Result<SymTensor> {
    check_space(model, b)?;
    if s == 0 {
        return Err(Error::OutOfRange("the hierarchy starts at s = 1".into()));
    }
    b.require(s)?;
    let all: Vec<usize> = (0..s).collect();
    let mut out = SymTensor::zeros(*model.space(), s)?;
    for m in 1..=model.max_order().min(s) {
        let w = model.epsilon().powi(m as i32 - 1);
        if w == 0.0 {
            continue;
        }
        for tuple in interaction_tuples(s, m) {
            for removed in subsets(&tuple.slots()[1..]) {
                let keep = complement(&all, &removed);
                let arg = b.require(keep.len())?.embed(&keep, s)?;
                add_lambda_m(model, &tuple, w, &arg, &mut out)?;
            }
        }
    }
    Ok(out)
}

fn dual_bbgky_field(model: &InteractionModel, b: &MarginalObservables) -> Result<GradedSequence> {
    let mut comps = vec![SymTensor::scalar(*model.space(), 0.0)];
    for s in 1..=b.max_arity() {
        comps.push(dual_bbgky_rhs(model, b, s)?);
    }
    GradedSequence::new(SequenceKind::Observable, comps)
}

/// `B(t)` from the cumulant expansion
/// `B_s(t) = Σ_{Z ⊆ Y} A_{1+|Z|}(t, {Y\Z}, Z) B^0_{s-|Z|}(Y \ Z)`.
///
/// Summing over subsets is the same as the ordered sum over `(j_1..j_n)`
/// with weight `1/n!`, since the cumulant is symmetric in `Z`.
pub fn solve_expansion(
    model: &InteractionModel,
    b0: &MarginalObservables,
    t: f64,
) -> Result<MarginalObservables> {
    check_space(model, b0)?;
    check_kind(b0, SequenceKind::Observable)?;
    let smax = b0.max_arity();
    if smax > MAX_EXPANSION_ARITY {
        return Err(Error::OutOfRange(format!(
            "expansion supports s_max <= {MAX_EXPANSION_ARITY}, got {smax}"
        )));
    }
    if smax == 0 {
        return Ok(b0.clone());
    }
    let family = SemigroupFamily::new(model, t, smax)?;
    let mut comps = vec![b0.require(0)?.clone()];
    for s in 1..=smax {
        let all: Vec<usize> = (0..s).collect();
        let mut out = SymTensor::zeros(*model.space(), s)?;
        for z in subsets(&all) {
            let keep = complement(&all, &z);
            let arg = ClusterArgument::new(s, &z)?;
            let data = b0.require(keep.len())?.embed(&keep, s)?;
            out.axpy(1.0, &family.apply_cumulant(&arg, &data)?)?;
        }
        comps.push(out);
    }
    GradedSequence::new(SequenceKind::Observable, comps)
}

/// `B(t)` by RK4 on the whole truncated hierarchy.
pub fn integrate_dual_bbgky(
    model: &InteractionModel,
    b0: &MarginalObservables,
    t: f64,
    dt: f64,
) -> Result<MarginalObservables> {
    check_space(model, b0)?;
    check_kind(b0, SequenceKind::Observable)?;
    let out = rk4(b0, t, dt, |b| dual_bbgky_field(model, b))?;
    if out.components().iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("dual hierarchy solution".into()));
    }
    Ok(out)
}

/// Right-hand side of the BBGKY hierarchy for marginal states, with
/// `F_{s+n} = 0` beyond the truncation of `f`.
///
/// ```text
/// Λ*_s F_s + Σ_{I ⊆ Y, |I| = k} Σ_n ε^(k+n-1)/n!
///     Σ_{u_{s+1}..u_{s+n}} Σ_T Λ*^[k+n](T) F_{s+n}
/// ```
///
/// where `T` runs over orderings of `I ∪ {s+1..s+n}`.
pub fn bbgky_states_rhs(
    model: &InteractionModel,
    f: &MarginalStates,
    s: usize,
) -> Result<SymTensor> {
    check_space(model, f)?;
    if s == 0 {
        return Err(Error::OutOfRange("the hierarchy starts at s = 1".into()));
    }
    let mut out = apply_lambda_star_n(model, f.require(s)?)?;
    let all: Vec<usize> = (0..s).collect();
    for n in 1..model.max_order() {
        let Some(big) = f.component(s + n) else {
            break;
        };
        let added: Vec<usize> = (s..s + n).collect();
        let mut acc = SymTensor::zeros(*model.space(), s + n)?;
        for k in 1..=s.min(model.max_order() - n) {
            let w = model.epsilon().powi((k + n - 1) as i32) / factorial(n);
            if w == 0.0 {
                continue;
            }
            for chosen in subsets(&all).into_iter().filter(|c| c.len() == k) {
                let slots: Vec<usize> = chosen.iter().chain(&added).copied().collect();
                for tuple in ordered_tuples(&slots, k + n) {
                    let tuple = InteractionTuple::new(tuple)?;
                    add_lambda_star_m(model, &tuple, w, big, &mut acc)?;
                }
            }
        }
        out.axpy(1.0, &acc.marginalize_trailing(n)?)?;
    }
    Ok(out)
}

fn bbgky_states_field(model: &InteractionModel, f: &MarginalStates) -> Result<GradedSequence> {
    let mut comps = vec![SymTensor::scalar(*model.space(), 0.0)];
    for s in 1..=f.max_arity() {
        comps.push(bbgky_states_rhs(model, f, s)?);
    }
    GradedSequence::new(SequenceKind::State, comps)
}

/// `F(t)` by RK4 on the truncated states hierarchy. Initial data must be
/// nonnegative; the result is checked against [`STATE_NEGATIVITY_TOL`].
pub fn integrate_bbgky_states(
    model: &InteractionModel,
    f0: &MarginalStates,
    t: f64,
    dt: f64,
) -> Result<MarginalStates> {
    check_space(model, f0)?;
    check_kind(f0, SequenceKind::State)?;
    if f0.components().iter().any(|c| c.min() < 0.0) {
        return Err(Error::InvalidArgument("initial marginal states must be nonnegative".into()));
    }
    let out = rk4(f0, t, dt, |f| bbgky_states_field(model, f))?;
    for (s, c) in out.components().iter().enumerate() {
        if !c.is_finite() {
            return Err(Error::NonFinite(format!("marginal state F_{s}")));
        }
        if c.min() < -STATE_NEGATIVITY_TOL {
            return Err(Error::Invariant(format!(
                "marginal state F_{s} reached {} at t={t}",
                c.min()
            )));
        }
    }
    Ok(out)
}

/// `|(B(t), F(0)) - (B(0), F(t))|` with `B(t)` from the expansion and
/// `F(t)` from the integrated states hierarchy.
pub fn duality_check(
    model: &InteractionModel,
    b0: &MarginalObservables,
    f0: &MarginalStates,
    t: f64,
    dt: f64,
) -> Result<f64> {
    if b0.max_arity() != f0.max_arity() {
        return Err(Error::ArityMismatch {
            expected: b0.max_arity(),
            found: f0.max_arity(),
        });
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let bt = solve_expansion(model, b0, t)?;
    let ft = integrate_bbgky_states(model, f0, t, dt)?;
    Ok((bt.bracket(f0)? - b0.bracket(&ft)?).abs())
}
