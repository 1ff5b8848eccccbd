//! Mean-field limit objects: the dual Vlasov hierarchy and its iterated
//! integral solution, the Vlasov equation for `f_1`, its series
//! representation, and the chaos functional identity.
//!
//! Limit equations keep interaction orders one and two only and carry no
//! `ε`. Models with `m_max > 2` are rejected by the limit routines except
//! [`vlasov_rhs_general`].

use crate::combinatorics::{complement, factorial, ordered_tuples};
use crate::error::{Error, Result};
use crate::generators::{
    add_lambda_m, add_lambda_star_m, lambda_m, lambda_star_m, semigroup, InteractionTuple, LinOp,
};
use crate::hierarchy::solve_expansion;
use crate::model::InteractionModel;
use crate::ode::rk4;
use crate::state_space::{GradedSequence, LimitMarginals, SequenceKind, SymTensor};

/// Deepest iterated integral evaluated by [`limit_expansion`] and
/// [`f1_series`].
pub const MAX_DEPTH: usize = 3;

/// Arity cap of [`limit_expansion`].
pub const MAX_LIMIT_ARITY: usize = 3;

/// Mass drift and negativity tolerance for Vlasov solutions.
pub const VLASOV_TOL: f64 = 1e-10;

/// Series terms below this max-norm end [`f1_series`] early.
pub const SERIES_CUTOFF: f64 = 1e-10;

/// Default Gauss–Legendre nodes per integration level.
pub const DEFAULT_NODES: usize = 16;

/// `f_1` at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct OneParticleDensity {
    pub density: SymTensor,
    pub time: f64,
}

impl OneParticleDensity {
    pub fn mass(&self) -> f64 {
        self.density.sum()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Nodes and weights for `∫_0^tau`.
fn scaled_rule(rule: &(Vec<f64>, Vec<f64>), tau: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
    rule.0
        .iter()
        .zip(&rule.1)
        .map(move |(x, w)| (0.5 * tau * (x + 1.0), 0.5 * tau * w))
}

fn check_pair_model(model: &InteractionModel) -> Result<()> {
    if model.max_order() > 2 {
        return Err(Error::InvalidArgument(format!(
            "limit equations use interaction orders <= 2; model has m_max={} (truncate it first)",
            model.max_order()
        )));
    }
    Ok(())
}

fn single(slot: usize) -> InteractionTuple {
    InteractionTuple::new(vec![slot]).expect("single slot")
}

fn pair(i: usize, j: usize) -> InteractionTuple {
    InteractionTuple::new(vec![i, j]).expect("distinct slots")
}

/// Right-hand side of the dual Vlasov hierarchy for component `s >= 1`:
/// `Σ_j Λ^[1](j) b_s + Σ_{j1 != j2} Λ^[2](j1, j2) b_{s-1}(Y \ j2)`.
pub fn dual_vlasov_rhs(model: &InteractionModel, b: &LimitMarginals, s: usize) -> Result<SymTensor> {
    check_pair_model(model)?;
    if b.space() != model.space() {
        return Err(Error::SpaceMismatch);
    }
    if s == 0 {
        return Err(Error::OutOfRange("the hierarchy starts at s = 1".into()));
    }
    let bs = b.require(s)?;
    let mut out = SymTensor::zeros(*model.space(), s)?;
    for j in 0..s {
        add_lambda_m(model, &single(j), 1.0, bs, &mut out)?;
    }
    if model.max_order() == 2 {
        let all: Vec<usize> = (0..s).collect();
        let lower = b.require(s - 1)?;
        for j2 in 0..s {
            let keep = complement(&all, &[j2]);
            let arg = lower.embed(&keep, s)?;
            for j1 in (0..s).filter(|&j| j != j2) {
                add_lambda_m(model, &pair(j1, j2), 1.0, &arg, &mut out)?;
            }
        }
    }
    Ok(out)
}

/// `b(t)` by RK4 on the dual Vlasov hierarchy.
pub fn integrate_dual_vlasov(
    model: &InteractionModel,
    b0: &LimitMarginals,
    t: f64,
    dt: f64,
) -> Result<LimitMarginals> {
    check_pair_model(model)?;
    rk4(b0, t, dt, |b| {
        let mut comps = vec![SymTensor::scalar(*model.space(), 0.0)];
        for s in 1..=b.max_arity() {
            comps.push(dual_vlasov_rhs(model, b, s)?);
        }
        GradedSequence::new(b.kind(), comps)
    })
}

struct LimitContext<'a> {
    model: &'a InteractionModel,
    b0: &'a LimitMarginals,
    one: LinOp,
    rule: (Vec<f64>, Vec<f64>),
    s: usize,
}

impl LimitContext<'_> {
    /// `e^{tau Σ_{i ∈ active} Λ^[1](i)} g`.
    fn flow(&self, tau: f64, active: &[usize], g: SymTensor) -> Result<SymTensor> {
        let op = semigroup(&self.one, tau)?;
        active.iter().try_fold(g, |acc, &i| op.apply_on_slots(&[i], &acc))
    }

    /// Depth-`d` term of the iterated expansion for the entities not in
    /// `removed`, as a function on all `s` slots.
    fn term(&self, d: usize, tau: f64, removed: &mut Vec<usize>) -> Result<SymTensor> {
        let all: Vec<usize> = (0..self.s).collect();
        let active = complement(&all, removed);
        if d == 0 {
            let data = self.b0.require(active.len())?.embed(&active, self.s)?;
            return self.flow(tau, &active, data);
        }
        let mut total = SymTensor::zeros(*self.model.space(), self.s)?;
        for (tau1, w) in scaled_rule(&self.rule, tau) {
            let mut inner = SymTensor::zeros(*self.model.space(), self.s)?;
            for &j in &active {
                removed.push(j);
                let g = self.term(d - 1, tau1, removed)?;
                removed.pop();
                for &i in active.iter().filter(|&&i| i != j) {
                    add_lambda_m(self.model, &pair(i, j), 1.0, &g, &mut inner)?;
                }
            }
            total.axpy(w, &self.flow(tau - tau1, &active, inner)?)?;
        }
        Ok(total)
    }
}

/// `b(t)` from the iterated time-ordered integrals
/// `b_s(t) = Σ_{n=0}^{s-1} ∫_0^t dt_1 ... ∫_0^{t_{n-1}} dt_n
///   e^{(t-t_1) F_Y} Σ Λ^[2](i_1, j_1) e^{(t_1-t_2) F_{Y\j_1}} ... b^0_{s-n}`
/// with nested Gauss–Legendre quadrature, `nodes` per level.
pub fn limit_expansion(
    model: &InteractionModel,
    b0: &LimitMarginals,
    t: f64,
    nodes: usize,
) -> Result<LimitMarginals> {
    check_pair_model(model)?;
    if b0.space() != model.space() {
        return Err(Error::SpaceMismatch);
    }
    if b0.max_arity() > MAX_LIMIT_ARITY {
        return Err(Error::OutOfRange(format!(
            "limit expansion supports s <= {MAX_LIMIT_ARITY}, got {}",
            b0.max_arity()
        )));
    }
    if nodes == 0 {
        return Err(Error::InvalidArgument("quadrature needs at least one node".into()));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidArgument(format!("time must be finite and >= 0, got {t}")));
    }
    let one = lambda_m(model, 1, &single(0))?;
    let rule = gauss_legendre(nodes);
    let mut comps = vec![b0.require(0)?.clone()];
    for s in 1..=b0.max_arity() {
        let ctx = LimitContext {
            model,
            b0,
            one: one.clone(),
            rule: rule.clone(),
            s,
        };
        let max_depth = if model.max_order() == 2 { s - 1 } else { 0 };
        let mut out = SymTensor::zeros(*model.space(), s)?;
        for d in 0..=max_depth {
            out.axpy(1.0, &ctx.term(d, t, &mut Vec::new())?)?;
        }
        comps.push(out);
    }
    GradedSequence::new(b0.kind(), comps)
}

/// One row of the scaling study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub error: f64,
}

/// For each `ε`: `max_s max_x |ε^{-s} B_s(t) - b_s(t)|` where `B` solves the
/// dual BBGKY hierarchy of `model` at that `ε` from `B^0_s = ε^s b^0_s`,
/// and `b` is the limit expansion.
pub fn mean_field_convergence(
    model: &InteractionModel,
    epsilons: &[f64],
    b0: &LimitMarginals,
    t: f64,
    nodes: usize,
) -> Result<Vec<ConvergenceRow>> {
    let limit = limit_expansion(model, b0, t, nodes)?;
    epsilons
        .iter()
        .map(|&eps| {
            if !eps.is_finite() || eps <= 0.0 {
                return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
            }
            let scaled: Vec<SymTensor> = b0
                .components()
                .iter()
                .enumerate()
                .map(|(s, c)| c.clone().scaled(eps.powi(s as i32)))
                .collect();
            let scaled = GradedSequence::new(SequenceKind::Observable, scaled)?;
            let bt = solve_expansion(&model.with_epsilon(eps), &scaled, t)?;
            let mut error = 0.0f64;
            for s in 1..=b0.max_arity() {
                let rescaled = bt.require(s)?.clone().scaled(eps.powi(-(s as i32)));
                error = error.max(rescaled.max_abs_diff(limit.require(s)?)?);
            }
            Ok(ConvergenceRow { epsilon: eps, error })
        })
        .collect()
}

fn check_density(model: &InteractionModel, f: &SymTensor) -> Result<()> {
    if f.space() != model.space() {
        return Err(Error::SpaceMismatch);
    }
    if f.arity() != 1 {
        return Err(Error::ArityMismatch {
            expected: 1,
            found: f.arity(),
        });
    }
    Ok(())
}

/// `Λ*^[1] f + Σ_{u_2} Λ*^[2](1, 2) f ⊗ f`.
pub fn vlasov_rhs(model: &InteractionModel, f: &SymTensor) -> Result<SymTensor> {
    check_pair_model(model)?;
    check_density(model, f)?;
    let mut out = SymTensor::zeros(*model.space(), 1)?;
    add_lambda_star_m(model, &single(0), 1.0, f, &mut out)?;
    if model.max_order() == 2 {
        let ff = f.outer(f)?;
        let mut acc = SymTensor::zeros(*model.space(), 2)?;
        add_lambda_star_m(model, &pair(0, 1), 1.0, &ff, &mut acc)?;
        out.axpy(1.0, &acc.marginalize_trailing(1)?)?;
    }
    Ok(out)
}

/// The general-order kinetic equation
/// `Λ*^[1] f + Σ_{n=1}^{m_max-1} (1/n!) Σ_{u_2..u_{n+1}} Σ_T Λ*^[n+1](T) f^{⊗(n+1)}`,
/// with `T` over all orderings of the `n+1` slots. Orderings whose jumping
/// slot is summed out contribute nothing, so at `m_max = 2` this is
/// [`vlasov_rhs`].
pub fn vlasov_rhs_general(model: &InteractionModel, f: &SymTensor) -> Result<SymTensor> {
    check_density(model, f)?;
    let mut out = SymTensor::zeros(*model.space(), 1)?;
    add_lambda_star_m(model, &single(0), 1.0, f, &mut out)?;
    for n in 1..model.max_order() {
        let product = f.tensor_power(n + 1)?;
        let slots: Vec<usize> = (0..=n).collect();
        let mut acc = SymTensor::zeros(*model.space(), n + 1)?;
        for tuple in ordered_tuples(&slots, n + 1) {
            let tuple = InteractionTuple::new(tuple)?;
            add_lambda_star_m(model, &tuple, 1.0 / factorial(n), &product, &mut acc)?;
        }
        out.axpy(1.0, &acc.marginalize_trailing(n)?)?;
    }
    Ok(out)
}

fn vlasov_field(model: &InteractionModel, f: &SymTensor) -> Result<SymTensor> {
    if model.max_order() <= 2 {
        vlasov_rhs(model, f)
    } else {
        vlasov_rhs_general(model, f)
    }
}

/// Solve the Vlasov equation by RK4. The initial density must be
/// nonnegative; mass drift and negativity beyond [`VLASOV_TOL`] are
/// reported as invariant violations.
pub fn integrate_vlasov(
    model: &InteractionModel,
    f0: &SymTensor,
    t: f64,
    dt: f64,
) -> Result<OneParticleDensity> {
    check_density(model, f0)?;
    if !f0.is_finite() || f0.min() < 0.0 {
        return Err(Error::InvalidArgument("initial density must be finite and nonnegative".into()));
    }
    let f = rk4(f0, t, dt, |f| vlasov_field(model, f))?;
    if !f.is_finite() {
        return Err(Error::NonFinite("Vlasov solution".into()));
    }
    let drift = (f.sum() - f0.sum()).abs();
    if drift > VLASOV_TOL {
        return Err(Error::Invariant(format!("Vlasov mass drifted by {drift:e}")));
    }
    if f.min() < -VLASOV_TOL {
        return Err(Error::Invariant(format!("Vlasov density reached {}", f.min())));
    }
    Ok(OneParticleDensity { density: f, time: t })
}

/// Truncated series for `f_1(t)` and its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesResult {
    pub density: OneParticleDensity,
    /// Max-norm of each evaluated term.
    pub term_norms: Vec<f64>,
    /// Set when some term is larger than its predecessor.
    pub growing: bool,
}

struct SeriesContext<'a> {
    model: &'a InteractionModel,
    f0: &'a SymTensor,
    one: LinOp,
    rule: (Vec<f64>, Vec<f64>),
}

impl SeriesContext<'_> {
    fn flow(&self, tau: f64, g: SymTensor) -> Result<SymTensor> {
        let op = semigroup(&self.one, tau)?;
        (0..g.arity()).try_fold(g, |acc, i| op.apply_on_slots(&[i], &acc))
    }

    /// Depth-`d` contribution to the `a`-entity factorized marginal.
    fn term(&self, d: usize, a: usize, tau: f64) -> Result<SymTensor> {
        if d == 0 {
            let free = self.flow(tau, self.f0.clone())?;
            return free.tensor_power(a);
        }
        let mut total = SymTensor::zeros(*self.model.space(), a)?;
        for (tau1, w) in scaled_rule(&self.rule, tau) {
            let next = self.term(d - 1, a + 1, tau1)?;
            let mut acc = SymTensor::zeros(*self.model.space(), a + 1)?;
            for i in 0..a {
                add_lambda_star_m(self.model, &pair(i, a), 1.0, &next, &mut acc)?;
            }
            let contracted = acc.marginalize_trailing(1)?;
            total.axpy(w, &self.flow(tau - tau1, contracted)?)?;
        }
        Ok(total)
    }
}

/// `f_1(t) ≈ Σ_{n=0}^{n_max} ∫_0^t dt_1 ... ∫_0^{t_{n-1}} dt_n
///   Σ_{u_2..u_{n+1}} e^{(t-t_1)Λ*^[1]} Λ*^[2](1, 2) ... Π f_1^0`,
/// stopping early once a term falls below [`SERIES_CUTOFF`].
pub fn f1_series(
    model: &InteractionModel,
    f0: &SymTensor,
    t: f64,
    n_max: usize,
    nodes: usize,
) -> Result<SeriesResult> {
    check_pair_model(model)?;
    check_density(model, f0)?;
    if n_max > MAX_DEPTH {
        return Err(Error::OutOfRange(format!("series depth {n_max} exceeds {MAX_DEPTH}")));
    }
    if nodes == 0 {
        return Err(Error::InvalidArgument("quadrature needs at least one node".into()));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidArgument(format!("time must be finite and >= 0, got {t}")));
    }
    let ctx = SeriesContext {
        model,
        f0,
        one: lambda_star_m(model, 1, &single(0))?,
        rule: gauss_legendre(nodes),
    };
    let mut sum = SymTensor::zeros(*model.space(), 1)?;
    let mut term_norms = Vec::new();
    let depth = if model.max_order() == 2 { n_max } else { 0 };
    for n in 0..=depth {
        let term = ctx.term(n, 1, t)?;
        sum.axpy(1.0, &term)?;
        term_norms.push(term.max_abs());
        if n > 0 && term.max_abs() < SERIES_CUTOFF {
            break;
        }
    }
    let growing = term_norms.windows(2).any(|w| w[1] > w[0]);
    Ok(SeriesResult {
        density: OneParticleDensity { density: sum, time: t },
        term_norms,
        growing,
    })
}

/// Both sides of the chaos identity for a `k`-ary initial observable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChaosComparison {
    /// `Σ_{s<=s_max} (1/s!) (b_s(t), (f_1^0)^{⊗s})`.
    pub lhs: f64,
    /// `(1/k!) (b_k^0, f_1(t)^{⊗k})`.
    pub rhs: f64,
}

impl ChaosComparison {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

/// Compare the limit observable functional over the chaotic state
/// `(1, f_1^0, f_1^0 ⊗ f_1^0, ...)` with the `k`-fold product of the
/// Vlasov solution. `b0_k` is the only nonzero initial component.
pub fn chaos_functional(
    model: &InteractionModel,
    b0_k: &SymTensor,
    f0: &SymTensor,
    t: f64,
    s_max: usize,
    dt: f64,
) -> Result<ChaosComparison> {
    check_pair_model(model)?;
    check_density(model, f0)?;
    let k = b0_k.arity();
    if k == 0 || k > s_max {
        return Err(Error::OutOfRange(format!("need 1 <= k <= s_max, got k={k}, s_max={s_max}")));
    }
    let mut b0 = GradedSequence::zeros(*model.space(), SequenceKind::Observable, s_max)?;
    *b0.component_mut(k).expect("k <= s_max") = b0_k.clone();
    let bt = integrate_dual_vlasov(model, &b0, t, dt)?;
    let mut lhs = 0.0;
    for s in k..=s_max {
        lhs += bt.require(s)?.pair(&f0.tensor_power(s)?)? / factorial(s);
    }
    let ft = integrate_vlasov(model, f0, t, dt)?;
    let rhs = b0_k.pair(&ft.density.tensor_power(k)?)? / factorial(k);
    Ok(ChaosComparison { lhs, rhs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::apply_lambda_m;
    use crate::state_space::StateSpace;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space() -> StateSpace {
        StateSpace::new(2, 2).unwrap()
    }

    fn model(name: &str) -> InteractionModel {
        InteractionModel::builtin(name, space(), 0.1).unwrap()
    }

    /// Imitation where a pair interaction moves the first entity to the
    /// partner's state with probability 0.6 and to the next state otherwise.
    fn skewed() -> InteractionModel {
        InteractionModel::from_fn(
            space(),
            0.1,
            2,
            |m, x| if m == 1 { 0.5 } else { 0.4 + 0.2 * x[1] as f64 },
            |m, v, x| {
                if m == 1 {
                    0.25
                } else {
                    0.6 * f64::from(v == x[1]) + 0.4 * f64::from(v == (x[1] + 1) % 4)
                }
            },
        )
        .unwrap()
    }

    fn random_limit(smax: usize, seed: u64) -> LimitMarginals {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rest = (1..=smax)
            .map(|n| {
                SymTensor::from_fn(space(), n, |_| rng.random_range(-1.0..1.0))
                    .unwrap()
                    .symmetrize()
            })
            .collect();
        GradedSequence::from_parts(SequenceKind::Observable, 0.5, rest).unwrap()
    }

    fn f0() -> SymTensor {
        SymTensor::from_vec(space(), 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(16);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        for deg in 0..32 {
            let quad: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((quad - exact).abs() < 1e-14, "degree {deg}");
        }
        let (x3, _) = gauss_legendre(3);
        assert!((x3[2] - 0.6f64.sqrt()).abs() < 1e-15);
        assert_eq!(x3[1], 0.0);
    }

    #[test]
    fn dual_vlasov_first_component_and_constants() {
        let m = model("imitation");
        let b = random_limit(2, 1);
        let r = dual_vlasov_rhs(&m, &b, 1).unwrap();
        let want = apply_lambda_m(&m, &single(0), b.require(1).unwrap()).unwrap();
        assert!(r.max_abs_diff(&want).unwrap() < 1e-15);
        let c = GradedSequence::from_parts(
            SequenceKind::Observable,
            1.0,
            (1..=3).map(|n| SymTensor::constant(space(), n, 2.0).unwrap()).collect(),
        )
        .unwrap();
        for s in 1..=3 {
            assert!(dual_vlasov_rhs(&m, &c, s).unwrap().max_abs() < 1e-14);
        }
    }

    #[test]
    fn dual_vlasov_second_component_by_loops() {
        let m = skewed();
        let b = random_limit(2, 2);
        let r = dual_vlasov_rhs(&m, &b, 2).unwrap();
        let (b1, b2) = (b.require(1).unwrap(), b.require(2).unwrap());
        let s = 4;
        for x in 0..s {
            for y in 0..s {
                let mut want = 0.0;
                // Λ^[1](1), Λ^[1](2) on b_2
                for v in 0..s {
                    want += m.rate(1, &[x]) * m.kernel(1, v, &[x]) * b2.get(&[v, y]);
                    want += m.rate(1, &[y]) * m.kernel(1, v, &[y]) * b2.get(&[x, v]);
                }
                want -= (m.rate(1, &[x]) + m.rate(1, &[y])) * b2.get(&[x, y]);
                // Λ^[2](1,2) b_1(u_1) and Λ^[2](2,1) b_1(u_2)
                for v in 0..s {
                    want += m.rate(2, &[x, y]) * m.kernel(2, v, &[x, y]) * b1.get(&[v]);
                    want += m.rate(2, &[y, x]) * m.kernel(2, v, &[y, x]) * b1.get(&[v]);
                }
                want -= m.rate(2, &[x, y]) * b1.get(&[x]) + m.rate(2, &[y, x]) * b1.get(&[y]);
                assert!((r.get(&[x, y]) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn limit_expansion_matches_integration() {
        let m = skewed();
        let b0 = random_limit(3, 3);
        let lim = limit_expansion(&m, &b0, 0.5, 16).unwrap();
        let rk = integrate_dual_vlasov(&m, &b0, 0.5, 1e-3).unwrap();
        assert!(lim.max_abs_diff(&rk).unwrap() <= 1e-9);
        let first = semigroup(&lambda_m(&m, 1, &single(0)).unwrap(), 0.5)
            .unwrap()
            .apply(b0.require(1).unwrap())
            .unwrap();
        assert!(lim.require(1).unwrap().max_abs_diff(&first).unwrap() < 1e-14);
        let at_zero = limit_expansion(&m, &b0, 0.0, 16).unwrap();
        assert!(at_zero.max_abs_diff(&b0).unwrap() < 1e-15);
        assert!(integrate_dual_vlasov(&m, &b0, 0.0, 0.1).unwrap() == b0);
    }

    #[test]
    fn dual_vlasov_is_triangular() {
        let m = skewed();
        let b0 = random_limit(3, 4);
        let mut perturbed = b0.clone();
        perturbed.component_mut(3).unwrap().scale(3.0);
        let a = integrate_dual_vlasov(&m, &b0, 0.4, 0.01).unwrap();
        let b = integrate_dual_vlasov(&m, &perturbed, 0.4, 0.01).unwrap();
        for s in 0..=2 {
            assert_eq!(a.require(s).unwrap(), b.require(s).unwrap());
        }
    }

    #[test]
    fn noninteracting_convergence_is_exact() {
        let m = model("uniform-drift");
        let rows = mean_field_convergence(&m, &[0.1, 0.05, 0.025], &random_limit(3, 5), 0.5, 16)
            .unwrap();
        assert_eq!(rows.len(), 3);
        for r in rows {
            assert!(r.error <= 1e-10, "{r:?}");
        }
    }

    #[test]
    fn vlasov_conserves_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for m in [model("imitation"), model("mixed"), skewed()] {
            for _ in 0..10 {
                let f = SymTensor::from_fn(space(), 1, |_| rng.random_range(-1.0..1.0)).unwrap();
                assert!(vlasov_rhs(&m, &f).unwrap().sum().abs() < 1e-15);
                assert!(vlasov_rhs_general(&m, &f).unwrap().sum().abs() < 1e-15);
            }
        }
    }

    #[test]
    fn uniform_drift_keeps_uniform() {
        let m = model("uniform-drift");
        let u = SymTensor::constant(space(), 1, 0.25).unwrap();
        assert!(vlasov_rhs(&m, &u).unwrap().max_abs() < 1e-16);
    }

    #[test]
    fn consensus_is_absorbing_without_noise() {
        let m = InteractionModel::from_fn(
            space(),
            0.1,
            2,
            |mo, _| if mo == 1 { 0.0 } else { 1.0 },
            |mo, v, x| if mo == 1 { 0.25 } else { f64::from(v == x[1]) },
        )
        .unwrap();
        for a in 0..4 {
            let delta = SymTensor::delta(space(), a).unwrap();
            assert_eq!(vlasov_rhs(&m, &delta).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn general_form_reduces_to_pair_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in [model("mixed"), skewed()] {
            let f = SymTensor::from_fn(space(), 1, |_| rng.random_range(0.0..1.0)).unwrap();
            let a = vlasov_rhs(&m, &f).unwrap();
            let b = vlasov_rhs_general(&m, &f).unwrap();
            assert!(a.max_abs_diff(&b).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn general_form_respects_subpopulation_relabeling() {
        // "mixed" is invariant under swapping the two subpopulations.
        let m = model("mixed");
        let f = SymTensor::from_vec(space(), 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let swap = |t: &SymTensor| {
            SymTensor::from_fn(space(), 1, |x| t.get(&[(x[0] + 2) % 4])).unwrap()
        };
        let lhs = vlasov_rhs_general(&m, &swap(&f)).unwrap();
        let rhs = swap(&vlasov_rhs_general(&m, &f).unwrap());
        assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-15);
        let u = SymTensor::constant(space(), 1, 0.25).unwrap();
        let r = vlasov_rhs_general(&m, &u).unwrap();
        assert!(r.max_abs_diff(&swap(&r)).unwrap() < 1e-16);
    }

    #[test]
    fn noninteracting_relaxation_closed_form() {
        let m = model("uniform-drift");
        for t in [0.5, 1.0, 2.0] {
            let f = integrate_vlasov(&m, &f0(), t, 1e-3).unwrap();
            for x in 0..4 {
                let want = (-t).exp() * f0().get(&[x]) + (1.0 - (-t).exp()) * 0.25;
                assert!((f.density.get(&[x]) - want).abs() <= 1e-8);
            }
            assert!((f.mass() - 1.0).abs() <= 1e-10);
        }
        assert_eq!(integrate_vlasov(&m, &f0(), 0.0, 0.1).unwrap().density, f0());
    }

    #[test]
    fn series_matches_integration_at_short_time() {
        let m = skewed();
        let series = f1_series(&m, &f0(), 0.2, 3, 16).unwrap();
        let ode = integrate_vlasov(&m, &f0(), 0.2, 1e-4).unwrap();
        assert!(series.density.density.max_abs_diff(&ode.density).unwrap() <= 1e-5);
        let norms = &series.term_norms;
        for w in norms.windows(2).skip(1) {
            assert!(w[1] < 0.5 * w[0], "{norms:?}");
        }
        assert!(!series.growing);
        let free = f1_series(&m, &f0(), 0.2, 0, 16).unwrap();
        let flow = semigroup(&lambda_star_m(&m, 1, &single(0)).unwrap(), 0.2)
            .unwrap()
            .apply(&f0())
            .unwrap();
        assert!(free.density.density.max_abs_diff(&flow).unwrap() < 1e-15);
    }

    #[test]
    fn chaos_identity_at_time_zero() {
        let m = skewed();
        let b1 = SymTensor::from_vec(space(), 1, vec![1.0, -0.5, 0.25, 2.0]).unwrap();
        let c = chaos_functional(&m, &b1, &f0(), 0.0, 3, 0.01).unwrap();
        assert_eq!(c.lhs, c.rhs);
    }

    #[test]
    fn limit_routines_reject_higher_orders() {
        let m = InteractionModel::from_fn(StateSpace::new(3, 1).unwrap(), 0.1, 3, |_, _| 1.0, |_, _, _| 1.0 / 3.0)
            .unwrap();
        let f = SymTensor::constant(*m.space(), 1, 1.0 / 3.0).unwrap();
        assert!(vlasov_rhs(&m, &f).is_err());
        assert!(vlasov_rhs_general(&m, &f).unwrap().max_abs() < 1e-16);
        let d = integrate_vlasov(&m, &f, 0.5, 0.01).unwrap();
        assert!((d.mass() - 1.0).abs() < 1e-12);
    }
}
