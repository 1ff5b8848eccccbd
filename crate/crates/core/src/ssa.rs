//! Exact stochastic simulation of the `N`-entity jump process.
//!
//! An event is an ordered tuple of distinct entities `(i_1..i_m)` firing at
//! rate `ε^(m-1) a^[m](u_{i_1}..u_{i_m})`; entity `i_1` then jumps to `v`
//! drawn from `A^[m](·; u_{i_1}..u_{i_m})`. Rates depend on states only, so
//! events are aggregated by state tuple: the class `(x_1..x_m)` has
//! multiplicity `n_{x_1} (n_{x_2} - [x_2 = x_1]) ...`, and the jumping
//! entity is uniform among those in state `x_1`.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::InteractionModel;
use crate::state_space::SymTensor;

/// A point of the `N`-entity configuration space at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub states: Vec<usize>,
    pub time: f64,
}

impl Configuration {
    pub fn new(model: &InteractionModel, states: Vec<usize>) -> Result<Self> {
        let s = model.space().size();
        if let Some(&bad) = states.iter().find(|&&x| x >= s) {
            return Err(Error::OutOfRange(format!("entity state {bad} in a space of size {s}")));
        }
        Ok(Self { states, time: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Number of entities in each single-entity state.
    pub fn counts(&self, size: usize) -> Vec<usize> {
        let mut c = vec![0; size];
        for &x in &self.states {
            c[x] += 1;
        }
        c
    }
}

/// Seed and stream of one replica's generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Result of one [`step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// Entity `entity` moved to `to` after waiting `wait`.
    Jump { entity: usize, to: usize, wait: f64 },
    /// Total rate zero.
    Absorbed,
}

/// Aggregated event classes of a configuration.
struct Classes {
    /// `(order, tuple index, weight)`
    entries: Vec<(usize, usize, f64)>,
    total: f64,
}

fn classes(model: &InteractionModel, counts: &[usize]) -> Classes {
    let s = counts.len();
    let mut entries = Vec::new();
    let mut total = 0.0;
    let mut tuple = Vec::new();
    for m in 1..=model.max_order() {
        let w = model.epsilon().powi(m as i32 - 1);
        if w == 0.0 {
            continue;
        }
        tuple.resize(m, 0);
        for ti in 0..s.pow(m as u32) {
            let rate = model.rate_at(m, ti);
            if rate == 0.0 {
                continue;
            }
            model.space().decode_into(ti, &mut tuple);
            let mut mult = 1.0;
            for (k, &x) in tuple.iter().enumerate() {
                let used = tuple[..k].iter().filter(|&&y| y == x).count();
                let avail = counts[x].saturating_sub(used);
                mult *= avail as f64;
                if avail == 0 {
                    break;
                }
            }
            if mult > 0.0 {
                let weight = w * rate * mult;
                entries.push((m, ti, weight));
                total += weight;
            }
        }
    }
    Classes { entries, total }
}

/// Total event rate `R(cfg)`.
pub fn total_rate(model: &InteractionModel, cfg: &Configuration) -> f64 {
    classes(model, &cfg.counts(model.space().size())).total
}

/// One direct-method step: exponential waiting time, event class with
/// probability proportional to its rate, then the jump.
pub fn step<R: Rng>(model: &InteractionModel, cfg: &mut Configuration, rng: &mut R) -> StepOutcome {
    let s = model.space().size();
    let cl = classes(model, &cfg.counts(s));
    if cl.total <= 0.0 {
        return StepOutcome::Absorbed;
    }
    let wait: f64 = Exp1.sample(rng);
    let wait = wait / cl.total;
    let mut u = rng.random::<f64>() * cl.total;
    let mut chosen = cl.entries[cl.entries.len() - 1];
    for &e in &cl.entries {
        if u < e.2 {
            chosen = e;
            break;
        }
        u -= e.2;
    }
    let (m, ti, _) = chosen;
    let lead = ti / s.pow(m as u32 - 1);
    let members = cfg.states.iter().filter(|&&x| x == lead).count();
    let pick = rng.random_range(0..members);
    let entity = cfg
        .states
        .iter()
        .enumerate()
        .filter(|(_, &x)| x == lead)
        .nth(pick)
        .map(|(i, _)| i)
        .expect("class has a member in its leading state");
    let row = model.kernel_row_at(m, ti);
    let mut u = rng.random::<f64>();
    let mut to = row.iter().rposition(|&p| p > 0.0).unwrap_or(lead);
    for (v, &p) in row.iter().enumerate() {
        if u < p {
            to = v;
            break;
        }
        u -= p;
    }
    cfg.states[entity] = to;
    cfg.time += wait;
    StepOutcome::Jump { entity, to, wait }
}

/// Run until `horizon`; the configuration is the state at `horizon`.
/// Returns the number of jumps.
pub fn simulate<R: Rng>(
    model: &InteractionModel,
    cfg: &mut Configuration,
    horizon: f64,
    rng: &mut R,
) -> usize {
    let mut events = 0;
    loop {
        let before = cfg.states.clone();
        let t0 = cfg.time;
        match step(model, cfg, rng) {
            StepOutcome::Absorbed => break,
            StepOutcome::Jump { .. } if cfg.time > horizon => {
                cfg.states = before;
                cfg.time = t0;
                break;
            }
            StepOutcome::Jump { .. } => events += 1,
        }
    }
    cfg.time = horizon;
    events
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

fn mean_and_stderr(values: &[f64]) -> Estimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate {
        mean,
        stderr: (var / n).sqrt(),
    }
}

fn check_replicas(replicas: usize) -> Result<()> {
    if replicas < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 replicas, got {replicas}")));
    }
    Ok(())
}

/// Monte Carlo estimate of `(e^{tΛ_N} b)(cfg0)`. Replica `r` uses stream
/// `r` of `seed`.
pub fn estimate_observable(
    model: &InteractionModel,
    cfg0: &[usize],
    b: &SymTensor,
    t: f64,
    replicas: usize,
    seed: u64,
) -> Result<Estimate> {
    check_replicas(replicas)?;
    if b.arity() != cfg0.len() {
        return Err(Error::ArityMismatch {
            expected: cfg0.len(),
            found: b.arity(),
        });
    }
    let start = Configuration::new(model, cfg0.to_vec())?;
    let values: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|stream| {
            let mut rng = RngSpec { seed, stream }.rng();
            let mut cfg = start.clone();
            simulate(model, &mut cfg, t, &mut rng);
            b.get(&cfg.states)
        })
        .collect();
    Ok(mean_and_stderr(&values))
}

/// One replica of [`empirical_marginal`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaSummary {
    pub replica: usize,
    pub events: usize,
    /// Fraction of entities in each state at the final time.
    pub histogram: Vec<f64>,
}

/// Empirical one-entity law, with per-state standard errors over replicas.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalEstimate {
    pub probabilities: Vec<f64>,
    pub stderr: Vec<f64>,
    pub replicas: Vec<ReplicaSummary>,
}

/// Sample `n` entities i.i.d. from `f0`, simulate to `t`, histogram the
/// states; repeat over replicas. The model's `ε` is used as given.
pub fn empirical_marginal(
    model: &InteractionModel,
    f0: &SymTensor,
    n: usize,
    t: f64,
    replicas: usize,
    seed: u64,
) -> Result<MarginalEstimate> {
    check_replicas(replicas)?;
    if f0.arity() != 1 || f0.space() != model.space() {
        return Err(Error::InvalidArgument("initial law must be a one-entity density".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one entity".into()));
    }
    let initial = WeightedIndex::new(f0.as_slice())
        .map_err(|e| Error::InvalidArgument(format!("initial law: {e}")))?;
    let s = model.space().size();
    let runs: Vec<ReplicaSummary> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngSpec {
                seed,
                stream: r as u64,
            }
            .rng();
            let states = (0..n).map(|_| initial.sample(&mut rng)).collect();
            let mut cfg = Configuration { states, time: 0.0 };
            let events = simulate(model, &mut cfg, t, &mut rng);
            let histogram = cfg
                .counts(s)
                .into_iter()
                .map(|c| c as f64 / n as f64)
                .collect();
            ReplicaSummary {
                replica: r,
                events,
                histogram,
            }
        })
        .collect();
    let mut probabilities = Vec::with_capacity(s);
    let mut stderr = Vec::with_capacity(s);
    for x in 0..s {
        let column: Vec<f64> = runs.iter().map(|r| r.histogram[x]).collect();
        let e = mean_and_stderr(&column);
        probabilities.push(e.mean);
        stderr.push(e.stderr);
    }
    Ok(MarginalEstimate {
        probabilities,
        stderr,
        replicas: runs,
    })
}

/// Total variation distance `½ Σ |p - q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
