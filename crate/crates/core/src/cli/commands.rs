use std::path::Path;

use serde_json::Value;

use super::emit::{emit, Cell, Format, Table};
use super::{
    config_header, density_arg, Command, FunctionalsArgs, HierarchyArgs, MeanfieldArgs, Report,
    SsaArgs, ValidateArgs, VlasovArgs, DEFAULT_EPSILON,
};
use crate::error::{Error, Result};
use crate::functionals::{consistency_residual, duality_full, evolve_observables};
use crate::generators::lambda_n;
use crate::hierarchy::{integrate_dual_bbgky, solve_expansion};
use crate::meanfield::{chaos_functional, f1_series, integrate_vlasov, mean_field_convergence};
use crate::model::{InteractionModel, ScalingConfig};
use crate::ssa::empirical_marginal;
use crate::state_space::{GradedSequence, SequenceKind, StateSpace, SymTensor};

/// `b(x_1..x_n) = Π_i (x_i + 1) / S`, the default test observable.
pub fn product_observable(space: StateSpace, n: usize) -> Result<SymTensor> {
    let s = space.size() as f64;
    SymTensor::from_fn(space, n, |x| x.iter().map(|&u| (u as f64 + 1.0) / s).product())
}

/// `f(x) ∝ S - x`, the default initial one-entity density.
pub fn default_density(space: StateSpace) -> Result<SymTensor> {
    let s = space.size();
    let norm = (s * (s + 1) / 2) as f64;
    SymTensor::from_fn(space, 1, |x| (s - x[0]) as f64 / norm)
}

fn observables(space: StateSpace, smax: usize) -> Result<GradedSequence> {
    let rest = (1..=smax)
        .map(|n| product_observable(space, n))
        .collect::<Result<_>>()?;
    GradedSequence::from_parts(SequenceKind::Observable, 0.0, rest)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidArgument(format!("--{name} must be positive, got {v}")));
    }
    Ok(())
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::InvalidArgument(format!("--{name} must be >= 0, got {v}")));
    }
    Ok(())
}

fn at_least_one(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::InvalidArgument(format!("--{name} must be at least 1")));
    }
    Ok(())
}

fn sample_times(t: f64, samples: usize) -> Vec<f64> {
    (0..=samples).map(|i| t * i as f64 / samples as f64).collect()
}

fn write(table: &Table, config: &Value, format: Format, path: Option<&Path>) -> Result<()> {
    emit(table, config, format, path)
}

pub(super) fn hierarchy(cmd: &Command, a: &HierarchyArgs) -> Result<()> {
    let model = a.model.resolve(DEFAULT_EPSILON)?;
    nonnegative("t", a.t)?;
    positive("dt", a.dt)?;
    at_least_one("smax", a.smax)?;
    at_least_one("samples", a.samples)?;
    let b0 = observables(*model.space(), a.smax)?;
    let mut table = Table::new(["t", "s", "norm", "expansion_vs_rk4_error"]);
    let mut rk = b0.clone();
    let mut prev = 0.0;
    for t in sample_times(a.t, a.samples) {
        if t > prev {
            rk = integrate_dual_bbgky(&model, &rk, t - prev, a.dt)?;
            prev = t;
        }
        let ex = solve_expansion(&model, &b0, t)?;
        for s in 1..=a.smax {
            let e = ex.require(s)?;
            table.push(vec![
                t.into(),
                s.into(),
                e.max_abs().into(),
                e.max_abs_diff(rk.require(s)?)?.into(),
            ]);
        }
    }
    write(&table, &config_header(cmd, &model), a.output.format, a.output.out.as_deref())
}

pub(super) fn meanfield(cmd: &Command, a: &MeanfieldArgs) -> Result<()> {
    let model = a.model.resolve(DEFAULT_EPSILON)?;
    let scaling = ScalingConfig::new(a.epsilons.clone())?;
    nonnegative("t", a.t)?;
    positive("dt", a.dt)?;
    at_least_one("smax", a.smax)?;
    at_least_one("nodes", a.nodes)?;
    let f0 = density_arg(&model, &a.density)?;
    let b0 = observables(*model.space(), a.smax)?;
    let config = config_header(cmd, &model);

    let mut table = Table::new(["epsilon", "err"]);
    for row in mean_field_convergence(&model, scaling.epsilons(), &b0, a.t, a.nodes)? {
        table.push(vec![row.epsilon.into(), row.error.into()]);
    }

    if let Some(path) = &a.chaos_out {
        at_least_one("chaos-smax", a.chaos_smax)?;
        let series = f1_series(&model, &f0, a.t, a.series_nmax, a.nodes)?;
        let vlasov = integrate_vlasov(&model, &f0, a.t, a.dt)?;
        let series_error = series.density.density.max_abs_diff(&vlasov.density)?;
        let mut chaos = Table::new(["k", "smax", "lhs", "rhs", "residual", "series_error"]);
        for k in 1..=a.chaos_smax.min(2) {
            let bk = product_observable(*model.space(), k)?;
            for smax in k..=a.chaos_smax {
                let c = chaos_functional(&model, &bk, &f0, a.t, smax, a.dt)?;
                chaos.push(vec![
                    k.into(),
                    smax.into(),
                    c.lhs.into(),
                    c.rhs.into(),
                    c.residual().into(),
                    series_error.into(),
                ]);
            }
        }
        write(&chaos, &config, a.output.format, Some(path))?;
    }
    write(&table, &config, a.output.format, a.output.out.as_deref())
}

pub(super) fn vlasov(cmd: &Command, a: &VlasovArgs) -> Result<()> {
    let model = a.model.resolve(DEFAULT_EPSILON)?;
    nonnegative("t", a.t)?;
    positive("dt", a.dt)?;
    at_least_one("samples", a.samples)?;
    at_least_one("nodes", a.nodes)?;
    let f0 = density_arg(&model, &a.density)?;
    let mut table = Table::new(["t", "state", "vlasov", "series"]);
    let mut f = f0.clone();
    let mut prev = 0.0;
    for t in sample_times(a.t, a.samples) {
        if t > prev {
            f = integrate_vlasov(&model, &f, t - prev, a.dt)?.density;
            prev = t;
        }
        // the series exists for pair models only
        let series = if model.max_order() <= 2 {
            Some(f1_series(&model, &f0, t, a.series_nmax, a.nodes)?.density.density)
        } else {
            None
        };
        for x in 0..model.space().size() {
            let s = series.as_ref().map_or(f64::NAN, |d| d.get(&[x]));
            table.push(vec![t.into(), x.into(), f.get(&[x]).into(), s.into()]);
        }
    }
    write(&table, &config_header(cmd, &model), a.output.format, a.output.out.as_deref())
}

pub(super) fn ssa(cmd: &Command, a: &SsaArgs) -> Result<()> {
    at_least_one("N", a.entities)?;
    let model = a.model.resolve(1.0 / a.entities as f64)?;
    nonnegative("t", a.t)?;
    positive("dt", a.dt)?;
    let f0 = density_arg(&model, &a.density)?;
    let est = empirical_marginal(&model, &f0, a.entities, a.t, a.replicas, a.seed)?;
    let vlasov = integrate_vlasov(&model, &f0, a.t, a.dt)?.density;
    let config = config_header(cmd, &model);

    let mut table = Table::new(["state", "empirical", "stderr", "vlasov"]);
    for x in 0..model.space().size() {
        table.push(vec![
            x.into(),
            est.probabilities[x].into(),
            est.stderr[x].into(),
            vlasov.get(&[x]).into(),
        ]);
    }
    if let Some(path) = &a.replicas_out {
        let mut columns = vec!["replica".to_string(), "events".to_string()];
        columns.extend((0..model.space().size()).map(|x| format!("p{x}")));
        let mut reps = Table::new(columns);
        for r in &est.replicas {
            let mut row: Vec<Cell> = vec![r.replica.into(), r.events.into()];
            row.extend(r.histogram.iter().map(|&p| Cell::from(p)));
            reps.push(row);
        }
        write(&reps, &config, a.output.format, Some(path))?;
    }
    write(&table, &config, a.output.format, a.output.out.as_deref())
}

pub(super) fn functionals(cmd: &Command, a: &FunctionalsArgs) -> Result<()> {
    let model = a.model.resolve(DEFAULT_EPSILON)?;
    nonnegative("t", a.t)?;
    nonnegative("lambda", a.lambda)?;
    at_least_one("samples", a.samples)?;
    at_least_one("nmax", a.nmax)?;
    if a.smax > a.nmax {
        return Err(Error::InvalidArgument(format!(
            "--smax {} exceeds --nmax {}",
            a.smax, a.nmax
        )));
    }
    let space = *model.space();
    let f = density_arg(&model, &a.density)?;
    let o = GradedSequence::from_parts(
        SequenceKind::Observable,
        1.0,
        (1..=a.nmax).map(|n| product_observable(space, n)).collect::<Result<_>>()?,
    )?;
    let d = GradedSequence::from_parts(
        SequenceKind::State,
        1.0,
        (1..=a.nmax)
            .map(|n| Ok(f.tensor_power(n)?.scaled(a.lambda.powi(n as i32))))
            .collect::<Result<_>>()?,
    )?;
    let mut table = Table::new(["t", "residual"]);
    for t in sample_times(a.t, a.samples) {
        let r = match a.report {
            Report::Duality => duality_full(&model, &o, &d, t)?,
            Report::Consistency => consistency_residual(&evolve_observables(&model, &o, t)?, &d, a.smax)?,
        };
        table.push(vec![t.into(), r.into()]);
    }
    write(&table, &config_header(cmd, &model), a.output.format, a.output.out.as_deref())
}

pub(super) fn validate(cmd: &Command, a: &ValidateArgs) -> Result<()> {
    let model: InteractionModel = a.model.resolve(DEFAULT_EPSILON)?;
    model.validate().map_err(Error::InvalidModel)?;
    let Some(n) = a.dump_generator else {
        println!("ok");
        return Ok(());
    };
    at_least_one("dump-generator", n)?;
    let op = lambda_n(&model, n)?;
    let m = op.matrix();
    let mut columns = vec!["row".to_string()];
    columns.extend((0..m.ncols()).map(|j| format!("c{j}")));
    let mut table = Table::new(columns);
    for i in 0..m.nrows() {
        let mut row: Vec<Cell> = vec![i.into()];
        row.extend(m.row(i).iter().map(|&v| Cell::from(v)));
        table.push(row);
    }
    write(&table, &config_header(cmd, &model), a.output.format, a.output.out.as_deref())?;
    if a.output.out.is_some() {
        println!("ok");
    }
    Ok(())
}
