//! Interaction models: rate tables `a^[m]`, jump kernels `A^[m]` and the
//! scaling parameter `ε`.
//!
//! Tables are indexed by flattened single-entity states. The rate table of
//! order `m` has `S^m` entries indexed like an arity-`m` tensor. The kernel
//! table of order `m` has `S^m` rows of length `S`: row `(x_1, ..., x_m)`
//! holds the post-jump law `v -> A^[m](v; x_1, ..., x_m)` of the first
//! entity of the tuple. Tables are stored unscaled; `ε` enters only through
//! the `ε^(m-1)` weights applied by the generator code.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state_space::StateSpace;

/// Tolerance of [`InteractionModel::validate`].
pub const VALIDATION_TOL: f64 = 1e-12;
/// Rows within this distance of 1 are rescaled by [`InteractionModel::normalized`].
pub const RENORMALIZE_TOL: f64 = 1e-6;

pub const BUILTIN_NAMES: [&str; 3] = ["uniform-drift", "imitation", "mixed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    NonFiniteRate,
    NegativeRate,
    RateAboveBound,
    NonFiniteKernel,
    NegativeKernel,
    KernelRowNotNormalized,
    InvalidEpsilon,
}

impl DiagnosticKind {
    fn describe(self) -> &'static str {
        match self {
            Self::NonFiniteRate => "non-finite rate",
            Self::NegativeRate => "negative rate",
            Self::RateAboveBound => "rate above bound",
            Self::NonFiniteKernel => "non-finite kernel entry",
            Self::NegativeKernel => "negative kernel entry",
            Self::KernelRowNotNormalized => "kernel row not normalized",
            Self::InvalidEpsilon => "invalid epsilon",
        }
    }
}

/// First violating entry of one check: interaction order, flat index in
/// the table (the row index for normalization failures) and the offending
/// value.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub order: usize,
    pub index: usize,
    pub value: f64,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            DiagnosticKind::KernelRowNotNormalized => "row",
            _ => "index",
        };
        write!(
            f,
            "{} (order {}, {} {}, value {})",
            self.kind.describe(),
            self.order,
            what,
            self.index,
            self.value
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionModel {
    space: StateSpace,
    epsilon: f64,
    rates: Vec<Vec<f64>>,
    kernels: Vec<Vec<f64>>,
    rate_bounds: Vec<f64>,
}

impl InteractionModel {
    /// Assemble a model from tables for orders `1..=rates.len()`.
    ///
    /// Only shapes are checked here; call [`validate`](Self::validate) for
    /// the rate and kernel conditions. Missing rate bounds default to the
    /// table maxima.
    pub fn new(
        space: StateSpace,
        epsilon: f64,
        rates: Vec<Vec<f64>>,
        kernels: Vec<Vec<f64>>,
        rate_bounds: Option<Vec<f64>>,
    ) -> Result<Self> {
        if rates.is_empty() || rates.len() != kernels.len() {
            return Err(Error::InvalidArgument(format!(
                "need matching rate and kernel tables for orders 1..=m_max, got {} and {}",
                rates.len(),
                kernels.len()
            )));
        }
        let s = space.size();
        for (i, (r, k)) in rates.iter().zip(&kernels).enumerate() {
            let m = i + 1;
            let tuples = s.checked_pow(m as u32).ok_or(Error::SizeCap {
                what: "rate table",
                needed: usize::MAX,
                limit: usize::MAX,
            })?;
            if r.len() != tuples {
                return Err(Error::InvalidArgument(format!(
                    "rate table of order {m} needs {tuples} entries, got {}",
                    r.len()
                )));
            }
            if k.len() != tuples * s {
                return Err(Error::InvalidArgument(format!(
                    "kernel table of order {m} needs {} entries, got {}",
                    tuples * s,
                    k.len()
                )));
            }
        }
        let rate_bounds = match rate_bounds {
            Some(b) if b.len() == rates.len() => b,
            Some(b) => {
                return Err(Error::InvalidArgument(format!(
                    "{} rate bounds for {} orders",
                    b.len(),
                    rates.len()
                )))
            }
            None => rates
                .iter()
                .map(|r| r.iter().copied().fold(0.0, f64::max))
                .collect(),
        };
        Ok(Self {
            space,
            epsilon,
            rates,
            kernels,
            rate_bounds,
        })
    }

    /// Build a model from closures `rate(m, tuple)` and
    /// `kernel(m, v, tuple)` over orders `1..=max_order`.
    pub fn from_fn(
        space: StateSpace,
        epsilon: f64,
        max_order: usize,
        rate: impl Fn(usize, &[usize]) -> f64,
        kernel: impl Fn(usize, usize, &[usize]) -> f64,
    ) -> Result<Self> {
        let s = space.size();
        let mut rates = Vec::with_capacity(max_order);
        let mut kernels = Vec::with_capacity(max_order);
        let mut tuple = Vec::new();
        for m in 1..=max_order {
            let count = s.pow(m as u32);
            let mut r = Vec::with_capacity(count);
            let mut k = Vec::with_capacity(count * s);
            tuple.resize(m, 0);
            for idx in 0..count {
                space.decode_into(idx, &mut tuple);
                r.push(rate(m, &tuple));
                k.extend((0..s).map(|v| kernel(m, v, &tuple)));
            }
            rates.push(r);
            kernels.push(k);
        }
        Self::new(space, epsilon, rates, kernels, None)
    }

    /// One of the built-in example models.
    ///
    /// * `uniform-drift`: `m_max = 1`, unit rate, jump to a uniformly chosen state.
    /// * `imitation`: adds pair interactions at unit rate where the first
    ///   entity adopts the full state of its partner.
    /// * `mixed`: as `imitation`, but pairs within one subpopulation
    ///   interact at half the rate of cross-subpopulation pairs.
    pub fn builtin(name: &str, space: StateSpace, epsilon: f64) -> Result<Self> {
        let s = space.size() as f64;
        let uniform = move |_m: usize, _v: usize, _x: &[usize]| 1.0 / s;
        let copy_partner = move |m: usize, v: usize, x: &[usize]| {
            if m == 1 {
                1.0 / s
            } else {
                f64::from(v == x[1])
            }
        };
        let mut model = match name {
            "uniform-drift" => Self::from_fn(space, epsilon, 1, |_, _| 1.0, uniform)?,
            "imitation" => Self::from_fn(space, epsilon, 2, |_, _| 1.0, copy_partner)?,
            "mixed" => Self::from_fn(
                space,
                epsilon,
                2,
                |m, x| {
                    if m == 2 && space.subpopulation_of(x[0]) == space.subpopulation_of(x[1]) {
                        0.5
                    } else {
                        1.0
                    }
                },
                copy_partner,
            )?,
            other => return Err(Error::UnknownModel(other.to_string())),
        };
        model.rate_bounds.fill(1.0);
        Ok(model)
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Maximal interaction order `m_max`.
    pub fn max_order(&self) -> usize {
        self.rates.len()
    }

    pub fn rate_bounds(&self) -> &[f64] {
        &self.rate_bounds
    }

    /// Same tables with a different scaling parameter.
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }

    /// Same model restricted to interaction orders `1..=max_order`.
    pub fn truncated(&self, max_order: usize) -> Result<Self> {
        if max_order == 0 || max_order > self.max_order() {
            return Err(Error::OutOfRange(format!(
                "order cap {max_order} for a model with m_max={}",
                self.max_order()
            )));
        }
        Ok(Self {
            space: self.space,
            epsilon: self.epsilon,
            rates: self.rates[..max_order].to_vec(),
            kernels: self.kernels[..max_order].to_vec(),
            rate_bounds: self.rate_bounds[..max_order].to_vec(),
        })
    }

    /// Flat row index of a state tuple.
    #[inline]
    pub fn tuple_index(&self, tuple: &[usize]) -> usize {
        self.space.index_of(tuple)
    }

    /// `a^[m]` at a flat tuple index.
    #[inline]
    pub fn rate_at(&self, order: usize, tuple_index: usize) -> f64 {
        self.rates[order - 1][tuple_index]
    }

    pub fn rate(&self, order: usize, tuple: &[usize]) -> f64 {
        self.rate_at(order, self.tuple_index(tuple))
    }

    /// Post-jump law `v -> A^[m](v; tuple)` at a flat tuple index.
    #[inline]
    pub fn kernel_row_at(&self, order: usize, tuple_index: usize) -> &[f64] {
        let s = self.space.size();
        &self.kernels[order - 1][tuple_index * s..(tuple_index + 1) * s]
    }

    pub fn kernel(&self, order: usize, v: usize, tuple: &[usize]) -> f64 {
        self.kernel_row_at(order, self.tuple_index(tuple))[v]
    }

    pub fn rate_table(&self, order: usize) -> &[f64] {
        &self.rates[order - 1]
    }

    pub fn kernel_table(&self, order: usize) -> &[f64] {
        &self.kernels[order - 1]
    }

    /// Check rate bounds, kernel positivity and row normalization to
    /// [`VALIDATION_TOL`]. Reports the first violation of each check per
    /// order.
    pub fn validate(&self) -> Result<(), Vec<Diagnostic>> {
        let mut diags = Vec::new();
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            diags.push(Diagnostic {
                kind: DiagnosticKind::InvalidEpsilon,
                order: 0,
                index: 0,
                value: self.epsilon,
            });
        }
        let s = self.space.size();
        for m in 1..=self.max_order() {
            let bound = self.rate_bounds[m - 1];
            let rates = &self.rates[m - 1];
            let first = |kind, pred: &dyn Fn(f64) -> bool| {
                rates
                    .iter()
                    .position(|&v| pred(v))
                    .map(|index| Diagnostic {
                        kind,
                        order: m,
                        index,
                        value: rates[index],
                    })
            };
            diags.extend(first(DiagnosticKind::NonFiniteRate, &|v| !v.is_finite()));
            diags.extend(first(DiagnosticKind::NegativeRate, &|v| v < 0.0));
            diags.extend(first(DiagnosticKind::RateAboveBound, &|v| {
                v > bound * (1.0 + VALIDATION_TOL)
            }));

            let kernel = &self.kernels[m - 1];
            if let Some(index) = kernel.iter().position(|v| !v.is_finite()) {
                diags.push(Diagnostic {
                    kind: DiagnosticKind::NonFiniteKernel,
                    order: m,
                    index,
                    value: kernel[index],
                });
            }
            if let Some(index) = kernel.iter().position(|&v| v < 0.0) {
                diags.push(Diagnostic {
                    kind: DiagnosticKind::NegativeKernel,
                    order: m,
                    index,
                    value: kernel[index],
                });
            }
            let bad_row = kernel
                .chunks(s)
                .map(|row| row.iter().sum::<f64>())
                .enumerate()
                .find(|(_, sum)| sum.is_nan() || (sum - 1.0).abs() > VALIDATION_TOL);
            if let Some((index, value)) = bad_row {
                diags.push(Diagnostic {
                    kind: DiagnosticKind::KernelRowNotNormalized,
                    order: m,
                    index,
                    value,
                });
            }
        }
        if diags.is_empty() {
            Ok(())
        } else {
            Err(diags)
        }
    }

    /// Divide every kernel row by its sum when that sum is within
    /// [`RENORMALIZE_TOL`] of 1, then validate.
    pub fn normalized(mut self) -> Result<Self> {
        let s = self.space.size();
        for (i, kernel) in self.kernels.iter_mut().enumerate() {
            for (row_index, row) in kernel.chunks_mut(s).enumerate() {
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() <= RENORMALIZE_TOL {
                    row.iter_mut().for_each(|v| *v /= sum);
                } else {
                    return Err(Error::InvalidModel(vec![Diagnostic {
                        kind: DiagnosticKind::KernelRowNotNormalized,
                        order: i + 1,
                        index: row_index,
                        value: sum,
                    }]));
                }
            }
        }
        self.validate().map_err(Error::InvalidModel)?;
        Ok(self)
    }

    pub fn to_file(&self) -> ModelFile {
        let orders = 1..=self.max_order();
        ModelFile {
            subpopulations: self.space.subpopulations(),
            micro_states: self.space.micro_states(),
            max_order: Some(self.max_order()),
            epsilon: self.epsilon,
            rates: orders
                .clone()
                .map(|m| (m.to_string(), self.rates[m - 1].clone()))
                .collect(),
            kernels: orders
                .clone()
                .map(|m| (m.to_string(), self.kernels[m - 1].clone()))
                .collect(),
            rate_bounds: Some(
                orders
                    .map(|m| (m.to_string(), self.rate_bounds[m - 1]))
                    .collect(),
            ),
        }
    }

    /// Tables exactly as written in the file, without renormalization or
    /// validation.
    pub fn from_file_raw(file: &ModelFile) -> Result<Self> {
        let space = StateSpace::new(file.subpopulations, file.micro_states)?;
        let max_order = file.max_order.unwrap_or(file.subpopulations);
        let take = |map: &BTreeMap<String, Vec<f64>>, what: &str| {
            (1..=max_order)
                .map(|m| {
                    map.get(&m.to_string()).cloned().ok_or_else(|| {
                        Error::Parse(format!("missing {what} table for order {m}"))
                    })
                })
                .collect::<Result<Vec<_>>>()
        };
        let rates = take(&file.rates, "rates")?;
        let kernels = take(&file.kernels, "kernels")?;
        let bounds = file
            .rate_bounds
            .as_ref()
            .map(|b| {
                (1..=max_order)
                    .map(|m| {
                        b.get(&m.to_string()).copied().ok_or_else(|| {
                            Error::Parse(format!("missing rate bound for order {m}"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;
        Self::new(space, file.epsilon, rates, kernels, bounds)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_file_raw(&file)
    }

    /// Read a model file; rows are renormalized and validated.
    pub fn load(path: &Path) -> Result<Self> {
        Self::load_raw(path)?.normalized()
    }

    pub fn load_raw(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }
}

/// On-disk model description.
///
/// ```json
/// {"M": 2, "K": 2, "m_max": 2, "epsilon": 0.1,
///  "rates": {"1": [...], "2": [...]},
///  "kernels": {"1": [...], "2": [...]},
///  "rate_bounds": {"1": 1.0, "2": 1.0}}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(rename = "M")]
    pub subpopulations: usize,
    #[serde(rename = "K")]
    pub micro_states: usize,
    #[serde(rename = "m_max", default, skip_serializing_if = "Option::is_none")]
    pub max_order: Option<usize>,
    pub epsilon: f64,
    pub rates: BTreeMap<String, Vec<f64>>,
    pub kernels: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_bounds: Option<BTreeMap<String, f64>>,
}

/// A decreasing family of scaling parameters for convergence studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    epsilons: Vec<f64>,
}

impl ScalingConfig {
    pub fn new(epsilons: Vec<f64>) -> Result<Self> {
        if epsilons.is_empty() {
            return Err(Error::InvalidArgument("empty epsilon sequence".into()));
        }
        if epsilons.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "epsilons must be positive: {epsilons:?}"
            )));
        }
        if epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidArgument(format!(
                "epsilons must be strictly decreasing: {epsilons:?}"
            )));
        }
        Ok(Self { epsilons })
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    /// Entity count paired with `ε` in particle experiments, `N = round(1/ε)`.
    pub fn particle_number(epsilon: f64) -> usize {
        (1.0 / epsilon).round() as usize
    }
}
