//! Fixed-step classical Runge–Kutta integration.

use crate::error::{Error, Result};
use crate::state_space::{GradedSequence, SymTensor};

/// Most steps a single integration may take.
pub const MAX_STEPS: usize = 50_000_000;

/// Vector-space operations needed by [`rk4`].
pub trait OdeState: Clone {
    fn add_scaled(&mut self, alpha: f64, other: &Self) -> Result<()>;
}

impl OdeState for SymTensor {
    fn add_scaled(&mut self, alpha: f64, other: &Self) -> Result<()> {
        self.axpy(alpha, other)
    }
}

impl OdeState for GradedSequence {
    fn add_scaled(&mut self, alpha: f64, other: &Self) -> Result<()> {
        self.axpy(alpha, other)
    }
}

/// Number of uniform steps of size at most `dt` covering `[0, t]`.
pub fn step_count(t: f64, dt: f64) -> Result<usize> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {dt}")));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidArgument(format!("time must be finite and >= 0, got {t}")));
    }
    let n = (t / dt).ceil();
    if n > MAX_STEPS as f64 {
        return Err(Error::SizeCap {
            what: "integration steps",
            needed: n.min(usize::MAX as f64) as usize,
            limit: MAX_STEPS,
        });
    }
    Ok(n as usize)
}

/// Integrate the autonomous system `y' = rhs(y)` from `0` to `t`.
pub fn rk4<S, F>(y0: &S, t: f64, dt: f64, mut rhs: F) -> Result<S>
where
    S: OdeState,
    F: FnMut(&S) -> Result<S>,
{
    let n = step_count(t, dt)?;
    let mut y = y0.clone();
    if n == 0 {
        return Ok(y);
    }
    let h = t / n as f64;
    for _ in 0..n {
        let k1 = rhs(&y)?;
        let mut tmp = y.clone();
        tmp.add_scaled(0.5 * h, &k1)?;
        let k2 = rhs(&tmp)?;
        let mut tmp = y.clone();
        tmp.add_scaled(0.5 * h, &k2)?;
        let k3 = rhs(&tmp)?;
        let mut tmp = y.clone();
        tmp.add_scaled(h, &k3)?;
        let k4 = rhs(&tmp)?;
        y.add_scaled(h / 6.0, &k1)?;
        y.add_scaled(h / 3.0, &k2)?;
        y.add_scaled(h / 3.0, &k3)?;
        y.add_scaled(h / 6.0, &k4)?;
    }
    Ok(y)
}
