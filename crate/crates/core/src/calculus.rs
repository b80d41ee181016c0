//! Hyperfinite stochastic integrals and the finite-step Itô formula.
//!
//! All sums use forward increments `dX(s) = X(s + dt) - X(s)` evaluated
//! against the integrand at the left endpoint `s`, so integrals of adapted
//! integrands are martingale transforms.

use crate::error::{Error, Result};
use crate::walk::Trajectory;

/// Values of a process at the `M + 1` points of a timeline, row per time.
#[derive(Clone, Debug, PartialEq)]
pub struct InternalProcess {
    dim: usize,
    values: Vec<f64>,
}

impl InternalProcess {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.is_empty() || values.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "{} values do not form rows of width {dim}",
                values.len()
            )));
        }
        Ok(Self { dim, values })
    }

    pub fn scalar(values: Vec<f64>) -> Result<Self> {
        Self::new(1, values)
    }

    pub fn from_fn(dim: usize, points: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(dim * points);
        for s in 0..points {
            for j in 0..dim {
                values.push(f(s, j));
            }
        }
        Self::new(dim, values)
    }

    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let dim = traj.start.len();
        let values = traj.states().flat_map(|s| s.position).collect();
        Self { dim, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of time points, `M + 1`.
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.len() - 1
    }

    pub fn at(&self, step: usize) -> &[f64] {
        &self.values[step * self.dim..(step + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.at(self.len() - 1)
    }

    pub fn component(&self, axis: usize) -> Vec<f64> {
        self.values.iter().skip(axis).step_by(self.dim).copied().collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dim: self.dim,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn increment(&self, step: usize, axis: usize) -> f64 {
        self.values[(step + 1) * self.dim + axis] - self.values[step * self.dim + axis]
    }
}

/// `(int Y dX)(t) = sum_{s<t} Y(s) dX(s)` per component. A scalar `Y` multiplies every component of `X`.
pub fn stochastic_integral(y: &InternalProcess, x: &InternalProcess) -> Result<InternalProcess> {
    if y.len() != x.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: x.len(),
        });
    }
    if y.dim != 1 && y.dim != x.dim {
        return Err(Error::DimensionMismatch {
            expected: x.dim,
            got: y.dim,
        });
    }
    let dim = x.dim;
    let mut values = vec![0.0; x.values.len()];
    for s in 0..x.steps() {
        for j in 0..dim {
            let yj = if y.dim == 1 { y.at(s)[0] } else { y.at(s)[j] };
            values[(s + 1) * dim + j] = values[s * dim + j] + yj * x.increment(s, j);
        }
    }
    Ok(InternalProcess { dim, values })
}

/// `[M]_t = sum_{s<t} (dM(s))^2` per component.
pub fn quadratic_variation(m: &InternalProcess) -> InternalProcess {
    let dim = m.dim;
    let mut values = vec![0.0; m.values.len()];
    for s in 0..m.steps() {
        for j in 0..dim {
            let d = m.increment(s, j);
            values[(s + 1) * dim + j] = values[s * dim + j] + d * d;
        }
    }
    InternalProcess { dim, values }
}

/// A scalar function with caller-supplied first and second derivatives.
pub struct C2Function<F, D1, D2> {
    pub f: F,
    pub df: D1,
    pub d2f: D2,
}

impl<F, D1, D2> C2Function<F, D1, D2>
where
    F: Fn(f64) -> f64,
    D1: Fn(f64) -> f64,
    D2: Fn(f64) -> f64,
{
    pub fn new(f: F, df: D1, d2f: D2) -> Self {
        Self { f, df, d2f }
    }
}

/// `|f(M_t) - f(M_0) - sum f'(M_s) dM_s - 1/2 sum f''(M_s) dM_s^2|` for a scalar process.
pub fn ito_residual<F, D1, D2>(func: &C2Function<F, D1, D2>, m: &InternalProcess) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D1: Fn(f64) -> f64,
    D2: Fn(f64) -> f64,
{
    if m.dim != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: m.dim });
    }
    let mut drift = 0.0;
    let mut martingale = 0.0;
    for s in 0..m.steps() {
        let v = m.values[s];
        let d = m.increment(s, 0);
        martingale += (func.df)(v) * d;
        drift += (func.d2f)(v) * d * d;
    }
    let lhs = (func.f)(m.values[m.steps()]) - (func.f)(m.values[0]);
    Ok((lhs - martingale - 0.5 * drift).abs())
}
