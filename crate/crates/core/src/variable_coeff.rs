//! Generalized processes with position-dependent mode matrices.
//!
//! A plain vector walk `x_s` drives every mode. Mode `alpha` accumulates the
//! symmetric increments `Q_x diag(omega_j(s) sqrt(2 lambda_j(x) dt)) Q_x^T`
//! evaluated at the pre-step position, and its factor is `exp(i X_alpha)`.
//!
//! Increments sharing a bitwise-identical eigenbasis are kept as integer
//! sign counts, so a constant field goes through exactly the arithmetic of
//! [`crate::walk::mode_factor_sample`].

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mode_algebra::{eigendecompose, spectral_map, CoefficientTensor, ModeSpectrum, MultiIndex, FOUR_PI_SQ};
use crate::rng::StreamKey;
use crate::walk::{mode_angles, sample_path_keyed, unitary_from_angles, walk_position, PathSample, Timeline, Trajectory};

type TensorFn = dyn Fn(&[f64]) -> CoefficientTensor + Send + Sync;

/// `x -> a(x)` with a uniform ellipticity margin: for every `alpha` with all
/// entries non-zero, `lambda_min(A_alpha(x)) >= margin * 4 pi^2 |alpha|^2`.
#[derive(Clone)]
pub struct CoefficientField {
    dim: usize,
    margin: f64,
    name: String,
    tensor_at: Arc<TensorFn>,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("dim", &self.dim)
            .field("margin", &self.margin)
            .field("name", &self.name)
            .finish()
    }
}

impl CoefficientField {
    pub fn from_fn(
        dim: usize,
        margin: f64,
        name: impl Into<String>,
        tensor_at: impl Fn(&[f64]) -> CoefficientTensor + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(margin > 0.0) {
            return Err(Error::invalid(format!("ellipticity margin must be positive, got {margin}")));
        }
        Ok(Self {
            dim,
            margin,
            name: name.into(),
            tensor_at: Arc::new(tensor_at),
        })
    }

    pub fn constant(tensor: CoefficientTensor, margin: f64) -> Result<Self> {
        let dim = tensor.dim();
        Self::from_fn(dim, margin, "constant", move |_| tensor.clone())
    }

    /// `(1 + sin(2 pi x_1) / 2)` times the Lamé tensor with coefficient `a`.
    pub fn modulated_lame(dim: usize, a: f64, margin: f64) -> Result<Self> {
        let base = CoefficientTensor::lame(dim, a);
        Self::from_fn(dim, margin, "modulated-lame", move |x| {
            let s = 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x[0]).sin();
            let scaled: Vec<f64> = base.entries().iter().map(|v| s * v).collect();
            CoefficientTensor::from_entries(base.dim(), scaled).expect("same shape as base")
        })
    }

    /// Built-in families by name: `constant` (Lamé) and `modulated-lame`.
    pub fn named(name: &str, dim: usize, a: f64) -> Result<Self> {
        match name {
            "constant" => Self::constant(CoefficientTensor::lame(dim, a), a.min(1.0) * 0.5),
            "modulated-lame" => Self::modulated_lame(dim, a, a.min(1.0) * 0.25),
            other => Err(Error::invalid(format!("unknown coefficient field {other:?}"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tensor_at(&self, x: &[f64]) -> CoefficientTensor {
        (self.tensor_at)(x)
    }

    /// Factored `A_alpha(x)`, checked against the margin.
    pub fn spectrum_at(&self, alpha: &MultiIndex, x: &[f64]) -> Result<ModeSpectrum> {
        let spec = ModeSpectrum::new(&self.tensor_at(x), alpha)?;
        if alpha.all_nonzero() {
            let floor = self.margin * FOUR_PI_SQ * alpha.norm_sq() as f64;
            if spec.lambda_min() < floor {
                return Err(Error::EllipticityViolation {
                    alpha: alpha.0.clone(),
                    lambda_min: spec.lambda_min(),
                });
            }
        }
        Ok(spec)
    }
}

/// `Q diag(omega_j sqrt(dt) sqrt(2 lambda_j)) Q^T` for one step.
fn increment_scales(spec: &ModeSpectrum, omega: &[i8], dt: f64) -> Vec<f64> {
    let counts: Vec<i64> = omega.iter().map(|&w| w as i64).collect();
    mode_angles(spec, dt, &counts)
}

pub fn step_increment(field: &CoefficientField, alpha: &MultiIndex, x: &[f64], omega: &[i8], dt: f64) -> Result<DMatrix<f64>> {
    if omega.len() != field.dim || x.len() != field.dim {
        return Err(Error::DimensionMismatch {
            expected: field.dim,
            got: omega.len().min(x.len()),
        });
    }
    let spec = field.spectrum_at(alpha, x)?;
    Ok(spectral_map(&spec.q, increment_scales(&spec, omega, dt)))
}

/// Running `X_alpha`: settled increments plus sign counts in the current basis.
struct ModeAccumulator {
    current: Option<ModeSpectrum>,
    counts: Vec<i64>,
    settled: Option<DMatrix<f64>>,
}

impl ModeAccumulator {
    fn new(n: usize) -> Self {
        Self {
            current: None,
            counts: vec![0; n],
            settled: None,
        }
    }

    fn push(&mut self, spec: ModeSpectrum, omega: &[i8], dt: f64) {
        let same = self
            .current
            .as_ref()
            .is_some_and(|c| c.q == spec.q && c.lambda == spec.lambda);
        if !same {
            self.flush(dt);
            self.current = Some(spec);
        }
        for (c, &w) in self.counts.iter_mut().zip(omega) {
            *c += w as i64;
        }
    }

    fn flush(&mut self, dt: f64) {
        if let Some(spec) = &self.current {
            let part = spectral_map(&spec.q, mode_angles(spec, dt, &self.counts));
            self.settled = Some(match self.settled.take() {
                Some(s) => s + part,
                None => part,
            });
        }
        self.counts.iter_mut().for_each(|c| *c = 0);
    }

    fn finish(mut self, n: usize, dt: f64) -> Result<(DMatrix<f64>, DMatrix<Complex64>)> {
        match (&self.current, &self.settled) {
            (None, _) => Ok((DMatrix::zeros(n, n), DMatrix::identity(n, n))),
            (Some(spec), None) => {
                let angles = mode_angles(spec, dt, &self.counts);
                Ok((spectral_map(&spec.q, angles.iter().copied()), unitary_from_angles(&spec.q, &angles)))
            }
            (Some(_), Some(_)) => {
                self.flush(dt);
                let x = self.settled.expect("flushed");
                let sym = (&x + x.transpose()) * 0.5;
                let (q, mu) = eigendecompose(&sym)?;
                Ok((sym, unitary_from_angles(&q, mu.as_slice())))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct GeneralizedMode {
    pub alpha: MultiIndex,
    /// Accumulated symmetric `X_alpha`.
    pub accumulated: DMatrix<f64>,
    /// `exp(i X_alpha)`.
    pub factor: DMatrix<Complex64>,
}

#[derive(Clone, Debug)]
pub struct GeneralizedPath {
    pub trajectory: Trajectory,
    /// Cube order.
    pub modes: Vec<GeneralizedMode>,
}

/// Evolves every mode with `|alpha_i| <= radius` along a given path.
pub fn evolve_along(
    field: &CoefficientField,
    timeline: &Timeline,
    start: &[f64],
    radius: usize,
    path: &PathSample,
) -> Result<GeneralizedPath> {
    let n = field.dim;
    let trajectory = walk_position(path, timeline, start)?;
    let states: Vec<Vec<f64>> = trajectory.states().map(|s| s.position).collect();
    let modes = MultiIndex::cube(n, radius)
        .into_iter()
        .map(|alpha| {
            let mut acc = ModeAccumulator::new(n);
            for s in 0..timeline.steps {
                let spec = field.spectrum_at(&alpha, &states[s])?;
                acc.push(spec, path.step(s), timeline.dt);
            }
            let (accumulated, factor) = acc.finish(n, timeline.dt)?;
            Ok(GeneralizedMode {
                alpha,
                accumulated,
                factor,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GeneralizedPath { trajectory, modes })
}

/// [`evolve_along`] on the path drawn from `key`.
pub fn evolve_generalized(
    field: &CoefficientField,
    timeline: &Timeline,
    start: &[f64],
    radius: usize,
    key: StreamKey,
) -> Result<GeneralizedPath> {
    let path = sample_path_keyed(timeline, field.dim, key);
    evolve_along(field, timeline, start, radius, &path)
}

/// Exact expectation of each mode factor over all `2^{nM}` paths, cube order.
pub fn enumerated_mean_factors(
    field: &CoefficientField,
    timeline: &Timeline,
    start: &[f64],
    radius: usize,
) -> Result<Vec<DMatrix<Complex64>>> {
    let n = field.dim;
    let modes = MultiIndex::cube(n, radius).len();
    let mut sums = vec![DMatrix::<Complex64>::zeros(n, n); modes];
    let mut count = 0usize;
    for path in crate::walk::enumerate_paths(timeline.steps, n)? {
        let g = evolve_along(field, timeline, start, radius, &path)?;
        for (s, m) in sums.iter_mut().zip(&g.modes) {
            *s += &m.factor;
        }
        count += 1;
    }
    let scale = Complex64::new(1.0 / count as f64, 0.0);
    Ok(sums.into_iter().map(|s| s * scale).collect())
}
