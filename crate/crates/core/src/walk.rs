//! Finite-step Anderson walks and their matrix-valued generalization.
//!
//! A path is a table of fair signs `omega(s) in {-1, +1}^n` on a uniform
//! timeline. The position walk moves every coordinate by `+-sqrt(2 dt)` per
//! step, so its quadratic variation is exactly `2t` per coordinate and it is
//! driven by the full Laplacian rather than half of it.
//!
//! For a factored mode `A = Q diag(lambda) Q^T` the sample
//! `Q diag(exp(i b_j sqrt(2 lambda_j))) Q^T`, with `b_j = sqrt(dt) sum_s omega_j(s)`,
//! is the matrix exponential of `i B^{sqrt(2A)}`; its expectation is
//! `Q diag(cos(sqrt(2 lambda_j dt))^M) Q^T`, which tends to `exp(-A t)` as `dt -> 0`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::mode_algebra::{spectral_map, ModeSpectrum};
use crate::rng::{SignSource, StreamKey};

/// Largest `n * M` for which paths are enumerated exhaustively.
pub const ENUMERATION_LIMIT: usize = 24;

/// Uniform timeline `{0, dt, ..., steps * dt}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timeline {
    pub dt: f64,
    pub steps: usize,
}

impl Timeline {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("time step must be positive, got {dt}")));
        }
        Ok(Self { dt, steps })
    }

    /// Timeline reaching `horizon` with step `dt`; `horizon / dt` must be an
    /// integer up to a relative `1e-9`.
    pub fn with_horizon(horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon >= 0.0) {
            return Err(Error::NegativeTime(horizon));
        }
        let ratio = horizon / dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::invalid(format!(
                "horizon {horizon} is not a whole number of steps of {dt}"
            )));
        }
        Self::new(dt, steps as usize)
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// Lattice spacing `sqrt(2 dt)` of the position walk.
    pub fn spacing(&self) -> f64 {
        (2.0 * self.dt).sqrt()
    }
}

/// One path `omega: {0..M} -> {-1, +1}^n`, stored step-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathSample {
    pub steps: usize,
    pub dim: usize,
    pub omega: Vec<i8>,
}

impl PathSample {
    pub fn constant(steps: usize, dim: usize, sign: i8) -> Self {
        Self {
            steps,
            dim,
            omega: vec![sign; steps * dim],
        }
    }

    pub fn sign(&self, step: usize, axis: usize) -> i8 {
        self.omega[step * self.dim + axis]
    }

    pub fn step(&self, step: usize) -> &[i8] {
        &self.omega[step * self.dim..(step + 1) * self.dim]
    }

    pub fn negated(&self) -> Self {
        Self {
            steps: self.steps,
            dim: self.dim,
            omega: self.omega.iter().map(|s| -s).collect(),
        }
    }

    /// `sum_s omega_j(s)` per axis.
    pub fn sums(&self) -> Vec<i64> {
        let mut out = vec![0i64; self.dim];
        for row in self.omega.chunks_exact(self.dim) {
            for (acc, &s) in out.iter_mut().zip(row) {
                *acc += s as i64;
            }
        }
        out
    }

    /// Decodes path number `code` of the `2^{nM}` paths: bit `s * n + j` set means `omega_j(s) = +1`.
    pub fn from_code(code: u64, steps: usize, dim: usize) -> Self {
        let omega = (0..steps * dim)
            .map(|b| if (code >> b) & 1 == 1 { 1 } else { -1 })
            .collect();
        Self { steps, dim, omega }
    }
}

/// Draws i.i.d. fair signs into `path`, reusing its buffer.
pub fn sample_path_into<R: RngCore>(signs: &mut SignSource<R>, path: &mut PathSample) {
    for s in path.omega.iter_mut() {
        *s = signs.next_sign();
    }
}

pub fn sample_path<R: RngCore>(timeline: &Timeline, dim: usize, signs: &mut SignSource<R>) -> PathSample {
    let mut path = PathSample::constant(timeline.steps, dim, 1);
    sample_path_into(signs, &mut path);
    path
}

/// Path drawn from the stream identified by `key`.
pub fn sample_path_keyed(timeline: &Timeline, dim: usize, key: StreamKey) -> PathSample {
    sample_path(timeline, dim, &mut SignSource::new(key.rng()))
}

/// Every path of `steps` steps in dimension `dim`, in code order.
pub fn enumerate_paths(steps: usize, dim: usize) -> Result<impl Iterator<Item = PathSample>> {
    let bits = steps * dim;
    if bits > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            bits,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok((0..1u64 << bits).map(move |code| PathSample::from_code(code, steps, dim)))
}

/// Position of the walk after some number of steps, in integer lattice units.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkState {
    pub step: usize,
    pub lattice: Vec<i64>,
    pub position: Vec<f64>,
}

/// `x + sqrt(2 dt) sum_{s<t} omega(s)` along a whole path.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub start: Vec<f64>,
    pub spacing: f64,
    /// `steps + 1` lattice offsets from `start`.
    pub offsets: Vec<Vec<i64>>,
}

impl Trajectory {
    pub fn state(&self, step: usize) -> WalkState {
        let lattice = self.offsets[step].clone();
        let position = self
            .start
            .iter()
            .zip(&lattice)
            .map(|(x, &k)| x + self.spacing * k as f64)
            .collect();
        WalkState {
            step,
            lattice,
            position,
        }
    }

    pub fn states(&self) -> impl Iterator<Item = WalkState> + '_ {
        (0..self.offsets.len()).map(|s| self.state(s))
    }

    pub fn end(&self) -> WalkState {
        self.state(self.offsets.len() - 1)
    }

    /// Sum of squared lattice increments per axis (an integer number of `2 dt` units).
    pub fn quadratic_variation_units(&self) -> Vec<i64> {
        let dim = self.start.len();
        let mut qv = vec![0i64; dim];
        for w in self.offsets.windows(2) {
            for d in 0..dim {
                let inc = w[1][d] - w[0][d];
                qv[d] += inc * inc;
            }
        }
        qv
    }

    /// `[B]_t` per axis; equals `2t` for every path.
    pub fn quadratic_variation(&self) -> Vec<f64> {
        let h2 = self.spacing * self.spacing;
        self.quadratic_variation_units()
            .into_iter()
            .map(|u| u as f64 * h2)
            .collect()
    }
}

pub fn walk_position(path: &PathSample, timeline: &Timeline, start: &[f64]) -> Result<Trajectory> {
    if start.len() != path.dim {
        return Err(Error::DimensionMismatch {
            expected: path.dim,
            got: start.len(),
        });
    }
    if path.steps != timeline.steps {
        return Err(Error::LengthMismatch {
            left: path.steps,
            right: timeline.steps,
        });
    }
    let mut offsets = Vec::with_capacity(path.steps + 1);
    let mut k = vec![0i64; path.dim];
    offsets.push(k.clone());
    for s in 0..path.steps {
        for (kd, &w) in k.iter_mut().zip(path.step(s)) {
            *kd += w as i64;
        }
        offsets.push(k.clone());
    }
    Ok(Trajectory {
        start: start.to_vec(),
        spacing: timeline.spacing(),
        offsets,
    })
}

/// Rotation angles `b_j sqrt(2 lambda_j)` with `b_j = sqrt(dt) * sums_j`.
pub fn mode_angles(spec: &ModeSpectrum, dt: f64, sums: &[i64]) -> Vec<f64> {
    let sqrt_dt = dt.sqrt();
    sums.iter()
        .zip(spec.lambda.iter())
        .map(|(&k, &l)| k as f64 * sqrt_dt * (2.0 * l).sqrt())
        .collect()
}

/// `Q diag(exp(i theta_j)) Q^T`.
pub fn unitary_from_angles(q: &DMatrix<f64>, angles: &[f64]) -> DMatrix<Complex64> {
    let re = spectral_map(q, angles.iter().map(|a| a.cos()));
    let im = spectral_map(q, angles.iter().map(|a| a.sin()));
    re.zip_map(&im, Complex64::new)
}

/// `exp(i B^{sqrt(2A)}(t, omega))` for one path.
pub fn mode_factor_sample(spec: &ModeSpectrum, timeline: &Timeline, path: &PathSample) -> Result<DMatrix<Complex64>> {
    check_path(spec, timeline, path)?;
    Ok(unitary_from_angles(&spec.q, &mode_angles(spec, timeline.dt, &path.sums())))
}

/// Mean of the factors of `omega` and `-omega`: `Q diag(cos theta_j) Q^T`.
pub fn antithetic_factor(spec: &ModeSpectrum, timeline: &Timeline, path: &PathSample) -> Result<DMatrix<f64>> {
    check_path(spec, timeline, path)?;
    let angles = mode_angles(spec, timeline.dt, &path.sums());
    Ok(spectral_map(&spec.q, angles.iter().map(|a| a.cos())))
}

fn check_path(spec: &ModeSpectrum, timeline: &Timeline, path: &PathSample) -> Result<()> {
    if path.dim != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: path.dim,
        });
    }
    if path.steps != timeline.steps {
        return Err(Error::LengthMismatch {
            left: path.steps,
            right: timeline.steps,
        });
    }
    Ok(())
}

/// Exact expectation of [`mode_factor_sample`]: `Q diag(cos(sqrt(2 lambda_j dt))^M) Q^T`.
pub fn mode_factor_closed_form(spec: &ModeSpectrum, timeline: &Timeline) -> DMatrix<f64> {
    let m = timeline.steps as i32;
    spectral_map(
        &spec.q,
        spec.lambda.iter().map(|&l| (2.0 * l * timeline.dt).sqrt().cos().powi(m)),
    )
}

/// How to estimate a transition density.
#[derive(Clone, Copy, Debug)]
pub enum DensityMethod {
    Enumerate,
    Sample { paths: usize, key: StreamKey },
}

/// `p(t_M, x, y)` on the lattice `x + sqrt(2 dt) Z^n`, keyed by offset from `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Density {
    pub timeline: Timeline,
    pub start: Vec<f64>,
    pub probabilities: BTreeMap<Vec<i64>, f64>,
}

impl Density {
    pub fn total(&self) -> f64 {
        self.probabilities.values().sum()
    }

    pub fn get(&self, offset: &[i64]) -> f64 {
        self.probabilities.get(offset).copied().unwrap_or(0.0)
    }

    pub fn position(&self, offset: &[i64]) -> Vec<f64> {
        let h = self.timeline.spacing();
        self.start.iter().zip(offset).map(|(x, &k)| x + h * k as f64).collect()
    }
}

pub fn empirical_density(timeline: &Timeline, start: &[f64], method: DensityMethod) -> Result<Density> {
    let dim = start.len();
    if dim == 0 {
        return Err(Error::invalid("density needs at least one dimension"));
    }
    let mut counts: BTreeMap<Vec<i64>, u64> = BTreeMap::new();
    let total = match method {
        DensityMethod::Enumerate => {
            let bits = dim * timeline.steps;
            if bits > ENUMERATION_LIMIT {
                return Err(Error::EnumerationTooLarge {
                    bits,
                    limit: ENUMERATION_LIMIT,
                });
            }
            // axis j owns bits j, j + n, j + 2n, ...
            let masks: Vec<u64> = (0..dim)
                .map(|j| (0..timeline.steps).fold(0u64, |m, s| m | 1 << (s * dim + j)))
                .collect();
            let m = timeline.steps as i64;
            for code in 0..1u64 << bits {
                let offset = masks
                    .iter()
                    .map(|mask| 2 * (code & mask).count_ones() as i64 - m)
                    .collect();
                *counts.entry(offset).or_default() += 1;
            }
            1u64 << bits
        }
        DensityMethod::Sample { paths, key } => {
            if paths == 0 {
                return Err(Error::invalid("need at least one sample path"));
            }
            let mut signs = SignSource::new(key.rng());
            let mut path = PathSample::constant(timeline.steps, dim, 1);
            for _ in 0..paths {
                sample_path_into(&mut signs, &mut path);
                *counts.entry(path.sums()).or_default() += 1;
            }
            paths as u64
        }
    };
    let probabilities = counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / total as f64))
        .collect();
    Ok(Density {
        timeline: *timeline,
        start: start.to_vec(),
        probabilities,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CltRow {
    pub m: u64,
    pub x: f64,
    /// `sqrt(npq) B_n(m)`
    pub scaled_binomial: f64,
    /// `exp(-x^2 / 2) / sqrt(2 pi)`
    pub gaussian: f64,
}

impl CltRow {
    pub fn gap(&self) -> f64 {
        (self.scaled_binomial - self.gaussian).abs()
    }
}

/// Local central limit table for `Binomial(trials, p)` over all `m` with
/// standardized value in `[-2, 2]`. Binomial masses use summed log-factorials.
pub fn clt_check(trials: u64, p: f64) -> Result<Vec<CltRow>> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("success probability must lie in (0,1), got {p}")));
    }
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let n = trials as usize;
    let mut log_fact = vec![0.0f64; n + 1];
    for k in 1..=n {
        log_fact[k] = log_fact[k - 1] + (k as f64).ln();
    }
    let q = 1.0 - p;
    let mean = trials as f64 * p;
    let sd = (trials as f64 * p * q).sqrt();
    let lo = (mean - 2.0 * sd).ceil().max(0.0) as u64;
    let hi = (mean + 2.0 * sd).floor().min(trials as f64) as u64;
    let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    Ok((lo..=hi)
        .map(|m| {
            let mu = m as usize;
            let ln_b = log_fact[n] - log_fact[mu] - log_fact[n - mu]
                + m as f64 * p.ln()
                + (trials - m) as f64 * q.ln();
            let x = (m as f64 - mean) / sd;
            CltRow {
                m,
                x,
                scaled_binomial: sd * ln_b.exp(),
                gaussian: inv_sqrt_2pi * (-0.5 * x * x).exp(),
            }
        })
        .filter(|r| r.x.abs() <= 2.0)
        .collect())
}
