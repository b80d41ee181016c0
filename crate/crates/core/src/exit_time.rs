//! First-exit Monte Carlo for Dirichlet problems on walk lattices.
//!
//! The walk moves every coordinate by one lattice cell per step, exactly as
//! the position walk does, and stops at the first point outside the domain.
//! Functions harmonic for that walk (affine ones in particular) are
//! reproduced without bias.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::feynman_kac::{accumulate_mode, mode_terms, Moments};
use crate::mode_algebra::{CoefficientTensor, ModeSet, ModeSpectrum};
use crate::rng::{SignSource, StreamKey};
use crate::torus_fourier::{GridField, SpectralField, TorusGrid};
use crate::walk::mode_angles;

pub const EXIT_STEP_CAP: u64 = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    /// Interior `lo < k < hi` coordinatewise.
    Box { lo: Vec<i64>, hi: Vec<i64> },
    /// Cells of a periodic `cells^n` grid; `inside` in grid order.
    Mask { cells: usize, inside: Vec<bool> },
}

/// A set of interior points on `origin + spacing * Z^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeDomain {
    pub origin: Vec<f64>,
    pub spacing: f64,
    pub region: Region,
    grid: Option<TorusGrid>,
}

impl LatticeDomain {
    pub fn boxed(origin: Vec<f64>, spacing: f64, lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::invalid(format!("lattice spacing must be positive, got {spacing}")));
        }
        if origin.len() != lo.len() || lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: origin.len(),
                got: lo.len().min(hi.len()),
            });
        }
        if lo.iter().zip(&hi).any(|(l, h)| h - l < 2) {
            return Err(Error::invalid("box has no interior lattice points"));
        }
        Ok(Self {
            origin,
            spacing,
            region: Region::Box { lo, hi },
            grid: None,
        })
    }

    /// Unit interval `[0, 1]` cut into `cells` lattice cells.
    pub fn interval(cells: i64) -> Result<Self> {
        Self::boxed(vec![0.0], 1.0 / cells as f64, vec![0], vec![cells])
    }

    /// Torus domain from a cell mask; the lattice spacing is `1 / cells`.
    /// Rejects masks with no exterior cell and masks whose interior has
    /// points the walk can never leave.
    pub fn mask(dim: usize, cells: usize, inside: Vec<bool>) -> Result<Self> {
        let grid = TorusGrid::new(dim, cells)?;
        if inside.len() != grid.len() {
            return Err(Error::LengthMismatch {
                left: inside.len(),
                right: grid.len(),
            });
        }
        if inside.iter().all(|&b| b) {
            return Err(Error::NoBoundary);
        }
        let domain = Self {
            origin: vec![0.0; dim],
            spacing: 1.0 / cells as f64,
            region: Region::Mask { cells, inside },
            grid: Some(grid),
        };
        domain.check_escape()?;
        Ok(domain)
    }

    /// Mask from a one-component grid field; non-zero values are interior.
    pub fn from_mask_field(field: &GridField) -> Result<Self> {
        if field.components != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: field.components,
            });
        }
        let inside = field.values.iter().map(|&v| v != 0.0).collect();
        Self::mask(field.grid.dim, field.grid.points, inside)
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    /// Implied walk step `dt = spacing^2 / 2`.
    pub fn dt(&self) -> f64 {
        0.5 * self.spacing * self.spacing
    }

    pub fn contains(&self, k: &[i64]) -> bool {
        match &self.region {
            Region::Box { lo, hi } => k.iter().zip(lo).zip(hi).all(|((x, l), h)| l < x && x < h),
            Region::Mask { cells, inside } => {
                let g = *cells as i64;
                let flat = k.iter().fold(0usize, |acc, &x| acc * *cells + x.rem_euclid(g) as usize);
                inside[flat]
            }
        }
    }

    pub fn position(&self, k: &[i64]) -> Vec<f64> {
        self.origin.iter().zip(k).map(|(o, &x)| o + self.spacing * x as f64).collect()
    }

    /// Lattice coordinates of `x`, if it lies on the lattice up to `1e-9` cells.
    pub fn locate(&self, x: &[f64]) -> Option<Vec<i64>> {
        if x.len() != self.dim() {
            return None;
        }
        x.iter()
            .zip(&self.origin)
            .map(|(xi, o)| {
                let c = (xi - o) / self.spacing;
                let r = c.round();
                ((c - r).abs() <= 1e-9).then_some(r as i64)
            })
            .collect()
    }

    /// Walk moves: every sign vector in `{-1, +1}^n`.
    fn moves(&self) -> Vec<Vec<i64>> {
        let n = self.dim();
        (0..1u32 << n)
            .map(|code| (0..n).map(|j| if (code >> j) & 1 == 1 { 1 } else { -1 }).collect())
            .collect()
    }

    fn check_escape(&self) -> Result<()> {
        let grid = self.grid.expect("mask domains carry a grid");
        let moves = self.moves();
        let cells: Vec<Vec<i64>> = (0..grid.len())
            .map(|f| grid.coords(f).into_iter().map(|c| c as i64).collect())
            .collect();
        let mut escapes: Vec<bool> = cells.iter().map(|k| !self.contains(k)).collect();
        loop {
            let mut changed = false;
            for (f, k) in cells.iter().enumerate() {
                if escapes[f] {
                    continue;
                }
                let reach = moves.iter().any(|d| {
                    let next: Vec<usize> = k
                        .iter()
                        .zip(d)
                        .map(|(x, s)| (x + s).rem_euclid(grid.points as i64) as usize)
                        .collect();
                    escapes[grid.flat(&next)]
                });
                if reach {
                    escapes[f] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        match escapes.iter().position(|&e| !e) {
            None => Ok(()),
            Some(f) => Err(Error::invalid(format!(
                "interior cell {:?} cannot reach the boundary",
                grid.coords(f)
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExitConfig {
    pub samples: usize,
    pub seed: u64,
    /// Stream lane; distinct lanes give independent estimates under one seed.
    pub lane: u64,
    pub batch: usize,
    pub step_cap: u64,
}

impl ExitConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            lane: 0,
            batch: 1024,
            step_cap: EXIT_STEP_CAP,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExitEstimate {
    pub value: f64,
    pub std_error: f64,
    pub mean_steps: f64,
    pub steps_std_error: f64,
}

/// Runs the walk from `start` until it leaves the domain; returns the exit point and the step count.
fn walk_to_exit<R: rand_core::RngCore>(
    domain: &LatticeDomain,
    start: &[i64],
    signs: &mut SignSource<R>,
    cap: u64,
) -> Result<(Vec<i64>, u64)> {
    let mut k = start.to_vec();
    let mut steps = 0u64;
    while domain.contains(&k) {
        if steps == cap {
            return Err(Error::ExitTimeout { steps });
        }
        for x in k.iter_mut() {
            *x += signs.next_sign() as i64;
        }
        steps += 1;
    }
    Ok((k, steps))
}

/// Shifted running moments so that constant samples give exact means.
#[derive(Clone, Copy, Default)]
struct Shifted {
    anchor: Option<f64>,
    sum: f64,
    sum_sq: f64,
    min: f64,
    max: f64,
    count: usize,
}

impl Shifted {
    fn push(&mut self, v: f64) {
        let a = *self.anchor.get_or_insert(v);
        let d = v - a;
        self.sum += d;
        self.sum_sq += d * d;
        if self.count == 0 {
            self.min = v;
            self.max = v;
        } else {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
        self.count += 1;
    }

    fn merge(&mut self, o: &Shifted) {
        let Some(b) = o.anchor else { return };
        let a = *self.anchor.get_or_insert(b);
        let shift = b - a;
        let c = o.count as f64;
        self.sum += o.sum + shift * c;
        self.sum_sq += o.sum_sq + 2.0 * shift * o.sum + shift * shift * c;
        if self.count == 0 {
            self.min = o.min;
            self.max = o.max;
        } else {
            self.min = self.min.min(o.min);
            self.max = self.max.max(o.max);
        }
        self.count += o.count;
    }

    fn mean_and_error(&self) -> (f64, f64) {
        let a = self.anchor.unwrap_or(0.0);
        let n = self.count as f64;
        let m = self.sum / n;
        let mean = (a + m).clamp(self.min, self.max);
        let se = if self.count > 1 {
            ((self.sum_sq / n - m * m).max(0.0) / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        (mean, se)
    }
}

/// `E^x g(W_tau)` where `tau` is the first exit from `domain`.
pub fn solve_dirichlet_scalar(
    domain: &LatticeDomain,
    g: impl Fn(&[f64]) -> f64 + Sync,
    start: &[i64],
    config: &ExitConfig,
) -> Result<ExitEstimate> {
    if start.len() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            got: start.len(),
        });
    }
    if config.samples == 0 || config.batch == 0 {
        return Err(Error::invalid("sample count and batch size must be positive"));
    }
    if !domain.contains(start) {
        return Ok(ExitEstimate {
            value: g(&domain.position(start)),
            std_error: 0.0,
            mean_steps: 0.0,
            steps_std_error: 0.0,
        });
    }
    let batches = config.samples.div_ceil(config.batch);
    let parts = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut signs = SignSource::new(StreamKey::new(config.seed, config.lane, b as u64).rng());
            let (mut values, mut steps) = (Shifted::default(), Shifted::default());
            for _ in 0..config.batch.min(config.samples - b * config.batch) {
                let (k, s) = walk_to_exit(domain, start, &mut signs, config.step_cap)?;
                values.push(g(&domain.position(&k)));
                steps.push(s as f64);
            }
            Ok((values, steps))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut values, mut steps) = (Shifted::default(), Shifted::default());
    for (v, s) in &parts {
        values.merge(v);
        steps.merge(s);
    }
    let (value, std_error) = values.mean_and_error();
    let (mean_steps, steps_std_error) = steps.mean_and_error();
    Ok(ExitEstimate {
        value,
        std_error,
        mean_steps,
        steps_std_error,
    })
}

#[derive(Clone, Debug)]
pub struct SystemExitEstimate {
    pub values: Vec<Complex64>,
    pub std_errors: Vec<f64>,
    /// Always set: the system reading of the exit-time representation is an interpretation.
    pub experimental: bool,
}

impl SystemExitEstimate {
    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |m: f64, z| m.max(z.im.abs()))
    }
}

/// Mode contraction `sum_alpha exp(i B^{sqrt(2 A_alpha)}(tau)) f_alpha e^{i 2 pi alpha.x}`
/// stopped at the exit time of one base walk. Each mode's driver in eigen-direction
/// `j` is the base walk's coordinate `j`; the antithetic partner flips every driver
/// while keeping the same `tau`.
pub fn solve_dirichlet_system_experimental(
    tensor: &CoefficientTensor,
    domain: &LatticeDomain,
    boundary: &SpectralField,
    start: &[i64],
    config: &ExitConfig,
) -> Result<SystemExitEstimate> {
    let n = tensor.dim();
    if domain.dim() != n || boundary.dim != n || boundary.components != n || start.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: domain.dim(),
        });
    }
    if config.samples < 2 || config.samples % 2 != 0 || config.batch == 0 {
        return Err(Error::invalid(format!(
            "sample count must be even and at least 2, got {}",
            config.samples
        )));
    }
    let modes = ModeSet::new(tensor, boundary.radius)?;
    let x = domain.position(start);
    let terms = mode_terms(&modes, boundary, std::slice::from_ref(&x));
    let dt = domain.dt();
    let pairs = config.samples / 2;
    let batches = pairs.div_ceil(config.batch);
    let parts = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut signs = SignSource::new(StreamKey::new(config.seed, config.lane, b as u64).rng());
            let mut drivers = vec![0i64; n];
            let mut value = vec![Complex64::new(0.0, 0.0); n];
            let mut moments = Moments::new(n);
            for _ in 0..config.batch.min(pairs - b * config.batch) {
                let (exit, _) = walk_to_exit(domain, start, &mut signs, config.step_cap)?;
                for ((d, e), s) in drivers.iter_mut().zip(&exit).zip(start) {
                    *d = e - s;
                }
                value.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                for term in &terms {
                    let c = cosines_for_sums(term.spec, dt, &drivers);
                    accumulate_mode(term, &c, &mut value);
                }
                moments.push(&value);
            }
            Ok(moments)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = Moments::new(n);
    for part in &parts {
        total.merge(part);
    }
    let (mut values, mut errs) = total.estimates(n, true);
    Ok(SystemExitEstimate {
        values: values.remove(0),
        std_errors: errs.remove(0),
        experimental: true,
    })
}

fn cosines_for_sums(spec: &ModeSpectrum, dt: f64, sums: &[i64]) -> Vec<f64> {
    mode_angles(spec, dt, sums).into_iter().map(f64::cos).collect()
}
