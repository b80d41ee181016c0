//! Parabolic Cauchy problems `du/dt = sum A^{ij} d_i d_j u` on the torus,
//! solved both exactly per Fourier mode and by the generalized-walk estimator
//! `u(t,x) = E[sum_alpha exp(i B^{sqrt(2 A_alpha)}) f_alpha e^{i 2 pi alpha.x}]`.
//!
//! Modes `alpha` and `-alpha` have identical mode matrices and share one
//! path stream, keyed by the canonical member of the pair. With antithetic
//! pairing every pair contributes `Q diag(cos theta) Q^T` to both, which keeps
//! estimates of real data real.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mode_algebra::{propagator, CoefficientTensor, ModeSet, ModeSpectrum, MultiIndex};
use crate::rng::{SignSource, StreamKey};
use crate::torus_fourier::{PhaseTable, SpectralField, TorusGrid};
use crate::walk::{
    empirical_density, mode_angles, mode_factor_closed_form, sample_path_into, DensityMethod, PathSample, Timeline,
};

/// Largest `n * M` for exhaustive path enumeration inside the solver.
pub const SOLVER_ENUMERATION_LIMIT: usize = 20;

pub const DEFAULT_BATCH: usize = 256;

#[derive(Clone, Debug)]
pub struct CauchyProblem {
    pub tensor: CoefficientTensor,
    pub initial: SpectralField,
    pub time: f64,
    modes: ModeSet,
}

impl CauchyProblem {
    /// Validates shapes and factors every retained mode; an elliptic defect
    /// anywhere in the cube is reported as `EllipticityViolation`.
    pub fn new(tensor: CoefficientTensor, initial: SpectralField, time: f64) -> Result<Self> {
        let n = tensor.dim();
        if initial.dim != n {
            return Err(Error::DimensionMismatch { expected: n, got: initial.dim });
        }
        if initial.components != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: initial.components,
            });
        }
        if !(time >= 0.0) {
            return Err(Error::NegativeTime(time));
        }
        let modes = ModeSet::new(&tensor, initial.radius)?;
        Ok(Self {
            tensor,
            initial,
            time,
            modes,
        })
    }

    pub fn dim(&self) -> usize {
        self.tensor.dim()
    }

    pub fn radius(&self) -> usize {
        self.initial.radius
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    /// Same data, different horizon.
    pub fn at_time(&self, time: f64) -> Result<Self> {
        if !(time >= 0.0) {
            return Err(Error::NegativeTime(time));
        }
        Ok(Self { time, ..self.clone() })
    }

    fn map_modes(&self, f: impl Fn(&ModeSpectrum) -> Result<DMatrix<f64>>) -> Result<SpectralField> {
        let mut out = self.initial.clone();
        let comps = out.components;
        for (pos, spec) in self.modes.iter().enumerate() {
            let m = f(spec)?;
            let slot = &mut out.coeffs[pos * comps..(pos + 1) * comps];
            let input = slot.to_vec();
            for (i, s) in slot.iter_mut().enumerate() {
                *s = (0..comps).map(|j| input[j] * m[(i, j)]).sum();
            }
        }
        Ok(out)
    }
}

/// Coefficients `exp(-A_alpha t) f_alpha` of the exact solution.
pub fn propagate_spectrum(problem: &CauchyProblem) -> Result<SpectralField> {
    let t = problem.time;
    problem.map_modes(|spec| propagator(spec, t))
}

/// Coefficients of the exact expectation of the estimator at step `dt`.
pub fn closed_form_spectrum(problem: &CauchyProblem, timeline: &Timeline) -> Result<SpectralField> {
    problem.map_modes(|spec| Ok(mode_factor_closed_form(spec, timeline)))
}

fn evaluate(field: &SpectralField, points: &[Vec<f64>]) -> Result<Vec<Vec<Complex64>>> {
    points
        .iter()
        .map(|x| {
            if x.len() != field.dim {
                return Err(Error::DimensionMismatch {
                    expected: field.dim,
                    got: x.len(),
                });
            }
            Ok(field.evaluate_complex(x))
        })
        .collect()
}

/// `u(t, x) = sum_alpha exp(-A_alpha t) f_alpha e^{i 2 pi alpha.x}` at each point.
pub fn solve_spectral_oracle(problem: &CauchyProblem, points: &[Vec<f64>]) -> Result<Vec<Vec<Complex64>>> {
    evaluate(&propagate_spectrum(problem)?, points)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sampling {
    /// `samples` paths per mode in antithetic pairs; `samples` even and at least 2.
    Random { samples: usize, seed: u64, batch: usize },
    /// Every path of the timeline, `n * M <= SOLVER_ENUMERATION_LIMIT`.
    Enumerate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McConfig {
    pub dt: f64,
    pub sampling: Sampling,
}

impl McConfig {
    pub fn random(dt: f64, samples: usize, seed: u64) -> Self {
        Self {
            dt,
            sampling: Sampling::Random {
                samples,
                seed,
                batch: DEFAULT_BATCH,
            },
        }
    }

    pub fn enumerate(dt: f64) -> Self {
        Self {
            dt,
            sampling: Sampling::Enumerate,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RngProvenance {
    pub seed: u64,
    pub batch: usize,
    pub batches: usize,
    /// Streams per batch, one per canonical mode.
    pub streams: usize,
    pub samples: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Timings {
    pub oracle_seconds: f64,
    pub monte_carlo_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub points: Vec<Vec<f64>>,
    pub timeline: Timeline,
    pub radius: usize,
    pub mc_values: Vec<Vec<Complex64>>,
    /// Zero under enumeration.
    pub std_errors: Vec<Vec<f64>>,
    pub oracle_values: Vec<Vec<Complex64>>,
    pub closed_form_values: Vec<Vec<Complex64>>,
    /// Energy of the initial data outside the retained modes.
    pub truncation_tail: f64,
    /// `None` under enumeration.
    pub rng: Option<RngProvenance>,
    pub pairs: usize,
    pub timings: Timings,
}

impl SolveReport {
    pub fn max_imag(&self) -> f64 {
        self.mc_values
            .iter()
            .flatten()
            .fold(0.0, |m: f64, z| m.max(z.im.abs()))
    }

    /// Largest `|mc - oracle| / std_error` over points and components. A zero
    /// standard error scores 0 when the values agree and infinity otherwise.
    pub fn max_z_score(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for ((mc, or), se) in self.mc_values.iter().zip(&self.oracle_values).zip(&self.std_errors) {
            for ((a, b), s) in mc.iter().zip(or).zip(se) {
                let gap = (a - b).norm();
                let z = match (*s > 0.0, gap > 0.0) {
                    (true, _) => gap / s,
                    (false, false) => 0.0,
                    (false, true) => f64::INFINITY,
                };
                worst = worst.max(z);
            }
        }
        worst
    }
}

/// Per canonical mode: eigenvectors and the data projected onto them at each point.
pub(crate) struct ModeTerm<'a> {
    index: usize,
    pub(crate) spec: &'a ModeSpectrum,
    /// `[point][j] = q_j^T (f_alpha e^{i theta} + f_{-alpha} e^{-i theta})`
    projected: Vec<Vec<Complex64>>,
}

pub(crate) fn mode_terms<'a>(modes: &'a ModeSet, data: &SpectralField, points: &[Vec<f64>]) -> Vec<ModeTerm<'a>> {
    let n = modes.dim();
    let phases: Vec<PhaseTable> = points.iter().map(|x| PhaseTable::new(x, data.radius, 1.0)).collect();
    modes
        .iter()
        .enumerate()
        .filter(|(_, spec)| spec.alpha.is_canonical())
        .map(|(index, spec)| {
            let alpha = &spec.alpha;
            let f_pos = data.get(alpha).unwrap();
            let f_neg = (!alpha.is_zero()).then(|| data.get(&alpha.neg()).unwrap());
            let projected = phases
                .iter()
                .map(|ph| {
                    let e = ph.phase(alpha);
                    let w: Vec<Complex64> = (0..n)
                        .map(|i| match f_neg {
                            Some(g) => f_pos[i] * e + g[i] * e.conj(),
                            None => f_pos[i] * e,
                        })
                        .collect();
                    (0..n)
                        .map(|j| (0..n).map(|i| w[i] * spec.q[(i, j)]).sum())
                        .collect()
                })
                .collect();
            ModeTerm { index, spec, projected }
        })
        .collect()
}

/// Adds `Q diag(cosines) Q^T w` for every point into `out` (`[point * n + i]`).
pub(crate) fn accumulate_mode(term: &ModeTerm, cosines: &[f64], out: &mut [Complex64]) {
    let n = cosines.len();
    for (p, proj) in term.projected.iter().enumerate() {
        for j in 0..n {
            let s = proj[j] * cosines[j];
            for i in 0..n {
                out[p * n + i] += s * term.spec.q[(i, j)];
            }
        }
    }
}

/// Pair moments; the mean uses Neumaier-compensated sums.
#[derive(Clone)]
pub(crate) struct Moments {
    sum: Vec<Complex64>,
    carry: Vec<Complex64>,
    sum_sq: Vec<f64>,
    pairs: usize,
}

fn compensated_add(sum: &mut f64, carry: &mut f64, v: f64) {
    let t = *sum + v;
    if sum.abs() >= v.abs() {
        *carry += (*sum - t) + v;
    } else {
        *carry += (v - t) + *sum;
    }
    *sum = t;
}

impl Moments {
    pub(crate) fn new(len: usize) -> Self {
        Self {
            sum: vec![Complex64::new(0.0, 0.0); len],
            carry: vec![Complex64::new(0.0, 0.0); len],
            sum_sq: vec![0.0; len],
            pairs: 0,
        }
    }

    fn add(&mut self, i: usize, v: Complex64) {
        compensated_add(&mut self.sum[i].re, &mut self.carry[i].re, v.re);
        compensated_add(&mut self.sum[i].im, &mut self.carry[i].im, v.im);
    }

    pub(crate) fn push(&mut self, value: &[Complex64]) {
        for (i, v) in value.iter().enumerate() {
            self.add(i, *v);
            self.sum_sq[i] += v.norm_sqr();
        }
        self.pairs += 1;
    }

    pub(crate) fn merge(&mut self, other: &Moments) {
        for i in 0..self.sum.len() {
            self.add(i, other.sum[i]);
            self.add(i, other.carry[i]);
            self.sum_sq[i] += other.sum_sq[i];
        }
        self.pairs += other.pairs;
    }

    fn total(&self, i: usize) -> Complex64 {
        self.sum[i] + self.carry[i]
    }

    /// Means and standard errors grouped `width` to a row; errors are zero
    /// unless `sampled` and there are at least two pairs.
    pub(crate) fn estimates(&self, width: usize, sampled: bool) -> (Vec<Vec<Complex64>>, Vec<Vec<f64>>) {
        let p = self.pairs as f64;
        let means: Vec<Complex64> = (0..self.sum.len()).map(|i| self.total(i) / p).collect();
        let errs: Vec<f64> = if sampled && self.pairs > 1 {
            self.sum_sq
                .iter()
                .zip(&means)
                .map(|(q, m)| ((q / p - m.norm_sqr()).max(0.0) / (p - 1.0)).sqrt())
                .collect()
        } else {
            vec![0.0; means.len()]
        };
        (
            means.chunks(width).map(<[_]>::to_vec).collect(),
            errs.chunks(width).map(<[_]>::to_vec).collect(),
        )
    }
}

pub(crate) fn cosines(spec: &ModeSpectrum, dt: f64, path: &PathSample) -> Vec<f64> {
    mode_angles(spec, dt, &path.sums()).into_iter().map(f64::cos).collect()
}

fn run_batch(terms: &[ModeTerm], timeline: &Timeline, n: usize, seed: u64, batch: usize, pairs: usize, len: usize) -> Moments {
    let mut signs: Vec<_> = terms
        .iter()
        .map(|t| SignSource::new(StreamKey::new(seed, t.index as u64, batch as u64).rng()))
        .collect();
    let mut path = PathSample::constant(timeline.steps, n, 1);
    let mut value = vec![Complex64::new(0.0, 0.0); len];
    let mut moments = Moments::new(len);
    for _ in 0..pairs {
        value.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (term, src) in terms.iter().zip(signs.iter_mut()) {
            sample_path_into(src, &mut path);
            accumulate_mode(term, &cosines(term.spec, timeline.dt, &path), &mut value);
        }
        moments.push(&value);
    }
    moments
}

fn enumerate_pairs(terms: &[ModeTerm], timeline: &Timeline, n: usize, len: usize) -> Result<Moments> {
    let bits = n * timeline.steps;
    if bits > SOLVER_ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            bits,
            limit: SOLVER_ENUMERATION_LIMIT,
        });
    }
    let mut moments = Moments::new(len);
    let mut value = vec![Complex64::new(0.0, 0.0); len];
    // codes with the top bit clear, each paired with its complement
    let half = if bits == 0 { 1 } else { 1u64 << (bits - 1) };
    for code in 0..half {
        let path = PathSample::from_code(code, timeline.steps, n);
        value.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for term in terms {
            accumulate_mode(term, &cosines(term.spec, timeline.dt, &path), &mut value);
        }
        moments.push(&value);
    }
    Ok(moments)
}

/// Monte-Carlo estimate at each point, with the exact and discrete-time
/// reference values for the same problem.
pub fn solve_monte_carlo(problem: &CauchyProblem, points: &[Vec<f64>], config: &McConfig) -> Result<SolveReport> {
    let n = problem.dim();
    for x in points {
        if x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x.len() });
        }
    }
    let timeline = Timeline::with_horizon(problem.time, config.dt)?;

    let clock = Instant::now();
    let oracle_values = solve_spectral_oracle(problem, points)?;
    let closed_form_values = evaluate(&closed_form_spectrum(problem, &timeline)?, points)?;
    let oracle_seconds = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let terms = mode_terms(&problem.modes, &problem.initial, points);
    let len = points.len() * n;
    let (moments, rng) = match config.sampling {
        Sampling::Random { samples, seed, batch } => {
            if samples < 2 || samples % 2 != 0 {
                return Err(Error::invalid(format!("sample count must be even and at least 2, got {samples}")));
            }
            if batch == 0 {
                return Err(Error::invalid("batch size must be positive"));
            }
            let pairs = samples / 2;
            let batches = pairs.div_ceil(batch);
            let parts: Vec<Moments> = (0..batches)
                .into_par_iter()
                .map(|b| {
                    let size = batch.min(pairs - b * batch);
                    run_batch(&terms, &timeline, n, seed, b, size, len)
                })
                .collect();
            let mut total = Moments::new(len);
            for part in &parts {
                total.merge(part);
            }
            let rng = RngProvenance {
                seed,
                batch,
                batches,
                streams: terms.len(),
                samples,
            };
            (total, Some(rng))
        }
        Sampling::Enumerate => (enumerate_pairs(&terms, &timeline, n, len)?, None),
    };
    let monte_carlo_seconds = clock.elapsed().as_secs_f64();

    let (mc_values, std_errors) = moments.estimates(n, rng.is_some());

    Ok(SolveReport {
        points: points.to_vec(),
        timeline,
        radius: problem.radius(),
        mc_values,
        std_errors,
        oracle_values,
        closed_form_values,
        truncation_tail: problem.initial.tail_mass,
        rng,
        pairs: moments.pairs,
        timings: Timings {
            oracle_seconds,
            monte_carlo_seconds,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathspaceEstimate {
    pub value: f64,
    /// Zero under enumeration.
    pub std_error: f64,
}

/// `E^x f(W_t)` for the scalar walk on `x + sqrt(2 dt) Z^n`.
pub fn solve_scalar_pathspace(
    f: impl Fn(&[f64]) -> f64,
    timeline: &Timeline,
    start: &[f64],
    method: DensityMethod,
) -> Result<PathspaceEstimate> {
    match method {
        DensityMethod::Enumerate => {
            let density = empirical_density(timeline, start, DensityMethod::Enumerate)?;
            let value = density
                .probabilities
                .iter()
                .map(|(k, p)| p * f(&density.position(k)))
                .sum();
            Ok(PathspaceEstimate { value, std_error: 0.0 })
        }
        DensityMethod::Sample { paths, key } => {
            if paths < 2 {
                return Err(Error::invalid("need at least two sample paths"));
            }
            let mut signs = SignSource::new(key.rng());
            let mut path = PathSample::constant(timeline.steps, start.len(), 1);
            let h = timeline.spacing();
            let mut end = vec![0.0; start.len()];
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..paths {
                sample_path_into(&mut signs, &mut path);
                for ((e, x), k) in end.iter_mut().zip(start).zip(path.sums()) {
                    *e = x + h * k as f64;
                }
                let v = f(&end);
                sum += v;
                sum_sq += v * v;
            }
            let s = paths as f64;
            let mean = sum / s;
            let var = (sum_sq / s - mean * mean).max(0.0) * s / (s - 1.0);
            Ok(PathspaceEstimate {
                value: mean,
                std_error: (var / s).sqrt(),
            })
        }
    }
}

/// Spatial means of the solution against the mean of the data.
#[derive(Clone, Debug)]
pub struct MeanPreservation {
    pub expected: Vec<Complex64>,
    /// Zero-mode coefficient of the exact solution.
    pub oracle: Vec<Complex64>,
    /// Average of the estimator over a `(2K+1)^n` grid, with an upper bound on its standard error.
    pub monte_carlo: Option<(Vec<Complex64>, Vec<f64>)>,
}

impl MeanPreservation {
    pub fn oracle_exact(&self) -> bool {
        self.oracle == self.expected
    }

    /// Largest `|mc mean - expected| / bound`; zero when both vanish.
    pub fn monte_carlo_z(&self) -> Option<f64> {
        self.monte_carlo.as_ref().map(|(means, bounds)| {
            means
                .iter()
                .zip(&self.expected)
                .zip(bounds)
                .map(|((m, e), b)| {
                    let gap = (m - e).norm();
                    if gap == 0.0 {
                        0.0
                    } else {
                        gap / b
                    }
                })
                .fold(0.0, f64::max)
        })
    }
}

pub fn mean_preservation_check(problem: &CauchyProblem, mc: Option<&McConfig>) -> Result<MeanPreservation> {
    let zero = MultiIndex::zero(problem.dim());
    let expected = problem.initial.get(&zero).unwrap().to_vec();
    let oracle = propagate_spectrum(problem)?.get(&zero).unwrap().to_vec();
    let monte_carlo = match mc {
        None => None,
        Some(cfg) => {
            let grid = TorusGrid::new(problem.dim(), 2 * problem.radius() + 1)?;
            let report = solve_monte_carlo(problem, &grid.points(), cfg)?;
            let count = grid.len() as f64;
            let n = problem.dim();
            let mut means = vec![Complex64::new(0.0, 0.0); n];
            let mut bounds = vec![0.0; n];
            for (vals, errs) in report.mc_values.iter().zip(&report.std_errors) {
                for i in 0..n {
                    means[i] += vals[i] / count;
                    bounds[i] += errs[i] / count;
                }
            }
            Some((means, bounds))
        }
    };
    Ok(MeanPreservation {
        expected,
        oracle,
        monte_carlo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus_fourier::{forward, GridField};
    use std::f64::consts::PI;

    fn cosine_problem(time: f64) -> CauchyProblem {
        let mut f = SpectralField::zeros(1, 1, 1);
        f.set_real_mode(&MultiIndex(vec![1]), &[Complex64::new(0.5, 0.0)]).unwrap();
        CauchyProblem::new(CoefficientTensor::scalar(1, 1.0), f, time).unwrap()
    }

    fn test_points() -> Vec<Vec<f64>> {
        (0..16).map(|k| vec![k as f64 / 16.0 + 1.0 / 32.0]).collect()
    }

    fn lame_problem(radius: usize, time: f64, seed: u64) -> CauchyProblem {
        let mut rng = StreamKey::aux(seed, 0, 0).rng();
        let f = SpectralField::random_real(2, 2, radius, radius, &mut rng);
        CauchyProblem::new(CoefficientTensor::lame(2, 1.0), f, time).unwrap()
    }

    #[test]
    fn shape_checks() {
        let f = SpectralField::zeros(2, 1, 2);
        assert!(matches!(
            CauchyProblem::new(CoefficientTensor::lame(2, 1.0), f, 0.1),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            CauchyProblem::new(CoefficientTensor::scalar(1, 1.0), SpectralField::zeros(1, 1, 1), -1.0),
            Err(Error::NegativeTime(_))
        ));
    }

    #[test]
    fn oracle_at_time_zero_reconstructs_data() {
        let p = lame_problem(3, 0.0, 1);
        let pts: Vec<Vec<f64>> = vec![vec![0.1, 0.7], vec![0.33, 0.25], vec![0.9, 0.05]];
        let u = solve_spectral_oracle(&p, &pts).unwrap();
        for (x, v) in pts.iter().zip(&u) {
            let f = p.initial.evaluate_complex(x);
            for (a, b) in v.iter().zip(&f) {
                assert!((a - b).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn scalar_cosine_decays_at_four_pi_squared() {
        let p = cosine_problem(0.01);
        let u = solve_spectral_oracle(&p, &test_points()).unwrap();
        let rate = 4.0 * PI * PI * 0.01;
        assert!((rate - 0.3948f64).abs() < 5e-5);
        let amp = (-rate).exp();
        for (x, v) in test_points().iter().zip(&u) {
            assert!((v[0].re - amp * (2.0 * PI * x[0]).cos()).abs() < 1e-14);
            assert!(v[0].im.abs() < 1e-15);
        }
    }

    #[test]
    fn lame_mode_decays_by_eigenvalues() {
        let mut f = SpectralField::zeros(2, 2, 1);
        let alpha = MultiIndex(vec![1, 0]);
        f.set_real_mode(&alpha, &[Complex64::new(0.5, 0.0), Complex64::new(0.0, 0.0)]).unwrap();
        let t = 0.003;
        let p = CauchyProblem::new(CoefficientTensor::lame(2, 1.0), f, t).unwrap();
        let u = propagate_spectrum(&p).unwrap();
        // A_(1,0) / 4 pi^2 = diag(2, 1), so the first component decays at rate 8 pi^2
        let c = u.get(&alpha).unwrap();
        assert!((c[0].re - 0.5 * (-8.0 * PI * PI * t).exp()).abs() < 1e-15);
        assert!(c[1].norm() < 1e-15);
    }

    #[test]
    fn oracle_semigroup() {
        let p = lame_problem(3, 0.0, 2);
        let whole = propagate_spectrum(&p.at_time(0.007).unwrap()).unwrap();
        let first = propagate_spectrum(&p.at_time(0.003).unwrap()).unwrap();
        let second = CauchyProblem::new(p.tensor.clone(), first, 0.004).unwrap();
        let twice = propagate_spectrum(&second).unwrap();
        for (a, b) in whole.coeffs.iter().zip(&twice.coeffs) {
            assert!((a - b).norm() <= 1e-9 * a.norm().max(1e-300) + 1e-15);
        }
    }

    #[test]
    fn zero_mode_only_is_exact() {
        let mut f = SpectralField::zeros(2, 2, 2);
        f.set_real_mode(&MultiIndex::zero(2), &[Complex64::new(1.5, 0.0), Complex64::new(-0.25, 0.0)]).unwrap();
        let p = CauchyProblem::new(CoefficientTensor::lame(2, 1.0), f, 0.01).unwrap();
        let r = solve_monte_carlo(&p, &[vec![0.2, 0.4], vec![0.8, 0.1]], &McConfig::random(1e-3, 20, 3)).unwrap();
        for (v, e) in r.mc_values.iter().zip(&r.std_errors) {
            assert_eq!(v[0], Complex64::new(1.5, 0.0));
            assert_eq!(v[1], Complex64::new(-0.25, 0.0));
            assert!(e.iter().all(|&s| s == 0.0));
        }
    }

    #[test]
    fn enumeration_equals_closed_form_contraction() {
        let p = lame_problem(2, 0.006, 4);
        let pts = vec![vec![0.1, 0.2], vec![0.5, 0.77]];
        let r = solve_monte_carlo(&p, &pts, &McConfig::enumerate(1e-3)).unwrap();
        assert_eq!(r.pairs, 1 << 11);
        for (a, b) in r.mc_values.iter().flatten().zip(r.closed_form_values.iter().flatten()) {
            assert!((a - b).norm() <= 1e-14, "{a} vs {b}");
        }
        let too_big = McConfig::enumerate(1e-4);
        assert!(matches!(solve_monte_carlo(&p, &pts, &too_big), Err(Error::EnumerationTooLarge { .. })));
    }

    #[test]
    fn sample_count_must_be_even() {
        let p = cosine_problem(0.01);
        for s in [0, 1, 7] {
            assert!(solve_monte_carlo(&p, &test_points(), &McConfig::random(1e-3, s, 1)).is_err());
        }
    }

    #[test]
    fn scalar_heat_monte_carlo_matches_oracle() {
        let p = cosine_problem(0.01);
        let r = solve_monte_carlo(&p, &test_points(), &McConfig::random(1e-3, 10_000, 2024)).unwrap();
        assert!(r.max_z_score() <= 3.0, "z {}", r.max_z_score());
        assert!(r.max_imag() <= 1e-10);
    }

    #[test]
    fn discretization_gap_halves() {
        let p = cosine_problem(0.01);
        let pts = test_points();
        let exact = solve_spectral_oracle(&p, &pts).unwrap();
        let gap = |dt: f64| {
            let tl = Timeline::with_horizon(0.01, dt).unwrap();
            let cf = evaluate(&closed_form_spectrum(&p, &tl).unwrap(), &pts).unwrap();
            cf.iter()
                .flatten()
                .zip(exact.iter().flatten())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
        };
        let ratio = gap(1e-3) / gap(5e-4);
        assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn real_data_gives_real_estimates() {
        let p = lame_problem(3, 0.005, 5);
        let pts: Vec<Vec<f64>> = (0..5).map(|k| vec![0.13 * k as f64, 0.71 - 0.09 * k as f64]).collect();
        let r = solve_monte_carlo(&p, &pts, &McConfig::random(1e-3, 200, 6)).unwrap();
        let scale = 1.0 + p.initial.coeffs.iter().map(|c| c.norm()).sum::<f64>();
        assert!(r.max_imag() <= 1e-10 * scale);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let p = lame_problem(2, 0.005, 7);
        let pts = vec![vec![0.3, 0.6], vec![0.05, 0.95]];
        let cfg = McConfig {
            dt: 1e-3,
            sampling: Sampling::Random { samples: 600, seed: 9, batch: 32 },
        };
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| solve_monte_carlo(&p, &pts, &cfg).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.mc_values, b.mc_values);
        assert_eq!(a.std_errors, b.std_errors);
        assert_eq!(a.rng, b.rng);
    }

    #[test]
    fn standard_error_scales_with_root_samples() {
        let p = cosine_problem(0.01);
        let pts = test_points();
        let mut ratios = Vec::new();
        for seed in 0..5 {
            let small = solve_monte_carlo(&p, &pts, &McConfig::random(1e-3, 2_000, seed)).unwrap();
            let large = solve_monte_carlo(&p, &pts, &McConfig::random(1e-3, 8_000, seed + 100)).unwrap();
            let mean = |r: &SolveReport| r.std_errors.iter().flatten().sum::<f64>() / 16.0;
            ratios.push(mean(&large) / mean(&small));
        }
        for r in ratios {
            assert!((0.4..=0.6).contains(&r), "ratio {r}");
        }
    }

    #[test]
    fn pathspace_examples() {
        let tl = Timeline::new(1e-3, 12).unwrap();
        let c = solve_scalar_pathspace(|_| 2.5, &tl, &[0.3, 0.4], DensityMethod::Enumerate).unwrap();
        assert_eq!(c.value, 2.5);
        let sq = solve_scalar_pathspace(|y| y[0] * y[0], &tl, &[0.0], DensityMethod::Enumerate).unwrap();
        assert!((sq.value - 2.0 * tl.horizon()).abs() < 1e-15);
        let sampled = solve_scalar_pathspace(
            |y| y[0],
            &Timeline::new(1e-3, 100).unwrap(),
            &[0.2],
            DensityMethod::Sample { paths: 10_000, key: StreamKey::new(8, 0, 0) },
        )
        .unwrap();
        assert!((sampled.value - 0.2).abs() <= 3.0 * sampled.std_error);
    }

    #[test]
    fn means_are_preserved() {
        let p = lame_problem(2, 0.01, 10);
        let check = mean_preservation_check(&p, Some(&McConfig::random(1e-3, 400, 11))).unwrap();
        assert!(check.oracle_exact());
        assert!(check.monte_carlo_z().unwrap() <= 3.0);

        let mut f = p.initial.clone();
        f.get_mut(&MultiIndex::zero(2)).unwrap().iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        let q = CauchyProblem::new(p.tensor.clone(), f, 0.01).unwrap();
        let check = mean_preservation_check(&q, None).unwrap();
        assert!(check.oracle.iter().all(|c| *c == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn problem_from_grid_data() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let data = GridField::from_fn(grid, 2, |x| vec![(2.0 * PI * x[0]).cos(), (2.0 * PI * x[1]).sin()]);
        let p = CauchyProblem::new(CoefficientTensor::lame(2, 1.0), forward(&data, 2).unwrap(), 0.0).unwrap();
        let u = solve_spectral_oracle(&p, &[vec![0.25, 0.25]]).unwrap();
        assert!((u[0][0].re - 0.0).abs() < 1e-14);
        assert!((u[0][1].re - 1.0).abs() < 1e-14);
        assert!(p.initial.tail_mass < 1e-14);
    }
}
