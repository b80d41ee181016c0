//! Per-mode matrices of a constant-coefficient second-order system.
//!
//! A system `du_i/dt = sum_{j,k,l} a^{ij}_{kl} d_k d_l u_j` acts on the Fourier
//! mode `exp(i 2 pi alpha.x)` through the matrix
//! `A_alpha = (sum_{kl} a^{ij}_{kl} 4 pi^2 alpha_k alpha_l)_{ij}`, so each
//! coefficient vector evolves as `C_alpha(t) = exp(-A_alpha t) C_alpha(0)`.
//! This module assembles those matrices, factors them with a cyclic Jacobi
//! sweep and derives square roots and propagators from the factorization.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// `4 pi^2`, the factor carried by every mode matrix.
pub const FOUR_PI_SQ: f64 = 4.0 * PI * PI;

const SYMMETRY_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 50;
const CLAMP_TOL: f64 = 1e-12;

/// Constant coefficient tensor `a^{ij}_{kl}`; `i, j` index system components,
/// `k, l` index space directions. Stored row-major as `[i][j][k][l]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientTensor {
    n: usize,
    a: Vec<f64>,
}

impl CoefficientTensor {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            a: vec![0.0; n.pow(4)],
        }
    }

    pub fn from_entries(n: usize, a: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("tensor dimension must be positive"));
        }
        if a.len() != n.pow(4) {
            return Err(Error::LengthMismatch {
                left: a.len(),
                right: n.pow(4),
            });
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coefficient tensor".into()));
        }
        Ok(Self { n, a })
    }

    /// `c * delta_ij * delta_kl`: every component diffuses independently with rate `c`.
    pub fn scalar(n: usize, c: f64) -> Self {
        let mut t = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                t.set(i, i, k, k, c);
            }
        }
        t
    }

    /// Lamé operator `a lap(v) + grad(div v)`.
    ///
    /// The `v_{j,ji}` term is split evenly over `(k, l) = (i, j)` and `(j, i)`,
    /// which gives `A_alpha / 4 pi^2 = a |alpha|^2 I + alpha alpha^T`.
    pub fn lame(n: usize, a: f64) -> Self {
        let mut t = Self::scalar(n, a);
        for i in 0..n {
            for j in 0..n {
                let ij = t.get(i, j, i, j);
                t.set(i, j, i, j, ij + 0.5);
                let ji = t.get(i, j, j, i);
                t.set(i, j, j, i, ji + 0.5);
            }
        }
        t
    }

    /// Lamé tensor from the Poisson-type parameter `nu`, using `a = 1 - nu (n - 1)`.
    pub fn lame_from_nu(n: usize, nu: f64) -> Self {
        Self::lame(n, lame_coefficient(n, nu))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.n + j) * self.n + k) * self.n + l
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.a[self.offset(i, j, k, l)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        let o = self.offset(i, j, k, l);
        self.a[o] = v;
    }

    pub fn entries(&self) -> &[f64] {
        &self.a
    }

    /// Largest absolute row sum `max_i sum_{j,k,l} |a^{ij}_{kl}|`.
    pub fn row_sum_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let start = i * self.n.pow(3);
                self.a[start..start + self.n.pow(3)]
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Parses the plain-text tensor format: a dimension line followed by
    /// `i j k l value` rows with 1-based indices. Blank lines and `#`
    /// comments are ignored; entries not listed are zero.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(no, l)| (no + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let (line, dim_line) = lines.next().ok_or(Error::Parse {
            line: 0,
            message: "missing dimension line".into(),
        })?;
        let n: usize = dim_line.parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad dimension `{dim_line}`"),
        })?;
        if n == 0 {
            return Err(Error::Parse {
                line,
                message: "dimension must be positive".into(),
            });
        }
        let mut t = Self::zeros(n);
        for (line, row) in lines {
            let fields: Vec<&str> = row.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected `i j k l value`, got `{row}`"),
                });
            }
            let mut idx = [0usize; 4];
            for (slot, f) in idx.iter_mut().zip(&fields[..4]) {
                let v: usize = f.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("bad index `{f}`"),
                })?;
                if v == 0 || v > n {
                    return Err(Error::Parse {
                        line,
                        message: format!("index {v} outside 1..={n}"),
                    });
                }
                *slot = v - 1;
            }
            let value: f64 = fields[4].parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad value `{}`", fields[4]),
            })?;
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("tensor entry at line {line}")));
            }
            t.set(idx[0], idx[1], idx[2], idx[3], value);
        }
        Ok(t)
    }

    /// Inverse of [`CoefficientTensor::parse`]; zero entries are omitted.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.n);
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let v = self.get(i, j, k, l);
                        if v != 0.0 {
                            out.push_str(&format!("{} {} {} {} {v:?}\n", i + 1, j + 1, k + 1, l + 1));
                        }
                    }
                }
            }
        }
        out
    }
}

impl FromStr for CoefficientTensor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// `a = 1 - nu (n - 1)`.
pub fn lame_coefficient(n: usize, nu: f64) -> f64 {
    1.0 - nu * (n as f64 - 1.0)
}

/// Integer frequency vector `alpha`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<i64>);

impl MultiIndex {
    pub fn zero(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Sum of absolute entries.
    pub fn order(&self) -> u64 {
        self.0.iter().map(|a| a.unsigned_abs()).sum()
    }

    pub fn norm_sq(&self) -> i64 {
        self.0.iter().map(|a| a * a).sum()
    }

    pub fn radius(&self) -> u64 {
        self.0.iter().map(|a| a.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    pub fn all_nonzero(&self) -> bool {
        self.0.iter().all(|&a| a != 0)
    }

    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|a| -a).collect())
    }

    /// True for the representative of `{alpha, -alpha}` whose first non-zero
    /// entry is positive (and for the zero index).
    pub fn is_canonical(&self) -> bool {
        match self.0.iter().find(|&&a| a != 0) {
            Some(&a) => a > 0,
            None => true,
        }
    }

    pub fn canonical(&self) -> Self {
        if self.is_canonical() {
            self.clone()
        } else {
            self.neg()
        }
    }

    /// `alpha . x`
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(&a, &xi)| a as f64 * xi).sum()
    }

    /// All indices with `|alpha_i| <= radius`, in lexicographic order.
    pub fn cube(n: usize, radius: usize) -> Vec<MultiIndex> {
        let r = radius as i64;
        let side = 2 * radius + 1;
        let total = side.pow(n as u32);
        (0..total)
            .map(|mut flat| {
                let mut alpha = vec![0i64; n];
                for slot in alpha.iter_mut().rev() {
                    *slot = (flat % side) as i64 - r;
                    flat /= side;
                }
                MultiIndex(alpha)
            })
            .collect()
    }

    /// Position of this index in [`MultiIndex::cube`] order.
    pub fn cube_position(&self, radius: usize) -> Option<usize> {
        let side = 2 * radius as i64 + 1;
        let mut pos = 0i64;
        for &a in &self.0 {
            if a.unsigned_abs() as usize > radius {
                return None;
            }
            pos = pos * side + (a + radius as i64);
        }
        Some(pos as usize)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Assembles `A_alpha` including the `4 pi^2` factor.
///
/// The raw sum is symmetrized as `(M + M^T) / 2` after checking that its
/// asymmetry is below `1e-10 * max|M|`.
pub fn build_mode_matrix(tensor: &CoefficientTensor, alpha: &MultiIndex) -> Result<DMatrix<f64>> {
    let n = tensor.dim();
    if alpha.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: alpha.dim(),
        });
    }
    let af: Vec<f64> = alpha.0.iter().map(|&a| a as f64).collect();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                for l in 0..n {
                    s += tensor.get(i, j, k, l) * af[k] * af[l];
                }
            }
            m[(i, j)] = FOUR_PI_SQ * s;
        }
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("mode matrix {alpha}")));
    }
    let norm = max_abs(&m);
    let asym = max_abs(&(&m - m.transpose()));
    if asym > SYMMETRY_TOL * norm {
        return Err(Error::AsymmetricMode {
            alpha: alpha.0.clone(),
            asymmetry: asym,
            norm,
        });
    }
    Ok((&m + m.transpose()) * 0.5)
}

/// Symmetric eigendecomposition `A = Q diag(lambda) Q^T` by cyclic Jacobi
/// rotations. Eigenvalues come back in ascending order with matching columns
/// of `Q`.
pub fn eigendecompose(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigendecompose input".into()));
    }
    let norm = max_abs(a);
    if max_abs(&(a - a.transpose())) > SYMMETRY_TOL * norm.max(f64::MIN_POSITIVE) {
        return Err(Error::invalid("eigendecompose requires a symmetric matrix"));
    }

    let mut w = (a + a.transpose()) * 0.5;
    let mut q = DMatrix::<f64>::identity(n, n);
    let frob = w.norm();

    let off = |w: &DMatrix<f64>| -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for r in p + 1..n {
                s += w[(p, r)] * w[(p, r)];
            }
        }
        s.sqrt()
    };

    let mut converged = off(&w) <= f64::EPSILON * frob;
    let mut sweep = 0;
    while !converged {
        if sweep == MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps: MAX_SWEEPS,
                off_diagonal: off(&w),
            });
        }
        sweep += 1;
        for p in 0..n {
            for r in p + 1..n {
                let apr = w[(p, r)];
                if apr == 0.0 {
                    continue;
                }
                let app = w[(p, p)];
                let arr = w[(r, r)];
                // negligible relative to both diagonal entries: drop it
                if sweep > 3 && app.abs() + 100.0 * apr.abs() == app.abs()
                    && arr.abs() + 100.0 * apr.abs() == arr.abs()
                {
                    w[(p, r)] = 0.0;
                    w[(r, p)] = 0.0;
                    continue;
                }
                let theta = (arr - app) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut w, &mut q, p, r, c, s, t);
            }
        }
        converged = off(&w) <= f64::EPSILON * frob;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[(i, i)].total_cmp(&w[(j, j)]));
    let lambda = DVector::from_iterator(n, order.iter().map(|&i| w[(i, i)]));
    let q_sorted = DMatrix::from_fn(n, n, |row, col| q[(row, order[col])]);
    Ok((q_sorted, lambda))
}

fn rotate(w: &mut DMatrix<f64>, q: &mut DMatrix<f64>, p: usize, r: usize, c: f64, s: f64, t: f64) {
    let n = w.nrows();
    let apr = w[(p, r)];
    let tau = s / (1.0 + c);
    w[(p, p)] -= t * apr;
    w[(r, r)] += t * apr;
    w[(p, r)] = 0.0;
    w[(r, p)] = 0.0;
    for k in 0..n {
        if k == p || k == r {
            continue;
        }
        let akp = w[(k, p)];
        let akr = w[(k, r)];
        let new_kp = akp - s * (akr + tau * akp);
        let new_kr = akr + s * (akp - tau * akr);
        w[(k, p)] = new_kp;
        w[(p, k)] = new_kp;
        w[(k, r)] = new_kr;
        w[(r, k)] = new_kr;
    }
    for k in 0..n {
        let qkp = q[(k, p)];
        let qkr = q[(k, r)];
        q[(k, p)] = qkp - s * (qkr + tau * qkp);
        q[(k, r)] = qkr + s * (qkp - tau * qkr);
    }
}

/// `Q diag(d) Q^T`.
pub fn spectral_map(q: &DMatrix<f64>, d: impl IntoIterator<Item = f64>) -> DMatrix<f64> {
    let mut scaled = q.clone();
    for (mut col, di) in scaled.column_iter_mut().zip(d) {
        col *= di;
    }
    &scaled * q.transpose()
}

/// Factored mode matrix `A_alpha = Q diag(lambda) Q^T`.
#[derive(Clone, Debug)]
pub struct ModeSpectrum {
    pub alpha: MultiIndex,
    pub matrix: DMatrix<f64>,
    pub q: DMatrix<f64>,
    /// Ascending, clamped to be non-negative.
    pub lambda: DVector<f64>,
    /// `matrix` carries the `4 pi^2` factor.
    pub includes_two_pi_sq: bool,
}

impl ModeSpectrum {
    /// Assembles and factors `A_alpha`.
    ///
    /// Fails with `EllipticityViolation` when an eigenvalue is negative beyond
    /// round-off, or when `lambda_min <= 0` although every `alpha_i` is non-zero.
    pub fn new(tensor: &CoefficientTensor, alpha: &MultiIndex) -> Result<Self> {
        let matrix = build_mode_matrix(tensor, alpha)?;
        Self::from_matrix(alpha.clone(), matrix)
    }

    pub fn from_matrix(alpha: MultiIndex, matrix: DMatrix<f64>) -> Result<Self> {
        let (q, mut lambda) = eigendecompose(&matrix)?;
        let floor = -CLAMP_TOL * max_abs(&matrix).max(1.0);
        let lambda_min = lambda.iter().copied().fold(f64::INFINITY, f64::min);
        if lambda_min < floor || (alpha.all_nonzero() && lambda_min <= 0.0) {
            return Err(Error::EllipticityViolation {
                alpha: alpha.0.clone(),
                lambda_min,
            });
        }
        lambda.iter_mut().for_each(|l| *l = l.max(0.0));
        Ok(Self {
            alpha,
            matrix,
            q,
            lambda,
            includes_two_pi_sq: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda[0]
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda[self.dim() - 1]
    }
}

/// Spectra of every mode with `|alpha_i| <= radius`, in lexicographic order.
#[derive(Clone, Debug)]
pub struct ModeSet {
    pub radius: usize,
    pub modes: Vec<ModeSpectrum>,
}

impl ModeSet {
    pub fn new(tensor: &CoefficientTensor, radius: usize) -> Result<Self> {
        let modes = MultiIndex::cube(tensor.dim(), radius)
            .into_par_iter()
            .map(|alpha| ModeSpectrum::new(tensor, &alpha))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { radius, modes })
    }

    pub fn dim(&self) -> usize {
        self.modes[0].dim()
    }

    pub fn get(&self, alpha: &MultiIndex) -> Option<&ModeSpectrum> {
        alpha.cube_position(self.radius).map(|i| &self.modes[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &ModeSpectrum> {
        self.modes.iter()
    }
}

/// Symmetric square root `Q diag(sqrt(lambda)) Q^T`.
pub fn matrix_sqrt(spec: &ModeSpectrum) -> Result<DMatrix<f64>> {
    let floor = -CLAMP_TOL * max_abs(&spec.matrix).max(1.0);
    let mut roots = Vec::with_capacity(spec.dim());
    for &l in spec.lambda.iter() {
        if l < floor {
            return Err(Error::NegativeEigenvalue(l));
        }
        roots.push(l.max(0.0).sqrt());
    }
    Ok(spectral_map(&spec.q, roots))
}

/// Exact mode propagator `exp(-A_alpha t)`.
pub fn propagator(spec: &ModeSpectrum, t: f64) -> Result<DMatrix<f64>> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    Ok(spectral_map(&spec.q, spec.lambda.iter().map(|l| (-l * t).exp())))
}

/// Minimum eigenvalue of every mode with `|alpha_i| <= radius`.
#[derive(Clone, Debug)]
pub struct EllipticityReport {
    pub radius: usize,
    pub entries: Vec<(MultiIndex, f64)>,
    /// Modes with all `alpha_i != 0` whose minimum eigenvalue is not positive.
    pub violations: Vec<MultiIndex>,
}

impl EllipticityReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Tabulates `lambda_min(A_alpha)` over the cube of radius `radius` without
/// failing on violations.
pub fn ellipticity_table(tensor: &CoefficientTensor, radius: usize) -> Result<EllipticityReport> {
    if radius < 1 {
        return Err(Error::invalid("ellipticity radius must be at least 1"));
    }
    let mut entries = Vec::new();
    let mut violations = Vec::new();
    for alpha in MultiIndex::cube(tensor.dim(), radius) {
        let m = build_mode_matrix(tensor, &alpha)?;
        let (_, lambda) = eigendecompose(&m)?;
        let lmin = lambda[0];
        if alpha.all_nonzero() && lmin <= 0.0 {
            violations.push(alpha.clone());
        }
        entries.push((alpha, lmin));
    }
    Ok(EllipticityReport {
        radius,
        entries,
        violations,
    })
}

/// Like [`ellipticity_table`], but fails on the first violating mode.
pub fn ellipticity_report(tensor: &CoefficientTensor, radius: usize) -> Result<EllipticityReport> {
    let report = ellipticity_table(tensor, radius)?;
    if let Some(alpha) = report.violations.first() {
        let lambda_min = report
            .entries
            .iter()
            .find(|(a, _)| a == alpha)
            .map(|(_, l)| *l)
            .unwrap_or(f64::NAN);
        return Err(Error::EllipticityViolation {
            alpha: alpha.0.clone(),
            lambda_min,
        });
    }
    Ok(report)
}
