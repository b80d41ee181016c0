//! Vector fields on the unit torus `[0,1)^n` and their truncated Fourier
//! representation `f(x) = sum_alpha f_alpha exp(i 2 pi alpha.x)`, plus the
//! periodic heat kernels built from the same sums.
//!
//! Transforms are direct sums (no FFT), separable over axes. Sums over modes
//! always run in lexicographic `alpha` order.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::mode_algebra::{propagator, ModeSet, MultiIndex, FOUR_PI_SQ};

/// Uniform grid with `points` nodes per axis at `j / points`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TorusGrid {
    pub dim: usize,
    pub points: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, points: usize) -> Result<Self> {
        if dim == 0 || points == 0 {
            return Err(Error::invalid("grid needs positive dimension and point count"));
        }
        Ok(Self { dim, points })
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.points as f64
    }

    /// Integer coordinates of node `flat`; the last axis varies fastest.
    pub fn coords(&self, mut flat: usize) -> Vec<usize> {
        let mut c = vec![0; self.dim];
        for slot in c.iter_mut().rev() {
            *slot = flat % self.points;
            flat /= self.points;
        }
        c
    }

    pub fn flat(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.points + c % self.points)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.coords(flat)
            .into_iter()
            .map(|c| c as f64 / self.points as f64)
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

/// Samples of a real vector field at the nodes of a [`TorusGrid`], stored
/// node-major with `components` values per node.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub grid: TorusGrid,
    pub components: usize,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: TorusGrid, components: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * components {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: grid.len() * components,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid field".into()));
        }
        Ok(Self {
            grid,
            components,
            values,
        })
    }

    pub fn zeros(grid: TorusGrid, components: usize) -> Self {
        Self {
            grid,
            components,
            values: vec![0.0; grid.len() * components],
        }
    }

    pub fn from_fn(grid: TorusGrid, components: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut values = Vec::with_capacity(grid.len() * components);
        for i in 0..grid.len() {
            let v = f(&grid.point(i));
            assert_eq!(v.len(), components, "field callback returned wrong component count");
            values.extend(v);
        }
        Self {
            grid,
            components,
            values,
        }
    }

    pub fn at(&self, node: usize) -> &[f64] {
        &self.values[node * self.components..(node + 1) * self.components]
    }

    pub fn mean_square(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.grid.len() as f64
    }

    /// Per-component mean over the grid.
    pub fn means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.components];
        for node in 0..self.grid.len() {
            for (acc, v) in m.iter_mut().zip(self.at(node)) {
                *acc += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.grid.len() as f64);
        m
    }
}

/// Truncated Fourier coefficients `f_alpha in C^components` for `|alpha_i| <= radius`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub dim: usize,
    pub components: usize,
    pub radius: usize,
    /// Cube order (see [`MultiIndex::cube`]), `components` entries per mode.
    pub coeffs: Vec<Complex64>,
    /// Energy of the source outside the retained cube, `sum |f_alpha|^2`,
    /// estimated from the sampling grid. Zero for synthesized fields.
    pub tail_mass: f64,
}

impl SpectralField {
    pub fn zeros(dim: usize, components: usize, radius: usize) -> Self {
        let modes = (2 * radius + 1).pow(dim as u32);
        Self {
            dim,
            components,
            radius,
            coeffs: vec![Complex64::new(0.0, 0.0); modes * components],
            tail_mass: 0.0,
        }
    }

    pub fn modes(&self) -> Vec<MultiIndex> {
        MultiIndex::cube(self.dim, self.radius)
    }

    pub fn mode_count(&self) -> usize {
        self.coeffs.len() / self.components
    }

    pub fn get(&self, alpha: &MultiIndex) -> Option<&[Complex64]> {
        let pos = alpha.cube_position(self.radius)?;
        Some(&self.coeffs[pos * self.components..(pos + 1) * self.components])
    }

    pub fn get_mut(&mut self, alpha: &MultiIndex) -> Option<&mut [Complex64]> {
        let pos = alpha.cube_position(self.radius)?;
        Some(&mut self.coeffs[pos * self.components..(pos + 1) * self.components])
    }

    pub fn by_position(&self, pos: usize) -> &[Complex64] {
        &self.coeffs[pos * self.components..(pos + 1) * self.components]
    }

    /// Sets `f_alpha` and, for a real field, `f_{-alpha} = conj(f_alpha)`.
    pub fn set_real_mode(&mut self, alpha: &MultiIndex, value: &[Complex64]) -> Result<()> {
        let neg = alpha.neg();
        let comps = self.components;
        let slot = self
            .get_mut(alpha)
            .ok_or_else(|| Error::invalid(format!("mode {alpha} outside radius")))?;
        slot.copy_from_slice(&value[..comps]);
        let conj: Vec<Complex64> = value.iter().map(|v| v.conj()).collect();
        let slot = self.get_mut(&neg).expect("cube is symmetric");
        slot.copy_from_slice(&conj[..comps]);
        if alpha.is_zero() {
            for v in self.get_mut(alpha).unwrap() {
                v.im = 0.0;
            }
        }
        Ok(())
    }

    /// Random real band-limited field with i.i.d. normal coefficients on
    /// `|alpha_i| <= band` (inside the radius), damped by `1 / (1 + |alpha|^2)`.
    pub fn random_real<R: RngCore>(dim: usize, components: usize, radius: usize, band: usize, rng: &mut R) -> Self {
        let mut f = Self::zeros(dim, components, radius);
        for alpha in MultiIndex::cube(dim, band.min(radius)) {
            if !alpha.is_canonical() {
                continue;
            }
            let damp = 1.0 / (1.0 + alpha.norm_sq() as f64);
            let v: Vec<Complex64> = (0..components)
                .map(|_| {
                    let (a, b) = normal_pair(rng);
                    let im = if alpha.is_zero() { 0.0 } else { b };
                    Complex64::new(a, im) * damp
                })
                .collect();
            f.set_real_mode(&alpha, &v).unwrap();
        }
        f
    }

    /// `sum_alpha |f_alpha|^2` over retained modes.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `max |f_{-alpha} - conj(f_alpha)|`.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for alpha in self.modes() {
            let a = self.get(&alpha).unwrap();
            let b = self.get(&alpha.neg()).unwrap();
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x.conj() - y).norm());
            }
        }
        worst
    }

    /// Truncated sum `sum_alpha f_alpha exp(i 2 pi alpha.x)` at one point.
    pub fn evaluate_complex(&self, x: &[f64]) -> Vec<Complex64> {
        let phases = PhaseTable::new(x, self.radius, 1.0);
        let mut out = vec![Complex64::new(0.0, 0.0); self.components];
        for (pos, alpha) in self.modes().iter().enumerate() {
            let ph = phases.phase(alpha);
            for (o, c) in out.iter_mut().zip(self.by_position(pos)) {
                *o += c * ph;
            }
        }
        out
    }

    /// Real parts of the truncated sum at each point, with the largest
    /// discarded imaginary part.
    pub fn inverse(&self, points: &[Vec<f64>]) -> Result<InverseSamples> {
        let mut values = Vec::with_capacity(points.len());
        let mut max_imag: f64 = 0.0;
        for x in points {
            if x.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: x.len(),
                });
            }
            let v = self.evaluate_complex(x);
            max_imag = v.iter().fold(max_imag, |m, c| m.max(c.im.abs()));
            values.push(v.iter().map(|c| c.re).collect());
        }
        Ok(InverseSamples { values, max_imag })
    }

    pub fn inverse_on_grid(&self, grid: TorusGrid) -> Result<(GridField, f64)> {
        let inv = self.inverse(&grid.points())?;
        let values = inv.values.into_iter().flatten().collect();
        Ok((GridField::new(grid, self.components, values)?, inv.max_imag))
    }
}

#[derive(Clone, Debug)]
pub struct InverseSamples {
    pub values: Vec<Vec<f64>>,
    pub max_imag: f64,
}

/// Trapezoidal (equal weight) quadrature of `f_alpha = int f(y) exp(-i 2 pi alpha.y) dy`
/// for every `|alpha_i| <= radius`.
pub fn forward(field: &GridField, radius: usize) -> Result<SpectralField> {
    let grid = field.grid;
    if grid.points < 2 * radius + 1 {
        return Err(Error::AliasRisk {
            grid: grid.points,
            radius,
        });
    }
    let g = grid.points;
    let side = 2 * radius + 1;
    let comps = field.components;

    // twiddle[a][j] = exp(-i 2 pi (a - radius) j / g), with the product reduced mod g
    let twiddle: Vec<Vec<Complex64>> = (0..side)
        .map(|a| {
            let freq = a as i64 - radius as i64;
            (0..g)
                .map(|j| {
                    let k = (freq * j as i64).rem_euclid(g as i64);
                    Complex64::from_polar(1.0, -2.0 * PI * k as f64 / g as f64)
                })
                .collect()
        })
        .collect();

    let mut shape = vec![g; grid.dim];
    let mut data: Vec<Complex64> = field.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for axis in 0..grid.dim {
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product::<usize>() * comps;
        let mut next = vec![Complex64::new(0.0, 0.0); outer * side * inner];
        for o in 0..outer {
            for (a, tw) in twiddle.iter().enumerate() {
                let dst = &mut next[(o * side + a) * inner..(o * side + a + 1) * inner];
                for (j, w) in tw.iter().enumerate() {
                    let src = &data[(o * g + j) * inner..(o * g + j + 1) * inner];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += s * w;
                    }
                }
            }
        }
        shape[axis] = side;
        data = next;
    }
    let norm = 1.0 / grid.len() as f64;
    data.iter_mut().for_each(|c| *c *= norm);

    let mut out = SpectralField {
        dim: grid.dim,
        components: comps,
        radius,
        coeffs: data,
        tail_mass: 0.0,
    };
    out.tail_mass = (field.mean_square() - out.energy()).max(0.0);
    Ok(out)
}

/// Per-axis tables of `exp(i sign 2 pi a x_d)` for `|a| <= radius`.
pub(crate) struct PhaseTable {
    radius: usize,
    axes: Vec<Vec<Complex64>>,
}

impl PhaseTable {
    pub(crate) fn new(x: &[f64], radius: usize, sign: f64) -> Self {
        let axes = x
            .iter()
            .map(|&xd| {
                (-(radius as i64)..=radius as i64)
                    .map(|a| Complex64::from_polar(1.0, sign * 2.0 * PI * a as f64 * xd))
                    .collect()
            })
            .collect();
        Self { radius, axes }
    }

    pub(crate) fn phase(&self, alpha: &MultiIndex) -> Complex64 {
        alpha
            .0
            .iter()
            .zip(&self.axes)
            .fold(Complex64::new(1.0, 0.0), |acc, (&a, axis)| {
                acc * axis[(a + self.radius as i64) as usize]
            })
    }
}

/// Value of the truncated periodic heat kernel with the mass it leaves out.
#[derive(Clone, Copy, Debug)]
pub struct ThetaValue {
    pub value: f64,
    pub imag_residual: f64,
    /// `sum_{alpha outside cube} exp(-4 pi^2 |alpha|^2 t)`.
    pub tail: f64,
}

/// `theta(t, x) = sum_{|alpha_i| <= radius} exp(i 2 pi alpha.x - 4 pi^2 |alpha|^2 t)`.
pub fn theta_kernel(t: f64, x: &[f64], radius: usize) -> Result<ThetaValue> {
    if !(t > 0.0) {
        return Err(Error::NonpositiveTime(t));
    }
    let phases = PhaseTable::new(x, radius, 1.0);
    let mut sum = Complex64::new(0.0, 0.0);
    for alpha in MultiIndex::cube(x.len(), radius) {
        sum += phases.phase(&alpha) * (-FOUR_PI_SQ * alpha.norm_sq() as f64 * t).exp();
    }
    let axis_mass = |limit: Option<usize>| {
        let mut s = 1.0;
        let mut a = 1usize;
        loop {
            if limit.is_some_and(|l| a > l) {
                break;
            }
            let term = 2.0 * (-FOUR_PI_SQ * (a * a) as f64 * t).exp();
            s += term;
            if term < 1e-18 * s {
                break;
            }
            a += 1;
        }
        s
    };
    let n = x.len() as i32;
    let tail = (axis_mass(None).powi(n) - axis_mass(Some(radius)).powi(n)).max(0.0);
    Ok(ThetaValue {
        value: sum.re,
        imag_residual: sum.im.abs(),
        tail,
    })
}

#[derive(Clone, Debug)]
pub struct SystemKernel {
    pub matrix: DMatrix<Complex64>,
    /// `max |K - K^H|`.
    pub hermitian_defect: f64,
}

/// `Theta^A(t, z) = sum_alpha exp(-A_alpha t) exp(i 2 pi alpha.z)` over the modes in `spectra`.
pub fn theta_system_kernel(spectra: &ModeSet, t: f64, z: &[f64]) -> Result<SystemKernel> {
    if !(t > 0.0) {
        return Err(Error::NonpositiveTime(t));
    }
    let n = spectra.dim();
    let phases = PhaseTable::new(z, spectra.radius, 1.0);
    let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for spec in spectra.iter() {
        let p = propagator(spec, t)?;
        let ph = phases.phase(&spec.alpha);
        for (dst, &src) in m.iter_mut().zip(p.iter()) {
            *dst += ph * src;
        }
    }
    let adj = m.adjoint();
    let hermitian_defect = m
        .iter()
        .zip(adj.iter())
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).norm()));
    Ok(SystemKernel {
        matrix: m,
        hermitian_defect,
    })
}

/// Box-Muller pair of standard normals.
pub(crate) fn normal_pair<R: RngCore>(rng: &mut R) -> (f64, f64) {
    let u1 = unit_open(rng);
    let u2 = unit_open(rng);
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (2.0 * PI * u2).sin_cos();
    (r * c, r * s)
}

/// Uniform in `(0, 1]`.
pub(crate) fn unit_open<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mode_algebra::CoefficientTensor;
    use crate::rng::StreamKey;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn cosine_has_two_coefficients() {
        let grid = TorusGrid::new(2, 8).unwrap();
        let f = GridField::from_fn(grid, 2, |x| vec![(2.0 * PI * x[0]).cos(), 0.0]);
        let s = forward(&f, 2).unwrap();
        for alpha in s.modes() {
            let v = s.get(&alpha).unwrap();
            let expect = if alpha.0 == [1, 0] || alpha.0 == [-1, 0] { 0.5 } else { 0.0 };
            assert!((v[0] - c(expect, 0.0)).norm() < 1e-14, "{alpha}");
            assert!(v[1].norm() < 1e-14);
        }
        assert!(s.tail_mass < 1e-14);
    }

    #[test]
    fn constant_field_only_zero_mode() {
        let grid = TorusGrid::new(2, 5).unwrap();
        let f = GridField::from_fn(grid, 1, |_| vec![3.25]);
        let s = forward(&f, 2).unwrap();
        for alpha in s.modes() {
            let expect = if alpha.is_zero() { 3.25 } else { 0.0 };
            assert!((s.get(&alpha).unwrap()[0] - c(expect, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn sine_cosine_product_against_direct_sum() {
        let grid = TorusGrid::new(2, 64).unwrap();
        let f = GridField::from_fn(grid, 1, |x| vec![(2.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).cos()]);
        let s = forward(&f, 3).unwrap();
        // brute force non-separable sum
        let oracle = |alpha: &MultiIndex| -> Complex64 {
            let mut acc = c(0.0, 0.0);
            for node in 0..grid.len() {
                let x = grid.point(node);
                acc += Complex64::from_polar(1.0, -2.0 * PI * alpha.dot(&x)) * f.at(node)[0];
            }
            acc / grid.len() as f64
        };
        let mut nonzero = 0;
        for alpha in s.modes() {
            let got = s.get(&alpha).unwrap()[0];
            assert!((got - oracle(&alpha)).norm() < 1e-12);
            if got.norm() > 1e-10 {
                nonzero += 1;
                assert!((got.norm() - 0.25).abs() < 1e-12);
                assert!(got.re.abs() < 1e-12);
                // sin(2 pi x1) = (e^{i..} - e^{-i..}) / 2i gives -i/4 on alpha_1 = +1
                assert!((got.im + 0.25 * alpha.0[0] as f64).abs() < 1e-12);
            }
        }
        assert_eq!(nonzero, 4);
    }

    #[test]
    fn alias_risk() {
        let grid = TorusGrid::new(1, 6).unwrap();
        let f = GridField::zeros(grid, 1);
        assert!(matches!(forward(&f, 3), Err(Error::AliasRisk { .. })));
        assert!(forward(&f, 2).is_ok());
    }

    #[test]
    fn single_mode_at_origin() {
        let mut s = SpectralField::zeros(2, 1, 1);
        s.get_mut(&MultiIndex(vec![1, 0])).unwrap()[0] = c(1.0, 0.0);
        let inv = s.inverse(&[vec![0.0, 0.0]]).unwrap();
        assert_eq!(inv.values[0][0], 1.0);
    }

    #[test]
    fn round_trip_on_grid() {
        let mut rng = StreamKey::new(3, 0, 0).rng();
        let s = SpectralField::random_real(2, 2, 3, 3, &mut rng);
        let grid = TorusGrid::new(2, 7).unwrap();
        let (f, imag) = s.inverse_on_grid(grid).unwrap();
        assert!(imag < 1e-12);
        let back = forward(&f, 3).unwrap();
        let (f2, _) = back.inverse_on_grid(grid).unwrap();
        let err = f.values.iter().zip(&f2.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 1e-10);
    }

    #[test]
    fn theta_large_time_tends_to_one() {
        let v = theta_kernel(5.0, &[0.3, 0.7], 4).unwrap();
        assert!((v.value - 1.0).abs() < 1e-12);
        assert!(v.tail < 1e-12);
    }

    #[test]
    fn theta_partial_sum_one_dimension() {
        let t = 0.1;
        let v = theta_kernel(t, &[0.0], 3).unwrap();
        let oracle: f64 = 1.0 + (1..=3).map(|a| 2.0 * (-4.0 * PI * PI * (a * a) as f64 * t).exp()).sum::<f64>();
        assert!((v.value - oracle).abs() < 1e-14);
        assert!((v.value - (1.0 + 2.0 * (-4.0 * PI * PI * 0.1f64).exp())).abs() < 1e-6);
        let full: f64 = 1.0 + (1..=60).map(|a| 2.0 * (-4.0 * PI * PI * (a * a) as f64 * t).exp()).sum::<f64>();
        assert!((v.tail - (full - oracle)).abs() < 1e-16);
    }

    #[test]
    fn theta_is_even_and_rejects_nonpositive_time() {
        let a = theta_kernel(0.02, &[0.13, -0.4], 6).unwrap();
        let b = theta_kernel(0.02, &[-0.13, 0.4], 6).unwrap();
        assert!((a.value - b.value).abs() < 1e-13);
        assert!(matches!(theta_kernel(0.0, &[0.0], 2), Err(Error::NonpositiveTime(_))));
    }

    #[test]
    fn theta_solves_heat_equation_with_four_pi_squared_exponent() {
        // d/dt theta = laplacian theta, checked by central differences
        let (t, x, h, k) = (0.01, 0.17, 1e-4, 1e-6);
        let th = |t: f64, x: f64| theta_kernel(t, &[x], 40).unwrap().value;
        let dt = (th(t + k, x) - th(t - k, x)) / (2.0 * k);
        let lap = (th(t, x + h) - 2.0 * th(t, x) + th(t, x - h)) / (h * h);
        assert!((dt - lap).abs() <= 1e-5 * dt.abs().max(1.0), "{dt} vs {lap}");
        // the alternative 4 pi exponent would give dt = lap / pi
        assert!((dt - lap / PI).abs() > 0.1 * dt.abs());
    }

    #[test]
    fn system_kernel_scalar_reduction() {
        let modes = ModeSet::new(&CoefficientTensor::scalar(1, 1.0), 5).unwrap();
        for (t, z) in [(0.01, 0.2), (0.003, 0.5), (0.1, 0.0)] {
            let k = theta_system_kernel(&modes, t, &[z]).unwrap();
            let th = theta_kernel(t, &[z], 5).unwrap();
            assert!((k.matrix[(0, 0)] - c(th.value, 0.0)).norm() < 1e-12);
        }
        let modes = ModeSet::new(&CoefficientTensor::scalar(2, 1.0), 3).unwrap();
        let k = theta_system_kernel(&modes, 0.02, &[0.1, 0.3]).unwrap();
        let th = theta_kernel(0.02, &[0.1, 0.3], 3).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { th.value } else { 0.0 };
                assert!((k.matrix[(i, j)] - c(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn system_kernel_large_time_and_propagator_sum() {
        let modes = ModeSet::new(&CoefficientTensor::lame(2, 1.0), 3).unwrap();
        let k = theta_system_kernel(&modes, 10.0, &[0.2, 0.9]).unwrap();
        let id = DMatrix::from_fn(2, 2, |i, j| c(if i == j { 1.0 } else { 0.0 }, 0.0));
        assert!((k.matrix - id).iter().all(|v| v.norm() < 1e-12));

        let k = theta_system_kernel(&modes, 0.05, &[0.0, 0.0]).unwrap();
        let mut oracle = DMatrix::<f64>::zeros(2, 2);
        for spec in modes.iter() {
            oracle += propagator(spec, 0.05).unwrap();
        }
        assert!(k.matrix.iter().zip(oracle.iter()).all(|(a, &b)| (a - c(b, 0.0)).norm() < 1e-12));
        assert!(k.hermitian_defect < 1e-12);
        assert!(crate::mode_algebra::max_abs(&k.matrix.map(|c| c.re)) > 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn parseval_and_conjugate_symmetry(seed in any::<u64>(), dim in 1usize..3, radius in 1usize..4) {
            let mut rng = StreamKey::new(seed, 1, 0).rng();
            let s = SpectralField::random_real(dim, 2, radius, radius, &mut rng);
            let grid = TorusGrid::new(dim, 2 * radius + 3).unwrap();
            let (f, _) = s.inverse_on_grid(grid).unwrap();
            let back = forward(&f, radius).unwrap();
            prop_assert!(back.conjugate_symmetry_defect() <= 1e-10);
            let ms = f.mean_square();
            prop_assert!((back.energy() - ms).abs() <= 1e-8 * ms.max(1e-300));
            prop_assert!(back.tail_mass <= 1e-8 * ms);
        }

        #[test]
        fn forward_is_linear(seed in any::<u64>(), c1 in -3.0f64..3.0, c2 in -3.0f64..3.0) {
            let grid = TorusGrid::new(2, 9).unwrap();
            let mut rng = StreamKey::new(seed, 2, 0).rng();
            let vals: Vec<f64> = (0..grid.len()).map(|_| normal_pair(&mut rng).0).collect();
            let f = GridField::new(grid, 1, vals.clone()).unwrap();
            let g = GridField::new(grid, 1, vals.iter().map(|v| (v * 7.0).sin()).collect()).unwrap();
            let comb = GridField::new(grid, 1, f.values.iter().zip(&g.values).map(|(a, b)| c1 * a + c2 * b).collect()).unwrap();
            let (sf, sg, sc) = (forward(&f, 4).unwrap(), forward(&g, 4).unwrap(), forward(&comb, 4).unwrap());
            for i in 0..sc.coeffs.len() {
                prop_assert!((sc.coeffs[i] - (sf.coeffs[i] * c1 + sg.coeffs[i] * c2)).norm() <= 1e-12);
            }
        }
    }
}
