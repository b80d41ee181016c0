//! Explicit finite differences for `du/dt = sum_{jkl} a^{ij}_{kl} d_k d_l u^j`
//! on a periodic grid. Used only as an independent check of the spectral and
//! Monte-Carlo solvers.

use crate::error::{Error, Result};
use crate::mode_algebra::CoefficientTensor;
use crate::torus_fourier::{GridField, TorusGrid};

/// Default safety factor in `dt <= c h^2 / |a|`.
pub const STABILITY_FACTOR: f64 = 0.2;

/// Flat index of every node's `+1` and `-1` neighbour along each axis.
struct Neighbours {
    plus: Vec<Vec<usize>>,
    minus: Vec<Vec<usize>>,
}

impl Neighbours {
    fn new(grid: &TorusGrid) -> Self {
        let g = grid.points;
        let mut plus = vec![Vec::with_capacity(grid.dim); grid.len()];
        let mut minus = vec![Vec::with_capacity(grid.dim); grid.len()];
        for node in 0..grid.len() {
            let c = grid.coords(node);
            for axis in 0..grid.dim {
                let mut up = c.clone();
                up[axis] = (c[axis] + 1) % g;
                let mut down = c.clone();
                down[axis] = (c[axis] + g - 1) % g;
                plus[node].push(grid.flat(&up));
                minus[node].push(grid.flat(&down));
            }
        }
        Self { plus, minus }
    }
}

fn check(tensor: &CoefficientTensor, field: &GridField) -> Result<()> {
    let n = tensor.dim();
    if field.grid.dim != n || field.components != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if field.grid.dim != n { field.grid.dim } else { field.components },
        });
    }
    if field.grid.points < 4 {
        return Err(Error::invalid(format!(
            "finite differences need at least 4 points per axis, got {}",
            field.grid.points
        )));
    }
    Ok(())
}

/// Second-order central differences; mixed derivatives use the 4-point stencil.
pub fn apply_operator(tensor: &CoefficientTensor, field: &GridField) -> Result<GridField> {
    check(tensor, field)?;
    let nb = Neighbours::new(&field.grid);
    let mut out = GridField::zeros(field.grid, field.components);
    apply_into(tensor, field, &nb, &mut out.values);
    Ok(out)
}

fn apply_into(tensor: &CoefficientTensor, field: &GridField, nb: &Neighbours, out: &mut [f64]) {
    let n = tensor.dim();
    let inv_h2 = (field.grid.points * field.grid.points) as f64;
    let u = |node: usize, j: usize| field.values[node * n + j];
    // pair (k, l) with k <= l and its combined coefficient
    let mut terms = Vec::new();
    for k in 0..n {
        for l in k..n {
            let mut c = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    c[i * n + j] = if k == l {
                        tensor.get(i, j, k, k)
                    } else {
                        tensor.get(i, j, k, l) + tensor.get(i, j, l, k)
                    };
                }
            }
            if c.iter().any(|&v| v != 0.0) {
                terms.push((k, l, c));
            }
        }
    }
    let mut deriv = vec![0.0; n];
    for node in 0..field.grid.len() {
        let slot = &mut out[node * n..(node + 1) * n];
        slot.iter_mut().for_each(|v| *v = 0.0);
        for (k, l, c) in &terms {
            let (k, l) = (*k, *l);
            for (j, d) in deriv.iter_mut().enumerate() {
                *d = if k == l {
                    (u(nb.plus[node][k], j) - 2.0 * u(node, j) + u(nb.minus[node][k], j)) * inv_h2
                } else {
                    let pp = nb.plus[nb.plus[node][k]][l];
                    let pm = nb.minus[nb.plus[node][k]][l];
                    let mp = nb.plus[nb.minus[node][k]][l];
                    let mm = nb.minus[nb.minus[node][k]][l];
                    (u(pp, j) - u(pm, j) - u(mp, j) + u(mm, j)) * 0.25 * inv_h2
                };
            }
            for (i, s) in slot.iter_mut().enumerate() {
                *s += (0..n).map(|j| c[i * n + j] * deriv[j]).sum::<f64>();
            }
        }
    }
}

/// Largest stable forward-Euler step `factor * h^2 / |a|`.
pub fn stable_step(tensor: &CoefficientTensor, grid: &TorusGrid, factor: f64) -> f64 {
    let h = grid.spacing();
    factor * h * h / tensor.row_sum_norm().max(f64::MIN_POSITIVE)
}

/// Forward Euler to time `t` in `ceil(t / dt)` equal steps no longer than `dt`.
pub fn march(tensor: &CoefficientTensor, initial: &GridField, t: f64, dt: f64) -> Result<GridField> {
    march_with(tensor, initial, t, dt, STABILITY_FACTOR, |_| {})
}

/// [`march`] with an explicit safety factor and a callback after every step.
pub fn march_with(
    tensor: &CoefficientTensor,
    initial: &GridField,
    t: f64,
    dt: f64,
    factor: f64,
    mut on_step: impl FnMut(&GridField),
) -> Result<GridField> {
    check(tensor, initial)?;
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    if !(dt > 0.0) {
        return Err(Error::NonpositiveTime(dt));
    }
    let bound = stable_step(tensor, &initial.grid, factor);
    if dt > bound {
        return Err(Error::StabilityViolation { dt, bound });
    }
    let steps = (t / dt).ceil() as usize;
    let mut u = initial.clone();
    if steps == 0 {
        return Ok(u);
    }
    let tau = t / steps as f64;
    let nb = Neighbours::new(&initial.grid);
    let mut lu = vec![0.0; u.values.len()];
    for _ in 0..steps {
        apply_into(tensor, &u, &nb, &mut lu);
        for (v, d) in u.values.iter_mut().zip(&lu) {
            *v += tau * d;
        }
        on_step(&u);
    }
    if u.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("finite-difference solution".into()));
    }
    Ok(u)
}

/// `||a - b||_2 / ||b||_2` over all nodes and components.
pub fn relative_l2(a: &GridField, b: &GridField) -> Result<f64> {
    if a.values.len() != b.values.len() {
        return Err(Error::LengthMismatch {
            left: a.values.len(),
            right: b.values.len(),
        });
    }
    let num: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.values.iter().map(|y| y * y).sum();
    Ok((num / den).sqrt())
}
