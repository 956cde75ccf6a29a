//! Uniform periodic grids, sampled fields, discrete Sobolev norms and the
//! radial cutoff family used by the far-field diagnostics.
//!
//! The whole space is truncated to the periodic box `[-L, L)^d` with `N`
//! samples per axis. Fields are stored row-major with axis 0 slowest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::State;
use crate::operators;

/// Uniform periodic grid on `[-L, L)^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    half_width: f64,
    points: usize,
    spacing: f64,
}

impl Grid {
    /// Builds a grid; `points` must be even and at least 8.
    pub fn new(dim: usize, half_width: f64, points: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{1, 2}}")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half-width must be positive, got {half_width}"
            )));
        }
        if points % 2 != 0 {
            return Err(Error::InvalidGrid(format!("points per axis must be even, got {points}")));
        }
        if points < 8 {
            return Err(Error::InvalidGrid(format!("points per axis must be >= 8, got {points}")));
        }
        Ok(Self {
            dim,
            half_width,
            points,
            spacing: 2.0 * half_width / points as f64,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Points per axis.
    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total number of samples, `N^d`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `h^d` of one sample.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Box volume `(2L)^d`.
    pub fn volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.dim as i32)
    }

    /// Coordinate of axis index `i`, wrapped periodically.
    pub fn coord(&self, i: isize) -> f64 {
        let n = self.points as isize;
        let i = i.rem_euclid(n);
        -self.half_width + i as f64 * self.spacing
    }

    /// Axis indices of a flat sample index.
    pub fn multi_index(&self, flat: usize) -> [usize; 2] {
        match self.dim {
            1 => [flat, 0],
            _ => [flat / self.points, flat % self.points],
        }
    }

    /// Flat index of (possibly out-of-range) axis indices, wrapped periodically.
    pub fn flat_index(&self, idx: [isize; 2]) -> usize {
        let n = self.points as isize;
        let i0 = idx[0].rem_euclid(n) as usize;
        match self.dim {
            1 => i0,
            _ => i0 * self.points + idx[1].rem_euclid(n) as usize,
        }
    }

    /// Coordinates of a flat sample; unused axes are zero.
    pub fn point(&self, flat: usize) -> [f64; 2] {
        let m = self.multi_index(flat);
        let x0 = self.coord(m[0] as isize);
        match self.dim {
            1 => [x0, 0.0],
            _ => [x0, self.coord(m[1] as isize)],
        }
    }

    /// Distance of a sample from the box centre (minimal image).
    pub fn radius(&self, flat: usize) -> f64 {
        let p = self.point(flat);
        let period = 2.0 * self.half_width;
        p[..self.dim]
            .iter()
            .map(|&x| {
                let w = x - period * (x / period).round();
                w * w
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Real samples on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            data: vec![value; grid.len()],
        }
    }

    /// Samples `f` at every grid point; unused coordinates are zero.
    pub fn from_fn(grid: Grid, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let data = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self { grid, data }
    }

    /// Wraps raw samples, checking shape and finiteness.
    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.len(),
                data.len()
            )));
        }
        let field = Self { grid, data };
        field.check_finite()?;
        Ok(field)
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        Self { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite {
                index,
                value: self.data[index],
            }),
            None => Ok(()),
        }
    }

    pub fn ensure_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Discrete inner product `h^d Σ u_i w_i`.
    pub fn dot(&self, other: &Field) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.grid.cell_volume() * raw_dot(&self.data, &other.data)
    }

    /// Discrete `L²` norm.
    pub fn l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.grid, other.grid);
        Field {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    /// Samplewise product.
    pub fn mul(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a * b)
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &Field) {
        debug_assert_eq!(self.grid, x.grid);
        for (s, &xv) in self.data.iter_mut().zip(&x.data) {
            *s += a * xv;
        }
    }
}

pub(crate) fn raw_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Discrete Sobolev norm kinds. Second derivatives are proxied by the
/// stencil Laplacian, so `H2` and `H3` are surrogate norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L2,
    H1,
    H2,
    H3,
}

fn gradient_sq(u: &Field) -> f64 {
    operators::gradient(u).iter().map(|g| g.dot(g)).sum()
}

/// Squared discrete norm; see [`norm`].
pub fn norm_squared(u: &Field, kind: NormKind) -> Result<f64> {
    u.check_finite()?;
    let mut acc = u.dot(u);
    if kind == NormKind::L2 {
        return Ok(acc);
    }
    acc += gradient_sq(u);
    if kind == NormKind::H1 {
        return Ok(acc);
    }
    let lap = operators::laplacian(u);
    acc += lap.dot(&lap);
    if kind == NormKind::H3 {
        acc += gradient_sq(&lap);
    }
    Ok(acc)
}

/// Discrete norm of `u`:
/// `H1² = L2² + ‖∇u‖²`, `H2² = H1² + ‖Δu‖²`, `H3² = H2² + ‖∇Δu‖²`.
pub fn norm(u: &Field, kind: NormKind) -> Result<f64> {
    norm_squared(u, kind).map(f64::sqrt)
}

/// Phase-space norm `‖(u, v)‖_{H2×L2}`.
pub fn phase_norm(u: &Field, v: &Field) -> Result<f64> {
    Ok((norm_squared(u, NormKind::H2)? + norm_squared(v, NormKind::L2)?).sqrt())
}

/// Quintic smoothstep `6s⁵ − 15s⁴ + 10s³` on `[0, 1]`, clamped outside.
pub fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (s * (6.0 * s - 15.0) + 10.0)
}

/// Cutoff profile `η_r(ρ)` as a function of the distance `ρ` from the centre.
pub fn eta(radius: f64, rho: f64) -> f64 {
    smoothstep(rho / radius - 1.0)
}

/// Samples of `η_r`: zero on `|x| ≤ r`, one on `|x| ≥ 2r`.
pub fn cutoff_eta(grid: &Grid, radius: f64) -> Result<Field> {
    if !(radius > 0.0 && 2.0 * radius < grid.half_width()) {
        return Err(Error::CutoffRadius {
            radius,
            half_width: grid.half_width(),
        });
    }
    let data = (0..grid.len()).map(|i| eta(radius, grid.radius(i))).collect();
    Ok(Field::from_vec_unchecked(*grid, data))
}

/// Cutoff-weighted exterior norm `sqrt(‖η_r u‖²_{H2} + ‖η_r v‖²_{L2})`.
pub fn tail_norm(state: &State, radius: f64) -> Result<f64> {
    state.u.ensure_same_grid(&state.v)?;
    let eta = cutoff_eta(state.u.grid(), radius)?;
    tail_norm_with(&eta, state)
}

pub(crate) fn tail_norm_with(eta: &Field, state: &State) -> Result<f64> {
    let eu = eta.mul(&state.u);
    let ev = eta.mul(&state.v);
    Ok((norm_squared(&eu, NormKind::H2)? + norm_squared(&ev, NormKind::L2)?).sqrt())
}
