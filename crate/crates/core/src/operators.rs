//! Matrix-free centred finite-difference operators on periodic grids and a
//! conjugate-gradient solver for the implicit part of the time step.
//!
//! The bilaplacian is the composition `Δ_h ∘ Δ_h`, so `⟨Δ_h² u, u⟩ = ‖Δ_h u‖²`
//! holds to rounding. The divergence-form operator uses arithmetic face
//! averages of the coefficient, which keeps it symmetric and negative
//! semidefinite for any nonnegative coefficient.

use crate::error::{Error, Result};
use crate::grid::{raw_dot, Field, Grid};

#[inline]
fn up(i: usize, n: usize) -> usize {
    if i + 1 == n {
        0
    } else {
        i + 1
    }
}

#[inline]
fn down(i: usize, n: usize) -> usize {
    if i == 0 {
        n - 1
    } else {
        i - 1
    }
}

pub(crate) fn laplacian_into(grid: &Grid, u: &[f64], out: &mut [f64]) {
    let n = grid.points();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    match grid.dim() {
        1 => {
            for i in 0..n {
                out[i] = (u[up(i, n)] - 2.0 * u[i] + u[down(i, n)]) * inv_h2;
            }
        }
        _ => {
            for i0 in 0..n {
                let row = i0 * n;
                let row_up = up(i0, n) * n;
                let row_down = down(i0, n) * n;
                for i1 in 0..n {
                    let c = row + i1;
                    out[c] = (u[row_up + i1] + u[row_down + i1] + u[row + up(i1, n)]
                        + u[row + down(i1, n)]
                        - 4.0 * u[c])
                        * inv_h2;
                }
            }
        }
    }
}

pub(crate) fn div_beta_grad_into(grid: &Grid, beta: &[f64], u: &[f64], out: &mut [f64]) {
    let n = grid.points();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    // Face flux between samples a and b (b = a + e_axis).
    let flux = |a: usize, b: usize| 0.5 * (beta[a] + beta[b]) * (u[b] - u[a]);
    match grid.dim() {
        1 => {
            for i in 0..n {
                out[i] = (flux(i, up(i, n)) - flux(down(i, n), i)) * inv_h2;
            }
        }
        _ => {
            for i0 in 0..n {
                let row = i0 * n;
                let row_up = up(i0, n) * n;
                let row_down = down(i0, n) * n;
                for i1 in 0..n {
                    let c = row + i1;
                    let ax0 = flux(c, row_up + i1) - flux(row_down + i1, c);
                    let ax1 = flux(c, row + up(i1, n)) - flux(row + down(i1, n), c);
                    out[c] = (ax0 + ax1) * inv_h2;
                }
            }
        }
    }
}

/// Centred gradient, one field per axis: `(u_{i+1} − u_{i−1}) / 2h`.
pub fn gradient(u: &Field) -> Vec<Field> {
    let grid = *u.grid();
    let n = grid.points();
    let inv_2h = 0.5 / grid.spacing();
    let v = u.values();
    (0..grid.dim())
        .map(|axis| {
            let data = (0..grid.len())
                .map(|c| {
                    let m = grid.multi_index(c);
                    let mut plus = [m[0] as isize, m[1] as isize];
                    let mut minus = plus;
                    plus[axis] = up(m[axis], n) as isize;
                    minus[axis] = down(m[axis], n) as isize;
                    (v[grid.flat_index(plus)] - v[grid.flat_index(minus)]) * inv_2h
                })
                .collect();
            Field::from_vec_unchecked(grid, data)
        })
        .collect()
}

/// Compact `2d+1`-point Laplacian.
pub fn laplacian(u: &Field) -> Field {
    let grid = *u.grid();
    let mut out = vec![0.0; grid.len()];
    laplacian_into(&grid, u.values(), &mut out);
    Field::from_vec_unchecked(grid, out)
}

/// `Δ_h(Δ_h u)`.
pub fn bilaplacian(u: &Field) -> Field {
    laplacian(&laplacian(u))
}

/// Flux-form `div_h(β ∇_h u)` with face-averaged `β`.
pub fn div_beta_grad(u: &Field, beta: &Field) -> Result<Field> {
    u.ensure_same_grid(beta)?;
    check_nonnegative(beta)?;
    let grid = *u.grid();
    let mut out = vec![0.0; grid.len()];
    div_beta_grad_into(&grid, beta.values(), u.values(), &mut out);
    Ok(Field::from_vec_unchecked(grid, out))
}

pub(crate) fn check_nonnegative(f: &Field) -> Result<()> {
    match f.values().iter().position(|&b| !(b >= 0.0)) {
        Some(index) => Err(Error::NegativeCoefficient {
            index,
            value: f.values()[index],
        }),
        None => Ok(()),
    }
}

/// Sum over cell faces of `w_face · (forward difference)²`, times `h^d`.
fn face_quadratic(u: &Field, weight: Option<&Field>) -> f64 {
    let grid = *u.grid();
    let n = grid.points();
    let h = grid.spacing();
    let v = u.values();
    let w = |a: usize, b: usize| match weight {
        Some(beta) => 0.5 * (beta.values()[a] + beta.values()[b]),
        None => 1.0,
    };
    let mut acc = 0.0;
    for c in 0..grid.len() {
        let m = grid.multi_index(c);
        for axis in 0..grid.dim() {
            let mut next = [m[0] as isize, m[1] as isize];
            next[axis] = up(m[axis], n) as isize;
            let b = grid.flat_index(next);
            let d = (v[b] - v[c]) / h;
            acc += w(c, b) * d * d;
        }
    }
    acc * grid.cell_volume()
}

/// `‖∇u‖²` measured with forward differences, equal to `⟨−Δ_h u, u⟩`.
///
/// This is the gradient norm that enters the nonlocal coefficient and its
/// antiderivative, so the discrete energy is exactly the potential of the
/// discrete force.
pub fn dirichlet_form(u: &Field) -> f64 {
    face_quadratic(u, None)
}

/// `Σ_faces β_face |D u|² h^d`, equal to `−⟨div_h(β∇_h u), u⟩`.
pub fn weighted_dirichlet_form(u: &Field, beta: &Field) -> Result<f64> {
    u.ensure_same_grid(beta)?;
    check_nonnegative(beta)?;
    Ok(face_quadratic(u, Some(beta)))
}

/// Stencil eigenvalue of `−Δ_h` for the 1-D mode with wavenumber `k`.
pub fn laplacian_symbol(k: f64, h: f64) -> f64 {
    2.0 / (h * h) * (1.0 - (k * h).cos())
}

/// Result of a conjugate-gradient run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// Relative residual `‖b − A x‖ / ‖b‖` of the returned iterate.
    pub relative_residual: f64,
    pub converged: bool,
    /// Non-positive curvature `pᵀAp ≤ 0` was met (operator not SPD).
    pub breakdown: bool,
}

/// Unpreconditioned CG for a symmetric operator given as `apply(x, out)`,
/// starting from the contents of `x`.
pub fn conjugate_gradient(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    rhs: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> CgOutcome {
    let n = rhs.len();
    let b_norm = raw_dot(rhs, rhs).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
            breakdown: false,
        };
    }
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    let mut r: Vec<f64> = rhs.iter().zip(&ap).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rs = raw_dot(&r, &r);
    let mut iterations = 0;
    let mut converged = rs.sqrt() <= tol * b_norm;
    let mut breakdown = false;
    while !converged && iterations < max_iter {
        apply(&p, &mut ap);
        let pap = raw_dot(&p, &ap);
        if !(pap > 0.0) {
            breakdown = true;
            break;
        }
        let step = rs / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        iterations += 1;
        let rs_new = raw_dot(&r, &r);
        converged = rs_new.sqrt() <= tol * b_norm;
        let ratio = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + ratio * p[i];
        }
        rs = rs_new;
    }
    apply(x, &mut ap);
    let true_res = rhs
        .iter()
        .zip(&ap)
        .map(|(b, a)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt();
    CgOutcome {
        iterations,
        relative_residual: true_res / b_norm,
        converged,
        breakdown,
    }
}

/// The implicit velocity operator
/// `A w = w + Δt α w − Δt div(β∇w) + Δt² (γ Δ²w + λ w)`.
#[derive(Debug, Clone)]
pub struct ImplicitOperatorSpec {
    dt: f64,
    gamma: f64,
    lambda: f64,
    alpha: Field,
    beta: Field,
}

/// Solution of an implicit solve.
#[derive(Debug, Clone)]
pub struct SpdSolution {
    pub field: Field,
    pub iterations: usize,
    pub relative_residual: f64,
}

impl ImplicitOperatorSpec {
    pub fn new(dt: f64, gamma: f64, lambda: f64, alpha: Field, beta: Field) -> Result<Self> {
        for (name, value) in [("dt", dt), ("gamma", gamma), ("lambda", lambda)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {value}"),
                });
            }
        }
        alpha.ensure_same_grid(&beta)?;
        check_nonnegative(&alpha)?;
        check_nonnegative(&beta)?;
        Ok(Self {
            dt,
            gamma,
            lambda,
            alpha,
            beta,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.alpha.grid()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn apply_raw(&self, w: &[f64], out: &mut [f64], scratch: &mut [f64], scratch2: &mut [f64]) {
        let grid = self.grid();
        let dt = self.dt;
        laplacian_into(grid, w, scratch);
        laplacian_into(grid, scratch, scratch2);
        div_beta_grad_into(grid, self.beta.values(), w, scratch);
        let alpha = self.alpha.values();
        let c0 = 1.0 + dt * dt * self.lambda;
        let c4 = dt * dt * self.gamma;
        for i in 0..w.len() {
            out[i] = c0 * w[i] + dt * alpha[i] * w[i] - dt * scratch[i] + c4 * scratch2[i];
        }
    }

    /// `A w`.
    pub fn apply(&self, w: &Field) -> Result<Field> {
        w.ensure_same_grid(&self.alpha)?;
        let len = w.values().len();
        let mut out = vec![0.0; len];
        let mut s1 = vec![0.0; len];
        let mut s2 = vec![0.0; len];
        self.apply_raw(w.values(), &mut out, &mut s1, &mut s2);
        Ok(Field::from_vec_unchecked(*self.grid(), out))
    }

    /// Solves `A w = rhs` by CG from a zero guess to relative residual `tol`.
    pub fn solve(&self, rhs: &Field, tol: f64) -> Result<SpdSolution> {
        rhs.ensure_same_grid(&self.alpha)?;
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Error::InvalidParameter {
                name: "tol",
                reason: format!("must lie in (0, 1), got {tol}"),
            });
        }
        let len = rhs.values().len();
        let mut s1 = vec![0.0; len];
        let mut s2 = vec![0.0; len];
        let mut x = vec![0.0; len];
        let outcome = conjugate_gradient(
            |w, out| self.apply_raw(w, out, &mut s1, &mut s2),
            rhs.values(),
            &mut x,
            tol,
            10 * len,
        );
        if !outcome.converged {
            return Err(Error::CgNotConverged {
                iterations: outcome.iterations,
                residual: outcome.relative_residual,
            });
        }
        Ok(SpdSolution {
            field: Field::from_vec_unchecked(*self.grid(), x),
            iterations: outcome.iterations,
            relative_residual: outcome.relative_residual,
        })
    }
}

/// Free-function form of [`ImplicitOperatorSpec::apply`].
pub fn apply_implicit(spec: &ImplicitOperatorSpec, w: &Field) -> Result<Field> {
    spec.apply(w)
}

/// Free-function form of [`ImplicitOperatorSpec::solve`].
pub fn solve_spd(spec: &ImplicitOperatorSpec, rhs: &Field, tol: f64) -> Result<Field> {
    spec.solve(rhs, tol).map(|s| s.field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(grid: Grid, rng: &mut ChaCha8Rng) -> Field {
        Field::from_fn(grid, |_| rng.gen_range(-1.0..1.0))
    }

    fn sine(grid: Grid, m: f64) -> (Field, f64) {
        let k = 2.0 * PI * m / (2.0 * grid.half_width());
        (Field::from_fn(grid, |p| (k * p[0]).sin()), k)
    }

    #[test]
    fn constants_are_annihilated() {
        for dim in [1, 2] {
            let g = Grid::new(dim, 2.0, 16).unwrap();
            let c = Field::constant(g, 3.5);
            for comp in gradient(&c) {
                assert!(comp.max_abs() < 1e-12);
            }
            assert!(laplacian(&c).max_abs() < 1e-12);
            assert!(bilaplacian(&c).max_abs() < 1e-9);
            let beta = Field::from_fn(g, |p| 1.0 + p[0] * p[0]);
            assert!(div_beta_grad(&c, &beta).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_sine_eigenfunction() {
        let g = Grid::new(1, PI, 64).unwrap();
        let (u, k) = sine(g, 5.0);
        let mu = laplacian_symbol(k, g.spacing());
        let lap = laplacian(&u);
        let expected = u.scaled(-mu);
        assert!(lap.sub(&expected).max_abs() < 1e-12);
        let bilap = bilaplacian(&u);
        let e = bilap.sub(&u.scaled(mu * mu)).max_abs();
        assert!(e < 1e-12 * mu * mu, "{e}");
    }

    #[test]
    fn gradient_of_sharp_bump_is_symmetric() {
        let g = Grid::new(1, 1.0, 32).unwrap();
        // bump straddling the periodic seam
        let u = Field::from_fn(g, |p| if p[0].abs() > 0.85 { 1.0 } else { 0.0 });
        let du = &gradient(&u)[0];
        assert!(du.check_finite().is_ok());
        let n = 32isize;
        for i in 0..n {
            let mirror = (n - i).rem_euclid(n);
            // x_i = -1 + i h, mirror about x = 0 is index N - i
            let a = du.values()[i as usize];
            let b = du.values()[mirror as usize];
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn div_beta_grad_constant_coefficient_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Grid::new(2, 3.0, 16).unwrap();
        let u = random_field(g, &mut rng);
        let b = div_beta_grad(&u, &Field::constant(g, 2.5)).unwrap();
        assert!(b.sub(&laplacian(&u).scaled(2.5)).max_abs() < 1e-10);
        assert!(div_beta_grad(&u, &Field::zeros(g)).unwrap().max_abs() == 0.0);
        let mut neg = Field::constant(g, 1.0);
        neg.values_mut()[7] = -0.1;
        assert!(matches!(
            div_beta_grad(&u, &neg),
            Err(Error::NegativeCoefficient { index: 7, .. })
        ));
    }

    #[test]
    fn div_beta_grad_matches_direct_face_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for dim in [1, 2] {
            let g = Grid::new(dim, 1.5, 16).unwrap();
            let u = random_field(g, &mut rng);
            let w = random_field(g, &mut rng);
            let beta = Field::from_fn(g, |_| rng.gen_range(0.0..2.0));
            let lhs = div_beta_grad(&u, &beta).unwrap().dot(&w);
            // Oracle: -Σ_faces β_face (Δu)(Δw) h^{d-2}, enumerated face by face.
            let h = g.spacing();
            let mut rhs = 0.0;
            for c in 0..g.len() {
                let m = g.multi_index(c);
                for axis in 0..dim {
                    let mut nb = [m[0] as isize, m[1] as isize];
                    nb[axis] += 1;
                    let b = g.flat_index(nb);
                    let bf = 0.5 * (beta.values()[c] + beta.values()[b]);
                    rhs -= bf
                        * (u.values()[b] - u.values()[c])
                        * (w.values()[b] - w.values()[c])
                        * h.powi(dim as i32 - 2);
                }
            }
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
            let quad = weighted_dirichlet_form(&u, &beta).unwrap();
            let pair = div_beta_grad(&u, &beta).unwrap().dot(&u);
            assert!((quad + pair).abs() <= 1e-12 * quad.max(1.0));
        }
    }

    #[test]
    fn implicit_operator_examples() {
        let g = Grid::new(1, PI, 32).unwrap();
        let (dt, gamma, lambda) = (0.05, 1.3, 0.7);
        let spec =
            ImplicitOperatorSpec::new(dt, gamma, lambda, Field::zeros(g), Field::zeros(g)).unwrap();
        assert_eq!(spec.apply(&Field::zeros(g)).unwrap().max_abs(), 0.0);
        let (u, k) = sine(g, 3.0);
        let mu = laplacian_symbol(k, g.spacing());
        let factor = 1.0 + dt * dt * (gamma * mu * mu + lambda);
        assert!(spec.apply(&u).unwrap().sub(&u.scaled(factor)).max_abs() < 1e-10);
        let sol = solve_spd(&spec, &u, 1e-12).unwrap();
        assert!(sol.sub(&u.scaled(1.0 / factor)).max_abs() < 1e-10);
    }

    #[test]
    fn implicit_operator_lower_bound_and_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in [1, 2] {
            let g = Grid::new(dim, 4.0, 32).unwrap();
            let alpha = Field::from_fn(g, |_| rng.gen_range(0.0..1.0));
            let beta = Field::from_fn(g, |_| rng.gen_range(0.0..1.0));
            let (dt, lambda) = (0.01, 2.0);
            let spec = ImplicitOperatorSpec::new(dt, 1.0, lambda, alpha, beta).unwrap();
            for _ in 0..5 {
                let w = random_field(g, &mut rng);
                let aw = spec.apply(&w).unwrap();
                assert!(aw.dot(&w) >= (1.0 + dt * dt * lambda) * w.dot(&w));
                let tol = 1e-10;
                let back = solve_spd(&spec, &aw, tol).unwrap();
                assert!(back.sub(&w).l2() <= 10.0 * tol * w.l2());
            }
            let zero = spec.solve(&Field::zeros(g), 1e-10).unwrap();
            assert!(zero.iterations <= 1);
            assert_eq!(zero.field.max_abs(), 0.0);
        }
    }

    #[test]
    fn implicit_operator_rejects_bad_input() {
        let g = Grid::new(1, 1.0, 8).unwrap();
        let h = Grid::new(1, 1.0, 16).unwrap();
        assert!(ImplicitOperatorSpec::new(0.0, 1.0, 1.0, Field::zeros(g), Field::zeros(g)).is_err());
        assert!(ImplicitOperatorSpec::new(0.1, 1.0, 1.0, Field::zeros(g), Field::zeros(h)).is_err());
        let spec =
            ImplicitOperatorSpec::new(0.1, 1.0, 1.0, Field::zeros(g), Field::zeros(g)).unwrap();
        assert!(matches!(spec.apply(&Field::zeros(h)), Err(Error::GridMismatch)));
        assert!(spec.solve(&Field::zeros(g), 1.5).is_err());
    }

    #[test]
    fn cg_reports_cap() {
        // Identity-free operator with a huge spread, capped at 1 iteration.
        let rhs = [1.0, 1.0, 1.0];
        let mut x = [0.0; 3];
        let out = conjugate_gradient(
            |w, o| {
                o[0] = w[0];
                o[1] = 10.0 * w[1];
                o[2] = 100.0 * w[2];
            },
            &rhs,
            &mut x,
            1e-12,
            1,
        );
        assert!(!out.converged);
        assert_eq!(out.iterations, 1);
        let ok = conjugate_gradient(
            |w, o| {
                o[0] = w[0];
                o[1] = 10.0 * w[1];
                o[2] = 100.0 * w[2];
            },
            &rhs,
            &mut x,
            1e-12,
            10,
        );
        assert!(ok.converged && ok.relative_residual < 1e-12);
    }
}
