//! Stationary points: solutions of
//! `γΔ²φ + λφ − f(‖∇φ‖)Δφ + g(φ) = h`
//! by damped Newton iteration with Krylov inner solves.
//!
//! The gradient norm inside `f` is the forward-difference form
//! `‖∇φ‖² = ⟨−Δ_hφ, φ⟩`, which makes the residual the exact gradient of the
//! discrete Lyapunov functional and the Jacobian symmetric:
//!
//! ```text
//! J w = γΔ²w + λw − f(z)Δw + (f′(z)/z)⟨Δφ, w⟩Δφ + g′(φ)w,   z = ‖∇φ‖
//! ```
//!
//! CG is tried first; if it meets non-positive curvature (indefinite `J`)
//! the step falls back to CG on the normal equations `J² δ = J r`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Field, NormKind};
use crate::integrator::State;
use crate::model::{g_apply, Scenario};
use crate::operators::{conjugate_gradient, dirichlet_form, laplacian, laplacian_into};

/// Gradient norms below this drop the rank-one Jacobian term.
pub const GRADIENT_FLOOR: f64 = 1e-12;
/// Default Newton tolerance on `‖r‖_{L2}`.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default relative tolerance of the inner linear solves.
pub const DEFAULT_INNER_TOL: f64 = 1e-8;
/// Candidates closer than this in `H2` are the same stationary point.
pub const DEDUP_DISTANCE: f64 = 1e-6;

/// Outcome of one Newton solve.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryResult {
    pub phi: Field,
    /// `‖r(φ)‖_{L2}`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Where the iteration started, e.g. `zero` or `random-3`.
    pub guess: String,
}

/// Serializable summary of a [`StationaryResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarySummary {
    pub guess: String,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub h2_norm: f64,
}

impl StationaryResult {
    pub fn summary(&self) -> Result<StationarySummary> {
        Ok(StationarySummary {
            guess: self.guess.clone(),
            converged: self.converged,
            iterations: self.iterations,
            residual: self.residual,
            h2_norm: grid::norm(&self.phi, NormKind::H2)?,
        })
    }
}

/// `r(φ) = γΔ²φ + λφ − f(‖∇φ‖)Δφ + g(φ) − h`.
pub fn stationary_residual(phi: &Field, sc: &Scenario) -> Result<Field> {
    phi.ensure_same_grid(&sc.forcing)?;
    phi.check_finite()?;
    let lap = laplacian(phi);
    let bilap = laplacian(&lap);
    let coef = sc.nonlinearity.f(dirichlet_form(phi).sqrt());
    let g = g_apply(&sc.nonlinearity, phi)?;
    let mut out = bilap.scaled(sc.gamma);
    {
        let o = out.values_mut();
        let (p, l, gv, h) = (phi.values(), lap.values(), g.values(), sc.forcing.values());
        for i in 0..o.len() {
            o[i] += sc.lambda * p[i] - coef * l[i] + gv[i] - h[i];
        }
    }
    Ok(out)
}

struct Jacobian<'a> {
    sc: &'a Scenario,
    coef: f64,
    /// `f′(z)/z · h^d`, or zero below the gradient floor.
    rank_one: f64,
    lap_phi: Vec<f64>,
    g_prime: Vec<f64>,
}

impl<'a> Jacobian<'a> {
    fn at(phi: &Field, sc: &'a Scenario) -> Self {
        let z = dirichlet_form(phi).sqrt();
        let nl = &sc.nonlinearity;
        let rank_one = if z > GRADIENT_FLOOR {
            nl.f_prime(z) / z * sc.grid.cell_volume()
        } else {
            0.0
        };
        Self {
            sc,
            coef: nl.f(z),
            rank_one,
            lap_phi: laplacian(phi).into_values(),
            g_prime: phi.values().iter().map(|&s| nl.g_prime(s)).collect(),
        }
    }

    fn apply(&self, w: &[f64], out: &mut [f64], s1: &mut [f64], s2: &mut [f64]) {
        let grid = &self.sc.grid;
        laplacian_into(grid, w, s1);
        laplacian_into(grid, s1, s2);
        let proj = if self.rank_one != 0.0 {
            self.rank_one * crate::grid::raw_dot(&self.lap_phi, w)
        } else {
            0.0
        };
        for i in 0..w.len() {
            out[i] = self.sc.gamma * s2[i] + self.sc.lambda * w[i] - self.coef * s1[i]
                + proj * self.lap_phi[i]
                + self.g_prime[i] * w[i];
        }
    }

    /// Solves `J δ = rhs` to relative tolerance `tol`.
    fn solve(&self, rhs: &[f64], tol: f64) -> Vec<f64> {
        let n = rhs.len();
        let cap = 10 * n;
        let mut s1 = vec![0.0; n];
        let mut s2 = vec![0.0; n];
        let mut x = vec![0.0; n];
        let out = conjugate_gradient(|w, o| self.apply(w, o, &mut s1, &mut s2), rhs, &mut x, tol, cap);
        if !out.breakdown {
            return x;
        }
        // Normal equations J² δ = J rhs (J is symmetric).
        let mut jr = vec![0.0; n];
        self.apply(rhs, &mut jr, &mut s1, &mut s2);
        let mut tmp = vec![0.0; n];
        x.iter_mut().for_each(|v| *v = 0.0);
        conjugate_gradient(
            |w, o| {
                self.apply(w, &mut tmp, &mut s1, &mut s2);
                self.apply(&tmp, o, &mut s1, &mut s2);
            },
            &jr,
            &mut x,
            tol,
            cap,
        );
        x
    }
}

/// Newton iteration from `guess`; returns the best iterate even when it
/// does not converge.
pub fn solve_stationary(sc: &Scenario, guess: &Field, tol: f64, max_iter: usize) -> Result<StationaryResult> {
    solve_stationary_tagged(sc, guess, tol, max_iter, "custom")
}

pub fn solve_stationary_tagged(
    sc: &Scenario,
    guess: &Field,
    tol: f64,
    max_iter: usize,
    tag: &str,
) -> Result<StationaryResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: format!("must be positive, got {tol}"),
        });
    }
    let mut phi = guess.clone();
    let mut r = stationary_residual(&phi, sc)?;
    let mut rn = r.l2();
    let mut iterations = 0;
    while rn > tol && iterations < max_iter {
        let jac = Jacobian::at(&phi, sc);
        let inner = (0.1 * tol / rn).clamp(1e-14, DEFAULT_INNER_TOL);
        let neg_r: Vec<f64> = r.values().iter().map(|v| -v).collect();
        let delta = Field::from_vec_unchecked(sc.grid, jac.solve(&neg_r, inner));
        iterations += 1;

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let mut trial = phi.clone();
            trial.axpy(step, &delta);
            if let Ok(tr) = stationary_residual(&trial, sc) {
                let tn = tr.l2();
                if tn <= (1.0 - 1e-4 * step) * rn {
                    accepted = Some((trial, tr, tn));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((p, tr, tn)) => {
                phi = p;
                r = tr;
                rn = tn;
            }
            // line-search stall
            None => break,
        }
    }
    Ok(StationaryResult {
        phi,
        residual: rn,
        iterations,
        converged: rn <= tol,
        guess: tag.to_string(),
    })
}

/// `min_φ ‖(u − φ, v)‖_{H2×L2}` over the candidates.
pub fn distance_to_set(s: &State, candidates: &[StationaryResult]) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    candidates
        .iter()
        .map(|c| {
            s.u.ensure_same_grid(&c.phi)?;
            grid::phase_norm(&s.u.sub(&c.phi), &s.v)
        })
        .try_fold(f64::INFINITY, |m, d| d.map(|d| m.min(d)))
}

/// Smooth random guess: a handful of low Fourier modes with amplitude `scale`.
pub fn random_guess(sc: &Scenario, seed: u64, scale: f64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = sc.grid;
    let period = 2.0 * g.half_width();
    let modes: Vec<([f64; 2], f64, f64)> = (0..6)
        .map(|_| {
            let m = [rng.gen_range(0..4) as f64, rng.gen_range(0..4) as f64];
            (m, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    Field::from_fn(g, |p| {
        modes
            .iter()
            .map(|(m, a, ph)| {
                let arg = std::f64::consts::TAU / period * (m[0] * p[0] + m[1] * p[1]);
                scale * a * (arg + ph).cos()
            })
            .sum()
    })
}

/// Newton from the zero guess plus `guesses` seeded random guesses;
/// converged results are deduplicated in `H2`.
pub fn search_stationary(
    sc: &Scenario,
    guesses: usize,
    seed: u64,
    scale: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<StationaryResult>> {
    let mut starts = vec![("zero".to_string(), Field::zeros(sc.grid))];
    starts.extend((0..guesses).map(|k| {
        (
            format!("random-{k}"),
            random_guess(sc, seed.wrapping_add(k as u64), scale),
        )
    }));
    let results: Vec<StationaryResult> = starts
        .par_iter()
        .map(|(tag, guess)| solve_stationary_tagged(sc, guess, tol, max_iter, tag))
        .collect::<Result<_>>()?;
    let mut unique: Vec<StationaryResult> = Vec::new();
    for r in results.into_iter().filter(|r| r.converged) {
        let mut dup = false;
        for u in &unique {
            if grid::norm(&r.phi.sub(&u.phi), NormKind::H2)? <= DEDUP_DISTANCE {
                dup = true;
                break;
            }
        }
        if !dup {
            unique.push(r);
        }
    }
    Ok(unique)
}
