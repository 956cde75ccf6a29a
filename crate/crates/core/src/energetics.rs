//! Energy, Lyapunov functional, dissipation rate and the diagnostics built on
//! them: the discrete energy-balance residual, far-field tails and the
//! difference-quotient energy.
//!
//! All integrals use the same rectangle rule `h^d Σ`, so telescoping sums of
//! the recorded functionals are exact up to rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Field};
use crate::integrator::{State, TrajectoryRecord};
use crate::model::{g_integral, Scenario};
use crate::operators::{dirichlet_form, laplacian, weighted_dirichlet_form};

/// Quadratic energy `E = ½‖v‖² + ½γ‖Δu‖² + ½λ‖u‖²`, by part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub bending: f64,
    pub potential: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.kinetic + self.bending + self.potential
    }
}

/// `L = E + ∫G(u) + ½F(‖∇u‖²) − ∫h u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub parts: EnergyParts,
    /// `∫G(u)`.
    pub local_nonlinear: f64,
    /// `½F(‖∇u‖²)`.
    pub nonlocal_nonlinear: f64,
    /// `−∫h u`.
    pub forcing: f64,
    pub lyapunov: f64,
}

fn check_grid(s: &State, sc: &Scenario) -> Result<()> {
    if s.u.grid() != &sc.grid || s.v.grid() != &sc.grid {
        Err(Error::GridMismatch)
    } else {
        Ok(())
    }
}

/// Energy `E` of a state.
pub fn energy_e(s: &State, sc: &Scenario) -> Result<EnergyParts> {
    check_grid(s, sc)?;
    let lap = laplacian(&s.u);
    Ok(EnergyParts {
        kinetic: 0.5 * s.v.dot(&s.v),
        bending: 0.5 * sc.gamma * lap.dot(&lap),
        potential: 0.5 * sc.lambda * s.u.dot(&s.u),
    })
}

/// Full Lyapunov breakdown.
pub fn lyapunov_l(s: &State, sc: &Scenario) -> Result<EnergyBreakdown> {
    let parts = energy_e(s, sc)?;
    let local_nonlinear = g_integral(&sc.nonlinearity, &s.u)?;
    let nonlocal_nonlinear = 0.5 * sc.nonlinearity.big_f(dirichlet_form(&s.u))?;
    let forcing = -sc.forcing.dot(&s.u);
    Ok(EnergyBreakdown {
        parts,
        local_nonlinear,
        nonlocal_nonlinear,
        forcing,
        lyapunov: parts.total() + local_nonlinear + nonlocal_nonlinear + forcing,
    })
}

/// Instantaneous dissipation `D = ∫α|v|² + Σ_faces β_face |D v|²`,
/// i.e. `⟨αv, v⟩ − ⟨div_h(β∇_h v), v⟩`.
pub fn dissipation(s: &State, sc: &Scenario) -> Result<f64> {
    check_grid(s, sc)?;
    let alpha = &sc.coefficients.alpha;
    let weak: f64 = alpha
        .values()
        .iter()
        .zip(s.v.values())
        .map(|(a, v)| a * v * v)
        .sum::<f64>()
        * sc.grid.cell_volume();
    Ok(weak + weighted_dirichlet_form(&s.v, &sc.coefficients.beta)?)
}

/// Per-step energy-balance residuals `ρ_n = L_{n+1} − L_n + Δt D_{n+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceResidual {
    pub residuals: Vec<f64>,
    pub max_abs: f64,
    /// `max |ρ_n| / max(1, L(0))`.
    pub normalized_max: f64,
}

/// Residual series of a trajectory recorded at stride 1.
pub fn energy_balance_residual(traj: &TrajectoryRecord) -> Result<BalanceResidual> {
    if traj.stride != 1 {
        return Err(Error::InvalidParameter {
            name: "stride",
            reason: format!("energy balance needs stride 1, trajectory has {}", traj.stride),
        });
    }
    let residuals: Vec<f64> = traj
        .samples
        .windows(2)
        .map(|w| w[1].lyapunov - w[0].lyapunov + traj.dt * w[1].dissipation)
        .collect();
    let max_abs = residuals.iter().fold(0.0, |m: f64, r| m.max(r.abs()));
    let l0 = traj.samples.first().map_or(0.0, |s| s.lyapunov);
    Ok(BalanceResidual {
        normalized_max: max_abs / l0.max(1.0),
        residuals,
        max_abs,
    })
}

/// Residual accumulated between consecutive samples at any stride:
/// `L(t_k) − L(t_{k−1}) + Σ Δt D` over the intervening steps.
pub fn interval_residuals(traj: &TrajectoryRecord) -> Vec<f64> {
    traj.samples
        .windows(2)
        .map(|w| w[1].lyapunov - w[0].lyapunov + (w[1].dissipated - w[0].dissipated))
        .collect()
}

fn sampled_states(traj: &TrajectoryRecord) -> Result<&[State]> {
    traj.states
        .as_deref()
        .ok_or_else(|| Error::MissingObservable("sampled states".into()))
}

/// Tail norms per sampled state (outer) and radius (inner).
pub fn tail_series(traj: &TrajectoryRecord, radii: &[f64]) -> Result<Vec<Vec<f64>>> {
    let states = sampled_states(traj)?;
    let Some(first) = states.first() else {
        return Ok(Vec::new());
    };
    let etas: Vec<Field> = radii
        .iter()
        .map(|&r| grid::cutoff_eta(first.grid(), r))
        .collect::<Result<_>>()?;
    states
        .iter()
        .map(|s| etas.iter().map(|eta| grid::tail_norm_with(eta, s)).collect())
        .collect()
}

/// `E(v_σ)` with `v_σ = (u(t+σ) − u(t))/σ` and velocity
/// `(u_t(t+σ) − u_t(t))/σ`, one value per admissible sample time.
pub fn difference_quotient_energy(
    traj: &TrajectoryRecord,
    sc: &Scenario,
    sigma: f64,
) -> Result<Vec<(f64, f64)>> {
    let states = sampled_states(traj)?;
    let spacing = traj.stride as f64 * traj.dt;
    let lag = (sigma / spacing).round();
    if !(sigma > 0.0) || lag < 1.0 || (sigma / spacing - lag).abs() > 1e-9 * lag {
        return Err(Error::InvalidParameter {
            name: "sigma",
            reason: format!("{sigma} is not a positive multiple of the sampling interval {spacing}"),
        });
    }
    let lag = lag as usize;
    // Regular sampling lattice only: the trailing sample may be off-stride.
    let regular = traj
        .samples
        .iter()
        .take_while(|s| s.step % traj.stride == 0)
        .count()
        .min(states.len());
    (0..regular.saturating_sub(lag))
        .map(|i| {
            let (a, b) = (&states[i], &states[i + lag]);
            let q = State {
                u: b.u.sub(&a.u).scaled(1.0 / sigma),
                v: b.v.sub(&a.v).scaled(1.0 / sigma),
                t: a.t,
            };
            Ok((a.t, energy_e(&q, sc)?.total()))
        })
        .collect()
}
