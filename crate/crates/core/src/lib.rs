//! Numerical lab for a strongly damped semilinear plate equation
//!
//! ```text
//! u_tt + γΔ²u − div(β∇u_t) + αu_t + λu − f(‖∇u‖)Δu + g(u) = h
//! ```
//!
//! on a periodic box `[−L, L)^d`, `d ∈ {1, 2}`: finite-difference operators,
//! an IMEX time stepper, energy and Lyapunov diagnostics, a Newton solver
//! for stationary points, and a reproducible run harness.

pub mod energetics;
pub mod error;
pub mod grid;
pub mod harness;
pub mod integrator;
pub mod model;
pub mod operators;
pub mod stationary;

pub use energetics::{dissipation, energy_balance_residual, energy_e, lyapunov_l};
pub use error::{Error, Result};
pub use grid::{Field, Grid, NormKind};
pub use harness::{run_ensemble, run_scenario, validate_config, RunConfig};
pub use integrator::{evolve, step, Integrator, ObserverConfig, RunStatus, State, TrajectoryRecord};
pub use model::{Scenario, ScenarioConfig, ValidationReport};
pub use stationary::{search_stationary, solve_stationary, StationaryResult};
