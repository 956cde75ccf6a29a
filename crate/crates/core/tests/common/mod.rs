#![allow(dead_code)]

use plate_core::grid::{Field, Grid};
use plate_core::harness::low_pass;
use plate_core::model::{
    DampingConfig, ForcingSpec, GridConfig, NonlinearitySpec, NumericsConfig, ScenarioConfig,
};
use plate_core::State;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Desk-scale Kirchhoff scenario: `f = z²`, `g = s³`, complementary patch,
/// bump force of radius 2. `d = 1`: `L = 20, N = 256, r0 = 4`;
/// `d = 2`: `L = 10, N = 64, r0 = 2.5`.
pub fn kirchhoff(dim: usize, dt: f64) -> ScenarioConfig {
    let (half_width, points, r0) = if dim == 1 { (20.0, 256, 4.0) } else { (10.0, 64, 2.5) };
    ScenarioConfig {
        name: format!("kirchhoff-{dim}d"),
        seed: 0,
        gamma: 1.0,
        lambda: 1.0,
        grid: GridConfig { dim, half_width, points },
        damping: DampingConfig::ComplementaryPatch { alpha_floor: 1.0, beta_floor: 1.0, r0 },
        nonlinearity: NonlinearitySpec::kirchhoff_cubic(),
        forcing: ForcingSpec::Bump { amplitude: 1.0, radius: 2.0 },
        numerics: NumericsConfig { dt: Some(dt), ..Default::default() },
        allow_hypothesis_violation: false,
    }
}

pub fn white_noise(grid: Grid, rng: &mut ChaCha8Rng) -> Field {
    Field::from_fn(grid, |_| rng.gen_range(-1.0..1.0))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn smooth_state(grid: &Grid, seed: u64, norm: f64) -> State {
    low_pass(grid, seed, norm).unwrap().state
}
