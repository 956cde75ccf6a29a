//! Fixtures shared by the benchmarks.

use plate_core::harness::low_pass;
use plate_core::model::{
    DampingConfig, ForcingSpec, GridConfig, NonlinearitySpec, NumericsConfig, Scenario, ScenarioConfig,
};
use plate_core::State;

/// Kirchhoff scenario with complementary-patch damping and a bump force.
pub fn kirchhoff(dim: usize, points: usize) -> Scenario {
    let (half_width, r0) = if dim == 1 { (20.0, 4.0) } else { (10.0, 2.5) };
    ScenarioConfig {
        name: format!("bench-{dim}d-{points}"),
        seed: 0,
        gamma: 1.0,
        lambda: 1.0,
        grid: GridConfig { dim, half_width, points },
        damping: DampingConfig::ComplementaryPatch { alpha_floor: 1.0, beta_floor: 1.0, r0 },
        nonlinearity: NonlinearitySpec::kirchhoff_cubic(),
        forcing: ForcingSpec::Bump { amplitude: 1.0, radius: 2.0 },
        numerics: NumericsConfig { dt: Some(1e-3), ..Default::default() },
        allow_hypothesis_violation: false,
    }
    .build()
    .expect("benchmark scenario is valid")
}

/// Seeded low-pass state of unit norm.
pub fn state(sc: &Scenario, seed: u64) -> State {
    low_pass(&sc.grid, seed, 1.0).expect("nonzero draw").state
}
