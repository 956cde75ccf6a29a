use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{phase_norm, Field, Grid};
use crate::integrator::State;

use super::config::InitialDataSpec;

/// Attempts before a zero draw becomes an error.
pub const MAX_SUB_SEEDS: u64 = 16;

/// Sampled initial state with the sub-seeds consumed to produce it.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub state: State,
    pub seed: u64,
    pub sub_seeds: Vec<u64>,
}

/// Builds `(u0, u1)` from the spec; see [`low_pass`] for the random sampler.
pub fn sample_initial_data(spec: &InitialDataSpec, grid: &Grid) -> Result<InitialData> {
    match *spec {
        InitialDataSpec::LowPass { seed, target_norm } => low_pass(grid, seed, target_norm),
        InitialDataSpec::Zero => Ok(InitialData {
            state: State::zeros(*grid),
            seed: 0,
            sub_seeds: Vec::new(),
        }),
        InitialDataSpec::Constant { displacement, velocity } => Ok(InitialData {
            state: State::new(Field::constant(*grid, displacement), Field::constant(*grid, velocity), 0.0)?,
            seed: 0,
            sub_seeds: Vec::new(),
        }),
    }
}

/// Wave vectors `m` with `|m_a| ≤ N/8`, one per `±m` pair.
fn low_modes(grid: &Grid) -> Vec<[i64; 2]> {
    let k = (grid.points() / 8) as i64;
    match grid.dim() {
        1 => (0..=k).map(|m| [m, 0]).collect(),
        _ => (0..=k)
            .flat_map(|m1| (-k..=k).map(move |m2| [m1, m2]))
            .filter(|m| m[0] > 0 || m[1] >= 0)
            .collect(),
    }
}

fn draw(grid: &Grid, rng: &mut ChaCha8Rng) -> (Field, Field) {
    let modes = low_modes(grid);
    let coeffs: Vec<[f64; 4]> = modes
        .iter()
        .map(|m| {
            let norm = ((m[0] * m[0] + m[1] * m[1]) as f64).sqrt();
            let w = 1.0 / (1.0 + norm.powi(3));
            let mut c = [0.0; 4];
            for x in &mut c {
                let z: f64 = StandardNormal.sample(rng);
                *x = w * z;
            }
            c
        })
        .collect();
    let base = std::f64::consts::PI / grid.half_width();
    let mut u = vec![0.0; grid.len()];
    let mut v = vec![0.0; grid.len()];
    for i in 0..grid.len() {
        let p = grid.point(i);
        for (m, c) in modes.iter().zip(&coeffs) {
            let arg = base * (m[0] as f64 * p[0] + m[1] as f64 * p[1]);
            let (s, co) = arg.sin_cos();
            u[i] += c[0] * co + c[1] * s;
            v[i] += c[2] * co + c[3] * s;
        }
    }
    (Field::from_vec_unchecked(*grid, u), Field::from_vec_unchecked(*grid, v))
}

/// Random low-pass Fourier superposition rescaled so that
/// `‖(u0, u1)‖_{H2×L2} = target_norm`.
///
/// Sub-seed `k` selects ChaCha stream `k` of the master seed; a degenerate
/// draw moves on to the next stream.
pub fn low_pass(grid: &Grid, seed: u64, target_norm: f64) -> Result<InitialData> {
    if !(target_norm.is_finite() && target_norm > 0.0) {
        return Err(Error::InvalidParameter {
            name: "target_norm",
            reason: format!("must be positive, got {target_norm}"),
        });
    }
    let mut sub_seeds = Vec::new();
    for sub in 0..MAX_SUB_SEEDS {
        sub_seeds.push(sub);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(sub);
        let (u, v) = draw(grid, &mut rng);
        let n = phase_norm(&u, &v)?;
        if !(n.is_finite() && n > 0.0) {
            continue;
        }
        let c = target_norm / n;
        return Ok(InitialData {
            state: State::new(u.scaled(c), v.scaled(c), 0.0)?,
            seed,
            sub_seeds,
        });
    }
    Err(Error::InvalidParameter {
        name: "seed",
        reason: format!("{MAX_SUB_SEEDS} consecutive zero draws for seed {seed}"),
    })
}
