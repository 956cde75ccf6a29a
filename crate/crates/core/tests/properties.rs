mod common;

use std::f64::consts::PI;

use plate_core::energetics::{dissipation, energy_e, lyapunov_l};
use plate_core::grid::{self, cutoff_eta, norm, tail_norm, Field, Grid, NormKind};
use plate_core::integrator::{evolve, steps_for, Integrator, ObserverConfig, State};
use plate_core::model::{
    ring_profile, validate_coefficients, CoefficientSet, DampingConfig, ForcingSpec, InteriorMask, LocalNonlinearity,
    MaskConfig, NonlinearitySpec, NonlocalCoefficient,
};
use plate_core::operators::{
    bilaplacian, div_beta_grad, laplacian, solve_spd, ImplicitOperatorSpec,
};
use plate_core::stationary::{search_stationary, solve_stationary, stationary_residual};
use proptest::prelude::*;

use common::{kirchhoff, rng, smooth_state, white_noise};

const KINDS: [NormKind; 4] = [NormKind::L2, NormKind::H1, NormKind::H2, NormKind::H3];

fn small_grid(dim: usize) -> Grid {
    if dim == 1 {
        Grid::new(1, 8.0, 64).unwrap()
    } else {
        Grid::new(2, 8.0, 16).unwrap()
    }
}

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(32)
}

// ---------------------------------------------------------------------------
// grid

proptest! {
    #![proptest_config(config())]

    #[test]
    fn norms_are_absolutely_homogeneous(dim in 1usize..=2, seed in any::<u64>(), c in -10.0f64..10.0) {
        let g = small_grid(dim);
        let u = white_noise(g, &mut rng(seed));
        for k in KINDS {
            let n = norm(&u, k).unwrap();
            let cn = norm(&u.scaled(c), k).unwrap();
            prop_assert!((cn - c.abs() * n).abs() <= 1e-13 * (1.0 + c.abs() * n));
        }
    }

    #[test]
    fn norm_kinds_are_ordered(dim in 1usize..=2, seed in any::<u64>()) {
        let u = white_noise(small_grid(dim), &mut rng(seed));
        let n: Vec<f64> = KINDS.iter().map(|&k| norm(&u, k).unwrap()).collect();
        prop_assert!(n.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn cutoff_is_a_monotone_profile(dim in 1usize..=2, frac in 0.01f64..0.49) {
        let g = small_grid(dim);
        let r = frac * g.half_width();
        let eta = cutoff_eta(&g, r).unwrap();
        let mut by_radius: Vec<(f64, f64)> = (0..g.len()).map(|i| (g.radius(i), eta.values()[i])).collect();
        prop_assert!(by_radius.iter().all(|p| (0.0..=1.0).contains(&p.1)));
        by_radius.sort_by(|a, b| a.0.total_cmp(&b.0));
        prop_assert!(by_radius.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn tail_norm_is_nonincreasing_in_radius(dim in 1usize..=2, seed in any::<u64>(), a in 0.05f64..0.45, b in 0.05f64..0.45) {
        let g = small_grid(dim);
        let mut r = rng(seed);
        let s = State::new(white_noise(g, &mut r), white_noise(g, &mut r), 0.0).unwrap();
        let (lo, hi) = (a.min(b) * g.half_width(), a.max(b) * g.half_width());
        prop_assert!(tail_norm(&s, hi).unwrap() <= tail_norm(&s, lo).unwrap() * (1.0 + 1e-14));
    }
}

// ---------------------------------------------------------------------------
// operators

fn rel_close(a: f64, b: f64, scale: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * scale.max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn stencils_are_linear(dim in 1usize..=2, seed in any::<u64>(), a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let g = small_grid(dim);
        let mut r = rng(seed);
        let (u, w) = (white_noise(g, &mut r), white_noise(g, &mut r));
        let beta = white_noise(g, &mut r).map(f64::abs);
        let combo = u.scaled(a).add(&w.scaled(b));
        let ops: [&dyn Fn(&Field) -> Field; 3] = [
            &laplacian,
            &bilaplacian,
            &|f: &Field| div_beta_grad(f, &beta).unwrap(),
        ];
        for op in ops {
            let lhs = op(&combo);
            let rhs = op(&u).scaled(a).add(&op(&w).scaled(b));
            prop_assert!(lhs.sub(&rhs).max_abs() <= 1e-12 * (1.0 + rhs.max_abs()));
        }
    }

    #[test]
    fn stencils_are_symmetric_and_signed(dim in 1usize..=2, seed in any::<u64>()) {
        let g = small_grid(dim);
        let mut r = rng(seed);
        let (u, w) = (white_noise(g, &mut r), white_noise(g, &mut r));
        let beta = white_noise(g, &mut r).map(f64::abs);
        let ops: [&dyn Fn(&Field) -> Field; 3] = [
            &laplacian,
            &bilaplacian,
            &|f: &Field| div_beta_grad(f, &beta).unwrap(),
        ];
        for (k, op) in ops.iter().enumerate() {
            let (au, aw) = (op(&u), op(&w));
            let scale = au.l2() * w.l2();
            prop_assert!(rel_close(au.dot(&w), u.dot(&aw), scale, 1e-12));
            // Δ and div β∇ are negative semidefinite, Δ² positive
            let q = au.dot(&u);
            let tol = 1e-12 * au.l2() * u.l2();
            if k == 1 { prop_assert!(q >= -tol) } else { prop_assert!(q <= tol) }
        }
    }

    #[test]
    fn implicit_solve_inverts_apply(dim in 1usize..=2, seed in any::<u64>(), dt in 1e-4f64..0.1) {
        let g = small_grid(dim);
        let mut r = rng(seed);
        let alpha = white_noise(g, &mut r).map(f64::abs);
        let beta = white_noise(g, &mut r).map(f64::abs);
        // spectrum of A lies in [1, kappa]: Gershgorin bounds of each stencil
        let s = 4.0 * dim as f64 / (g.spacing() * g.spacing());
        let kappa = 1.0 + dt * dt + dt * alpha.max_abs() + dt * beta.max_abs() * s + dt * dt * s * s;
        let spec = ImplicitOperatorSpec::new(dt, 1.0, 1.0, alpha, beta).unwrap();
        let w = white_noise(g, &mut r);
        let tol = 1e-10;
        let rhs = spec.apply(&w).unwrap();
        let back = solve_spd(&spec, &rhs, tol).unwrap();
        prop_assert!(spec.apply(&back).unwrap().sub(&rhs).l2() <= 1.01 * tol * rhs.l2());
        prop_assert!(back.sub(&w).l2() <= 1.01 * kappa * tol * w.l2());
    }
}

fn order(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[test]
fn stencils_converge_at_second_order() {
    // u = sin(x) cos(2y), β = 1 + ½ sin(x) on [−π, π)^d
    for dim in [1usize, 2] {
        let sizes: [usize; 3] = if dim == 1 { [32, 64, 128] } else { [16, 32, 64] };
        let ky = if dim == 1 { 0.0 } else { 2.0 };
        let mut errs = [Vec::new(), Vec::new(), Vec::new()];
        for n in sizes {
            let g = Grid::new(dim, PI, n).unwrap();
            let u = Field::from_fn(g, |p| p[0].sin() * (ky * p[1]).cos());
            let k2 = 1.0 + ky * ky;
            let beta = Field::from_fn(g, |p| 1.0 + 0.5 * p[0].sin());
            // div(β∇u) = β Δu + ∂xβ ∂xu
            let exact_div = Field::from_fn(g, |p| {
                let b = 1.0 + 0.5 * p[0].sin();
                let bx = 0.5 * p[0].cos();
                -b * k2 * p[0].sin() * (ky * p[1]).cos() + bx * p[0].cos() * (ky * p[1]).cos()
            });
            errs[0].push(laplacian(&u).sub(&u.scaled(-k2)).max_abs());
            errs[1].push(bilaplacian(&u).sub(&u.scaled(k2 * k2)).max_abs());
            errs[2].push(div_beta_grad(&u, &beta).unwrap().sub(&exact_div).max_abs());
        }
        for e in &errs {
            for p in order(e) {
                assert!(p >= 1.9, "dim {dim}: errors {e:?}, order {p}");
            }
        }
    }
}

// ---------------------------------------------------------------------------
// model

fn nonlinearity() -> impl Strategy<Value = NonlinearitySpec> {
    let f = prop_oneof![
        (0.0f64..3.0).prop_map(|a| NonlocalCoefficient::Constant { a }),
        (0.0f64..3.0, 0.0f64..3.0).prop_map(|(a, b)| NonlocalCoefficient::Kirchhoff { a, b }),
        (0.0f64..3.0, 0.0f64..3.0, 0.1f64..10.0).prop_map(|(a, b, cap)| NonlocalCoefficient::ClampedSmooth { a, b, cap }),
    ];
    let g = prop_oneof![
        Just(LocalNonlinearity::Zero),
        (0.0f64..3.0, 1.0f64..5.0).prop_map(|(coeff, p)| LocalNonlinearity::Power { coeff, p }),
    ];
    (f, g).prop_map(|(f, g)| NonlinearitySpec { f, g, growth_c: None, growth_p: None })
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn antiderivatives_vanish_at_zero_and_have_the_right_sign(spec in nonlinearity(), z in 0.0f64..50.0, dz in 0.0f64..5.0, s in -20.0f64..20.0) {
        prop_assert_eq!(spec.big_f(0.0).unwrap(), 0.0);
        prop_assert_eq!(spec.big_g(0.0), 0.0);
        prop_assert!(spec.big_f(z + dz).unwrap() >= spec.big_f(z).unwrap());
        prop_assert!(spec.big_g(s) >= 0.0);
    }

    #[test]
    fn quadrature_matches_closed_forms(spec in nonlinearity(), z in 0.0f64..100.0) {
        let closed = spec.big_f(z).unwrap();
        let quad = spec.big_f_quadrature(z).unwrap();
        prop_assert!((closed - quad).abs() <= 1e-9, "{} vs {}", closed, quad);
    }

    #[test]
    fn complementary_ring_profiles_validate(dim in 1usize..=2, seed in any::<u64>(), af in 0.01f64..5.0, bf in 0.01f64..5.0, r0 in 0.5f64..2.0) {
        let g = small_grid(dim);
        let mut r = rng(seed);
        let m = Field::from_fn(g, |_| rand::Rng::gen_range(&mut r, 0.0..=1.0));
        let cs = CoefficientSet {
            alpha: ring_profile(&g, af, r0, &InteriorMask::Weights(m.clone())).unwrap(),
            beta: ring_profile(&g, bf, r0, &InteriorMask::Weights(m.map(|x| 1.0 - x))).unwrap(),
            alpha_floor: af,
            beta_floor: bf,
            r0,
        };
        let report = validate_coefficients(&cs);
        prop_assert!(report.passed(), "{}", report);
    }
}

// ---------------------------------------------------------------------------
// integrator

fn small_linear(alpha: f64, beta: f64, dt: f64) -> plate_core::Scenario {
    let mut cfg = kirchhoff(1, dt);
    cfg.grid.points = 64;
    cfg.grid.half_width = 16.0;
    cfg.damping = DampingConfig::Ring {
        alpha_floor: alpha,
        beta_floor: beta,
        r0: 4.0,
        alpha_mask: MaskConfig::None,
        beta_mask: MaskConfig::All,
    };
    cfg.nonlinearity = NonlinearitySpec::linear();
    cfg.forcing = ForcingSpec::Zero;
    cfg.build().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn linear_energy_never_increases(seed in any::<u64>(), alpha in 0.01f64..2.0, beta in 0.01f64..2.0, log_dt in -4.0f64..1.0) {
        let sc = small_linear(alpha, beta, 10f64.powf(log_dt));
        let integ = Integrator::new(&sc).unwrap();
        let mut s = smooth_state(&sc.grid, seed, 1.0);
        let e0 = energy_e(&s, &sc).unwrap().total();
        let mut e = e0;
        for _ in 0..20 {
            s = integ.step(&s).unwrap().0;
            let next = energy_e(&s, &sc).unwrap().total();
            prop_assert!(next <= e + 1e-9 * e0, "{} -> {}", e, next);
            e = next;
        }
    }

    #[test]
    fn runs_are_deterministic(seed in 0u64..1000) {
        let mut cfg = kirchhoff(1, 1e-2);
        cfg.grid.points = 64;
        let sc = cfg.build().unwrap();
        let s0 = smooth_state(&sc.grid, seed, 1.0);
        let obs = ObserverConfig::every(5).with_states();
        let a = evolve(&s0, &sc, 0.5, &obs).unwrap();
        let b = evolve(&s0, &sc, 0.5, &obs).unwrap();
        prop_assert_eq!(a.samples, b.samples);
        prop_assert_eq!(a.states, b.states);
        prop_assert_eq!(a.terminal, b.terminal);
    }
}

#[test]
fn zero_is_a_fixed_point_without_forcing() {
    for dim in [1, 2] {
        let mut cfg = kirchhoff(dim, 1e-3);
        cfg.forcing = ForcingSpec::Zero;
        let sc = cfg.build().unwrap();
        let rec = evolve(&State::zeros(sc.grid), &sc, 0.05, &ObserverConfig::every(10)).unwrap();
        assert_eq!(rec.terminal.u.max_abs(), 0.0);
        assert_eq!(rec.terminal.v.max_abs(), 0.0);
    }
}

fn reflect(f: &Field) -> Field {
    let g = *f.grid();
    let n = g.points() as isize;
    Field::from_vec(
        g,
        (0..g.len())
            .map(|i| {
                let m = g.multi_index(i);
                let mut idx = [0isize; 2];
                for a in 0..g.dim() {
                    idx[a] = (n - m[a] as isize) % n;
                }
                f.values()[g.flat_index(idx)]
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn even_symmetry_is_preserved() {
    for dim in [1, 2] {
        let mut cfg = kirchhoff(dim, 1e-3);
        if dim == 2 {
            cfg.grid.points = 32;
        }
        let r0 = cfg.damping.r0();
        cfg.damping = DampingConfig::Ring {
            alpha_floor: 1.0,
            beta_floor: 0.5,
            r0,
            alpha_mask: MaskConfig::None,
            beta_mask: MaskConfig::All,
        };
        let sc = cfg.build().unwrap();
        let s = smooth_state(&sc.grid, 5, 1.0);
        let even = |f: &Field| f.add(&reflect(f)).scaled(0.5);
        let s0 = State::new(even(&s.u), even(&s.v), 0.0).unwrap();
        let integ = Integrator::new(&sc).unwrap();
        let mut st = s0;
        for _ in 0..200 {
            st = integ.step(&st).unwrap().0;
        }
        for f in [&st.u, &st.v] {
            assert!(f.sub(&reflect(f)).max_abs() <= 1e-12 * (1.0 + f.max_abs()));
        }
    }
}

#[test]
fn time_step_convergence_is_first_order() {
    let mut cfg = kirchhoff(1, 1e-3);
    cfg.grid.points = 64;
    let horizon = 1.0;
    let dts = [0.04, 0.02, 0.01];
    let run = |dt: f64| {
        let mut c = cfg.clone();
        c.numerics.dt = Some(dt);
        let sc = c.build().unwrap();
        let s0 = smooth_state(&sc.grid, 2, 1.0);
        assert_eq!(steps_for(horizon, dt) as f64 * dt, horizon);
        evolve(&s0, &sc, horizon, &ObserverConfig::every(1000)).unwrap().terminal
    };
    let reference = run(dts[2] / 16.0);
    let errs: Vec<f64> = dts.iter().map(|&dt| run(dt).distance(&reference).unwrap()).collect();
    for p in order(&errs) {
        assert!(p >= 0.9, "errors {errs:?}");
    }
}

// ---------------------------------------------------------------------------
// energetics

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn lyapunov_descends_up_to_the_residual(seed in any::<u64>(), norm0 in 0.5f64..3.0) {
        let mut cfg = kirchhoff(1, 2e-3);
        cfg.grid.points = 128;
        let sc = cfg.build().unwrap();
        let s0 = smooth_state(&sc.grid, seed, norm0);
        let rec = evolve(&s0, &sc, 2.0, &ObserverConfig::every(1)).unwrap();
        let l: Vec<f64> = rec.samples.iter().map(|s| s.lyapunov).collect();
        let mut abs_res = 0.0;
        for (w, s) in l.windows(2).zip(&rec.samples[1..]) {
            prop_assert!(s.dissipation >= 0.0);
            let rho = w[1] - w[0] + sc.dt * s.dissipation;
            prop_assert!(w[1] <= w[0] + rho.abs() + 1e-14 * w[0].abs());
            abs_res += rho.abs();
        }
        let min_l = l.iter().copied().fold(f64::INFINITY, f64::min);
        let dissipated = rec.samples.last().unwrap().dissipated;
        prop_assert!(dissipated <= l[0] - min_l + abs_res + 1e-12);
    }

    #[test]
    fn lyapunov_is_locally_lipschitz(seed in any::<u64>(), eps in 1e-6f64..1e-2) {
        let sc = kirchhoff(1, 1e-3).build().unwrap();
        let s = smooth_state(&sc.grid, seed, 1.0);
        let d = smooth_state(&sc.grid, seed.wrapping_add(1), 1.0);
        let p = State::new(s.u.add(&d.u.scaled(eps)), s.v.add(&d.v.scaled(eps)), 0.0).unwrap();
        let dist = s.distance(&p).unwrap();
        let dl = (lyapunov_l(&p, &sc).unwrap().lyapunov - lyapunov_l(&s, &sc).unwrap().lyapunov).abs();
        let de = (energy_e(&p, &sc).unwrap().total() - energy_e(&s, &sc).unwrap().total()).abs();
        // norms ≤ 1 + ε: the quadratic and quartic parts are Lipschitz with constant ≤ 10
        prop_assert!(dl <= 10.0 * dist && de <= 10.0 * dist, "{} {} {}", dl, de, dist);
    }
}

// ---------------------------------------------------------------------------
// stationary

#[test]
fn stationary_points_are_frozen_under_the_flow() {
    let mut cfg = kirchhoff(1, 1e-3);
    cfg.forcing = ForcingSpec::Bump { amplitude: 2.0, radius: 2.0 };
    let sc = cfg.build().unwrap();
    let tol = 1e-10;
    let res = solve_stationary(&sc, &Field::zeros(sc.grid), tol, 50).unwrap();
    assert!(res.converged);
    assert!(stationary_residual(&res.phi, &sc).unwrap().l2() <= tol);
    let s0 = State::new(res.phi.clone(), Field::zeros(sc.grid), 0.0).unwrap();
    assert!(dissipation(&s0, &sc).unwrap() == 0.0);
    let integ = Integrator::new(&sc).unwrap();
    let one = integ.step(&s0).unwrap().0;
    assert!(one.distance(&s0).unwrap() <= 1e-12);
    let horizon = 5.0;
    let rec = evolve(&s0, &sc, horizon, &ObserverConfig::every(100)).unwrap();
    assert!(rec.terminal.distance(&s0).unwrap() <= 10.0 * tol * horizon);
}

#[test]
fn unforced_search_finds_only_zero() {
    let mut cfg = kirchhoff(1, 1e-3);
    cfg.forcing = ForcingSpec::Zero;
    let sc = cfg.build().unwrap();
    let tol = 1e-10;
    let found = search_stationary(&sc, 6, 17, 0.3, tol, 50).unwrap();
    assert!(!found.is_empty());
    for r in &found {
        assert!(grid::norm(&r.phi, NormKind::H2).unwrap() <= 100.0 * tol);
    }
}
