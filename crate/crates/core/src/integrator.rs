//! Semi-implicit time stepping.
//!
//! One step of the IMEX Euler scheme treats the linear stiff part
//! (`γΔ² + λ`, weak damping `α`, strong damping `−div(β∇·)`) implicitly
//! in the new velocity and the nonlocal and local nonlinearities plus the
//! forcing explicitly at the old level:
//!
//! ```text
//! e     = f(‖∇u‖) Δu − g(u) + h − (γΔ² + λ) u
//! A v'  = v + Δt e
//! u'    = u + Δt v'
//! ```
//!
//! With `f = g = h = 0` the discrete energy never increases, whatever `Δt`.

use serde::{Deserialize, Serialize};

use crate::energetics;
use crate::error::{Error, Result};
use crate::grid::{self, Field, Grid, NormKind};
use crate::model::{g_apply, Scenario};
use crate::operators::{dirichlet_form, laplacian, ImplicitOperatorSpec};

/// Explicit terms above this size halt the run.
pub const BLOW_UP_LIMIT: f64 = 1e8;

/// A point `(u, u_t)` of the phase space at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Field,
    pub v: Field,
    pub t: f64,
}

impl State {
    pub fn new(u: Field, v: Field, t: f64) -> Result<Self> {
        u.ensure_same_grid(&v)?;
        u.check_finite()?;
        v.check_finite()?;
        Ok(Self { u, v, t })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            u: Field::zeros(grid),
            v: Field::zeros(grid),
            t: 0.0,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    /// `‖(u, v)‖_{H2×L2}`.
    pub fn phase_norm(&self) -> Result<f64> {
        grid::phase_norm(&self.u, &self.v)
    }

    /// `‖(u − other.u, v − other.v)‖_{H2×L2}`.
    pub fn distance(&self, other: &State) -> Result<f64> {
        self.u.ensure_same_grid(&other.u)?;
        grid::phase_norm(&self.u.sub(&other.u), &self.v.sub(&other.v))
    }
}

/// Diagnostics of a single step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub cg_iterations: usize,
    pub cg_residual: f64,
    /// `‖f(‖∇u‖) Δu‖_{L2}` at the old level.
    pub nonlocal_term: f64,
    /// `‖g(u)‖_{L2}` at the old level.
    pub local_term: f64,
    /// `E` of the new state.
    pub energy: f64,
}

/// Stepper bound to one scenario; assembles the implicit operator once.
#[derive(Debug, Clone)]
pub struct Integrator<'a> {
    scenario: &'a Scenario,
    implicit: ImplicitOperatorSpec,
}

impl<'a> Integrator<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self> {
        let implicit = ImplicitOperatorSpec::new(
            scenario.dt,
            scenario.gamma,
            scenario.lambda,
            scenario.coefficients.alpha.clone(),
            scenario.coefficients.beta.clone(),
        )?;
        Ok(Self { scenario, implicit })
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }

    pub fn step(&self, s: &State) -> Result<(State, StepReport)> {
        let sc = self.scenario;
        if s.grid() != &sc.grid {
            return Err(Error::GridMismatch);
        }
        let dt = sc.dt;
        let grad = dirichlet_form(&s.u).sqrt();
        let coef = sc.nonlinearity.f(grad);
        if !(coef.abs() <= BLOW_UP_LIMIT) {
            return Err(Error::BlowUp {
                what: "f(|grad u|)",
                value: coef,
                limit: BLOW_UP_LIMIT,
            });
        }
        let g_u = g_apply(&sc.nonlinearity, &s.u)?;
        let local_term = g_u.l2();
        if !(local_term <= BLOW_UP_LIMIT) {
            return Err(Error::BlowUp {
                what: "|g(u)|",
                value: local_term,
                limit: BLOW_UP_LIMIT,
            });
        }
        let lap = laplacian(&s.u);
        let bilap = laplacian(&lap);
        let nonlocal_term = coef.abs() * lap.l2();

        let mut rhs = s.v.clone();
        {
            let r = rhs.values_mut();
            let (l, b, g, h, u) = (
                lap.values(),
                bilap.values(),
                g_u.values(),
                sc.forcing.values(),
                s.u.values(),
            );
            for i in 0..r.len() {
                let e = coef * l[i] - g[i] + h[i] - sc.gamma * b[i] - sc.lambda * u[i];
                r[i] += dt * e;
            }
        }
        rhs.check_finite()?;
        let sol = self.implicit.solve(&rhs, sc.cg_tol)?;
        let v = sol.field;
        let mut u = s.u.clone();
        u.axpy(dt, &v);
        let next = State {
            u,
            v,
            t: s.t + dt,
        };
        next.u.check_finite()?;
        next.v.check_finite()?;
        let energy = energetics::energy_e(&next, sc)?.total();
        Ok((
            next,
            StepReport {
                cg_iterations: sol.iterations,
                cg_residual: sol.relative_residual,
                nonlocal_term,
                local_term,
                energy,
            },
        ))
    }
}

/// One IMEX Euler step.
pub fn step(s: &State, sc: &Scenario) -> Result<(State, StepReport)> {
    Integrator::new(sc)?.step(s)
}

/// Which field an observed norm applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    U,
    V,
}

/// Extra functionals recorded at every sample, on top of the always-recorded
/// energy, Lyapunov functional, dissipation rate and phase norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observer {
    Tail { radius: f64 },
    Norm { component: Component, norm: NormKind },
}

impl Observer {
    pub fn name(&self) -> String {
        match self {
            Observer::Tail { radius } => format!("tail_r{radius}"),
            Observer::Norm { component, norm } => {
                let c = match component {
                    Component::U => "u",
                    Component::V => "v",
                };
                let k = match norm {
                    NormKind::L2 => "l2",
                    NormKind::H1 => "h1",
                    NormKind::H2 => "h2",
                    NormKind::H3 => "h3",
                };
                format!("{c}_{k}")
            }
        }
    }
}

/// Sampling configuration of [`evolve`].
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverConfig {
    /// Record every `stride` steps (and always the final step).
    pub stride: usize,
    pub observers: Vec<Observer>,
    /// Keep the sampled states themselves.
    pub keep_states: bool,
}

impl ObserverConfig {
    pub fn every(stride: usize) -> Self {
        Self {
            stride,
            observers: Vec::new(),
            keep_states: false,
        }
    }

    pub fn with_states(mut self) -> Self {
        self.keep_states = true;
        self
    }

    pub fn with(mut self, observer: Observer) -> Self {
        self.observers.push(observer);
        self
    }
}

/// Functionals of one sampled state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    pub lyapunov: f64,
    pub dissipation: f64,
    /// `Σ Δt D(t_j)` over all steps taken so far.
    pub dissipated: f64,
    pub phase_norm: f64,
    /// Values of [`ObserverConfig::observers`], in order.
    pub extra: Vec<f64>,
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Halted { step: usize, reason: String },
}

/// Sampled trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    /// Hash of the producing configuration, when run from one.
    pub config_hash: Option<String>,
    pub dt: f64,
    pub stride: usize,
    pub observers: Vec<Observer>,
    pub samples: Vec<Sample>,
    pub states: Option<Vec<State>>,
    pub terminal: State,
    pub status: RunStatus,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Column of an extra observer by name.
    pub fn observer_series(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.observers.iter().position(|o| o.name() == name)?;
        Some(self.samples.iter().map(|s| s.extra[k]).collect())
    }
}

/// Number of steps needed to reach `t ≥ horizon`.
pub fn steps_for(horizon: f64, dt: f64) -> usize {
    let q = horizon / dt;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * q.max(1.0) {
        r as usize
    } else {
        q.ceil() as usize
    }
}

struct Recorder<'a> {
    sc: &'a Scenario,
    cfg: &'a ObserverConfig,
    etas: Vec<Option<Field>>,
    samples: Vec<Sample>,
    states: Option<Vec<State>>,
}

impl<'a> Recorder<'a> {
    fn new(sc: &'a Scenario, cfg: &'a ObserverConfig) -> Result<Self> {
        let etas = cfg
            .observers
            .iter()
            .map(|o| match o {
                Observer::Tail { radius } => grid::cutoff_eta(&sc.grid, *radius).map(Some),
                _ => Ok(None),
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            sc,
            cfg,
            etas,
            samples: Vec::new(),
            states: cfg.keep_states.then(Vec::new),
        })
    }

    fn record(&mut self, step: usize, s: &State, dissipation: f64, dissipated: f64) -> Result<()> {
        let b = energetics::lyapunov_l(s, self.sc)?;
        let mut extra = Vec::with_capacity(self.cfg.observers.len());
        for (o, eta) in self.cfg.observers.iter().zip(&self.etas) {
            extra.push(match (o, eta) {
                (Observer::Tail { .. }, Some(eta)) => grid::tail_norm_with(eta, s)?,
                (Observer::Norm { component, norm }, _) => {
                    let f = match component {
                        Component::U => &s.u,
                        Component::V => &s.v,
                    };
                    grid::norm(f, *norm)?
                }
                _ => unreachable!("tail observers carry a cutoff"),
            });
        }
        self.samples.push(Sample {
            step,
            t: s.t,
            energy: b.parts.total(),
            lyapunov: b.lyapunov,
            dissipation,
            dissipated,
            phase_norm: s.phase_norm()?,
            extra,
        });
        if let Some(states) = &mut self.states {
            states.push(s.clone());
        }
        Ok(())
    }

    fn finish(self, terminal: State, status: RunStatus) -> TrajectoryRecord {
        TrajectoryRecord {
            config_hash: None,
            dt: self.sc.dt,
            stride: self.cfg.stride,
            observers: self.cfg.observers.clone(),
            samples: self.samples,
            states: self.states,
            terminal,
            status,
        }
    }
}

/// Steps from `s0` until `t ≥ t0 + horizon`, sampling every `stride` steps.
///
/// On failure the error is [`Error::Step`] carrying the partial record.
pub fn evolve(s0: &State, sc: &Scenario, horizon: f64, cfg: &ObserverConfig) -> Result<TrajectoryRecord> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: format!("must be positive, got {horizon}"),
        });
    }
    if cfg.stride == 0 {
        return Err(Error::InvalidParameter {
            name: "stride",
            reason: "must be at least 1".into(),
        });
    }
    let integrator = Integrator::new(sc)?;
    let n_steps = steps_for(horizon, sc.dt).max(1);
    let mut rec = Recorder::new(sc, cfg)?;
    let mut state = s0.clone();
    let mut dissipated = 0.0;
    rec.record(0, &state, energetics::dissipation(&state, sc)?, dissipated)?;
    for n in 1..=n_steps {
        let next = integrator
            .step(&state)
            .and_then(|(next, _)| energetics::dissipation(&next, sc).map(|d| (next, d)));
        let (next, d) = match next {
            Ok(x) => x,
            Err(e) => {
                let reason = e.to_string();
                let partial = rec.finish(state, RunStatus::Halted { step: n, reason });
                return Err(Error::Step {
                    step: n,
                    source: Box::new(e),
                    partial: Some(Box::new(partial)),
                });
            }
        };
        dissipated += sc.dt * d;
        state = next;
        if n % cfg.stride == 0 || n == n_steps {
            rec.record(n, &state, d, dissipated)?;
        }
    }
    Ok(rec.finish(state, RunStatus::Completed))
}

/// Twin-trajectory sensitivity to a perturbation of the initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceReport {
    pub initial_distance: f64,
    /// `sup_t ‖S(t)(s0 + δ) − S(t)s0‖_{H2×L2}` over sampled times.
    pub sup_distance: f64,
    pub final_distance: f64,
    /// `sup_distance / initial_distance`; `None` for a zero perturbation.
    pub amplification: Option<f64>,
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
}

/// Runs trajectories from `s0` and `s0 + δ` in lockstep.
pub fn continuous_dependence(
    s0: &State,
    delta: (&Field, &Field),
    sc: &Scenario,
    horizon: f64,
    stride: usize,
) -> Result<DependenceReport> {
    if stride == 0 {
        return Err(Error::InvalidParameter {
            name: "stride",
            reason: "must be at least 1".into(),
        });
    }
    let integrator = Integrator::new(sc)?;
    let mut a = s0.clone();
    let mut b = State::new(s0.u.add(delta.0), s0.v.add(delta.1), s0.t)?;
    let initial_distance = a.distance(&b)?;
    let mut times = vec![a.t];
    let mut distances = vec![initial_distance];
    let n_steps = steps_for(horizon, sc.dt).max(1);
    for n in 1..=n_steps {
        let wrap = |e: Error| Error::Step {
            step: n,
            source: Box::new(e),
            partial: None,
        };
        a = integrator.step(&a).map_err(wrap)?.0;
        b = integrator.step(&b).map_err(wrap)?.0;
        if n % stride == 0 || n == n_steps {
            times.push(a.t);
            distances.push(a.distance(&b)?);
        }
    }
    let sup_distance = distances.iter().cloned().fold(0.0, f64::max);
    Ok(DependenceReport {
        initial_distance,
        sup_distance,
        final_distance: *distances.last().unwrap(),
        amplification: (initial_distance > 0.0).then(|| sup_distance / initial_distance),
        times,
        distances,
    })
}
