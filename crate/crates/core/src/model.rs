//! Problem instances: damping profiles, nonlinearities with their
//! antiderivatives, forcing, and the assembled [`Scenario`].
//!
//! Every structural hypothesis is checked samplewise on the grid and
//! reported rule by rule. Rule identifiers:
//!
//! | id | condition |
//! |----|-----------|
//! | `coefficients-nonnegative` | `α ≥ 0`, `β ≥ 0` everywhere |
//! | `exterior-floor-alpha` | `α ≥ α₀ > 0` on `|x| ≥ r₀` |
//! | `exterior-floor-beta` | `β ≥ β₀ > 0` on `|x| ≥ r₀` |
//! | `damping-sum-positive` | `α + β > 0` everywhere |
//! | `f-nonnegative` | `f(z) ≥ 0` for `z ≥ 0` |
//! | `g-growth` | `|g′(s)| ≤ C(1 + |s|^{p−1})` |
//! | `growth-exponent` | `p ≥ 1` and `(n − 4)p ≤ n` |
//! | `g-sign` | `g(s)s ≥ 0` |
//! | `f-derivative`, `g-derivative` | registered derivatives match central differences |

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cutoff_eta, Field, Grid};

/// Location and value of the worst sample for a rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offender {
    /// Axis indices (length = dimension), or a single abscissa index for
    /// scalar-function rules.
    pub index: Vec<usize>,
    pub position: Vec<f64>,
    pub value: f64,
}

/// Outcome of one validation rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleCheck {
    pub rule: String,
    pub passed: bool,
    pub detail: String,
    pub worst: Option<Offender>,
}

impl RuleCheck {
    fn new(rule: &str, passed: bool, detail: impl Into<String>, worst: Option<Offender>) -> Self {
        Self {
            rule: rule.to_string(),
            passed,
            detail: detail.into(),
            worst,
        }
    }
}

/// Rule-by-rule validation report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<RuleCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &RuleCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn failed_rules(&self) -> Vec<String> {
        self.failures().map(|c| c.rule.clone()).collect()
    }

    pub fn get(&self, rule: &str) -> Option<&RuleCheck> {
        self.checks.iter().find(|c| c.rule == rule)
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.checks.extend(other.checks);
    }

    fn push(&mut self, check: RuleCheck) {
        self.checks.push(check);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            write!(f, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.rule, c.detail)?;
            if let (false, Some(w)) = (c.passed, &c.worst) {
                write!(f, " (worst at sample {:?}, x = {:?}, value {})", w.index, w.position, w.value)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn grid_offender(grid: &Grid, flat: usize, value: f64) -> Offender {
    let m = grid.multi_index(flat);
    let p = grid.point(flat);
    let d = grid.dim();
    Offender {
        index: m[..d].to_vec(),
        position: p[..d].to_vec(),
        value,
    }
}

// ---------------------------------------------------------------------------
// Damping coefficients

/// Weak (`α`) and strong (`β`) damping coefficients with their exterior floors.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub alpha: Field,
    pub beta: Field,
    pub alpha_floor: f64,
    pub beta_floor: f64,
    pub r0: f64,
}

/// Checks nonnegativity, the exterior floors and positivity of `α + β`.
pub fn validate_coefficients(cs: &CoefficientSet) -> ValidationReport {
    let mut report = ValidationReport::default();
    if cs.alpha.ensure_same_grid(&cs.beta).is_err() {
        report.push(RuleCheck::new(
            "coefficients-grid",
            false,
            "alpha and beta live on different grids",
            None,
        ));
        return report;
    }
    let grid = *cs.alpha.grid();
    let a = cs.alpha.values();
    let b = cs.beta.values();

    // argmin over an index set of a samplewise quantity
    let argmin = |it: &mut dyn Iterator<Item = (usize, f64)>| {
        it.fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
            Some((_, bv)) if bv <= v => best,
            _ => Some((i, v)),
        })
    };

    let worst_nonneg = argmin(&mut (0..grid.len()).map(|i| (i, a[i].min(b[i]))));
    let nonneg_ok = worst_nonneg.map_or(true, |(_, v)| v >= 0.0);
    report.push(RuleCheck::new(
        "coefficients-nonnegative",
        nonneg_ok,
        if nonneg_ok {
            "alpha >= 0 and beta >= 0 at every sample".to_string()
        } else {
            "negative damping coefficient".to_string()
        },
        worst_nonneg.map(|(i, v)| grid_offender(&grid, i, v)),
    ));

    for (rule, name, values, floor) in [
        ("exterior-floor-alpha", "alpha", a, cs.alpha_floor),
        ("exterior-floor-beta", "beta", b, cs.beta_floor),
    ] {
        let worst = argmin(
            &mut (0..grid.len())
                .filter(|&i| grid.radius(i) >= cs.r0)
                .map(|i| (i, values[i] - floor)),
        );
        let floor_positive = floor > 0.0;
        let above = worst.map_or(true, |(_, v)| v >= 0.0);
        let detail = if !floor_positive {
            format!("{name} floor {floor} is not positive outside |x| >= {}", cs.r0)
        } else if !above {
            format!("{name} drops below its floor {floor} outside |x| >= {}", cs.r0)
        } else {
            format!("{name} >= {floor} on |x| >= {}", cs.r0)
        };
        report.push(RuleCheck::new(
            rule,
            floor_positive && above,
            detail,
            worst.map(|(i, _)| grid_offender(&grid, i, values[i])),
        ));
    }

    let worst_sum = argmin(&mut (0..grid.len()).map(|i| (i, a[i] + b[i])));
    let sum_ok = worst_sum.map_or(true, |(_, v)| v > 0.0);
    report.push(RuleCheck::new(
        "damping-sum-positive",
        sum_ok,
        if sum_ok {
            "alpha + beta > 0 at every sample"
        } else {
            "alpha + beta vanishes"
        },
        worst_sum.map(|(i, v)| grid_offender(&grid, i, v)),
    ));
    report
}

/// Interior selector for [`ring_profile`]: weights `m(x)` blended as
/// `floor · (η + (1 − η) m)`.
#[derive(Debug, Clone, PartialEq)]
pub enum InteriorMask {
    None,
    All,
    /// `m = 1` on the half space `x_axis ≥ 0` (`positive`) or `x_axis < 0`.
    HalfSpace { axis: usize, positive: bool },
    Weights(Field),
}

/// `floor · (η_{r0/2} + (1 − η_{r0/2}) m)`: equal to `floor` on `|x| ≥ r0`,
/// with the interior controlled by the mask.
pub fn ring_profile(grid: &Grid, floor: f64, r0: f64, mask: &InteriorMask) -> Result<Field> {
    if !(floor.is_finite() && floor >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "floor",
            reason: format!("must be nonnegative, got {floor}"),
        });
    }
    let eta = cutoff_eta(grid, 0.5 * r0)?;
    let weights: Vec<f64> = match mask {
        InteriorMask::None => vec![0.0; grid.len()],
        InteriorMask::All => vec![1.0; grid.len()],
        InteriorMask::HalfSpace { axis, positive } => {
            if *axis >= grid.dim() {
                return Err(Error::InvalidParameter {
                    name: "mask.axis",
                    reason: format!("axis {axis} out of range for dimension {}", grid.dim()),
                });
            }
            (0..grid.len())
                .map(|i| {
                    let x = grid.point(i)[*axis];
                    let on = if *positive { x >= 0.0 } else { x < 0.0 };
                    if on {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        }
        InteriorMask::Weights(w) => {
            if w.grid() != grid {
                return Err(Error::GridMismatch);
            }
            w.values().to_vec()
        }
    };
    let data: Vec<f64> = eta
        .values()
        .iter()
        .zip(&weights)
        .map(|(&e, &m)| floor * (e + (1.0 - e) * m))
        .collect();
    let field = Field::from_vec(*grid, data)?;
    crate::operators::check_nonnegative(&field)?;
    Ok(field)
}

/// Localized damping where `α` vanishes on the left half of the inner ball
/// and `β` on the right half; both sit at their floors outside `|x| ≥ r0`.
pub fn complementary_patch(grid: &Grid, alpha_floor: f64, beta_floor: f64, r0: f64) -> Result<CoefficientSet> {
    let alpha = ring_profile(grid, alpha_floor, r0, &InteriorMask::HalfSpace { axis: 0, positive: true })?;
    let beta = ring_profile(grid, beta_floor, r0, &InteriorMask::HalfSpace { axis: 0, positive: false })?;
    Ok(CoefficientSet {
        alpha,
        beta,
        alpha_floor,
        beta_floor,
        r0,
    })
}

// ---------------------------------------------------------------------------
// Nonlinearities

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied scalar function with derivative and optional antiderivative.
#[derive(Clone)]
pub struct CustomFunction {
    pub name: String,
    pub value: ScalarFn,
    pub derivative: ScalarFn,
    pub antiderivative: Option<ScalarFn>,
}

impl CustomFunction {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            value: Arc::new(value),
            derivative: Arc::new(derivative),
            antiderivative: None,
        }
    }

    pub fn with_antiderivative(mut self, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.antiderivative = Some(Arc::new(f));
        self
    }
}

impl fmt::Debug for CustomFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomFunction").field("name", &self.name).finish_non_exhaustive()
    }
}

/// Coefficient `f` of the nonlocal term `f(‖∇u‖) Δu`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlocalCoefficient {
    /// `f ≡ a`.
    Constant { a: f64 },
    /// `f(z) = a + b z²`.
    Kirchhoff { a: f64, b: f64 },
    /// `f(z) = a + b·cap·tanh(z²/cap)`, saturating at `a + b·cap`.
    ClampedSmooth { a: f64, b: f64, cap: f64 },
    #[serde(skip)]
    Custom(CustomFunction),
}

/// Local nonlinearity `g(u)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LocalNonlinearity {
    Zero,
    /// `g(s) = coeff · |s|^{p−1} s`.
    Power { coeff: f64, p: f64 },
    #[serde(skip)]
    Custom(CustomFunction),
}

/// Both nonlinearities plus the registered growth constants `(C, p)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearitySpec {
    pub f: NonlocalCoefficient,
    pub g: LocalNonlinearity,
    /// Growth constant `C`; derived from built-in `g` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth_p: Option<f64>,
}

/// `ln cosh x` without overflow.
fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Absolute tolerance of the antiderivative quadrature.
pub const QUADRATURE_TOL: f64 = 1e-10;

impl NonlinearitySpec {
    pub fn linear() -> Self {
        Self {
            f: NonlocalCoefficient::Constant { a: 0.0 },
            g: LocalNonlinearity::Zero,
            growth_c: None,
            growth_p: None,
        }
    }

    /// `f(z) = z²`, `g(s) = s³` with `C = 3`, `p = 3`.
    pub fn kirchhoff_cubic() -> Self {
        Self {
            f: NonlocalCoefficient::Kirchhoff { a: 0.0, b: 1.0 },
            g: LocalNonlinearity::Power { coeff: 1.0, p: 3.0 },
            growth_c: Some(3.0),
            growth_p: Some(3.0),
        }
    }

    pub fn f(&self, z: f64) -> f64 {
        match &self.f {
            NonlocalCoefficient::Constant { a } => *a,
            NonlocalCoefficient::Kirchhoff { a, b } => a + b * z * z,
            NonlocalCoefficient::ClampedSmooth { a, b, cap } => a + b * cap * (z * z / cap).tanh(),
            NonlocalCoefficient::Custom(c) => (c.value)(z),
        }
    }

    pub fn f_prime(&self, z: f64) -> f64 {
        match &self.f {
            NonlocalCoefficient::Constant { .. } => 0.0,
            NonlocalCoefficient::Kirchhoff { b, .. } => 2.0 * b * z,
            NonlocalCoefficient::ClampedSmooth { b, cap, .. } => {
                let c = (z * z / cap).cosh();
                2.0 * b * z / (c * c)
            }
            NonlocalCoefficient::Custom(c) => (c.derivative)(z),
        }
    }

    fn big_f_closed(&self, z: f64) -> Option<f64> {
        match &self.f {
            NonlocalCoefficient::Constant { a } => Some(a * z),
            NonlocalCoefficient::Kirchhoff { a, b } => Some(a * z + 0.5 * b * z * z),
            NonlocalCoefficient::ClampedSmooth { a, b, cap } => Some(a * z + b * cap * cap * ln_cosh(z / cap)),
            NonlocalCoefficient::Custom(c) => c.antiderivative.as_ref().map(|f| f(z)),
        }
    }

    /// `F(z) = ∫₀^z f(√s) ds`, closed form when registered.
    pub fn big_f(&self, z: f64) -> Result<f64> {
        check_nonneg_arg(z)?;
        Ok(match self.big_f_closed(z) {
            Some(v) => v,
            None => self.big_f_quadrature_unchecked(z),
        })
    }

    /// `F(z)` by adaptive Simpson quadrature regardless of closed forms.
    pub fn big_f_quadrature(&self, z: f64) -> Result<f64> {
        check_nonneg_arg(z)?;
        Ok(self.big_f_quadrature_unchecked(z))
    }

    fn big_f_quadrature_unchecked(&self, z: f64) -> f64 {
        adaptive_simpson(&|s: f64| self.f(s.max(0.0).sqrt()), 0.0, z, QUADRATURE_TOL)
    }

    pub fn g(&self, s: f64) -> f64 {
        match &self.g {
            LocalNonlinearity::Zero => 0.0,
            LocalNonlinearity::Power { coeff, p } => coeff * s.abs().powf(p - 1.0) * s,
            LocalNonlinearity::Custom(c) => (c.value)(s),
        }
    }

    pub fn g_prime(&self, s: f64) -> f64 {
        match &self.g {
            LocalNonlinearity::Zero => 0.0,
            LocalNonlinearity::Power { coeff, p } => {
                if *p == 1.0 {
                    *coeff
                } else {
                    coeff * p * s.abs().powf(p - 1.0)
                }
            }
            LocalNonlinearity::Custom(c) => (c.derivative)(s),
        }
    }

    fn big_g_closed(&self, s: f64) -> Option<f64> {
        match &self.g {
            LocalNonlinearity::Zero => Some(0.0),
            LocalNonlinearity::Power { coeff, p } => Some(coeff * s.abs().powf(p + 1.0) / (p + 1.0)),
            LocalNonlinearity::Custom(c) => c.antiderivative.as_ref().map(|f| f(s)),
        }
    }

    /// `G(s) = ∫₀^s g`.
    pub fn big_g(&self, s: f64) -> f64 {
        self.big_g_closed(s)
            .unwrap_or_else(|| adaptive_simpson(&|x| self.g(x), 0.0, s, QUADRATURE_TOL))
    }

    /// Registered `(C, p)`, falling back to the exact constants of built-ins.
    pub fn growth(&self) -> Option<(f64, f64)> {
        match (self.growth_c, self.growth_p) {
            (Some(c), Some(p)) => Some((c, p)),
            _ => match &self.g {
                LocalNonlinearity::Zero => Some((0.0, 1.0)),
                LocalNonlinearity::Power { coeff, p } => Some((coeff.abs() * p, *p)),
                LocalNonlinearity::Custom(_) => None,
            },
        }
    }
}

fn check_nonneg_arg(z: f64) -> Result<()> {
    if z >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "z",
            reason: format!("antiderivative argument must be >= 0, got {z}"),
        })
    }
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` (oriented).
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, a, b);
    // Seed with a few panels so narrow features are not missed.
    let panels = 8;
    let width = (b - a) / panels as f64;
    if width.abs() < (b - a).abs() {
        (0..panels)
            .map(|k| {
                let lo = a + k as f64 * width;
                let hi = if k + 1 == panels { b } else { lo + width };
                let (flo, fhi, fmid) = (f(lo), f(hi), f(0.5 * (lo + hi)));
                recurse(f, lo, hi, flo, fmid, fhi, simpson(flo, fmid, fhi, lo, hi), tol / panels as f64, 40)
            })
            .sum()
    } else {
        recurse(f, a, b, fa, fm, fb, whole, tol, 40)
    }
}

/// `f(z)`.
pub fn f_value(spec: &NonlinearitySpec, z: f64) -> Result<f64> {
    check_nonneg_arg(z)?;
    Ok(spec.f(z))
}

/// `F(z)`.
pub fn big_f_value(spec: &NonlinearitySpec, z: f64) -> Result<f64> {
    spec.big_f(z)
}

/// Samplewise `g(u)`; non-finite results are reported as overflow.
pub fn g_apply(spec: &NonlinearitySpec, u: &Field) -> Result<Field> {
    u.check_finite()?;
    let out = u.map(|s| spec.g(s));
    match out.values().iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::Overflow { what: "g(u)", index }),
        None => Ok(out),
    }
}

/// `h^d Σ G(u_i) ≈ ∫ G(u)`.
pub fn g_integral(spec: &NonlinearitySpec, u: &Field) -> Result<f64> {
    u.check_finite()?;
    let mut acc = 0.0;
    for (index, &s) in u.values().iter().enumerate() {
        let g = spec.big_g(s);
        if !g.is_finite() {
            return Err(Error::Overflow { what: "G(u)", index });
        }
        acc += g;
    }
    let total = acc * u.grid().cell_volume();
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::Overflow { what: "integral of G(u)", index: 0 })
    }
}

/// Central-difference step for derivative checks.
pub const FD_STEP: f64 = 1e-5;
/// Relative tolerance of derivative checks.
pub const FD_REL_TOL: f64 = 1e-4;

/// Samples the sign, growth and derivative hypotheses on `range` for a
/// problem in dimension `dim`.
pub fn validate_nonlinearity(
    spec: &NonlinearitySpec,
    range: (f64, f64),
    samples: usize,
    dim: usize,
) -> Result<ValidationReport> {
    if samples < 100 {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: format!("need at least 100 samples, got {samples}"),
        });
    }
    let (lo, hi) = range;
    if !(lo < hi) {
        return Err(Error::InvalidParameter {
            name: "range",
            reason: format!("empty range [{lo}, {hi}]"),
        });
    }
    let s_at = |k: usize| lo + (hi - lo) * k as f64 / (samples - 1) as f64;
    let zmax = lo.abs().max(hi.abs());
    let z_at = |k: usize| zmax * k as f64 / (samples - 1) as f64;
    let scalar = |k: usize, x: f64, v: f64| Offender {
        index: vec![k],
        position: vec![x],
        value: v,
    };
    let mut report = ValidationReport::default();

    // f >= 0
    let worst_f = (0..samples)
        .map(|k| (k, z_at(k), spec.f(z_at(k))))
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .unwrap();
    let ok = worst_f.2 >= 0.0;
    report.push(RuleCheck::new(
        "f-nonnegative",
        ok,
        if ok { format!("f >= 0 on [0, {zmax}]") } else { "f takes negative values".into() },
        Some(scalar(worst_f.0, worst_f.1, worst_f.2)),
    ));

    // g(s) s >= 0
    let worst_g = (0..samples)
        .map(|k| (k, s_at(k), spec.g(s_at(k)) * s_at(k)))
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .unwrap();
    let ok = worst_g.2 >= 0.0;
    report.push(RuleCheck::new(
        "g-sign",
        ok,
        if ok { format!("g(s) s >= 0 on [{lo}, {hi}]") } else { "g(s) s < 0".into() },
        Some(scalar(worst_g.0, worst_g.1, worst_g.2)),
    ));

    // growth of g'
    match spec.growth() {
        Some((c, p)) => {
            let worst = (0..samples)
                .map(|k| {
                    let s = s_at(k);
                    let bound = c * (1.0 + s.abs().powf(p - 1.0));
                    (k, s, bound - spec.g_prime(s).abs(), bound)
                })
                .min_by(|a, b| a.2.total_cmp(&b.2))
                .unwrap();
            let ok = worst.2 >= -1e-12 * worst.3.max(1.0);
            report.push(RuleCheck::new(
                "g-growth",
                ok,
                format!("|g'(s)| <= {c}(1 + |s|^{}) {}", p - 1.0, if ok { "holds" } else { "violated" }),
                Some(scalar(worst.0, worst.1, spec.g_prime(worst.1))),
            ));
            let n = dim as f64;
            let ok = p >= 1.0 && (n - 4.0) * p <= n;
            report.push(RuleCheck::new(
                "growth-exponent",
                ok,
                format!("p = {p}, dimension {dim}: p >= 1 and (n-4)p <= n {}", if ok { "hold" } else { "fail" }),
                None,
            ));
        }
        None => report.push(RuleCheck::new(
            "g-growth",
            false,
            "no growth constants registered for a custom g",
            None,
        )),
    }

    // derivative consistency
    let fd_check = |rule: &str, value: &dyn Fn(f64) -> f64, deriv: &dyn Fn(f64) -> f64, pts: Vec<(usize, f64)>| {
        let worst = pts
            .into_iter()
            .map(|(k, x)| {
                let fd = (value(x + FD_STEP) - value(x - FD_STEP)) / (2.0 * FD_STEP);
                let d = deriv(x);
                (k, x, (fd - d).abs() / d.abs().max(1.0))
            })
            .max_by(|a, b| a.2.total_cmp(&b.2));
        let ok = worst.map_or(true, |w| w.2 <= FD_REL_TOL);
        RuleCheck::new(
            rule,
            ok,
            format!(
                "max relative central-difference mismatch {:.3e}",
                worst.map_or(0.0, |w| w.2)
            ),
            worst.map(|w| scalar(w.0, w.1, w.2)),
        )
    };
    let f_pts = (0..samples).map(|k| (k, z_at(k))).filter(|&(_, z)| z >= 2.0 * FD_STEP).collect();
    report.push(fd_check("f-derivative", &|z| spec.f(z), &|z| spec.f_prime(z), f_pts));
    // |s|^{p-1} s is not smooth at 0 for p < 2; skip a neighbourhood of the origin.
    let g_pts = (0..samples).map(|k| (k, s_at(k))).filter(|&(_, s)| s.abs() >= 2.0 * FD_STEP).collect();
    report.push(fd_check("g-derivative", &|s| spec.g(s), &|s| spec.g_prime(s), g_pts));
    Ok(report)
}

// ---------------------------------------------------------------------------
// Forcing and scenario

/// External forcing `h(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSpec {
    Zero,
    /// `A exp(1 / ((|x|/ρ)² − 1))` on `|x| < ρ`, zero outside.
    Bump { amplitude: f64, radius: f64 },
}

impl ForcingSpec {
    pub fn sample(&self, grid: &Grid) -> Result<Field> {
        match *self {
            ForcingSpec::Zero => Ok(Field::zeros(*grid)),
            ForcingSpec::Bump { amplitude, radius } => {
                if !(radius > 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "forcing.radius",
                        reason: format!("must be positive, got {radius}"),
                    });
                }
                Field::from_vec(
                    *grid,
                    (0..grid.len())
                        .map(|i| bump(amplitude, radius, grid.radius(i)))
                        .collect(),
                )
            }
        }
    }
}

/// Smooth compactly supported bump.
pub fn bump(amplitude: f64, radius: f64, rho: f64) -> f64 {
    let s = rho / radius;
    if s < 1.0 {
        amplitude * (1.0 / (s * s - 1.0)).exp()
    } else {
        0.0
    }
}

/// Grid parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub half_width: f64,
    pub points: usize,
}

/// Interior mask in configuration form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskConfig {
    None,
    All,
    HalfSpace { axis: usize, positive: bool },
}

impl From<&MaskConfig> for InteriorMask {
    fn from(m: &MaskConfig) -> Self {
        match *m {
            MaskConfig::None => InteriorMask::None,
            MaskConfig::All => InteriorMask::All,
            MaskConfig::HalfSpace { axis, positive } => InteriorMask::HalfSpace { axis, positive },
        }
    }
}

/// Damping profile in configuration form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DampingConfig {
    /// Constant coefficients; floors are the constants themselves.
    Uniform { alpha: f64, beta: f64, r0: f64 },
    ComplementaryPatch { alpha_floor: f64, beta_floor: f64, r0: f64 },
    Ring {
        alpha_floor: f64,
        beta_floor: f64,
        r0: f64,
        alpha_mask: MaskConfig,
        beta_mask: MaskConfig,
    },
}

impl DampingConfig {
    pub fn r0(&self) -> f64 {
        match *self {
            DampingConfig::Uniform { r0, .. }
            | DampingConfig::ComplementaryPatch { r0, .. }
            | DampingConfig::Ring { r0, .. } => r0,
        }
    }

    pub fn build(&self, grid: &Grid) -> Result<CoefficientSet> {
        match self {
            DampingConfig::Uniform { alpha, beta, r0 } => Ok(CoefficientSet {
                alpha: Field::constant(*grid, *alpha),
                beta: Field::constant(*grid, *beta),
                alpha_floor: *alpha,
                beta_floor: *beta,
                r0: *r0,
            }),
            DampingConfig::ComplementaryPatch { alpha_floor, beta_floor, r0 } => {
                complementary_patch(grid, *alpha_floor, *beta_floor, *r0)
            }
            DampingConfig::Ring { alpha_floor, beta_floor, r0, alpha_mask, beta_mask } => Ok(CoefficientSet {
                alpha: ring_profile(grid, *alpha_floor, *r0, &alpha_mask.into())?,
                beta: ring_profile(grid, *beta_floor, *r0, &beta_mask.into())?,
                alpha_floor: *alpha_floor,
                beta_floor: *beta_floor,
                r0: *r0,
            }),
        }
    }
}

fn default_cg_tol() -> f64 {
    DEFAULT_CG_TOL
}

/// Default relative tolerance of the implicit solves.
pub const DEFAULT_CG_TOL: f64 = 1e-10;

/// Time step and solver tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    /// Defaults to `min(1e-3, h²/4)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self { dt: None, cg_tol: DEFAULT_CG_TOL }
    }
}

/// Declarative scenario, the serializable form of [`Scenario`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub gamma: f64,
    pub lambda: f64,
    pub grid: GridConfig,
    pub damping: DampingConfig,
    pub nonlinearity: NonlinearitySpec,
    pub forcing: ForcingSpec,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub allow_hypothesis_violation: bool,
}

impl ScenarioConfig {
    /// Builds and validates; see [`Scenario::validated`].
    pub fn build(&self) -> Result<Scenario> {
        self.assemble()?.validated()
    }

    /// Builds the scenario without checking hypotheses.
    pub fn assemble(&self) -> Result<Scenario> {
        let grid = Grid::new(self.grid.dim, self.grid.half_width, self.grid.points)?;
        let coefficients = self.damping.build(&grid)?;
        let forcing = self.forcing.sample(&grid)?;
        let dt = self.numerics.dt.unwrap_or_else(|| default_dt(&grid));
        Ok(Scenario {
            name: self.name.clone(),
            seed: self.seed,
            grid,
            gamma: self.gamma,
            lambda: self.lambda,
            coefficients,
            nonlinearity: self.nonlinearity.clone(),
            forcing,
            dt,
            cg_tol: self.numerics.cg_tol,
            allow_hypothesis_violation: self.allow_hypothesis_violation,
            waived: Vec::new(),
        })
    }
}

/// `min(1e-3, h²/4)`.
pub fn default_dt(grid: &Grid) -> f64 {
    let h = grid.spacing();
    (0.25 * h * h).min(1e-3)
}

/// Range and sample count used when a scenario checks its nonlinearity.
pub const NONLINEARITY_CHECK_RANGE: (f64, f64) = (-10.0, 10.0);
pub const NONLINEARITY_CHECK_SAMPLES: usize = 1001;

/// Rules the override flag cannot waive.
pub const NON_WAIVABLE_RULES: [&str; 7] = [
    "gamma",
    "lambda",
    "dt",
    "cg-tolerance",
    "grid",
    "forcing-finite",
    "coefficients-nonnegative",
];

/// A complete problem instance.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub grid: Grid,
    pub gamma: f64,
    pub lambda: f64,
    pub coefficients: CoefficientSet,
    pub nonlinearity: NonlinearitySpec,
    pub forcing: Field,
    pub dt: f64,
    pub cg_tol: f64,
    pub allow_hypothesis_violation: bool,
    /// Rules that failed but were waived by `allow_hypothesis_violation`.
    pub waived: Vec<String>,
}

impl Scenario {
    /// Full hypothesis and numerics validation.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let pos = |name: &str, v: f64| RuleCheck::new(
            name,
            v.is_finite() && v > 0.0,
            format!("{name} = {v} must be positive"),
            None,
        );
        report.push(pos("gamma", self.gamma));
        report.push(pos("lambda", self.lambda));
        report.push(pos("dt", self.dt));
        report.push(RuleCheck::new(
            "cg-tolerance",
            self.cg_tol > 0.0 && self.cg_tol < 1.0,
            format!("cg_tol = {} must lie in (0, 1)", self.cg_tol),
            None,
        ));
        let same_grid = self.coefficients.alpha.grid() == &self.grid
            && self.coefficients.beta.grid() == &self.grid
            && self.forcing.grid() == &self.grid;
        report.push(RuleCheck::new("grid", same_grid, "all fields share the scenario grid", None));
        let r0 = self.coefficients.r0;
        report.push(RuleCheck::new(
            "truncation-margin",
            r0 > 0.0 && self.grid.half_width() >= 4.0 * r0,
            format!("half-width {} must be >= 4 r0 = {}", self.grid.half_width(), 4.0 * r0),
            None,
        ));
        let h_norm = self.forcing.l2();
        report.push(RuleCheck::new(
            "forcing-finite",
            self.forcing.check_finite().is_ok() && h_norm.is_finite(),
            format!("forcing L2 norm {h_norm}"),
            None,
        ));
        report.extend(validate_coefficients(&self.coefficients));
        match validate_nonlinearity(
            &self.nonlinearity,
            NONLINEARITY_CHECK_RANGE,
            NONLINEARITY_CHECK_SAMPLES,
            self.grid.dim(),
        ) {
            Ok(r) => report.extend(r),
            Err(e) => report.push(RuleCheck::new("nonlinearity", false, e.to_string(), None)),
        }
        report
    }

    /// Validates; failures become errors unless waived by the override flag.
    pub fn validated(mut self) -> Result<Self> {
        let report = self.validate();
        let failed = report.failed_rules();
        if failed.is_empty() {
            self.waived.clear();
            return Ok(self);
        }
        let hard: Vec<&RuleCheck> = report
            .failures()
            .filter(|c| NON_WAIVABLE_RULES.contains(&c.rule.as_str()))
            .collect();
        if !hard.is_empty() || !self.allow_hypothesis_violation {
            let msg = report
                .failures()
                .map(|c| match &c.worst {
                    Some(w) => format!("violates {} at sample {:?} (value {})", c.rule, w.index, w.value),
                    None => format!("violates {}: {}", c.rule, c.detail),
                })
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::HypothesisViolation(msg));
        }
        self.waived = failed;
        Ok(self)
    }
}
