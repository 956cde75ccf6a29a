use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::NormKind;
use crate::integrator::{Component, Observer};
use crate::model::{RuleCheck, ScenarioConfig, ValidationReport, NON_WAIVABLE_RULES};

use super::hash64;

/// How the initial state `(u0, u1)` is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "sampler", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDataSpec {
    /// Random low-pass Fourier superposition rescaled to `target_norm` in `H2×L2`.
    LowPass { seed: u64, target_norm: f64 },
    Zero,
    /// Spatially constant displacement and velocity.
    Constant {
        displacement: f64,
        #[serde(default)]
        velocity: f64,
    },
}

impl InitialDataSpec {
    /// Master seed of the run; `0` for deterministic samplers.
    pub fn seed(&self) -> u64 {
        match self {
            InitialDataSpec::LowPass { seed, .. } => *seed,
            _ => 0,
        }
    }
}

fn default_stride() -> usize {
    1
}

fn default_norms() -> Vec<String> {
    vec!["u_h2".into(), "v_l2".into()]
}

/// Horizon and recorded observables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub horizon: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Cutoff radii of the recorded tail norms.
    #[serde(default)]
    pub radii: Vec<f64>,
    /// Lags of the difference-quotient energy series.
    #[serde(default)]
    pub sigmas: Vec<f64>,
    /// Recorded norms, named `<u|v>_<l2|h1|h2|h3>`.
    #[serde(default = "default_norms")]
    pub norms: Vec<String>,
}

/// Parses an observer name such as `u_h3`.
pub fn parse_norm_observer(name: &str) -> Result<Observer> {
    let (c, k) = name
        .split_once('_')
        .ok_or_else(|| Error::Config(format!("norm `{name}` is not of the form <u|v>_<kind>")))?;
    let component = match c {
        "u" => Component::U,
        "v" => Component::V,
        _ => return Err(Error::Config(format!("norm `{name}`: unknown component `{c}`"))),
    };
    let norm = match k {
        "l2" => NormKind::L2,
        "h1" => NormKind::H1,
        "h2" => NormKind::H2,
        "h3" => NormKind::H3,
        _ => return Err(Error::Config(format!("norm `{name}`: unknown kind `{k}`"))),
    };
    Ok(Observer::Norm { component, norm })
}

/// A complete run description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Scenario file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioConfig>,
    pub initial: InitialDataSpec,
    pub run: RunSection,
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub stride: Option<usize>,
    pub allow_hypothesis_violation: bool,
    pub out: Option<PathBuf>,
}

fn parse_error(what: &str, e: toml::de::Error) -> Error {
    Error::Config(format!("{what}: {}", e.to_string().trim_end()))
}

impl RunConfig {
    /// Parses TOML; `base` resolves a relative `scenario_file`.
    pub fn from_toml_str(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| parse_error("run config", e))?;
        cfg.resolve(base)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&text, Some(base))
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(&e))))
    }

    /// Inlines a referenced scenario file.
    fn resolve(&mut self, base: Option<&Path>) -> Result<()> {
        match (&self.scenario, self.scenario_file.take()) {
            (Some(_), Some(_)) => Err(Error::Config(
                "give either `scenario` or `scenario_file`, not both".into(),
            )),
            (None, None) => Err(Error::Config("missing `scenario` or `scenario_file`".into())),
            (Some(_), None) => Ok(()),
            (None, Some(file)) => {
                let path = match base {
                    Some(b) if file.is_relative() => b.join(&file),
                    _ => file,
                };
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
                let sc: ScenarioConfig = toml::from_str(&text)
                    .map_err(|e| parse_error(&format!("scenario {}", path.display()), e))?;
                self.scenario = Some(sc);
                Ok(())
            }
        }
    }

    pub fn scenario(&self) -> Result<&ScenarioConfig> {
        self.scenario
            .as_ref()
            .ok_or_else(|| Error::Config("scenario not resolved".into()))
    }

    pub fn scenario_mut(&mut self) -> Result<&mut ScenarioConfig> {
        self.scenario
            .as_mut()
            .ok_or_else(|| Error::Config("scenario not resolved".into()))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(h) = o.horizon {
            self.run.horizon = h;
        }
        if let Some(s) = o.stride {
            self.run.stride = s;
        }
        if o.out.is_some() {
            self.out = o.out.clone();
        }
        let sc = self.scenario_mut()?;
        if let Some(dt) = o.dt {
            sc.numerics.dt = Some(dt);
        }
        if o.allow_hypothesis_violation {
            sc.allow_hypothesis_violation = true;
        }
        Ok(())
    }

    /// Observers recorded by a run: tails first, then norms.
    pub fn observers(&self) -> Result<Vec<Observer>> {
        let mut obs: Vec<Observer> = self.run.radii.iter().map(|&radius| Observer::Tail { radius }).collect();
        for n in &self.run.norms {
            obs.push(parse_norm_observer(n)?);
        }
        Ok(obs)
    }

    /// Canonical TOML text of the resolved config, without the output directory.
    pub fn to_toml(&self) -> Result<String> {
        let mut c = self.clone();
        c.out = None;
        toml::to_string(&c).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// 64-bit hash of [`RunConfig::to_toml`].
    pub fn hash(&self) -> Result<String> {
        Ok(hash64(self.to_toml()?.as_bytes()))
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

/// Result of [`validate_config`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigValidation {
    pub passed: bool,
    /// Failed hypothesis rules accepted because of the override flag.
    pub waived: Vec<String>,
    pub report: ValidationReport,
}

impl fmt::Display for ConfigValidation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.report)?;
        if !self.waived.is_empty() {
            writeln!(f, "waived by allow_hypothesis_violation: {}", self.waived.join(", "))?;
        }
        writeln!(f, "{}", if self.passed { "valid" } else { "invalid" })
    }
}

/// Hypothesis, numerics and run-section checks without running.
pub fn validate_config(cfg: &RunConfig) -> Result<ConfigValidation> {
    let scfg = cfg.scenario()?;
    let sc = scfg.assemble()?;
    let mut report = sc.validate();

    let positive = |v: f64| v.is_finite() && v > 0.0;
    report.checks.push(RuleCheck {
        rule: "horizon".into(),
        passed: positive(cfg.run.horizon),
        detail: format!("horizon = {} must be positive", cfg.run.horizon),
        worst: None,
    });
    report.checks.push(RuleCheck {
        rule: "stride".into(),
        passed: cfg.run.stride >= 1,
        detail: format!("stride = {} must be at least 1", cfg.run.stride),
        worst: None,
    });
    let l = sc.grid.half_width();
    let bad_radii: Vec<f64> = cfg.run.radii.iter().copied().filter(|&r| !(r > 0.0 && 2.0 * r < l)).collect();
    report.checks.push(RuleCheck {
        rule: "radii".into(),
        passed: bad_radii.is_empty(),
        detail: if bad_radii.is_empty() {
            format!("all tail radii satisfy 0 < r < L/2 = {}", l / 2.0)
        } else {
            format!("radii {bad_radii:?} outside 0 < r < L/2 = {}", l / 2.0)
        },
        worst: None,
    });
    let spacing = cfg.run.stride as f64 * sc.dt;
    let bad_sigmas: Vec<f64> = cfg
        .run
        .sigmas
        .iter()
        .copied()
        .filter(|&s| {
            let q = s / spacing;
            !(s > 0.0 && q.round() >= 1.0 && (q - q.round()).abs() <= 1e-9 * q)
        })
        .collect();
    report.checks.push(RuleCheck {
        rule: "sigmas".into(),
        passed: bad_sigmas.is_empty(),
        detail: if bad_sigmas.is_empty() {
            format!("all lags are multiples of the sampling interval {spacing}")
        } else {
            format!("lags {bad_sigmas:?} are not positive multiples of the sampling interval {spacing}")
        },
        worst: None,
    });
    let norms_ok = cfg.run.norms.iter().all(|n| parse_norm_observer(n).is_ok());
    report.checks.push(RuleCheck {
        rule: "norms".into(),
        passed: norms_ok,
        detail: format!("recorded norms {:?}", cfg.run.norms),
        worst: None,
    });
    match cfg.initial {
        InitialDataSpec::LowPass { target_norm, .. } => report.checks.push(RuleCheck {
            rule: "target-norm".into(),
            passed: positive(target_norm),
            detail: format!("target norm = {target_norm} must be positive"),
            worst: None,
        }),
        InitialDataSpec::Constant { displacement, velocity } => report.checks.push(RuleCheck {
            rule: "initial-finite".into(),
            passed: displacement.is_finite() && velocity.is_finite(),
            detail: format!("constant initial data ({displacement}, {velocity})"),
            worst: None,
        }),
        InitialDataSpec::Zero => {}
    }

    const RUN_RULES: [&str; 7] = ["horizon", "stride", "radii", "sigmas", "norms", "target-norm", "initial-finite"];
    let waivable = |c: &&RuleCheck| {
        !NON_WAIVABLE_RULES.contains(&c.rule.as_str()) && !RUN_RULES.contains(&c.rule.as_str())
    };
    let failed: Vec<&RuleCheck> = report.failures().collect();
    let (passed, waived) = if failed.is_empty() {
        (true, Vec::new())
    } else if scfg.allow_hypothesis_violation && failed.iter().all(waivable) {
        (true, failed.iter().map(|c| c.rule.clone()).collect())
    } else {
        (false, Vec::new())
    };
    Ok(ConfigValidation { passed, waived, report })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"
[scenario]
name = "kirchhoff-1d"
gamma = 1.0
lambda = 1.0

[scenario.grid]
dim = 1
half_width = 20.0
points = 256

[scenario.damping]
kind = "complementary_patch"
alpha_floor = 1.0
beta_floor = 1.0
r0 = 4.0

[scenario.nonlinearity]
growth_c = 3.0
growth_p = 3.0
f = { kind = "kirchhoff", a = 0.0, b = 1.0 }
g = { kind = "power", coeff = 1.0, p = 3.0 }

[scenario.forcing]
kind = "bump"
amplitude = 1.0
radius = 2.0

[initial]
sampler = "low_pass"
seed = 7
target_norm = 1.0

[run]
horizon = 0.1
stride = 10
radii = [6.0]
"#;

    #[test]
    fn parses_and_roundtrips() {
        let cfg = RunConfig::from_toml_str(SAMPLE, None).unwrap();
        assert_eq!(cfg.run.norms, default_norms());
        let text = cfg.to_toml().unwrap();
        let again = RunConfig::from_toml_str(&text, None).unwrap();
        assert_eq!(again.to_toml().unwrap(), text);
        assert_eq!(again.hash().unwrap(), cfg.hash().unwrap());
        assert!(validate_config(&cfg).unwrap().passed);
    }

    #[test]
    fn unknown_keys_report_line_and_field() {
        let text = SAMPLE.replace("stride = 10", "strid = 10");
        let msg = RunConfig::from_toml_str(&text, None).unwrap_err().to_string();
        assert!(msg.contains("strid"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn truncation_margin_fails() {
        let mut cfg = RunConfig::from_toml_str(SAMPLE, None).unwrap();
        cfg.scenario_mut().unwrap().grid.half_width = 15.0;
        let v = validate_config(&cfg).unwrap();
        assert!(!v.passed);
        assert_eq!(v.report.failed_rules(), vec!["truncation-margin".to_string()]);
    }

    #[test]
    fn counterexample_fails_only_the_alpha_floor() {
        let text = SAMPLE.replace(
            "kind = \"complementary_patch\"\nalpha_floor = 1.0\nbeta_floor = 1.0",
            "kind = \"uniform\"\nalpha = 0.0\nbeta = 1.0",
        );
        let mut cfg = RunConfig::from_toml_str(&text, None).unwrap();
        let v = validate_config(&cfg).unwrap();
        assert!(!v.passed);
        assert_eq!(v.report.failed_rules(), vec!["exterior-floor-alpha".to_string()]);
        cfg.apply(&Overrides { allow_hypothesis_violation: true, ..Default::default() }).unwrap();
        let v = validate_config(&cfg).unwrap();
        assert!(v.passed);
        assert_eq!(v.waived, vec!["exterior-floor-alpha".to_string()]);
    }

    #[test]
    fn override_does_not_waive_run_rules() {
        let mut cfg = RunConfig::from_toml_str(SAMPLE, None).unwrap();
        cfg.run.radii = vec![15.0];
        cfg.scenario_mut().unwrap().allow_hypothesis_violation = true;
        let v = validate_config(&cfg).unwrap();
        assert!(!v.passed);
        assert_eq!(v.report.failed_rules(), vec!["radii".to_string()]);
    }

    #[test]
    fn scenario_file_is_inlined() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::from_toml_str(SAMPLE, None).unwrap();
        let sc_text = toml::to_string(cfg.scenario().unwrap()).unwrap();
        std::fs::write(dir.path().join("scenario.toml"), sc_text).unwrap();
        let run_text = SAMPLE.split("[initial]").nth(1).unwrap();
        let text = format!("scenario_file = \"scenario.toml\"\n[initial]{run_text}");
        std::fs::write(dir.path().join("run.toml"), text).unwrap();
        let loaded = RunConfig::load(&dir.path().join("run.toml")).unwrap();
        assert!(loaded.scenario_file.is_none());
        assert_eq!(loaded.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn norm_names() {
        assert!(matches!(
            parse_norm_observer("u_h3").unwrap(),
            Observer::Norm { component: Component::U, norm: NormKind::H3 }
        ));
        assert!(parse_norm_observer("w_h3").is_err());
        assert!(parse_norm_observer("uh3").is_err());
    }
}
