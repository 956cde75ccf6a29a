use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::energetics::{difference_quotient_energy, interval_residuals};
use crate::error::{Error, Result};
use crate::integrator::{evolve, ObserverConfig, RunStatus, TrajectoryRecord};
use crate::model::Scenario;

use super::config::{validate_config, RunConfig};
use super::hash64;
use super::sampling::{sample_initial_data, InitialData};

pub const TRAJECTORY_FILE: &str = "trajectory.ndjson";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const DIFFERENCE_QUOTIENT_FILE: &str = "difference_quotients.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

/// `E(v_σ)` series for one lag.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceQuotientSeries {
    pub sigma: f64,
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
}

/// In-memory result of a run.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: RunConfig,
    pub config_hash: String,
    pub scenario: Scenario,
    pub initial: InitialData,
    /// Sampled trajectory without state snapshots.
    pub record: TrajectoryRecord,
    /// Energy-balance residual accumulated over each sampling interval.
    pub residuals: Vec<f64>,
    pub difference_quotients: Vec<DifferenceQuotientSeries>,
}

impl Simulation {
    pub fn status(&self) -> &RunStatus {
        &self.record.status
    }

    pub fn completed(&self) -> bool {
        self.record.status == RunStatus::Completed
    }
}

/// Validates, samples initial data and integrates. A blow-up halts the run
/// and returns the partial trajectory with a `halted` status.
pub fn simulate(cfg: &RunConfig) -> Result<Simulation> {
    let check = validate_config(cfg)?;
    if !check.passed {
        let msg = check
            .report
            .failures()
            .map(|c| match &c.worst {
                Some(w) => format!("violates {} at sample {:?} (value {})", c.rule, w.index, w.value),
                None => format!("violates {}: {}", c.rule, c.detail),
            })
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::HypothesisViolation(msg));
    }
    let scenario = cfg.scenario()?.build()?;
    let config_hash = cfg.hash()?;
    let initial = sample_initial_data(&cfg.initial, &scenario.grid)?;
    let mut obs = ObserverConfig::every(cfg.run.stride);
    obs.observers = cfg.observers()?;
    obs.keep_states = !cfg.run.sigmas.is_empty();

    let mut record = match evolve(&initial.state, &scenario, cfg.run.horizon, &obs) {
        Ok(r) => r,
        Err(Error::Step { partial: Some(p), .. }) => *p,
        Err(e) => return Err(e),
    };
    record.config_hash = Some(config_hash.clone());

    let mut difference_quotients = Vec::new();
    if record.states.is_some() {
        for &sigma in &cfg.run.sigmas {
            let series = difference_quotient_energy(&record, &scenario, sigma)?;
            difference_quotients.push(DifferenceQuotientSeries {
                sigma,
                times: series.iter().map(|p| p.0).collect(),
                energies: series.iter().map(|p| p.1).collect(),
            });
        }
        record.states = None;
    }
    let residuals = interval_residuals(&record);
    let mut config = cfg.clone();
    config.out = None;
    Ok(Simulation {
        config,
        config_hash,
        scenario,
        initial,
        record,
        residuals,
        difference_quotients,
    })
}

/// Shortest round-trip decimal form; non-finite values as `NaN`/`inf`.
pub(crate) fn fmt_f64(x: f64) -> String {
    match serde_json::Number::from_f64(x) {
        Some(n) => n.to_string(),
        None => x.to_string(),
    }
}

fn json_f64(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

/// One JSON object per sample, keys in lexicographic order.
pub fn trajectory_ndjson(sim: &Simulation) -> String {
    let rec = &sim.record;
    let names: Vec<String> = rec.observers.iter().map(|o| o.name()).collect();
    let mut out = String::new();
    for (k, s) in rec.samples.iter().enumerate() {
        let mut m = Map::new();
        m.insert("step".into(), Value::from(s.step));
        m.insert("t".into(), json_f64(s.t));
        m.insert("energy".into(), json_f64(s.energy));
        m.insert("lyapunov".into(), json_f64(s.lyapunov));
        m.insert("dissipation".into(), json_f64(s.dissipation));
        m.insert("dissipated".into(), json_f64(s.dissipated));
        m.insert("phase_norm".into(), json_f64(s.phase_norm));
        m.insert(
            "residual".into(),
            if k == 0 { Value::Null } else { json_f64(sim.residuals[k - 1]) },
        );
        for (name, v) in names.iter().zip(&s.extra) {
            m.insert(name.clone(), json_f64(*v));
        }
        out.push_str(&Value::Object(m).to_string());
        out.push('\n');
    }
    out
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Columns: `t, step, energy, lyapunov, dissipation, residual`, then one per observer.
pub fn summary_csv(sim: &Simulation) -> Result<Vec<u8>> {
    let rec = &sim.record;
    let mut header: Vec<String> = ["t", "step", "energy", "lyapunov", "dissipation", "residual", "phase_norm"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(rec.observers.iter().map(|o| o.name()));
    let rows = rec.samples.iter().enumerate().map(|(k, s)| {
        let mut r = vec![
            fmt_f64(s.t),
            s.step.to_string(),
            fmt_f64(s.energy),
            fmt_f64(s.lyapunov),
            fmt_f64(s.dissipation),
            if k == 0 { String::new() } else { fmt_f64(sim.residuals[k - 1]) },
            fmt_f64(s.phase_norm),
        ];
        r.extend(s.extra.iter().map(|&x| fmt_f64(x)));
        r
    });
    csv_bytes(&header, rows)
}

/// Long format: `sigma, t, energy`.
pub fn difference_quotient_csv(sim: &Simulation) -> Result<Vec<u8>> {
    let header = ["sigma", "t", "energy"].map(String::from);
    let rows = sim.difference_quotients.iter().flat_map(|s| {
        s.times
            .iter()
            .zip(&s.energies)
            .map(move |(&t, &e)| vec![fmt_f64(s.sigma), fmt_f64(t), fmt_f64(e)])
    });
    csv_bytes(&header, rows)
}

/// 64-bit content hashes of the bundle files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleHashes {
    pub config: String,
    pub trajectory: String,
    pub summary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difference_quotients: Option<String>,
}

/// Run manifest: provenance of a bundle, free of timestamps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub version: String,
    /// `completed` or `halted`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halted_step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halt_reason: Option<String>,
    pub master_seed: u64,
    pub sub_seeds: Vec<u64>,
    pub waived_hypotheses: Vec<String>,
    pub dt: f64,
    pub samples: usize,
    pub hashes: BundleHashes,
    pub config: RunConfig,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Paths and manifest of a written bundle.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub trajectory: PathBuf,
    pub summary: PathBuf,
    pub manifest: PathBuf,
    pub difference_quotients: Option<PathBuf>,
    pub contents: Manifest,
}

/// Writes trajectory, summary, optional difference quotients and manifest.
pub fn write_bundle(sim: &Simulation, dir: &Path) -> Result<Bundle> {
    fs::create_dir_all(dir)?;
    let traj = trajectory_ndjson(sim);
    let summary = summary_csv(sim)?;
    let trajectory_path = dir.join(TRAJECTORY_FILE);
    let summary_path = dir.join(SUMMARY_FILE);
    fs::write(&trajectory_path, &traj)?;
    fs::write(&summary_path, &summary)?;
    let (dq_path, dq_hash) = if sim.difference_quotients.is_empty() {
        (None, None)
    } else {
        let bytes = difference_quotient_csv(sim)?;
        let p = dir.join(DIFFERENCE_QUOTIENT_FILE);
        fs::write(&p, &bytes)?;
        (Some(p), Some(hash64(&bytes)))
    };
    let (status, halted_step, halt_reason) = match &sim.record.status {
        RunStatus::Completed => ("completed".to_string(), None, None),
        RunStatus::Halted { step, reason } => ("halted".to_string(), Some(*step), Some(reason.clone())),
    };
    let manifest = Manifest {
        name: sim.scenario.name.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        status,
        halted_step,
        halt_reason,
        master_seed: sim.initial.seed,
        sub_seeds: sim.initial.sub_seeds.clone(),
        waived_hypotheses: sim.scenario.waived.clone(),
        dt: sim.scenario.dt,
        samples: sim.record.samples.len(),
        hashes: BundleHashes {
            config: sim.config_hash.clone(),
            trajectory: hash64(traj.as_bytes()),
            summary: hash64(&summary),
            difference_quotients: dq_hash,
        },
        config: sim.config.clone(),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(format!("cannot serialize manifest: {e}")))?;
    fs::write(&manifest_path, text)?;
    Ok(Bundle {
        dir: dir.to_path_buf(),
        trajectory: trajectory_path,
        summary: summary_path,
        manifest: manifest_path,
        difference_quotients: dq_path,
        contents: manifest,
    })
}

/// [`simulate`] followed by [`write_bundle`].
pub fn run_scenario(cfg: &RunConfig, dir: &Path) -> Result<(Simulation, Bundle)> {
    let sim = simulate(cfg)?;
    let bundle = write_bundle(&sim, dir)?;
    Ok((sim, bundle))
}
