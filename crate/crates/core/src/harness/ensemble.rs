use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{Observer, RunStatus};

use super::bundle::{fmt_f64, simulate, write_bundle, Simulation};
use super::config::{InitialDataSpec, RunConfig};
use super::hash64;

pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const ENSEMBLE_MANIFEST_FILE: &str = "ensemble.toml";

/// Seed and initial norm of one member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub seed: u64,
    pub target_norm: f64,
}

/// Every `(seed, norm)` pair, norms outermost.
pub fn members(seeds: &[u64], norms: &[f64]) -> Vec<EnsembleMember> {
    norms
        .iter()
        .flat_map(|&target_norm| seeds.iter().map(move |&seed| EnsembleMember { seed, target_norm }))
        .collect()
}

/// Ensemble-wide aggregates per sampled time.
#[derive(Debug, Clone)]
pub struct EnsembleReport {
    pub times: Vec<f64>,
    /// `sup` over members of `‖(u, v)‖_{H2×L2}`.
    pub absorption: Vec<f64>,
    pub radii: Vec<f64>,
    /// `sup` over members of the tail norm, per time (outer) and radius (inner).
    pub tails: Vec<Vec<f64>>,
    /// Largest `L(t_{k+1}) − L(t_k)` over members and samples.
    pub max_lyapunov_increase: f64,
    /// Largest `|residual|` over members and sampling intervals.
    pub max_balance_residual: f64,
    pub runs: Vec<Simulation>,
    pub member_dirs: Vec<Option<PathBuf>>,
}

impl EnsembleReport {
    /// Column of [`EnsembleReport::tails`] for one radius.
    pub fn tail_series(&self, radius: f64) -> Option<Vec<f64>> {
        let k = self.radii.iter().position(|&r| r == radius)?;
        Some(self.tails.iter().map(|row| row[k]).collect())
    }
}

fn member_config(template: &RunConfig, m: &EnsembleMember) -> RunConfig {
    let mut cfg = template.clone();
    cfg.initial = InitialDataSpec::LowPass { seed: m.seed, target_norm: m.target_norm };
    cfg
}

/// Runs one trajectory per member concurrently and aggregates them.
///
/// With `out`, each member writes its own bundle under `member-XXX/`
/// before aggregation; bundles survive a member failure.
pub fn run_ensemble(template: &RunConfig, list: &[EnsembleMember], out: Option<&Path>) -> Result<EnsembleReport> {
    if list.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "seeds",
            reason: format!("an ensemble needs at least 2 members, got {}", list.len()),
        });
    }
    let results: Vec<(Result<Simulation>, Option<PathBuf>)> = list
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            let sim = simulate(&member_config(template, m));
            let dir = out.map(|o| o.join(format!("member-{i:03}")));
            let sim = match (sim, &dir) {
                (Ok(s), Some(d)) => write_bundle(&s, d).map(|_| s),
                (r, _) => r,
            };
            (sim, dir)
        })
        .collect();

    let mut runs = Vec::with_capacity(list.len());
    let mut member_dirs = Vec::with_capacity(list.len());
    for (i, (r, dir)) in results.into_iter().enumerate() {
        let fail = |reason: String| Error::EnsembleMember { index: i, seed: list[i].seed, reason };
        let sim = r.map_err(|e| fail(e.to_string()))?;
        if let RunStatus::Halted { step, reason } = sim.status() {
            return Err(fail(format!("halted at step {step}: {reason}")));
        }
        runs.push(sim);
        member_dirs.push(dir);
    }

    let times = runs[0].record.times();
    if runs.iter().any(|r| r.record.times() != times) {
        return Err(Error::Config("ensemble members sampled at different times".into()));
    }
    let observers = &runs[0].record.observers;
    let tail_cols: Vec<(usize, f64)> = observers
        .iter()
        .enumerate()
        .filter_map(|(k, o)| match o {
            Observer::Tail { radius } => Some((k, *radius)),
            _ => None,
        })
        .collect();

    let absorption: Vec<f64> = (0..times.len())
        .map(|i| runs.iter().map(|r| r.record.samples[i].phase_norm).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let tails: Vec<Vec<f64>> = (0..times.len())
        .map(|i| {
            tail_cols
                .iter()
                .map(|&(k, _)| runs.iter().map(|r| r.record.samples[i].extra[k]).fold(f64::NEG_INFINITY, f64::max))
                .collect()
        })
        .collect();
    let max_lyapunov_increase = runs
        .iter()
        .flat_map(|r| r.record.samples.windows(2).map(|w| w[1].lyapunov - w[0].lyapunov))
        .fold(f64::NEG_INFINITY, f64::max);
    let max_balance_residual = runs
        .iter()
        .flat_map(|r| r.residuals.iter().map(|x| x.abs()))
        .fold(0.0, f64::max);

    let report = EnsembleReport {
        times,
        absorption,
        radii: tail_cols.iter().map(|c| c.1).collect(),
        tails,
        max_lyapunov_increase,
        max_balance_residual,
        runs,
        member_dirs,
    };
    if let Some(o) = out {
        write_aggregate(&report, template, list, o)?;
    }
    Ok(report)
}

#[derive(Serialize)]
struct EnsembleManifest<'a> {
    version: &'a str,
    config_hash: String,
    aggregate_hash: String,
    max_lyapunov_increase: f64,
    max_balance_residual: f64,
    members: Vec<MemberEntry>,
}

#[derive(Serialize)]
struct MemberEntry {
    seed: u64,
    target_norm: f64,
    dir: String,
    config_hash: String,
}

fn write_aggregate(report: &EnsembleReport, template: &RunConfig, list: &[EnsembleMember], out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string(), "absorption".to_string()];
    header.extend(report.radii.iter().map(|r| format!("sup_tail_r{r}")));
    w.write_record(&header)?;
    for (i, t) in report.times.iter().enumerate() {
        let mut row = vec![fmt_f64(*t), fmt_f64(report.absorption[i])];
        row.extend(report.tails[i].iter().map(|&x| fmt_f64(x)));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    fs::write(out.join(AGGREGATE_FILE), &bytes)?;

    let manifest = EnsembleManifest {
        version: env!("CARGO_PKG_VERSION"),
        config_hash: template.hash()?,
        aggregate_hash: hash64(&bytes),
        max_lyapunov_increase: report.max_lyapunov_increase,
        max_balance_residual: report.max_balance_residual,
        members: list
            .iter()
            .zip(&report.runs)
            .zip(&report.member_dirs)
            .map(|((m, r), d)| MemberEntry {
                seed: m.seed,
                target_norm: m.target_norm,
                dir: d
                    .as_ref()
                    .and_then(|p| p.file_name())
                    .map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
                config_hash: r.config_hash.clone(),
            })
            .collect(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(format!("cannot serialize ensemble manifest: {e}")))?;
    fs::write(out.join(ENSEMBLE_MANIFEST_FILE), text)?;
    Ok(())
}
