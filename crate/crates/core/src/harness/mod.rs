//! Configuration files, initial-data sampling, runs, ensembles and their
//! on-disk bundles.
//!
//! A run config is a TOML file:
//!
//! ```toml
//! scenario_file = "scenario.toml"   # or an inline [scenario] table
//!
//! [initial]
//! sampler = "low_pass"              # low_pass | zero | constant
//! seed = 7
//! target_norm = 1.0
//!
//! [run]
//! horizon = 10.0
//! stride = 10
//! radii = [6.0]
//! sigmas = [0.01]
//! norms = ["u_h2", "v_l2"]
//! ```
//!
//! Unknown keys are errors. A bundle holds `trajectory.ndjson`,
//! `summary.csv`, optionally `difference_quotients.csv`, and
//! `manifest.toml` with the config echo and 64-bit content hashes.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::stationary::{search_stationary, StationarySummary, DEFAULT_TOL};

mod bundle;
mod config;
mod ensemble;
mod sampling;

pub use bundle::{
    run_scenario, simulate, summary_csv, trajectory_ndjson, write_bundle, Bundle, BundleHashes,
    DifferenceQuotientSeries, Manifest, Simulation, DIFFERENCE_QUOTIENT_FILE, MANIFEST_FILE, SUMMARY_FILE,
    TRAJECTORY_FILE,
};
pub use config::{
    parse_norm_observer, validate_config, ConfigValidation, InitialDataSpec, Overrides, RunConfig, RunSection,
};
pub use ensemble::{members, run_ensemble, EnsembleMember, EnsembleReport, AGGREGATE_FILE, ENSEMBLE_MANIFEST_FILE};
pub use sampling::{low_pass, sample_initial_data, InitialData, MAX_SUB_SEEDS};

pub const STATIONARY_FILE: &str = "stationary.ndjson";

/// First 8 bytes of SHA-256, as 16 hex digits.
pub fn hash64(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Stationary search for the config's scenario: the zero guess plus
/// `guesses` random ones seeded from the scenario seed. Writes one JSON line
/// per distinct converged point when `out` is given.
pub fn run_stationary(
    cfg: &RunConfig,
    guesses: usize,
    scale: f64,
    max_iter: usize,
    out: Option<&Path>,
) -> Result<Vec<StationarySummary>> {
    let sc = cfg.scenario()?.build()?;
    let found = search_stationary(&sc, guesses, sc.seed, scale, DEFAULT_TOL, max_iter)?;
    let summaries: Vec<StationarySummary> = found.iter().map(|r| r.summary()).collect::<Result<_>>()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let mut text = String::new();
        for s in &summaries {
            text.push_str(&serde_json::to_string(s)?);
            text.push('\n');
        }
        fs::write(dir.join(STATIONARY_FILE), text)?;
    }
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_sixteen_hex_digits() {
        let h = hash64(b"abc");
        assert_eq!(h, "ba7816bf8f01cfea");
        assert_ne!(hash64(b"abd"), h);
    }
}
