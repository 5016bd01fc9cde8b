//! Report rows and CSV output. Column order and names are fixed; the config
//! hash of a run goes into `manifest.toml` next to the CSV files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticRow {
    pub snr_db: f64,
    pub detector: String,
    pub mse_ns2: f64,
    pub crlb_ns2: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackRow {
    pub step: usize,
    pub true_toa_ns: f64,
    pub fused_toa_ns: f64,
    pub mse_ns2: f64,
    pub n_detectors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NedRow {
    pub snr_db: f64,
    pub ned_empirical: f64,
    pub ned_analytic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdpRow {
    pub block: usize,
    pub energy_fraction: f64,
}

/// Steady-state summary of one fused bank (or the matched-filter baseline).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyRow {
    pub snr_db: f64,
    pub detector: String,
    pub n_detectors: usize,
    /// Filter-reported MSE over the steady-state window.
    pub steady_mse_ns2: f64,
    /// Empirical squared tracking error over the same window.
    pub tracking_mse_ns2: f64,
    pub single_shot_mse_ns2: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseReport {
    pub seed: u64,
    pub config_hash: String,
    pub static_rows: Vec<StaticRow>,
    pub steady_rows: Vec<SteadyRow>,
    pub ned_rows: Vec<NedRow>,
    /// WMESS weights used by a multipath run.
    pub profile: Vec<f64>,
}

impl MseReport {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            seed: cfg.seed,
            config_hash: cfg.hash(),
            static_rows: Vec::new(),
            steady_rows: Vec::new(),
            ned_rows: Vec::new(),
            profile: Vec::new(),
        }
    }

    /// Steady-state MSE of a bank, if present.
    pub fn steady(&self, snr_db: f64, detector: &str, n: usize) -> Option<f64> {
        self.steady_rows
            .iter()
            .find(|r| r.snr_db == snr_db && r.detector == detector && r.n_detectors == n)
            .map(|r| r.steady_mse_ns2)
    }

    pub fn static_mse(&self, snr_db: f64, detector: &str) -> Option<f64> {
        self.static_rows
            .iter()
            .find(|r| r.snr_db == snr_db && r.detector == detector)
            .map(|r| r.mse_ns2)
    }
}

pub fn pdp_rows(profile: &[f64]) -> Vec<PdpRow> {
    profile
        .iter()
        .enumerate()
        .map(|(i, &v)| PdpRow {
            block: i + 1,
            energy_fraction: v,
        })
        .collect()
}

/// Writes rows with a header line even when `rows` is empty.
pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub const STATIC_HEADER: [&str; 6] = ["snr_db", "detector", "mse_ns2", "crlb_ns2", "trials", "seed"];
pub const TRACK_HEADER: [&str; 5] = ["step", "true_toa_ns", "fused_toa_ns", "mse_ns2", "n_detectors"];
pub const NED_HEADER: [&str; 3] = ["snr_db", "ned_empirical", "ned_analytic"];
pub const PDP_HEADER: [&str; 2] = ["block", "energy_fraction"];
pub const STEADY_HEADER: [&str; 8] = [
    "snr_db",
    "detector",
    "n_detectors",
    "steady_mse_ns2",
    "tracking_mse_ns2",
    "single_shot_mse_ns2",
    "trials",
    "seed",
];

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    config_hash: String,
    files: Vec<String>,
    config: &'a ExperimentConfig,
}

/// Records the command, seed, config hash and resolved config of a run.
pub fn write_manifest(dir: &Path, command: &str, cfg: &ExperimentConfig, files: &[PathBuf]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        command,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        files: files
            .iter()
            .map(|p| {
                p.strip_prefix(dir)
                    .unwrap_or(p)
                    .to_string_lossy()
                    .into_owned()
            })
            .collect(),
        config: cfg,
    };
    let text = toml::to_string(&manifest).map_err(|e| crate::Error::Config(e.to_string()))?;
    fs::write(dir.join("manifest.toml"), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headers_match_row_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("static_mse.csv");
        let rows = vec![StaticRow {
            snr_db: 20.0,
            detector: "matched-filter".into(),
            mse_ns2: 0.5,
            crlb_ns2: f64::INFINITY,
            trials: 3,
            seed: 7,
        }];
        write_csv(&path, &STATIC_HEADER, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "snr_db,detector,mse_ns2,crlb_ns2,trials,seed\n20.0,matched-filter,0.5,inf,3,7\n");

        let path = dir.path().join("empty.csv");
        write_csv::<PdpRow>(&path, &PDP_HEADER, &[]).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "block,energy_fraction\n");
    }
}
