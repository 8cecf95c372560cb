//! CSV tables and run manifests.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! results always produce byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::experiment::{GeneralizationRow, IsacRow, OperatingPoint, RocRow, SensingRow};
use crate::metrics::Point;

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

const POINT_COLUMNS: [&str; 9] = ["delta", "pmd", "pfa", "gospa", "gospa_se", "gospa_known_t", "gospa_known_t_se", "ser", "items"];

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn point_cells(p: &OperatingPoint) -> Vec<String> {
    vec![
        num(p.delta),
        num(p.pmd),
        num(p.pfa),
        num(p.gospa),
        num(p.gospa_se),
        num(p.gospa_known_t),
        num(p.gospa_known_t_se),
        num(p.ser),
        p.items.to_string(),
    ]
}

fn header(lead: &[&str], tail: &[&str]) -> Vec<String> {
    lead.iter().chain(POINT_COLUMNS.iter()).chain(tail).map(|s| s.to_string()).collect()
}

impl Table {
    pub fn sensing(rows: &[SensingRow]) -> Self {
        Self {
            header: header(&["system", "t_max"], &[]),
            rows: rows
                .iter()
                .map(|r| [vec![r.system.clone(), r.t_max.to_string()], point_cells(&r.point)].concat())
                .collect(),
        }
    }

    pub fn roc(rows: &[RocRow]) -> Self {
        Self {
            header: header(&["system", "threshold_ratio"], &[]),
            rows: rows
                .iter()
                .map(|r| [vec![r.system.clone(), num(r.ratio)], point_cells(&r.point)].concat())
                .collect(),
        }
    }

    /// Full sweep, or only the Pareto-optimal rows.
    pub fn isac(rows: &[IsacRow], pareto_only: bool) -> Self {
        Self {
            header: header(&["system", "eta", "phase"], &["pareto"]),
            rows: rows
                .iter()
                .filter(|r| !pareto_only || r.pareto)
                .map(|r| {
                    [
                        vec![r.system.clone(), num(r.eta), num(r.phase)],
                        point_cells(&r.point),
                        vec![u8::from(r.pareto).to_string()],
                    ]
                    .concat()
                })
                .collect(),
        }
    }

    pub fn generalization(rows: &[GeneralizationRow]) -> Self {
        Self {
            header: header(&["system", "theta_mean_deg"], &[]),
            rows: rows
                .iter()
                .map(|r| [vec![r.system.clone(), num(r.theta_mean_deg)], point_cells(&r.point)].concat())
                .collect(),
        }
    }

    pub fn targets(points: &[Point]) -> Self {
        Self {
            header: vec!["x".into(), "y".into()],
            rows: points.iter().map(|p| vec![num(p[0]), num(p[1])]).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| io_error(path, e))
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Creates the output directory if needed.
pub fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_toml().as_bytes()))
}

/// Provenance of one command run. Contains nothing time-dependent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub files: Vec<String>,
    /// Fixed-threshold grid of the ROC sweep, in multiples of the noise floor.
    pub roc_thresholds: Vec<f64>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, files: Vec<String>) -> Self {
        Self {
            version: VERSION.to_string(),
            command: command.to_string(),
            seed: cfg.seed,
            config_sha256: config_hash(cfg),
            files,
            roc_thresholds: cfg.eval.roc_thresholds.clone(),
        }
    }

    pub fn file_name(command: &str) -> String {
        format!("manifest_{command}.json")
    }

    /// Writes the manifest and the resolved configuration next to it.
    pub fn write(&self, dir: &Path, cfg: &ExperimentConfig) -> Result<PathBuf> {
        let path = dir.join(Self::file_name(&self.command));
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| io_error(&path, e))?;
        let cfg_path = dir.join("config.toml");
        fs::write(&cfg_path, cfg.to_toml()).map_err(|e| io_error(&cfg_path, e))?;
        Ok(path)
    }
}
