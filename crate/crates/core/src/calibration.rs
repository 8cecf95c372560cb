//! Greedy model-based array calibration.
//!
//! Antenna positions are fitted one at a time: with the first element fixed
//! at its true position, antenna `k` is placed at `p_{k-1} + d` for every
//! candidate gap `d`, and the gap with the lowest mean GOSPA of a standard
//! OMP (run for the known number of targets) over a set of observations is
//! kept. Antennas not yet visited stay at their assumed positions.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{ArrayModel, SteeringDictionary};
use crate::autodiff::steering_phase_matrix;
use crate::channel::{matched_filter, sensing_observation_with_noise};
use crate::error::{Error, Result};
use crate::linalg::CVec;
use crate::metrics::{gospa, GospaParams, Point};
use crate::omp::{detection_positions, omp_trace};
use crate::rng::{derive_seed, stream, CALIBRATION_ITEMS, TRAIN_SECTORS};
use crate::training::{build_precoder, draw_item, Scenario, SectorSampling};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Candidate gaps in meters.
    pub grid: Vec<f64>,
    /// Observations per sweep.
    pub observations: usize,
    /// Outer sweeps over the array.
    pub sweeps: usize,
    pub seed: u64,
    /// Sectors the calibration targets are placed in.
    pub sectors: SectorSampling,
    pub gospa: GospaParams,
}

impl CalibrationConfig {
    /// `n` gaps spread uniformly over `lambda/2 +- halfwidth * sigma`.
    pub fn uniform_grid(wavelength: f64, sigma: f64, halfwidth: f64, n: usize) -> Vec<f64> {
        let lo = wavelength / 2.0 - halfwidth * sigma;
        let hi = wavelength / 2.0 + halfwidth * sigma;
        if n == 1 {
            return vec![wavelength / 2.0];
        }
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidArgument("empty calibration grid".into()));
        }
        if self.grid.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidArgument("calibration gaps must be positive".into()));
        }
        if self.observations == 0 || self.sweeps == 0 {
            return Err(Error::InvalidArgument("need at least one observation and one sweep".into()));
        }
        Ok(())
    }
}

/// Loss curve of one antenna in one sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AntennaFit {
    pub sweep: usize,
    pub antenna: usize,
    pub losses: Vec<f64>,
    pub chosen: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub wavelength: f64,
    pub positions: Vec<f64>,
    pub grid: Vec<f64>,
    pub fits: Vec<AntennaFit>,
}

impl CalibrationResult {
    pub fn array(&self) -> Result<ArrayModel> {
        ArrayModel::from_positions(self.wavelength, &self.positions)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    /// CSV with one row per (sweep, antenna, candidate).
    pub fn write_report<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "sweep,antenna,candidate_gap,mean_gospa,chosen")?;
        for fit in &self.fits {
            for (m, (&d, &j)) in self.grid.iter().zip(&fit.losses).enumerate() {
                writeln!(w, "{},{},{},{},{}", fit.sweep, fit.antenna, d, j, u8::from(m == fit.chosen))?;
            }
        }
        Ok(())
    }
}

/// One calibration observation: matched-filtered sensing data and truth.
#[derive(Clone, Debug)]
pub struct Observation {
    pub y: crate::autodiff::CMat,
    pub truth: Vec<Point>,
}

/// Observations with `T ~ U{1..t_max}` targets in random sectors, each
/// illuminated by a beam synthesized for the assumed array.
pub fn collect_observations(scenario: &Scenario, assumed: &SteeringDictionary, cfg: &CalibrationConfig, sweep: usize) -> Result<Vec<Observation>> {
    let seed = derive_seed(cfg.seed, CALIBRATION_ITEMS, sweep as u64);
    (0..cfg.observations as u64)
        .into_par_iter()
        .map(|m| {
            let sector = cfg.sectors.sample(&mut stream(seed, TRAIN_SECTORS, m));
            let sp = scenario.sensing_priors(sector.0, sector.1);
            let cp = scenario.comm_priors(sector.0, sector.1);
            let item = draw_item(scenario, &sp, &cp, 1..=scenario.t_max.max(1), CALIBRATION_ITEMS, seed, m);
            let f: CVec = build_precoder(assumed, sector, sector, 1.0, 0.0, scenario.ofdm.power)?;
            let y = sensing_observation_with_noise(&item.scene, &f, &item.symbols, &scenario.ofdm, &scenario.true_array, &item.noise)?;
            Ok(Observation {
                y: matched_filter(&y, &item.symbols),
                truth: item.scene.positions(),
            })
        })
        .collect()
}

fn dictionary_from_positions(positions: &[f64], angle_grid: &[f64], wavelength: f64) -> Result<SteeringDictionary> {
    let mean = positions.iter().sum::<f64>() / positions.len() as f64;
    let centered: Vec<f64> = positions.iter().map(|p| p - mean).collect();
    let sin: Vec<f64> = angle_grid.iter().map(|t| t.sin()).collect();
    SteeringDictionary::new(steering_phase_matrix(&centered, &sin, wavelength), angle_grid.to_vec())
}

/// Mean GOSPA of OMP with known target counts for the given positions.
pub fn mean_gospa(scenario: &Scenario, positions: &[f64], observations: &[Observation], params: &GospaParams) -> Result<f64> {
    let dict = dictionary_from_positions(positions, &scenario.angle_grid, scenario.wavelength())?;
    let mut total = 0.0;
    for o in observations {
        let trace = omp_trace(&o.y, &dict, &scenario.delay, o.truth.len(), None);
        let est = detection_positions(&trace.prefix(trace.steps.len()));
        total += gospa(&o.truth, &est, params)?;
    }
    Ok(total / observations.len() as f64)
}

/// Greedy calibration starting from `assumed` (whose first position is
/// taken as exact). The transmit beam always uses the assumed array.
pub fn greedy_calibrate(scenario: &Scenario, assumed: &ArrayModel, cfg: &CalibrationConfig) -> Result<CalibrationResult> {
    cfg.validate()?;
    let wavelength = assumed.wavelength();
    let assumed_dict = assumed.steering_matrix(&scenario.angle_grid)?;
    let mut positions = assumed.positions();
    let mut fits = Vec::new();
    for sweep in 0..cfg.sweeps {
        let obs = collect_observations(scenario, &assumed_dict, cfg, sweep)?;
        for k in 1..positions.len() {
            let losses: Vec<f64> = cfg
                .grid
                .par_iter()
                .map(|&d| {
                    let mut p = positions.clone();
                    p[k] = p[k - 1] + d;
                    mean_gospa(scenario, &p, &obs, &cfg.gospa)
                })
                .collect::<Result<_>>()?;
            // first minimum wins ties
            let chosen = losses
                .iter()
                .enumerate()
                .fold(0, |best, (m, &j)| if j < losses[best] { m } else { best });
            positions[k] = positions[k - 1] + cfg.grid[chosen];
            fits.push(AntennaFit {
                sweep,
                antenna: k,
                losses,
                chosen,
            });
        }
    }
    Ok(CalibrationResult {
        wavelength,
        positions,
        grid: cfg.grid.clone(),
        fits,
    })
}
