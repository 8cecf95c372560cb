//! Experiment configuration: a TOML file layered over a preset.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::array::{sample_impairment, uniform_grid, ArrayModel};
use crate::channel::{calibrate_comm_noise, calibrate_noise, OfdmConfig};
use crate::calibration::CalibrationConfig;
use crate::comm::Constellation;
use crate::error::{Error, Result};
use crate::omp::{build_delay_dictionary, discrete_resolutions, SoftWindow};
use crate::rng::{stream, IMPAIRMENT};
use crate::metrics::GospaParams;
use crate::training::{Mode, Scenario, SectorSampling, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Paper,
    Desk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub num_antennas: usize,
    /// Standard deviation of the spacing errors in wavelengths.
    pub impairment_sigma: f64,
    pub subcarriers: usize,
    pub subcarrier_spacing: f64,
    pub carrier_frequency: f64,
    pub power: f64,
    pub rcs_mean: f64,
    pub sensing_snr_db: f64,
    pub comm_snr_db: f64,
    pub t_max: usize,
    pub max_comm_paths: usize,
    pub range_min: f64,
    pub range_max: f64,
    pub comm_range_min: f64,
    pub comm_range_max: f64,
    pub n_theta: usize,
    pub n_tau: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            num_antennas: 64,
            impairment_sigma: 1.0 / 15.0,
            subcarriers: 256,
            subcarrier_spacing: 240e3,
            carrier_frequency: 60e9,
            power: 1.0,
            rcs_mean: 1.0,
            sensing_snr_db: 7.05,
            comm_snr_db: 7.5,
            t_max: 5,
            max_comm_paths: 6,
            range_min: 10.0,
            range_max: 43.75,
            comm_range_min: 10.0,
            comm_range_max: 200.0,
            n_theta: 720,
            n_tau: 200,
        }
    }
}

/// Detector and training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningConfig {
    pub batch_size: usize,
    pub iterations: usize,
    /// Adam step for the spacing model, in meters.
    pub lr_impairment: f64,
    pub lr_dictionary: f64,
    pub omega_r: f64,
    pub eta: f64,
    pub phase: f64,
    pub temperature: f64,
    pub sector_mean_min_deg: f64,
    pub sector_mean_max_deg: f64,
    pub sector_span_min_deg: f64,
    pub sector_span_max_deg: f64,
    pub gospa_mu: f64,
    pub gospa_p: f64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            batch_size: 800,
            iterations: 15_000,
            lr_impairment: 1e-5,
            lr_dictionary: 1e-5,
            omega_r: 1.0,
            eta: 1.0,
            phase: 0.0,
            temperature: 0.1,
            sector_mean_min_deg: -60.0,
            sector_mean_max_deg: 60.0,
            sector_span_min_deg: 10.0,
            sector_span_max_deg: 20.0,
            gospa_mu: 2.0,
            gospa_p: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Held-out scenes per evaluation point.
    pub items: usize,
    pub target_pfa: f64,
    /// Test sectors in degrees.
    pub sensing_sector_deg: [f64; 2],
    pub comm_sector_deg: [f64; 2],
    /// GOSPA cut-off at inference; defaults to the range span.
    pub gospa_cutoff: Option<f64>,
    /// Thresholds of the ROC sweep, relative to the noise floor of the map.
    pub roc_thresholds: Vec<f64>,
    pub eta_points: usize,
    pub eta_min: f64,
    pub eta_max: f64,
    pub phases: Vec<f64>,
    pub generalization_span_deg: f64,
    pub generalization_means_deg: Vec<f64>,
    /// Calibration candidate gaps per antenna.
    pub calibration_points: usize,
    /// Calibration search half-width in units of the spacing standard deviation.
    pub calibration_halfwidth: f64,
    pub calibration_items: usize,
    pub calibration_sweeps: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            items: 2000,
            target_pfa: 1e-2,
            sensing_sector_deg: [-40.0, -20.0],
            comm_sector_deg: [40.0, 60.0],
            gospa_cutoff: None,
            roc_thresholds: log_space(1.0, 100.0, 25),
            eta_points: 8,
            eta_min: 1e-3,
            eta_max: 1.0,
            phases: vec![0.0, PI],
            generalization_span_deg: 20.0,
            generalization_means_deg: vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0],
            calibration_points: 100,
            calibration_halfwidth: 4.0,
            calibration_items: 800,
            calibration_sweeps: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub system: SystemConfig,
    pub learning: LearningConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(Preset::Paper)
    }
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = Self {
            seed: 0,
            system: SystemConfig::default(),
            learning: LearningConfig::default(),
            eval: EvalConfig::default(),
        };
        match preset {
            Preset::Paper => base,
            Preset::Desk => Self {
                system: SystemConfig {
                    num_antennas: 16,
                    subcarriers: 64,
                    n_theta: 180,
                    n_tau: 50,
                    ..base.system
                },
                learning: LearningConfig {
                    batch_size: 64,
                    iterations: 2000,
                    ..base.learning
                },
                eval: EvalConfig {
                    items: 1000,
                    calibration_items: 64,
                    ..base.eval
                },
                ..base
            },
        }
    }

    /// Preset overlaid with the keys present in a TOML document.
    pub fn from_toml(text: &str, preset: Preset) -> Result<Self> {
        let overlay: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let base = toml::Table::try_from(Self::preset(preset)).map_err(|e| Error::Config(e.to_string()))?;
        let merged = merge(base, overlay);
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, preset: Preset) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, preset)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if s.num_antennas < 2 || s.subcarriers == 0 || s.n_theta < 2 || s.n_tau < 2 {
            return bad("array, subcarrier and grid sizes must be positive");
        }
        if !(s.range_min > 0.0 && s.range_max > s.range_min) || !(s.comm_range_min > 0.0 && s.comm_range_max >= s.comm_range_min) {
            return bad("range priors must be positive intervals");
        }
        if s.impairment_sigma < 0.0 || s.max_comm_paths == 0 {
            return bad("impairment spread must be non-negative and at least one comm path allowed");
        }
        let l = &self.learning;
        if l.batch_size == 0 || !(l.temperature > 0.0) || !(0.0..=1.0).contains(&l.omega_r) || !(0.0..=1.0).contains(&l.eta) {
            return bad("invalid learning parameters");
        }
        if !(l.sector_span_min_deg > 0.0 && l.sector_span_max_deg >= l.sector_span_min_deg) {
            return bad("sector spans must be positive");
        }
        let e = &self.eval;
        let ordered = |s: [f64; 2]| s[0] < s[1] && s[0] >= -90.0 && s[1] <= 90.0;
        if !ordered(e.sensing_sector_deg) || !ordered(e.comm_sector_deg) {
            return bad("test sectors must be increasing intervals inside [-90, 90] degrees");
        }
        if e.items == 0 || !(e.target_pfa > 0.0 && e.target_pfa < 1.0) || e.eta_points == 0 || e.calibration_points < 2 || e.calibration_sweeps == 0 || e.calibration_items == 0 {
            return bad("invalid evaluation parameters");
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        crate::SPEED_OF_LIGHT / self.system.carrier_frequency
    }

    pub fn gospa_cutoff(&self) -> f64 {
        self.eval.gospa_cutoff.unwrap_or(self.system.range_max - self.system.range_min)
    }

    pub fn eta_grid(&self) -> Vec<f64> {
        log_space(self.eval.eta_min, self.eval.eta_max, self.eval.eta_points)
    }

    pub fn angle_grid(&self) -> Vec<f64> {
        uniform_grid(-FRAC_PI_2, FRAC_PI_2, self.system.n_theta)
    }

    /// OFDM parameters with the sensing noise PSD calibrated to the target SNR.
    pub fn ofdm(&self) -> OfdmConfig {
        let s = &self.system;
        let mut cfg = OfdmConfig {
            subcarriers: s.subcarriers,
            subcarrier_spacing: s.subcarrier_spacing,
            carrier_frequency: s.carrier_frequency,
            power: s.power,
            noise_psd: 1.0,
            rcs_mean: s.rcs_mean,
        };
        cfg.noise_psd = calibrate_noise(&cfg, s.num_antennas, s.range_min, s.range_max, s.sensing_snr_db);
        cfg
    }

    /// The impaired array for this seed.
    pub fn true_array(&self) -> ArrayModel {
        let l = self.wavelength();
        let mut rng = stream(self.seed, IMPAIRMENT, 0);
        let d = sample_impairment(self.system.num_antennas, l, self.system.impairment_sigma * l, &mut rng);
        ArrayModel::with_spacing(l, d).expect("sampled gaps are finite")
    }

    pub fn scenario(&self) -> Result<Scenario> {
        self.validate()?;
        let s = &self.system;
        let ofdm = self.ofdm();
        let comm_noise_psd = calibrate_comm_noise(&ofdm, s.num_antennas, s.comm_range_min, s.comm_range_max, s.comm_snr_db);
        let delay = build_delay_dictionary(&ofdm, s.range_min, s.range_max, s.n_tau)?;
        let (iota_theta, iota_r) = discrete_resolutions(s.num_antennas, &ofdm, s.n_theta, s.n_tau, PI, s.range_max - s.range_min)?;
        Ok(Scenario {
            true_array: self.true_array(),
            angle_grid: self.angle_grid(),
            delay,
            constellation: Constellation::qpsk(),
            range_min: s.range_min,
            range_max: s.range_max,
            comm_range_min: s.comm_range_min,
            comm_range_max: s.comm_range_max,
            max_comm_paths: s.max_comm_paths,
            t_max: s.t_max,
            window: SoftWindow {
                iota_theta,
                iota_r,
                temperature: self.learning.temperature,
            },
            comm_noise_psd,
            ofdm,
        })
    }

    pub fn calibration_config(&self) -> CalibrationConfig {
        let l = self.wavelength();
        let e = &self.eval;
        CalibrationConfig {
            grid: CalibrationConfig::uniform_grid(l, self.system.impairment_sigma * l, e.calibration_halfwidth, e.calibration_points),
            observations: e.calibration_items,
            sweeps: e.calibration_sweeps,
            seed: self.seed,
            sectors: self.sector_sampling(),
            gospa: GospaParams::inference(self.gospa_cutoff()),
        }
    }

    fn sector_sampling(&self) -> SectorSampling {
        let l = &self.learning;
        SectorSampling {
            mean_min: l.sector_mean_min_deg.to_radians(),
            mean_max: l.sector_mean_max_deg.to_radians(),
            span_min: l.sector_span_min_deg.to_radians(),
            span_max: l.sector_span_max_deg.to_radians(),
        }
    }

    pub fn train_config(&self, mode: Mode) -> TrainConfig {
        let l = &self.learning;
        TrainConfig {
            batch_size: l.batch_size,
            iterations: l.iterations,
            learning_rate: match mode {
                Mode::Impairment => l.lr_impairment,
                Mode::Dictionary => l.lr_dictionary,
            },
            omega_r: l.omega_r,
            eta: l.eta,
            phase: l.phase,
            seed: self.seed,
            sectors: self.sector_sampling(),
        }
    }
}

fn merge(mut base: toml::Table, overlay: toml::Table) -> toml::Table {
    for (k, v) in overlay {
        match (base.remove(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                base.insert(k, toml::Value::Table(merge(b, o)));
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}
