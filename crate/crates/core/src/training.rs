//! End-to-end gradient training of the array model.
//!
//! One iteration builds the precoder from the current parameters on a small
//! tape, simulates every batch item on its own tape (sensing through the
//! differentiable OMP into GOSPA, communication through the soft posterior
//! into cross-entropy), sums the per-item adjoints of the precoder and the
//! steering matrix in a fixed order, and pulls them back to the parameters.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adam::Adam;
use crate::array::{steering_matrix_on_tape, ArrayModel, SteeringDictionary};
use crate::autodiff::{CMat, Tape, Var};
use crate::beamforming::{isac_combine, isac_combine_on_tape, synthesize, synthesize_on_tape, Beampattern};
use crate::channel::{
    comm_observation_on_tape, draw_noise, matched_filter_on_tape, sample_comm_scene, sample_sensing_scene_with_count,
    sensing_observation_on_tape, CommPriors, CommScene, OfdmConfig, SectorPriors, SensingScene, SymbolBlock,
};
use crate::comm::{soft_logits_on_tape, Constellation};
use crate::error::{Error, Result};
use crate::linalg::CVec;
use crate::metrics::{gospa_gradient_inputs, GospaParams, Point};
use crate::omp::{omp_differentiable, DelayDictionary, SoftWindow};
use crate::rng::{stream, TRAIN_ITEMS, TRAIN_SECTORS};
use crate::SPEED_OF_LIGHT;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything about the simulated world that training does not change.
#[derive(Clone, Debug)]
pub struct Scenario {
    /// Carries the sensing noise PSD.
    pub ofdm: OfdmConfig,
    pub comm_noise_psd: f64,
    pub true_array: ArrayModel,
    pub angle_grid: Vec<f64>,
    pub delay: DelayDictionary,
    pub constellation: Constellation,
    pub range_min: f64,
    pub range_max: f64,
    pub comm_range_min: f64,
    pub comm_range_max: f64,
    pub max_comm_paths: usize,
    pub t_max: usize,
    pub window: SoftWindow,
}

impl Scenario {
    pub fn num_antennas(&self) -> usize {
        self.true_array.num_antennas()
    }

    pub fn wavelength(&self) -> f64 {
        self.ofdm.wavelength()
    }

    pub fn comm_ofdm(&self) -> OfdmConfig {
        self.ofdm.with_noise_psd(self.comm_noise_psd)
    }

    pub fn sensing_priors(&self, theta_min: f64, theta_max: f64) -> SectorPriors {
        SectorPriors {
            theta_min,
            theta_max,
            range_min: self.range_min,
            range_max: self.range_max,
        }
    }

    pub fn comm_priors(&self, theta_min: f64, theta_max: f64) -> CommPriors {
        CommPriors {
            theta_min,
            theta_max,
            range_min: self.comm_range_min,
            range_max: self.comm_range_max,
            max_paths: self.max_comm_paths,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Impairment,
    Dictionary,
}

/// Learnable steering model, shared by the transmitter and the receiver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum LearnableParams {
    /// `K-1` inter-antenna gaps in meters.
    Impairment { wavelength: f64, spacing: Vec<f64> },
    /// Free `K x N_theta` dictionary stored column-major as real and
    /// imaginary parts.
    Dictionary {
        rows: usize,
        cols: usize,
        re: Vec<f64>,
        im: Vec<f64>,
    },
}

impl LearnableParams {
    /// Gaps initialized at `lambda/2`.
    pub fn impairment(num_antennas: usize, wavelength: f64) -> Self {
        Self::Impairment {
            wavelength,
            spacing: vec![wavelength / 2.0; num_antennas - 1],
        }
    }

    /// Dictionary initialized at the nominal steering matrix.
    pub fn dictionary(num_antennas: usize, wavelength: f64, angle_grid: &[f64]) -> Result<Self> {
        let m = ArrayModel::nominal(num_antennas, wavelength).steering_matrix(angle_grid)?.matrix;
        Ok(Self::Dictionary {
            rows: m.nrows(),
            cols: m.ncols(),
            re: m.iter().map(|z| z.re).collect(),
            im: m.iter().map(|z| z.im).collect(),
        })
    }

    pub fn new(mode: Mode, num_antennas: usize, wavelength: f64, angle_grid: &[f64]) -> Result<Self> {
        match mode {
            Mode::Impairment => Ok(Self::impairment(num_antennas, wavelength)),
            Mode::Dictionary => Self::dictionary(num_antennas, wavelength, angle_grid),
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            Self::Impairment { .. } => Mode::Impairment,
            Self::Dictionary { .. } => Mode::Dictionary,
        }
    }

    /// Count of real scalars the optimizer sees.
    pub fn num_real_parameters(&self) -> usize {
        match self {
            Self::Impairment { spacing, .. } => spacing.len(),
            Self::Dictionary { re, im, .. } => re.len() + im.len(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        match self {
            Self::Impairment { spacing, .. } => spacing.clone(),
            Self::Dictionary { re, im, .. } => re.iter().chain(im).copied().collect(),
        }
    }

    pub fn set_flat(&mut self, v: &[f64]) {
        match self {
            Self::Impairment { spacing, wavelength } => {
                let floor = 1e-3 * *wavelength;
                for (d, &x) in spacing.iter_mut().zip(v) {
                    *d = x.max(floor);
                }
            }
            Self::Dictionary { re, im, .. } => {
                let n = re.len();
                re.copy_from_slice(&v[..n]);
                im.copy_from_slice(&v[n..]);
            }
        }
    }

    pub fn array(&self) -> Option<Result<ArrayModel>> {
        match self {
            Self::Impairment { wavelength, spacing } => Some(ArrayModel::with_spacing(*wavelength, spacing.clone())),
            Self::Dictionary { .. } => None,
        }
    }

    pub fn steering_dictionary(&self, angle_grid: &[f64]) -> Result<SteeringDictionary> {
        match self {
            Self::Impairment { wavelength, spacing } => {
                ArrayModel::with_spacing(*wavelength, spacing.clone())?.steering_matrix(angle_grid)
            }
            Self::Dictionary { rows, cols, re, im } => {
                if *cols != angle_grid.len() {
                    return Err(Error::DimensionMismatch(format!("dictionary has {cols} columns, grid {}", angle_grid.len())));
                }
                let m = CMat::from_iterator(*rows, *cols, re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)));
                SteeringDictionary::new(m, angle_grid.to_vec())
            }
        }
    }

    /// Parameter leaf and the steering matrix built from it.
    fn on_tape(&self, tape: &mut Tape, angle_grid: &[f64]) -> Result<(Var, Var)> {
        match self {
            Self::Impairment { wavelength, spacing } => {
                let leaf = tape.real_leaf(spacing);
                let phi = steering_matrix_on_tape(tape, leaf, angle_grid, *wavelength);
                Ok((leaf, phi))
            }
            Self::Dictionary { .. } => {
                let m = self.steering_dictionary(angle_grid)?.matrix;
                let leaf = tape.leaf(m);
                Ok((leaf, leaf))
            }
        }
    }

    fn flatten_gradient(&self, g: &CMat) -> Vec<f64> {
        match self {
            Self::Impairment { .. } => g.iter().map(|z| z.re).collect(),
            Self::Dictionary { .. } => g.iter().map(|z| z.re).chain(g.iter().map(|z| z.im)).collect(),
        }
    }
}

/// Random angular sector, `theta_mean ~ U[mean_min, mean_max]`,
/// `span ~ U[span_min, span_max]` (radians).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorSampling {
    pub mean_min: f64,
    pub mean_max: f64,
    pub span_min: f64,
    pub span_max: f64,
}

impl SectorSampling {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let mean = rng.random_range(self.mean_min..=self.mean_max);
        let span = rng.random_range(self.span_min..=self.span_max);
        (mean - span / 2.0, mean + span / 2.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub omega_r: f64,
    pub eta: f64,
    pub phase: f64,
    pub seed: u64,
    pub sectors: SectorSampling,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(0.0..=1.0).contains(&self.omega_r) || !(0.0..=1.0).contains(&self.eta) || !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid training configuration {self:?}")));
        }
        Ok(())
    }
}

/// One sensing scene and one communication scene with all their randomness.
#[derive(Clone, Debug)]
pub struct BatchItem {
    pub scene: SensingScene,
    pub symbols: SymbolBlock,
    pub noise: CMat,
    pub comm: CommScene,
    pub comm_symbols: SymbolBlock,
    pub comm_noise: CMat,
}

#[derive(Clone, Debug)]
pub struct TrainingBatch {
    pub sensing_sector: (f64, f64),
    pub comm_sector: (f64, f64),
    pub items: Vec<BatchItem>,
}

/// Draws a batch item; sensing scenes always hold `1..=t_max` targets.
pub fn sample_item(scenario: &Scenario, sensing: &SectorPriors, comm: &CommPriors, seed: u64, index: u64) -> BatchItem {
    draw_item(scenario, sensing, comm, 1..=scenario.t_max.max(1), TRAIN_ITEMS, seed, index)
}

/// Item whose target count is uniform over `counts`, drawn from the
/// streams `(seed, purpose, 2 index)` and `(seed, purpose, 2 index + 1)`.
pub fn draw_item(
    scenario: &Scenario,
    sensing: &SectorPriors,
    comm: &CommPriors,
    counts: std::ops::RangeInclusive<usize>,
    purpose: u64,
    seed: u64,
    index: u64,
) -> BatchItem {
    let (k, s) = (scenario.num_antennas(), scenario.ofdm.subcarriers);
    let mut rng = stream(seed, purpose, 2 * index);
    let count = rng.random_range(counts);
    let scene = sample_sensing_scene_with_count(sensing, count, &scenario.ofdm, &mut rng);
    let symbols = SymbolBlock::random(s, &scenario.constellation, &mut rng);
    let noise = draw_noise(k, s, scenario.ofdm.noise_variance(), &mut rng);
    let mut rng = stream(seed, purpose, 2 * index + 1);
    let comm_cfg = scenario.comm_ofdm();
    let comm_scene = sample_comm_scene(comm, &comm_cfg, &mut rng);
    let comm_symbols = SymbolBlock::random(s, &scenario.constellation, &mut rng);
    let comm_noise = draw_noise(s, 1, comm_cfg.noise_variance(), &mut rng);
    BatchItem {
        scene,
        symbols,
        noise,
        comm: comm_scene,
        comm_symbols,
        comm_noise,
    }
}

pub fn sample_batch(scenario: &Scenario, cfg: &TrainConfig, iteration: usize) -> TrainingBatch {
    let mut rng = stream(cfg.seed, TRAIN_SECTORS, iteration as u64);
    let sensing_sector = cfg.sectors.sample(&mut rng);
    let comm_sector = cfg.sectors.sample(&mut rng);
    let sp = scenario.sensing_priors(sensing_sector.0, sensing_sector.1);
    let cp = scenario.comm_priors(comm_sector.0, comm_sector.1);
    let base = (iteration * cfg.batch_size) as u64;
    let items = (0..cfg.batch_size)
        .map(|b| sample_item(scenario, &sp, &cp, cfg.seed, base + b as u64))
        .collect();
    TrainingBatch {
        sensing_sector,
        comm_sector,
        items,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub gospa: f64,
    pub cce: f64,
    pub isac: f64,
}

/// Precoder for the given steering matrix, sensing / comm sectors and
/// combination weights.
pub fn build_precoder(
    dict: &SteeringDictionary,
    sensing_sector: (f64, f64),
    comm_sector: (f64, f64),
    eta: f64,
    phase: f64,
    power: f64,
) -> Result<CVec> {
    let k = dict.num_antennas();
    let beam = |sector: (f64, f64)| -> Result<CVec> {
        let pattern = Beampattern::new(&dict.angle_grid, sector.0, sector.1, k)?;
        synthesize(&dict.matrix, &pattern)
    };
    let f_r = if eta > 0.0 { beam(sensing_sector)? } else { CVec::zeros(k) };
    let f_c = if eta < 1.0 { beam(comm_sector)? } else { CVec::zeros(k) };
    isac_combine(&f_r, &f_c, eta, phase, power)
}

fn precoder_on_tape(tape: &mut Tape, phi: Var, grid: &[f64], batch: &TrainingBatch, cfg: &TrainConfig, power: f64) -> Result<Var> {
    let k = tape.value(phi).nrows();
    let beam = |tape: &mut Tape, sector: (f64, f64)| -> Result<Var> {
        let pattern = Beampattern::new(grid, sector.0, sector.1, k)?;
        synthesize_on_tape(tape, phi, &pattern)
    };
    let f_r = if cfg.eta > 0.0 { beam(tape, batch.sensing_sector)? } else { tape.constant(CMat::zeros(k, 1)) };
    let f_c = if cfg.eta < 1.0 { beam(tape, batch.comm_sector)? } else { tape.constant(CMat::zeros(k, 1)) };
    isac_combine_on_tape(tape, f_r, f_c, cfg.eta, cfg.phase, power)
}

struct ItemOutput {
    gospa: f64,
    cce: f64,
    grad_f: Option<CMat>,
    grad_phi: Option<CMat>,
}

/// Sensing GOSPA (cut-off free) between the soft estimates and the truth.
fn sensing_loss(tape: &mut Tape, dets: &[crate::omp::SoftDetection], truth: &[Point]) -> Result<Var> {
    let half_c = Complex64::new(SPEED_OF_LIGHT / 2.0, 0.0);
    let mut est_nodes = Vec::with_capacity(dets.len());
    let mut est_vals = Vec::with_capacity(dets.len());
    for d in dets {
        let r = tape.scale(d.delay, half_c);
        let c = tape.cos(d.angle);
        let s = tape.sin(d.angle);
        let x = tape.hadamard(r, c);
        let y = tape.hadamard(r, s);
        est_vals.push([tape.real_scalar(x), tape.real_scalar(y)]);
        est_nodes.push((x, y));
    }
    let pairs = gospa_gradient_inputs(truth, &est_vals, &GospaParams::training())?;
    let mut acc: Option<Var> = None;
    for (ti, ei) in pairs {
        let (x, y) = est_nodes[ei];
        for (node, target) in [(x, truth[ti][0]), (y, truth[ti][1])] {
            let t = tape.real_constant(CMat::from_element(1, 1, Complex64::new(target, 0.0)));
            let diff = tape.sub(node, t);
            let sq = tape.hadamard(diff, diff);
            acc = Some(match acc {
                Some(a) => tape.add(a, sq),
                None => sq,
            });
        }
    }
    let total = acc.expect("at least one target");
    Ok(tape.sqrt(total))
}

fn evaluate_item(
    item: &BatchItem,
    f: &CMat,
    phi: &CMat,
    scenario: &Scenario,
    omega_r: f64,
    weight: f64,
    record: bool,
) -> Result<ItemOutput> {
    let mut tape = if record { Tape::new() } else { Tape::no_grad() };
    let fv = tape.leaf(f.clone());
    let pv = tape.leaf(phi.clone());

    let y = sensing_observation_on_tape(&mut tape, &item.scene, fv, &item.symbols, &scenario.ofdm, &scenario.true_array, &item.noise);
    let yt = matched_filter_on_tape(&mut tape, y, &item.symbols);
    let count = item.scene.targets.len();
    let dets = omp_differentiable(&mut tape, yt, pv, &scenario.angle_grid, &scenario.delay, count, scenario.window)?;
    let g = sensing_loss(&mut tape, &dets, &item.scene.positions())?;

    let comm_cfg = scenario.comm_ofdm();
    let channel = item.comm.channel_matrix(&comm_cfg, &scenario.true_array);
    let (yc, kappa) = comm_observation_on_tape(&mut tape, &channel, fv, &item.comm_symbols, &item.comm_noise);
    let logits = soft_logits_on_tape(&mut tape, yc, kappa, &scenario.constellation);
    let ce = tape.cross_entropy_rows(logits, &item.comm_symbols.messages);

    let gospa = tape.real_scalar(g);
    let cce = tape.real_scalar(ce);
    let (grad_f, grad_phi) = if record {
        let mut seeds = Vec::new();
        if omega_r > 0.0 {
            seeds.push((g, CMat::from_element(1, 1, Complex64::new(weight * omega_r, 0.0))));
        }
        if omega_r < 1.0 {
            seeds.push((ce, CMat::from_element(1, 1, Complex64::new(weight * (1.0 - omega_r), 0.0))));
        }
        let grads = tape.backward(&seeds);
        (Some(grads.get_or_zeros(fv, f)), Some(grads.get_or_zeros(pv, phi)))
    } else {
        (None, None)
    };
    Ok(ItemOutput {
        gospa,
        cce,
        grad_f,
        grad_phi,
    })
}

fn evaluate(
    params: &LearnableParams,
    batch: &TrainingBatch,
    scenario: &Scenario,
    cfg: &TrainConfig,
    record: bool,
) -> Result<(LossReport, Option<Vec<f64>>)> {
    let mut tape = if record { Tape::new() } else { Tape::no_grad() };
    let (leaf, phi) = params.on_tape(&mut tape, &scenario.angle_grid)?;
    let f = precoder_on_tape(&mut tape, phi, &scenario.angle_grid, batch, cfg, scenario.ofdm.power)?;
    let fval = tape.value(f).clone();
    let phival = tape.value(phi).clone();
    let n = batch.items.len() as f64;
    let outputs: Vec<Result<ItemOutput>> = batch
        .items
        .par_iter()
        .map(|item| evaluate_item(item, &fval, &phival, scenario, cfg.omega_r, 1.0 / n, record))
        .collect();
    let mut gospa = 0.0;
    let mut cce = 0.0;
    let mut gf = CMat::zeros(fval.nrows(), 1);
    let mut gp = CMat::zeros(phival.nrows(), phival.ncols());
    for out in outputs {
        let out = out?;
        gospa += out.gospa;
        cce += out.cce;
        if let (Some(a), Some(b)) = (out.grad_f, out.grad_phi) {
            gf += a;
            gp += b;
        }
    }
    gospa /= n;
    cce /= n;
    let report = LossReport {
        gospa,
        cce,
        isac: cfg.omega_r * gospa + (1.0 - cfg.omega_r) * cce,
    };
    if !record {
        return Ok((report, None));
    }
    let grads = tape.backward(&[(f, gf), (phi, gp)]);
    let g = grads.get_or_zeros(leaf, tape.value(leaf));
    Ok((report, Some(params.flatten_gradient(&g))))
}

/// Batch loss and its gradient with respect to the flat parameters.
pub fn evaluate_loss_and_gradient(
    params: &LearnableParams,
    batch: &TrainingBatch,
    scenario: &Scenario,
    cfg: &TrainConfig,
) -> Result<(LossReport, Vec<f64>)> {
    let (r, g) = evaluate(params, batch, scenario, cfg, true)?;
    Ok((r, g.expect("recording tape yields a gradient")))
}

/// Batch loss only, evaluated on a non-recording tape.
pub fn evaluate_loss(params: &LearnableParams, batch: &TrainingBatch, scenario: &Scenario, cfg: &TrainConfig) -> Result<LossReport> {
    evaluate(params, batch, scenario, cfg, false).map(|(r, _)| r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub iteration: usize,
    pub gospa: f64,
    pub cce: f64,
    pub isac: f64,
}

/// Parameters, optimizer state and progress; what a checkpoint holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub format_version: u32,
    pub params: LearnableParams,
    pub optimizer: Adam,
    pub iteration: usize,
}

impl TrainState {
    pub fn new(params: LearnableParams, learning_rate: f64) -> Self {
        let n = params.num_real_parameters();
        Self {
            format_version: CHECKPOINT_VERSION,
            params,
            optimizer: Adam::new(n, learning_rate),
            iteration: 0,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if s.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", s.format_version)));
        }
        if s.optimizer.len() != s.params.num_real_parameters() {
            return Err(Error::Checkpoint("optimizer state does not match parameters".into()));
        }
        Ok(s)
    }
}

/// Runs iterations `state.iteration .. cfg.iterations`, returning the loss
/// trace of the iterations performed.
pub fn train(state: &mut TrainState, cfg: &TrainConfig, scenario: &Scenario) -> Result<Vec<LossRow>> {
    train_with_progress(state, cfg, scenario, |_| {})
}

pub fn train_with_progress(
    state: &mut TrainState,
    cfg: &TrainConfig,
    scenario: &Scenario,
    mut progress: impl FnMut(&LossRow),
) -> Result<Vec<LossRow>> {
    cfg.validate()?;
    state.optimizer.lr = cfg.learning_rate;
    let mut trace = Vec::with_capacity(cfg.iterations.saturating_sub(state.iteration));
    while state.iteration < cfg.iterations {
        let it = state.iteration;
        let batch = sample_batch(scenario, cfg, it);
        let (report, grad) = evaluate_loss_and_gradient(&state.params, &batch, scenario, cfg)?;
        if !report.isac.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { iteration: it, seed: cfg.seed });
        }
        let mut flat = state.params.flat();
        state.optimizer.step(&mut flat, &grad);
        state.params.set_flat(&flat);
        state.iteration += 1;
        let row = LossRow {
            iteration: it,
            gospa: report.gospa,
            cce: report.cce,
            isac: report.isac,
        };
        progress(&row);
        trace.push(row);
    }
    Ok(trace)
}

pub fn write_loss_trace<W: Write>(mut w: W, trace: &[LossRow]) -> std::io::Result<()> {
    writeln!(w, "iteration,gospa,cce,isac")?;
    for r in trace {
        writeln!(w, "{},{},{},{}", r.iteration, r.gospa, r.cce, r.isac)?;
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::array::{sample_impairment, uniform_grid};
    use crate::channel::calibrate_noise;
    use crate::omp::{build_delay_dictionary, discrete_resolutions};
    use std::f64::consts::{FRAC_PI_2, PI};

    pub(crate) fn small_scenario(k: usize, s: usize, nt: usize, nd: usize, sigma_frac: f64, t_max: usize, seed: u64) -> Scenario {
        let mut ofdm = OfdmConfig {
            subcarriers: s,
            subcarrier_spacing: 240e3,
            carrier_frequency: 60e9,
            power: 1.0,
            noise_psd: 0.0,
            rcs_mean: 1.0,
        };
        let lambda = ofdm.wavelength();
        ofdm.noise_psd = calibrate_noise(&ofdm, k, 10.0, 43.75, 7.05);
        let grid = uniform_grid(-FRAC_PI_2, FRAC_PI_2, nt);
        let delay = build_delay_dictionary(&ofdm, 10.0, 43.75, nd).unwrap();
        let (it, ir) = discrete_resolutions(k, &ofdm, nt, nd, PI, 33.75).unwrap();
        let mut rng = stream(seed, crate::rng::IMPAIRMENT, 0);
        let spacing = sample_impairment(k, lambda, sigma_frac * lambda, &mut rng);
        Scenario {
            comm_noise_psd: ofdm.noise_psd,
            ofdm,
            true_array: ArrayModel::with_spacing(lambda, spacing).unwrap(),
            angle_grid: grid,
            delay,
            constellation: Constellation::qpsk(),
            range_min: 10.0,
            range_max: 43.75,
            comm_range_min: 10.0,
            comm_range_max: 200.0,
            max_comm_paths: 6,
            t_max,
            window: SoftWindow { iota_theta: it, iota_r: ir, temperature: 0.1 },
        }
    }

    pub(crate) fn small_cfg(batch: usize, iterations: usize, lr: f64, omega: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: batch,
            iterations,
            learning_rate: lr,
            omega_r: omega,
            eta: 1.0,
            phase: 0.0,
            seed,
            sectors: SectorSampling {
                mean_min: -60f64.to_radians(),
                mean_max: 60f64.to_radians(),
                span_min: 10f64.to_radians(),
                span_max: 20f64.to_radians(),
            },
        }
    }

    #[test]
    fn parameter_counts() {
        let grid = uniform_grid(-1.0, 1.0, 30);
        assert_eq!(LearnableParams::impairment(8, 0.005).num_real_parameters(), 7);
        assert_eq!(LearnableParams::dictionary(8, 0.005, &grid).unwrap().num_real_parameters(), 2 * 8 * 30);
    }

    #[test]
    fn recorded_and_unrecorded_forward_agree() {
        let sc = small_scenario(8, 32, 90, 25, 1.0 / 15.0, 3, 1);
        let cfg = small_cfg(4, 1, 1e-5, 0.5, 2);
        let batch = sample_batch(&sc, &cfg, 0);
        let p = LearnableParams::impairment(8, sc.wavelength());
        let (a, _) = evaluate_loss_and_gradient(&p, &batch, &sc, &cfg).unwrap();
        let b = evaluate_loss(&p, &batch, &sc, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn comm_only_gradient_ignores_sensing_noise() {
        let sc = small_scenario(8, 32, 90, 25, 1.0 / 15.0, 2, 3);
        let cfg = TrainConfig { eta: 0.0, ..small_cfg(3, 1, 1e-5, 0.0, 4) };
        let batch = sample_batch(&sc, &cfg, 0);
        let mut other = batch.clone();
        for item in &mut other.items {
            item.noise *= Complex64::new(3.0, 0.0);
        }
        let p = LearnableParams::impairment(8, sc.wavelength());
        let (_, g1) = evaluate_loss_and_gradient(&p, &batch, &sc, &cfg).unwrap();
        let (_, g2) = evaluate_loss_and_gradient(&p, &other, &sc, &cfg).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn dictionary_gradient_matches_finite_differences() {
        let sc = small_scenario(4, 16, 40, 12, 1.0 / 15.0, 1, 5);
        let cfg = small_cfg(2, 1, 1e-3, 0.5, 6);
        let batch = sample_batch(&sc, &cfg, 0);
        let p = LearnableParams::dictionary(4, sc.wavelength(), &sc.angle_grid).unwrap();
        let (_, g) = evaluate_loss_and_gradient(&p, &batch, &sc, &cfg).unwrap();
        let base = p.flat();
        // largest-gradient coordinates are the informative ones
        let mut idx: Vec<usize> = (0..g.len()).collect();
        idx.sort_by(|&a, &b| g[b].abs().partial_cmp(&g[a].abs()).unwrap());
        let h = 1e-6;
        for &i in idx.iter().take(6) {
            let mut plus = p.clone();
            let mut v = base.clone();
            v[i] += h;
            plus.set_flat(&v);
            let mut minus = p.clone();
            v[i] -= 2.0 * h;
            minus.set_flat(&v);
            let fd = (evaluate_loss(&plus, &batch, &sc, &cfg).unwrap().isac - evaluate_loss(&minus, &batch, &sc, &cfg).unwrap().isac) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(1e-8), "coordinate {i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn adam_leaves_stationary_params_in_place() {
        let mut state = TrainState::new(LearnableParams::impairment(4, 0.005), 0.2);
        let before = state.params.flat();
        let mut flat = before.clone();
        state.optimizer.step(&mut flat, &[0.0; 3]);
        for (a, b) in flat.iter().zip(&before) {
            assert!((a - b).abs() < 0.2 * 1e-8);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let sc = small_scenario(4, 16, 40, 12, 1.0 / 15.0, 2, 7);
        let cfg = small_cfg(2, 2, 1e-5, 1.0, 8);
        let mut st = TrainState::new(LearnableParams::impairment(4, sc.wavelength()), cfg.learning_rate);
        train(&mut st, &cfg, &sc).unwrap();
        let back = TrainState::from_json(&st.to_json().unwrap()).unwrap();
        assert_eq!(back, st);
        assert!(TrainState::from_json("{\"format_version\": 99}").is_err());
    }

    #[test]
    fn resumed_training_is_identical() {
        let sc = small_scenario(4, 16, 40, 12, 1.0 / 15.0, 2, 9);
        let cfg = small_cfg(2, 4, 1e-5, 1.0, 10);
        let mut full = TrainState::new(LearnableParams::impairment(4, sc.wavelength()), cfg.learning_rate);
        let t_full = train(&mut full, &cfg, &sc).unwrap();
        let mut half = TrainState::new(LearnableParams::impairment(4, sc.wavelength()), cfg.learning_rate);
        let mut t_half = train(&mut half, &TrainConfig { iterations: 2, ..cfg.clone() }, &sc).unwrap();
        let mut resumed = TrainState::from_json(&half.to_json().unwrap()).unwrap();
        t_half.extend(train(&mut resumed, &cfg, &sc).unwrap());
        assert_eq!(resumed, full);
        assert_eq!(t_half, t_full);
    }

    #[test]
    fn loss_trace_csv_header() {
        let mut buf = Vec::new();
        write_loss_trace(&mut buf, &[LossRow { iteration: 0, gospa: 1.5, cce: 0.25, isac: 1.5 }]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iteration,gospa,cce,isac\n0,1.5,0.25,1.5\n");
    }

    #[test]
    fn nominal_truth_does_not_drift() {
        // Adam moves each gap by about lr per step whatever the gradient
        // size, so 100 steps can reach 2 lambda/1000 only under a
        // consistent bias; gradient noise alone random-walks far less
        let sc = small_scenario(8, 32, 90, 25, 0.0, 2, 11);
        let lr = 1e-7;
        let cfg = small_cfg(8, 100, lr, 1.0, 12);
        let mut st = TrainState::new(LearnableParams::impairment(8, sc.wavelength()), lr);
        train(&mut st, &cfg, &sc).unwrap();
        let lambda = sc.wavelength();
        for d in st.params.flat() {
            assert!((d - lambda / 2.0).abs() < lambda / 1000.0, "gap drifted to {}", d / lambda);
        }
    }

    #[test]
    fn spacing_gradient_uses_true_array_only_for_observations() {
        // the precoder is built from the learned model, so a known array
        // gives a different precoder than the nominal one
        let sc = small_scenario(8, 32, 90, 25, 1.0 / 15.0, 1, 13);
        let p = LearnableParams::impairment(8, sc.wavelength());
        let truth = LearnableParams::Impairment { wavelength: sc.wavelength(), spacing: sc.true_array.spacing().to_vec() };
        let a = build_precoder(&p.steering_dictionary(&sc.angle_grid).unwrap(), (-0.5, -0.3), (0.3, 0.5), 1.0, 0.0, 1.0).unwrap();
        let b = build_precoder(&truth.steering_dictionary(&sc.angle_grid).unwrap(), (-0.5, -0.3), (0.3, 0.5), 1.0, 0.0, 1.0).unwrap();
        assert!((a - b).norm() > 1e-6);
    }
}
