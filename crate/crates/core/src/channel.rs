//! Monostatic OFDM sensing and MISO communication channels.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::array::ArrayModel;
use crate::autodiff::{CMat, Tape, Var};
use crate::comm::Constellation;
use crate::error::{Error, Result};
use crate::linalg::CVec;
use crate::rng::complex_normal;
use crate::SPEED_OF_LIGHT;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OfdmConfig {
    pub subcarriers: usize,
    /// Hz
    pub subcarrier_spacing: f64,
    /// Hz
    pub carrier_frequency: f64,
    /// W
    pub power: f64,
    /// W/Hz
    pub noise_psd: f64,
    /// m^2
    pub rcs_mean: f64,
}

impl OfdmConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    pub fn bandwidth(&self) -> f64 {
        self.subcarriers as f64 * self.subcarrier_spacing
    }

    /// Per-entry noise variance `N0 S Delta_f`.
    pub fn noise_variance(&self) -> f64 {
        self.noise_psd * self.bandwidth()
    }

    /// Cyclic-prefix duration; only gates scene validity.
    pub fn cp_duration(&self) -> f64 {
        1.0 / (4.0 * self.subcarrier_spacing)
    }

    pub fn with_noise_psd(&self, noise_psd: f64) -> Self {
        Self {
            noise_psd,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.subcarriers > 0
            && self.subcarrier_spacing > 0.0
            && self.carrier_frequency > 0.0
            && self.power > 0.0
            && self.noise_psd >= 0.0
            && self.rcs_mean > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid OFDM configuration {self:?}")))
        }
    }
}

/// Prior angular sector and range interval of the sensing targets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorPriors {
    pub theta_min: f64,
    pub theta_max: f64,
    pub range_min: f64,
    pub range_max: f64,
}

impl SectorPriors {
    pub fn from_mean_span(theta_mean: f64, theta_span: f64, range_min: f64, range_max: f64) -> Self {
        Self {
            theta_min: theta_mean - theta_span / 2.0,
            theta_max: theta_mean + theta_span / 2.0,
            range_min,
            range_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.theta_min <= self.theta_max
            && self.theta_min >= -PI / 2.0 - 1e-12
            && self.theta_max <= PI / 2.0 + 1e-12
            && 0.0 <= self.range_min
            && self.range_min <= self.range_max;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid priors {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub angle: f64,
    pub range: f64,
    pub gain: Complex64,
}

impl Target {
    /// Round-trip delay.
    pub fn delay(&self) -> f64 {
        2.0 * self.range / SPEED_OF_LIGHT
    }

    pub fn position(&self) -> [f64; 2] {
        [self.range * self.angle.cos(), self.range * self.angle.sin()]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensingScene {
    pub targets: Vec<Target>,
    pub priors: SectorPriors,
}

impl SensingScene {
    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.targets.iter().map(Target::position).collect()
    }
}

/// Radar range equation `sigma lambda^2 / ((4 pi)^3 R^4)`.
pub fn radar_gain_power(rcs: f64, wavelength: f64, range: f64) -> f64 {
    rcs * wavelength * wavelength / ((4.0 * PI).powi(3) * range.powi(4))
}

fn sample_target<R: Rng + ?Sized>(priors: &SectorPriors, cfg: &OfdmConfig, rng: &mut R) -> Target {
    let angle = uniform(rng, priors.theta_min, priors.theta_max);
    let range = uniform(rng, priors.range_min, priors.range_max);
    let rcs = Exp::new(1.0 / cfg.rcs_mean).expect("positive mean RCS").sample(rng);
    let phase = rng.random_range(0.0..2.0 * PI);
    let amp = radar_gain_power(rcs, cfg.wavelength(), range).sqrt();
    Target {
        angle,
        range,
        gain: Complex64::from_polar(amp, phase),
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Scene with `T ~ U{0..t_max}` targets.
pub fn sample_sensing_scene<R: Rng + ?Sized>(
    priors: &SectorPriors,
    t_max: usize,
    cfg: &OfdmConfig,
    rng: &mut R,
) -> SensingScene {
    let count = rng.random_range(0..=t_max);
    sample_sensing_scene_with_count(priors, count, cfg, rng)
}

pub fn sample_sensing_scene_with_count<R: Rng + ?Sized>(
    priors: &SectorPriors,
    count: usize,
    cfg: &OfdmConfig,
    rng: &mut R,
) -> SensingScene {
    let targets = (0..count).map(|_| sample_target(priors, cfg, rng)).collect();
    SensingScene {
        targets,
        priors: *priors,
    }
}

/// Messages and unit-modulus symbols on every subcarrier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolBlock {
    pub messages: Vec<usize>,
    pub symbols: Vec<Complex64>,
}

impl SymbolBlock {
    pub fn random<R: Rng + ?Sized>(subcarriers: usize, constellation: &Constellation, rng: &mut R) -> Self {
        let messages: Vec<usize> = (0..subcarriers).map(|_| rng.random_range(0..constellation.len())).collect();
        let symbols = messages.iter().map(|&m| constellation.point(m)).collect();
        Self { messages, symbols }
    }

    /// All-ones symbols; message indices are meaningless.
    pub fn pilot_ones(subcarriers: usize) -> Self {
        Self {
            messages: vec![0; subcarriers],
            symbols: vec![Complex64::new(1.0, 0.0); subcarriers],
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// `[rho(tau)]_s = exp(-j 2 pi s Delta_f tau)`.
pub fn delay_vector(subcarriers: usize, subcarrier_spacing: f64, tau: f64) -> CVec {
    CVec::from_fn(subcarriers, |s, _| {
        Complex64::from_polar(1.0, -2.0 * PI * s as f64 * subcarrier_spacing * tau)
    })
}

pub fn draw_noise<R: Rng + ?Sized>(rows: usize, cols: usize, variance: f64, rng: &mut R) -> CMat {
    if variance == 0.0 {
        return CMat::zeros(rows, cols);
    }
    // column-major draw order
    CMat::from_fn(rows, cols, |_, _| complex_normal(rng, variance))
}

fn check_precoder(f: &CVec, array: &ArrayModel, cfg: &OfdmConfig) -> Result<()> {
    if f.len() != array.num_antennas() {
        return Err(Error::DimensionMismatch(format!(
            "precoder has {} entries for {} antennas",
            f.len(),
            array.num_antennas()
        )));
    }
    let p = f.norm_squared();
    if (p - cfg.power).abs() > 1e-9 * cfg.power {
        return Err(Error::InvalidArgument(format!(
            "precoder power {p} differs from {}",
            cfg.power
        )));
    }
    Ok(())
}

/// `Y_r = sum_t psi_t a(theta_t) a^T(theta_t) f [x . rho(tau_t)]^T + W`.
pub fn sensing_observation<R: Rng + ?Sized>(
    scene: &SensingScene,
    f: &CVec,
    symbols: &SymbolBlock,
    cfg: &OfdmConfig,
    array: &ArrayModel,
    rng: &mut R,
) -> Result<CMat> {
    let noise = draw_noise(array.num_antennas(), cfg.subcarriers, cfg.noise_variance(), rng);
    sensing_observation_with_noise(scene, f, symbols, cfg, array, &noise)
}

pub fn sensing_observation_with_noise(
    scene: &SensingScene,
    f: &CVec,
    symbols: &SymbolBlock,
    cfg: &OfdmConfig,
    array: &ArrayModel,
    noise: &CMat,
) -> Result<CMat> {
    check_precoder(f, array, cfg)?;
    let (k, s) = (array.num_antennas(), cfg.subcarriers);
    if symbols.len() != s || noise.shape() != (k, s) {
        return Err(Error::DimensionMismatch(format!(
            "expected {s} symbols and a {k}x{s} noise matrix"
        )));
    }
    let mut y = noise.clone();
    for t in &scene.targets {
        let a = array.steering_vector(t.angle);
        let alpha = (a.transpose() * f)[(0, 0)] * t.gain;
        let rho = delay_vector(s, cfg.subcarrier_spacing, t.delay());
        let xr = rho.zip_map(&CVec::from_column_slice(&symbols.symbols), |r, x| r * x);
        y += (&a * xr.transpose()) * alpha;
    }
    Ok(y)
}

/// Same model on a tape, with the precoder as a node. `noise` must be the
/// matrix a plain [`sensing_observation`] call would have drawn.
pub fn sensing_observation_on_tape(
    tape: &mut Tape,
    scene: &SensingScene,
    f: Var,
    symbols: &SymbolBlock,
    cfg: &OfdmConfig,
    array: &ArrayModel,
    noise: &CMat,
) -> Var {
    let s = cfg.subcarriers;
    let x = CVec::from_column_slice(&symbols.symbols);
    let mut acc = tape.constant(noise.clone());
    for t in &scene.targets {
        let a = array.steering_vector(t.angle);
        let at = tape.constant(CMat::from_row_slice(1, a.len(), a.as_slice()));
        let af = tape.matmul(at, f);
        let alpha = tape.scale(af, t.gain);
        let rho = delay_vector(s, cfg.subcarrier_spacing, t.delay());
        let xr = rho.zip_map(&x, |r, xs| r * xs);
        let atom = tape.constant(&a * xr.transpose());
        let term = tape.scale_by(atom, alpha);
        acc = tape.add(acc, term);
    }
    acc
}

/// Element-wise removal of the data symbols, `Y . 1 x^H`.
pub fn matched_filter(y: &CMat, symbols: &SymbolBlock) -> CMat {
    CMat::from_fn(y.nrows(), y.ncols(), |r, c| y[(r, c)] * symbols.symbols[c].conj())
}

pub fn matched_filter_on_tape(tape: &mut Tape, y: Var, symbols: &SymbolBlock) -> Var {
    let (k, s) = tape.value(y).shape();
    let mask = tape.constant(CMat::from_fn(k, s, |_, c| symbols.symbols[c].conj()));
    tape.hadamard(y, mask)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommPath {
    pub angle: f64,
    /// s
    pub delay: f64,
    pub gain: Complex64,
}

/// Paths to the communication receiver; the first one is line of sight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommScene {
    pub paths: Vec<CommPath>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommPriors {
    pub theta_min: f64,
    pub theta_max: f64,
    pub range_min: f64,
    pub range_max: f64,
    /// Total paths including line of sight.
    pub max_paths: usize,
}

/// Line-of-sight receiver plus `U{0..max_paths-1}` scatterers.
///
/// Scatterers lie in the annulus `[range_min, range_max]` inside the
/// communication sector and are redrawn until the excess path length fits the
/// cyclic prefix.
pub fn sample_comm_scene<R: Rng + ?Sized>(priors: &CommPriors, cfg: &OfdmConfig, rng: &mut R) -> CommScene {
    let lambda = cfg.wavelength();
    let theta1 = uniform(rng, priors.theta_min, priors.theta_max);
    let r1 = uniform(rng, priors.range_min, priors.range_max);
    let los_amp = lambda / (4.0 * PI * r1);
    let mut paths = vec![CommPath {
        angle: theta1,
        delay: r1 / SPEED_OF_LIGHT,
        gain: Complex64::from_polar(los_amp, rng.random_range(0.0..2.0 * PI)),
    }];
    let rx = [r1 * theta1.cos(), r1 * theta1.sin()];
    let nlos = rng.random_range(0..priors.max_paths.max(1));
    let max_excess = SPEED_OF_LIGHT * cfg.cp_duration();
    let rcs_law = Exp::new(1.0 / cfg.rcs_mean).expect("positive mean RCS");
    for _ in 0..nlos {
        let (angle, d1, d2) = loop {
            let angle = uniform(rng, priors.theta_min, priors.theta_max);
            let d1 = uniform(rng, priors.range_min, priors.range_max);
            let sc = [d1 * angle.cos(), d1 * angle.sin()];
            let d2 = ((sc[0] - rx[0]).powi(2) + (sc[1] - rx[1]).powi(2)).sqrt();
            if d1 + d2 - r1 <= max_excess && d2 > 0.0 {
                break (angle, d1, d2);
            }
        };
        let rcs = rcs_law.sample(rng);
        let amp = (rcs * lambda * lambda / ((4.0 * PI).powi(3) * d1 * d1 * d2 * d2)).sqrt();
        paths.push(CommPath {
            angle,
            delay: (d1 + d2) / SPEED_OF_LIGHT,
            gain: Complex64::from_polar(amp, rng.random_range(0.0..2.0 * PI)),
        });
    }
    CommScene { paths }
}

impl CommScene {
    /// Delay spread against the line-of-sight path fits the cyclic prefix.
    pub fn satisfies_cp(&self, cfg: &OfdmConfig) -> bool {
        let los = self.paths[0].delay;
        self.paths.iter().all(|p| (p.delay - los).abs() <= cfg.cp_duration() + 1e-15)
    }

    /// `S x K` matrix `M` with `kappa = M f`.
    pub fn channel_matrix(&self, cfg: &OfdmConfig, array: &ArrayModel) -> CMat {
        let mut m = CMat::zeros(cfg.subcarriers, array.num_antennas());
        for p in &self.paths {
            let a = array.steering_vector(p.angle);
            let rho = delay_vector(cfg.subcarriers, cfg.subcarrier_spacing, p.delay);
            m += (rho * a.transpose()) * p.gain;
        }
        m
    }
}

/// CSI `kappa = sum_t psi_t a^T(theta_t) f rho(tau_t)`.
pub fn channel_state(scene: &CommScene, f: &CVec, cfg: &OfdmConfig, array: &ArrayModel) -> CVec {
    let mut kappa = CVec::zeros(cfg.subcarriers);
    for p in &scene.paths {
        let a = array.steering_vector(p.angle);
        let af = (a.transpose() * f)[(0, 0)];
        kappa += delay_vector(cfg.subcarriers, cfg.subcarrier_spacing, p.delay) * (p.gain * af);
    }
    kappa
}

/// Received signal `y_c = kappa . x + n` and the CSI `kappa`.
pub fn comm_observation<R: Rng + ?Sized>(
    scene: &CommScene,
    f: &CVec,
    symbols: &SymbolBlock,
    cfg: &OfdmConfig,
    array: &ArrayModel,
    rng: &mut R,
) -> Result<(CVec, CVec)> {
    if scene.paths.is_empty() {
        return Err(Error::InvalidArgument("communication scene has no line-of-sight path".into()));
    }
    check_precoder(f, array, cfg)?;
    let kappa = channel_state(scene, f, cfg, array);
    let noise = draw_noise(cfg.subcarriers, 1, cfg.noise_variance(), rng);
    let y = CVec::from_fn(cfg.subcarriers, |s, _| kappa[s] * symbols.symbols[s] + noise[(s, 0)]);
    Ok((y, kappa))
}

/// `(y_c, kappa)` on a tape given the channel matrix and a pre-drawn noise column.
pub fn comm_observation_on_tape(
    tape: &mut Tape,
    channel: &CMat,
    f: Var,
    symbols: &SymbolBlock,
    noise: &CMat,
) -> (Var, Var) {
    let m = tape.constant(channel.clone());
    let kappa = tape.matmul(m, f);
    let x = tape.constant(CMat::from_column_slice(symbols.len(), 1, &symbols.symbols));
    let kx = tape.hadamard(kappa, x);
    let n = tape.constant(noise.clone());
    let y = tape.add(kx, n);
    (y, kappa)
}

/// `E[R^-4]` for `R ~ U[r_min, r_max]`, by composite Simpson quadrature.
pub fn mean_inverse_fourth(r_min: f64, r_max: f64) -> f64 {
    if r_max <= r_min {
        return r_min.powi(-4);
    }
    let n = 4000;
    let h = (r_max - r_min) / n as f64;
    let f = |r: f64| r.powi(-4);
    let mut acc = f(r_min) + f(r_max);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(r_min + i as f64 * h);
    }
    acc * h / 3.0 / (r_max - r_min)
}

/// `E[|psi|^2]` over the range prior and exponential RCS.
pub fn mean_sensing_gain_power(cfg: &OfdmConfig, r_min: f64, r_max: f64) -> f64 {
    let l = cfg.wavelength();
    cfg.rcs_mean * l * l / (4.0 * PI).powi(3) * mean_inverse_fourth(r_min, r_max)
}

/// Noise PSD that makes the maximum achievable sensing SNR
/// `P K E|psi|^2 / (N0 S Delta_f)` equal `snr_db`.
pub fn calibrate_noise(cfg: &OfdmConfig, num_antennas: usize, r_min: f64, r_max: f64, snr_db: f64) -> f64 {
    let signal = cfg.power * num_antennas as f64 * mean_sensing_gain_power(cfg, r_min, r_max);
    signal / (cfg.bandwidth() * db_to_linear(snr_db))
}

/// Noise PSD for the communication link, using the line-of-sight gain
/// `lambda^2 / (4 pi R)^2` averaged over `R ~ U[r_min, r_max]` and the
/// `P K` array-gain bound.
pub fn calibrate_comm_noise(cfg: &OfdmConfig, num_antennas: usize, r_min: f64, r_max: f64, snr_db: f64) -> f64 {
    let l = cfg.wavelength();
    let inv_sq = if r_max > r_min {
        (1.0 / r_min - 1.0 / r_max) / (r_max - r_min)
    } else {
        r_min.powi(-2)
    };
    let signal = cfg.power * num_antennas as f64 * l * l / (4.0 * PI).powi(2) * inv_sq;
    signal / (cfg.bandwidth() * db_to_linear(snr_db))
}

/// Maximum achievable sensing SNR in dB for a given noise PSD.
pub fn sensing_snr_db(cfg: &OfdmConfig, num_antennas: usize, r_min: f64, r_max: f64) -> f64 {
    let signal = cfg.power * num_antennas as f64 * mean_sensing_gain_power(cfg, r_min, r_max);
    10.0 * (signal / cfg.noise_variance()).log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Row-major CSV dump of a complex matrix with a commented shape header.
pub fn write_matrix_csv<W: Write>(mut w: W, name: &str, m: &CMat) -> std::io::Result<()> {
    writeln!(w, "# {name} rows={} cols={} layout=row-major", m.nrows(), m.ncols())?;
    writeln!(w, "row,col,re,im")?;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            writeln!(w, "{r},{c},{},{}", m[(r, c)].re, m[(r, c)].im)?;
        }
    }
    Ok(())
}
