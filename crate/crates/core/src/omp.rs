//! Angle-delay maps and orthogonal matching pursuit, plain and differentiable.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::array::SteeringDictionary;
use crate::autodiff::{CMat, Tape, Var};
use crate::channel::{delay_vector, OfdmConfig};
use crate::error::{Error, Result};
use crate::linalg::{least_squares_qr, CVec};
use crate::metrics::Point;
use crate::SPEED_OF_LIGHT;

/// Frequency-domain delay dictionary over a uniform delay grid, with a
/// chirp-z plan for fast products `Y Phi_d*`.
#[derive(Clone)]
pub struct DelayDictionary {
    pub matrix: CMat,
    pub delay_grid: Vec<f64>,
    pub subcarrier_spacing: f64,
    czt: Arc<Czt>,
}

impl fmt::Debug for DelayDictionary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DelayDictionary")
            .field("subcarriers", &self.matrix.nrows())
            .field("delays", &self.delay_grid.len())
            .finish()
    }
}

pub fn build_delay_dictionary(cfg: &OfdmConfig, r_min: f64, r_max: f64, n_tau: usize) -> Result<DelayDictionary> {
    if !(r_min >= 0.0 && r_min < r_max) || n_tau < 2 {
        return Err(Error::InvalidArgument(format!("invalid range grid [{r_min}, {r_max}] with {n_tau} points")));
    }
    let s = cfg.subcarriers;
    let df = cfg.subcarrier_spacing;
    let t0 = 2.0 * r_min / SPEED_OF_LIGHT;
    let t1 = 2.0 * r_max / SPEED_OF_LIGHT;
    let delay_grid: Vec<f64> = (0..n_tau).map(|j| t0 + (t1 - t0) * j as f64 / (n_tau - 1) as f64).collect();
    let mut matrix = CMat::zeros(s, n_tau);
    for (j, &tau) in delay_grid.iter().enumerate() {
        matrix.set_column(j, &delay_vector(s, df, tau));
    }
    let czt = Arc::new(Czt::new(s, n_tau, df, t0, (t1 - t0) / (n_tau - 1) as f64));
    Ok(DelayDictionary {
        matrix,
        delay_grid,
        subcarrier_spacing: df,
        czt,
    })
}

impl DelayDictionary {
    pub fn num_subcarriers(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_delays(&self) -> usize {
        self.delay_grid.len()
    }

    /// `Y Phi_d*` through the chirp-z transform.
    pub fn correlate(&self, y: &CMat) -> CMat {
        self.czt.apply(y)
    }

    /// `Y Phi_d*` by direct matrix product.
    pub fn correlate_direct(&self, y: &CMat) -> CMat {
        y * self.matrix.map(|z| z.conj())
    }
}

/// `X_j = sum_s x_s exp(j 2 pi s df (t0 + j dt))` for every row, by Bluestein.
struct Czt {
    s: usize,
    n_tau: usize,
    n: usize,
    pre: Vec<Complex64>,
    post: Vec<Complex64>,
    kernel: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Czt {
    fn new(s: usize, n_tau: usize, df: f64, t0: f64, dt: f64) -> Self {
        let n = (s + n_tau - 1).next_power_of_two();
        let beta = 2.0 * PI * df * dt;
        let half_sq = |m: i64| 0.5 * beta * (m * m) as f64;
        let pre = (0..s)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 * df * t0 + half_sq(k as i64)))
            .collect();
        let post = (0..n_tau).map(|j| Complex64::from_polar(1.0, half_sq(j as i64))).collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); n];
        for m in 0..n_tau {
            kernel[m] = Complex64::from_polar(1.0, -half_sq(m as i64));
        }
        for m in 1..s {
            kernel[n - m] = Complex64::from_polar(1.0, -half_sq(m as i64));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        fwd.process(&mut kernel);
        Self {
            s,
            n_tau,
            n,
            pre,
            post,
            kernel,
            fwd,
            inv,
        }
    }

    fn apply(&self, y: &CMat) -> CMat {
        assert_eq!(y.ncols(), self.s, "subcarrier count mismatch");
        let mut out = CMat::zeros(y.nrows(), self.n_tau);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n];
        let scale = 1.0 / self.n as f64;
        for r in 0..y.nrows() {
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            for k in 0..self.s {
                buf[k] = y[(r, k)] * self.pre[k];
            }
            self.fwd.process(&mut buf);
            for (b, h) in buf.iter_mut().zip(&self.kernel) {
                *b *= h;
            }
            self.inv.process(&mut buf);
            for j in 0..self.n_tau {
                out[(r, j)] = buf[j] * self.post[j] * scale;
            }
        }
        out
    }
}

/// `|Phi_a^H Y Phi_d*|^2`, angles along rows.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleDelayMap {
    pub values: DMatrix<f64>,
}

impl AngleDelayMap {
    pub fn from_projection(a: &CMat) -> Self {
        Self {
            values: a.map(|z| z.norm_sqr()),
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Largest entry, ties to the lowest `i * N_tau + j`.
    pub fn argmax(&self) -> (usize, usize) {
        argmax_masked(&self.values, &[])
    }
}

fn argmax_masked(values: &DMatrix<f64>, mask: &[(usize, usize)]) -> (usize, usize) {
    let (nt, nd) = values.shape();
    let mut best = (0, 0);
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..nt {
        for j in 0..nd {
            if mask.contains(&(i, j)) {
                continue;
            }
            let v = values[(i, j)];
            if v > best_v {
                best_v = v;
                best = (i, j);
            }
        }
    }
    best
}

/// Complex projection `Phi_a^H Y Phi_d*`.
pub fn projection(y: &CMat, phi_a: &CMat, delay: &DelayDictionary) -> CMat {
    phi_a.adjoint() * delay.correlate(y)
}

pub fn angle_delay_map(y: &CMat, phi_a: &CMat, delay: &DelayDictionary) -> AngleDelayMap {
    AngleDelayMap::from_projection(&projection(y, phi_a, delay))
}

pub fn angle_delay_map_direct(y: &CMat, phi_a: &CMat, delay: &DelayDictionary) -> AngleDelayMap {
    AngleDelayMap::from_projection(&(phi_a.adjoint() * delay.correlate_direct(y)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub angle_index: usize,
    pub delay_index: usize,
    pub angle: f64,
    pub delay: f64,
    pub gain: Complex64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectionResult {
    pub detections: Vec<Detection>,
    pub iterations: usize,
}

impl DetectionResult {
    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }
}

/// One accepted OMP iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct OmpStep {
    /// Maximum of the masked residual map before the selection.
    pub peak: f64,
    pub angle_index: usize,
    pub delay_index: usize,
    /// Joint least-squares gains of all atoms selected so far.
    pub gains: Vec<Complex64>,
    pub residual_energy: f64,
}

/// Full OMP run without a threshold. For any `delta`, the thresholded run
/// is a prefix of this trace.
#[derive(Clone, Debug, PartialEq)]
pub struct OmpTrace {
    pub steps: Vec<OmpStep>,
    /// Peak of the map after the last accepted step, if it was computed.
    pub final_peak: Option<f64>,
    pub initial_energy: f64,
    pub angle_grid: Vec<f64>,
    pub delay_grid: Vec<f64>,
}

impl OmpTrace {
    /// Number of detections a run with threshold `delta` would return.
    pub fn count_above(&self, delta: f64) -> usize {
        self.steps.iter().position(|s| s.peak <= delta).unwrap_or(self.steps.len())
    }

    pub fn result(&self, delta: f64) -> DetectionResult {
        self.prefix(self.count_above(delta))
    }

    pub fn prefix(&self, n: usize) -> DetectionResult {
        if n == 0 {
            return DetectionResult::default();
        }
        let gains = &self.steps[n - 1].gains;
        let detections = self.steps[..n]
            .iter()
            .zip(gains)
            .map(|(s, &g)| Detection {
                angle_index: s.angle_index,
                delay_index: s.delay_index,
                angle: self.angle_grid[s.angle_index],
                delay: self.delay_grid[s.delay_index],
                gain: g,
            })
            .collect();
        DetectionResult { detections, iterations: n }
    }
}

/// Residual map, selected atoms and joint gains shared by both OMP variants.
struct Pursuit<'a> {
    y: &'a CMat,
    phi_a: &'a CMat,
    delay: &'a DelayDictionary,
    base: CMat,
    atoms: Vec<(usize, usize)>,
    u: Vec<CVec>,
    v: Vec<CVec>,
    gains: Vec<Complex64>,
}

impl<'a> Pursuit<'a> {
    fn new(y: &'a CMat, phi_a: &'a CMat, delay: &'a DelayDictionary) -> Self {
        Self {
            y,
            phi_a,
            delay,
            base: projection(y, phi_a, delay),
            atoms: Vec::new(),
            u: Vec::new(),
            v: Vec::new(),
            gains: Vec::new(),
        }
    }

    fn residual_map(&self) -> DMatrix<f64> {
        let mut a = self.base.clone();
        for ((u, v), &g) in self.u.iter().zip(&self.v).zip(&self.gains) {
            a -= (u * v.transpose()) * g;
        }
        a.map(|z| z.norm_sqr())
    }

    fn select(&self) -> (f64, (usize, usize)) {
        let map = self.residual_map();
        let best = argmax_masked(&map, &self.atoms);
        (map[best], best)
    }

    /// Adds an atom and re-solves all gains; false when the system is singular.
    fn push(&mut self, atom: (usize, usize)) -> bool {
        let (i, j) = atom;
        let a = self.phi_a.column(i).into_owned();
        let d = self.delay.matrix.column(j).into_owned();
        self.atoms.push(atom);
        let (k, s) = self.y.shape();
        let n = self.atoms.len();
        let mut b = CMat::zeros(k * s, n);
        for (c, &(ai, dj)) in self.atoms.iter().enumerate() {
            let pa = self.phi_a.column(ai);
            let pd = self.delay.matrix.column(dj);
            for col in 0..s {
                for row in 0..k {
                    b[(row + k * col, c)] = pa[row] * pd[col];
                }
            }
        }
        let target = CVec::from_column_slice(self.y.as_slice());
        match least_squares_qr(&b, &target) {
            Some(g) => {
                self.u.push(self.phi_a.adjoint() * &a);
                self.v.push(self.delay.matrix.adjoint() * &d);
                self.gains = g.iter().copied().collect();
                true
            }
            None => {
                self.atoms.pop();
                false
            }
        }
    }

    fn reconstruction(&self) -> CMat {
        let mut r = CMat::zeros(self.y.nrows(), self.y.ncols());
        for (&(i, j), &g) in self.atoms.iter().zip(&self.gains) {
            r += (self.phi_a.column(i) * self.delay.matrix.column(j).transpose()) * g;
        }
        r
    }
}

/// Runs OMP for at most `max_iter` iterations, stopping early once the peak
/// drops to `stop` or below.
pub fn omp_trace(y: &CMat, dict: &SteeringDictionary, delay: &DelayDictionary, max_iter: usize, stop: Option<f64>) -> OmpTrace {
    let mut p = Pursuit::new(y, &dict.matrix, delay);
    let total = dict.num_angles() * delay.num_delays();
    let mut steps = Vec::new();
    let mut final_peak = None;
    let initial_energy = y.norm_squared();
    while steps.len() < max_iter.min(total) {
        let (peak, atom) = p.select();
        if stop.is_some_and(|d| peak <= d) {
            final_peak = Some(peak);
            break;
        }
        if !p.push(atom) {
            break;
        }
        let residual_energy = (y - p.reconstruction()).norm_squared();
        steps.push(OmpStep {
            peak,
            angle_index: atom.0,
            delay_index: atom.1,
            gains: p.gains.clone(),
            residual_energy,
        });
    }
    OmpTrace {
        steps,
        final_peak,
        initial_energy,
        angle_grid: dict.angle_grid.clone(),
        delay_grid: delay.delay_grid.clone(),
    }
}

/// Greedy detection while the residual map peak exceeds `delta`.
pub fn omp_baseline(y: &CMat, dict: &SteeringDictionary, delay: &DelayDictionary, delta: f64, max_iter: usize) -> Result<DetectionResult> {
    if !(delta > 0.0) || max_iter == 0 {
        return Err(Error::InvalidArgument(format!("need delta > 0 and max_iter >= 1, got {delta}, {max_iter}")));
    }
    Ok(omp_trace(y, dict, delay, max_iter, Some(delta)).result(delta))
}

/// Window radii and softmax temperature of the differentiable detector.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SoftWindow {
    pub iota_theta: usize,
    pub iota_r: usize,
    /// Logits are the window map divided by the first detection's peak and by this value.
    pub temperature: f64,
}

/// Off-grid estimate of one differentiable OMP iteration.
#[derive(Clone, Copy, Debug)]
pub struct SoftDetection {
    pub angle: Var,
    pub delay: Var,
    pub angle_index: usize,
    pub delay_index: usize,
}

/// Differentiable OMP for exactly `targets` iterations.
///
/// Gradients reach `y` and `phi_a` only through each iteration's window
/// softmax; argmax indices, atom selection, gain and residual updates are
/// treated as constants.
pub fn omp_differentiable(
    tape: &mut Tape,
    y: Var,
    phi_a: Var,
    angle_grid: &[f64],
    delay: &DelayDictionary,
    targets: usize,
    window: SoftWindow,
) -> Result<Vec<SoftDetection>> {
    let yv = tape.value(y).clone();
    let pv = tape.value(phi_a).clone();
    let (nt, nd) = (pv.ncols(), delay.num_delays());
    if targets == 0 || targets > nt * nd {
        return Err(Error::InvalidArgument(format!("cannot run {targets} iterations on a {nt}x{nd} map")));
    }
    if angle_grid.len() != nt {
        return Err(Error::DimensionMismatch(format!("{} grid angles for {nt} columns", angle_grid.len())));
    }
    let mut p = Pursuit::new(&yv, &pv, delay);
    let mut out = Vec::with_capacity(targets);
    let mut first_peak: Option<Var> = None;
    for _ in 0..targets {
        let (_, (ic, jc)) = p.select();
        let i0 = ic.saturating_sub(window.iota_theta);
        let i1 = (ic + window.iota_theta).min(nt - 1);
        let j0 = jc.saturating_sub(window.iota_r);
        let j1 = (jc + window.iota_r).min(nd - 1);
        let iw: Vec<usize> = (i0..=i1).collect();
        let jw: Vec<usize> = (j0..=j1).collect();

        let residual = if p.atoms.is_empty() {
            y
        } else {
            let fit = tape.constant(p.reconstruction());
            tape.sub(y, fit)
        };
        let dconj = tape.constant(delay.matrix.select_columns(&jw).map(|z| z.conj()));
        let z = tape.matmul(residual, dconj);
        let cols = tape.columns(phi_a, &iw);
        let ah = tape.adjoint(cols);
        let w = tape.matmul(ah, z);
        let lw = tape.abs2(w);
        // every window shares the scale of the first (strongest) peak, so
        // weak later detections keep proportionally weak logits
        let peak = *first_peak.get_or_insert_with(|| tape.pick(lw, ic - i0, jc - j0));
        let logits = if tape.real_scalar(peak) > 0.0 {
            let n = tape.div_real(lw, peak);
            tape.scale(n, Complex64::new(1.0 / window.temperature, 0.0))
        } else {
            lw
        };
        // the lobe is symmetric in sin(theta), but a uniform theta grid packs
        // more samples on its outer flank; weighting each cell by its width
        // in sin(theta) and averaging there keeps the soft angle unbiased
        let log_width = tape.real_constant(CMat::from_fn(iw.len(), jw.len(), |r, _| {
            Complex64::new(angle_grid[iw[r]].cos().max(1e-12).ln(), 0.0)
        }));
        let logits = tape.add(logits, log_width);
        let prob = tape.softmax(logits);
        let sin_w = tape.real_constant(CMat::from_fn(iw.len(), jw.len(), |r, _| Complex64::new(angle_grid[iw[r]].sin(), 0.0)));
        let tau_w = tape.real_constant(CMat::from_fn(iw.len(), jw.len(), |_, c| Complex64::new(delay.delay_grid[jw[c]], 0.0)));
        let pt = tape.hadamard(prob, sin_w);
        let u = tape.sum(pt);
        let angle = tape.asin(u);
        let pd = tape.hadamard(prob, tau_w);
        let tau = tape.sum(pd);
        out.push(SoftDetection {
            angle,
            delay: tau,
            angle_index: ic,
            delay_index: jc,
        });
        if !p.push((ic, jc)) {
            return Err(Error::Singular);
        }
    }
    Ok(out)
}

/// Forward-only differentiable OMP; returns `(theta, tau)` pairs.
pub fn omp_differentiable_values(
    y: &CMat,
    dict: &SteeringDictionary,
    delay: &DelayDictionary,
    targets: usize,
    window: SoftWindow,
) -> Result<Vec<(f64, f64)>> {
    let mut tape = Tape::no_grad();
    let yv = tape.constant(y.clone());
    let pv = tape.constant(dict.matrix.clone());
    let dets = omp_differentiable(&mut tape, yv, pv, &dict.angle_grid, delay, targets, window)?;
    Ok(dets.iter().map(|d| (tape.real_scalar(d.angle), tape.real_scalar(d.delay))).collect())
}

/// Window radii `floor(delta * N / span)` for angle and range.
pub fn discrete_resolutions(
    num_antennas: usize,
    cfg: &OfdmConfig,
    n_theta: usize,
    n_tau: usize,
    angle_span: f64,
    range_span: f64,
) -> Result<(usize, usize)> {
    if !(angle_span > 0.0 && range_span > 0.0) || num_antennas == 0 {
        return Err(Error::InvalidArgument("zero-width grid span".into()));
    }
    let (dt, dr) = resolutions(num_antennas, cfg);
    // tiny slack so exact ratios are not lost to rounding
    let it = (dt * n_theta as f64 / angle_span + 1e-9).floor() as usize;
    let ir = (dr * n_tau as f64 / range_span + 1e-9).floor() as usize;
    Ok((it, ir))
}

/// Angular (`2/K`) and range (`c / (2 S df)`) resolutions.
pub fn resolutions(num_antennas: usize, cfg: &OfdmConfig) -> (f64, f64) {
    (2.0 / num_antennas as f64, SPEED_OF_LIGHT / (2.0 * cfg.bandwidth()))
}

/// Polar `(theta, tau)` to Cartesian positions; the flag reports clamped
/// negative delays.
pub fn to_positions(estimates: &[(f64, f64)]) -> (Vec<Point>, bool) {
    let mut clamped = false;
    let pts = estimates
        .iter()
        .map(|&(theta, tau)| {
            let tau = if tau < 0.0 {
                clamped = true;
                0.0
            } else {
                tau
            };
            let r = SPEED_OF_LIGHT * tau / 2.0;
            [r * theta.cos(), r * theta.sin()]
        })
        .collect();
    (pts, clamped)
}

pub fn detection_positions(result: &DetectionResult) -> Vec<Point> {
    let est: Vec<(f64, f64)> = result.detections.iter().map(|d| (d.angle, d.delay)).collect();
    to_positions(&est).0
}

/// CSV grid with angles (degrees) down the rows and ranges (m) across.
pub fn write_map_csv<W: Write>(mut w: W, map: &AngleDelayMap, angle_grid: &[f64], delay_grid: &[f64]) -> std::io::Result<()> {
    write!(w, "angle_deg")?;
    for tau in delay_grid {
        write!(w, ",{}", SPEED_OF_LIGHT * tau / 2.0)?;
    }
    writeln!(w)?;
    for (i, theta) in angle_grid.iter().enumerate() {
        write!(w, "{}", theta.to_degrees())?;
        for j in 0..delay_grid.len() {
            write!(w, ",{}", map.values[(i, j)])?;
        }
        writeln!(w)?;
    }
    Ok(())
}
