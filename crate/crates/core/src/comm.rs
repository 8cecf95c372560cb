//! Subcarrier-wise symbol decoding.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::autodiff::{CMat, Tape, Var};
use crate::error::{Error, Result};

/// Guard added to squared distances before taking logs.
pub const DISTANCE_FLOOR: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    points: Vec<Complex64>,
}

impl Constellation {
    /// Gray-mapped QPSK: bit 1 selects the sign of the real part, bit 0 the
    /// sign of the imaginary part.
    pub fn qpsk() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            points: vec![
                Complex64::new(h, h),
                Complex64::new(h, -h),
                Complex64::new(-h, h),
                Complex64::new(-h, -h),
            ],
        }
    }

    pub fn new(points: Vec<Complex64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("empty constellation".into()));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, m: usize) -> Complex64 {
        self.points[m]
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn mean_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.len() as f64
    }
}

/// `argmin_m |y_s - kappa_s x(m)|^2` per subcarrier, ties to the lowest index.
pub fn ml_detect(y: &[Complex64], kappa: &[Complex64], constellation: &Constellation) -> Result<Vec<usize>> {
    if y.len() != kappa.len() {
        return Err(Error::DimensionMismatch(format!("{} observations, {} CSI entries", y.len(), kappa.len())));
    }
    Ok(y.iter()
        .zip(kappa)
        .map(|(&ys, &ks)| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (m, &x) in constellation.points().iter().enumerate() {
                let d = (ys - ks * x).norm_sqr();
                if d < best_d {
                    best = m;
                    best_d = d;
                }
            }
            best
        })
        .collect())
}

/// Softmax of `-ln |y_s - kappa_s x(m)|^2` over the constellation.
///
/// This ranks symbols like the true posterior but does not equal it.
pub fn soft_posterior(y: Complex64, kappa: Complex64, constellation: &Constellation) -> Vec<f64> {
    let d: Vec<f64> = constellation.points().iter().map(|&x| (y - kappa * x).norm_sqr()).collect();
    if let Some(hit) = d.iter().position(|&v| v == 0.0) {
        if d.iter().any(|&v| v != 0.0) {
            let mut p = vec![0.0; d.len()];
            p[hit] = 1.0;
            return p;
        }
    }
    let logits: Vec<f64> = d.iter().map(|&v| -(v + DISTANCE_FLOOR).ln()).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// `S x |M|` logits `-ln(|y_s - kappa_s x(m)|^2 + floor)` on a tape;
/// `y` and `kappa` are `S x 1` nodes.
pub fn soft_logits_on_tape(tape: &mut Tape, y: Var, kappa: Var, constellation: &Constellation) -> Var {
    let m = constellation.len();
    let ones = tape.constant(CMat::from_element(1, m, Complex64::new(1.0, 0.0)));
    let xs = tape.constant(CMat::from_row_slice(1, m, constellation.points()));
    let yy = tape.matmul(y, ones);
    let kx = tape.matmul(kappa, xs);
    let diff = tape.sub(yy, kx);
    let d2 = tape.abs2(diff);
    let l = tape.ln(d2, DISTANCE_FLOOR);
    tape.scale(l, Complex64::new(-1.0, 0.0))
}
