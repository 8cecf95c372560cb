//! Uniform linear array with inter-element spacing errors.
//!
//! Antenna positions are cumulative: `p_k = p_0 + sum_{i<k} d_i`. Phases are
//! formed from positions centered on the array mean, so the nominal array
//! (all gaps `lambda/2`) reproduces `exp(-j 2 pi (k - (K-1)/2) (1/2) sin(theta))`
//! and a common offset never shows up in the steering vectors.
//!
//! A per-element variant, `exp(-j 2 pi (k - (K-1)/2) d_k sin(theta) / lambda)`,
//! is sometimes used for the same impairment; it is not implemented here.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{steering_phase_matrix, CMat, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayModel {
    wavelength: f64,
    spacing: Vec<f64>,
    reference_position: f64,
}

impl ArrayModel {
    pub fn new(wavelength: f64, spacing: Vec<f64>, reference_position: f64) -> Result<Self> {
        if !(wavelength > 0.0) {
            return Err(Error::InvalidArgument(format!("wavelength must be positive, got {wavelength}")));
        }
        if let Some(d) = spacing.iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidArgument(format!("antenna spacing must be positive, got {d}")));
        }
        Ok(Self {
            wavelength,
            spacing,
            reference_position,
        })
    }

    /// Half-wavelength array with the reference antenna at `-(K-1) lambda / 4`.
    pub fn nominal(num_antennas: usize, wavelength: f64) -> Self {
        assert!(num_antennas >= 1);
        Self {
            wavelength,
            spacing: vec![wavelength / 2.0; num_antennas - 1],
            reference_position: nominal_reference(num_antennas, wavelength),
        }
    }

    /// Array with the given spacings and the nominal reference position.
    pub fn with_spacing(wavelength: f64, spacing: Vec<f64>) -> Result<Self> {
        let k = spacing.len() + 1;
        Self::new(wavelength, spacing, nominal_reference(k, wavelength))
    }

    pub fn from_positions(wavelength: f64, positions: &[f64]) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidArgument("array needs at least one antenna".into()));
        }
        let spacing = positions.windows(2).map(|w| w[1] - w[0]).collect();
        Self::new(wavelength, spacing, positions[0])
    }

    pub fn num_antennas(&self) -> usize {
        self.spacing.len() + 1
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn reference_position(&self) -> f64 {
        self.reference_position
    }

    pub fn positions(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_antennas());
        let mut acc = self.reference_position;
        p.push(acc);
        for d in &self.spacing {
            acc += d;
            p.push(acc);
        }
        p
    }

    pub fn centered_positions(&self) -> Vec<f64> {
        center(&self.positions())
    }

    /// `a(theta)`, entry k = `exp(-j 2 pi q_k sin(theta) / lambda)`.
    pub fn steering_vector(&self, theta: f64) -> DVector<Complex64> {
        let m = steering_phase_matrix(&self.centered_positions(), &[theta.sin()], self.wavelength);
        DVector::from_column_slice(m.as_slice())
    }

    pub fn steering_matrix(&self, angle_grid: &[f64]) -> Result<SteeringDictionary> {
        if angle_grid.is_empty() {
            return Err(Error::InvalidArgument("empty angle grid".into()));
        }
        let sin: Vec<f64> = angle_grid.iter().map(|t| t.sin()).collect();
        Ok(SteeringDictionary {
            matrix: steering_phase_matrix(&self.centered_positions(), &sin, self.wavelength),
            angle_grid: angle_grid.to_vec(),
        })
    }
}

fn nominal_reference(k: usize, wavelength: f64) -> f64 {
    -((k - 1) as f64) * wavelength / 4.0
}

fn center(p: &[f64]) -> Vec<f64> {
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    p.iter().map(|x| x - mean).collect()
}

/// Steering matrix `Phi_a` on an angle grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SteeringDictionary {
    pub matrix: CMat,
    pub angle_grid: Vec<f64>,
}

impl SteeringDictionary {
    pub fn new(matrix: CMat, angle_grid: Vec<f64>) -> Result<Self> {
        if matrix.ncols() != angle_grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "dictionary has {} columns but grid has {} angles",
                matrix.ncols(),
                angle_grid.len()
            )));
        }
        Ok(Self { matrix, angle_grid })
    }

    pub fn num_antennas(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_angles(&self) -> usize {
        self.matrix.ncols()
    }
}

/// `n` equally spaced points over `[lo, hi]`, endpoints included.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Draws `K-1` gaps from `N(lambda/2, sigma^2)`, redrawing nonpositive values.
pub fn sample_impairment<R: Rng + ?Sized>(num_antennas: usize, wavelength: f64, sigma: f64, rng: &mut R) -> Vec<f64> {
    let mean = wavelength / 2.0;
    if sigma == 0.0 {
        return vec![mean; num_antennas.saturating_sub(1)];
    }
    let normal = Normal::new(mean, sigma).expect("sigma is finite and nonnegative");
    (1..num_antennas)
        .map(|_| loop {
            let d = normal.sample(rng);
            if d > 0.0 {
                break d;
            }
        })
        .collect()
}

/// Linear map from the `K-1` gaps to the `K` centered positions.
pub fn centering_matrix(num_antennas: usize) -> CMat {
    let k = num_antennas;
    CMat::from_fn(k, k - 1, |row, gap| {
        let below = if gap < row { 1.0 } else { 0.0 };
        Complex64::new(below - (k - 1 - gap) as f64 / k as f64, 0.0)
    })
}

/// Differentiable `Phi_a(d)`: `spacing` is a real `(K-1) x 1` node in meters.
pub fn steering_matrix_on_tape(tape: &mut Tape, spacing: Var, angle_grid: &[f64], wavelength: f64) -> Var {
    let k = tape.value(spacing).nrows() + 1;
    let m = tape.real_constant(centering_matrix(k));
    let q = tape.matmul(m, spacing);
    let sin: Vec<f64> = angle_grid.iter().map(|t| t.sin()).collect();
    tape.steering_phase(q, &sin, wavelength)
}
