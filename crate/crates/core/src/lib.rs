//! Model-based end-to-end learning for multi-target OFDM integrated sensing
//! and communication under antenna-array hardware impairments.
//!
//! The pipeline is: steering dictionaries ([`array`]), scene and observation
//! synthesis ([`channel`]), least-squares multi-beam precoding
//! ([`beamforming`]), orthogonal matching pursuit with a differentiable
//! variant ([`omp`]), maximum-likelihood and soft symbol decoding
//! ([`comm`]), GOSPA / cross-entropy losses and test metrics ([`metrics`]),
//! gradient training of the array parameters ([`training`]), a greedy
//! calibration baseline ([`calibration`]) and experiment orchestration
//! ([`experiment`]).

pub mod adam;
pub mod array;
pub mod assignment;
pub mod autodiff;
pub mod beamforming;
pub mod calibration;
pub mod channel;
pub mod comm;
pub mod config;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod omp;
pub mod output;
pub mod rng;
pub mod training;

pub use autodiff::{CMat, Tape, Var};
pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
