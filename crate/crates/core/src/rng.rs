//! Reproducible random streams.
//!
//! Every batch item, sweep point or worker draws from its own ChaCha stream
//! keyed by `(seed, purpose, index)`, so results never depend on scheduling.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent stream for item `index` of the activity labelled `purpose`.
pub fn stream(seed: u64, purpose: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(purpose)));
    rng.set_stream(index);
    rng
}

/// Derives a child seed, e.g. one per training iteration.
pub fn derive_seed(seed: u64, purpose: u64, index: u64) -> u64 {
    splitmix(splitmix(seed ^ splitmix(purpose)).wrapping_add(index))
}

/// Circularly-symmetric complex Gaussian sample with total variance `var`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

// purpose labels
pub const TRAIN_SECTORS: u64 = 1;
pub const TRAIN_ITEMS: u64 = 2;
pub const EVAL_ITEMS: u64 = 3;
pub const CALIBRATION_ITEMS: u64 = 4;
pub const IMPAIRMENT: u64 = 5;
pub const SWEEP: u64 = 6;
