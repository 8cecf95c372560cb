//! GOSPA, cross-entropy and the detection / symbol error metrics.

use serde::{Deserialize, Serialize};

use crate::assignment::{self, Assignment};
use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GospaParams {
    /// Cut-off distance; `f64::INFINITY` disables it.
    pub cutoff: f64,
    pub mu: f64,
    pub p: f64,
}

impl GospaParams {
    pub fn new(cutoff: f64, mu: f64, p: f64) -> Result<Self> {
        if !(cutoff > 0.0) || !(mu > 0.0 && mu <= 2.0) || !(p >= 1.0 && p.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid GOSPA parameters ({cutoff}, {mu}, {p})")));
        }
        Ok(Self { cutoff, mu, p })
    }

    /// No cut-off; used while training, where cardinalities always match.
    pub fn training() -> Self {
        Self {
            cutoff: f64::INFINITY,
            mu: 2.0,
            p: 2.0,
        }
    }

    pub fn inference(cutoff: f64) -> Self {
        Self { cutoff, mu: 2.0, p: 2.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    /// Enumeration when the larger set has at most five points.
    Auto,
    Enumerate,
    Hungarian,
}

/// Optimal pairs `(truth index, estimate index)` and the GOSPA value.
#[derive(Clone, Debug, PartialEq)]
pub struct GospaResult {
    pub value: f64,
    pub pairs: Vec<(usize, usize)>,
}

fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub fn gospa(truth: &[Point], est: &[Point], params: &GospaParams) -> Result<f64> {
    gospa_with(truth, est, params, Backend::Auto).map(|r| r.value)
}

/// Optimal assignment through which the loss gradient flows.
pub fn gospa_gradient_inputs(truth: &[Point], est: &[Point], params: &GospaParams) -> Result<Vec<(usize, usize)>> {
    gospa_with(truth, est, params, Backend::Auto).map(|r| r.pairs)
}

pub fn gospa_with(truth: &[Point], est: &[Point], params: &GospaParams, backend: Backend) -> Result<GospaResult> {
    let (small, large, swapped) = if truth.len() <= est.len() {
        (truth, est, false)
    } else {
        (est, truth, true)
    };
    let unmatched = large.len() - small.len();
    if params.cutoff.is_infinite() && unmatched > 0 {
        return Err(Error::UndefinedGospa(truth.len(), est.len()));
    }
    let cost: Vec<Vec<f64>> = small
        .iter()
        .map(|a| large.iter().map(|b| distance(a, b).min(params.cutoff).powf(params.p)).collect())
        .collect();
    let use_enum = match backend {
        Backend::Enumerate => true,
        Backend::Hungarian => false,
        Backend::Auto => large.len() <= 5,
    };
    let Assignment { columns, cost: total } = if use_enum {
        assignment::enumerate(&cost)?
    } else {
        assignment::hungarian(&cost)?
    };
    let penalty = if unmatched > 0 {
        params.cutoff.powf(params.p) / params.mu * unmatched as f64
    } else {
        0.0
    };
    let pairs = columns
        .iter()
        .enumerate()
        .map(|(i, &j)| if swapped { (j, i) } else { (i, j) })
        .collect();
    Ok(GospaResult {
        value: (total + penalty).powf(1.0 / params.p),
        pairs,
    })
}

/// `-sum_i u_i ln(u_hat_i)`.
pub fn cce(one_hot: &[f64], posterior: &[f64]) -> f64 {
    one_hot
        .iter()
        .zip(posterior)
        .filter(|(&u, _)| u != 0.0)
        .map(|(&u, &p)| -u * p.ln())
        .sum()
}

pub fn isac_loss(gospa_value: f64, cce_value: f64, omega_r: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&omega_r) {
        return Err(Error::InvalidArgument(format!("omega_r = {omega_r} outside [0, 1]")));
    }
    Ok(omega_r * gospa_value + (1.0 - omega_r) * cce_value)
}

/// Misdetection and false-alarm probabilities over a batch. Either value is
/// NaN when its denominator is zero.
pub fn pmd_pfa(true_counts: &[usize], est_counts: &[usize], t_max: usize) -> (f64, f64) {
    let (mut hit, mut total, mut extra, mut room) = (0usize, 0usize, 0usize, 0usize);
    for (&t, &e) in true_counts.iter().zip(est_counts) {
        hit += t.min(e);
        total += t;
        extra += t.max(e) - t;
        room += t_max.saturating_sub(t);
    }
    let pmd = if total == 0 { f64::NAN } else { 1.0 - hit as f64 / total as f64 };
    let pfa = if room == 0 { f64::NAN } else { extra as f64 / room as f64 };
    (pmd, pfa)
}

pub fn ser(true_msgs: &[usize], est_msgs: &[usize]) -> f64 {
    if true_msgs.is_empty() {
        return f64::NAN;
    }
    let wrong = true_msgs.iter().zip(est_msgs).filter(|(a, b)| a != b).count();
    wrong as f64 / true_msgs.len() as f64
}
