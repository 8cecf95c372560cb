//! Least-squares beampattern synthesis and multi-beam ISAC precoding.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::ArrayModel;
use crate::autodiff::{CMat, Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_condition, CVec};

/// Gram condition number above which a ridge term is added.
pub const MAX_CONDITION: f64 = 1e12;
/// Ridge weight relative to `tr(G) / K`.
pub const RIDGE: f64 = 1e-8;

/// Desired response `b_i = K` inside the interval, zero elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Beampattern {
    pub grid: Vec<f64>,
    pub b: Vec<f64>,
}

impl Beampattern {
    pub fn new(grid: &[f64], lo: f64, hi: f64, num_antennas: usize) -> Result<Self> {
        let b: Vec<f64> = grid
            .iter()
            .map(|&t| if t >= lo && t <= hi { num_antennas as f64 } else { 0.0 })
            .collect();
        if b.iter().all(|&v| v == 0.0) {
            return Err(Error::EmptyBeampattern { lo, hi });
        }
        Ok(Self { grid: grid.to_vec(), b })
    }

    fn column(&self) -> CMat {
        CMat::from_iterator(self.b.len(), 1, self.b.iter().map(|&v| Complex64::new(v, 0.0)))
    }
}

fn ridge(gram: &CMat) -> Option<f64> {
    let k = gram.nrows();
    if hermitian_condition(gram) > MAX_CONDITION {
        Some(RIDGE * gram.trace().re / k as f64)
    } else {
        None
    }
}

/// `f_bs = (Phi* Phi^T)^-1 Phi* b`, unnormalized.
pub fn synthesize(phi: &CMat, pattern: &Beampattern) -> Result<CVec> {
    if phi.ncols() != pattern.b.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} dictionary columns, {} pattern entries",
            phi.ncols(),
            pattern.b.len()
        )));
    }
    let pc = phi.map(|z| z.conj());
    let mut gram = &pc * phi.transpose();
    if let Some(eps) = ridge(&gram) {
        for i in 0..gram.nrows() {
            gram[(i, i)] += eps;
        }
    }
    let rhs = &pc * pattern.column();
    let x = gram.lu().solve(&rhs).ok_or(Error::Singular)?;
    Ok(CVec::from_column_slice(x.as_slice()))
}

/// [`synthesize`] on a tape, differentiable through the linear solve.
pub fn synthesize_on_tape(tape: &mut Tape, phi: Var, pattern: &Beampattern) -> Result<Var> {
    let pc = tape.conj(phi);
    let pt = tape.transpose(phi);
    let mut gram = tape.matmul(pc, pt);
    if let Some(eps) = ridge(tape.value(gram)) {
        let k = tape.value(gram).nrows();
        let r = tape.constant(CMat::identity(k, k) * Complex64::new(eps, 0.0));
        gram = tape.add(gram, r);
    }
    let b = tape.constant(pattern.column());
    let rhs = tape.matmul(pc, b);
    tape.solve(gram, rhs).ok_or(Error::Singular)
}

fn combine_coefficients(eta: f64, phase: f64) -> Result<(Complex64, Complex64)> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidArgument(format!("eta = {eta} outside [0, 1]")));
    }
    Ok((
        Complex64::new(eta.sqrt(), 0.0),
        Complex64::from_polar((1.0 - eta).sqrt(), phase),
    ))
}

/// `sqrt(P) v / |v|` with `v = sqrt(eta) f_r + sqrt(1-eta) e^{j phi} f_c`,
/// after scaling both beams to unit norm.
pub fn isac_combine(f_r: &CVec, f_c: &CVec, eta: f64, phase: f64, power: f64) -> Result<CVec> {
    let (cr, cc) = combine_coefficients(eta, phase)?;
    let nr = f_r.norm();
    let nc = f_c.norm();
    let mut v = CVec::zeros(f_r.len());
    if cr.re != 0.0 {
        if nr == 0.0 {
            return Err(Error::ZeroPrecoder);
        }
        v += f_r * (cr / nr);
    }
    if cc.norm() != 0.0 {
        if nc == 0.0 {
            return Err(Error::ZeroPrecoder);
        }
        v += f_c * (cc / nc);
    }
    let n = v.norm();
    if !(n > 1e-12) {
        return Err(Error::ZeroPrecoder);
    }
    Ok(v * Complex64::new(power.sqrt() / n, 0.0))
}

/// [`isac_combine`] on a tape. Zero-weight beams are skipped entirely.
pub fn isac_combine_on_tape(tape: &mut Tape, f_r: Var, f_c: Var, eta: f64, phase: f64, power: f64) -> Result<Var> {
    let (cr, cc) = combine_coefficients(eta, phase)?;
    let mut terms = Vec::new();
    for (f, c) in [(f_r, cr), (f_c, cc)] {
        if c.norm() == 0.0 {
            continue;
        }
        let n = tape.norm(f);
        if tape.real_scalar(n) == 0.0 {
            return Err(Error::ZeroPrecoder);
        }
        let u = tape.div_real(f, n);
        terms.push(tape.scale(u, c));
    }
    let v = match terms[..] {
        [a] => a,
        [a, b] => tape.add(a, b),
        _ => unreachable!("eta in [0, 1] keeps at least one beam"),
    };
    let n = tape.norm(v);
    if !(tape.real_scalar(n) > 1e-12) {
        return Err(Error::ZeroPrecoder);
    }
    let u = tape.div_real(v, n);
    Ok(tape.scale(u, Complex64::new(power.sqrt(), 0.0)))
}

/// `|a^T(theta) f|^2` over a grid, using the given (true) array.
pub fn transmit_response(array: &ArrayModel, f: &CVec, grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .map(|&t| array.steering_vector(t).iter().zip(f.iter()).map(|(a, b)| a * b).sum::<Complex64>().norm_sqr())
        .collect()
}

pub fn write_precoder_csv<W: Write>(mut w: W, f: &CVec) -> std::io::Result<()> {
    writeln!(w, "antenna,re,im")?;
    for (k, z) in f.iter().enumerate() {
        writeln!(w, "{k},{},{}", z.re, z.im)?;
    }
    Ok(())
}
