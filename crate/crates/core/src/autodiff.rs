//! Minimal reverse-mode tape over dense complex matrices.
//!
//! Every node holds a `DMatrix<Complex64>`. Real-valued nodes keep a zero
//! imaginary part and are flagged so that gradients flowing into them are
//! projected onto the real axis.
//!
//! Gradient convention: for a real loss `L` and a complex entry `z = x + iy`
//! the stored adjoint is `dL/dx + i dL/dy`. For a holomorphic map `w = h(z)`
//! this gives `g_z = conj(h'(z)) g_w`.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Const,
    MatMul(Var, Var),
    Adjoint(Var),
    Transpose(Var),
    Conj(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, Complex64),
    ScaleBy(Var, Var),
    DivReal(Var, Var),
    Abs2(Var),
    Sqrt(Var),
    Ln(Var, f64),
    Cos(Var),
    Sin(Var),
    Asin(Var),
    Sum(Var),
    Columns(Var, Vec<usize>),
    Pick(Var, usize, usize),
    Solve(Var, Var),
    Softmax(Var),
    CrossEntropyRows(Var, Vec<usize>),
    Norm(Var),
    SteeringPhase {
        positions: Var,
        sin_grid: Vec<f64>,
        wavelength: f64,
    },
}

struct Node {
    value: CMat,
    real: bool,
    needs_grad: bool,
    op: Op,
}

/// Append-only computation record.
///
/// A tape built with [`Tape::no_grad`] evaluates exactly the same forward
/// arithmetic but keeps no parent links, so `backward` yields nothing.
pub struct Tape {
    nodes: Vec<Node>,
    record: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Adjoints indexed by [`Var`]. Nodes that do not depend on a leaf have none.
pub struct Gradients {
    grads: Vec<Option<CMat>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&CMat> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Adjoint of `v`, or zeros shaped like `like` when no gradient reached it.
    pub fn get_or_zeros(&self, v: Var, like: &CMat) -> CMat {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| CMat::zeros(like.nrows(), like.ncols()))
    }
}

fn real_part(m: &CMat) -> CMat {
    m.map(|z| Complex64::new(z.re, 0.0))
}

fn scalar_of(m: &CMat) -> Complex64 {
    debug_assert_eq!(m.shape(), (1, 1));
    m[(0, 0)]
}

/// Complex steering matrix `exp(-j 2 pi q_k sin(theta_i) / lambda)`.
pub fn steering_phase_matrix(positions: &[f64], sin_grid: &[f64], wavelength: f64) -> CMat {
    let k = std::f64::consts::TAU / wavelength;
    CMat::from_fn(positions.len(), sin_grid.len(), |r, c| {
        Complex64::from_polar(1.0, -k * positions[r] * sin_grid[c])
    })
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            record: true,
        }
    }

    pub fn no_grad() -> Self {
        Self {
            nodes: Vec::new(),
            record: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: CMat, real: bool, op: Op) -> Var {
        let needs_grad = self.record
            && match &op {
                Op::Leaf => true,
                Op::Const => false,
                other => parents(other).iter().any(|p| self.nodes[p.0].needs_grad),
            };
        let op = match op {
            Op::Leaf => Op::Leaf,
            op if needs_grad => op,
            _ => Op::Const,
        };
        self.nodes.push(Node {
            value,
            real,
            needs_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: CMat) -> Var {
        self.push(value, false, Op::Leaf)
    }

    /// Real column-vector leaf.
    pub fn real_leaf(&mut self, values: &[f64]) -> Var {
        let m = CMat::from_iterator(values.len(), 1, values.iter().map(|&x| Complex64::new(x, 0.0)));
        self.push(m, true, Op::Leaf)
    }

    /// Real leaf of arbitrary shape; imaginary parts are dropped.
    pub fn real_leaf_matrix(&mut self, value: CMat) -> Var {
        self.push(real_part(&value), true, Op::Leaf)
    }

    pub fn constant(&mut self, value: CMat) -> Var {
        self.push(value, false, Op::Const)
    }

    pub fn real_constant(&mut self, value: CMat) -> Var {
        self.push(real_part(&value), true, Op::Const)
    }

    pub fn value(&self, v: Var) -> &CMat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> Complex64 {
        scalar_of(self.value(v))
    }

    pub fn real_scalar(&self, v: Var) -> f64 {
        self.scalar(v).re
    }

    pub fn is_real(&self, v: Var) -> bool {
        self.nodes[v.0].real
    }

    fn real_flag(&self, a: Var, b: Var) -> bool {
        self.nodes[a.0].real && self.nodes[b.0].real
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        let real = self.real_flag(a, b);
        self.push(v, real, Op::MatMul(a, b))
    }

    pub fn adjoint(&mut self, a: Var) -> Var {
        let v = self.value(a).adjoint();
        let real = self.is_real(a);
        self.push(v, real, Op::Adjoint(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        let real = self.is_real(a);
        self.push(v, real, Op::Transpose(a))
    }

    pub fn conj(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|z| z.conj());
        let real = self.is_real(a);
        self.push(v, real, Op::Conj(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        let real = self.real_flag(a, b);
        self.push(v, real, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        let real = self.real_flag(a, b);
        self.push(v, real, Op::Sub(a, b))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).component_mul(self.value(b));
        let real = self.real_flag(a, b);
        self.push(v, real, Op::Hadamard(a, b))
    }

    pub fn scale(&mut self, a: Var, c: Complex64) -> Var {
        let v = self.value(a) * c;
        let real = self.is_real(a) && c.im == 0.0;
        self.push(v, real, Op::Scale(a, c))
    }

    /// Matrix `a` times the 1x1 node `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        let v = self.value(a) * self.scalar(s);
        let real = self.real_flag(a, s);
        self.push(v, real, Op::ScaleBy(a, s))
    }

    /// Matrix `a` divided by the real 1x1 node `r`.
    pub fn div_real(&mut self, a: Var, r: Var) -> Var {
        debug_assert!(self.is_real(r));
        let d = self.real_scalar(r);
        let v = self.value(a).map(|z| z / d);
        let real = self.is_real(a);
        self.push(v, real, Op::DivReal(a, r))
    }

    pub fn abs2(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|z| Complex64::new(z.norm_sqr(), 0.0));
        self.push(v, true, Op::Abs2(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|z| Complex64::new(z.re.sqrt(), 0.0));
        self.push(v, true, Op::Sqrt(a))
    }

    /// `ln(x + eps)` on a real node.
    pub fn ln(&mut self, a: Var, eps: f64) -> Var {
        let v = self.value(a).map(|z| Complex64::new((z.re + eps).ln(), 0.0));
        self.push(v, true, Op::Ln(a, eps))
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|z| Complex64::new(z.re.cos(), 0.0));
        self.push(v, true, Op::Cos(a))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|z| Complex64::new(z.re.sin(), 0.0));
        self.push(v, true, Op::Sin(a))
    }

    /// Arcsine of the real part, clamped to `[-1, 1]`.
    pub fn asin(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|z| Complex64::new(z.re.clamp(-1.0, 1.0).asin(), 0.0));
        self.push(v, true, Op::Asin(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().fold(ZERO, |acc, z| acc + z);
        let real = self.is_real(a);
        self.push(CMat::from_element(1, 1, s), real, Op::Sum(a))
    }

    pub fn columns(&mut self, a: Var, idx: &[usize]) -> Var {
        let v = self.value(a).select_columns(idx);
        let real = self.is_real(a);
        self.push(v, real, Op::Columns(a, idx.to_vec()))
    }

    pub fn pick(&mut self, a: Var, row: usize, col: usize) -> Var {
        let v = CMat::from_element(1, 1, self.value(a)[(row, col)]);
        let real = self.is_real(a);
        self.push(v, real, Op::Pick(a, row, col))
    }

    /// `a^{-1} b` through an LU factorization. Returns `None` for singular `a`.
    pub fn solve(&mut self, a: Var, b: Var) -> Option<Var> {
        let x = self.value(a).clone().lu().solve(self.value(b))?;
        if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return None;
        }
        Some(self.push(x, false, Op::Solve(a, b)))
    }

    /// Softmax over every entry of a real node, shifted by its maximum.
    pub fn softmax(&mut self, a: Var) -> Var {
        let v = softmax_values(self.value(a));
        self.push(v, true, Op::Softmax(a))
    }

    /// Mean over rows of `logsumexp(row) - row[target]`.
    pub fn cross_entropy_rows(&mut self, logits: Var, targets: &[usize]) -> Var {
        let z = self.value(logits);
        assert_eq!(z.nrows(), targets.len());
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = z.row(r);
            let max = row.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|c| (c.re - max).exp()).sum::<f64>().ln();
            total += lse - row[t].re;
        }
        let v = CMat::from_element(1, 1, Complex64::new(total / targets.len() as f64, 0.0));
        self.push(v, true, Op::CrossEntropyRows(logits, targets.to_vec()))
    }

    /// Frobenius norm.
    pub fn norm(&mut self, a: Var) -> Var {
        let n = self.value(a).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        self.push(CMat::from_element(1, 1, Complex64::new(n, 0.0)), true, Op::Norm(a))
    }

    /// Steering matrix from a real column of (centered) antenna positions.
    pub fn steering_phase(&mut self, positions: Var, sin_grid: &[f64], wavelength: f64) -> Var {
        let q: Vec<f64> = self.value(positions).iter().map(|z| z.re).collect();
        let v = steering_phase_matrix(&q, sin_grid, wavelength);
        self.push(
            v,
            false,
            Op::SteeringPhase {
                positions,
                sin_grid: sin_grid.to_vec(),
                wavelength,
            },
        )
    }

    /// Gradient of the real 1x1 node `loss`.
    pub fn grad(&self, loss: Var) -> Gradients {
        self.backward(&[(loss, CMat::from_element(1, 1, ONE))])
    }

    /// Vector-Jacobian product seeded with the given adjoints.
    pub fn backward(&self, seeds: &[(Var, CMat)]) -> Gradients {
        let mut grads: Vec<Option<CMat>> = vec![None; self.nodes.len()];
        if !self.record {
            return Gradients { grads };
        }
        let mut top = 0;
        for (v, g) in seeds {
            assert_eq!(self.value(*v).shape(), g.shape(), "seed shape mismatch");
            accumulate(&mut grads, &self.nodes, *v, g.clone());
            top = top.max(v.0 + 1);
        }
        for idx in (0..top).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(&mut grads, idx, &g);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, grads: &mut [Option<CMat>], idx: usize, g: &CMat) {
        let nodes = &self.nodes;
        let val = |v: Var| &nodes[v.0].value;
        let out = &nodes[idx].value;
        match &nodes[idx].op {
            Op::Leaf | Op::Const => {}
            Op::MatMul(a, b) => {
                if nodes[a.0].needs_grad {
                    accumulate(grads, nodes, *a, g * val(*b).adjoint());
                }
                if nodes[b.0].needs_grad {
                    accumulate(grads, nodes, *b, val(*a).adjoint() * g);
                }
            }
            Op::Adjoint(a) => accumulate(grads, nodes, *a, g.adjoint()),
            Op::Transpose(a) => accumulate(grads, nodes, *a, g.transpose()),
            Op::Conj(a) => accumulate(grads, nodes, *a, g.map(|z| z.conj())),
            Op::Add(a, b) => {
                accumulate(grads, nodes, *a, g.clone());
                accumulate(grads, nodes, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, nodes, *a, g.clone());
                accumulate(grads, nodes, *b, -g);
            }
            Op::Hadamard(a, b) => {
                if nodes[a.0].needs_grad {
                    accumulate(grads, nodes, *a, g.zip_map(val(*b), |gz, bz| gz * bz.conj()));
                }
                if nodes[b.0].needs_grad {
                    accumulate(grads, nodes, *b, g.zip_map(val(*a), |gz, az| gz * az.conj()));
                }
            }
            Op::Scale(a, c) => accumulate(grads, nodes, *a, g * c.conj()),
            Op::ScaleBy(a, s) => {
                let sv = scalar_of(val(*s));
                if nodes[a.0].needs_grad {
                    accumulate(grads, nodes, *a, g * sv.conj());
                }
                if nodes[s.0].needs_grad {
                    let gs = val(*a).zip_fold(g, ZERO, |acc, az, gz| acc + az.conj() * gz);
                    accumulate(grads, nodes, *s, CMat::from_element(1, 1, gs));
                }
            }
            Op::DivReal(a, r) => {
                let d = scalar_of(val(*r)).re;
                if nodes[a.0].needs_grad {
                    accumulate(grads, nodes, *a, g.map(|z| z / d));
                }
                if nodes[r.0].needs_grad {
                    let dot = g.zip_fold(val(*a), 0.0, |acc, gz, az| acc + (gz.conj() * az).re);
                    accumulate(grads, nodes, *r, CMat::from_element(1, 1, Complex64::new(-dot / (d * d), 0.0)));
                }
            }
            Op::Abs2(a) => {
                accumulate(grads, nodes, *a, val(*a).zip_map(g, |z, gz| z * (2.0 * gz.re)));
            }
            Op::Sqrt(a) => {
                let ga = out.zip_map(g, |y, gz| {
                    if y.re > 0.0 {
                        Complex64::new(gz.re / (2.0 * y.re), 0.0)
                    } else {
                        ZERO
                    }
                });
                accumulate(grads, nodes, *a, ga);
            }
            Op::Ln(a, eps) => {
                let ga = val(*a).zip_map(g, |x, gz| Complex64::new(gz.re / (x.re + eps), 0.0));
                accumulate(grads, nodes, *a, ga);
            }
            Op::Cos(a) => {
                let ga = val(*a).zip_map(g, |x, gz| Complex64::new(-x.re.sin() * gz.re, 0.0));
                accumulate(grads, nodes, *a, ga);
            }
            Op::Sin(a) => {
                let ga = val(*a).zip_map(g, |x, gz| Complex64::new(x.re.cos() * gz.re, 0.0));
                accumulate(grads, nodes, *a, ga);
            }
            Op::Asin(a) => {
                let ga = val(*a).zip_map(g, |x, gz| {
                    let d = (1.0 - x.re * x.re).max(1e-12).sqrt();
                    Complex64::new(gz.re / d, 0.0)
                });
                accumulate(grads, nodes, *a, ga);
            }
            Op::Sum(a) => {
                let s = scalar_of(g);
                let (r, c) = val(*a).shape();
                accumulate(grads, nodes, *a, CMat::from_element(r, c, s));
            }
            Op::Columns(a, idx) => {
                let (r, c) = val(*a).shape();
                let mut ga = CMat::zeros(r, c);
                for (k, &col) in idx.iter().enumerate() {
                    let mut dst = ga.column_mut(col);
                    dst += g.column(k);
                }
                accumulate(grads, nodes, *a, ga);
            }
            Op::Pick(a, row, col) => {
                let (r, c) = val(*a).shape();
                let mut ga = CMat::zeros(r, c);
                ga[(*row, *col)] = scalar_of(g);
                accumulate(grads, nodes, *a, ga);
            }
            Op::Solve(a, b) => {
                // X = A^{-1} B  =>  g_B = A^{-H} g_X,  g_A = -g_B X^H
                let gb = val(*a)
                    .adjoint()
                    .lu()
                    .solve(g)
                    .expect("adjoint of a nonsingular matrix is nonsingular");
                if nodes[a.0].needs_grad {
                    accumulate(grads, nodes, *a, -(&gb * out.adjoint()));
                }
                if nodes[b.0].needs_grad {
                    accumulate(grads, nodes, *b, gb);
                }
            }
            Op::Softmax(a) => {
                let inner = out.zip_fold(g, 0.0, |acc, p, gz| acc + p.re * gz.re);
                let ga = out.zip_map(g, |p, gz| Complex64::new(p.re * (gz.re - inner), 0.0));
                accumulate(grads, nodes, *a, ga);
            }
            Op::CrossEntropyRows(a, targets) => {
                let scale = scalar_of(g).re / targets.len() as f64;
                let z = val(*a);
                let mut ga = CMat::zeros(z.nrows(), z.ncols());
                for (r, &t) in targets.iter().enumerate() {
                    let max = z.row(r).iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
                    let denom: f64 = z.row(r).iter().map(|c| (c.re - max).exp()).sum();
                    for c in 0..z.ncols() {
                        let p = (z[(r, c)].re - max).exp() / denom;
                        let ind = if c == t { 1.0 } else { 0.0 };
                        ga[(r, c)] = Complex64::new(scale * (p - ind), 0.0);
                    }
                }
                accumulate(grads, nodes, *a, ga);
            }
            Op::Norm(a) => {
                let n = scalar_of(out).re;
                let gr = scalar_of(g).re;
                let ga = if n > 0.0 {
                    val(*a).map(|z| z * (gr / n))
                } else {
                    CMat::zeros(val(*a).nrows(), val(*a).ncols())
                };
                accumulate(grads, nodes, *a, ga);
            }
            Op::SteeringPhase {
                positions,
                sin_grid,
                wavelength,
            } => {
                // d Phi[k,i] / d q_k = -j (2 pi / lambda) sin(theta_i) Phi[k,i]
                let kw = std::f64::consts::TAU / wavelength;
                let mut gq = CMat::zeros(out.nrows(), 1);
                for r in 0..out.nrows() {
                    let mut acc = 0.0;
                    for (c, s) in sin_grid.iter().enumerate() {
                        let d = Complex64::new(0.0, -kw * s) * out[(r, c)];
                        acc += (g[(r, c)].conj() * d).re;
                    }
                    gq[(r, 0)] = Complex64::new(acc, 0.0);
                }
                accumulate(grads, nodes, *positions, gq);
            }
        }
    }
}

fn parents(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf | Op::Const => vec![],
        Op::MatMul(a, b)
        | Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Hadamard(a, b)
        | Op::ScaleBy(a, b)
        | Op::DivReal(a, b)
        | Op::Solve(a, b) => vec![*a, *b],
        Op::Adjoint(a)
        | Op::Transpose(a)
        | Op::Conj(a)
        | Op::Scale(a, _)
        | Op::Abs2(a)
        | Op::Sqrt(a)
        | Op::Ln(a, _)
        | Op::Cos(a)
        | Op::Sin(a)
        | Op::Asin(a)
        | Op::Sum(a)
        | Op::Columns(a, _)
        | Op::Pick(a, _, _)
        | Op::Softmax(a)
        | Op::CrossEntropyRows(a, _)
        | Op::Norm(a) => vec![*a],
        Op::SteeringPhase { positions, .. } => vec![*positions],
    }
}

fn accumulate(grads: &mut [Option<CMat>], nodes: &[Node], v: Var, g: CMat) {
    let node = &nodes[v.0];
    if !node.needs_grad {
        return;
    }
    let g = if node.real { real_part(&g) } else { g };
    match &mut grads[v.0] {
        Some(acc) => *acc += g,
        slot @ None => *slot = Some(g),
    }
}

/// Softmax over all entries of a real matrix (max-shifted).
pub fn softmax_values(m: &CMat) -> CMat {
    let max = m.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let e = m.map(|z| (z.re - max).exp());
    let total: f64 = e.iter().sum();
    e.map(|x| Complex64::new(x / total, 0.0))
}
