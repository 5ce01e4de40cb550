//! Feedforward latent network `phi(s) = W_L psi(... psi(W_1 s + b_1) ...) + b_L`,
//! its exact Jacobian, and the Sobolev loss with closed-form gradients.
//!
//! Samples are processed in blocks: a batch of `B` inputs is an `r_in x B`
//! matrix and the per-sample Jacobians of every layer are stored side by side
//! in a `width x (r_in * B)` matrix, so each layer costs a handful of matrix
//! products.

use nalgebra::{DMatrix, DVector};

use super::activation::Activation;
use crate::error::{Error, Result};
use crate::rng::NormalStream;

#[derive(Debug, Clone, PartialEq)]
pub struct LatentNetwork {
    activation: Activation,
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
}

/// Parameter-shaped gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl Gradient {
    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.weights, &self.biases)
    }
}

fn flatten(weights: &[DMatrix<f64>], biases: &[DVector<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    for (w, b) in weights.iter().zip(biases) {
        out.extend(w.transpose().iter());
        out.extend(b.iter());
    }
    out
}

fn layer_shapes(input_dim: usize, output_dim: usize, width: usize, depth: usize) -> Vec<(usize, usize)> {
    (0..depth)
        .map(|l| {
            let rows = if l + 1 == depth { output_dim } else { width };
            let cols = if l == 0 { input_dim } else { width };
            (rows, cols)
        })
        .collect()
}

/// Encoded training tuples `(s_k, q_k, G_k)` with per-sample loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentData {
    /// `r_in x N` latent inputs.
    pub s: DMatrix<f64>,
    /// `r_out x N` latent outputs.
    pub q: DMatrix<f64>,
    /// `r_out x (r_in N)` reduced Jacobians, sample `k` in columns `k r_in ..`.
    pub g: DMatrix<f64>,
    pub a0: Vec<f64>,
    pub a1: Vec<f64>,
}

impl LatentData {
    /// Unit loss weights.
    pub fn new(s: DMatrix<f64>, q: DMatrix<f64>, g: DMatrix<f64>) -> Result<Self> {
        let n = s.ncols();
        if q.ncols() != n || g.nrows() != q.nrows() || g.ncols() != s.nrows() * n {
            return Err(Error::dims("latent inputs, outputs and Jacobians disagree in shape"));
        }
        Ok(Self { s, q, g, a0: vec![1.0; n], a1: vec![1.0; n] })
    }

    pub fn len(&self) -> usize {
        self.s.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.s.ncols() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn jacobian(&self, k: usize) -> DMatrix<f64> {
        let r = self.input_dim();
        self.g.columns(k * r, r).into_owned()
    }

    pub fn with_weights(mut self, a0: Vec<f64>, a1: Vec<f64>) -> Result<Self> {
        if a0.len() != self.len() || a1.len() != self.len() {
            return Err(Error::dims("one loss weight per sample is required"));
        }
        if a0.iter().chain(&a1).any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::invalid("loss weights must be positive"));
        }
        self.a0 = a0;
        self.a1 = a1;
        Ok(self)
    }

    /// The samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> LatentData {
        let r = self.input_dim();
        let mut g = DMatrix::zeros(self.output_dim(), r * indices.len());
        for (j, &k) in indices.iter().enumerate() {
            g.columns_mut(j * r, r).copy_from(&self.g.columns(k * r, r));
        }
        LatentData {
            s: self.s.select_columns(indices),
            q: self.q.select_columns(indices),
            g,
            a0: indices.iter().map(|&k| self.a0[k]).collect(),
            a1: indices.iter().map(|&k| self.a1[k]).collect(),
        }
    }
}

/// Intermediate quantities of a batched forward pass.
struct Tape {
    /// `a_0 = s, a_1, ..., a_{L-1}`.
    acts: Vec<DMatrix<f64>>,
    /// `psi'(z_l)`, `psi''(z_l)` for the hidden layers.
    d1: Vec<DMatrix<f64>>,
    d2: Vec<DMatrix<f64>>,
    /// Pre-activation Jacobians `J_l` of the hidden layers (block layout).
    jacs: Vec<DMatrix<f64>>,
    /// `P_l = diag(psi'(z_l)) J_l`.
    scaled: Vec<DMatrix<f64>>,
    out: DMatrix<f64>,
    out_jac: DMatrix<f64>,
}

/// Multiplies row `i` of block `k` (columns `k r .. (k + 1) r`) by `d[(i, k)]`.
fn scale_blocks(m: &DMatrix<f64>, d: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let mut out = m.clone();
    for k in 0..d.ncols() {
        let dk = d.column(k);
        for c in 0..r {
            let mut col = out.column_mut(k * r + c);
            col.component_mul_assign(&dk);
        }
    }
    out
}

/// `out[(i, k)] = sum_c a[(i, k r + c)] b[(i, k r + c)]`.
fn block_row_dots(a: &DMatrix<f64>, b: &DMatrix<f64>, r: usize, batch: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), batch);
    for k in 0..batch {
        let mut acc = out.column_mut(k);
        for c in 0..r {
            acc += a.column(k * r + c).component_mul(&b.column(k * r + c));
        }
    }
    out
}

/// `sum_k block_k` of a block-layout matrix.
fn sum_blocks(m: &DMatrix<f64>, r: usize, batch: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), r);
    for k in 0..batch {
        out += m.columns(k * r, r);
    }
    out
}

impl LatentNetwork {
    /// Glorot-uniform weights (`U(-l, l)`, `l = sqrt(6 / (fan_in + fan_out))`) and zero biases.
    pub fn glorot(
        input_dim: usize,
        output_dim: usize,
        width: usize,
        depth: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        Self::check_shape(input_dim, output_dim, width, depth)?;
        let mut rng = NormalStream::new(seed, 0);
        let mut weights = Vec::with_capacity(depth);
        let mut biases = Vec::with_capacity(depth);
        for (rows, cols) in layer_shapes(input_dim, output_dim, width, depth) {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            // row-major fill so the draw order does not depend on storage layout
            let mut w = DMatrix::zeros(rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    w[(i, j)] = limit * (2.0 * rng.next_uniform() - 1.0);
                }
            }
            weights.push(w);
            biases.push(DVector::zeros(rows));
        }
        Ok(Self { activation, weights, biases })
    }

    pub fn zeros(
        input_dim: usize,
        output_dim: usize,
        width: usize,
        depth: usize,
        activation: Activation,
    ) -> Result<Self> {
        Self::check_shape(input_dim, output_dim, width, depth)?;
        let (weights, biases) = layer_shapes(input_dim, output_dim, width, depth)
            .into_iter()
            .map(|(r, c)| (DMatrix::zeros(r, c), DVector::zeros(r)))
            .unzip();
        Ok(Self { activation, weights, biases })
    }

    pub fn from_parts(activation: Activation, weights: Vec<DMatrix<f64>>, biases: Vec<DVector<f64>>) -> Result<Self> {
        if weights.len() < 2 || weights.len() != biases.len() {
            return Err(Error::invalid("a network needs at least two layers and one bias per layer"));
        }
        for l in 0..weights.len() {
            if biases[l].len() != weights[l].nrows() || (l > 0 && weights[l].ncols() != weights[l - 1].nrows()) {
                return Err(Error::dims(format!("layer {l} has inconsistent shapes")));
            }
        }
        if weights.iter().any(|w| w.iter().any(|v| !v.is_finite()))
            || biases.iter().any(|b| b.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::invalid("non-finite network parameter"));
        }
        Ok(Self { activation, weights, biases })
    }

    fn check_shape(input_dim: usize, output_dim: usize, width: usize, depth: usize) -> Result<()> {
        if depth < 2 || input_dim == 0 || output_dim == 0 || width == 0 {
            return Err(Error::invalid("a network needs depth >= 2 and positive widths"));
        }
        Ok(())
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn width(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights[self.depth() - 1].nrows()
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[DVector<f64>] {
        &self.biases
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().zip(&self.biases).map(|(w, b)| w.len() + b.len()).sum()
    }

    /// Largest relative error of directional loss derivatives against central
    /// differences, over `directions` random unit directions in parameter space.
    pub fn gradient_check(&self, data: &LatentData, directions: usize, seed: u64) -> Result<f64> {
        let (_, grad) = self.loss_and_gradient(data)?;
        let g = grad.flat();
        let theta = self.params_flat();
        let scale = theta.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let h = 1e-5 * scale;
        let mut rng = NormalStream::new(seed, 2);
        let mut probe = self.clone();
        let mut worst: f64 = 0.0;
        for _ in 0..directions {
            let v = rng.normal_vector(theta.len());
            let v = &v / v.norm();
            let analytic: f64 = g.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            let shifted = |sign: f64, net: &mut LatentNetwork| -> Result<f64> {
                let p: Vec<f64> = theta.iter().zip(v.iter()).map(|(t, d)| t + sign * h * d).collect();
                net.set_params_flat(&p)?;
                net.loss(data)
            };
            let fd = (shifted(1.0, &mut probe)? - shifted(-1.0, &mut probe)?) / (2.0 * h);
            worst = worst.max((fd - analytic).abs() / analytic.abs().max(fd.abs()).max(f64::MIN_POSITIVE));
        }
        Ok(worst)
    }

    /// Parameters flattened layer by layer: `W_l` row-major, then `b_l`.
    pub fn params_flat(&self) -> Vec<f64> {
        flatten(&self.weights, &self.biases)
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::dims(format!("{} parameters for a network with {}", flat.len(), self.param_count())));
        }
        let mut pos = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (rows, cols) = w.shape();
            *w = DMatrix::from_row_slice(rows, cols, &flat[pos..pos + rows * cols]);
            pos += rows * cols;
            b.copy_from_slice(&flat[pos..pos + rows]);
            pos += rows;
        }
        Ok(())
    }

    pub(crate) fn apply_update(&mut self, step: impl Fn(usize, f64) -> f64) {
        let mut pos = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (rows, cols) = w.shape();
            for i in 0..rows {
                for j in 0..cols {
                    w[(i, j)] -= step(pos, w[(i, j)]);
                    pos += 1;
                }
            }
            for v in b.iter_mut() {
                *v -= step(pos, *v);
                pos += 1;
            }
        }
    }

    fn check_input(&self, s: &DVector<f64>) -> Result<()> {
        if s.len() != self.input_dim() {
            return Err(Error::dims(format!(
                "input of length {} for a network with {} inputs",
                s.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, s: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(s)?;
        let mut a = s.clone();
        for l in 0..self.depth() {
            let z = &self.weights[l] * &a + &self.biases[l];
            a = if l + 1 == self.depth() { z } else { z.map(|t| self.activation.eval(t)) };
        }
        Ok(a)
    }

    /// Exact Jacobian `W_L D_{L-1} W_{L-1} ... D_1 W_1` at `s`.
    pub fn jacobian(&self, s: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward_with_jacobian(s)?.1)
    }

    pub fn forward_with_jacobian(&self, s: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check_input(s)?;
        let tape = self.record(&DMatrix::from_column_slice(s.len(), 1, s.as_slice()));
        Ok((tape.out.column(0).into_owned(), tape.out_jac))
    }

    /// Values (`r_out x B`) and block Jacobians (`r_out x (r_in B)`) for a batch.
    pub fn forward_batch(&self, s: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if s.nrows() != self.input_dim() {
            return Err(Error::dims("batch rows do not match the network input"));
        }
        let tape = self.record(s);
        Ok((tape.out, tape.out_jac))
    }

    fn record(&self, s: &DMatrix<f64>) -> Tape {
        let depth = self.depth();
        let r = self.input_dim();
        let batch = s.ncols();
        let mut tape = Tape {
            acts: vec![s.clone()],
            d1: Vec::with_capacity(depth - 1),
            d2: Vec::with_capacity(depth - 1),
            jacs: Vec::with_capacity(depth - 1),
            scaled: Vec::with_capacity(depth - 1),
            out: DMatrix::zeros(0, 0),
            out_jac: DMatrix::zeros(0, 0),
        };
        for l in 0..depth {
            let w = &self.weights[l];
            let mut z = w * &tape.acts[l];
            for mut col in z.column_iter_mut() {
                col += &self.biases[l];
            }
            let jac = if l == 0 {
                let mut j = DMatrix::zeros(w.nrows(), r * batch);
                for k in 0..batch {
                    j.columns_mut(k * r, r).copy_from(w);
                }
                j
            } else {
                w * &tape.scaled[l - 1]
            };
            if l + 1 == depth {
                tape.out = z;
                tape.out_jac = jac;
            } else {
                let mut a = z.clone();
                let mut d1 = z.clone();
                let mut d2 = z;
                for ((av, v1), v2) in a.iter_mut().zip(d1.iter_mut()).zip(d2.iter_mut()) {
                    let d = self.activation.derivatives(*av);
                    *av = d[0];
                    *v1 = d[1];
                    *v2 = d[2];
                }
                tape.scaled.push(scale_blocks(&jac, &d1, r));
                tape.jacs.push(jac);
                tape.acts.push(a);
                tape.d1.push(d1);
                tape.d2.push(d2);
            }
        }
        tape
    }

    fn check_data(&self, data: &LatentData) -> Result<()> {
        if data.input_dim() != self.input_dim() || data.output_dim() != self.output_dim() {
            return Err(Error::dims("latent data does not match the network dimensions"));
        }
        Ok(())
    }

    /// `(1/B) sum_k ||q_k - phi(s_k)||^2 / a0_k` and `(1/B) sum_k ||G_k - D phi(s_k)||_F^2 / a1_k`.
    pub fn loss_terms(&self, data: &LatentData) -> Result<(f64, f64)> {
        self.check_data(data)?;
        if data.is_empty() {
            return Ok((0.0, 0.0));
        }
        let (out, jac) = self.forward_batch(&data.s)?;
        Ok(residual_terms(&out, &jac, data))
    }

    /// Sobolev loss: sum of the two terms of [`loss_terms`](Self::loss_terms).
    pub fn loss(&self, data: &LatentData) -> Result<f64> {
        let (a, b) = self.loss_terms(data)?;
        Ok(a + b)
    }

    /// Loss and exact gradient for `value_scale * value_term + jacobian_scale * jacobian_term`.
    pub fn loss_and_gradient_weighted(
        &self,
        data: &LatentData,
        value_scale: f64,
        jacobian_scale: f64,
    ) -> Result<(f64, Gradient)> {
        self.check_data(data)?;
        let depth = self.depth();
        let mut grad = Gradient {
            weights: self.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            biases: self.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        };
        let batch = data.len();
        if batch == 0 {
            return Ok((0.0, grad));
        }
        let r = self.input_dim();
        let tape = self.record(&data.s);
        let (vt, jt) = residual_terms(&tape.out, &tape.out_jac, data);
        let loss = value_scale * vt + jacobian_scale * jt;

        let inv_b = 1.0 / batch as f64;
        let mut gz = &tape.out - &data.q;
        let mut gj = &tape.out_jac - &data.g;
        for k in 0..batch {
            gz.column_mut(k).scale_mut(2.0 * value_scale * inv_b / data.a0[k]);
            gj.columns_mut(k * r, r).scale_mut(2.0 * jacobian_scale * inv_b / data.a1[k]);
        }
        for l in (0..depth).rev() {
            let w = &self.weights[l];
            grad.weights[l] = &gz * tape.acts[l].transpose();
            if l == 0 {
                grad.weights[l] += sum_blocks(&gj, r, batch);
            } else {
                grad.weights[l] += &gj * tape.scaled[l - 1].transpose();
            }
            grad.biases[l] = gz.column_sum();
            if l > 0 {
                let wt = w.transpose();
                let ga = &wt * &gz;
                let gp = &wt * &gj;
                let rowdot = block_row_dots(&gp, &tape.jacs[l - 1], r, batch);
                gz = ga.component_mul(&tape.d1[l - 1]) + rowdot.component_mul(&tape.d2[l - 1]);
                gj = scale_blocks(&gp, &tape.d1[l - 1], r);
            }
        }
        Ok((loss, grad))
    }

    pub fn loss_and_gradient(&self, data: &LatentData) -> Result<(f64, Gradient)> {
        self.loss_and_gradient_weighted(data, 1.0, 1.0)
    }
}

fn residual_terms(out: &DMatrix<f64>, jac: &DMatrix<f64>, data: &LatentData) -> (f64, f64) {
    let r = data.input_dim();
    let batch = data.len();
    let mut value = 0.0;
    let mut derivative = 0.0;
    for k in 0..batch {
        value += (out.column(k) - data.q.column(k)).norm_squared() / data.a0[k];
        derivative += (jac.columns(k * r, r) - data.g.columns(k * r, r)).norm_squared() / data.a1[k];
    }
    (value / batch as f64, derivative / batch as f64)
}
