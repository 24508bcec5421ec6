//! One-dimensional convolutional regression network.
//!
//! The network reads a summary curve through a stack of valid convolutions
//! (each followed by ReLU and optional non-overlapping max pooling), flattens
//! the last feature maps channel by channel, appends the point count, and
//! finishes with dense ReLU layers and a linear output layer.
//!
//! All weights live in one flat parameter vector so that the optimizer and the
//! file format see a single slice. Convolution kernels are stored as
//! `[out_channel][in_channel][tap]`, dense weights as `[output][input]`, and
//! each layer's bias follows its weights.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods whenever std is linked
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::{Error, Result};

/// Below this a standard deviation is treated as zero.
pub const SD_FLOOR: f64 = 1e-12;

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

// ---------------------------------------------------------------------------
// Single-layer operations
// ---------------------------------------------------------------------------

fn conv_into(
    x: &[f64],
    in_ch: usize,
    in_len: usize,
    w: &[f64],
    b: &[f64],
    kernel: usize,
    z: &mut [f64],
) {
    let out_len = in_len + 1 - kernel;
    for (o, zo) in z.chunks_exact_mut(out_len).enumerate() {
        zo.fill(b[o]);
        for i in 0..in_ch {
            let xi = &x[i * in_len..(i + 1) * in_len];
            let wi = &w[(o * in_ch + i) * kernel..(o * in_ch + i + 1) * kernel];
            for (l, &a) in wi.iter().enumerate() {
                axpy(a, &xi[l..l + out_len], zo);
            }
        }
    }
}

/// Valid 1-D convolution of `in_channels` stacked sequences (channel-major)
/// with kernels `weights[out][in][tap]`. Returns pre-activation outputs,
/// `bias.len()` sequences of length `len - kernel + 1`.
pub fn conv1d(
    x: &[f64],
    in_channels: usize,
    weights: &[f64],
    bias: &[f64],
    kernel: usize,
) -> Result<Vec<f64>> {
    if in_channels == 0 || x.len() % in_channels != 0 {
        return Err(Error::ShapeMismatch {
            expected: in_channels,
            got: x.len(),
        });
    }
    let in_len = x.len() / in_channels;
    if kernel == 0 || in_len < kernel {
        return Err(Error::InvalidArchitecture(format!(
            "sequence length {in_len} shorter than kernel {kernel}"
        )));
    }
    let expected = bias.len() * in_channels * kernel;
    if weights.len() != expected {
        return Err(Error::ShapeMismatch {
            expected,
            got: weights.len(),
        });
    }
    let out_len = in_len + 1 - kernel;
    let mut z = vec![0.0; bias.len() * out_len];
    conv_into(x, in_channels, in_len, weights, bias, kernel, &mut z);
    Ok(z)
}

pub fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn pool_into(x: &[f64], channels: usize, size: usize, out: &mut [f64], arg: &mut [u32]) {
    let len = x.len() / channels;
    let pooled = len / size;
    for c in 0..channels {
        let xc = &x[c * len..(c + 1) * len];
        for j in 0..pooled {
            let start = j * size;
            let mut best = start;
            for t in start + 1..start + size {
                if xc[t] > xc[best] {
                    best = t;
                }
            }
            out[c * pooled + j] = xc[best];
            arg[c * pooled + j] = (c * len + best) as u32;
        }
    }
}

/// Non-overlapping max pooling of each channel; a trailing remainder shorter
/// than `size` is dropped.
pub fn maxpool1d(x: &[f64], channels: usize, size: usize) -> Vec<f64> {
    assert!(channels > 0 && size > 0 && x.len() % channels == 0);
    let pooled = x.len() / channels / size;
    let mut out = vec![0.0; channels * pooled];
    let mut arg = vec![0; channels * pooled];
    pool_into(x, channels, size, &mut out, &mut arg);
    out
}

fn dense_into(x: &[f64], w: &[f64], b: &[f64], y: &mut [f64]) {
    let n_in = x.len();
    for (o, yo) in y.iter_mut().enumerate() {
        *yo = b[o] + dot(&w[o * n_in..(o + 1) * n_in], x);
    }
}

/// Fully connected layer `y = b + W x` (pre-activation), `W` row-major with
/// one row per output.
pub fn dense(x: &[f64], weights: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != x.len() * bias.len() {
        return Err(Error::ShapeMismatch {
            expected: x.len() * bias.len(),
            got: weights.len(),
        });
    }
    let mut y = vec![0.0; bias.len()];
    dense_into(x, weights, bias, &mut y);
    Ok(y)
}

// ---------------------------------------------------------------------------
// Architecture
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    /// Max-pool size applied after the activation; 1 means no pooling.
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_len: usize,
    pub conv: Vec<ConvSpec>,
    pub dense: Vec<usize>,
    pub outputs: usize,
}

impl Architecture {
    /// Three convolutions with 64 filters of width 7, pooling by 5 after the
    /// first two, then dense layers of 64 and 32 units.
    pub fn standard(input_len: usize, outputs: usize) -> Self {
        let c = |pool| ConvSpec {
            filters: 64,
            kernel: 7,
            pool,
        };
        Self {
            input_len,
            conv: vec![c(5), c(5), c(1)],
            dense: vec![64, 32],
            outputs,
        }
    }

    /// Lengths after every stage: the input, each convolution and each
    /// pooling, then the flattened features, the features plus the count, each
    /// hidden layer, and the output.
    pub fn shape_trace(&self) -> Result<Vec<usize>> {
        if self.outputs == 0 {
            return Err(Error::InvalidArchitecture("no outputs".into()));
        }
        let mut trace = vec![self.input_len];
        let mut len = self.input_len;
        let mut channels = 1;
        for (i, c) in self.conv.iter().enumerate() {
            if c.filters == 0 || c.kernel == 0 || c.pool == 0 {
                return Err(Error::InvalidArchitecture(format!(
                    "convolution {i} has a zero size"
                )));
            }
            if len < c.kernel {
                return Err(Error::InvalidArchitecture(format!(
                    "convolution {i}: length {len} shorter than kernel {}",
                    c.kernel
                )));
            }
            len = len + 1 - c.kernel;
            trace.push(len);
            if c.pool > 1 {
                len /= c.pool;
                if len == 0 {
                    return Err(Error::InvalidArchitecture(format!(
                        "pooling after convolution {i} leaves nothing"
                    )));
                }
                trace.push(len);
            }
            channels = c.filters;
        }
        let flat = channels * len;
        trace.push(flat);
        trace.push(flat + 1);
        for (i, &d) in self.dense.iter().enumerate() {
            if d == 0 {
                return Err(Error::InvalidArchitecture(format!(
                    "dense layer {i} has no units"
                )));
            }
            trace.push(d);
        }
        trace.push(self.outputs);
        Ok(trace)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ConvLayer {
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    in_len: usize,
    out_len: usize,
    pool: usize,
    pooled_len: usize,
    w_off: usize,
    b_off: usize,
}

impl ConvLayer {
    fn fan_in(&self) -> usize {
        self.in_ch * self.kernel
    }
    fn fan_out(&self) -> usize {
        self.out_ch * self.kernel
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct DenseLayer {
    n_in: usize,
    n_out: usize,
    w_off: usize,
    b_off: usize,
    relu: bool,
}

fn compile(arch: &Architecture) -> Result<(Vec<ConvLayer>, Vec<DenseLayer>, usize)> {
    arch.shape_trace()?;
    let mut off = 0;
    let mut convs = Vec::with_capacity(arch.conv.len());
    let (mut len, mut ch) = (arch.input_len, 1);
    for c in &arch.conv {
        let out_len = len + 1 - c.kernel;
        let pooled_len = if c.pool > 1 { out_len / c.pool } else { out_len };
        let w_off = off;
        off += c.filters * ch * c.kernel;
        let b_off = off;
        off += c.filters;
        convs.push(ConvLayer {
            in_ch: ch,
            out_ch: c.filters,
            kernel: c.kernel,
            in_len: len,
            out_len,
            pool: c.pool,
            pooled_len,
            w_off,
            b_off,
        });
        len = pooled_len;
        ch = c.filters;
    }
    let mut n_in = ch * len + 1;
    let mut denses = Vec::new();
    let widths = arch.dense.iter().copied().chain(core::iter::once(arch.outputs));
    let n_dense = arch.dense.len() + 1;
    for (i, n_out) in widths.enumerate() {
        let w_off = off;
        off += n_in * n_out;
        let b_off = off;
        off += n_out;
        denses.push(DenseLayer {
            n_in,
            n_out,
            w_off,
            b_off,
            relu: i + 1 < n_dense,
        });
        n_in = n_out;
    }
    Ok((convs, denses, off))
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Network {
    arch: Architecture,
    convs: Vec<ConvLayer>,
    denses: Vec<DenseLayer>,
    params: Vec<f64>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.params == other.params
    }
}

/// Activations kept from a forward pass, plus gradient scratch space.
pub struct Tape {
    conv_act: Vec<Vec<f64>>,
    pooled: Vec<Vec<f64>>,
    argmax: Vec<Vec<u32>>,
    dense_in: Vec<f64>,
    dense_act: Vec<Vec<f64>>,
    d_conv: Vec<Vec<f64>>,
    d_pooled: Vec<Vec<f64>>,
    d_dense: Vec<Vec<f64>>,
    d_dense_in: Vec<f64>,
}

impl Network {
    /// Network with every weight and bias zero.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        let (convs, denses, n) = compile(&arch)?;
        Ok(Self {
            arch,
            convs,
            denses,
            params: vec![0.0; n],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        for l in net.convs.clone() {
            let a = (6.0 / (l.fan_in() + l.fan_out()) as f64).sqrt();
            for w in &mut net.params[l.w_off..l.b_off] {
                *w = rng.random_range(-a..a);
            }
        }
        for l in net.denses.clone() {
            let a = (6.0 / (l.n_in + l.n_out) as f64).sqrt();
            for w in &mut net.params[l.w_off..l.b_off] {
                *w = rng.random_range(-a..a);
            }
        }
        Ok(net)
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        if params.len() != net.params.len() {
            return Err(Error::ShapeMismatch {
                expected: net.params.len(),
                got: params.len(),
            });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite network weight".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_len
    }

    pub fn outputs(&self) -> usize {
        self.arch.outputs
    }

    pub fn tape(&self) -> Tape {
        let conv_act: Vec<Vec<f64>> = self
            .convs
            .iter()
            .map(|l| vec![0.0; l.out_ch * l.out_len])
            .collect();
        let pooled: Vec<Vec<f64>> = self
            .convs
            .iter()
            .map(|l| vec![0.0; l.out_ch * l.pooled_len])
            .collect();
        let argmax = pooled.iter().map(|p| vec![0; p.len()]).collect();
        let dense_act: Vec<Vec<f64>> = self.denses.iter().map(|l| vec![0.0; l.n_out]).collect();
        let n_in = self.denses[0].n_in;
        Tape {
            d_conv: conv_act.clone(),
            d_pooled: pooled.clone(),
            d_dense: dense_act.clone(),
            d_dense_in: vec![0.0; n_in],
            conv_act,
            pooled,
            argmax,
            dense_in: vec![0.0; n_in],
            dense_act,
        }
    }

    fn check_input(&self, curve: &[f64]) -> Result<()> {
        if curve.len() != self.arch.input_len {
            return Err(Error::ShapeMismatch {
                expected: self.arch.input_len,
                got: curve.len(),
            });
        }
        Ok(())
    }

    /// Forward pass recording activations in `tape`; returns the outputs.
    pub fn forward_with<'t>(&self, curve: &[f64], count: f64, tape: &'t mut Tape) -> Result<&'t [f64]> {
        self.check_input(curve)?;
        let p = &self.params;
        for (li, l) in self.convs.iter().enumerate() {
            let (before, after) = tape.pooled.split_at_mut(li);
            let x: &[f64] = if li == 0 { curve } else { &before[li - 1] };
            let act = &mut tape.conv_act[li];
            conv_into(
                x,
                l.in_ch,
                l.in_len,
                &p[l.w_off..l.b_off],
                &p[l.b_off..l.b_off + l.out_ch],
                l.kernel,
                act,
            );
            relu(act);
            let out = &mut after[0];
            if l.pool > 1 {
                pool_into(act, l.out_ch, l.pool, out, &mut tape.argmax[li]);
            } else {
                out.copy_from_slice(act);
            }
        }
        let flat = tape.pooled.last().map(|v| v.as_slice()).unwrap_or(curve);
        let n_flat = flat.len();
        tape.dense_in[..n_flat].copy_from_slice(flat);
        tape.dense_in[n_flat] = count;
        for (li, l) in self.denses.iter().enumerate() {
            let (before, after) = tape.dense_act.split_at_mut(li);
            let x: &[f64] = if li == 0 { &tape.dense_in } else { &before[li - 1] };
            let y = &mut after[0];
            dense_into(x, &p[l.w_off..l.b_off], &p[l.b_off..l.b_off + l.n_out], y);
            if l.relu {
                relu(y);
            }
        }
        Ok(tape.dense_act.last().expect("output layer"))
    }

    pub fn predict(&self, curve: &[f64], count: f64) -> Result<Vec<f64>> {
        let mut tape = self.tape();
        Ok(self.forward_with(curve, count, &mut tape)?.to_vec())
    }

    /// Accumulate into `grad` the gradient of `Σ d_out · output` for the
    /// input most recently passed through `tape`.
    pub fn backward(&self, curve: &[f64], tape: &mut Tape, d_out: &[f64], grad: &mut [f64]) {
        let p = &self.params;
        let nd = self.denses.len();
        tape.d_dense[nd - 1].copy_from_slice(d_out);
        for li in (0..nd).rev() {
            let l = self.denses[li];
            let (d_before, d_here) = tape.d_dense.split_at_mut(li);
            let dy = &mut d_here[0];
            if l.relu {
                for (d, &a) in dy.iter_mut().zip(&tape.dense_act[li]) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let x: &[f64] = if li == 0 {
                &tape.dense_in
            } else {
                &tape.dense_act[li - 1]
            };
            let dx: &mut [f64] = if li == 0 {
                &mut tape.d_dense_in
            } else {
                &mut d_before[li - 1]
            };
            dx.fill(0.0);
            let w = &p[l.w_off..l.b_off];
            for (o, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                grad[l.b_off + o] += g;
                axpy(g, x, &mut grad[l.w_off + o * l.n_in..l.w_off + (o + 1) * l.n_in]);
                axpy(g, &w[o * l.n_in..(o + 1) * l.n_in], dx);
            }
        }
        let nc = self.convs.len();
        if nc == 0 {
            return;
        }
        let n_flat = tape.pooled[nc - 1].len();
        tape.d_pooled[nc - 1].copy_from_slice(&tape.d_dense_in[..n_flat]);
        for li in (0..nc).rev() {
            let l = self.convs[li];
            let dz = &mut tape.d_conv[li];
            if l.pool > 1 {
                dz.fill(0.0);
                for (&g, &a) in tape.d_pooled[li].iter().zip(&tape.argmax[li]) {
                    dz[a as usize] += g;
                }
            } else {
                dz.copy_from_slice(&tape.d_pooled[li]);
            }
            for (d, &a) in dz.iter_mut().zip(&tape.conv_act[li]) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            let (d_before, _) = tape.d_pooled.split_at_mut(li);
            let x: &[f64] = if li == 0 { curve } else { &tape.pooled[li - 1] };
            let mut dx = if li == 0 {
                None
            } else {
                let d = &mut d_before[li - 1];
                d.fill(0.0);
                Some(d)
            };
            let w = &p[l.w_off..l.b_off];
            for o in 0..l.out_ch {
                let dzo = &dz[o * l.out_len..(o + 1) * l.out_len];
                let s: f64 = dzo.iter().sum();
                if s == 0.0 && dzo.iter().all(|&v| v == 0.0) {
                    continue;
                }
                grad[l.b_off + o] += s;
                for i in 0..l.in_ch {
                    let xi = &x[i * l.in_len..(i + 1) * l.in_len];
                    let base = (o * l.in_ch + i) * l.kernel;
                    for k in 0..l.kernel {
                        grad[l.w_off + base + k] += dot(dzo, &xi[k..k + l.out_len]);
                    }
                    if let Some(dx) = dx.as_deref_mut() {
                        let dxi = &mut dx[i * l.in_len..(i + 1) * l.in_len];
                        for k in 0..l.kernel {
                            axpy(w[base + k], dzo, &mut dxi[k..k + l.out_len]);
                        }
                    }
                }
            }
        }
    }

    /// Mean squared error over a set of rows and all outputs, and (if
    /// `grad` is given) its gradient, which overwrites `grad`.
    pub fn loss_and_gradient(
        &self,
        data: &Examples,
        rows: &[usize],
        mut grad: Option<&mut [f64]>,
        tape: &mut Tape,
    ) -> Result<f64> {
        self.check_examples(data)?;
        if let Some(g) = grad.as_deref_mut() {
            if g.len() != self.params.len() {
                return Err(Error::ShapeMismatch {
                    expected: self.params.len(),
                    got: g.len(),
                });
            }
            g.fill(0.0);
        }
        if rows.is_empty() {
            return Ok(0.0);
        }
        let k = self.arch.outputs;
        let scale = 1.0 / (rows.len() * k) as f64;
        let mut loss = 0.0;
        let mut d_out = vec![0.0; k];
        for &i in rows {
            let curve = data.curve(i);
            let y = self.forward_with(curve, data.count(i), tape)?;
            for ((d, &yj), &tj) in d_out.iter_mut().zip(y).zip(data.target(i)) {
                let e = yj - tj;
                loss += e * e;
                *d = 2.0 * e * scale;
            }
            if let Some(g) = grad.as_deref_mut() {
                self.backward(curve, tape, &d_out, g);
            }
        }
        Ok(loss * scale)
    }

    fn check_examples(&self, data: &Examples) -> Result<()> {
        if data.curve_len != self.arch.input_len {
            return Err(Error::ShapeMismatch {
                expected: self.arch.input_len,
                got: data.curve_len,
            });
        }
        if data.outputs != self.arch.outputs {
            return Err(Error::ShapeMismatch {
                expected: self.arch.outputs,
                got: data.outputs,
            });
        }
        Ok(())
    }

    /// Predictions for every row, row-major.
    pub fn predict_all(&self, data: &Examples) -> Result<Vec<f64>> {
        self.check_input(&vec![0.0; data.curve_len])?;
        let mut tape = self.tape();
        let mut out = Vec::with_capacity(data.len() * self.arch.outputs);
        for i in 0..data.len() {
            out.extend_from_slice(self.forward_with(data.curve(i), data.count(i), &mut tape)?);
        }
        Ok(out)
    }

    pub fn mse(&self, data: &Examples) -> Result<f64> {
        let rows: Vec<usize> = (0..data.len()).collect();
        let mut tape = self.tape();
        self.loss_and_gradient(data, &rows, None, &mut tape)
    }
}

pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch {
            expected: target.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(s / pred.len() as f64)
}

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

/// Rows of (curve, count, target vector) stored contiguously.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Examples {
    curve_len: usize,
    outputs: usize,
    curves: Vec<f64>,
    counts: Vec<f64>,
    targets: Vec<f64>,
}

impl Examples {
    pub fn new(curve_len: usize, outputs: usize) -> Self {
        Self {
            curve_len,
            outputs,
            ..Self::default()
        }
    }

    pub fn from_parts(
        curve_len: usize,
        outputs: usize,
        curves: Vec<f64>,
        counts: Vec<f64>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        let n = counts.len();
        if curves.len() != n * curve_len {
            return Err(Error::ShapeMismatch {
                expected: n * curve_len,
                got: curves.len(),
            });
        }
        if targets.len() != n * outputs {
            return Err(Error::ShapeMismatch {
                expected: n * outputs,
                got: targets.len(),
            });
        }
        Ok(Self {
            curve_len,
            outputs,
            curves,
            counts,
            targets,
        })
    }

    pub fn push(&mut self, curve: &[f64], count: f64, target: &[f64]) -> Result<()> {
        if curve.len() != self.curve_len {
            return Err(Error::ShapeMismatch {
                expected: self.curve_len,
                got: curve.len(),
            });
        }
        if target.len() != self.outputs {
            return Err(Error::ShapeMismatch {
                expected: self.outputs,
                got: target.len(),
            });
        }
        self.curves.extend_from_slice(curve);
        self.counts.push(count);
        self.targets.extend_from_slice(target);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn curve_len(&self) -> usize {
        self.curve_len
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn curve(&self, i: usize) -> &[f64] {
        &self.curves[i * self.curve_len..(i + 1) * self.curve_len]
    }

    pub fn count(&self, i: usize) -> f64 {
        self.counts[i]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.outputs..(i + 1) * self.outputs]
    }

    pub fn curves(&self) -> &[f64] {
        &self.curves
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            curve_len: self.curve_len,
            outputs: self.outputs,
            curves: self.curves[..n * self.curve_len].to_vec(),
            counts: self.counts[..n].to_vec(),
            targets: self.targets[..n * self.outputs].to_vec(),
        }
    }
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    if n < 2 {
        return (if n == 1 { sum } else { 0.0 }, 0.0);
    }
    let mean = sum / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Centring and scaling constants. The curve uses one mean and standard
/// deviation pooled over all rows and all `r`; the count and each target
/// component get their own. Standard deviations use the `n - 1` divisor.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub curve_mean: f64,
    pub curve_sd: f64,
    pub count_mean: f64,
    pub count_sd: f64,
    pub theta_mean: Vec<f64>,
    pub theta_sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &Examples) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "standardizer needs at least 2 rows, got {}",
                data.len()
            )));
        }
        let (curve_mean, curve_sd) = mean_sd(data.curves.iter().copied());
        if !(curve_sd >= SD_FLOOR) {
            return Err(Error::ZeroVariance(String::from("the summary curve")));
        }
        let (count_mean, mut count_sd) = mean_sd(data.counts.iter().copied());
        if !(count_sd >= SD_FLOOR) {
            log::warn!("point count is constant in the training data; using sd = 1");
            count_sd = 1.0;
        }
        let k = data.outputs;
        let mut theta_mean = Vec::with_capacity(k);
        let mut theta_sd = Vec::with_capacity(k);
        for j in 0..k {
            let (m, s) = mean_sd(data.targets.iter().skip(j).step_by(k).copied());
            if !(s >= SD_FLOOR) {
                return Err(Error::ZeroVariance(format!("parameter {j}")));
            }
            theta_mean.push(m);
            theta_sd.push(s);
        }
        Ok(Self {
            curve_mean,
            curve_sd,
            count_mean,
            count_sd,
            theta_mean,
            theta_sd,
        })
    }

    pub fn outputs(&self) -> usize {
        self.theta_mean.len()
    }

    pub fn standardize_curve(&self, curve: &[f64]) -> Vec<f64> {
        curve
            .iter()
            .map(|v| (v - self.curve_mean) / self.curve_sd)
            .collect()
    }

    pub fn standardize_count(&self, count: f64) -> f64 {
        (count - self.count_mean) / self.count_sd
    }

    pub fn standardize_theta(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(self.theta_mean.iter().zip(&self.theta_sd))
            .map(|(t, (m, s))| (t - m) / s)
            .collect()
    }

    pub fn destandardize_theta(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.theta_mean.iter().zip(&self.theta_sd))
            .map(|(v, (m, s))| m + s * v)
            .collect()
    }

    pub fn standardize(&self, data: &Examples) -> Result<Examples> {
        if data.outputs != self.outputs() {
            return Err(Error::ShapeMismatch {
                expected: self.outputs(),
                got: data.outputs,
            });
        }
        let mut out = data.clone();
        for v in &mut out.curves {
            *v = (*v - self.curve_mean) / self.curve_sd;
        }
        for c in &mut out.counts {
            *c = self.standardize_count(*c);
        }
        let k = self.outputs();
        for (i, t) in out.targets.iter_mut().enumerate() {
            let j = i % k;
            *t = (*t - self.theta_mean[j]) / self.theta_sd[j];
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Optimizer and training
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub const DEFAULT_LR: f64 = 0.001;

    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                expected: self.m.len(),
                got: grad.len().min(params.len()),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 100,
            learning_rate: Adam::DEFAULT_LR,
        }
    }
}

/// Per-epoch losses. `train_mse` is the size-weighted mean of the minibatch
/// losses seen during the epoch; `test_mse` is computed after the epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub train_mse: Vec<f64>,
    pub test_mse: Vec<Option<f64>>,
}

impl History {
    pub fn epochs(&self) -> usize {
        self.train_mse.len()
    }
}

/// Minibatch Adam on standardized data. Rows are reshuffled every epoch and
/// the final short batch is kept.
pub fn train<R: Rng + ?Sized>(
    net: &mut Network,
    data: &Examples,
    test: Option<&Examples>,
    opts: &TrainOptions,
    rng: &mut R,
) -> Result<History> {
    if opts.batch_size == 0 {
        return Err(Error::InvalidParameter("batch size 0".into()));
    }
    if data.is_empty() {
        return Err(Error::InvalidParameter("no training rows".into()));
    }
    net.check_examples(data)?;
    if let Some(t) = test {
        net.check_examples(t)?;
    }
    let mut adam = Adam::new(net.n_params(), opts.learning_rate);
    let mut grad = vec![0.0; net.n_params()];
    let mut tape = net.tape();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = History::default();
    for epoch in 0..opts.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(opts.batch_size) {
            let loss = net.loss_and_gradient(data, batch, Some(&mut grad), &mut tape)?;
            total += loss * batch.len() as f64;
            adam.update(&mut net.params, &grad)?;
        }
        let train_mse = total / data.len() as f64;
        let test_mse = test.map(|t| net.mse(t)).transpose()?;
        log::info!(
            "epoch {}: train mse {train_mse:.5}{}",
            epoch + 1,
            test_mse.map(|v| format!(", test mse {v:.5}")).unwrap_or_default()
        );
        history.train_mse.push(train_mse);
        history.test_mse.push(test_mse);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conv_hand_sum() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let z = conv1d(&x, 1, &[1.0; 7], &[0.0], 7).unwrap();
        assert_eq!(z, vec![28.0, 35.0]);
    }

    #[test]
    fn conv_identity_kernel_truncates() {
        let x = [0.5, 1.0, 2.0, 3.0, 4.0];
        let z = conv1d(&x, 1, &[1.0, 0.0, 0.0], &[0.0], 3).unwrap();
        assert_eq!(z, vec![0.5, 1.0, 2.0]);
        let mut z = conv1d(&x, 1, &[1.0, 0.0, 0.0], &[-100.0], 3).unwrap();
        relu(&mut z);
        assert!(z.iter().all(|&v| v == 0.0));
        assert!(conv1d(&x, 1, &[1.0; 7], &[0.0], 7).is_err());
    }

    #[test]
    fn pooling() {
        assert_eq!(maxpool1d(&[1.0, 5.0, 2.0, 0.0, 3.0], 1, 5), vec![5.0]);
        assert_eq!(maxpool1d(&[2.0; 507], 1, 5), vec![2.0; 101]);
    }

    #[test]
    fn dense_hand_values() {
        let mut y = dense(&[0.3, -0.2], &[0.0; 4], &[1.0, -1.0]).unwrap();
        relu(&mut y);
        assert_eq!(y, vec![1.0, 0.0]);
        assert_eq!(dense(&[1.0, 1.0], &[2.0, 3.0], &[1.0]).unwrap(), vec![6.0]);
    }

    #[test]
    fn dense_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (n_in, n_out) = (13, 5);
        let x: Vec<f64> = (0..n_in).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..n_in * n_out).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n_out).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = dense(&x, &w, &b).unwrap();
        for o in 0..n_out {
            let mut s = b[o];
            for j in 0..n_in {
                s += w[o * n_in + j] * x[j];
            }
            assert!((y[o] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn standard_shape_trace() {
        let a = Architecture::standard(513, 3);
        assert_eq!(
            a.shape_trace().unwrap(),
            vec![513, 507, 101, 95, 19, 13, 832, 833, 64, 32, 3]
        );
        assert!(Architecture::standard(40, 3).shape_trace().is_err());
    }

    #[test]
    fn zero_network_outputs_bias() {
        let mut net = Network::zeros(Architecture::standard(513, 2)).unwrap();
        let last = *net.denses.last().unwrap();
        net.params_mut()[last.b_off] = 0.7;
        net.params_mut()[last.b_off + 1] = -1.5;
        let y = net.predict(&[1.0; 513], 3.0).unwrap();
        assert_eq!(y, vec![0.7, -1.5]);
        assert!(net.predict(&[1.0; 512], 3.0).is_err());
    }

    #[test]
    fn single_dense_gradient_is_hand_derivative() {
        let arch = Architecture {
            input_len: 1,
            conv: vec![],
            dense: vec![],
            outputs: 1,
        };
        // dense input is (curve value, count); weights (w, v), bias b.
        let net = Network::from_params(arch, vec![1.5, 0.0, 0.25]).unwrap();
        let mut data = Examples::new(1, 1);
        data.push(&[2.0], 0.0, &[1.0]).unwrap();
        let mut g = vec![0.0; 3];
        let mut tape = net.tape();
        let loss = net.loss_and_gradient(&data, &[0], Some(&mut g), &mut tape).unwrap();
        let e = 1.5 * 2.0 + 0.25 - 1.0;
        assert!((loss - e * e).abs() < 1e-15);
        assert!((g[0] - 2.0 * e * 2.0).abs() < 1e-15);
        assert!((g[2] - 2.0 * e).abs() < 1e-15);
    }

    #[test]
    fn perfect_prediction_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Network::glorot(Architecture::standard(256, 2), &mut rng).unwrap();
        let curve: Vec<f64> = (0..256).map(|i| (i as f64 * 0.1).sin()).collect();
        let y = net.predict(&curve, 0.4).unwrap();
        let mut data = Examples::new(256, 2);
        data.push(&curve, 0.4, &y).unwrap();
        let mut g = vec![1.0; net.n_params()];
        let mut tape = net.tape();
        let loss = net.loss_and_gradient(&data, &[0], Some(&mut g), &mut tape).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Network::glorot(Architecture::standard(513, 3), &mut rng).unwrap();
        for b in net.params_mut().iter_mut() {
            *b += rng.random_range(-0.05..0.05);
        }
        let mut data = Examples::new(513, 3);
        for _ in 0..3 {
            let curve: Vec<f64> = (0..513).map(|_| rng.random_range(-2.0..2.0)).collect();
            let t: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            data.push(&curve, rng.random_range(-1.0..1.0), &t).unwrap();
        }
        let rows = [0, 1, 2];
        let mut tape = net.tape();
        let mut g = vec![0.0; net.n_params()];
        net.loss_and_gradient(&data, &rows, Some(&mut g), &mut tape).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        while checked < 20 {
            let i = rng.random_range(0..net.n_params());
            if g[i].abs() < 1e-6 {
                continue;
            }
            let orig = net.params[i];
            net.params[i] = orig + h;
            let up = net.loss_and_gradient(&data, &rows, None, &mut tape).unwrap();
            net.params[i] = orig - h;
            let down = net.loss_and_gradient(&data, &rows, None, &mut tape).unwrap();
            net.params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs() / g[i].abs().max(fd.abs()));
            checked += 1;
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn adam_first_step_is_lr_sign() {
        let mut adam = Adam::new(3, 0.001);
        let mut p = [1.0, 1.0, 1.0];
        adam.update(&mut p, &[0.5, -3.0, 0.0]).unwrap();
        assert!((p[0] - (1.0 - 0.001)).abs() < 1e-9);
        assert!((p[1] - (1.0 + 0.001)).abs() < 1e-9);
        assert_eq!(p[2], 1.0);
    }

    #[test]
    fn adam_two_steps_follow_recurrence() {
        let (lr, b1, b2, eps) = (0.01, 0.9, 0.999, 1e-7);
        let grads = [0.3, -1.2];
        let mut adam = Adam::new(1, lr);
        let mut p = [2.0];
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 2.0f64);
        for (t, g) in grads.iter().enumerate() {
            adam.update(&mut p, &[*g]).unwrap();
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32 + 1));
            let vh = v / (1.0 - b2.powi(t as i32 + 1));
            x -= lr * mh / (vh.sqrt() + eps);
            assert!((p[0] - x).abs() < 1e-12);
        }
    }

    fn toy() -> Examples {
        Examples::from_parts(
            2,
            2,
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 9.0],
            vec![10.0, 20.0, 60.0],
            vec![0.1, 5.0, 0.2, 7.0, 0.6, 3.0],
        )
        .unwrap()
    }

    #[test]
    fn pooled_curve_statistics() {
        let s = Standardizer::fit(&toy()).unwrap();
        let flat = [1.0, 2.0, 3.0, 4.0, 5.0, 9.0];
        let mean = flat.iter().sum::<f64>() / 6.0;
        let var = flat.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 5.0;
        assert!((s.curve_mean - mean).abs() < 1e-14);
        assert!((s.curve_sd - var.sqrt()).abs() < 1e-14);
        assert!((s.count_mean - 30.0).abs() < 1e-14);
        assert!((s.theta_mean[1] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn standardize_round_trip() {
        let s = Standardizer::fit(&toy()).unwrap();
        let theta = [0.37, -2.5];
        let back = s.destandardize_theta(&s.standardize_theta(&theta));
        for (a, b) in back.iter().zip(&theta) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_theta_is_an_error_constant_count_is_not() {
        let d = Examples::from_parts(
            1,
            1,
            vec![1.0, 2.0],
            vec![5.0, 6.0],
            vec![3.0, 3.0],
        )
        .unwrap();
        assert!(matches!(Standardizer::fit(&d), Err(Error::ZeroVariance(_))));
        let d = Examples::from_parts(1, 1, vec![1.0, 2.0], vec![5.0, 5.0], vec![3.0, 4.0]).unwrap();
        assert_eq!(Standardizer::fit(&d).unwrap().count_sd, 1.0);
    }

    #[test]
    fn training_learns_a_linear_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let len = 40;
        let noise = 0.05;
        let make = |n: usize, rng: &mut ChaCha8Rng| {
            let mut d = Examples::new(len, 1);
            for _ in 0..n {
                let level: f64 = rng.random_range(-1.0..1.0);
                let count: f64 = rng.random_range(-1.0..1.0);
                let curve: Vec<f64> = (0..len)
                    .map(|i| level * (1.0 + 0.01 * i as f64) + rng.random_range(-0.1..0.1))
                    .collect();
                let mean = curve.iter().sum::<f64>() / len as f64;
                let e: f64 = rng.random_range(-1.0..1.0) * noise * 3f64.sqrt();
                d.push(&curve, count, &[0.8 * mean - 0.5 * count + e]).unwrap();
            }
            d
        };
        let train_set = make(2000, &mut rng);
        let test_set = make(300, &mut rng);
        let arch = Architecture {
            input_len: len,
            conv: vec![ConvSpec {
                filters: 4,
                kernel: 5,
                pool: 2,
            }],
            dense: vec![16],
            outputs: 1,
        };
        let mut net = Network::glorot(arch, &mut rng).unwrap();
        let opts = TrainOptions {
            epochs: 20,
            batch_size: 50,
            learning_rate: 0.005,
        };
        let h = train(&mut net, &train_set, Some(&test_set), &opts, &mut rng).unwrap();
        assert_eq!(h.epochs(), 20);
        assert!(h.train_mse[19] < h.train_mse[0]);
        let test_mse = h.test_mse[19].unwrap();
        assert!(test_mse < 2.0 * noise * noise, "test mse {test_mse}");
    }

    #[test]
    fn training_is_reproducible() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let arch = Architecture {
                input_len: 10,
                conv: vec![ConvSpec {
                    filters: 2,
                    kernel: 3,
                    pool: 2,
                }],
                dense: vec![4],
                outputs: 1,
            };
            let mut net = Network::glorot(arch, &mut rng).unwrap();
            let mut d = Examples::new(10, 1);
            for i in 0..25 {
                let c: Vec<f64> = (0..10).map(|j| ((i * j) as f64).cos()).collect();
                d.push(&c, i as f64 / 25.0, &[(i as f64).sin()]).unwrap();
            }
            let opts = TrainOptions {
                epochs: 3,
                batch_size: 10,
                learning_rate: 0.01,
            };
            train(&mut net, &d, None, &opts, &mut rng).unwrap();
            net
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn seeded_prediction_snapshot() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let net = Network::glorot(Architecture::standard(513, 3), &mut rng).unwrap();
        let curve: Vec<f64> = (0..513).map(|i| (i as f64 / 40.0).sin()).collect();
        let y = net.predict(&curve, 0.5).unwrap();
        let frozen = [
            -1.462933758605821e-3,
            -1.1147584125131163e-1,
            -1.309443454889881e-2,
        ];
        for (a, b) in y.iter().zip(frozen) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}
