//! Feedforward function approximators with exact backpropagation.
//!
//! A [`Network`] is a chain of layers described by an [`ArchitectureSpec`]
//! whose parameters live in a single flat [`ParamVector`]. The flat layout is
//! frozen because eligibility traces and checkpoints index into it:
//!
//! * layers appear in network order, each contributing its weights and then
//!   its biases;
//! * dense weights are row-major `[unit][input]`;
//! * conv weights are `[filter][channel][kernel_row][kernel_col]`;
//! * max-pool layers own no parameters.
//!
//! Images are stored channel-major (`[channel][row][col]`) and a dense layer
//! that follows a spatial layer reads that layout as its flat input.
//!
//! Convolutions support symmetric zero padding. Pooling windows that hang
//! over the right or bottom edge are truncated to the in-bounds cells, so a
//! pool over an `n`-wide input yields `ceil((n - window) / stride) + 1`
//! outputs (or 1 when `n <= window`).

use std::ops::{Deref, DerefMut};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error("invalid architecture: {0}")]
    Config(String),
    #[error("parameter vector has length {got}, architecture needs {expected}")]
    ParamLength { expected: usize, got: usize },
    #[error("non-finite parameter at index {0}")]
    NonFinite(usize),
}

/// Channel-major tensor shape. Flat vectors use `1 x 1 x n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape {
            channels,
            height,
            width,
        }
    }

    pub fn flat(len: usize) -> Self {
        Shape::new(1, 1, len)
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        filters: usize,
        kernel: [usize; 2],
        stride: usize,
        #[serde(default)]
        padding: usize,
        activation: ActivationKind,
    },
    MaxPool {
        window: [usize; 2],
        stride: usize,
    },
    Dense {
        units: usize,
        activation: ActivationKind,
    },
    /// Affine output layer with no nonlinearity. Must be last.
    LinearOutput {
        units: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

impl ArchitectureSpec {
    /// Affine map from a flat input straight to the outputs.
    pub fn linear(inputs: usize, outputs: usize) -> Self {
        ArchitectureSpec {
            input: Shape::flat(inputs),
            layers: vec![LayerSpec::LinearOutput { units: outputs }],
        }
    }

    /// One hidden layer followed by a linear output layer.
    pub fn shallow(
        inputs: usize,
        hidden: usize,
        activation: ActivationKind,
        outputs: usize,
    ) -> Self {
        ArchitectureSpec {
            input: Shape::flat(inputs),
            layers: vec![
                LayerSpec::Dense {
                    units: hidden,
                    activation,
                },
                LayerSpec::LinearOutput { units: outputs },
            ],
        }
    }

    /// Raw-board value network: two 5x5 stride-1 convolutions with 15 and 50
    /// filters, each followed by 3x3 stride-2 max-pooling, then a 250-unit
    /// dense layer and a linear output. Convolutions are zero-padded by 2 so
    /// the chain stays defined on a 10-wide board.
    pub fn board_conv(
        input: Shape,
        conv_activation: ActivationKind,
        dense_activation: ActivationKind,
        outputs: usize,
    ) -> Self {
        let conv = |filters| LayerSpec::Conv {
            filters,
            kernel: [5, 5],
            stride: 1,
            padding: 2,
            activation: conv_activation,
        };
        let pool = LayerSpec::MaxPool {
            window: [3, 3],
            stride: 2,
        };
        ArchitectureSpec {
            input,
            layers: vec![
                conv(15),
                pool.clone(),
                conv(50),
                pool,
                LayerSpec::Dense {
                    units: 250,
                    activation: dense_activation,
                },
                LayerSpec::LinearOutput { units: outputs },
            ],
        }
    }

    pub fn param_count(&self) -> Result<usize, NetworkError> {
        Ok(plan(self)?.iter().map(|l| l.n_params).sum())
    }

    pub fn output_len(&self) -> Result<usize, NetworkError> {
        Ok(plan(self)?.last().map(|l| l.output.len()).unwrap_or(0))
    }
}

/// Flat parameter vector in the documented layer order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

/// Gradient of one scalar output, aligned with [`ParamVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradVector(pub Vec<f64>);

macro_rules! slice_newtype {
    ($t:ty) => {
        impl Deref for $t {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }
        impl DerefMut for $t {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }
    };
}
slice_newtype!(ParamVector);
slice_newtype!(GradVector);

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Conv {
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
        act: ActivationKind,
    },
    Pool {
        wh: usize,
        ww: usize,
        stride: usize,
    },
    Dense {
        act: Option<ActivationKind>,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct LayerPlan {
    op: Op,
    input: Shape,
    output: Shape,
    offset: usize,
    n_weights: usize,
    n_params: usize,
    fan_in: usize,
}

fn pooled(n: usize, window: usize, stride: usize) -> usize {
    if n <= window {
        1
    } else {
        (n - window).div_ceil(stride) + 1
    }
}

fn plan(spec: &ArchitectureSpec) -> Result<Vec<LayerPlan>, NetworkError> {
    let err = |msg: String| Err(NetworkError::Config(msg));
    if spec.input.is_empty() {
        return err("input shape has zero size".into());
    }
    match spec.layers.last() {
        Some(LayerSpec::LinearOutput { .. }) => {}
        _ => return err("the last layer must be a linear output layer".into()),
    }
    let mut shape = spec.input;
    let mut offset = 0;
    let mut flattened = false;
    let mut plans = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        let p = match *layer {
            LayerSpec::Conv {
                filters,
                kernel: [kh, kw],
                stride,
                padding,
                activation,
            } => {
                if flattened {
                    return err(format!("layer {i}: convolution after a dense layer"));
                }
                if filters == 0 || kh == 0 || kw == 0 || stride == 0 {
                    return err(format!("layer {i}: convolution sizes must be positive"));
                }
                let (ph, pw) = (shape.height + 2 * padding, shape.width + 2 * padding);
                if kh > ph || kw > pw {
                    return err(format!(
                        "layer {i}: {kh}x{kw} kernel does not fit a padded {ph}x{pw} input"
                    ));
                }
                let output = Shape::new(filters, (ph - kh) / stride + 1, (pw - kw) / stride + 1);
                let fan_in = shape.channels * kh * kw;
                let n_weights = filters * fan_in;
                LayerPlan {
                    op: Op::Conv {
                        kh,
                        kw,
                        stride,
                        pad: padding,
                        act: activation,
                    },
                    input: shape,
                    output,
                    offset,
                    n_weights,
                    n_params: n_weights + filters,
                    fan_in,
                }
            }
            LayerSpec::MaxPool {
                window: [wh, ww],
                stride,
            } => {
                if flattened {
                    return err(format!("layer {i}: pooling after a dense layer"));
                }
                if wh == 0 || ww == 0 || stride == 0 {
                    return err(format!("layer {i}: pooling sizes must be positive"));
                }
                let output = Shape::new(
                    shape.channels,
                    pooled(shape.height, wh, stride),
                    pooled(shape.width, ww, stride),
                );
                LayerPlan {
                    op: Op::Pool { wh, ww, stride },
                    input: shape,
                    output,
                    offset,
                    n_weights: 0,
                    n_params: 0,
                    fan_in: 0,
                }
            }
            LayerSpec::Dense { units, .. } | LayerSpec::LinearOutput { units } => {
                if units == 0 {
                    return err(format!("layer {i}: zero units"));
                }
                let is_output = matches!(layer, LayerSpec::LinearOutput { .. });
                if is_output && i + 1 != spec.layers.len() {
                    return err(format!("layer {i}: linear output layer must be last"));
                }
                let act = match *layer {
                    LayerSpec::Dense { activation, .. } => Some(activation),
                    _ => None,
                };
                flattened = true;
                let fan_in = shape.len();
                let n_weights = units * fan_in;
                LayerPlan {
                    op: Op::Dense { act },
                    input: shape,
                    output: Shape::flat(units),
                    offset,
                    n_weights,
                    n_params: n_weights + units,
                    fan_in,
                }
            }
        };
        offset += p.n_params;
        shape = p.output;
        plans.push(p);
    }
    Ok(plans)
}

/// Reusable buffers for forward and backward passes.
#[derive(Debug, Default, Clone)]
pub struct ForwardCache {
    pre: Vec<Vec<f64>>,
    out: Vec<Vec<f64>>,
    argmax: Vec<Vec<usize>>,
    nz: Vec<usize>,
    grad_out: Vec<f64>,
    grad_in: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: ArchitectureSpec,
    plan: Vec<LayerPlan>,
    params: ParamVector,
}

impl Network {
    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
    pub fn init<R: Rng + ?Sized>(
        spec: ArchitectureSpec,
        rng: &mut R,
    ) -> Result<Self, NetworkError> {
        let plan = plan(&spec)?;
        let total = plan.iter().map(|l| l.n_params).sum();
        let mut params = vec![0.0; total];
        for l in &plan {
            if l.n_weights == 0 {
                continue;
            }
            let bound = 1.0 / (l.fan_in as f64).sqrt();
            for w in &mut params[l.offset..l.offset + l.n_weights] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(Network {
            spec,
            plan,
            params: ParamVector(params),
        })
    }

    pub fn zeros(spec: ArchitectureSpec) -> Result<Self, NetworkError> {
        let n = spec.param_count()?;
        Self::from_params(spec, ParamVector(vec![0.0; n]))
    }

    pub fn from_params(spec: ArchitectureSpec, params: ParamVector) -> Result<Self, NetworkError> {
        let plan = plan(&spec)?;
        let expected: usize = plan.iter().map(|l| l.n_params).sum();
        if params.len() != expected {
            return Err(NetworkError::ParamLength {
                expected,
                got: params.len(),
            });
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(NetworkError::NonFinite(i));
        }
        Ok(Network { spec, plan, params })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn input_len(&self) -> usize {
        self.spec.input.len()
    }

    pub fn output_len(&self) -> usize {
        self.plan.last().map(|l| l.output.len()).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn flatten_params(&self) -> ParamVector {
        self.params.clone()
    }

    /// Adds `delta` to the parameters elementwise.
    pub fn apply_delta(&mut self, delta: &[f64]) {
        assert_eq!(delta.len(), self.params.len(), "delta length mismatch");
        for (p, d) in self.params.iter_mut().zip(delta) {
            *p += d;
        }
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut cache = ForwardCache::default();
        self.forward_into(input, &mut cache).to_vec()
    }

    /// Forward pass that keeps the intermediate values needed by
    /// [`Network::accumulate_gradient`].
    pub fn forward_into<'c>(&self, input: &[f64], cache: &'c mut ForwardCache) -> &'c [f64] {
        assert_eq!(input.len(), self.input_len(), "input length mismatch");
        let n = self.plan.len();
        cache.pre.resize_with(n, Vec::new);
        cache.out.resize_with(n, Vec::new);
        cache.argmax.resize_with(n, Vec::new);
        let ForwardCache {
            pre,
            out,
            argmax,
            nz,
            ..
        } = cache;
        for (l, lp) in self.plan.iter().enumerate() {
            let (before, rest) = out.split_at_mut(l);
            let x: &[f64] = if l == 0 { input } else { &before[l - 1] };
            let y = &mut rest[0];
            y.resize(lp.output.len(), 0.0);
            let w = &self.params[lp.offset..lp.offset + lp.n_weights];
            let b = &self.params[lp.offset + lp.n_weights..lp.offset + lp.n_params];
            match lp.op {
                Op::Dense { act } => {
                    let z = &mut pre[l];
                    z.resize(lp.output.len(), 0.0);
                    dense_forward(w, b, x, z, nz);
                    match act {
                        Some(kind) => y
                            .iter_mut()
                            .zip(z.iter())
                            .for_each(|(a, &s)| *a = kind.activate(s)),
                        None => y.copy_from_slice(z),
                    }
                }
                Op::Conv {
                    kh,
                    kw,
                    stride,
                    pad,
                    act,
                } => {
                    let z = &mut pre[l];
                    z.resize(lp.output.len(), 0.0);
                    conv_forward(w, b, x, lp.input, lp.output, kh, kw, stride, pad, z);
                    y.iter_mut()
                        .zip(z.iter())
                        .for_each(|(a, &s)| *a = act.activate(s));
                }
                Op::Pool { wh, ww, stride } => {
                    let idx = &mut argmax[l];
                    idx.resize(lp.output.len(), 0);
                    pool_forward(x, lp.input, lp.output, wh, ww, stride, y, idx);
                }
            }
        }
        &out[n - 1]
    }

    /// Adds `scale * d output[output_index] / d params` into `grad`.
    ///
    /// `cache` must hold the forward pass of this network on `input`.
    pub fn accumulate_gradient(
        &self,
        input: &[f64],
        cache: &mut ForwardCache,
        output_index: usize,
        scale: f64,
        grad: &mut [f64],
    ) {
        assert!(
            output_index < self.output_len(),
            "output index out of range"
        );
        assert_eq!(grad.len(), self.params.len(), "gradient length mismatch");
        let ForwardCache {
            pre,
            out,
            argmax,
            nz,
            grad_out,
            grad_in,
        } = cache;
        grad_out.clear();
        grad_out.resize(self.output_len(), 0.0);
        grad_out[output_index] = scale;
        for (l, lp) in self.plan.iter().enumerate().rev() {
            let x: &[f64] = if l == 0 { input } else { &out[l - 1] };
            let need_input = l > 0;
            grad_in.clear();
            grad_in.resize(if need_input { lp.input.len() } else { 0 }, 0.0);
            let w = &self.params[lp.offset..lp.offset + lp.n_weights];
            let (gw, gb) = grad[lp.offset..lp.offset + lp.n_params].split_at_mut(lp.n_weights);
            match lp.op {
                Op::Dense { act } => {
                    if let Some(kind) = act {
                        for (g, &s) in grad_out.iter_mut().zip(pre[l].iter()) {
                            *g *= kind.derivative(s);
                        }
                    }
                    dense_backward(w, x, grad_out, gw, gb, grad_in, need_input, nz);
                }
                Op::Conv {
                    kh,
                    kw,
                    stride,
                    pad,
                    act,
                } => {
                    for (g, &s) in grad_out.iter_mut().zip(pre[l].iter()) {
                        *g *= act.derivative(s);
                    }
                    conv_backward(
                        w, x, lp.input, lp.output, kh, kw, stride, pad, grad_out, gw, gb, grad_in,
                        need_input,
                    );
                }
                Op::Pool { .. } => {
                    for (&g, &i) in grad_out.iter().zip(argmax[l].iter()) {
                        grad_in[i] += g;
                    }
                }
            }
            std::mem::swap(grad_out, grad_in);
        }
    }

    /// Gradient of `output[output_index]` with respect to every parameter.
    pub fn gradient(&self, input: &[f64], output_index: usize) -> GradVector {
        let mut cache = ForwardCache::default();
        self.forward_into(input, &mut cache);
        let mut grad = vec![0.0; self.params.len()];
        self.accumulate_gradient(input, &mut cache, output_index, 1.0, &mut grad);
        GradVector(grad)
    }

    /// Per-layer snapshot of the piecewise structure of a forward pass: the
    /// sign of every ReLU pre-activation and every pooling argmax. Two inputs
    /// or parameter settings with equal signatures lie in the same smooth
    /// piece of the network.
    pub fn kink_signature(&self, input: &[f64]) -> Vec<u64> {
        let mut cache = ForwardCache::default();
        self.forward_into(input, &mut cache);
        let mut sig = Vec::new();
        for (l, lp) in self.plan.iter().enumerate() {
            let relu = matches!(
                lp.op,
                Op::Dense {
                    act: Some(ActivationKind::Relu)
                } | Op::Conv {
                    act: ActivationKind::Relu,
                    ..
                }
            );
            if relu {
                sig.extend(cache.pre[l].iter().map(|&z| (z > 0.0) as u64));
            }
            if matches!(lp.op, Op::Pool { .. }) {
                sig.extend(cache.argmax[l].iter().map(|&i| i as u64));
            }
        }
        sig
    }
}

fn dense_forward(w: &[f64], b: &[f64], x: &[f64], z: &mut [f64], nz: &mut Vec<usize>) {
    let n = x.len();
    nz.clear();
    nz.extend((0..n).filter(|&i| x[i] != 0.0));
    if nz.len() * 2 < n {
        for (k, zk) in z.iter_mut().enumerate() {
            let row = &w[k * n..(k + 1) * n];
            *zk = b[k] + nz.iter().map(|&i| row[i] * x[i]).sum::<f64>();
        }
    } else {
        for (k, zk) in z.iter_mut().enumerate() {
            let row = &w[k * n..(k + 1) * n];
            *zk = b[k] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn dense_backward(
    w: &[f64],
    x: &[f64],
    dz: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    g_in: &mut [f64],
    need_input: bool,
    nz: &mut Vec<usize>,
) {
    let n = x.len();
    nz.clear();
    nz.extend((0..n).filter(|&i| x[i] != 0.0));
    for (k, &d) in dz.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        gb[k] += d;
        let grow = &mut gw[k * n..(k + 1) * n];
        for &i in nz.iter() {
            grow[i] += d * x[i];
        }
        if need_input {
            let row = &w[k * n..(k + 1) * n];
            for (g, &wi) in g_in.iter_mut().zip(row) {
                *g += wi * d;
            }
        }
    }
}

#[inline]
fn tap(o: usize, stride: usize, k: usize, pad: usize, n: usize) -> Option<usize> {
    let i = (o * stride + k).checked_sub(pad)?;
    (i < n).then_some(i)
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    w: &[f64],
    b: &[f64],
    x: &[f64],
    ins: Shape,
    outs: Shape,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    z: &mut [f64],
) {
    let (c_in, h, wd) = (ins.channels, ins.height, ins.width);
    for f in 0..outs.channels {
        let wf = &w[f * c_in * kh * kw..(f + 1) * c_in * kh * kw];
        for oy in 0..outs.height {
            for ox in 0..outs.width {
                let mut s = b[f];
                for c in 0..c_in {
                    for ky in 0..kh {
                        let Some(iy) = tap(oy, stride, ky, pad, h) else {
                            continue;
                        };
                        let xrow = &x[(c * h + iy) * wd..(c * h + iy + 1) * wd];
                        let wrow = &wf[(c * kh + ky) * kw..(c * kh + ky + 1) * kw];
                        for (kx, &wv) in wrow.iter().enumerate() {
                            if let Some(ix) = tap(ox, stride, kx, pad, wd) {
                                s += wv * xrow[ix];
                            }
                        }
                    }
                }
                z[(f * outs.height + oy) * outs.width + ox] = s;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    w: &[f64],
    x: &[f64],
    ins: Shape,
    outs: Shape,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    dz: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    g_in: &mut [f64],
    need_input: bool,
) {
    let (c_in, h, wd) = (ins.channels, ins.height, ins.width);
    let fsize = c_in * kh * kw;
    for f in 0..outs.channels {
        let wf = &w[f * fsize..(f + 1) * fsize];
        let gwf = &mut gw[f * fsize..(f + 1) * fsize];
        for oy in 0..outs.height {
            for ox in 0..outs.width {
                let d = dz[(f * outs.height + oy) * outs.width + ox];
                if d == 0.0 {
                    continue;
                }
                gb[f] += d;
                for c in 0..c_in {
                    for ky in 0..kh {
                        let Some(iy) = tap(oy, stride, ky, pad, h) else {
                            continue;
                        };
                        let base = (c * h + iy) * wd;
                        let wbase = (c * kh + ky) * kw;
                        for kx in 0..kw {
                            if let Some(ix) = tap(ox, stride, kx, pad, wd) {
                                gwf[wbase + kx] += d * x[base + ix];
                                if need_input {
                                    g_in[base + ix] += d * wf[wbase + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn pool_forward(
    x: &[f64],
    ins: Shape,
    outs: Shape,
    wh: usize,
    ww: usize,
    stride: usize,
    y: &mut [f64],
    argmax: &mut [usize],
) {
    let (h, wd) = (ins.height, ins.width);
    for c in 0..outs.channels {
        for oy in 0..outs.height {
            let y0 = oy * stride;
            let y1 = (y0 + wh).min(h);
            for ox in 0..outs.width {
                let x0 = ox * stride;
                let x1 = (x0 + ww).min(wd);
                let mut best = usize::MAX;
                let mut best_v = f64::NEG_INFINITY;
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        let i = (c * h + iy) * wd + ix;
                        // strict comparison keeps the first row-major maximum
                        if best == usize::MAX || x[i] > best_v {
                            best = i;
                            best_v = x[i];
                        }
                    }
                }
                let o = (c * outs.height + oy) * outs.width + ox;
                y[o] = best_v;
                argmax[o] = best;
            }
        }
    }
}
