//! Dense and 3x3 same-padded convolution layers over flat parameter slices.
//!
//! Layers do not own their parameters. Each records the ranges of its weight
//! and bias inside the model's flat parameter vector, so forward passes read
//! from `&[f64]` and backward passes accumulate into a gradient slice of the
//! same length.

use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Four-lane dot product with a fixed summation order.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub(crate) weight: Range<usize>,
    pub(crate) bias: Range<usize>,
}

impl DenseLayer {
    pub fn weight_range(&self) -> Range<usize> {
        self.weight.clone()
    }

    pub fn bias_range(&self) -> Range<usize> {
        self.bias.clone()
    }

    /// Writes activated outputs into `out`.
    pub fn forward(&self, params: &[f64], x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        debug_assert_eq!(out.len(), self.outputs);
        let w = &params[self.weight.clone()];
        let b = &params[self.bias.clone()];
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &w[o * self.inputs..(o + 1) * self.inputs];
            *slot = self.activation.apply(b[o] + dot(row, x));
        }
    }

    /// Accumulates parameter gradients from `d_out` (gradient w.r.t. the
    /// activated output) and, when requested, adds the input gradient into
    /// `d_x`.
    pub fn backward(
        &self,
        params: &[f64],
        x: &[f64],
        out: &[f64],
        d_out: &[f64],
        grads: &mut [f64],
        mut d_x: Option<&mut [f64]>,
    ) {
        let n_in = self.inputs;
        let w = &params[self.weight.clone()];
        for o in 0..self.outputs {
            let d_pre = d_out[o] * self.activation.derivative_from_output(out[o]);
            if d_pre == 0.0 {
                continue;
            }
            grads[self.bias.start + o] += d_pre;
            let start = self.weight.start + o * n_in;
            axpy(d_pre, x, &mut grads[start..start + n_in]);
            if let Some(dx) = d_x.as_deref_mut() {
                axpy(d_pre, &w[o * n_in..(o + 1) * n_in], dx);
            }
        }
    }
}

/// 3x3 convolution with one cell of zero padding on every side, so the
/// output plane has the same `rows x cols` shape as the input. Planes are
/// stored channel-major, then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub activation: Activation,
    pub(crate) weight: Range<usize>,
    pub(crate) bias: Range<usize>,
}

pub const KERNEL: usize = 3;

/// Valid destination range along one axis for kernel offset `k` in `0..3`.
#[inline]
fn span(k: usize, len: usize) -> (usize, usize) {
    match k {
        0 => (1, len),
        1 => (0, len),
        _ => (0, len.saturating_sub(1)),
    }
}

impl ConvLayer {
    pub fn weight_range(&self) -> Range<usize> {
        self.weight.clone()
    }

    pub fn bias_range(&self) -> Range<usize> {
        self.bias.clone()
    }

    #[inline]
    fn widx(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + i) * KERNEL + ky) * KERNEL + kx
    }

    pub fn forward(&self, params: &[f64], input: &[f64], out: &mut [f64], rows: usize, cols: usize) {
        let n = rows * cols;
        debug_assert_eq!(input.len(), self.in_channels * n);
        debug_assert_eq!(out.len(), self.out_channels * n);
        let w = &params[self.weight.clone()];
        let b = &params[self.bias.clone()];
        for o in 0..self.out_channels {
            let plane = &mut out[o * n..(o + 1) * n];
            plane.fill(b[o]);
            for i in 0..self.in_channels {
                let src = &input[i * n..(i + 1) * n];
                for ky in 0..KERNEL {
                    let (r0, r1) = span(ky, rows);
                    for kx in 0..KERNEL {
                        let (c0, c1) = span(kx, cols);
                        if c0 >= c1 {
                            continue;
                        }
                        let wv = w[self.widx(o, i, ky, kx)];
                        for r in r0..r1 {
                            let sr = r + ky - 1;
                            let dst = &mut plane[r * cols + c0..r * cols + c1];
                            let s = &src[sr * cols + c0 + kx - 1..sr * cols + c1 + kx - 1];
                            axpy(wv, s, dst);
                        }
                    }
                }
            }
            for v in plane.iter_mut() {
                *v = self.activation.apply(*v);
            }
        }
    }

    /// `scratch` must hold one plane (`rows * cols`) and is overwritten.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        out: &[f64],
        d_out: &[f64],
        grads: &mut [f64],
        mut d_input: Option<&mut [f64]>,
        rows: usize,
        cols: usize,
        scratch: &mut [f64],
    ) {
        let n = rows * cols;
        let w = &params[self.weight.clone()];
        let d_pre = &mut scratch[..n];
        for o in 0..self.out_channels {
            let mut any = false;
            for ((dp, dy), y) in d_pre
                .iter_mut()
                .zip(&d_out[o * n..(o + 1) * n])
                .zip(&out[o * n..(o + 1) * n])
            {
                *dp = dy * self.activation.derivative_from_output(*y);
                any |= *dp != 0.0;
            }
            if !any {
                continue;
            }
            grads[self.bias.start + o] += d_pre.iter().sum::<f64>();
            for i in 0..self.in_channels {
                let src = &input[i * n..(i + 1) * n];
                for ky in 0..KERNEL {
                    let (r0, r1) = span(ky, rows);
                    for kx in 0..KERNEL {
                        let (c0, c1) = span(kx, cols);
                        if c0 >= c1 {
                            continue;
                        }
                        let k = self.widx(o, i, ky, kx);
                        let mut acc = 0.0;
                        for r in r0..r1 {
                            let sr = r + ky - 1;
                            let g = &d_pre[r * cols + c0..r * cols + c1];
                            let s = &src[sr * cols + c0 + kx - 1..sr * cols + c1 + kx - 1];
                            acc += dot(g, s);
                        }
                        grads[self.weight.start + k] += acc;
                        if let Some(di) = d_input.as_deref_mut() {
                            let wv = w[k];
                            let plane = &mut di[i * n..(i + 1) * n];
                            for r in r0..r1 {
                                let sr = r + ky - 1;
                                let g = &d_pre[r * cols + c0..r * cols + c1];
                                let dst =
                                    &mut plane[sr * cols + c0 + kx - 1..sr * cols + c1 + kx - 1];
                                axpy(wv, g, dst);
                            }
                        }
                    }
                }
            }
        }
    }
}
