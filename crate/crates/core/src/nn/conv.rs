//! 1-D convolution along a single channel signal with stride and dilation.
//!
//! The signal is zero padded symmetrically by half the effective kernel span,
//! so the output length is always `ceil(len / stride)`.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub dilation: usize,
}

impl ConvSpec {
    pub fn new(stride: usize, dilation: usize) -> Result<Self> {
        if stride == 0 || dilation == 0 {
            return Err(Error::InvalidArgument(format!(
                "stride ({stride}) and dilation ({dilation}) must be positive"
            )));
        }
        Ok(Self { stride, dilation })
    }

    /// `(k - 1) * dilation + 1`
    pub fn span(&self, kernel_len: usize) -> usize {
        (kernel_len - 1) * self.dilation + 1
    }

    /// Zero padding on the left side; the right side is padded implicitly.
    pub fn pad(&self, kernel_len: usize) -> usize {
        (self.span(kernel_len) - 1) / 2
    }

    pub fn output_len(&self, signal_len: usize) -> usize {
        signal_len.div_ceil(self.stride)
    }

    /// Signal index read by output `i` and tap `j`, if inside the signal.
    #[inline]
    fn tap(&self, i: usize, j: usize, pad: usize, len: usize) -> Option<usize> {
        let pos = i * self.stride + j * self.dilation;
        pos.checked_sub(pad).filter(|&p| p < len)
    }
}

/// `y[i] = bias + sum_j kernel[j] * padded[i*stride + j*dilation]`.
pub fn strided_conv1d(
    signal: ArrayView1<f64>,
    kernel: ArrayView1<f64>,
    bias: f64,
    spec: ConvSpec,
) -> Result<Array1<f64>> {
    if kernel.is_empty() {
        return Err(Error::InvalidArgument("empty convolution kernel".into()));
    }
    let len = signal.len();
    let pad = spec.pad(kernel.len());
    let out = Array1::from_shape_fn(spec.output_len(len), |i| {
        let mut acc = bias;
        for (j, &w) in kernel.iter().enumerate() {
            if let Some(p) = spec.tap(i, j, pad, len) {
                acc += w * signal[p];
            }
        }
        acc
    });
    Ok(out)
}

pub struct ConvGrads {
    pub dsignal: Array1<f64>,
    pub dkernel: Array1<f64>,
    pub dbias: f64,
}

pub fn strided_conv1d_backward(
    signal: ArrayView1<f64>,
    kernel: ArrayView1<f64>,
    spec: ConvSpec,
    dy: ArrayView1<f64>,
) -> ConvGrads {
    let len = signal.len();
    let pad = spec.pad(kernel.len());
    let mut dsignal = Array1::zeros(len);
    let mut dkernel = Array1::zeros(kernel.len());
    for (i, &g) in dy.iter().enumerate() {
        for (j, &w) in kernel.iter().enumerate() {
            if let Some(p) = spec.tap(i, j, pad, len) {
                dkernel[j] += g * signal[p];
                dsignal[p] += g * w;
            }
        }
    }
    ConvGrads {
        dsignal,
        dkernel,
        dbias: dy.sum(),
    }
}
