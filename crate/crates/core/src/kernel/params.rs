//! Learned-parameter bundles for the numeric kernels.
//!
//! These are plain data carriers with validating constructors. The crate has
//! no training loop for them — parameters are either seeded pseudo-randomly
//! (deterministic given the seed), loaded from a file, or set to one of the
//! `identity` / `zeros` configurations the tests lean on.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::tensor::Tensor;

/// Uniform values in `[-scale, scale]`, drawn in a fixed order.
pub(crate) fn uniform_values(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
}

/// 2-D convolution weights: an `out_ch x in_ch x k x k` kernel, per-output
/// bias, and the stride/padding the convolution runs with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvParams {
    kernel: Tensor,
    bias: Vec<f64>,
    stride: usize,
    padding: usize,
}

impl ConvParams {
    pub fn new(kernel: Tensor, bias: Vec<f64>, stride: usize, padding: usize) -> Result<Self> {
        if kernel.rank() != 4 {
            return Err(Error::arg(format!(
                "conv kernel must be rank 4 (out x in x k x k), got shape {:?}",
                kernel.shape()
            )));
        }
        let [out_ch, _in_ch, kh, kw] = [
            kernel.shape()[0],
            kernel.shape()[1],
            kernel.shape()[2],
            kernel.shape()[3],
        ];
        if kh != kw {
            return Err(Error::arg(format!(
                "conv kernel must be square, got {kh}x{kw}"
            )));
        }
        if kh % 2 == 0 {
            return Err(Error::arg(format!(
                "conv kernel size must be odd, got {kh}"
            )));
        }
        if bias.len() != out_ch {
            return Err(Error::arg(format!(
                "conv bias length {} != output channels {out_ch}",
                bias.len()
            )));
        }
        if bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("conv bias contains non-finite value"));
        }
        if stride == 0 {
            return Err(Error::arg("conv stride must be >= 1"));
        }
        Ok(ConvParams {
            kernel,
            bias,
            stride,
            padding,
        })
    }

    /// 1x1 convolution that passes each channel through unchanged.
    pub fn identity(channels: usize) -> Result<Self> {
        let kernel = Tensor::from_fn(&[channels, channels, 1, 1], |i| {
            let out = i / channels;
            let inp = i % channels;
            if out == inp {
                1.0
            } else {
                0.0
            }
        })?;
        ConvParams::new(kernel, vec![0.0; channels], 1, 0)
    }

    /// All-zero kernel and bias.
    pub fn zeros(
        out_channels: usize,
        in_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let kernel = Tensor::zeros(&[out_channels, in_channels, kernel_size, kernel_size])?;
        ConvParams::new(kernel, vec![0.0; out_channels], stride, padding)
    }

    /// Seeded uniform init scaled by `1/sqrt(fan_in)`.
    pub fn seeded(
        out_channels: usize,
        in_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let fan_in = (in_channels * kernel_size * kernel_size) as f64;
        let scale = fan_in.sqrt().recip();
        let n = out_channels * in_channels * kernel_size * kernel_size;
        let kernel = Tensor::new(
            &[out_channels, in_channels, kernel_size, kernel_size],
            uniform_values(rng, n, scale),
        )?;
        ConvParams::new(kernel, uniform_values(rng, out_channels, scale), stride, padding)
    }

    pub fn kernel(&self) -> &Tensor {
        &self.kernel
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel.shape()[2]
    }

    /// Re-checks invariants after deserialisation.
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        ConvParams::new(
            self.kernel.clone(),
            self.bias.clone(),
            self.stride,
            self.padding,
        )
        .map(|_| ())
    }
}

/// Inference-mode batch normalisation: per-channel scale/shift applied with
/// frozen running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormParams {
    gamma: Vec<f64>,
    beta: Vec<f64>,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
    epsilon: f64,
}

impl BatchNormParams {
    pub fn new(
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        let c = gamma.len();
        if c == 0 {
            return Err(Error::arg("batch norm needs at least one channel"));
        }
        if beta.len() != c || running_mean.len() != c || running_var.len() != c {
            return Err(Error::arg(format!(
                "batch norm parameter lengths disagree: gamma {c}, beta {}, mean {}, var {}",
                beta.len(),
                running_mean.len(),
                running_var.len()
            )));
        }
        for vs in [&gamma, &beta, &running_mean, &running_var] {
            if vs.iter().any(|v| !v.is_finite()) {
                return Err(Error::arg("batch norm parameter contains non-finite value"));
            }
        }
        if running_var.iter().any(|&v| v < 0.0) {
            return Err(Error::arg("batch norm running variance must be >= 0"));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::arg(format!(
                "batch norm epsilon must be positive and finite, got {epsilon}"
            )));
        }
        Ok(BatchNormParams {
            gamma,
            beta,
            running_mean,
            running_var,
            epsilon,
        })
    }

    /// Normalisation that leaves inputs unchanged (unit scale, zero shift,
    /// zero mean, unit variance) up to the epsilon in the denominator.
    pub fn identity(channels: usize) -> Result<Self> {
        BatchNormParams::new(
            vec![1.0; channels],
            vec![0.0; channels],
            vec![0.0; channels],
            vec![1.0; channels],
            1e-5,
        )
    }

    /// Seeded init: unit-ish scale, small shift, small running stats.
    pub fn seeded(channels: usize, rng: &mut impl Rng) -> Result<Self> {
        let gamma = (0..channels)
            .map(|_| 1.0 + rng.random_range(-0.1..=0.1))
            .collect();
        let beta = uniform_values(rng, channels, 0.1);
        let running_mean = uniform_values(rng, channels, 0.1);
        let running_var = (0..channels)
            .map(|_| 1.0 + rng.random_range(-0.1..=0.1))
            .collect();
        BatchNormParams::new(gamma, beta, running_mean, running_var, 1e-5)
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn running_mean(&self) -> &[f64] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[f64] {
        &self.running_var
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn validate(&self) -> Result<()> {
        BatchNormParams::new(
            self.gamma.clone(),
            self.beta.clone(),
            self.running_mean.clone(),
            self.running_var.clone(),
            self.epsilon,
        )
        .map(|_| ())
    }
}

/// Fully-connected layer: `rows x cols` weight matrix plus a bias of length
/// `rows`, applied as `W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    weight: Tensor,
    bias: Vec<f64>,
}

impl LinearParams {
    pub fn new(weight: Tensor, bias: Vec<f64>) -> Result<Self> {
        if weight.rank() != 2 {
            return Err(Error::arg(format!(
                "linear weight must be rank 2, got shape {:?}",
                weight.shape()
            )));
        }
        if bias.len() != weight.shape()[0] {
            return Err(Error::arg(format!(
                "linear bias length {} != output rows {}",
                bias.len(),
                weight.shape()[0]
            )));
        }
        if bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("linear bias contains non-finite value"));
        }
        Ok(LinearParams { weight, bias })
    }

    /// Identity projection of size `n`.
    pub fn identity(n: usize) -> Result<Self> {
        let weight = Tensor::from_fn(&[n, n], |i| if i / n == i % n { 1.0 } else { 0.0 })?;
        LinearParams::new(weight, vec![0.0; n])
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        LinearParams::new(Tensor::zeros(&[rows, cols])?, vec![0.0; rows])
    }

    /// Seeded uniform init scaled by `1/sqrt(cols)`.
    pub fn seeded(rows: usize, cols: usize, rng: &mut impl Rng) -> Result<Self> {
        let scale = (cols as f64).sqrt().recip();
        let weight = Tensor::new(&[rows, cols], uniform_values(rng, rows * cols, scale))?;
        LinearParams::new(weight, uniform_values(rng, rows, scale))
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn rows(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.weight.shape()[1]
    }

    /// Applies `W x + b`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        crate::kernel::ops::linear(x, &self.weight, &self.bias)
    }

    pub fn validate(&self) -> Result<()> {
        self.weight.validate()?;
        LinearParams::new(self.weight.clone(), self.bias.clone()).map(|_| ())
    }
}
