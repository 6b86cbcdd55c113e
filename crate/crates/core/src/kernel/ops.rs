//! Primitive numeric operations.
//!
//! Reference implementations with fixed evaluation order: plain nested loops,
//! accumulation in `f64`, no reordering. Softmax subtracts the running
//! maximum before exponentiating so large scores cannot overflow.
//! Convolution is cross-correlation (no kernel flip) with zero padding, the
//! convention every deep-learning framework uses.

use crate::error::{Error, Result};
use crate::kernel::params::{BatchNormParams, ConvParams};
use crate::kernel::tensor::{FeatureMap, Tensor};

/// Logistic sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Exact Gaussian-error-linear unit: `x * Phi(x)` with `Phi` the standard
/// normal CDF, computed through `erf` rather than the tanh approximation.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Numerically stable softmax of a non-empty slice.
pub fn softmax_slice(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::arg("softmax of an empty slice"));
    }
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.iter().map(|&e| e / sum).collect())
}

/// Softmax along one axis of a tensor; every fiber along `axis` sums to one.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let shape = x.shape();
    if axis >= shape.len() {
        return Err(Error::arg(format!(
            "softmax axis {axis} out of range for rank {}",
            shape.len()
        )));
    }
    let axis_len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![0.0; x.len()];
    let data = x.data();
    let mut fiber = vec![0.0; axis_len];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * axis_len * inner + i;
            for (j, slot) in fiber.iter_mut().enumerate() {
                *slot = data[base + j * inner];
            }
            let soft = softmax_slice(&fiber)?;
            for (j, &v) in soft.iter().enumerate() {
                out[base + j * inner] = v;
            }
        }
    }
    Tensor::new(shape, out)
}

/// Softmax over all spatial positions of each channel.
pub fn spatial_softmax(x: &FeatureMap) -> Result<FeatureMap> {
    let (c, h, w) = (x.channels(), x.height(), x.width());
    let plane = h * w;
    let data = x.data();
    let mut out = Vec::with_capacity(data.len());
    for ch in 0..c {
        let soft = softmax_slice(&data[ch * plane..(ch + 1) * plane])?;
        out.extend_from_slice(&soft);
    }
    x.with_data(out)
}

/// Elementwise sum of two same-shaped tensors.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::arg(format!(
            "elementwise add shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Tensor::new(
        a.shape(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect(),
    )
}

/// Elementwise (Hadamard) product of two same-shaped tensors.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::arg(format!(
            "elementwise mul shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Tensor::new(
        a.shape(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect(),
    )
}

/// Matrix product of two rank-2 tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::arg(format!(
            "matmul requires rank-2 tensors, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let (k2, n) = (b.shape()[0], b.shape()[1]);
    if k != k2 {
        return Err(Error::arg(format!(
            "matmul inner dimensions disagree: {k} vs {k2}"
        )));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += ad[i * k + p] * bd[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    Tensor::new(&[m, n], out)
}

/// Fully-connected projection `W x + b`.
pub fn linear(x: &[f64], weight: &Tensor, bias: &[f64]) -> Result<Vec<f64>> {
    if weight.rank() != 2 {
        return Err(Error::arg(format!(
            "linear weight must be rank 2, got {:?}",
            weight.shape()
        )));
    }
    let (rows, cols) = (weight.shape()[0], weight.shape()[1]);
    if x.len() != cols {
        return Err(Error::arg(format!(
            "linear input length {} != weight columns {cols}",
            x.len()
        )));
    }
    if bias.len() != rows {
        return Err(Error::arg(format!(
            "linear bias length {} != weight rows {rows}",
            bias.len()
        )));
    }
    let w = weight.data();
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let mut acc = bias[r];
        for c in 0..cols {
            acc += w[r * cols + c] * x[c];
        }
        out.push(acc);
    }
    Ok(out)
}

/// 2-D cross-correlation with zero padding.
///
/// Output spatial extent is `floor((in + 2*padding - k) / stride) + 1` per
/// axis; an input too small to produce at least one output position is an
/// error, as is a channel-count mismatch with the kernel.
pub fn conv2d(x: &FeatureMap, p: &ConvParams) -> Result<FeatureMap> {
    let (in_c, in_h, in_w) = (x.channels(), x.height(), x.width());
    if in_c != p.in_channels() {
        return Err(Error::arg(format!(
            "conv2d input channels {in_c} != kernel input channels {}",
            p.in_channels()
        )));
    }
    let k = p.kernel_size();
    let (stride, pad) = (p.stride(), p.padding());
    if in_h + 2 * pad < k || in_w + 2 * pad < k {
        return Err(Error::arg(format!(
            "conv2d input {in_h}x{in_w} with padding {pad} smaller than kernel {k}"
        )));
    }
    let out_h = (in_h + 2 * pad - k) / stride + 1;
    let out_w = (in_w + 2 * pad - k) / stride + 1;
    let out_c = p.out_channels();
    let (w, xd) = (p.kernel().data(), x.data());
    let mut out = vec![0.0; out_c * out_h * out_w];
    for oc in 0..out_c {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut acc = p.bias()[oc];
                for ic in 0..in_c {
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= in_h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= in_w as isize {
                                continue;
                            }
                            let wv = w[((oc * in_c + ic) * k + ky) * k + kx];
                            let xv = xd[(ic * in_h + iy as usize) * in_w + ix as usize];
                            acc += wv * xv;
                        }
                    }
                }
                out[(oc * out_h + oy) * out_w + ox] = acc;
            }
        }
    }
    FeatureMap::new(x.modality(), Tensor::new(&[out_c, out_h, out_w], out)?)
}

/// Average pooling with a square window.
pub fn avg_pool2d(x: &FeatureMap, window: usize, stride: usize) -> Result<FeatureMap> {
    if window == 0 || stride == 0 {
        return Err(Error::arg("avg_pool2d window and stride must be >= 1"));
    }
    let (c, h, w) = (x.channels(), x.height(), x.width());
    if window > h || window > w {
        return Err(Error::arg(format!(
            "avg_pool2d window {window} larger than input {h}x{w}"
        )));
    }
    let out_h = (h - window) / stride + 1;
    let out_w = (w - window) / stride + 1;
    let xd = x.data();
    let inv = 1.0 / (window * window) as f64;
    let mut out = vec![0.0; c * out_h * out_w];
    for ch in 0..c {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut acc = 0.0;
                for ky in 0..window {
                    for kx in 0..window {
                        acc += xd[(ch * h + oy * stride + ky) * w + ox * stride + kx];
                    }
                }
                out[(ch * out_h + oy) * out_w + ox] = acc * inv;
            }
        }
    }
    FeatureMap::new(x.modality(), Tensor::new(&[c, out_h, out_w], out)?)
}

/// Mean over all spatial positions, one value per channel.
pub fn global_avg_pool(x: &FeatureMap) -> Vec<f64> {
    let (c, h, w) = (x.channels(), x.height(), x.width());
    let plane = h * w;
    let inv = 1.0 / plane as f64;
    let xd = x.data();
    (0..c)
        .map(|ch| xd[ch * plane..(ch + 1) * plane].iter().sum::<f64>() * inv)
        .collect()
}

/// Inference-mode batch normalisation with frozen running statistics:
/// `gamma * (x - mean) / sqrt(var + eps) + beta`, per channel.
pub fn batch_norm_infer(x: &FeatureMap, p: &BatchNormParams) -> Result<FeatureMap> {
    let (c, h, w) = (x.channels(), x.height(), x.width());
    if c != p.channels() {
        return Err(Error::arg(format!(
            "batch norm channels {} != input channels {c}",
            p.channels()
        )));
    }
    let plane = h * w;
    let xd = x.data();
    let mut out = Vec::with_capacity(xd.len());
    for ch in 0..c {
        let scale = p.gamma()[ch] / (p.running_var()[ch] + p.epsilon()).sqrt();
        let mean = p.running_mean()[ch];
        let shift = p.beta()[ch];
        for &v in &xd[ch * plane..(ch + 1) * plane] {
            out.push((v - mean) * scale + shift);
        }
    }
    x.with_data(out)
}

/// Layer normalisation over a single vector: zero mean, unit variance, then
/// elementwise scale and shift. Used by the transformer surrogate.
pub fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    let n = x.len();
    if n == 0 {
        return Err(Error::arg("layer norm of an empty vector"));
    }
    if gamma.len() != n || beta.len() != n {
        return Err(Error::arg(format!(
            "layer norm parameter lengths (gamma {}, beta {}) != input length {n}",
            gamma.len(),
            beta.len()
        )));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let inv = 1.0 / (var + epsilon).sqrt();
    Ok(x.iter()
        .enumerate()
        .map(|(i, &v)| (v - mean) * inv * gamma[i] + beta[i])
        .collect())
}
