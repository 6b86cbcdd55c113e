//! Frequency decomposition and gated recombination of feature maps.
//!
//! A feature map is split into a high-frequency part — the map modulated by a
//! spatial attention mask computed from a pooled, convolved, normalised copy
//! of itself — and the low-frequency remainder, so that `high + low`
//! reconstructs the original exactly (up to floating-point rounding). The two
//! parts are then recombined with per-channel sigmoid gates derived from
//! their pooled sum, letting the block emphasise whichever band carries the
//! discriminative signal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{
    avg_pool2d, batch_norm_infer, conv2d, global_avg_pool, sigmoid, spatial_softmax,
    BatchNormParams, ConvParams, FeatureMap, LinearParams, Tensor,
};

/// Parameters for one frequency-selection block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreqSelectorParams {
    /// Square window of the average pool that precedes the attention conv.
    /// Clamped to the input extent at run time, so small maps still work.
    pub pool_window: usize,
    /// Channel-preserving convolution producing attention logits.
    pub decomp_conv: ConvParams,
    /// Normalisation of the attention logits.
    pub decomp_bn: BatchNormParams,
    /// Shared projection of the pooled high+low descriptor.
    pub fc_global: LinearParams,
    /// Gate head for the high-frequency part.
    pub fc_high: LinearParams,
    /// Gate head for the low-frequency part.
    pub fc_low: LinearParams,
}

impl FreqSelectorParams {
    /// Checks every sub-parameter is sized for `channels`-channel inputs.
    pub fn validate_for_channels(&self, channels: usize) -> Result<()> {
        if self.pool_window == 0 {
            return Err(Error::arg("pool window must be >= 1"));
        }
        if self.decomp_conv.in_channels() != channels
            || self.decomp_conv.out_channels() != channels
        {
            return Err(Error::arg(format!(
                "decomposition conv maps {} -> {} channels, need {channels} -> {channels}",
                self.decomp_conv.in_channels(),
                self.decomp_conv.out_channels()
            )));
        }
        if self.decomp_bn.channels() != channels {
            return Err(Error::arg(format!(
                "decomposition batch norm has {} channels, need {channels}",
                self.decomp_bn.channels()
            )));
        }
        if self.fc_global.cols() != channels {
            return Err(Error::arg(format!(
                "global projection takes {} inputs, need {channels}",
                self.fc_global.cols()
            )));
        }
        for (name, fc) in [("high", &self.fc_high), ("low", &self.fc_low)] {
            if fc.cols() != self.fc_global.rows() {
                return Err(Error::arg(format!(
                    "{name} gate head takes {} inputs but global projection emits {}",
                    fc.cols(),
                    self.fc_global.rows()
                )));
            }
            if fc.rows() != channels {
                return Err(Error::arg(format!(
                    "{name} gate head emits {} values, need {channels}",
                    fc.rows()
                )));
            }
        }
        Ok(())
    }

    /// Seeded parameters for `channels`-channel maps: `kernel`-sized
    /// attention conv with same-padding, and square gate projections.
    pub fn seeded(
        channels: usize,
        kernel: usize,
        pool_window: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let p = FreqSelectorParams {
            pool_window,
            decomp_conv: ConvParams::seeded(channels, channels, kernel, 1, kernel / 2, rng)?,
            decomp_bn: BatchNormParams::seeded(channels, rng)?,
            fc_global: LinearParams::seeded(channels, channels, rng)?,
            fc_high: LinearParams::seeded(channels, channels, rng)?,
            fc_low: LinearParams::seeded(channels, channels, rng)?,
        };
        p.validate_for_channels(channels)?;
        Ok(p)
    }

    /// All-zero weights (uniform attention, gates at 1/2). Mostly useful as a
    /// baseline in tests.
    pub fn zeros(channels: usize) -> Result<Self> {
        Ok(FreqSelectorParams {
            pool_window: 1,
            decomp_conv: ConvParams::zeros(channels, channels, 1, 1, 0)?,
            decomp_bn: BatchNormParams::identity(channels)?,
            fc_global: LinearParams::zeros(channels, channels)?,
            fc_high: LinearParams::zeros(channels, channels)?,
            fc_low: LinearParams::zeros(channels, channels)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.decomp_conv.validate()?;
        self.decomp_bn.validate()?;
        self.fc_global.validate()?;
        self.fc_high.validate()?;
        self.fc_low.validate()?;
        self.validate_for_channels(self.decomp_bn.channels())
    }
}

/// High/low frequency split of one feature map; both parts share the
/// original's shape and modality, and sum back to it.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqPair {
    pub high: FeatureMap,
    pub low: FeatureMap,
}

impl FreqPair {
    pub fn new(high: FeatureMap, low: FeatureMap) -> Result<Self> {
        if !high.same_shape(&low) {
            return Err(Error::arg(format!(
                "frequency pair parts disagree in shape: {:?} vs {:?}",
                high.tensor().shape(),
                low.tensor().shape()
            )));
        }
        if high.modality() != low.modality() {
            return Err(Error::arg(
                "frequency pair parts disagree in modality".to_string(),
            ));
        }
        Ok(FreqPair { high, low })
    }
}

/// Nearest-neighbour upsampling of a map to the given spatial extent.
fn upsample_nearest(x: &FeatureMap, out_h: usize, out_w: usize) -> Result<FeatureMap> {
    let (c, h, w) = (x.channels(), x.height(), x.width());
    let src = x.data();
    let mut out = vec![0.0; c * out_h * out_w];
    for ch in 0..c {
        for oy in 0..out_h {
            let sy = oy * h / out_h;
            for ox in 0..out_w {
                let sx = ox * w / out_w;
                out[(ch * out_h + oy) * out_w + ox] = src[(ch * h + sy) * w + sx];
            }
        }
    }
    FeatureMap::new(x.modality(), Tensor::new(&[c, out_h, out_w], out)?)
}

/// Splits a feature map into high- and low-frequency parts.
///
/// The attention mask is a per-channel spatial softmax over
/// `BN(Conv(AvgPool(x)))`, upsampled back to the input extent; the high part
/// is the input modulated by the mask and the low part the remainder
/// `x - high`.
pub fn decompose(f_ori: &FeatureMap, params: &FreqSelectorParams) -> Result<FreqPair> {
    let channels = f_ori.channels();
    params.validate_for_channels(channels)?;
    let (h, w) = (f_ori.height(), f_ori.width());
    // Clamp the pool window so maps smaller than it still decompose; with a
    // window of k the pooled extent is floor(dim / k).
    let k_eff = params.pool_window.min(h).min(w);
    let pooled = avg_pool2d(f_ori, k_eff, k_eff)?;
    let logits = batch_norm_infer(&conv2d(&pooled, &params.decomp_conv)?, &params.decomp_bn)?;
    let attn = upsample_nearest(&spatial_softmax(&logits)?, h, w)?;
    let mut high = Vec::with_capacity(f_ori.data().len());
    let mut low = Vec::with_capacity(f_ori.data().len());
    for (&x, &a) in f_ori.data().iter().zip(attn.data()) {
        let hi = x * a;
        high.push(hi);
        low.push(x - hi);
    }
    FreqPair::new(f_ori.with_data(high)?, f_ori.with_data(low)?)
}

/// Recombines a frequency pair with per-channel sigmoid gates.
///
/// Both gates are projected from the pooled sum of the two parts; each output
/// channel is `gate_high * high + gate_low * low`.
pub fn select_fuse(pair: &FreqPair, params: &FreqSelectorParams) -> Result<FeatureMap> {
    let channels = pair.high.channels();
    params.validate_for_channels(channels)?;
    let sum = pair.high.with_data(
        pair.high
            .data()
            .iter()
            .zip(pair.low.data())
            .map(|(&a, &b)| a + b)
            .collect(),
    )?;
    let descriptor = params.fc_global.apply(&global_avg_pool(&sum))?;
    let gate_high: Vec<f64> = params
        .fc_high
        .apply(&descriptor)?
        .into_iter()
        .map(sigmoid)
        .collect();
    let gate_low: Vec<f64> = params
        .fc_low
        .apply(&descriptor)?
        .into_iter()
        .map(sigmoid)
        .collect();
    let plane = pair.high.height() * pair.high.width();
    let (hd, ld) = (pair.high.data(), pair.low.data());
    let mut out = Vec::with_capacity(hd.len());
    for ch in 0..channels {
        let (gh, gl) = (gate_high[ch], gate_low[ch]);
        for p in 0..plane {
            out.push(gh * hd[ch * plane + p] + gl * ld[ch * plane + p]);
        }
    }
    pair.high.with_data(out)
}

/// Full frequency-selection block: decompose, then gate-recombine.
pub fn frequency_select(f_ori: &FeatureMap, params: &FreqSelectorParams) -> Result<FeatureMap> {
    select_fuse(&decompose(f_ori, params)?, params)
}
