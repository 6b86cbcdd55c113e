//! Modality fusion blocks.
//!
//! [`mfm`] fuses an RGB feature map with an auxiliary-modality map through
//! three branches — a spatial-attention branch per modality plus a shared
//! channel-gate branch — and a closing convolution. [`fmfm`] runs each input
//! through a frequency-selection block first and is intended for the
//! shallowest layer, where band structure is still present. [`inject`] adds a
//! fused map back onto the search and template tokens of a sequence, leaving
//! the cue token untouched.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq::{frequency_select, FreqSelectorParams};
use crate::kernel::{
    conv2d, global_avg_pool, sigmoid, spatial_softmax, ConvParams, FeatureMap, LinearParams,
    Modality,
};
use crate::tokens::TokenSequence;

/// Parameters of one modality-fusion block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfmParams {
    /// Entry convolution for the RGB stream.
    pub conv_rgb: ConvParams,
    /// Entry convolution for the auxiliary stream.
    pub conv_x: ConvParams,
    /// Channel-gate projection applied to the pooled joint descriptor.
    pub fc_channel: LinearParams,
    /// Closing convolution over the summed branches.
    pub conv_out: ConvParams,
}

impl MfmParams {
    /// Checks the parameter chain fits `channels`-channel inputs.
    pub fn validate_for_channels(&self, channels: usize) -> Result<()> {
        if self.conv_rgb.in_channels() != channels || self.conv_x.in_channels() != channels {
            return Err(Error::arg(format!(
                "fusion entry convs take {} / {} channels, need {channels}",
                self.conv_rgb.in_channels(),
                self.conv_x.in_channels()
            )));
        }
        let mid = self.conv_rgb.out_channels();
        if self.conv_x.out_channels() != mid {
            return Err(Error::arg(format!(
                "fusion entry convs emit different channel counts: {mid} vs {}",
                self.conv_x.out_channels()
            )));
        }
        if self.fc_channel.cols() != mid || self.fc_channel.rows() != mid {
            return Err(Error::arg(format!(
                "channel gate must be {mid} -> {mid}, got {} -> {}",
                self.fc_channel.cols(),
                self.fc_channel.rows()
            )));
        }
        if self.conv_out.in_channels() != mid {
            return Err(Error::arg(format!(
                "closing conv takes {} channels but branches emit {mid}",
                self.conv_out.in_channels()
            )));
        }
        Ok(())
    }

    /// Seeded channel-preserving block built from 1x1 convolutions.
    pub fn seeded(channels: usize, rng: &mut impl Rng) -> Result<Self> {
        let p = MfmParams {
            conv_rgb: ConvParams::seeded(channels, channels, 1, 1, 0, rng)?,
            conv_x: ConvParams::seeded(channels, channels, 1, 1, 0, rng)?,
            fc_channel: LinearParams::seeded(channels, channels, rng)?,
            conv_out: ConvParams::seeded(channels, channels, 1, 1, 0, rng)?,
        };
        p.validate_for_channels(channels)?;
        Ok(p)
    }

    /// All-zero block: output is identically zero, so injection is a no-op.
    pub fn zeros(channels: usize) -> Result<Self> {
        Ok(MfmParams {
            conv_rgb: ConvParams::zeros(channels, channels, 1, 1, 0)?,
            conv_x: ConvParams::zeros(channels, channels, 1, 1, 0)?,
            fc_channel: LinearParams::zeros(channels, channels)?,
            conv_out: ConvParams::zeros(channels, channels, 1, 1, 0)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.conv_rgb.validate()?;
        self.conv_x.validate()?;
        self.fc_channel.validate()?;
        self.conv_out.validate()?;
        self.validate_for_channels(self.conv_rgb.in_channels())
    }
}

/// Parameters of the frequency-aware fusion block used at the shallow layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmfmParams {
    pub freq_rgb: FreqSelectorParams,
    pub freq_x: FreqSelectorParams,
    pub mfm: MfmParams,
}

impl FmfmParams {
    pub fn seeded(
        channels: usize,
        freq_kernel: usize,
        pool_window: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(FmfmParams {
            freq_rgb: FreqSelectorParams::seeded(channels, freq_kernel, pool_window, rng)?,
            freq_x: FreqSelectorParams::seeded(channels, freq_kernel, pool_window, rng)?,
            mfm: MfmParams::seeded(channels, rng)?,
        })
    }

    pub fn zeros(channels: usize) -> Result<Self> {
        Ok(FmfmParams {
            freq_rgb: FreqSelectorParams::zeros(channels)?,
            freq_x: FreqSelectorParams::zeros(channels)?,
            mfm: MfmParams::zeros(channels)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.freq_rgb.validate()?;
        self.freq_x.validate()?;
        self.mfm.validate()
    }
}

/// Fuses an RGB map with an auxiliary-modality map.
///
/// Each stream passes through its entry convolution and is modulated by its
/// own per-channel spatial softmax; a third branch gates the pooled sum of
/// the two streams per channel and is broadcast over all positions. The three
/// branches are summed and passed through the closing convolution.
pub fn mfm(i_rgb: &FeatureMap, i_x: &FeatureMap, params: &MfmParams) -> Result<FeatureMap> {
    if i_rgb.modality() != Modality::Rgb || i_x.modality() != Modality::Aux {
        return Err(Error::arg(format!(
            "fusion inputs must be (rgb, aux), got ({}, {})",
            i_rgb.modality(),
            i_x.modality()
        )));
    }
    if !i_rgb.same_shape(i_x) {
        return Err(Error::arg(format!(
            "fusion inputs disagree in shape: {:?} vs {:?}",
            i_rgb.tensor().shape(),
            i_x.tensor().shape()
        )));
    }
    params.validate_for_channels(i_rgb.channels())?;
    let f_rgb = conv2d(i_rgb, &params.conv_rgb)?;
    let f_x = conv2d(i_x, &params.conv_x)?;
    if !f_rgb.same_shape(&f_x) {
        return Err(Error::arg(
            "fusion entry convs produced different spatial extents".to_string(),
        ));
    }

    let spatial_branch = |f: &FeatureMap| -> Result<Vec<f64>> {
        let soft = spatial_softmax(f)?;
        Ok(f.data()
            .iter()
            .zip(soft.data())
            .map(|(&v, &s)| v * s)
            .collect())
    };
    let s_rgb = spatial_branch(&f_rgb)?;
    let s_x = spatial_branch(&f_x)?;

    let joint = f_rgb.with_data(
        f_rgb
            .data()
            .iter()
            .zip(f_x.data())
            .map(|(&a, &b)| a + b)
            .collect(),
    )?;
    let g = global_avg_pool(&joint);
    let gate = params.fc_channel.apply(&g)?;
    let channel_branch: Vec<f64> = g
        .iter()
        .zip(&gate)
        .map(|(&gv, &gt)| gv * sigmoid(gt))
        .collect();

    let (channels, plane) = (f_rgb.channels(), f_rgb.height() * f_rgb.width());
    let mut combined = Vec::with_capacity(channels * plane);
    for ch in 0..channels {
        for p in 0..plane {
            combined.push(s_rgb[ch * plane + p] + s_x[ch * plane + p] + channel_branch[ch]);
        }
    }
    conv2d(&f_rgb.with_data(combined)?, &params.conv_out)
}

/// Frequency-aware fusion: each modality is frequency-selected in place, then
/// the pair goes through the standard fusion block.
pub fn fmfm(i_rgb: &FeatureMap, i_x: &FeatureMap, params: &FmfmParams) -> Result<FeatureMap> {
    let r = frequency_select(i_rgb, &params.freq_rgb)?;
    let x = frequency_select(i_x, &params.freq_x)?;
    mfm(&r, &x, &params.mfm)
}

/// Adds a fused feature map onto the search and template tokens of a
/// sequence. Spatial position `p` (row-major) corresponds to token `p`;
/// channel `c` to token component `c`. The cue token is never modified.
pub fn inject(fused: &FeatureMap, sequence: &TokenSequence) -> Result<TokenSequence> {
    let n_inject = sequence.n_search() + sequence.n_template();
    let positions = fused.height() * fused.width();
    if positions != n_inject {
        return Err(Error::arg(format!(
            "fused map has {positions} positions but sequence has {n_inject} search+template tokens"
        )));
    }
    if fused.channels() != sequence.dim() {
        return Err(Error::arg(format!(
            "fused map has {} channels but tokens have dimension {}",
            fused.channels(),
            sequence.dim()
        )));
    }
    let mut out = sequence.clone();
    let dim = sequence.dim();
    let src = fused.data();
    for p in 0..n_inject {
        let token = out.token_mut(p);
        for c in 0..dim {
            token[c] += src[c * positions + p];
        }
    }
    Ok(out)
}
