//! Patch embedding, the transformer-surrogate encoder blocks, and the
//! prediction head.
//!
//! The surrogate stands in for a frozen foundation-model backbone: pre-norm
//! blocks with single-head scaled dot-product self-attention and a GELU
//! feed-forward of hidden width `4H`, at a width small enough for sub-second
//! tests. It is deliberately untrained — the adapters and memory, not the
//! backbone, are the subject here — but it is a faithful miniature, so
//! injected adapter output propagates the way it would in the full stack.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::kernel::{gelu, layer_norm, sigmoid, softmax_slice, FeatureMap, LinearParams};
use crate::tokens::TokenSequence;

/// Per-vector layer normalisation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub epsilon: f64,
}

impl LayerNormParams {
    pub fn identity(dim: usize) -> Self {
        LayerNormParams {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            epsilon: 1e-5,
        }
    }

    pub fn seeded(dim: usize, rng: &mut impl Rng) -> Self {
        LayerNormParams {
            gamma: (0..dim).map(|_| 1.0 + rng.random_range(-0.1..=0.1)).collect(),
            beta: (0..dim).map(|_| rng.random_range(-0.05..=0.05)).collect(),
            epsilon: 1e-5,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.gamma.len() != dim || self.beta.len() != dim {
            return Err(Error::arg(format!(
                "layer norm sized for {} / {} but tokens have dimension {dim}",
                self.gamma.len(),
                self.beta.len()
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::arg("layer norm epsilon must be positive"));
        }
        if self
            .gamma
            .iter()
            .chain(&self.beta)
            .any(|v| !v.is_finite())
        {
            return Err(Error::arg("layer norm parameters contain non-finite value"));
        }
        Ok(())
    }
}

/// Single-head self-attention projections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub wq: LinearParams,
    pub wk: LinearParams,
    pub wv: LinearParams,
    pub wo: LinearParams,
}

/// Two-layer GELU feed-forward with hidden width `4 * dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardParams {
    pub w1: LinearParams,
    pub w2: LinearParams,
}

/// One pre-norm encoder block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayerParams {
    pub ln_attn: LayerNormParams,
    pub attn: AttentionParams,
    pub ln_ffn: LayerNormParams,
    pub ffn: FeedForwardParams,
}

impl EncoderLayerParams {
    pub fn seeded(dim: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(EncoderLayerParams {
            ln_attn: LayerNormParams::seeded(dim, rng),
            attn: AttentionParams {
                wq: LinearParams::seeded(dim, dim, rng)?,
                wk: LinearParams::seeded(dim, dim, rng)?,
                wv: LinearParams::seeded(dim, dim, rng)?,
                wo: LinearParams::seeded(dim, dim, rng)?,
            },
            ln_ffn: LayerNormParams::seeded(dim, rng),
            ffn: FeedForwardParams {
                w1: LinearParams::seeded(4 * dim, dim, rng)?,
                w2: LinearParams::seeded(dim, 4 * dim, rng)?,
            },
        })
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        self.ln_attn.validate(dim)?;
        self.ln_ffn.validate(dim)?;
        for (name, p, rows, cols) in [
            ("wq", &self.attn.wq, dim, dim),
            ("wk", &self.attn.wk, dim, dim),
            ("wv", &self.attn.wv, dim, dim),
            ("wo", &self.attn.wo, dim, dim),
            ("ffn.w1", &self.ffn.w1, 4 * dim, dim),
            ("ffn.w2", &self.ffn.w2, dim, 4 * dim),
        ] {
            p.validate()?;
            if p.rows() != rows || p.cols() != cols {
                return Err(Error::arg(format!(
                    "{name} must be {rows}x{cols}, got {}x{}",
                    p.rows(),
                    p.cols()
                )));
            }
        }
        Ok(())
    }
}

/// The full surrogate: a shared patch embedding plus `L` blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    /// Linear patchifier mapping a flattened `channels * patch * patch`
    /// pixel block to a `dim`-vector; shared by both modalities.
    pub patch_embed: LinearParams,
    pub layers: Vec<EncoderLayerParams>,
}

impl EncoderParams {
    pub fn seeded(
        layers: usize,
        dim: usize,
        patch: usize,
        channels: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if layers == 0 {
            return Err(Error::arg("encoder needs at least one layer"));
        }
        let patch_embed = LinearParams::seeded(dim, channels * patch * patch, rng)?;
        let layers = (0..layers)
            .map(|_| EncoderLayerParams::seeded(dim, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(EncoderParams {
            patch_embed,
            layers,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn dim(&self) -> usize {
        self.patch_embed.rows()
    }

    pub fn validate(&self, dim: usize, patch: usize, channels: usize) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::arg("encoder needs at least one layer"));
        }
        self.patch_embed.validate()?;
        if self.patch_embed.rows() != dim || self.patch_embed.cols() != channels * patch * patch {
            return Err(Error::arg(format!(
                "patch embedding must be {dim}x{}, got {}x{}",
                channels * patch * patch,
                self.patch_embed.rows(),
                self.patch_embed.cols()
            )));
        }
        for layer in &self.layers {
            layer.validate(dim)?;
        }
        Ok(())
    }
}

/// Patch-embeds one feature map: non-overlapping `patch x patch` blocks,
/// row-major over the patch grid, each flattened channel-major and projected
/// to `dim`. Returns the flat `n_patches x dim` token block.
pub fn embed(map: &FeatureMap, patch: usize, projection: &LinearParams) -> Result<Vec<f64>> {
    if patch == 0 {
        return Err(Error::arg("patch size must be >= 1"));
    }
    let (c, h, w) = (map.channels(), map.height(), map.width());
    if h % patch != 0 || w % patch != 0 {
        return Err(Error::arg(format!(
            "spatial extent {h}x{w} not divisible by patch size {patch}"
        )));
    }
    if projection.cols() != c * patch * patch {
        return Err(Error::arg(format!(
            "patch embedding takes {} inputs but patches have {} values",
            projection.cols(),
            c * patch * patch
        )));
    }
    let (gh, gw) = (h / patch, w / patch);
    let src = map.data();
    let mut flat = vec![0.0; c * patch * patch];
    let mut out = Vec::with_capacity(gh * gw * projection.rows());
    for py in 0..gh {
        for px in 0..gw {
            let mut i = 0;
            for ch in 0..c {
                for dy in 0..patch {
                    let row = py * patch + dy;
                    for dx in 0..patch {
                        flat[i] = src[(ch * h + row) * w + px * patch + dx];
                        i += 1;
                    }
                }
            }
            out.extend_from_slice(&projection.apply(&flat)?);
        }
    }
    Ok(out)
}

/// Runs one pre-norm block over a flat `n x dim` token buffer in place.
pub fn layer_forward(
    tokens: &mut [f64],
    n: usize,
    dim: usize,
    params: &EncoderLayerParams,
) -> Result<()> {
    if tokens.len() != n * dim {
        return Err(Error::arg(format!(
            "token buffer length {} != {n} x {dim}",
            tokens.len()
        )));
    }
    let scale = (dim as f64).sqrt().recip();
    // Attention sublayer.
    let mut q = vec![0.0; n * dim];
    let mut k = vec![0.0; n * dim];
    let mut v = vec![0.0; n * dim];
    for i in 0..n {
        let normed = layer_norm(
            &tokens[i * dim..(i + 1) * dim],
            &params.ln_attn.gamma,
            &params.ln_attn.beta,
            params.ln_attn.epsilon,
        )?;
        q[i * dim..(i + 1) * dim].copy_from_slice(&params.attn.wq.apply(&normed)?);
        k[i * dim..(i + 1) * dim].copy_from_slice(&params.attn.wk.apply(&normed)?);
        v[i * dim..(i + 1) * dim].copy_from_slice(&params.attn.wv.apply(&normed)?);
    }
    let mut scores = vec![0.0; n];
    let mut attended = vec![0.0; dim];
    for i in 0..n {
        for (j, slot) in scores.iter_mut().enumerate() {
            let mut acc = 0.0;
            for d in 0..dim {
                acc += q[i * dim + d] * k[j * dim + d];
            }
            *slot = acc * scale;
        }
        let weights = softmax_slice(&scores)?;
        attended.iter_mut().for_each(|a| *a = 0.0);
        for (j, &wgt) in weights.iter().enumerate() {
            for d in 0..dim {
                attended[d] += wgt * v[j * dim + d];
            }
        }
        let projected = params.attn.wo.apply(&attended)?;
        for d in 0..dim {
            tokens[i * dim + d] += projected[d];
        }
    }
    // Feed-forward sublayer.
    for i in 0..n {
        let normed = layer_norm(
            &tokens[i * dim..(i + 1) * dim],
            &params.ln_ffn.gamma,
            &params.ln_ffn.beta,
            params.ln_ffn.epsilon,
        )?;
        let mut hidden = params.ffn.w1.apply(&normed)?;
        for h in hidden.iter_mut() {
            *h = gelu(*h);
        }
        let out = params.ffn.w2.apply(&hidden)?;
        for d in 0..dim {
            tokens[i * dim + d] += out[d];
        }
    }
    Ok(())
}

/// Prediction head: a scalar centre score per search token and a size
/// regressor read off the best-scoring token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    /// `1 x dim` projection producing the per-token centre score.
    pub score: LinearParams,
    /// `2 x dim` projection producing (width, height) logits.
    pub size: LinearParams,
}

impl HeadParams {
    pub fn seeded(dim: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(HeadParams {
            score: LinearParams::seeded(1, dim, rng)?,
            size: LinearParams::seeded(2, dim, rng)?,
        })
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        self.score.validate()?;
        self.size.validate()?;
        if self.score.rows() != 1 || self.score.cols() != dim {
            return Err(Error::arg(format!(
                "score head must be 1x{dim}, got {}x{}",
                self.score.rows(),
                self.score.cols()
            )));
        }
        if self.size.rows() != 2 || self.size.cols() != dim {
            return Err(Error::arg(format!(
                "size head must be 2x{dim}, got {}x{}",
                self.size.rows(),
                self.size.cols()
            )));
        }
        Ok(())
    }
}

/// Decodes a box from the search tokens: argmax of the centre score (first
/// index on ties) selects a grid cell whose centre becomes the box centre;
/// the size head of that token, squashed through a sigmoid and scaled by the
/// frame extent, gives width and height.
pub fn predict_box(
    sequence: &TokenSequence,
    head: &HeadParams,
    frame_size: usize,
) -> Result<BoundingBox> {
    let n_search = sequence.n_search();
    let grid = (n_search as f64).sqrt().round() as usize;
    if grid * grid != n_search {
        return Err(Error::arg(format!(
            "search region of {n_search} tokens is not a square grid"
        )));
    }
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for i in 0..n_search {
        let s = head.score.apply(sequence.token(i))?[0];
        if s > best_score {
            best_score = s;
            best = i;
        }
    }
    let cell = frame_size as f64 / grid as f64;
    let cx = ((best % grid) as f64 + 0.5) * cell;
    let cy = ((best / grid) as f64 + 0.5) * cell;
    let wh = head.size.apply(sequence.token(best))?;
    let w = sigmoid(wh[0]) * frame_size as f64;
    let h = sigmoid(wh[1]) * frame_size as f64;
    BoundingBox::new(cx - w / 2.0, cy - h / 2.0, w, h)
}
