//! Frame-by-frame tracking orchestration.
//!
//! A [`TrackerSession`] owns the encoder surrogate, the fusion adapters, the
//! memory pool, and the cached template tokens. Each [`TrackerSession::track_frame`]
//! call runs the full per-frame pipeline:
//!
//! 1. retrieve a cue from the memory pool with the previous cue as query and
//!    pass it through the memory filter;
//! 2. patch-embed both modalities of the frame;
//! 3. fuse the shallow features with the frequency-aware fusion block and add
//!    them onto the token sequence;
//! 4. for each encoder layer: run the block, fuse the two streams again with
//!    the plain fusion block, add the result in, and pass the cue slot
//!    through the memory filter;
//! 5. decode a box from the search tokens;
//! 6. update the memory pool with the output cue.
//!
//! The auxiliary modality flows through a parallel token stream (no cue
//! slot) so each layer's fusion sees both modalities at matching depth; only
//! the main stream receives the fused output.
//!
//! With `adapters_enabled` off the session degrades to the surrogate encoder
//! alone: the cue slot is pinned to zero at every layer boundary, no fusion
//! output is added, and the memory pool is left untouched. Setting every
//! adapter parameter to zero reproduces that baseline bit for bit, which the
//! test suite checks.

pub mod encoder;
pub mod loss;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::fusion::{fmfm, inject, mfm, FmfmParams, MfmParams};
use crate::kernel::{FeatureMap, Modality, Tensor};
use crate::memory::{CueToken, FilterParams, MemoryPool, MemoryPoolConfig};
use crate::tokens::{tokens_to_map, TokenSequence};

pub use encoder::{
    embed, layer_forward, predict_box, AttentionParams, EncoderLayerParams, EncoderParams,
    FeedForwardParams, HeadParams, LayerNormParams,
};
pub use loss::{
    focal_loss, loss_gradients, regression_loss, total_loss, LossConfig, LossGradients,
};

/// One dual-modality input frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub index: usize,
    pub rgb: FeatureMap,
    pub aux: FeatureMap,
}

impl Frame {
    pub fn new(index: usize, rgb: FeatureMap, aux: FeatureMap) -> Result<Self> {
        if rgb.modality() != Modality::Rgb || aux.modality() != Modality::Aux {
            return Err(Error::arg("frame streams carry the wrong modality tags"));
        }
        if !rgb.same_shape(&aux) {
            return Err(Error::arg(format!(
                "frame modalities disagree in shape: {:?} vs {:?}",
                rgb.tensor().shape(),
                aux.tensor().shape()
            )));
        }
        Ok(Frame { index, rgb, aux })
    }
}

/// Square dual-modality template crop plus the box it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub rgb: FeatureMap,
    pub aux: FeatureMap,
    pub source_box: BoundingBox,
}

impl Template {
    pub fn new(rgb: FeatureMap, aux: FeatureMap, source_box: BoundingBox) -> Result<Self> {
        if rgb.modality() != Modality::Rgb || aux.modality() != Modality::Aux {
            return Err(Error::arg("template streams carry the wrong modality tags"));
        }
        if !rgb.same_shape(&aux) {
            return Err(Error::arg("template modalities disagree in shape"));
        }
        if rgb.height() != rgb.width() {
            return Err(Error::arg(format!(
                "template crop must be square, got {}x{}",
                rgb.height(),
                rgb.width()
            )));
        }
        Ok(Template {
            rgb,
            aux,
            source_box,
        })
    }

    /// Crops a `size x size` template centred on the box centre, clamped to
    /// the frame bounds.
    pub fn from_frame(frame: &Frame, source_box: &BoundingBox, size: usize) -> Result<Template> {
        if source_box.w <= 0.0 || source_box.h <= 0.0 {
            return Err(Error::arg("template source box must have positive area"));
        }
        let (h, w) = (frame.rgb.height(), frame.rgb.width());
        if size == 0 || size > h || size > w {
            return Err(Error::arg(format!(
                "template size {size} does not fit a {h}x{w} frame"
            )));
        }
        let (cx, cy) = source_box.center();
        let clamp = |c: f64, extent: usize| -> usize {
            let ideal = c - size as f64 / 2.0;
            ideal.round().clamp(0.0, (extent - size) as f64) as usize
        };
        let (left, top) = (clamp(cx, w), clamp(cy, h));
        let crop = |m: &FeatureMap| -> Result<FeatureMap> {
            let c = m.channels();
            let src = m.data();
            let mut out = Vec::with_capacity(c * size * size);
            for ch in 0..c {
                for y in 0..size {
                    for x in 0..size {
                        out.push(src[(ch * h + top + y) * w + left + x]);
                    }
                }
            }
            FeatureMap::new(m.modality(), Tensor::new(&[c, size, size], out)?)
        };
        Template::new(crop(&frame.rgb)?, crop(&frame.aux)?, *source_box)
    }

    pub fn size(&self) -> usize {
        self.rgb.height()
    }
}

/// Static geometry and policy of a tracking session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Encoder depth.
    pub layers: usize,
    /// Token dimension `H`.
    pub dim: usize,
    /// Patch size for both regions.
    pub patch: usize,
    /// Square frame extent in pixels.
    pub frame_size: usize,
    /// Channels per modality.
    pub frame_channels: usize,
    /// Square template extent in pixels.
    pub template_size: usize,
    /// Maximum number of templates (slots beyond the first start empty).
    pub template_capacity: usize,
    /// Bottleneck reduction ratio of the memory filter.
    pub filter_ratio: usize,
    /// Kernel size of the frequency-selection attention conv.
    pub freq_kernel: usize,
    /// Pool window of the frequency-selection block.
    pub freq_pool_window: usize,
    pub memory: MemoryPoolConfig,
    /// When false the session runs the bare surrogate encoder: no fusion, no
    /// memory, cue slot pinned to zero.
    pub adapters_enabled: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            layers: 4,
            dim: 64,
            patch: 8,
            frame_size: 64,
            frame_channels: 2,
            template_size: 32,
            template_capacity: 1,
            filter_ratio: 4,
            freq_kernel: 3,
            freq_pool_window: 2,
            memory: MemoryPoolConfig::default(),
            adapters_enabled: true,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("layers", self.layers),
            ("dim", self.dim),
            ("patch", self.patch),
            ("frame_size", self.frame_size),
            ("frame_channels", self.frame_channels),
            ("template_size", self.template_size),
            ("template_capacity", self.template_capacity),
            ("filter_ratio", self.filter_ratio),
            ("freq_kernel", self.freq_kernel),
            ("freq_pool_window", self.freq_pool_window),
        ] {
            if v == 0 {
                return Err(Error::arg(format!("session {name} must be >= 1")));
            }
        }
        if self.frame_size % self.patch != 0 {
            return Err(Error::arg(format!(
                "frame size {} not divisible by patch size {}",
                self.frame_size, self.patch
            )));
        }
        if self.template_size % self.patch != 0 {
            return Err(Error::arg(format!(
                "template size {} not divisible by patch size {}",
                self.template_size, self.patch
            )));
        }
        if self.template_size > self.frame_size {
            return Err(Error::arg(format!(
                "template size {} exceeds frame size {}",
                self.template_size, self.frame_size
            )));
        }
        if self.dim % self.filter_ratio != 0 {
            return Err(Error::arg(format!(
                "filter ratio {} does not divide token dimension {}",
                self.filter_ratio, self.dim
            )));
        }
        if self.freq_kernel % 2 == 0 {
            return Err(Error::arg("frequency-selection kernel size must be odd"));
        }
        self.memory.validate()
    }

    /// Search-grid side length in patches.
    pub fn search_grid(&self) -> usize {
        self.frame_size / self.patch
    }

    /// Template-grid side length in patches.
    pub fn template_grid(&self) -> usize {
        self.template_size / self.patch
    }

    /// Number of search tokens (a perfect square by construction).
    pub fn n_search(&self) -> usize {
        self.search_grid() * self.search_grid()
    }

    /// Tokens per template slot.
    pub fn tokens_per_template(&self) -> usize {
        self.template_grid() * self.template_grid()
    }

    /// Total template tokens across all slots (empty slots count as zeros).
    pub fn n_template_tokens(&self) -> usize {
        self.template_capacity * self.tokens_per_template()
    }
}

/// Every tunable parameter the adapters add on top of the surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterParams {
    /// Frequency-aware fusion used before the first encoder layer.
    pub fmfm: FmfmParams,
    /// One plain fusion block per encoder layer.
    pub mfm_layers: Vec<MfmParams>,
    /// The memory filter (also owned by the pool at run time).
    pub filter: FilterParams,
}

impl AdapterParams {
    pub fn seeded(cfg: &SessionConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        Ok(AdapterParams {
            fmfm: FmfmParams::seeded(cfg.dim, cfg.freq_kernel, cfg.freq_pool_window, rng)?,
            mfm_layers: (0..cfg.layers)
                .map(|_| MfmParams::seeded(cfg.dim, rng))
                .collect::<Result<Vec<_>>>()?,
            filter: FilterParams::seeded(cfg.dim, cfg.filter_ratio, rng)?,
        })
    }

    /// All-zero adapters: fusion output and filter output are identically
    /// zero, making the adapted pipeline coincide with the bare surrogate.
    pub fn zeros(cfg: &SessionConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(AdapterParams {
            fmfm: FmfmParams::zeros(cfg.dim)?,
            mfm_layers: (0..cfg.layers)
                .map(|_| MfmParams::zeros(cfg.dim))
                .collect::<Result<Vec<_>>>()?,
            filter: FilterParams::zeros(cfg.dim, cfg.filter_ratio)?,
        })
    }

    pub fn validate(&self, cfg: &SessionConfig) -> Result<()> {
        self.fmfm.validate()?;
        self.fmfm.freq_rgb.validate_for_channels(cfg.dim)?;
        self.fmfm.freq_x.validate_for_channels(cfg.dim)?;
        self.fmfm.mfm.validate_for_channels(cfg.dim)?;
        if self.mfm_layers.len() != cfg.layers {
            return Err(Error::arg(format!(
                "{} per-layer fusion blocks for {} encoder layers",
                self.mfm_layers.len(),
                cfg.layers
            )));
        }
        for m in &self.mfm_layers {
            m.validate()?;
            m.validate_for_channels(cfg.dim)?;
        }
        self.filter.validate()?;
        if self.filter.input_dim() != cfg.dim || self.filter.ratio() != cfg.filter_ratio {
            return Err(Error::arg(format!(
                "filter is {}-dimensional with ratio {}, session wants {} / {}",
                self.filter.input_dim(),
                self.filter.ratio(),
                cfg.dim,
                cfg.filter_ratio
            )));
        }
        Ok(())
    }
}

/// Mutable per-sequence tracking state.
#[derive(Debug, Clone)]
pub struct TrackerSession {
    cfg: SessionConfig,
    encoder: EncoderParams,
    head: HeadParams,
    adapters: AdapterParams,
    pool: MemoryPool,
    prev_cue: CueToken,
    templates: Vec<Template>,
    template_tokens_rgb: Vec<f64>,
    template_tokens_aux: Vec<f64>,
    frames_tracked: usize,
}

impl TrackerSession {
    /// Builds a session from validated parts and the initial template. Seeds
    /// the memory pool with the mean of the embedded template tokens.
    pub fn new(
        cfg: SessionConfig,
        encoder: EncoderParams,
        head: HeadParams,
        adapters: AdapterParams,
        template: Template,
    ) -> Result<Self> {
        cfg.validate()?;
        encoder.validate(cfg.dim, cfg.patch, cfg.frame_channels)?;
        if encoder.depth() != cfg.layers {
            return Err(Error::arg(format!(
                "encoder has {} layers, session wants {}",
                encoder.depth(),
                cfg.layers
            )));
        }
        head.validate(cfg.dim)?;
        adapters.validate(&cfg)?;
        let pool = MemoryPool::new(adapters.filter.clone(), cfg.memory.clone())?;
        let mut session = TrackerSession {
            cfg,
            encoder,
            head,
            adapters,
            pool,
            prev_cue: CueToken::zeros(1)?, // replaced below
            templates: Vec::new(),
            template_tokens_rgb: Vec::new(),
            template_tokens_aux: Vec::new(),
            frames_tracked: 0,
        };
        session.check_template(&template)?;
        session.templates.push(template);
        session.rebuild_template_cache()?;
        let c0 = session.initial_cue()?;
        session.pool.init(&c0)?;
        session.prev_cue = c0;
        Ok(session)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn pool(&self) -> &MemoryPool {
        &self.pool
    }

    /// The cue most recently produced (the pool's next query).
    pub fn last_cue(&self) -> &CueToken {
        &self.prev_cue
    }

    pub fn frames_tracked(&self) -> usize {
        self.frames_tracked
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    fn check_template(&self, t: &Template) -> Result<()> {
        if t.size() != self.cfg.template_size {
            return Err(Error::arg(format!(
                "template is {}px, session wants {}px",
                t.size(),
                self.cfg.template_size
            )));
        }
        if t.rgb.channels() != self.cfg.frame_channels {
            return Err(Error::arg(format!(
                "template has {} channels, session wants {}",
                t.rgb.channels(),
                self.cfg.frame_channels
            )));
        }
        Ok(())
    }

    /// Appends an additional template. Errors once the configured slot count
    /// is full — there is no automatic refresh policy.
    pub fn add_template(&mut self, template: Template) -> Result<()> {
        if self.templates.len() >= self.cfg.template_capacity {
            return Err(Error::state(format!(
                "all {} template slots are occupied",
                self.cfg.template_capacity
            )));
        }
        self.check_template(&template)?;
        self.templates.push(template);
        self.rebuild_template_cache()
    }

    /// Re-embeds all templates into the cached token blocks; empty slots
    /// stay zero.
    fn rebuild_template_cache(&mut self) -> Result<()> {
        let per = self.cfg.tokens_per_template() * self.cfg.dim;
        let total = self.cfg.template_capacity * per;
        let mut rgb = vec![0.0; total];
        let mut aux = vec![0.0; total];
        for (slot, t) in self.templates.iter().enumerate() {
            let r = embed(&t.rgb, self.cfg.patch, &self.encoder.patch_embed)?;
            let a = embed(&t.aux, self.cfg.patch, &self.encoder.patch_embed)?;
            rgb[slot * per..(slot + 1) * per].copy_from_slice(&r);
            aux[slot * per..(slot + 1) * per].copy_from_slice(&a);
        }
        self.template_tokens_rgb = rgb;
        self.template_tokens_aux = aux;
        Ok(())
    }

    /// Initial cue: the mean of all embedded template tokens across both
    /// modalities (occupied slots only).
    fn initial_cue(&self) -> Result<CueToken> {
        let dim = self.cfg.dim;
        let per = self.cfg.tokens_per_template() * dim;
        let occupied = self.templates.len() * per;
        let mut mean = vec![0.0; dim];
        let mut count = 0usize;
        for block in [&self.template_tokens_rgb, &self.template_tokens_aux] {
            for token in block[..occupied].chunks_exact(dim) {
                for (m, &v) in mean.iter_mut().zip(token) {
                    *m += v;
                }
                count += 1;
            }
        }
        for m in mean.iter_mut() {
            *m /= count as f64;
        }
        CueToken::new(mean)
    }

    fn check_frame(&self, frame: &Frame) -> Result<()> {
        let (h, w) = (frame.rgb.height(), frame.rgb.width());
        if h != self.cfg.frame_size || w != self.cfg.frame_size {
            return Err(Error::arg(format!(
                "frame is {h}x{w}, session wants {0}x{0}",
                self.cfg.frame_size
            )));
        }
        if frame.rgb.channels() != self.cfg.frame_channels {
            return Err(Error::arg(format!(
                "frame has {} channels per modality, session wants {}",
                frame.rgb.channels(),
                self.cfg.frame_channels
            )));
        }
        Ok(())
    }

    /// Fuses the search region and each template slot of the two streams and
    /// concatenates the results into one `dim x n x 1` map aligned with the
    /// sequence's token order.
    fn fuse_regions(
        &self,
        main: &TokenSequence,
        aux: &[f64],
        layer: Option<usize>,
    ) -> Result<FeatureMap> {
        let dim = self.cfg.dim;
        let n_search = self.cfg.n_search();
        let per = self.cfg.tokens_per_template();
        let n = n_search + self.cfg.n_template_tokens();
        let mut regions = vec![(0usize, n_search)];
        for slot in 0..self.cfg.template_capacity {
            regions.push((n_search + slot * per, per));
        }
        let mut fused = vec![0.0; dim * n];
        for (offset, count) in regions {
            let main_block = &main.data()[offset * dim..(offset + count) * dim];
            let aux_block = &aux[offset * dim..(offset + count) * dim];
            let rgb_map = tokens_to_map(main_block, count, dim, Modality::Rgb)?;
            let aux_map = tokens_to_map(aux_block, count, dim, Modality::Aux)?;
            let out = match layer {
                None => fmfm(&rgb_map, &aux_map, &self.adapters.fmfm)?,
                Some(l) => mfm(&rgb_map, &aux_map, &self.adapters.mfm_layers[l])?,
            };
            if out.channels() != dim || out.height() * out.width() != count {
                return Err(Error::arg(format!(
                    "fusion block changed geometry: {}x{}x{} from {count} tokens of dim {dim}",
                    out.channels(),
                    out.height(),
                    out.width()
                )));
            }
            let src = out.data();
            for c in 0..dim {
                for p in 0..count {
                    fused[c * n + offset + p] = src[c * count + p];
                }
            }
        }
        FeatureMap::new(Modality::Rgb, Tensor::new(&[dim, n, 1], fused)?)
    }

    fn assert_finite(buffer: &[f64], what: &str) -> Result<()> {
        if buffer.iter().any(|v| !v.is_finite()) {
            return Err(Error::state(format!("non-finite value in {what}")));
        }
        Ok(())
    }

    /// Tracks one frame and returns the predicted box.
    pub fn track_frame(&mut self, frame: &Frame) -> Result<BoundingBox> {
        self.check_frame(frame)?;
        let dim = self.cfg.dim;
        let adapters_on = self.cfg.adapters_enabled;

        // 1. Cue retrieval through the memory filter; the bare surrogate
        //    pins the cue slot to zero instead.
        let cue_in: Vec<f64> = if adapters_on {
            let retrieved = self.pool.retrieve(&self.prev_cue)?;
            self.pool.filter(&retrieved)?.values().to_vec()
        } else {
            vec![0.0; dim]
        };

        // 2. Patch embedding, both modalities.
        let search_rgb = embed(&frame.rgb, self.cfg.patch, &self.encoder.patch_embed)?;
        let mut seq = TokenSequence::from_parts(
            dim,
            &search_rgb,
            &self.template_tokens_rgb,
            &cue_in,
        )?;
        let mut aux_tokens = if adapters_on {
            let mut t = embed(&frame.aux, self.cfg.patch, &self.encoder.patch_embed)?;
            t.extend_from_slice(&self.template_tokens_aux);
            t
        } else {
            Vec::new()
        };
        let n_fuse = self.cfg.n_search() + self.cfg.n_template_tokens();

        // 3. Shallow frequency-aware fusion.
        if adapters_on {
            let fused = self.fuse_regions(&seq, &aux_tokens, None)?;
            seq = inject(&fused, &seq)?;
        }

        // 4. Encoder layers with per-layer fusion and cue filtering.
        let n_tokens = seq.n_tokens();
        let zero_cue = vec![0.0; dim];
        for l in 0..self.cfg.layers {
            layer_forward(seq.data_mut(), n_tokens, dim, &self.encoder.layers[l])?;
            if adapters_on {
                layer_forward(&mut aux_tokens, n_fuse, dim, &self.encoder.layers[l])?;
                let fused = self.fuse_regions(&seq, &aux_tokens, Some(l))?;
                seq = inject(&fused, &seq)?;
                let cue = CueToken::new(seq.cue().to_vec())?;
                let filtered = self.pool.filter(&cue)?;
                seq.set_cue(filtered.values())?;
            } else {
                seq.set_cue(&zero_cue)?;
            }
            Self::assert_finite(seq.data(), "token sequence after encoder layer")?;
        }

        // 5. Box decoding.
        let prediction = predict_box(&seq, &self.head, self.cfg.frame_size)?;

        // 6. Memory update with the output cue.
        if adapters_on {
            let out_cue = CueToken::new(seq.cue().to_vec())?;
            self.pool.update(&out_cue)?;
            self.prev_cue = out_cue;
        }
        self.frames_tracked += 1;
        Ok(prediction)
    }
}
