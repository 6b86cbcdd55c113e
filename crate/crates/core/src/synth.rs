//! Deterministic synthetic dual-modality sequences.
//!
//! Real tracking corpora are far outside desk scale, so the harness renders
//! its own: a textured square target moving over a flat background. The two
//! modalities are deliberately complementary — the RGB-like stream draws the
//! target as a fine checkerboard (high-frequency texture) while the
//! auxiliary stream draws a smooth radial blob (low-frequency mass) — which
//! gives the frequency-selection and fusion stages something real to
//! separate.
//!
//! Everything is a pure function of the [`SceneConfig`]: the seed fixes all
//! noise, the motion path is closed-form, and occlusion windows hide both
//! the rendered target and its ground-truth box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::kernel::{FeatureMap, Modality};
use crate::pipeline::Frame;

/// Closed-form target trajectory; `position(t)` is exact, with no
/// frame-to-frame accumulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionPath {
    /// Constant velocity in pixels per frame.
    Linear { velocity: (f64, f64) },
    /// Independent per-axis sine offsets with a shared period in frames.
    Sinusoidal { amplitude: (f64, f64), period: f64 },
}

impl MotionPath {
    /// Centre offset from the start position at frame `t`.
    pub fn offset(&self, t: usize) -> (f64, f64) {
        let t = t as f64;
        match self {
            MotionPath::Linear { velocity } => (velocity.0 * t, velocity.1 * t),
            MotionPath::Sinusoidal { amplitude, period } => {
                let phase = 2.0 * std::f64::consts::PI * t / period;
                (amplitude.0 * phase.sin(), amplitude.1 * phase.sin())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = |v: f64| v.is_finite();
        match self {
            MotionPath::Linear { velocity } => {
                if !finite(velocity.0) || !finite(velocity.1) {
                    return Err(Error::arg("path velocity must be finite"));
                }
            }
            MotionPath::Sinusoidal { amplitude, period } => {
                if !finite(amplitude.0) || !finite(amplitude.1) {
                    return Err(Error::arg("path amplitude must be finite"));
                }
                if !finite(*period) || *period <= 0.0 {
                    return Err(Error::arg(format!(
                        "sinusoidal period must be positive, got {period}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Full description of a synthetic sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    /// Square frame extent in pixels.
    pub frame_size: usize,
    /// Channels per modality.
    pub channels: usize,
    pub num_frames: usize,
    /// Square target extent in pixels.
    pub target_size: usize,
    /// Target centre at frame 0.
    pub start: (f64, f64),
    pub path: MotionPath,
    /// Half-open `[start, end)` frame ranges where the target is hidden.
    pub occlusions: Vec<(usize, usize)>,
    /// Uniform noise amplitude added to every RGB pixel.
    pub rgb_noise: f64,
    /// Uniform noise amplitude added to every auxiliary pixel.
    pub aux_noise: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            frame_size: 64,
            channels: 2,
            num_frames: 64,
            target_size: 16,
            start: (32.0, 32.0),
            path: MotionPath::Sinusoidal {
                amplitude: (10.0, 6.0),
                period: 32.0,
            },
            occlusions: Vec::new(),
            rgb_noise: 0.02,
            aux_noise: 0.01,
            seed: 7,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("frame_size", self.frame_size),
            ("channels", self.channels),
            ("num_frames", self.num_frames),
            ("target_size", self.target_size),
        ] {
            if v == 0 {
                return Err(Error::arg(format!("scene {name} must be >= 1")));
            }
        }
        if self.target_size > self.frame_size {
            return Err(Error::arg(format!(
                "target size {} exceeds frame size {}",
                self.target_size, self.frame_size
            )));
        }
        for (name, v) in [("rgb_noise", self.rgb_noise), ("aux_noise", self.aux_noise)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::arg(format!(
                    "scene {name} must be finite and non-negative, got {v}"
                )));
            }
        }
        for &(a, b) in &self.occlusions {
            if a >= b {
                return Err(Error::arg(format!(
                    "occlusion window [{a}, {b}) is empty or reversed"
                )));
            }
        }
        self.path.validate()?;
        // The target must stay fully inside the frame on every visible frame.
        let half = self.target_size as f64 / 2.0;
        let extent = self.frame_size as f64;
        for t in 0..self.num_frames {
            if self.occluded(t) {
                continue;
            }
            let (cx, cy) = self.center(t);
            if cx - half < 0.0 || cy - half < 0.0 || cx + half > extent || cy + half > extent {
                return Err(Error::arg(format!(
                    "target leaves the frame at frame {t}: centre ({cx}, {cy}), half-extent {half}"
                )));
            }
        }
        Ok(())
    }

    /// Target centre at frame `t` from the closed-form path.
    pub fn center(&self, t: usize) -> (f64, f64) {
        let (dx, dy) = self.path.offset(t);
        (self.start.0 + dx, self.start.1 + dy)
    }

    pub fn occluded(&self, t: usize) -> bool {
        self.occlusions.iter().any(|&(a, b)| t >= a && t < b)
    }

    /// Ground-truth box at frame `t`, `None` during occlusion windows.
    pub fn ground_truth(&self, t: usize) -> Option<BoundingBox> {
        if self.occluded(t) {
            return None;
        }
        let (cx, cy) = self.center(t);
        let s = self.target_size as f64;
        Some(BoundingBox::new(cx - s / 2.0, cy - s / 2.0, s, s).expect("validated geometry"))
    }
}

const RGB_BACKGROUND: f64 = 0.2;
const AUX_BACKGROUND: f64 = 0.1;
const CHECKER_DARK: f64 = 0.3;
const CHECKER_BRIGHT: f64 = 0.9;
const BLOB_AMPLITUDE: f64 = 0.8;

/// Renders the whole sequence. Frames come back in order together with the
/// per-frame ground truth (absent during occlusions).
pub fn generate(cfg: &SceneConfig) -> Result<(Vec<Frame>, Vec<Option<BoundingBox>>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let size = cfg.frame_size;
    let s = cfg.target_size;
    let mut frames = Vec::with_capacity(cfg.num_frames);
    let mut truth = Vec::with_capacity(cfg.num_frames);
    for t in 0..cfg.num_frames {
        let visible = !cfg.occluded(t);
        let (cx, cy) = cfg.center(t);
        // Integer raster placement; the ground truth keeps the exact centre.
        let left = (cx - s as f64 / 2.0).round().clamp(0.0, (size - s) as f64) as usize;
        let top = (cy - s as f64 / 2.0).round().clamp(0.0, (size - s) as f64) as usize;

        let mut rgb = vec![RGB_BACKGROUND; cfg.channels * size * size];
        let mut aux = vec![AUX_BACKGROUND; cfg.channels * size * size];
        if visible {
            for c in 0..cfg.channels {
                for y in 0..s {
                    for x in 0..s {
                        let idx = (c * size + top + y) * size + left + x;
                        rgb[idx] = if (x + y + c) % 2 == 0 {
                            CHECKER_BRIGHT
                        } else {
                            CHECKER_DARK
                        };
                    }
                }
            }
            // Smooth radial blob on the auxiliary stream, same on every
            // channel, centred on the exact (fractional) target centre.
            let sigma = s as f64 / 2.5;
            for c in 0..cfg.channels {
                for y in 0..size {
                    for x in 0..size {
                        let dx = x as f64 + 0.5 - cx;
                        let dy = y as f64 + 0.5 - cy;
                        let r2 = dx * dx + dy * dy;
                        aux[(c * size + y) * size + x] +=
                            BLOB_AMPLITUDE * (-r2 / (2.0 * sigma * sigma)).exp();
                    }
                }
            }
        }
        // Noise is drawn for every pixel on every frame in a fixed order, so
        // the stream consumed is independent of visibility.
        for v in rgb.iter_mut() {
            *v += cfg.rgb_noise * rng.random_range(-1.0..=1.0);
        }
        for v in aux.iter_mut() {
            *v += cfg.aux_noise * rng.random_range(-1.0..=1.0);
        }
        let rgb = FeatureMap::new(
            Modality::Rgb,
            crate::kernel::Tensor::new(&[cfg.channels, size, size], rgb)?,
        )?;
        let aux = FeatureMap::new(
            Modality::Aux,
            crate::kernel::Tensor::new(&[cfg.channels, size, size], aux)?,
        )?;
        frames.push(Frame::new(t, rgb, aux)?);
        truth.push(cfg.ground_truth(t));
    }
    Ok((frames, truth))
}
