//! Shared fixtures for the criterion benches.
//!
//! Everything here is seeded, so repeated bench runs measure identical
//! inputs, and everything is built at the same default scale the
//! command-line tool runs (64 px frames, dimension 64, four layers) so the
//! numbers reflect real per-frame cost rather than toy shapes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dualtrack_core::bbox::BoundingBox;
use dualtrack_core::freq::FreqSelectorParams;
use dualtrack_core::kernel::{FeatureMap, Modality};
use dualtrack_core::memory::{CueToken, FilterParams, MemoryPool, MemoryPoolConfig};
use dualtrack_core::pipeline::{
    AdapterParams, EncoderParams, Frame, HeadParams, SessionConfig, Template, TrackerSession,
};
use dualtrack_core::synth::{generate, SceneConfig};

pub fn bench_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0xbe7c)
}

pub fn random_map(channels: usize, height: usize, width: usize, rng: &mut ChaCha8Rng) -> FeatureMap {
    FeatureMap::from_fn(Modality::Rgb, channels, height, width, |_| {
        rng.random_range(-2.0..=2.0)
    })
    .unwrap()
}

pub fn random_token(dim: usize, rng: &mut ChaCha8Rng) -> CueToken {
    CueToken::new((0..dim).map(|_| rng.random_range(-2.0..=2.0)).collect()).unwrap()
}

/// Frequency-selector parameters matching the default session geometry.
pub fn default_freq_params(channels: usize, rng: &mut ChaCha8Rng) -> FreqSelectorParams {
    FreqSelectorParams::seeded(channels, 3, 2, rng).unwrap()
}

/// A pool with every tier filled to its capacity, so retrieval and update
/// benchmarks run at the steady-state sizes a long sequence reaches.
pub fn full_pool(dim: usize, ratio: usize, rng: &mut ChaCha8Rng) -> MemoryPool {
    let config = MemoryPoolConfig::default();
    let fill = |n: usize, rng: &mut ChaCha8Rng| -> Vec<CueToken> {
        (0..n).map(|_| random_token(dim, rng)).collect()
    };
    MemoryPool::from_parts(
        FilterParams::seeded(dim, ratio, rng).unwrap(),
        config.clone(),
        fill(config.short_capacity, rng),
        fill(config.long_capacity, rng),
        fill(config.permanent_capacity, rng),
    )
    .unwrap()
}

/// A default-scale tracking session plus the synthetic frames it consumes.
/// The first frame initialises the template; benches track the rest.
pub fn default_session(seed: u64) -> (TrackerSession, Vec<Frame>) {
    session_at(SessionConfig::default(), SceneConfig::default(), seed)
}

fn session_at(cfg: SessionConfig, scene: SceneConfig, seed: u64) -> (TrackerSession, Vec<Frame>) {
    let (frames, truth) = generate(&scene).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let encoder =
        EncoderParams::seeded(cfg.layers, cfg.dim, cfg.patch, cfg.frame_channels, &mut rng)
            .unwrap();
    let head = HeadParams::seeded(cfg.dim, &mut rng).unwrap();
    let adapters = AdapterParams::seeded(&cfg, &mut rng).unwrap();
    let init: BoundingBox = truth[0].expect("synthetic scenes start visible");
    let template = Template::from_frame(&frames[0], &init, cfg.template_size).unwrap();
    let session = TrackerSession::new(cfg, encoder, head, adapters, template).unwrap();
    (session, frames)
}
