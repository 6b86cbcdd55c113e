//! Versioned TOML run configuration.
//!
//! The document is flat sections per concern; every field has a default, so
//! a minimal config is just `version = 1`. The `[scene]` section is the
//! synthetic-sequence description (ignored when `run.sequence_dir` points at
//! a generated sequence directory). Each configured seed produces one run in
//! its own `seed_<n>/` subdirectory; the seed drives the scene noise and the
//! parameter initialisation, so different seeds give genuinely different
//! runs while a repeated invocation is byte-identical.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dualtrack_core::memory::MemoryPoolConfig;
use dualtrack_core::pipeline::SessionConfig;
use dualtrack_core::synth::SceneConfig;
use dualtrack_core::Error;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub session: SessionSection,
    #[serde(default)]
    pub memory: MemoryPoolConfig,
    #[serde(default)]
    pub adapters: AdapterSection,
    #[serde(default)]
    pub scene: SceneConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub output_dir: PathBuf,
    /// One tracking run per seed, each in `output_dir/seed_<n>`.
    pub seeds: Vec<u64>,
    /// Frame counts after which a memory snapshot is written; empty means
    /// final frame only.
    pub checkpoints: Vec<usize>,
    /// Optional generated-sequence directory (from `gen`); when set, the
    /// inline `[scene]` section is ignored and the scene comes from
    /// `<dir>/scene.json`.
    pub sequence_dir: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            output_dir: PathBuf::from("runs/out"),
            seeds: vec![7],
            checkpoints: Vec::new(),
            sequence_dir: None,
        }
    }
}

/// Tracker geometry; mirrors the session configuration with the memory
/// section split out into `[memory]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionSection {
    pub layers: usize,
    pub dim: usize,
    pub patch: usize,
    pub frame_size: usize,
    pub frame_channels: usize,
    pub template_size: usize,
    pub template_capacity: usize,
    pub filter_ratio: usize,
    pub freq_kernel: usize,
    pub freq_pool_window: usize,
    pub adapters_enabled: bool,
}

impl Default for SessionSection {
    fn default() -> Self {
        let s = SessionConfig::default();
        SessionSection {
            layers: s.layers,
            dim: s.dim,
            patch: s.patch,
            frame_size: s.frame_size,
            frame_channels: s.frame_channels,
            template_size: s.template_size,
            template_capacity: s.template_capacity,
            filter_ratio: s.filter_ratio,
            freq_kernel: s.freq_kernel,
            freq_pool_window: s.freq_pool_window,
            adapters_enabled: s.adapters_enabled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterSource {
    /// Adapter parameters drawn from the run seed.
    Seeded,
    /// Adapter parameters loaded from a JSON file.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdapterSection {
    pub source: AdapterSource,
    /// Parameter file path, required when `source = "file"`.
    pub path: Option<PathBuf>,
}

impl Default for AdapterSection {
    fn default() -> Self {
        AdapterSection {
            source: AdapterSource::Seeded,
            path: None,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            run: RunSection::default(),
            session: SessionSection::default(),
            memory: MemoryPoolConfig::default(),
            adapters: AdapterSection::default(),
            scene: SceneConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].lines().count()).unwrap_or(0);
            Error::parse(line.max(1), e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    /// Assembles the tracker session configuration from the session and
    /// memory sections.
    pub fn session_config(&self) -> SessionConfig {
        let s = &self.session;
        SessionConfig {
            layers: s.layers,
            dim: s.dim,
            patch: s.patch,
            frame_size: s.frame_size,
            frame_channels: s.frame_channels,
            template_size: s.template_size,
            template_capacity: s.template_capacity,
            filter_ratio: s.filter_ratio,
            freq_kernel: s.freq_kernel,
            freq_pool_window: s.freq_pool_window,
            memory: self.memory.clone(),
            adapters_enabled: s.adapters_enabled,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.version != CONFIG_VERSION {
            return Err(Error::arg(format!(
                "config version {} unsupported, expected {CONFIG_VERSION}",
                self.version
            )));
        }
        if self.run.seeds.is_empty() {
            return Err(Error::arg("run.seeds must name at least one seed"));
        }
        self.session_config().validate()?;
        if self.run.sequence_dir.is_none() {
            self.scene.validate()?;
            if self.scene.frame_size != self.session.frame_size {
                return Err(Error::arg(format!(
                    "scene frame size {} does not match session frame size {}",
                    self.scene.frame_size, self.session.frame_size
                )));
            }
            if self.scene.channels != self.session.frame_channels {
                return Err(Error::arg(format!(
                    "scene has {} channels per modality, session wants {}",
                    self.scene.channels, self.session.frame_channels
                )));
            }
        }
        if self.adapters.source == AdapterSource::File && self.adapters.path.is_none() {
            return Err(Error::arg(
                "adapters.source = \"file\" needs adapters.path",
            ));
        }
        for &c in &self.run.checkpoints {
            if c == 0 {
                return Err(Error::arg("checkpoint frame counts are 1-based, got 0"));
            }
        }
        Ok(())
    }
}
