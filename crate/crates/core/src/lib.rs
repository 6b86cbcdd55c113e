//! Dual-modality tracking toolkit: frequency-gated fusion of an RGB stream
//! with an auxiliary modality stream, a three-tier attention memory that
//! carries target state across frames, and the surrounding harness needed to
//! exercise both on synthetic sequences.
//!
//! The crate is organised in layers:
//!
//! - [`kernel`] — dense `f64` tensor carriers and the small set of numeric
//!   primitives (convolution, pooling, softmax, normalisation) everything
//!   else is built from.
//! - [`freq`] — decomposition of a feature map into high/low frequency parts
//!   and gated recombination.
//! - [`fusion`] — the modality fusion blocks and their injection back into a
//!   token sequence.
//! - [`memory`] — short/long/permanent cue-token banks with attention-based
//!   consolidation and retrieval.
//! - [`pipeline`] — patch embedding, a compact transformer surrogate, the
//!   per-frame tracking loop, and the training losses.
//! - [`metrics`] — precision/success tracking metrics and long-term
//!   precision/recall/F-score.
//! - [`synth`] — deterministic synthetic sequence generation.
//! - [`io`] — text formats for boxes, memory snapshots, sequences, and
//!   parameter files.
//! - [`selftest`] — self-contained oracle checks runnable from the CLI.
//!
//! All numerics are deterministic: no threading inside the library, explicit
//! seeds everywhere randomness is involved, and plain `f64` arithmetic with a
//! fixed evaluation order.

pub mod bbox;
pub mod error;
pub mod freq;
pub mod fusion;
pub mod io;
pub mod kernel;
pub mod memory;
pub mod metrics;
pub mod pipeline;
pub mod selftest;
pub mod synth;
pub mod tokens;

pub use bbox::BoundingBox;
pub use error::{Error, Result};
pub use kernel::{FeatureMap, Modality, Tensor};
pub use tokens::TokenSequence;
