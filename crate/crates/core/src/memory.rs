//! Tiered cue-token memory.
//!
//! Three banks carry target state across frames: a short-term FIFO of the
//! most recent cue tokens, a long-term bank refined from the short tier by
//! scaled dot-product attention, and a small permanent bank refined from the
//! long tier the same way. Retrieval reads all three with the previous cue as
//! the query and sums the per-tier reads; the result passes through a
//! bottleneck filter (`up(gelu(down(c)))`) before re-entering the encoder.
//!
//! Update order per frame: the previous cue is pushed into the short tier,
//! then the long tier attends over the short tier, then the permanent tier
//! attends over the long tier *as it was before this frame's refinement* —
//! each tier consumes its source's last published state, so a singleton chain
//! seeded with `c0` gains exactly `c0` per tier on the first update.
//!
//! The long and permanent tiers are seeded with one token each and only ever
//! refine those tokens in place; only the short tier grows (up to its
//! capacity, evicting oldest-first).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{gelu, softmax_slice, LinearParams};

/// A single temporal tracking cue: one length-`H` vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueToken {
    values: Vec<f64>,
}

impl CueToken {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::arg("cue token must have at least one component"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("cue token contains non-finite value"));
        }
        Ok(CueToken { values })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        CueToken::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Capacity-bounded ordered store of cue tokens, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryBank {
    capacity: usize,
    tokens: Vec<CueToken>,
}

impl MemoryBank {
    /// Empty bank with the given capacity.
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::arg("memory bank capacity must be >= 1"));
        }
        Ok(MemoryBank {
            capacity,
            tokens: Vec::new(),
        })
    }

    /// Bank pre-populated with tokens (oldest first); used when replaying
    /// snapshots and when constructing pools directly in tests.
    pub fn from_tokens(capacity: usize, tokens: Vec<CueToken>) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::arg("memory bank capacity must be >= 1"));
        }
        if tokens.is_empty() {
            return Err(Error::arg("pre-populated memory bank must be non-empty"));
        }
        if tokens.len() > capacity {
            return Err(Error::arg(format!(
                "{} tokens exceed bank capacity {capacity}",
                tokens.len()
            )));
        }
        let dim = tokens[0].dim();
        if tokens.iter().any(|t| t.dim() != dim) {
            return Err(Error::arg("memory bank tokens disagree in dimension"));
        }
        Ok(MemoryBank { capacity, tokens })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[CueToken] {
        &self.tokens
    }

    /// Appends a token, evicting the oldest when full.
    pub fn push_fifo(&mut self, token: CueToken) -> Result<()> {
        if let Some(first) = self.tokens.first() {
            if first.dim() != token.dim() {
                return Err(Error::arg(format!(
                    "token dimension {} != bank dimension {}",
                    token.dim(),
                    first.dim()
                )));
            }
        }
        if self.tokens.len() == self.capacity {
            self.tokens.remove(0);
        }
        self.tokens.push(token);
        Ok(())
    }
}

/// Refines `target` in place by attending over `source`.
///
/// Queries are the target tokens, keys and values the source tokens; scores
/// are scaled by `1/sqrt(H)`. Each target token gains its attention read:
/// `t <- t + softmax(t . K^T / sqrt(H)) . V`. Rows are independent, so the
/// in-place update is order-free.
pub fn attn_update(target: &mut MemoryBank, source: &MemoryBank) -> Result<()> {
    if source.is_empty() {
        return Err(Error::state("attention update from an empty source bank"));
    }
    if target.is_empty() {
        return Err(Error::state("attention update into an empty target bank"));
    }
    let dim = target.tokens[0].dim();
    if source.tokens[0].dim() != dim {
        return Err(Error::arg(format!(
            "bank dimensions disagree: target {dim}, source {}",
            source.tokens[0].dim()
        )));
    }
    let scale = (dim as f64).sqrt().recip();
    let mut delta = vec![0.0; dim];
    for query in &mut target.tokens {
        let scores: Vec<f64> = source
            .tokens
            .iter()
            .map(|k| dot(&query.values, &k.values) * scale)
            .collect();
        let weights = softmax_slice(&scores)?;
        delta.iter_mut().for_each(|d| *d = 0.0);
        for (w, v) in weights.iter().zip(&source.tokens) {
            for (d, &vv) in delta.iter_mut().zip(&v.values) {
                *d += w * vv;
            }
        }
        for (q, &d) in query.values.iter_mut().zip(&delta) {
            *q += d;
        }
    }
    Ok(())
}

/// Bottleneck filter applied to cue tokens: `up(gelu(down(c)))`,
/// dimension-preserving and non-residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    down: LinearParams,
    up: LinearParams,
    ratio: usize,
}

impl FilterParams {
    pub fn new(down: LinearParams, up: LinearParams, ratio: usize) -> Result<Self> {
        if ratio == 0 {
            return Err(Error::arg("filter ratio must be >= 1"));
        }
        let dim = down.cols();
        if dim % ratio != 0 {
            return Err(Error::arg(format!(
                "filter ratio {ratio} does not divide token dimension {dim}"
            )));
        }
        let mid = dim / ratio;
        if down.rows() != mid {
            return Err(Error::arg(format!(
                "down projection must be {dim} -> {mid}, got {} -> {}",
                down.cols(),
                down.rows()
            )));
        }
        if up.cols() != mid || up.rows() != dim {
            return Err(Error::arg(format!(
                "up projection must be {mid} -> {dim}, got {} -> {}",
                up.cols(),
                up.rows()
            )));
        }
        Ok(FilterParams { down, up, ratio })
    }

    /// Seeded bottleneck with the given reduction ratio.
    pub fn seeded(dim: usize, ratio: usize, rng: &mut impl Rng) -> Result<Self> {
        if ratio == 0 || dim % ratio != 0 {
            return Err(Error::arg(format!(
                "filter ratio {ratio} must divide token dimension {dim}"
            )));
        }
        let mid = dim / ratio;
        FilterParams::new(
            LinearParams::seeded(mid, dim, rng)?,
            LinearParams::seeded(dim, mid, rng)?,
            ratio,
        )
    }

    /// All-zero filter: maps every token to the zero token.
    pub fn zeros(dim: usize, ratio: usize) -> Result<Self> {
        if ratio == 0 || dim % ratio != 0 {
            return Err(Error::arg(format!(
                "filter ratio {ratio} must divide token dimension {dim}"
            )));
        }
        let mid = dim / ratio;
        FilterParams::new(
            LinearParams::zeros(mid, dim)?,
            LinearParams::zeros(dim, mid)?,
            ratio,
        )
    }

    /// Ratio-1 identity projections: the filter reduces to elementwise gelu.
    pub fn identity_gelu(dim: usize) -> Result<Self> {
        FilterParams::new(LinearParams::identity(dim)?, LinearParams::identity(dim)?, 1)
    }

    pub fn ratio(&self) -> usize {
        self.ratio
    }

    /// The token dimension `H` this filter operates on.
    pub fn input_dim(&self) -> usize {
        self.down.cols()
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.down.rows()
    }

    pub fn down(&self) -> &LinearParams {
        &self.down
    }

    pub fn up(&self) -> &LinearParams {
        &self.up
    }

    pub fn apply(&self, c: &CueToken) -> Result<CueToken> {
        if c.dim() != self.input_dim() {
            return Err(Error::arg(format!(
                "cue dimension {} != filter dimension {}",
                c.dim(),
                self.input_dim()
            )));
        }
        let mut mid = self.down.apply(c.values())?;
        for v in mid.iter_mut() {
            *v = gelu(*v);
        }
        CueToken::new(self.up.apply(&mid)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.down.validate()?;
        self.up.validate()?;
        FilterParams::new(self.down.clone(), self.up.clone(), self.ratio).map(|_| ())
    }
}

/// Capacities, update cadence, and renormalisation policy of a pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryPoolConfig {
    pub short_capacity: usize,
    pub long_capacity: usize,
    pub permanent_capacity: usize,
    /// The long tier refines every `long_stride`-th update (default 1).
    pub long_stride: usize,
    /// The permanent tier refines every `permanent_stride`-th update.
    pub permanent_stride: usize,
    /// When set, long/permanent tokens are rescaled after each update to the
    /// running mean norm of all pushed cues. Off by default: the additive
    /// update is allowed to grow norms.
    pub renormalize: bool,
}

impl Default for MemoryPoolConfig {
    fn default() -> Self {
        MemoryPoolConfig {
            short_capacity: 8,
            long_capacity: 8,
            permanent_capacity: 3,
            long_stride: 1,
            permanent_stride: 1,
            renormalize: false,
        }
    }
}

impl MemoryPoolConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("short_capacity", self.short_capacity),
            ("long_capacity", self.long_capacity),
            ("permanent_capacity", self.permanent_capacity),
            ("long_stride", self.long_stride),
            ("permanent_stride", self.permanent_stride),
        ] {
            if v == 0 {
                return Err(Error::arg(format!("memory {name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// One tier's contribution to a retrieval: the softmax weights over its
/// tokens and the resulting weighted-sum read.
#[derive(Debug, Clone, PartialEq)]
pub struct TierRead {
    pub weights: Vec<f64>,
    pub read: CueToken,
}

/// Full retrieval breakdown across the three tiers.
#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    pub short: TierRead,
    pub long: TierRead,
    pub permanent: TierRead,
    /// Sum of the three tier reads.
    pub combined: CueToken,
}

/// The three-tier memory plus its filter and bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryPool {
    config: MemoryPoolConfig,
    filter: FilterParams,
    short: MemoryBank,
    long: MemoryBank,
    permanent: MemoryBank,
    update_count: u64,
    norm_sum: f64,
    norm_count: u64,
}

impl MemoryPool {
    /// Empty (uninitialised) pool. The token dimension is fixed by the
    /// filter's input dimension.
    pub fn new(filter: FilterParams, config: MemoryPoolConfig) -> Result<Self> {
        config.validate()?;
        filter.validate()?;
        Ok(MemoryPool {
            short: MemoryBank::new(config.short_capacity)?,
            long: MemoryBank::new(config.long_capacity)?,
            permanent: MemoryBank::new(config.permanent_capacity)?,
            config,
            filter,
            update_count: 0,
            norm_sum: 0.0,
            norm_count: 0,
        })
    }

    /// Reconstructs a pool from explicit tier contents (snapshot replay,
    /// direct test setup). The update counter restarts at zero, so stride
    /// phase is not preserved across snapshots.
    pub fn from_parts(
        filter: FilterParams,
        config: MemoryPoolConfig,
        short: Vec<CueToken>,
        long: Vec<CueToken>,
        permanent: Vec<CueToken>,
    ) -> Result<Self> {
        config.validate()?;
        filter.validate()?;
        let dim = filter.input_dim();
        for (name, tokens) in [("short", &short), ("long", &long), ("permanent", &permanent)] {
            if let Some(t) = tokens.iter().find(|t| t.dim() != dim) {
                return Err(Error::arg(format!(
                    "{name} tier token dimension {} != pool dimension {dim}",
                    t.dim()
                )));
            }
        }
        let norm_count = (short.len() + long.len() + permanent.len()) as u64;
        let norm_sum = short
            .iter()
            .chain(&long)
            .chain(&permanent)
            .map(CueToken::norm)
            .sum();
        Ok(MemoryPool {
            short: MemoryBank::from_tokens(config.short_capacity, short)?,
            long: MemoryBank::from_tokens(config.long_capacity, long)?,
            permanent: MemoryBank::from_tokens(config.permanent_capacity, permanent)?,
            config,
            filter,
            update_count: 0,
            norm_sum,
            norm_count,
        })
    }

    pub fn dim(&self) -> usize {
        self.filter.input_dim()
    }

    pub fn config(&self) -> &MemoryPoolConfig {
        &self.config
    }

    pub fn filter_params(&self) -> &FilterParams {
        &self.filter
    }

    pub fn short(&self) -> &MemoryBank {
        &self.short
    }

    pub fn long(&self) -> &MemoryBank {
        &self.long
    }

    pub fn permanent(&self) -> &MemoryBank {
        &self.permanent
    }

    pub fn is_initialized(&self) -> bool {
        !self.short.is_empty()
    }

    fn require_initialized(&self) -> Result<()> {
        if !self.is_initialized() {
            return Err(Error::state("memory pool has not been initialised"));
        }
        Ok(())
    }

    fn check_dim(&self, c: &CueToken) -> Result<()> {
        if c.dim() != self.dim() {
            return Err(Error::arg(format!(
                "cue dimension {} != pool dimension {}",
                c.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Seeds every tier with one copy of `c0`.
    pub fn init(&mut self, c0: &CueToken) -> Result<()> {
        if self.is_initialized() {
            return Err(Error::state("memory pool is already initialised"));
        }
        self.check_dim(c0)?;
        self.short.push_fifo(c0.clone())?;
        self.long.push_fifo(c0.clone())?;
        self.permanent.push_fifo(c0.clone())?;
        self.norm_sum += c0.norm();
        self.norm_count += 1;
        Ok(())
    }

    /// Appends a cue to the short tier (FIFO).
    pub fn push_short(&mut self, c: &CueToken) -> Result<()> {
        self.require_initialized()?;
        self.check_dim(c)?;
        self.short.push_fifo(c.clone())?;
        self.norm_sum += c.norm();
        self.norm_count += 1;
        Ok(())
    }

    /// Per-frame memory update: push the previous cue into the short tier,
    /// refine long from short, then refine permanent from the long tier's
    /// pre-refinement state. Strides skip the respective refinement on
    /// non-multiple frames.
    pub fn update(&mut self, c_prev: &CueToken) -> Result<()> {
        self.push_short(c_prev)?;
        self.update_count += 1;
        // Permanent consumes the long tier as published by the previous
        // update, not the state refined moments ago in this call.
        let long_before = self.long.clone();
        if self.update_count % self.config.long_stride as u64 == 0 {
            attn_update(&mut self.long, &self.short)?;
        }
        if self.update_count % self.config.permanent_stride as u64 == 0 {
            attn_update(&mut self.permanent, &long_before)?;
        }
        if self.config.renormalize {
            let target = self.norm_sum / self.norm_count as f64;
            renormalize_bank(&mut self.long, target);
            renormalize_bank(&mut self.permanent, target);
        }
        Ok(())
    }

    /// Retrieval without the per-tier breakdown.
    pub fn retrieve(&self, query: &CueToken) -> Result<CueToken> {
        Ok(self.retrieve_detailed(query)?.combined)
    }

    /// Reads each tier with softmax-weighted similarity to `query` (scores
    /// are raw dot products, unscaled) and sums the three reads.
    pub fn retrieve_detailed(&self, query: &CueToken) -> Result<Retrieval> {
        self.require_initialized()?;
        self.check_dim(query)?;
        let short = tier_read(&self.short, query)?;
        let long = tier_read(&self.long, query)?;
        let permanent = tier_read(&self.permanent, query)?;
        let combined = CueToken::new(
            (0..self.dim())
                .map(|i| {
                    short.read.values[i] + long.read.values[i] + permanent.read.values[i]
                })
                .collect(),
        )?;
        Ok(Retrieval {
            short,
            long,
            permanent,
            combined,
        })
    }

    /// Applies the pool's bottleneck filter to a cue token.
    pub fn filter(&self, c: &CueToken) -> Result<CueToken> {
        self.filter.apply(c)
    }

    /// Number of [`MemoryPool::update`] calls so far.
    pub fn update_count(&self) -> u64 {
        self.update_count
    }
}

fn tier_read(bank: &MemoryBank, query: &CueToken) -> Result<TierRead> {
    let scores: Vec<f64> = bank
        .tokens()
        .iter()
        .map(|t| dot(query.values(), t.values()))
        .collect();
    let weights = softmax_slice(&scores)?;
    let dim = query.dim();
    let mut read = vec![0.0; dim];
    for (w, t) in weights.iter().zip(bank.tokens()) {
        for (r, &v) in read.iter_mut().zip(t.values()) {
            *r += w * v;
        }
    }
    Ok(TierRead {
        weights,
        read: CueToken::new(read)?,
    })
}

fn renormalize_bank(bank: &mut MemoryBank, target_norm: f64) {
    for token in &mut bank.tokens {
        let n = token.norm();
        if n > 0.0 && target_norm > 0.0 {
            let s = target_norm / n;
            for v in &mut token.values {
                *v *= s;
            }
        }
    }
}
