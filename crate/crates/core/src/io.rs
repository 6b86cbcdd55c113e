//! On-disk interchange formats.
//!
//! Three plain-text formats cover everything the tools exchange:
//!
//! * **Box files** — one line per frame, `frame_index x y w h` with
//!   shortest-roundtrip decimal coordinates, or `frame_index absent` when no
//!   box exists. Frame indices must be contiguous from 0. Used for both
//!   predictions and ground truth; trivially diffable and hand-writable.
//! * **Memory snapshots** — a header line `H N_s N_l N_p` (token dimension
//!   and per-tier token counts) followed by one token per line as
//!   whitespace-separated decimals, short tier first, then long, then
//!   permanent.
//! * **JSON parameter files** — serde round-trips of parameter structs, used
//!   to persist seeded adapters and encoder weights.
//!
//! Readers report malformed input as [`Error::Parse`] naming the 1-based
//! line.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::memory::{CueToken, FilterParams, MemoryPool, MemoryPoolConfig};

/// Renders per-frame boxes in the box-file format.
pub fn boxes_to_string(boxes: &[Option<BoundingBox>]) -> String {
    let mut out = String::new();
    for (i, b) in boxes.iter().enumerate() {
        match b {
            Some(b) => out.push_str(&format!("{} {} {} {} {}\n", i, b.x, b.y, b.w, b.h)),
            None => out.push_str(&format!("{i} absent\n")),
        }
    }
    out
}

/// Parses box-file text. Rejects gaps, reorderings, and malformed fields,
/// naming the offending 1-based line.
pub fn boxes_from_str(text: &str) -> Result<Vec<Option<BoundingBox>>> {
    let mut boxes = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let index: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad frame index {:?}", fields[0])))?;
        if index != boxes.len() {
            return Err(Error::parse(
                lineno,
                format!("frame index {index} out of order, expected {}", boxes.len()),
            ));
        }
        match fields[1..] {
            ["absent"] => boxes.push(None),
            [x, y, w, h] => {
                let mut v = [0.0f64; 4];
                for (slot, s) in v.iter_mut().zip([x, y, w, h]) {
                    *slot = s
                        .parse()
                        .map_err(|_| Error::parse(lineno, format!("bad coordinate {s:?}")))?;
                }
                let b = BoundingBox::new(v[0], v[1], v[2], v[3])
                    .map_err(|e| Error::parse(lineno, e.to_string()))?;
                boxes.push(Some(b));
            }
            _ => {
                return Err(Error::parse(
                    lineno,
                    format!(
                        "expected `index x y w h` or `index absent`, got {} fields",
                        fields.len()
                    ),
                ))
            }
        }
    }
    Ok(boxes)
}

pub fn write_box_file(path: impl AsRef<Path>, boxes: &[Option<BoundingBox>]) -> Result<()> {
    fs::write(path, boxes_to_string(boxes))?;
    Ok(())
}

pub fn read_box_file(path: impl AsRef<Path>) -> Result<Vec<Option<BoundingBox>>> {
    boxes_from_str(&fs::read_to_string(path)?)
}

/// Tier contents lifted out of a snapshot file; combine with filter
/// parameters and a pool configuration to rebuild a [`MemoryPool`].
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub dim: usize,
    pub short: Vec<CueToken>,
    pub long: Vec<CueToken>,
    pub permanent: Vec<CueToken>,
}

impl Snapshot {
    pub fn of_pool(pool: &MemoryPool) -> Snapshot {
        Snapshot {
            dim: pool.dim(),
            short: pool.short().tokens().to_vec(),
            long: pool.long().tokens().to_vec(),
            permanent: pool.permanent().tokens().to_vec(),
        }
    }

    /// Rebuilds a live pool around the snapshotted tiers. The update
    /// counter restarts at zero.
    pub fn into_pool(self, filter: FilterParams, config: MemoryPoolConfig) -> Result<MemoryPool> {
        MemoryPool::from_parts(filter, config, self.short, self.long, self.permanent)
    }
}

pub fn snapshot_to_string(s: &Snapshot) -> String {
    let mut out = format!(
        "{} {} {} {}\n",
        s.dim,
        s.short.len(),
        s.long.len(),
        s.permanent.len()
    );
    for token in s.short.iter().chain(&s.long).chain(&s.permanent) {
        let fields: Vec<String> = token.values().iter().map(f64::to_string).collect();
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    out
}

pub fn snapshot_from_str(text: &str) -> Result<Snapshot> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty snapshot"))?;
    let counts: Vec<usize> = header
        .split_whitespace()
        .map(|f| {
            f.parse()
                .map_err(|_| Error::parse(1, format!("bad header field {f:?}")))
        })
        .collect::<Result<_>>()?;
    let [dim, n_short, n_long, n_permanent] = counts[..] else {
        return Err(Error::parse(
            1,
            format!("header must be `H N_s N_l N_p`, got {} fields", counts.len()),
        ));
    };
    let mut tokens = Vec::with_capacity(n_short + n_long + n_permanent);
    for (lineno, line) in lines {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|f| {
                f.parse()
                    .map_err(|_| Error::parse(lineno, format!("bad token value {f:?}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::parse(
                lineno,
                format!("token has {} values, header says {dim}", values.len()),
            ));
        }
        tokens.push(CueToken::new(values).map_err(|e| Error::parse(lineno, e.to_string()))?);
    }
    if tokens.len() != n_short + n_long + n_permanent {
        return Err(Error::parse(
            1,
            format!(
                "header promises {} tokens, file has {}",
                n_short + n_long + n_permanent,
                tokens.len()
            ),
        ));
    }
    let permanent = tokens.split_off(n_short + n_long);
    let long = tokens.split_off(n_short);
    Ok(Snapshot {
        dim,
        short: tokens,
        long,
        permanent,
    })
}

pub fn write_snapshot(path: impl AsRef<Path>, pool: &MemoryPool) -> Result<()> {
    fs::write(path, snapshot_to_string(&Snapshot::of_pool(pool)))?;
    Ok(())
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<Snapshot> {
    snapshot_from_str(&fs::read_to_string(path)?)
}

/// Serialises any parameter struct as pretty JSON.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::arg(format!("serialisation failed: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(e.line(), e.to_string()))
}
