//! Tensor carriers.
//!
//! [`Tensor`] is a flat row-major `Vec<f64>` plus a shape. Construction
//! rejects non-finite values, so every downstream computation can assume
//! finite inputs; operations that could still overflow (none at the scales
//! used here) would surface as errors at the next construction site.
//!
//! [`FeatureMap`] wraps a rank-3 tensor (`channels x height x width`) with a
//! [`Modality`] tag so fusion code can check it was handed the stream it
//! expects.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which sensor stream a feature map came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    /// The primary RGB stream.
    Rgb,
    /// The auxiliary stream (thermal, depth, event — the math is agnostic).
    Aux,
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Modality::Rgb => write!(f, "rgb"),
            Modality::Aux => write!(f, "aux"),
        }
    }
}

/// Dense N-dimensional array of `f64`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that `data` matches the shape volume and is
    /// entirely finite. A zero-length dimension is rejected: empty tensors
    /// have no use here and silently propagating them hides bugs.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::arg("tensor shape must have at least one axis"));
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::arg(format!(
                "tensor shape {shape:?} has a zero-length axis"
            )));
        }
        let volume: usize = shape.iter().product();
        if data.len() != volume {
            return Err(Error::arg(format!(
                "tensor shape {shape:?} needs {volume} values, got {}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::arg(format!(
                "tensor contains non-finite value {bad}"
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// All-zero tensor of the given shape.
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let volume: usize = shape.iter().product();
        Tensor::new(shape, vec![0.0; volume])
    }

    /// Tensor filled from a function of the flat index.
    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f64) -> Result<Self> {
        let volume: usize = shape.iter().product();
        Tensor::new(shape, (0..volume).map(f).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Total number of elements.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Re-checks the construction invariants. Needed after deserialisation,
    /// which bypasses [`Tensor::new`].
    pub fn validate(&self) -> Result<()> {
        Tensor::new(&self.shape, self.data.clone()).map(|_| ())
    }

    /// Element at a multi-dimensional index. Panics on rank or bounds
    /// mismatch — indexing errors are internal bugs, not input errors.
    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    /// Same shape, new values; preserves the finiteness check.
    pub fn map(&self, f: impl FnMut(f64) -> f64) -> Result<Tensor> {
        Tensor::new(&self.shape, self.data.iter().copied().map(f).collect())
    }

    /// Reinterprets the data under a new shape of equal volume.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let volume: usize = shape.iter().product();
        if volume != self.data.len() {
            return Err(Error::arg(format!(
                "cannot reshape {} elements to {shape:?}",
                self.data.len()
            )));
        }
        Tensor::new(shape, self.data.clone())
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(
            index.len(),
            self.shape.len(),
            "index rank {} != tensor rank {}",
            index.len(),
            self.shape.len()
        );
        let mut off = 0;
        for (axis, (&i, &d)) in index.iter().zip(&self.shape).enumerate() {
            assert!(i < d, "index {i} out of bounds for axis {axis} (len {d})");
            off = off * d + i;
        }
        off
    }
}

/// A rank-3 `channels x height x width` tensor tagged with its modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    modality: Modality,
    tensor: Tensor,
}

impl FeatureMap {
    pub fn new(modality: Modality, tensor: Tensor) -> Result<Self> {
        if tensor.rank() != 3 {
            return Err(Error::arg(format!(
                "feature map must be rank 3 (channels x height x width), got shape {:?}",
                tensor.shape()
            )));
        }
        Ok(FeatureMap { modality, tensor })
    }

    pub fn zeros(modality: Modality, channels: usize, height: usize, width: usize) -> Result<Self> {
        FeatureMap::new(modality, Tensor::zeros(&[channels, height, width])?)
    }

    pub fn from_fn(
        modality: Modality,
        channels: usize,
        height: usize,
        width: usize,
        f: impl FnMut(usize) -> f64,
    ) -> Result<Self> {
        FeatureMap::new(modality, Tensor::from_fn(&[channels, height, width], f)?)
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn channels(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.tensor.shape()[2]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn data(&self) -> &[f64] {
        self.tensor.data()
    }

    /// Value at `(channel, row, column)`.
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.tensor.get(&[c, y, x])
    }

    /// True when both maps have identical channel and spatial extents.
    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.tensor.shape() == other.tensor.shape()
    }

    /// Rebuilds a map with the same shape and modality from raw values.
    pub fn with_data(&self, data: Vec<f64>) -> Result<FeatureMap> {
        FeatureMap::new(self.modality, Tensor::new(self.tensor.shape(), data)?)
    }
}
