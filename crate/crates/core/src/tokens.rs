//! Token sequences flowing through the transformer surrogate.
//!
//! Layout is fixed: search-region tokens first, then template tokens, then
//! exactly one cue token in the final slot. Fusion code moves between this
//! flat token view and square spatial feature maps, so the reshaping helpers
//! live here too.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{FeatureMap, Modality, Tensor};

/// Which part of the sequence a token index falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Search,
    Template,
    Cue,
}

/// A `(n_search + n_template + 1) x dim` block of tokens with the cue token
/// pinned to the last slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSequence {
    dim: usize,
    n_search: usize,
    n_template: usize,
    data: Vec<f64>,
}

impl TokenSequence {
    /// All-zero sequence with the given region sizes.
    pub fn zeros(dim: usize, n_search: usize, n_template: usize) -> Result<Self> {
        if dim == 0 || n_search == 0 || n_template == 0 {
            return Err(Error::arg(format!(
                "token sequence needs dim, n_search, n_template >= 1, got {dim}, {n_search}, {n_template}"
            )));
        }
        let n = n_search + n_template + 1;
        Ok(TokenSequence {
            dim,
            n_search,
            n_template,
            data: vec![0.0; n * dim],
        })
    }

    /// Assembles a sequence from per-region token blocks, each a row-major
    /// `count x dim` slice.
    pub fn from_parts(
        dim: usize,
        search: &[f64],
        template: &[f64],
        cue: &[f64],
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("token dimension must be >= 1"));
        }
        if search.len() % dim != 0 || template.len() % dim != 0 {
            return Err(Error::arg(
                "search/template block lengths must be multiples of the token dimension",
            ));
        }
        if cue.len() != dim {
            return Err(Error::arg(format!(
                "cue length {} != token dimension {dim}",
                cue.len()
            )));
        }
        let n_search = search.len() / dim;
        let n_template = template.len() / dim;
        if n_search == 0 || n_template == 0 {
            return Err(Error::arg("search and template regions must be non-empty"));
        }
        let mut data = Vec::with_capacity((n_search + n_template + 1) * dim);
        data.extend_from_slice(search);
        data.extend_from_slice(template);
        data.extend_from_slice(cue);
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("token sequence contains non-finite value"));
        }
        Ok(TokenSequence {
            dim,
            n_search,
            n_template,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_search(&self) -> usize {
        self.n_search
    }

    pub fn n_template(&self) -> usize {
        self.n_template
    }

    /// Total token count including the cue slot.
    pub fn n_tokens(&self) -> usize {
        self.n_search + self.n_template + 1
    }

    /// Region the given token index belongs to. Panics out of bounds.
    pub fn region_of(&self, index: usize) -> Region {
        assert!(index < self.n_tokens(), "token index {index} out of bounds");
        if index < self.n_search {
            Region::Search
        } else if index < self.n_search + self.n_template {
            Region::Template
        } else {
            Region::Cue
        }
    }

    pub fn token(&self, index: usize) -> &[f64] {
        assert!(index < self.n_tokens(), "token index {index} out of bounds");
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn token_mut(&mut self, index: usize) -> &mut [f64] {
        assert!(index < self.n_tokens(), "token index {index} out of bounds");
        &mut self.data[index * self.dim..(index + 1) * self.dim]
    }

    /// The cue token (always the last slot).
    pub fn cue(&self) -> &[f64] {
        self.token(self.n_search + self.n_template)
    }

    /// Overwrites the cue token.
    pub fn set_cue(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::arg(format!(
                "cue length {} != token dimension {}",
                values.len(),
                self.dim
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("cue contains non-finite value"));
        }
        let idx = self.n_search + self.n_template;
        self.token_mut(idx).copy_from_slice(values);
        Ok(())
    }

    /// Flat view of all tokens.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Flat view of the search region.
    pub fn search_tokens(&self) -> &[f64] {
        &self.data[..self.n_search * self.dim]
    }

    /// Flat view of the template region.
    pub fn template_tokens(&self) -> &[f64] {
        &self.data[self.n_search * self.dim..(self.n_search + self.n_template) * self.dim]
    }
}

/// Reshapes a row-major `count x dim` token block into a `dim x g x g`
/// feature map, where `g = sqrt(count)`. Token `i` lands at spatial position
/// `(i / g, i % g)`; channel `c` of that position is component `c` of the
/// token. Errors when `count` is not a perfect square.
pub fn tokens_to_map(
    tokens: &[f64],
    count: usize,
    dim: usize,
    modality: Modality,
) -> Result<FeatureMap> {
    if dim == 0 || count == 0 {
        return Err(Error::arg("tokens_to_map needs count, dim >= 1"));
    }
    if tokens.len() != count * dim {
        return Err(Error::arg(format!(
            "token block length {} != count {count} x dim {dim}",
            tokens.len()
        )));
    }
    let g = (count as f64).sqrt().round() as usize;
    if g * g != count {
        return Err(Error::arg(format!(
            "token count {count} is not a perfect square"
        )));
    }
    let mut data = vec![0.0; dim * count];
    for p in 0..count {
        for c in 0..dim {
            data[c * count + p] = tokens[p * dim + c];
        }
    }
    FeatureMap::new(modality, Tensor::new(&[dim, g, g], data)?)
}

/// Inverse of [`tokens_to_map`]: flattens a feature map back to a row-major
/// `(h*w) x channels` token block.
pub fn map_to_tokens(map: &FeatureMap) -> Vec<f64> {
    let (c, h, w) = (map.channels(), map.height(), map.width());
    let count = h * w;
    let src = map.data();
    let mut out = vec![0.0; count * c];
    for p in 0..count {
        for ch in 0..c {
            out[p * c + ch] = src[ch * count + p];
        }
    }
    out
}
