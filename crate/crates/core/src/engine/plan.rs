// SPDX-License-Identifier: MIT OR Apache-2.0

//! Read and write points on the residual stream.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Layers whose residual-stream input should be captured during prefill.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TapRequest {
    layers: BTreeSet<usize>,
}

impl TapRequest {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn layers<I: IntoIterator<Item = usize>>(layers: I) -> Self {
        Self {
            layers: layers.into_iter().collect(),
        }
    }

    pub fn contains(&self, layer: usize) -> bool {
        self.layers.contains(&layer)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.layers.iter().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

/// One additive injection: `ae` is added to the input of block `layer`,
/// row `i` of `ae` onto prompt position `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub layer: usize,
    pub ae: Tensor,
}

impl Injection {
    /// Number of prompt positions covered (the max token length of the
    /// steering prompts that produced `ae`).
    pub fn mtl(&self) -> usize {
        self.ae.rows()
    }
}

/// A set of injections applied together in one forward pass.
///
/// Layers are strictly increasing and every `ae` is two-dimensional with
/// the same width. Injections always start at prompt position 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct InjectionPlan {
    entries: Vec<Injection>,
}

impl InjectionPlan {
    pub fn new(entries: Vec<Injection>) -> Result<Self> {
        for pair in entries.windows(2) {
            if pair[0].layer >= pair[1].layer {
                return Err(Error::Plan(format!(
                    "layers must be strictly increasing, found {} then {}",
                    pair[0].layer, pair[1].layer
                )));
            }
        }
        let width = entries.first().map(|e| e.ae.cols());
        for e in &entries {
            if e.ae.shape().len() != 2 {
                return Err(Error::Plan(format!(
                    "layer {}: ae must be [mtl, d_model], got shape {:?}",
                    e.layer,
                    e.ae.shape()
                )));
            }
            if Some(e.ae.cols()) != width {
                return Err(Error::Plan("every ae must have the same width".into()));
            }
            if !e.ae.is_finite() {
                return Err(Error::Plan(format!("layer {}: ae is not finite", e.layer)));
            }
        }
        Ok(Self { entries })
    }

    pub fn single(layer: usize, ae: Tensor) -> Result<Self> {
        Self::new(vec![Injection { layer, ae }])
    }

    pub fn entries(&self) -> &[Injection] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, layer: usize) -> Option<&Tensor> {
        self.entries
            .binary_search_by_key(&layer, |e| e.layer)
            .ok()
            .map(|i| &self.entries[i].ae)
    }

    pub fn layers(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.layer)
    }

    /// Longest `ae` in the plan; prompts must have at least this many tokens.
    pub fn max_mtl(&self) -> usize {
        self.entries.iter().map(Injection::mtl).max().unwrap_or(0)
    }
}

impl<'de> Deserialize<'de> for InjectionPlan {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            entries: Vec<Injection>,
        }
        let raw = Raw::deserialize(d)?;
        InjectionPlan::new(raw.entries).map_err(serde::de::Error::custom)
    }
}
