// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PosScheme {
    #[serde(rename = "absolute-learned")]
    AbsoluteLearned,
    #[serde(rename = "rotary")]
    Rotary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    RmsNorm,
    LayerNorm,
}

fn default_norm_eps() -> f32 {
    1e-5
}

fn default_rope_theta() -> f32 {
    10_000.0
}

/// Architecture hyperparameters, stored as the `config.json` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq: usize,
    pub pos_scheme: PosScheme,
    pub norm: NormKind,
    #[serde(default = "default_norm_eps")]
    pub norm_eps: f32,
    #[serde(default = "default_rope_theta")]
    pub rope_theta: f32,
}

impl ModelConfig {
    /// Pre-norm, rmsnorm, absolute-position toy architecture.
    pub fn toy(n_layers: usize, d_model: usize, n_heads: usize, vocab_size: usize) -> Self {
        Self {
            n_layers,
            d_model,
            n_heads,
            d_ff: 4 * d_model,
            vocab_size,
            max_seq: 128,
            pos_scheme: PosScheme::AbsoluteLearned,
            norm: NormKind::RmsNorm,
            norm_eps: default_norm_eps(),
            rope_theta: default_rope_theta(),
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers < 2 {
            return Err(Error::Config(format!(
                "n_layers must be at least 2, got {}",
                self.n_layers
            )));
        }
        if self.max_seq < 32 {
            return Err(Error::Config(format!(
                "max_seq must be at least 32, got {}",
                self.max_seq
            )));
        }
        if self.n_heads == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.d_ff == 0 || self.vocab_size < 3 {
            return Err(Error::Config(
                "d_ff must be positive and vocab_size must cover the reserved tokens".into(),
            ));
        }
        if self.pos_scheme == PosScheme::Rotary && !self.head_dim().is_multiple_of(2) {
            return Err(Error::Config(format!(
                "rotary positions need an even head dimension, got {}",
                self.head_dim()
            )));
        }
        if !(self.norm_eps > 0.0 && self.norm_eps.is_finite()) {
            return Err(Error::Config("norm_eps must be positive".into()));
        }
        Ok(())
    }

    /// Every weight this architecture needs, with its exact shape.
    ///
    /// Linear maps are stored `[out, in]`.
    pub fn expected_weights(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.d_model;
        let mut out = vec![("tok_embed".to_string(), vec![self.vocab_size, d])];
        if self.pos_scheme == PosScheme::AbsoluteLearned {
            out.push(("pos_embed".into(), vec![self.max_seq, d]));
        }
        let norm = |prefix: &str, out: &mut Vec<(String, Vec<usize>)>| {
            out.push((format!("{prefix}.weight"), vec![d]));
            if self.norm == NormKind::LayerNorm {
                out.push((format!("{prefix}.bias"), vec![d]));
            }
        };
        for l in 0..self.n_layers {
            norm(&format!("block.{l}.norm1"), &mut out);
            for w in ["wq", "wk", "wv", "wo"] {
                out.push((format!("block.{l}.attn.{w}"), vec![d, d]));
            }
            norm(&format!("block.{l}.norm2"), &mut out);
            out.push((format!("block.{l}.mlp.w_in"), vec![self.d_ff, d]));
            out.push((format!("block.{l}.mlp.w_out"), vec![d, self.d_ff]));
        }
        norm("final_norm", &mut out);
        out.push(("lm_head".into(), vec![self.vocab_size, d]));
        out
    }
}
