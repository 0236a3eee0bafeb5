// SPDX-License-Identifier: MIT OR Apache-2.0

//! Model bundle: config, named weights and vocabulary, validated on load.
//!
//! On disk a model is three files side by side:
//!
//! * `model.safetensors`: the weight container (see [`super::container`])
//! * `config.json`: [`ModelConfig`]
//! * `vocab.json`: token string → id
//!
//! [`load_model`] accepts either the directory or the container path; the
//! sidecars are always looked up in the container's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::config::{ModelConfig, NormKind, PosScheme};
use super::container::{read_container, write_container};
use super::tensor::Tensor;
use super::vocab::{TokenId, Vocab, BOS_ID};
use crate::error::{Error, Result};

pub const CONTAINER_FILE: &str = "model.safetensors";
pub const CONFIG_FILE: &str = "config.json";
pub const VOCAB_FILE: &str = "vocab.json";

#[derive(Debug, Clone)]
pub(crate) struct NormRefs {
    pub weight: usize,
    pub bias: Option<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct BlockRefs {
    pub norm1: NormRefs,
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
    pub norm2: NormRefs,
    pub w_in: usize,
    pub w_out: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub tok_embed: usize,
    pub pos_embed: Option<usize>,
    pub blocks: Vec<BlockRefs>,
    pub final_norm: NormRefs,
    pub lm_head: usize,
}

/// Immutable transformer: config, weights and vocabulary.
///
/// Every weight named by [`ModelConfig::expected_weights`] is present with
/// its exact shape, and vocabulary ids are dense in `[0, vocab_size)`.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    vocab: Vocab,
    pub(crate) layout: Layout,
}

impl ModelBundle {
    pub fn from_parts(
        config: ModelConfig,
        mut weights: BTreeMap<String, Tensor>,
        vocab: Vocab,
    ) -> Result<Self> {
        config.validate()?;
        if vocab.len() != config.vocab_size {
            return Err(Error::Vocab(format!(
                "vocabulary has {} tokens, config declares vocab_size {}",
                vocab.len(),
                config.vocab_size
            )));
        }
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        let mut index = BTreeMap::new();
        for (name, shape) in config.expected_weights() {
            let t = weights
                .remove(&name)
                .ok_or_else(|| Error::MissingTensor(name.clone()))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    name,
                    expected: shape,
                    actual: t.shape().to_vec(),
                });
            }
            if !t.is_finite() {
                return Err(Error::Tensor(format!("tensor `{name}` has non-finite values")));
            }
            index.insert(name.clone(), names.len());
            names.push(name);
            tensors.push(t);
        }
        if let Some(extra) = weights.keys().next() {
            log::warn!("ignoring {} unexpected tensor(s), first is `{extra}`", weights.len());
        }

        let norm = |prefix: &str| NormRefs {
            weight: index[&format!("{prefix}.weight")],
            bias: match config.norm {
                NormKind::LayerNorm => Some(index[&format!("{prefix}.bias")]),
                NormKind::RmsNorm => None,
            },
        };
        let blocks = (0..config.n_layers)
            .map(|l| BlockRefs {
                norm1: norm(&format!("block.{l}.norm1")),
                wq: index[&format!("block.{l}.attn.wq")],
                wk: index[&format!("block.{l}.attn.wk")],
                wv: index[&format!("block.{l}.attn.wv")],
                wo: index[&format!("block.{l}.attn.wo")],
                norm2: norm(&format!("block.{l}.norm2")),
                w_in: index[&format!("block.{l}.mlp.w_in")],
                w_out: index[&format!("block.{l}.mlp.w_out")],
            })
            .collect();
        let layout = Layout {
            tok_embed: index["tok_embed"],
            pos_embed: match config.pos_scheme {
                PosScheme::AbsoluteLearned => Some(index["pos_embed"]),
                PosScheme::Rotary => None,
            },
            blocks,
            final_norm: norm("final_norm"),
            lm_head: index["lm_head"],
        };
        Ok(Self {
            config,
            names,
            tensors,
            vocab,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn n_layers(&self) -> usize {
        self.config.n_layers
    }

    pub fn d_model(&self) -> usize {
        self.config.d_model
    }

    pub fn weight(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn weights(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub(crate) fn t(&self, idx: usize) -> &Tensor {
        &self.tensors[idx]
    }

    /// Word-level encoding without BOS.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        self.vocab.encode(text)
    }

    /// Encoding as fed to the model: BOS followed by [`ModelBundle::encode`].
    pub fn encode_prompt(&self, text: &str) -> Vec<TokenId> {
        let mut ids = vec![BOS_ID];
        ids.extend(self.vocab.encode(text));
        ids
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        self.vocab.decode(ids)
    }

    /// Writes `model.safetensors`, `config.json` and `vocab.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let weights: BTreeMap<String, Tensor> = self
            .weights()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect();
        write_container(&dir.join(CONTAINER_FILE), &weights)?;
        write_json(&dir.join(CONFIG_FILE), &self.config)?;
        write_json(&dir.join(VOCAB_FILE), &self.vocab.to_map())
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

/// Loads a model from its directory or from the container file inside it.
pub fn load_model(path: &Path) -> Result<ModelBundle> {
    let (dir, container): (PathBuf, PathBuf) = if path.is_dir() {
        (path.to_path_buf(), path.join(CONTAINER_FILE))
    } else {
        let dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        (dir, path.to_path_buf())
    };
    let config: ModelConfig = read_json(&dir.join(CONFIG_FILE))?;
    let vocab_map: BTreeMap<String, TokenId> = read_json(&dir.join(VOCAB_FILE))?;
    let vocab = Vocab::with_size(vocab_map, config.vocab_size)?;
    let weights = read_container(&container)?;
    ModelBundle::from_parts(config, weights, vocab)
}
