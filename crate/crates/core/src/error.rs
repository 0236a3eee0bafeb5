// SPDX-License-Identifier: MIT OR Apache-2.0

//! Crate-wide error type.

use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed tensor container: {0}")]
    Container(String),

    #[error("missing tensor `{0}`")]
    MissingTensor(String),

    #[error("tensor `{name}` has shape {actual:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    Tensor(String),

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("vocabulary is not dense: no token has id {0}")]
    VocabGap(u32),

    #[error("invalid vocabulary: {0}")]
    Vocab(String),

    #[error("prompt has {len} tokens, but the context window is {max_seq}")]
    PromptTooLong { len: usize, max_seq: usize },

    #[error("empty prompt")]
    EmptyPrompt,

    #[error("prompt has {len} tokens, shorter than the {mtl}-token steering vector at layer {layer}")]
    PromptShorterThanVector { len: usize, mtl: usize, layer: usize },

    #[error("layer {layer} out of range for a {n_layers}-layer model")]
    LayerOutOfRange { layer: usize, n_layers: usize },

    #[error("invalid injection plan: {0}")]
    Plan(String),

    #[error("invalid steering spec: {0}")]
    Steering(String),

    #[error("unknown prompt style `{0}`")]
    UnknownStyle(String),

    #[error("invalid evaluation input: {0}")]
    Eval(String),

    #[error("record `{id}`: {reason}")]
    Record { id: String, reason: String },

    #[error("invalid prompt: {0}")]
    Prompt(String),

    #[error("invalid experiment config: {0}")]
    Experiment(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Self::Json {
            context: context.into(),
            source,
        }
    }

    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Io { .. } => "io",
            Self::Json { .. } => "json",
            Self::Csv(_) => "csv",
            Self::Container(_) => "container",
            Self::MissingTensor(_) => "missing_tensor",
            Self::ShapeMismatch { .. } => "shape_mismatch",
            Self::Tensor(_) => "tensor",
            Self::Config(_) => "config",
            Self::VocabGap(_) => "vocab_gap",
            Self::Vocab(_) => "vocab",
            Self::PromptTooLong { .. } => "prompt_too_long",
            Self::EmptyPrompt => "empty_prompt",
            Self::PromptShorterThanVector { .. } => "prompt_shorter_than_vector",
            Self::LayerOutOfRange { .. } => "layer_out_of_range",
            Self::Plan(_) => "plan",
            Self::Steering(_) => "steering",
            Self::UnknownStyle(_) => "unknown_style",
            Self::Eval(_) => "eval",
            Self::Record { .. } => "record",
            Self::Prompt(_) => "prompt",
            Self::Experiment(_) => "experiment",
        }
    }
}
