// SPDX-License-Identifier: MIT OR Apache-2.0

//! Minimal decoder-only transformer with residual-stream taps and
//! additive injection points, greedy generation and a flat weight
//! container loader.

mod bundle;
mod config;
pub mod container;
mod forward;
mod plan;
mod tensor;
mod vocab;

pub use bundle::{load_model, ModelBundle, CONFIG_FILE, CONTAINER_FILE, VOCAB_FILE};
pub use config::{ModelConfig, NormKind, PosScheme};
pub use forward::{KvCache, Prefill};
pub use plan::{Injection, InjectionPlan, TapRequest};
pub use tensor::Tensor;
pub use vocab::{
    TokenId, Vocab, BOS_ID, BOS_TOKEN, EOS_TOKEN, NL_TOKEN, PAD_ID, PAD_TOKEN, UNK_ID, UNK_TOKEN,
};
