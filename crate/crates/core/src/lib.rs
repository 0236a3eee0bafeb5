// SPDX-License-Identifier: MIT OR Apache-2.0

//! Temporal activation steering for decoder-only transformers.
//!
//! * [`engine`]: a small pre-norm transformer with residual-stream taps,
//!   additive injections, KV-cached greedy decoding and a
//!   safetensors-layout weight loader.
//! * [`steering`]: year-conditioned steering vectors built from weighted
//!   prompts, assembled into single- or multi-layer injection plans.
//! * [`evalkit`]: SQuAD-style answer normalization, token F1, averaged F1
//!   and F1-max.
//! * [`datasets`]: subject/relation/object/time records, loaders, prompt
//!   templates and relative-F1 filtering.
//! * [`sweep`]: relative/explicit benchmarks, single- and multi-layer
//!   sweeps, and CSV/JSON reports.
//! * [`synth`]: seeded random models and toy worlds for tests and demos.

pub mod datasets;
pub mod engine;
mod error;
pub mod evalkit;
pub mod steering;
pub mod sweep;
pub mod synth;

pub use error::{Error, Result};
