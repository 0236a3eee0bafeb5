// SPDX-License-Identifier: MIT OR Apache-2.0

#![allow(dead_code)]

use tempsteer_core::engine::{ModelBundle, ModelConfig, NormKind, PosScheme, TokenId};
use tempsteer_core::synth::{random_bundle, ToyWorld, ToyWorldSpec};

pub fn world() -> ToyWorld {
    ToyWorld::generate(&ToyWorldSpec::default())
}

/// Random-weight toy model with d_model 32 and 4 heads.
pub fn bundle(n_layers: usize, seed: u64) -> ModelBundle {
    world().random_bundle(n_layers, 32, 4, seed).unwrap()
}

pub fn bundle_with(n_layers: usize, seed: u64, pos: PosScheme, norm: NormKind) -> ModelBundle {
    let w = world();
    let mut config: ModelConfig = w.config(n_layers, 32, 4);
    config.pos_scheme = pos;
    config.norm = norm;
    random_bundle(config, w.vocab, seed).unwrap()
}

pub fn question_tokens(bundle: &ModelBundle, i: usize) -> Vec<TokenId> {
    let w = world();
    let r = &w.records[i % w.records.len()];
    bundle.encode_prompt(&format!("Q: {}\nA:", r.relative_question))
}

pub fn bits(data: &[f32]) -> Vec<u32> {
    data.iter().map(|x| x.to_bits()).collect()
}
