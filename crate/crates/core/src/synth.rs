// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded random models and small synthetic worlds.
//!
//! A [`ToyWorld`] is a set of fictional countries whose leaders change over
//! a span of years, with a word-level vocabulary that covers every
//! question, answer, year, steering phrase and few-shot example. Paired with
//! [`random_bundle`] it exercises the whole pipeline without trained
//! weights.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datasets::{default_fewshot, SrotRecord, TimelineSpan, YEAR_PLACEHOLDER};
use crate::engine::{ModelBundle, ModelConfig, Tensor, Vocab, EOS_TOKEN, NL_TOKEN};
use crate::error::Result;
use crate::evalkit::YearRange;
use crate::steering::RECENT_PHRASE;

/// Weights drawn uniformly with unit-ish variance per layer; norm gains are
/// 1 and norm biases 0. Same config, vocab and seed give the same bundle.
pub fn random_bundle(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<ModelBundle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = BTreeMap::new();
    for (name, shape) in config.expected_weights() {
        let numel: usize = shape.iter().product();
        let data: Vec<f32> = if name.ends_with(".weight") {
            vec![1.0; numel]
        } else if name.ends_with(".bias") {
            vec![0.0; numel]
        } else {
            let fan_in = *shape.last().expect("2-d weight") as f32;
            let bound = if name.ends_with("embed") {
                1.0
            } else {
                (3.0 / fan_in).sqrt()
            };
            (0..numel).map(|_| rng.random_range(-bound..bound)).collect()
        };
        weights.insert(name, Tensor::new(shape, data)?);
    }
    ModelBundle::from_parts(config, weights, vocab)
}

const COUNTRIES: [&str; 24] = [
    "Aland", "Borsk", "Cadria", "Dovna", "Elmar", "Fenwick", "Galt", "Hesper", "Istra", "Jorvik",
    "Kestrel", "Lumen", "Marrow", "Norland", "Ostra", "Pellam", "Quarry", "Rheda", "Solvay",
    "Tarn", "Ulmo", "Vesk", "Wyre", "Yarrow",
];

const GIVEN: [&str; 12] = [
    "Ana", "Bram", "Cleo", "Dirk", "Edda", "Falk", "Greta", "Hugo", "Ines", "Jonas", "Kaja", "Lars",
];

const FAMILY: [&str; 10] = [
    "Voss", "Marek", "Tull", "Okafor", "Brandt", "Sallow", "Quist", "Renn", "Ibarra", "Holm",
];

const FIXED_WORDS: [&str; 22] = [
    "Q:", "A:", "Who", "who", "is", "was", "the", "current", "leader", "of", "in", "as", "year",
    "In", ",", "?", ".", "leads", "now", "then", EOS_TOKEN, NL_TOKEN,
];

#[derive(Debug, Clone, PartialEq)]
pub struct ToyWorldSpec {
    pub seed: u64,
    pub n_entities: usize,
    pub years: YearRange,
    /// Longest tenure in years; tenures are drawn from `1..=max_tenure`.
    pub max_tenure: i32,
}

impl Default for ToyWorldSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            n_entities: 20,
            years: YearRange { start: 1945, end: 1975 },
            max_tenure: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyWorld {
    pub records: Vec<SrotRecord>,
    pub vocab: Vocab,
}

/// Splits `text` the way the model tokenizer does and returns the pieces.
fn word_pieces(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let start = word.find(|c: char| !c.is_ascii_punctuation()).unwrap_or(word.len());
        let end = word
            .rfind(|c: char| !c.is_ascii_punctuation())
            .map_or(start, |i| i + word[i..].chars().next().map_or(1, char::len_utf8));
        out.extend(word[..start].chars().map(String::from));
        if start < end {
            out.push(word[start..end].to_string());
        }
        out.extend(word[end..].chars().map(String::from));
    }
    out
}

impl ToyWorld {
    pub fn generate(spec: &ToyWorldSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let n = spec.n_entities.min(COUNTRIES.len());
        let mut records = Vec::with_capacity(n);
        for (i, country) in COUNTRIES.iter().take(n).enumerate() {
            let mut timeline = Vec::new();
            let mut year = spec.years.start;
            let mut last = String::new();
            while year <= spec.years.end {
                let tenure = rng.random_range(1..=spec.max_tenure.max(1));
                let end = (year + tenure - 1).min(spec.years.end);
                let name = loop {
                    let name = format!(
                        "{} {}",
                        GIVEN[rng.random_range(0..GIVEN.len())],
                        FAMILY[rng.random_range(0..FAMILY.len())]
                    );
                    if name != last {
                        break name;
                    }
                };
                last.clone_from(&name);
                timeline.push(TimelineSpan {
                    answers: vec![name],
                    start: year,
                    end,
                });
                year = end + 1;
            }
            records.push(SrotRecord {
                id: format!("hog-{i:03}"),
                subject: country.to_string(),
                relation: "head of government".into(),
                relative_question: format!("Who is the current leader of {country}?"),
                explicit_template: format!("Who was the leader of {country} in {YEAR_PLACEHOLDER}?"),
                timeline,
            });
        }

        let mut words: Vec<String> = FIXED_WORDS.iter().map(|w| w.to_string()).collect();
        words.push(RECENT_PHRASE.into());
        words.extend(COUNTRIES.iter().take(n).map(|c| c.to_string()));
        words.extend(GIVEN.iter().chain(FAMILY.iter()).map(|w| w.to_string()));
        words.extend(spec.years.years().map(|y| y.to_string()));
        for ex in default_fewshot() {
            words.extend(word_pieces(&ex.question));
            words.extend(word_pieces(&ex.answer));
        }
        Self {
            records,
            vocab: Vocab::from_words(words),
        }
    }

    /// Toy config sized to this world's vocabulary.
    pub fn config(&self, n_layers: usize, d_model: usize, n_heads: usize) -> ModelConfig {
        ModelConfig::toy(n_layers, d_model, n_heads, self.vocab.len())
    }

    pub fn random_bundle(&self, n_layers: usize, d_model: usize, n_heads: usize, seed: u64) -> Result<ModelBundle> {
        random_bundle(self.config(n_layers, d_model, n_heads), self.vocab.clone(), seed)
    }
}
