// SPDX-License-Identifier: MIT OR Apache-2.0

//! Word-level model vocabulary and tokenizer.
//!
//! Text is split on whitespace. A word found verbatim in the vocabulary is
//! one token; otherwise leading and trailing ASCII punctuation is split off
//! into separate tokens, and whatever remains unknown maps to `<unk>`.
//! A newline becomes the `<nl>` token when the vocabulary defines one.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD_TOKEN: &str = "<pad>";
pub const BOS_TOKEN: &str = "<bos>";
pub const UNK_TOKEN: &str = "<unk>";
pub const EOS_TOKEN: &str = "<eos>";
pub const NL_TOKEN: &str = "<nl>";

pub const PAD_ID: TokenId = 0;
pub const BOS_ID: TokenId = 1;
pub const UNK_ID: TokenId = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    ids: HashMap<String, TokenId>,
    tokens: Vec<String>,
    eos: Option<TokenId>,
    nl: Option<TokenId>,
}

impl Vocab {
    /// Builds a vocabulary from a token → id map.
    ///
    /// Ids must be dense in `[0, len)` with the reserved tokens at 0, 1, 2.
    pub fn from_map(map: BTreeMap<String, TokenId>) -> Result<Self> {
        let size = map.len();
        Self::with_size(map, size)
    }

    /// Like [`Vocab::from_map`], but checks density against a declared size.
    pub fn with_size(map: BTreeMap<String, TokenId>, size: usize) -> Result<Self> {
        let mut slots: Vec<Option<String>> = vec![None; size];
        for (tok, &id) in &map {
            let slot = slots.get_mut(id as usize).ok_or_else(|| {
                Error::Vocab(format!("token `{tok}` has id {id}, outside [0, {size})"))
            })?;
            if let Some(prev) = slot {
                return Err(Error::Vocab(format!(
                    "tokens `{prev}` and `{tok}` share id {id}"
                )));
            }
            *slot = Some(tok.clone());
        }
        let tokens = slots
            .into_iter()
            .enumerate()
            .map(|(i, t)| t.ok_or(Error::VocabGap(i as TokenId)))
            .collect::<Result<Vec<_>>>()?;
        for (tok, id) in [(PAD_TOKEN, PAD_ID), (BOS_TOKEN, BOS_ID), (UNK_TOKEN, UNK_ID)] {
            match map.get(tok) {
                Some(&got) if got == id => {}
                Some(&got) => {
                    return Err(Error::Vocab(format!(
                        "reserved token {tok} must have id {id}, found {got}"
                    )))
                }
                None => return Err(Error::Vocab(format!("reserved token {tok} is missing"))),
            }
        }
        let ids: HashMap<String, TokenId> = map.into_iter().collect();
        Ok(Self {
            eos: ids.get(EOS_TOKEN).copied(),
            nl: ids.get(NL_TOKEN).copied(),
            ids,
            tokens,
        })
    }

    /// Reserved tokens followed by `words` in order; duplicates are skipped.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = vec![PAD_TOKEN.into(), BOS_TOKEN.into(), UNK_TOKEN.into()];
        for w in words {
            let w = w.into();
            if !tokens.contains(&w) {
                tokens.push(w);
            }
        }
        let map = tokens
            .into_iter()
            .enumerate()
            .map(|(i, t)| (t, i as TokenId))
            .collect();
        Self::from_map(map).expect("word list produces a dense vocabulary")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn eos_id(&self) -> Option<TokenId> {
        self.eos
    }

    pub fn nl_id(&self) -> Option<TokenId> {
        self.nl
    }

    /// Tokens that end a generated answer.
    pub fn is_stop(&self, id: TokenId) -> bool {
        Some(id) == self.eos || Some(id) == self.nl
    }

    pub fn to_map(&self) -> BTreeMap<String, TokenId> {
        self.ids.iter().map(|(k, &v)| (k.clone(), v)).collect()
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        for (i, line) in text.split('\n').enumerate() {
            if i > 0 {
                if let Some(nl) = self.nl {
                    out.push(nl);
                }
            }
            for word in line.split_whitespace() {
                self.encode_word(word, &mut out);
            }
        }
        out
    }

    fn encode_word(&self, word: &str, out: &mut Vec<TokenId>) {
        if let Some(id) = self.id(word) {
            out.push(id);
            return;
        }
        let core_start = word
            .char_indices()
            .find(|(_, c)| !c.is_ascii_punctuation())
            .map_or(word.len(), |(i, _)| i);
        let core_end = word
            .char_indices()
            .rev()
            .find(|(_, c)| !c.is_ascii_punctuation())
            .map_or(core_start, |(i, c)| i + c.len_utf8());
        if core_start == 0 && core_end == word.len() {
            out.push(UNK_ID);
            return;
        }
        let lookup = |s: &str| self.id(s).unwrap_or(UNK_ID);
        out.extend(word[..core_start].chars().map(|c| lookup(&c.to_string())));
        if core_start < core_end {
            out.push(lookup(&word[core_start..core_end]));
        }
        out.extend(word[core_end..].chars().map(|c| lookup(&c.to_string())));
    }

    /// Joins tokens with single spaces, renders `<nl>` as a newline, and
    /// drops PAD, BOS and EOS.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        let mut at_line_start = true;
        for &id in ids {
            if id == PAD_ID || id == BOS_ID || Some(id) == self.eos {
                continue;
            }
            if Some(id) == self.nl {
                out.push('\n');
                at_line_start = true;
                continue;
            }
            if !at_line_start {
                out.push(' ');
            }
            out.push_str(self.token(id).unwrap_or(UNK_TOKEN));
            at_line_start = false;
        }
        out
    }
}
