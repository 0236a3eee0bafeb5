// SPDX-License-Identifier: MIT OR Apache-2.0

//! Year-conditioned steering vectors and injection plans.
//!
//! For a layer `l` and weighted prompts `{(p_i, c_i)}`:
//!
//! 1. every prompt is encoded with a leading BOS and right-padded with PAD
//!    to `mtl`, the longest encoded length;
//! 2. one un-steered forward pass per prompt taps the input of block `l`,
//!    giving an `[mtl, d_model]` activation matrix `h_i`;
//! 3. `ae = Σ c_i · h_i`.
//!
//! `ae` is then added onto the first `mtl` positions of the user prompt at
//! the same layer. A multi-layer plan extracts one `ae` per layer, all from
//! un-steered passes, and injects them together in a single pass.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{Injection, InjectionPlan, ModelBundle, TapRequest, Tensor, PAD_ID};
use crate::error::{Error, Result};

/// Lower bound of multi-layer ranges unless configured otherwise.
pub const DEFAULT_MULTI_START: usize = 4;

/// Years that render as a bare four-digit number.
pub const SUPPORTED_YEARS: std::ops::RangeInclusive<i32> = 1000..=9999;

/// The negative phrase of a contrasting pair.
pub const RECENT_PHRASE: &str = "recent";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPrompt {
    pub text: String,
    pub coefficient: f32,
}

impl WeightedPrompt {
    pub fn new(text: impl Into<String>, coefficient: f32) -> Self {
        Self {
            text: text.into(),
            coefficient,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    /// The bare year, e.g. `2010`.
    YearOnly,
    /// `the year is 2010`.
    ContextPhrase,
    /// The year weighted positively and `recent` negatively.
    ContrastingPair,
}

impl PromptStyle {
    pub const ALL: [PromptStyle; 3] = [Self::YearOnly, Self::ContextPhrase, Self::ContrastingPair];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::YearOnly => "year_only",
            Self::ContextPhrase => "context_phrase",
            Self::ContrastingPair => "contrasting_pair",
        }
    }
}

impl fmt::Display for PromptStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::UnknownStyle(s.to_string()))
    }
}

/// Weighted prompts for one style and target year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringSpec {
    prompts: Vec<WeightedPrompt>,
    style: PromptStyle,
    year: i32,
}

impl SteeringSpec {
    /// A contrasting pair has exactly one positive and one negative prompt;
    /// the other styles have exactly one prompt.
    pub fn new(style: PromptStyle, year: i32, prompts: Vec<WeightedPrompt>) -> Result<Self> {
        for p in &prompts {
            if p.text.trim().is_empty() {
                return Err(Error::Steering("steering prompt text is empty".into()));
            }
            if !p.coefficient.is_finite() || p.coefficient == 0.0 {
                return Err(Error::Steering(format!(
                    "coefficient for `{}` must be finite and non-zero, got {}",
                    p.text, p.coefficient
                )));
            }
        }
        let ok = match style {
            PromptStyle::ContrastingPair => {
                prompts.len() == 2
                    && prompts.iter().filter(|p| p.coefficient > 0.0).count() == 1
            }
            _ => prompts.len() == 1,
        };
        if !ok {
            return Err(Error::Steering(format!(
                "{style} needs {}, got {} prompt(s)",
                match style {
                    PromptStyle::ContrastingPair => "one positive and one negative prompt",
                    _ => "exactly one prompt",
                },
                prompts.len()
            )));
        }
        Ok(Self {
            prompts,
            style,
            year,
        })
    }

    pub fn prompts(&self) -> &[WeightedPrompt] {
        &self.prompts
    }

    pub fn style(&self) -> PromptStyle {
        self.style
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    /// Same prompts with every coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        let prompts = self
            .prompts
            .iter()
            .map(|p| WeightedPrompt::new(p.text.clone(), p.coefficient * factor))
            .collect();
        Self::new(self.style, self.year, prompts)
    }
}

/// Which layers receive the steering vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerMode {
    Single { layer: usize },
    /// Every layer in `lo..=hi`, injected together.
    Multi { lo: usize, hi: usize },
}

impl LayerMode {
    pub fn single(layer: usize) -> Self {
        Self::Single { layer }
    }

    /// `DEFAULT_MULTI_START..=hi`.
    pub fn multi_to(hi: usize) -> Self {
        Self::Multi {
            lo: DEFAULT_MULTI_START,
            hi,
        }
    }

    pub fn is_multi(self) -> bool {
        matches!(self, Self::Multi { .. })
    }

    pub fn layers(self) -> Vec<usize> {
        match self {
            Self::Single { layer } => vec![layer],
            Self::Multi { lo, hi } => (lo..=hi).collect(),
        }
    }

    pub fn validate(self, n_layers: usize) -> Result<()> {
        let (lo, hi) = match self {
            Self::Single { layer } => (layer, layer),
            Self::Multi { lo, hi } => (lo, hi),
        };
        if lo > hi {
            return Err(Error::Steering(format!("layer range {lo}-{hi} is reversed")));
        }
        if hi >= n_layers {
            return Err(Error::LayerOutOfRange { layer: hi, n_layers });
        }
        Ok(())
    }

    /// `L6` for a single layer, `L4-10` for a range.
    pub fn label(self) -> String {
        match self {
            Self::Single { layer } => format!("L{layer}"),
            Self::Multi { lo, hi } => format!("L{lo}-{hi}"),
        }
    }
}

impl fmt::Display for LayerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Coefficient pair `[single-layer, multi-layer]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ByMode {
    pub single: f32,
    pub multi: f32,
}

impl ByMode {
    fn pick(self, mode: LayerMode) -> f32 {
        if mode.is_multi() {
            self.multi
        } else {
            self.single
        }
    }
}

/// Coefficients for each prompt style. Defaults: year only and context
/// phrase use 4 (single) / 1 (multi); the contrasting pair uses year 4 and
/// `recent` -2 (single) / year 2 and `recent` -1 (multi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoefficientTable {
    pub year_only: ByMode,
    pub context_phrase: ByMode,
    pub contrasting_year: ByMode,
    pub contrasting_recent: ByMode,
}

impl Default for CoefficientTable {
    fn default() -> Self {
        Self {
            year_only: ByMode { single: 4.0, multi: 1.0 },
            context_phrase: ByMode { single: 4.0, multi: 1.0 },
            contrasting_year: ByMode { single: 4.0, multi: 2.0 },
            contrasting_recent: ByMode { single: -2.0, multi: -1.0 },
        }
    }
}

/// Steering prompts for `style` aligned to `year`, with the default
/// coefficients for `mode`.
pub fn temporal_prompt_set(style: PromptStyle, year: i32, mode: LayerMode) -> Result<SteeringSpec> {
    temporal_prompt_set_with(&CoefficientTable::default(), style, year, mode)
}

pub fn temporal_prompt_set_with(
    table: &CoefficientTable,
    style: PromptStyle,
    year: i32,
    mode: LayerMode,
) -> Result<SteeringSpec> {
    if !SUPPORTED_YEARS.contains(&year) {
        return Err(Error::Steering(format!(
            "year {year} outside supported range {}-{}",
            SUPPORTED_YEARS.start(),
            SUPPORTED_YEARS.end()
        )));
    }
    let prompts = match style {
        PromptStyle::YearOnly => vec![WeightedPrompt::new(year.to_string(), table.year_only.pick(mode))],
        PromptStyle::ContextPhrase => vec![WeightedPrompt::new(
            format!("the year is {year}"),
            table.context_phrase.pick(mode),
        )],
        PromptStyle::ContrastingPair => vec![
            WeightedPrompt::new(year.to_string(), table.contrasting_year.pick(mode)),
            WeightedPrompt::new(RECENT_PHRASE, table.contrasting_recent.pick(mode)),
        ],
    };
    SteeringSpec::new(style, year, prompts)
}

/// Longest encoded prompt, counting the leading BOS.
pub fn max_token_length(bundle: &ModelBundle, prompts: &[WeightedPrompt]) -> usize {
    prompts
        .iter()
        .map(|p| bundle.encode_prompt(&p.text).len())
        .max()
        .unwrap_or(0)
}

/// Steering vectors for several layers at once; each prompt is run once.
pub fn build_layer_vectors(
    bundle: &ModelBundle,
    spec: &SteeringSpec,
    layers: &[usize],
) -> Result<BTreeMap<usize, Tensor>> {
    let mtl = max_token_length(bundle, spec.prompts());
    if mtl > bundle.config().max_seq {
        return Err(Error::PromptTooLong {
            len: mtl,
            max_seq: bundle.config().max_seq,
        });
    }
    let taps = TapRequest::layers(layers.iter().copied());
    let mut out: BTreeMap<usize, Tensor> = layers
        .iter()
        .map(|&l| (l, Tensor::zeros(vec![mtl, bundle.d_model()])))
        .collect();
    for prompt in spec.prompts() {
        let mut tokens = bundle.encode_prompt(&prompt.text);
        tokens.resize(mtl, PAD_ID);
        let mut pass = bundle.prefill(&tokens, &taps, None)?;
        for (layer, ae) in out.iter_mut() {
            let h = pass.tapped.remove(layer).expect("requested layer was tapped");
            ae.add_assign(&h.scale(prompt.coefficient))?;
        }
    }
    Ok(out)
}

/// `Σ c_i · h_i` at `layer`, shaped `[mtl, d_model]`.
pub fn build_layer_vector(bundle: &ModelBundle, spec: &SteeringSpec, layer: usize) -> Result<Tensor> {
    Ok(build_layer_vectors(bundle, spec, &[layer])?
        .remove(&layer)
        .expect("vector for requested layer"))
}

/// Assembles the injections for `mode`, one entry per targeted layer.
pub fn build_plan(bundle: &ModelBundle, spec: &SteeringSpec, mode: LayerMode) -> Result<InjectionPlan> {
    mode.validate(bundle.n_layers())?;
    let vectors = build_layer_vectors(bundle, spec, &mode.layers())?;
    InjectionPlan::new(
        vectors
            .into_iter()
            .map(|(layer, ae)| Injection { layer, ae })
            .collect(),
    )
}
