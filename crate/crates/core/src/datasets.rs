// SPDX-License-Identifier: MIT OR Apache-2.0

//! Subject/relation/object/time records, few-shot prompting, and
//! relative-answer filtering.
//!
//! Both heads-of-government and TAQA style data use one canonical JSON
//! layout:
//!
//! ```json
//! [{"id": "...", "subject": "...", "relation": "...",
//!   "relative_question": "Who is the current leader of X?",
//!   "explicit_template": "Who was the leader of X in <YEAR>?",
//!   "timeline": [{"answers": ["..."], "start": 1945, "end": 1951}]}]
//! ```

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{InjectionPlan, ModelBundle};
use crate::error::{Error, Result};
use crate::evalkit::{best_f1, YearRange};

pub const YEAR_PLACEHOLDER: &str = "<YEAR>";

/// Years during which one set of answers holds, inclusive at both ends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineSpan {
    pub answers: Vec<String>,
    pub start: i32,
    pub end: i32,
}

impl TimelineSpan {
    pub fn contains(&self, year: i32) -> bool {
        (self.start..=self.end).contains(&year)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrotRecord {
    pub id: String,
    pub subject: String,
    pub relation: String,
    pub relative_question: String,
    pub explicit_template: String,
    pub timeline: Vec<TimelineSpan>,
}

impl SrotRecord {
    /// Checks span ordering and exclusivity and the template placeholder.
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::Record {
            id: self.id.clone(),
            reason,
        };
        for span in &self.timeline {
            if span.start > span.end {
                return Err(fail(format!("span {}-{} is reversed", span.start, span.end)));
            }
            if span.answers.is_empty() {
                return Err(fail(format!("span {}-{} has no answers", span.start, span.end)));
            }
        }
        for pair in self.timeline.windows(2) {
            if pair[1].start <= pair[0].end {
                return Err(fail(format!(
                    "spans {}-{} and {}-{} overlap or are out of order",
                    pair[0].start, pair[0].end, pair[1].start, pair[1].end
                )));
            }
        }
        let placeholders = self.explicit_template.matches(YEAR_PLACEHOLDER).count();
        if placeholders != 1 {
            return Err(fail(format!(
                "explicit_template must contain exactly one {YEAR_PLACEHOLDER}, found {placeholders}"
            )));
        }
        Ok(())
    }

    /// First and last year covered by the timeline.
    pub fn coverage(&self) -> Option<YearRange> {
        Some(YearRange {
            start: self.timeline.first()?.start,
            end: self.timeline.last()?.end,
        })
    }
}

/// Gold answers valid in `year`; empty when no span covers it.
pub fn answers_at(record: &SrotRecord, year: i32) -> &[String] {
    record
        .timeline
        .iter()
        .find(|s| s.contains(year))
        .map_or(&[], |s| s.answers.as_slice())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSchema {
    Hog,
    Taqa,
}

impl DatasetSchema {
    /// Year range used for F1-max on this kind of dataset.
    pub fn f1max_range(self) -> YearRange {
        match self {
            Self::Hog => YearRange::HOG,
            Self::Taqa => YearRange::TAQA,
        }
    }
}

impl std::str::FromStr for DatasetSchema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hog" => Ok(Self::Hog),
            "taqa" => Ok(Self::Taqa),
            _ => Err(Error::Experiment(format!("unknown dataset schema `{s}`"))),
        }
    }
}

pub fn parse_srot(text: &str) -> Result<Vec<SrotRecord>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let records: Vec<SrotRecord> =
        serde_json::from_str(text).map_err(|e| Error::json("dataset", e))?;
    let mut seen = HashSet::new();
    for r in &records {
        r.validate()?;
        if !seen.insert(r.id.as_str()) {
            return Err(Error::Record {
                id: r.id.clone(),
                reason: "duplicate id".into(),
            });
        }
    }
    Ok(records)
}

pub fn load_srot(path: &Path, schema: DatasetSchema) -> Result<Vec<SrotRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records = parse_srot(&text)?;
    log::debug!("loaded {} {schema:?} records from {}", records.len(), path.display());
    Ok(records)
}

pub fn save_srot(path: &Path, records: &[SrotRecord]) -> Result<()> {
    let text = serde_json::to_string_pretty(records).map_err(|e| Error::json("dataset", e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Generic, time-independent question/answer pair used to prime the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    #[serde(rename = "q")]
    pub question: String,
    #[serde(rename = "a")]
    pub answer: String,
}

const DEFAULT_FEWSHOT: &str = include_str!("../resources/fewshot_v1.json");

/// The four bundled generic examples.
pub fn default_fewshot() -> Vec<FewShotExample> {
    serde_json::from_str(DEFAULT_FEWSHOT).expect("bundled few-shot file is valid")
}

pub fn load_fewshot(path: &Path) -> Result<Vec<FewShotExample>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptMode {
    Relative,
    Explicit(i32),
}

/// True when `text` contains a run of four or more ASCII digits.
pub fn contains_year_token(text: &str) -> bool {
    let mut run = 0;
    for c in text.chars() {
        if c.is_ascii_digit() {
            run += 1;
            if run >= 4 {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

fn explicit_prefix(year: i32) -> String {
    format!("as of the year {year},")
}

/// Few-shot `Q:`/`A:` blocks followed by the test question and an open `A:`.
///
/// Relative prompts never mention a year; explicit prompts prefix every
/// question with `as of the year <year>,` and fill the record's template.
pub fn build_prompt(record: &SrotRecord, mode: PromptMode, fewshot: &[FewShotExample]) -> Result<String> {
    let mut lines = Vec::with_capacity(2 * fewshot.len() + 2);
    let question = match mode {
        PromptMode::Relative => {
            if let Some(ex) = fewshot
                .iter()
                .find(|ex| contains_year_token(&ex.question) || contains_year_token(&ex.answer))
            {
                return Err(Error::Prompt(format!(
                    "few-shot example `{}` mentions a year in a relative prompt",
                    ex.question
                )));
            }
            if contains_year_token(&record.relative_question) {
                return Err(Error::Prompt(format!(
                    "relative question of `{}` mentions a year",
                    record.id
                )));
            }
            for ex in fewshot {
                lines.push(format!("Q: {}", ex.question));
                lines.push(format!("A: {}", ex.answer));
            }
            record.relative_question.clone()
        }
        PromptMode::Explicit(year) => {
            let prefix = explicit_prefix(year);
            for ex in fewshot {
                lines.push(format!("Q: {prefix} {}", ex.question));
                lines.push(format!("A: {}", ex.answer));
            }
            let filled = record
                .explicit_template
                .replace(YEAR_PLACEHOLDER, &year.to_string());
            format!("{prefix} {filled}")
        }
    };
    lines.push(format!("Q: {question}"));
    lines.push("A:".into());
    Ok(lines.join("\n"))
}

/// Greedy answer to a prompt, cut at the first stop token and trimmed.
pub fn ask(
    bundle: &ModelBundle,
    prompt: &str,
    plan: Option<&InjectionPlan>,
    max_new: usize,
) -> Result<String> {
    let tokens = bundle.encode_prompt(prompt);
    let generated = bundle.generate(&tokens, plan, max_new)?;
    let end = generated
        .iter()
        .position(|&t| bundle.vocab().is_stop(t))
        .unwrap_or(generated.len());
    Ok(bundle.decode(&generated[..end]).trim().to_string())
}

#[derive(Debug, Clone)]
pub struct FilterConfig {
    /// Keep records scoring strictly above this.
    pub threshold: f64,
    /// Keep at most this many, in input order.
    pub take: usize,
    /// Year whose golds the relative answers are scored against.
    pub cutoff_year: i32,
    pub max_new: usize,
}

impl FilterConfig {
    pub fn new(cutoff_year: i32, take: usize) -> Self {
        Self {
            threshold: 0.5,
            take,
            cutoff_year,
            max_new: 8,
        }
    }
}

/// Relative-prompt F1 of every record against its golds at `cutoff_year`.
///
/// Records with no gold at the cutoff, or whose prompt fails to run, score 0.
pub fn relative_scores(
    records: &[SrotRecord],
    bundle: &ModelBundle,
    fewshot: &[FewShotExample],
    cutoff_year: i32,
    max_new: usize,
) -> Vec<f64> {
    records
        .par_iter()
        .map(|r| {
            let golds = answers_at(r, cutoff_year);
            if golds.is_empty() {
                return 0.0;
            }
            let answer = build_prompt(r, PromptMode::Relative, fewshot)
                .and_then(|p| ask(bundle, &p, None, max_new));
            match answer {
                Ok(a) => best_f1(&a, golds).unwrap_or(0.0),
                Err(e) => {
                    log::warn!("record `{}` skipped during filtering: {e}", r.id);
                    0.0
                }
            }
        })
        .collect()
}

/// Order-preserving selection of records whose score exceeds `threshold`.
pub fn select_by_score(records: &[SrotRecord], scores: &[f64], threshold: f64, take: usize) -> Vec<SrotRecord> {
    records
        .iter()
        .zip(scores)
        .filter(|(_, &s)| s > threshold)
        .map(|(r, _)| r.clone())
        .take(take)
        .collect()
}

/// Keeps the records the model already answers well with relative prompts.
pub fn filter_by_relative_f1(
    records: &[SrotRecord],
    bundle: &ModelBundle,
    fewshot: &[FewShotExample],
    config: &FilterConfig,
) -> Vec<SrotRecord> {
    let scores = relative_scores(records, bundle, fewshot, config.cutoff_year, config.max_new);
    select_by_score(records, &scores, config.threshold, config.take)
}
