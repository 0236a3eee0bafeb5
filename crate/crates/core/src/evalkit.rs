// SPDX-License-Identifier: MIT OR Apache-2.0

//! Answer scoring: normalization, token F1, per-year averages and F1-max.
//!
//! Normalization follows the SQuAD evaluation script: lowercase, drop
//! punctuation, drop the articles `a`, `an`, `the`, collapse whitespace.
//! Token F1 is computed over whitespace tokens of the normalized strings
//! with multiplicity. Metric tokens are independent of any model vocabulary.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive span of years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearRange {
    pub start: i32,
    pub end: i32,
}

impl YearRange {
    pub fn new(start: i32, end: i32) -> Result<Self> {
        if start > end {
            return Err(Error::Eval(format!("year range {start}-{end} is reversed")));
        }
        Ok(Self { start, end })
    }

    /// Heads-of-government style datasets.
    pub const HOG: YearRange = YearRange { start: 1945, end: 2020 };
    /// TAQA style datasets.
    pub const TAQA: YearRange = YearRange { start: 2000, end: 2023 };

    pub fn contains(&self, year: i32) -> bool {
        (self.start..=self.end).contains(&year)
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.start..=self.end
    }
}

/// One scored prediction for one question at one aligned year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredAnswer {
    pub question_id: String,
    pub year: i32,
    pub prediction: String,
    pub f1: f64,
}

pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    no_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let pred = normalize_answer(prediction);
    let gold = normalize_answer(gold);
    let pred: Vec<&str> = pred.split_whitespace().collect();
    let gold: Vec<&str> = gold.split_whitespace().collect();
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pred {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Highest [`token_f1`] against any of the accepted surface forms.
pub fn best_f1<S: AsRef<str>>(prediction: &str, golds: &[S]) -> Result<f64> {
    golds
        .iter()
        .map(|g| token_f1(prediction, g.as_ref()))
        .reduce(f64::max)
        .ok_or_else(|| Error::Eval("no gold answers to score against".into()))
}

/// Mean F1 over the answers for a single aligned year.
pub fn year_avg_f1(scored: &[ScoredAnswer]) -> Result<f64> {
    let first = scored
        .first()
        .ok_or_else(|| Error::Eval("cannot average an empty score list".into()))?;
    if let Some(other) = scored.iter().find(|s| s.year != first.year) {
        return Err(Error::Eval(format!(
            "mixed years {} and {} in one average",
            first.year, other.year
        )));
    }
    Ok(scored.iter().map(|s| s.f1).sum::<f64>() / scored.len() as f64)
}

/// Mean over questions of the best score across all years in `range`.
///
/// Every question must carry a score for every year in the range.
pub fn f1_max(per_question: &BTreeMap<String, BTreeMap<i32, f64>>, range: YearRange) -> Result<f64> {
    if per_question.is_empty() {
        return Err(Error::Eval("no questions to score".into()));
    }
    let mut total = 0.0;
    for (question, by_year) in per_question {
        let mut best = f64::NEG_INFINITY;
        for year in range.years() {
            let s = by_year.get(&year).ok_or_else(|| {
                Error::Eval(format!("question `{question}` has no score for {year}"))
            })?;
            best = best.max(*s);
        }
        total += best;
    }
    Ok(total / per_question.len() as f64)
}

/// One line of the per-question score CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRow {
    pub question_id: String,
    pub year: i32,
    pub style: String,
    pub layers: String,
    pub prediction: String,
    pub f1: f64,
}

/// Writes `question_id,year,style,layers,prediction,f1` rows with a header.
pub fn write_scored_csv<W: Write>(rows: &[ScoredRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["question_id", "year", "style", "layers", "prediction", "f1"])?;
    for r in rows {
        w.write_record([
            r.question_id.as_str(),
            &r.year.to_string(),
            &r.style,
            &r.layers,
            &r.prediction,
            &format!("{:.6}", r.f1),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
