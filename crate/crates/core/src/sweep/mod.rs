// SPDX-License-Identifier: MIT OR Apache-2.0

//! Benchmarks, layer sweeps and their reports.
//!
//! Every row scores one prediction set: one greedy answer per question,
//! produced under a single prompting/steering configuration. `avg_f1` is
//! the mean best F1 against the golds of the row's year, and `f1_max` is
//! the F1-max of the same predictions over the configured year range.
//! Questions with no gold in a year score 0 for that year.
//!
//! Steered rows always use the relative prompt. Timing covers generation
//! only; steering vectors are built once per (style, year, layer) and
//! reused across rows.

mod config;
mod report;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{
    answers_at, build_prompt, default_fewshot, load_fewshot, load_srot, FewShotExample, PromptMode,
    SrotRecord,
};
use crate::engine::{load_model, Injection, InjectionPlan, ModelBundle, Tensor};
use crate::error::{Error, Result};
use crate::evalkit::{best_f1, f1_max, year_avg_f1, ScoredAnswer, YearRange};
use crate::steering::{build_layer_vectors, temporal_prompt_set_with, LayerMode, PromptStyle};

pub use config::{parse_layer_range, ExperimentConfig, ExperimentMode};
pub use report::{emit_report, summarize, ReportFiles, SummaryEntry, CSV_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowMode {
    Relative,
    Explicit,
    Single,
    Multi,
}

impl RowMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Relative => "relative",
            Self::Explicit => "explicit",
            Self::Single => "single",
            Self::Multi => "multi",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub question_id: String,
    pub prediction: String,
    pub f1: f64,
}

/// One experiment result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mode: RowMode,
    pub style: Option<PromptStyle>,
    pub layers: Option<LayerMode>,
    pub year: i32,
    pub avg_f1: f64,
    pub f1_max: f64,
    pub n_questions: usize,
    pub mean_wall_ms: f64,
    pub scores: Vec<QuestionScore>,
}

impl SweepRow {
    pub fn style_label(&self) -> &'static str {
        self.style.map_or("none", PromptStyle::as_str)
    }

    pub fn layers_label(&self) -> String {
        self.layers.map_or_else(|| "-".to_string(), LayerMode::label)
    }

    fn sort_key(&self) -> (Option<PromptStyle>, i32, usize, usize) {
        let (lo, hi) = match self.layers {
            Some(LayerMode::Single { layer }) => (layer, layer),
            Some(LayerMode::Multi { lo, hi }) => (lo, hi),
            None => (0, 0),
        };
        (self.style, self.year, lo, hi)
    }
}

/// Number of rows a config produces; a function of the config alone.
pub fn expected_row_count(config: &ExperimentConfig) -> usize {
    let years = config.years.len();
    match config.mode {
        ExperimentMode::BenchmarkRelative | ExperimentMode::BenchmarkExplicit => years,
        ExperimentMode::SweepSingle { lo, hi } | ExperimentMode::SweepMulti { lo, hi_max: hi } => {
            config.styles.len() * years * (hi + 1).saturating_sub(lo)
        }
    }
}

struct Answer {
    prediction: String,
    wall_ms: f64,
}

/// A loaded, validated experiment.
pub struct Experiment {
    config: ExperimentConfig,
    bundle: ModelBundle,
    records: Vec<SrotRecord>,
    fewshot: Vec<FewShotExample>,
}

impl Experiment {
    /// Loads the model, dataset and few-shot file named by `config`.
    pub fn load(config: ExperimentConfig) -> Result<Self> {
        let bundle = load_model(&config.model)?;
        let records = load_srot(&config.dataset, config.schema)?;
        let fewshot = match &config.fewshot {
            Some(p) => load_fewshot(p)?,
            None => default_fewshot(),
        };
        Self::new(config, bundle, records, fewshot)
    }

    pub fn new(
        config: ExperimentConfig,
        bundle: ModelBundle,
        mut records: Vec<SrotRecord>,
        fewshot: Vec<FewShotExample>,
    ) -> Result<Self> {
        validate(&config, &bundle, &records)?;
        if let Some(limit) = config.limit {
            if limit < records.len() {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                let mut idx: Vec<usize> = (0..records.len()).collect();
                idx.shuffle(&mut rng);
                idx.truncate(limit);
                idx.sort_unstable();
                records = idx.into_iter().map(|i| records[i].clone()).collect();
            }
        }
        Ok(Self {
            config,
            bundle,
            records,
            fewshot,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }

    pub fn records(&self) -> &[SrotRecord] {
        &self.records
    }

    /// Benchmarks or sweeps, depending on the configured mode.
    pub fn run(&self) -> Result<Vec<SweepRow>> {
        if self.config.mode.is_benchmark() {
            self.run_benchmark()
        } else {
            self.run_sweep()
        }
    }

    /// One row per year with relative or explicit prompting.
    pub fn run_benchmark(&self) -> Result<Vec<SweepRow>> {
        match self.config.mode {
            ExperimentMode::BenchmarkRelative => {
                let answers = self.answer_all(PromptMode::Relative, None);
                self.config
                    .years
                    .iter()
                    .map(|&y| self.score_row(RowMode::Relative, None, None, y, &answers))
                    .collect()
            }
            ExperimentMode::BenchmarkExplicit => self
                .config
                .years
                .iter()
                .map(|&y| {
                    let answers = self.answer_all(PromptMode::Explicit(y), None);
                    self.score_row(RowMode::Explicit, None, None, y, &answers)
                })
                .collect(),
            other => Err(Error::Experiment(format!("{other:?} is not a benchmark mode"))),
        }
    }

    /// Steered rows for every (style, year, layer set), sorted by
    /// style, year, then layers.
    pub fn run_sweep(&self) -> Result<Vec<SweepRow>> {
        let (lo, hi, multi) = match self.config.mode {
            ExperimentMode::SweepSingle { lo, hi } => (lo, hi, false),
            ExperimentMode::SweepMulti { lo, hi_max } => (lo, hi_max, true),
            other => return Err(Error::Experiment(format!("{other:?} is not a sweep mode"))),
        };
        let mut rows = Vec::new();
        for &style in &self.config.styles {
            for &year in &self.config.years {
                let coeff_mode = if multi {
                    LayerMode::Multi { lo, hi }
                } else {
                    LayerMode::single(lo)
                };
                let spec = temporal_prompt_set_with(&self.config.coefficients, style, year, coeff_mode)?;
                let started = Instant::now();
                let layers: Vec<usize> = (lo..=hi).collect();
                let vectors = build_layer_vectors(&self.bundle, &spec, &layers)?;
                log::info!(
                    "built {} {style} vector(s) for {year} in {:.3} ms",
                    vectors.len(),
                    started.elapsed().as_secs_f64() * 1e3
                );
                for top in lo..=hi {
                    let (mode, row_mode) = if multi {
                        (LayerMode::Multi { lo, hi: top }, RowMode::Multi)
                    } else {
                        (LayerMode::single(top), RowMode::Single)
                    };
                    let plan = plan_from(&vectors, mode)?;
                    let answers = self.answer_all(PromptMode::Relative, Some(&plan));
                    rows.push(self.score_row(row_mode, Some(style), Some(mode), year, &answers)?);
                }
            }
        }
        rows.sort_by_key(SweepRow::sort_key);
        Ok(rows)
    }

    fn answer_all(&self, mode: PromptMode, plan: Option<&InjectionPlan>) -> Vec<Option<Answer>> {
        self.records
            .par_iter()
            .map(|r| match self.answer(r, mode, plan) {
                Ok(a) => Some(a),
                Err(e) => {
                    log::warn!("question `{}` skipped: {e}", r.id);
                    None
                }
            })
            .collect()
    }

    fn answer(&self, record: &SrotRecord, mode: PromptMode, plan: Option<&InjectionPlan>) -> Result<Answer> {
        let prompt = build_prompt(record, mode, &self.fewshot)?;
        let tokens = self.bundle.encode_prompt(&prompt);
        let started = Instant::now();
        let generated = self.bundle.generate(&tokens, plan, self.config.max_new)?;
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        let vocab = self.bundle.vocab();
        let end = generated.iter().position(|&t| vocab.is_stop(t)).unwrap_or(generated.len());
        Ok(Answer {
            prediction: self.bundle.decode(&generated[..end]).trim().to_string(),
            wall_ms,
        })
    }

    fn score_row(
        &self,
        mode: RowMode,
        style: Option<PromptStyle>,
        layers: Option<LayerMode>,
        year: i32,
        answers: &[Option<Answer>],
    ) -> Result<SweepRow> {
        let answered: Vec<(&SrotRecord, &Answer)> = self
            .records
            .iter()
            .zip(answers)
            .filter_map(|(r, a)| a.as_ref().map(|a| (r, a)))
            .collect();
        if answered.is_empty() {
            return Err(Error::Experiment(format!(
                "no question could be answered for {} {} {} {year}",
                mode.as_str(),
                style.map_or("none", PromptStyle::as_str),
                layers.map_or_else(|| "-".into(), LayerMode::label),
            )));
        }
        let scored: Vec<ScoredAnswer> = answered
            .iter()
            .map(|(r, a)| ScoredAnswer {
                question_id: r.id.clone(),
                year,
                prediction: a.prediction.clone(),
                f1: score_at(r, &a.prediction, year),
            })
            .collect();
        let avg_f1 = year_avg_f1(&scored)?;
        let f1_max = prediction_f1_max(&answered, self.config.f1max_range())?;
        let mean_wall_ms = answered.iter().map(|(_, a)| a.wall_ms).sum::<f64>() / answered.len() as f64;
        Ok(SweepRow {
            mode,
            style,
            layers,
            year,
            avg_f1,
            f1_max,
            n_questions: answered.len(),
            mean_wall_ms: mean_wall_ms.max(f64::MIN_POSITIVE),
            scores: scored
                .into_iter()
                .map(|s| QuestionScore {
                    question_id: s.question_id,
                    prediction: s.prediction,
                    f1: s.f1,
                })
                .collect(),
        })
    }
}

fn score_at(record: &SrotRecord, prediction: &str, year: i32) -> f64 {
    let golds = answers_at(record, year);
    if golds.is_empty() {
        0.0
    } else {
        best_f1(prediction, golds).expect("non-empty golds")
    }
}

fn prediction_f1_max(answered: &[(&SrotRecord, &Answer)], range: YearRange) -> Result<f64> {
    let table: BTreeMap<String, BTreeMap<i32, f64>> = answered
        .iter()
        .map(|(r, a)| {
            let by_year = range.years().map(|y| (y, score_at(r, &a.prediction, y))).collect();
            (r.id.clone(), by_year)
        })
        .collect();
    f1_max(&table, range)
}

fn plan_from(vectors: &BTreeMap<usize, Tensor>, mode: LayerMode) -> Result<InjectionPlan> {
    InjectionPlan::new(
        mode.layers()
            .into_iter()
            .map(|layer| Injection {
                layer,
                ae: vectors[&layer].clone(),
            })
            .collect(),
    )
}

fn validate(config: &ExperimentConfig, bundle: &ModelBundle, records: &[SrotRecord]) -> Result<()> {
    let fail = |m: String| Err(Error::Experiment(m));
    if records.is_empty() {
        return fail("dataset has no records".into());
    }
    if config.years.is_empty() {
        return fail("no years configured".into());
    }
    if config.max_new == 0 {
        return fail("max_new must be at least 1".into());
    }
    if config.limit == Some(0) {
        return fail("limit must be at least 1".into());
    }
    let range = config.f1max_range();
    if range.start > range.end {
        return fail(format!("f1max_range {}-{} is reversed", range.start, range.end));
    }
    let first = records.iter().filter_map(|r| r.coverage()).map(|c| c.start).min();
    let last = records.iter().filter_map(|r| r.coverage()).map(|c| c.end).max();
    let (Some(first), Some(last)) = (first, last) else {
        return fail("dataset records have empty timelines".into());
    };
    if let Some(y) = config.years.iter().find(|&&y| y < first || y > last) {
        return fail(format!("year {y} is outside the dataset coverage {first}-{last}"));
    }
    if let Some((lo, hi)) = config.mode.layer_bounds() {
        if config.styles.is_empty() {
            return fail("sweeps need at least one prompt style".into());
        }
        if lo > hi || hi >= bundle.n_layers() {
            return fail(format!(
                "layer bounds {lo}-{hi} invalid for a {}-layer model",
                bundle.n_layers()
            ));
        }
    }
    Ok(())
}

/// Loads the experiment and runs its benchmark.
pub fn run_benchmark(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    Experiment::load(config.clone())?.run_benchmark()
}

/// Loads the experiment and runs its sweep.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    Experiment::load(config.clone())?.run_sweep()
}
