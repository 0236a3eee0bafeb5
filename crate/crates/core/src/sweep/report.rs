// SPDX-License-Identifier: MIT OR Apache-2.0

//! Report files: `rows.csv`, `scores.csv` and `report.json`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{RowMode, SweepRow};
use crate::error::{Error, Result};
use crate::evalkit::{write_scored_csv, ScoredRow};
use crate::steering::PromptStyle;

pub const CSV_HEADER: [&str; 8] = [
    "mode",
    "style",
    "layers",
    "year",
    "avg_f1",
    "f1_max",
    "n_questions",
    "mean_wall_ms",
];

/// Best row for one (mode, style, year), labelled like `52.6 (L10)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryEntry {
    pub mode: RowMode,
    pub style: Option<PromptStyle>,
    pub year: i32,
    pub best_avg_f1: f64,
    pub f1_max: f64,
    pub layers: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub rows_csv: PathBuf,
    pub scores_csv: PathBuf,
    pub json: PathBuf,
}

/// Picks the highest `avg_f1` per (mode, style, year); the earliest row
/// wins ties.
pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryEntry> {
    let mut best: BTreeMap<(RowMode, Option<PromptStyle>, i32), &SweepRow> = BTreeMap::new();
    for row in rows {
        best.entry((row.mode, row.style, row.year))
            .and_modify(|b| {
                if row.avg_f1 > b.avg_f1 {
                    *b = row;
                }
            })
            .or_insert(row);
    }
    best.into_values()
        .map(|r| SummaryEntry {
            mode: r.mode,
            style: r.style,
            year: r.year,
            best_avg_f1: r.avg_f1,
            f1_max: r.f1_max,
            layers: r.layers_label(),
            label: match r.layers {
                Some(l) => format!("{:.1} ({})", 100.0 * r.avg_f1, l.label()),
                None => format!("{:.1}", 100.0 * r.avg_f1),
            },
        })
        .collect()
}

#[derive(Serialize)]
struct JsonReport<'a> {
    rows: &'a [SweepRow],
    summary: Vec<SummaryEntry>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes the row table, the per-question scores and a JSON mirror with a
/// best-row summary into `dir`. Output depends only on `rows`.
pub fn emit_report(rows: &[SweepRow], dir: &Path) -> Result<ReportFiles> {
    if rows.is_empty() {
        return Err(Error::Experiment("refusing to write an empty report".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ReportFiles {
        rows_csv: dir.join("rows.csv"),
        scores_csv: dir.join("scores.csv"),
        json: dir.join("report.json"),
    };

    let mut w = csv::Writer::from_writer(create(&files.rows_csv)?);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.mode.as_str().to_string(),
            r.style_label().to_string(),
            r.layers_label(),
            r.year.to_string(),
            format!("{:.6}", r.avg_f1),
            format!("{:.6}", r.f1_max),
            r.n_questions.to_string(),
            format!("{:.3}", r.mean_wall_ms),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&files.rows_csv, e))?;

    let scored: Vec<ScoredRow> = rows
        .iter()
        .flat_map(|r| {
            r.scores.iter().map(move |s| ScoredRow {
                question_id: s.question_id.clone(),
                year: r.year,
                style: r.style_label().to_string(),
                layers: r.layers_label(),
                prediction: s.prediction.clone(),
                f1: s.f1,
            })
        })
        .collect();
    write_scored_csv(&scored, create(&files.scores_csv)?)?;

    let report = JsonReport {
        rows,
        summary: summarize(rows),
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::json("report", e))?;
    std::fs::write(&files.json, json).map_err(|e| Error::io(&files.json, e))?;
    Ok(files)
}
