// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datasets::DatasetSchema;
use crate::error::{Error, Result};
use crate::evalkit::YearRange;
use crate::steering::{CoefficientTable, PromptStyle, DEFAULT_MULTI_START};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentMode {
    BenchmarkRelative,
    BenchmarkExplicit,
    /// One row per layer in `lo..=hi`.
    SweepSingle { lo: usize, hi: usize },
    /// Cumulative ranges `lo..=lo`, `lo..=lo+1`, …, `lo..=hi_max`.
    SweepMulti {
        #[serde(default = "default_multi_lo")]
        lo: usize,
        hi_max: usize,
    },
}

fn default_multi_lo() -> usize {
    DEFAULT_MULTI_START
}

impl ExperimentMode {
    pub fn is_benchmark(self) -> bool {
        matches!(self, Self::BenchmarkRelative | Self::BenchmarkExplicit)
    }

    /// Inclusive layer bounds touched by a sweep.
    pub fn layer_bounds(self) -> Option<(usize, usize)> {
        match self {
            Self::SweepSingle { lo, hi } => Some((lo, hi)),
            Self::SweepMulti { lo, hi_max } => Some((lo, hi_max)),
            _ => None,
        }
    }

    /// Replaces the layer bounds of a sweep mode.
    pub fn with_layers(self, lo: usize, hi: usize) -> Result<Self> {
        match self {
            Self::SweepSingle { .. } => Ok(Self::SweepSingle { lo, hi }),
            Self::SweepMulti { .. } => Ok(Self::SweepMulti { lo, hi_max: hi }),
            _ => Err(Error::Experiment("layer bounds only apply to sweep modes".into())),
        }
    }
}

/// Parses `lo-hi` or a single layer `n` (meaning `n-n`).
pub fn parse_layer_range(s: &str) -> Result<(usize, usize)> {
    let parse = |x: &str| {
        x.trim()
            .trim_start_matches(['L', 'l'])
            .parse::<usize>()
            .map_err(|_| Error::Experiment(format!("bad layer range `{s}`")))
    };
    match s.split_once('-') {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => {
            let n = parse(s)?;
            Ok((n, n))
        }
    }
}

/// `relative`, `explicit`, `single:LO-HI`, `multi:HI` or `multi:LO-HI`.
impl FromStr for ExperimentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, layers) = match s.split_once(':') {
            Some((k, l)) => (k, Some(l)),
            None => (s, None),
        };
        match (kind, layers) {
            ("relative", None) => Ok(Self::BenchmarkRelative),
            ("explicit", None) => Ok(Self::BenchmarkExplicit),
            ("single", Some(l)) => {
                let (lo, hi) = parse_layer_range(l)?;
                Ok(Self::SweepSingle { lo, hi })
            }
            ("multi", Some(l)) => {
                let (lo, hi_max) = match l.split_once('-') {
                    Some(_) => parse_layer_range(l)?,
                    None => (DEFAULT_MULTI_START, parse_layer_range(l)?.1),
                };
                Ok(Self::SweepMulti { lo, hi_max })
            }
            ("single" | "multi", None) => Ok(match kind {
                "single" => Self::SweepSingle {
                    lo: DEFAULT_MULTI_START,
                    hi: DEFAULT_MULTI_START,
                },
                _ => Self::SweepMulti {
                    lo: DEFAULT_MULTI_START,
                    hi_max: DEFAULT_MULTI_START,
                },
            }),
            _ => Err(Error::Experiment(format!("unknown mode `{s}`"))),
        }
    }
}

fn default_schema() -> DatasetSchema {
    DatasetSchema::Hog
}

fn default_styles() -> Vec<PromptStyle> {
    PromptStyle::ALL.to_vec()
}

fn default_max_new() -> usize {
    8
}

/// Everything a benchmark or sweep needs, as read from the JSON config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: PathBuf,
    pub dataset: PathBuf,
    #[serde(default = "default_schema")]
    pub schema: DatasetSchema,
    pub years: Vec<i32>,
    #[serde(default = "default_styles")]
    pub styles: Vec<PromptStyle>,
    pub mode: ExperimentMode,
    /// Defaults to the schema's range.
    #[serde(default)]
    pub f1max_range: Option<YearRange>,
    /// Defaults to the bundled generic examples.
    #[serde(default)]
    pub fewshot: Option<PathBuf>,
    pub out: PathBuf,
    /// Seeds question subsampling when `limit` is set.
    #[serde(default)]
    pub seed: u64,
    /// Evaluate at most this many questions, drawn with `seed`.
    #[serde(default)]
    pub limit: Option<usize>,
    #[serde(default = "default_max_new")]
    pub max_new: usize,
    #[serde(default)]
    pub coefficients: CoefficientTable,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("experiment config", e))
    }

    pub fn f1max_range(&self) -> YearRange {
        self.f1max_range.unwrap_or_else(|| self.schema.f1max_range())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_strings() {
        assert_eq!("relative".parse::<ExperimentMode>().unwrap(), ExperimentMode::BenchmarkRelative);
        assert_eq!(
            "single:4-7".parse::<ExperimentMode>().unwrap(),
            ExperimentMode::SweepSingle { lo: 4, hi: 7 }
        );
        assert_eq!(
            "multi:7".parse::<ExperimentMode>().unwrap(),
            ExperimentMode::SweepMulti { lo: 4, hi_max: 7 }
        );
        assert_eq!(
            "multi:L2-L9".parse::<ExperimentMode>().unwrap(),
            ExperimentMode::SweepMulti { lo: 2, hi_max: 9 }
        );
        assert!("sideways".parse::<ExperimentMode>().is_err());
    }

    #[test]
    fn config_defaults() {
        let c = ExperimentConfig::from_json(
            r#"{"model": "m", "dataset": "d.json", "years": [1950],
                "mode": {"kind": "sweep_multi", "hi_max": 7}, "out": "o"}"#,
        )
        .unwrap();
        assert_eq!(c.mode, ExperimentMode::SweepMulti { lo: 4, hi_max: 7 });
        assert_eq!(c.styles.len(), 3);
        assert_eq!(c.f1max_range(), YearRange::HOG);
        assert_eq!(c.coefficients, CoefficientTable::default());
        assert_eq!(c.max_new, 8);
    }
}
